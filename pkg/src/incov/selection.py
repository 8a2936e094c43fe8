"""Analysis phase: choose the test set whose execution refreshes coverage.

Selection happens in three steps over the previous version's dependency
graph: pick the behavior-affected tests, collect every unit those tests
touched (their stored coverage is now invalid), then widen to all tests
touching any such unit. The graph stores transitive dependencies, so one
widening round suffices; no fixpoint iteration is needed.
"""

from __future__ import annotations

import json
from typing import Optional

from .changedet import compute_changeset
from .model import (
    ChangeSet,
    DependencyGraph,
    SelectionResult,
    Snapshot,
    TestId,
    UnitId,
    validate_snapshot,
)


class SnapshotInvalid(Exception):
    def __init__(self, version_id: str, violations: list[str]) -> None:
        super().__init__(f"snapshot {version_id} invalid: " + "; ".join(violations))
        self.version_id = version_id
        self.violations = violations


def select_rts(
    g: DependencyGraph,
    cs: ChangeSet,
    old_tests: frozenset[TestId],
    new_tests: frozenset[TestId],
) -> frozenset[TestId]:
    """Tests whose behavior may differ: dependents of changed or removed
    units, newly added tests, and tests with no recorded dependencies."""
    changed = cs.modified | cs.removed
    out = set(new_tests - old_tests)
    for t in new_tests:
        deps = g.edges.get(t)
        if deps is None:
            # Never analyzed; without dependency info there is no safe exclusion.
            out.add(t)
        elif deps & changed:
            out.add(t)
    return frozenset(out)


def affected_units(
    g: DependencyGraph, rts_selected: frozenset[TestId]
) -> frozenset[UnitId]:
    """Union of the selected tests' dependency sets; stored coverage for
    these units can increase or decrease, so it must be rebuilt."""
    out: set[UnitId] = set()
    for t in rts_selected:
        out |= g.edges.get(t, frozenset())
    return frozenset(out)


def expand_selection(
    g: DependencyGraph,
    affected: frozenset[UnitId],
    new_tests: frozenset[TestId],
) -> frozenset[TestId]:
    """All tests contributing coverage to any affected unit, plus new tests."""
    out = set(new_tests)
    for t, deps in g.edges.items():
        if deps & affected:
            out.add(t)
    return frozenset(out)


def compose_selection(
    g: DependencyGraph,
    cs: ChangeSet,
    old_tests: frozenset[TestId],
    new_tests: frozenset[TestId],
) -> SelectionResult:
    """Full analysis pass given a precomputed changeset.

    Removed tests contribute their old dependency sets to the affected units:
    their coverage contribution vanishes, so every unit they touched must be
    rebuilt by re-running its remaining dependents. Result sets contain only
    tests that still exist.
    """
    added = new_tests - old_tests
    removed_tests = old_tests - new_tests
    rts = select_rts(g, cs, old_tests, new_tests)
    affected = affected_units(g, rts | removed_tests) | added
    final = (expand_selection(g, affected, added) | rts) & new_tests
    return SelectionResult(rts, affected, final)


def first_version_selection(s: Snapshot) -> SelectionResult:
    all_tests = frozenset(s.tests)
    return SelectionResult(all_tests, frozenset(s.units), all_tests)


def analyze(
    g: DependencyGraph, old: Optional[Snapshot], new: Snapshot
) -> SelectionResult:
    """Compose changeset detection and the three selection steps.

    With an empty graph (first version) every test is selected and every unit
    is affected; ``old`` may then be None.
    """
    violations = validate_snapshot(new)
    if violations:
        raise SnapshotInvalid(new.version_id, violations)
    if g.is_empty:
        return first_version_selection(new)
    if old is None:
        raise ValueError("old snapshot required unless the graph is empty")
    violations = validate_snapshot(old)
    if violations:
        raise SnapshotInvalid(old.version_id, violations)
    cs = compute_changeset(old, new)
    return compose_selection(g, cs, frozenset(old.tests), frozenset(new.tests))


def selection_to_json(sel: SelectionResult) -> str:
    """Stable JSON rendering with sorted arrays, for the CLI."""
    payload = {
        "rts_selected": sorted(sel.rts_selected),
        "affected_units": sorted(sel.affected_units),
        "final_selected": sorted(sel.final_selected),
    }
    return json.dumps(payload, indent=2, sort_keys=True)
