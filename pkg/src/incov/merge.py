"""Collection phase: fold execution deltas into the persisted state.

Selected tests replace their dependency edges wholesale; everyone else keeps
theirs. Coverage for affected units is overwritten by the fresh delta, while
unaffected units take the union of old and new probes. Entries for entities
that no longer exist are dropped here and nowhere else.
"""

from __future__ import annotations

from .model import CoverageData, DependencyGraph, TestId, UnitId


class DeltaMismatch(Exception):
    def __init__(self, extra_tests: list[TestId]) -> None:
        super().__init__(f"delta covers unselected tests: {', '.join(extra_tests)}")
        self.extra_tests = extra_tests


def merge_dependency_graph(
    g: DependencyGraph,
    delta: DependencyGraph,
    selected: frozenset[TestId],
    current_tests: frozenset[TestId],
) -> DependencyGraph:
    extra = sorted(set(delta.edges) - selected)
    if extra:
        raise DeltaMismatch(extra)
    out = {
        t: deps
        for t, deps in g.edges.items()
        if t not in selected and t in current_tests
    }
    for t, deps in delta.edges.items():
        if t in current_tests:
            out[t] = deps
    return DependencyGraph(dict(sorted(out.items())))


def merge_coverage(
    d: CoverageData,
    delta: CoverageData,
    affected: frozenset[UnitId],
    current_units: frozenset[UnitId],
) -> CoverageData:
    out: dict[UnitId, frozenset] = {}
    for unit in sorted((set(d.hits) | set(delta.hits)) & current_units):
        if unit in affected:
            probes = delta.hits.get(unit, frozenset())
        else:
            probes = d.hits.get(unit, frozenset()) | delta.hits.get(unit, frozenset())
        if probes:
            out[unit] = probes
    return CoverageData(out)
