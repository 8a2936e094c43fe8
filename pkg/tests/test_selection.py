"""Analysis phase: the three selection steps and their composition."""

from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from incov import (
    ChangeSet,
    DependencyGraph,
    SelectionResult,
    SnapshotInvalid,
    Snapshot,
    affected_units,
    analyze,
    compose_selection,
    expand_selection,
    select_rts,
    selection_to_json,
)
from incov.model import Line
from conftest import fn, snap, unit


FIG_GRAPH = DependencyGraph(
    {
        "t1": frozenset({"c1", "t1"}),
        "t2": frozenset({"c1", "c2", "t2"}),
        "t3": frozenset({"c3", "t3"}),
    }
)
TESTS = frozenset({"t1", "t2", "t3"})


def changeset(*modified, added=(), removed=()):
    return ChangeSet(frozenset(modified), frozenset(added), frozenset(removed))


def test_rts_on_fig_changeset_selects_only_dependent():
    assert select_rts(FIG_GRAPH, changeset("c2"), TESTS, TESTS) == {"t2"}


def test_rts_empty_changeset_selects_nothing():
    assert select_rts(FIG_GRAPH, ChangeSet.empty(), TESTS, TESTS) == frozenset()


def test_rts_on_shared_dependency_selects_both():
    assert select_rts(FIG_GRAPH, changeset("c1"), TESTS, TESTS) == {"t1", "t2"}


def test_rts_includes_new_and_unanalyzed_tests():
    new_tests = TESTS | {"t4"}
    assert select_rts(FIG_GRAPH, ChangeSet.empty(), TESTS, new_tests) == {"t4"}
    # t3 has no graph entry: there is no safe reason to skip it.
    graph = DependencyGraph({t: FIG_GRAPH.edges[t] for t in ("t1", "t2")})
    assert select_rts(graph, ChangeSet.empty(), TESTS, TESTS) == {"t3"}


def test_affected_units_union():
    assert affected_units(FIG_GRAPH, frozenset({"t2"})) == {"c1", "c2", "t2"}
    assert affected_units(FIG_GRAPH, frozenset()) == frozenset()
    assert affected_units(FIG_GRAPH, frozenset({"t1", "t2"})) == {"c1", "c2", "t1", "t2"}


def test_expand_selection_examples():
    assert expand_selection(FIG_GRAPH, frozenset({"c1", "c2", "t2"}), frozenset()) == {
        "t1",
        "t2",
    }
    assert expand_selection(FIG_GRAPH, frozenset(), frozenset()) == frozenset()
    assert expand_selection(FIG_GRAPH, frozenset({"c3"}), frozenset()) == {"t3"}


def test_analyze_first_version_selects_everything(fig_original):
    sel = analyze(DependencyGraph.empty(), None, fig_original)
    assert sel.rts_selected == fig_original.tests
    assert sel.final_selected == fig_original.tests
    assert sel.affected_units == frozenset(fig_original.units)


def test_analyze_unchanged_selects_nothing(fig_original):
    sel = analyze(FIG_GRAPH, fig_original, fig_original)
    assert sel.final_selected == frozenset()
    assert sel.rts_selected == frozenset()


def test_analyze_fig_change_a(fig_original, fig_change_a):
    sel = analyze(FIG_GRAPH, fig_original, fig_change_a)
    assert sel == SelectionResult(
        frozenset({"t2"}),
        frozenset({"c1", "c2", "t2"}),
        frozenset({"t1", "t2"}),
    )


def test_analyze_rejects_invalid_snapshot(fig_original):
    broken = snap(unit("t1", fn("t", Line(1), Line(1))), version="bad")
    with pytest.raises(SnapshotInvalid):
        analyze(FIG_GRAPH, fig_original, broken)


def test_removed_test_widens_affected_units(fig_original):
    survivors = [u for uid, u in fig_original.units.items() if uid != "t3"]
    shrunk = snap(*survivors, version="v2")
    sel = analyze(FIG_GRAPH, fig_original, shrunk)
    # t3's old dependencies must be rebuilt; only t3 itself covered c3,
    # so no surviving test is selected but c3's data becomes invalid.
    assert "c3" in sel.affected_units
    assert "t3" not in sel.final_selected
    assert sel.final_selected == frozenset()


def test_selection_json_is_sorted():
    sel = SelectionResult(frozenset({"t2"}), frozenset({"c2", "c1"}), frozenset({"t2", "t1"}))
    rendered = selection_to_json(sel)
    assert rendered.index('"t1"') < rendered.index('"t2"')
    assert '"affected_units"' in rendered


def random_graph(rng: random.Random) -> tuple[DependencyGraph, frozenset, list]:
    units = [f"c{i}" for i in range(rng.randint(1, 8))]
    tests = [f"t{i}" for i in range(rng.randint(1, 6))]
    edges = {
        t: frozenset({t} | {u for u in units if rng.random() < 0.4}) for t in tests
    }
    return DependencyGraph(edges), frozenset(tests), units


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 10**9))
def test_rts_subset_of_final_and_safety_baseline(seed):
    rng = random.Random(seed)
    g, tests, units = random_graph(rng)
    modified = frozenset(u for u in units if rng.random() < 0.3)
    cs = changeset(*modified)
    sel = compose_selection(g, cs, tests, tests)
    assert sel.rts_selected <= sel.final_selected
    for t in tests:
        if g.edges[t] & modified:
            assert t in sel.final_selected


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 10**9))
def test_monotonicity_in_the_changeset(seed):
    rng = random.Random(seed)
    g, tests, units = random_graph(rng)
    small = frozenset(u for u in units if rng.random() < 0.2)
    big = small | frozenset(u for u in units if rng.random() < 0.3)
    sel_small = compose_selection(g, changeset(*small), tests, tests)
    sel_big = compose_selection(g, changeset(*big), tests, tests)
    assert sel_small.rts_selected <= sel_big.rts_selected
    assert sel_small.final_selected <= sel_big.final_selected


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 10**9))
def test_one_expansion_round_is_closed_over_affected(seed):
    """Expanding the computed affected set reproduces the final set exactly;
    no second selection round could add a test that still needs to run."""
    rng = random.Random(seed)
    g, tests, units = random_graph(rng)
    modified = frozenset(u for u in units if rng.random() < 0.3)
    sel = compose_selection(g, changeset(*modified), tests, tests)
    again = expand_selection(g, sel.affected_units, frozenset()) | sel.rts_selected
    assert again & tests == sel.final_selected
