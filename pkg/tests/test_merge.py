"""Collection phase: graph replacement and coverage overwrite-vs-union laws."""

from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from incov import (
    CoverageData,
    DeltaMismatch,
    DependencyGraph,
    ProbeId,
    merge_coverage,
    merge_dependency_graph,
)


def cov(**units) -> CoverageData:
    return CoverageData.of(
        {u: frozenset(ProbeId(u, i) for i in idxs) for u, idxs in units.items()}
    )


def graph(**edges) -> DependencyGraph:
    return DependencyGraph({t: frozenset(deps) | {t} for t, deps in edges.items()})


def test_empty_delta_keeps_graph_minus_deleted():
    g = graph(t1=["c1"], t9=["c9"])
    merged = merge_dependency_graph(
        g, DependencyGraph.empty(), frozenset(), frozenset({"t1"})
    )
    assert dict(merged.edges) == {"t1": frozenset({"t1", "c1"})}


def test_selected_edges_are_replaced_wholesale():
    g = graph(t1=["c1"], t2=["c1", "c2"], t3=["c3"])
    delta = graph(t1=["c1", "c3"], t2=["c1", "c2", "c3"])
    merged = merge_dependency_graph(
        g, delta, frozenset({"t1", "t2"}), frozenset({"t1", "t2", "t3"})
    )
    assert merged.edges["t1"] == frozenset({"t1", "c1", "c3"})
    assert merged.edges["t2"] == frozenset({"t2", "c1", "c2", "c3"})
    assert merged.edges["t3"] == frozenset({"t3", "c3"})


def test_delta_outside_selection_is_rejected():
    delta = graph(t1=["c1"])
    with pytest.raises(DeltaMismatch):
        merge_dependency_graph(
            DependencyGraph.empty(), delta, frozenset(), frozenset({"t1"})
        )


def test_unaffected_units_union():
    merged = merge_coverage(
        cov(c3=[2]), cov(c3=[3]), frozenset(), frozenset({"c3"})
    )
    assert merged == cov(c3=[2, 3])


def test_affected_unit_with_no_delta_entry_loses_coverage():
    merged = merge_coverage(
        cov(c1=[0, 1]), CoverageData.empty(), frozenset({"c1"}), frozenset({"c1"})
    )
    assert merged.hits == {}


def test_identity_merge():
    d = cov(c1=[0], c2=[1, 2])
    merged = merge_coverage(d, CoverageData.empty(), frozenset(), frozenset({"c1", "c2"}))
    assert merged == d


def test_removed_units_never_resurrect():
    merged = merge_coverage(
        cov(gone=[0], kept=[1]), cov(gone=[2]), frozenset(), frozenset({"kept"})
    )
    assert set(merged.hits) == {"kept"}


def random_cov(rng: random.Random, units: list[str]) -> CoverageData:
    return CoverageData.of(
        {
            u: frozenset(ProbeId(u, i) for i in range(6) if rng.random() < 0.4)
            for u in units
            if rng.random() < 0.7
        }
    )


def merge_case(seed: int):
    rng = random.Random(seed)
    units = [f"c{i}" for i in range(rng.randint(1, 8))]
    old = random_cov(rng, units)
    delta = random_cov(rng, units)
    affected = frozenset(u for u in units if rng.random() < 0.4)
    current = frozenset(u for u in units if rng.random() < 0.85)
    return old, delta, affected, current


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 10**9))
def test_merge_laws(seed):
    old, delta, affected, current = merge_case(seed)
    merged = merge_coverage(old, delta, affected, current)
    for u in current:
        got = merged.hits.get(u, frozenset())
        if u in affected:
            assert got == delta.hits.get(u, frozenset())
        else:
            assert got == old.hits.get(u, frozenset()) | delta.hits.get(u, frozenset())
            assert got >= old.hits.get(u, frozenset())  # union never loses coverage
    for u in merged.hits:
        assert u in current


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 10**9))
def test_merge_idempotence(seed):
    old, delta, affected, current = merge_case(seed)
    once = merge_coverage(old, delta, affected, current)
    twice = merge_coverage(once, delta, affected, current)
    assert once == twice
