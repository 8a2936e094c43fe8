"""Model invariants: validation, probe layout, and round-trip stability."""

from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from incov import (
    Branch,
    Call,
    Line,
    Return,
    Snapshot,
    generate_history,
    HistoryParams,
    parse_project,
    render_project,
    unit_layout,
    validate_snapshot,
)
from conftest import fn, snap, unit


def three_unit_snapshot() -> Snapshot:
    return snap(
        unit("c1", fn("m", Line(1), Return())),
        unit("c2", fn("m", Line(1), Call("c1", "m"), Return())),
        unit("t1", fn("t", Line(1), Call("c2", "m"), Return()), test=True),
    )


def test_well_formed_snapshot_has_no_violations():
    assert validate_snapshot(three_unit_snapshot()) == []


def test_dangling_call_is_reported():
    s = snap(
        unit("c2", fn("m", Line(1), Call("c9", "m"))),
        unit("t1", fn("t", Line(1)), test=True),
    )
    violations = validate_snapshot(s)
    assert violations == ["dangling call c2.m -> c9.m"]


def test_test_with_is_test_false_is_reported():
    bad = Snapshot(
        "v1",
        {"t1": unit("t1", fn("t", Line(1)))},  # is_test not set
        frozenset({"t1"}),
        {},
    )
    violations = validate_snapshot(bad)
    assert violations == ["test t1 has is_test=false"]


def test_line_ordering_violation_is_reported():
    s = snap(unit("c1", fn("m", Line(5), Line(3))))
    assert any("strictly increasing" in v for v in validate_snapshot(s))


def test_undefined_condition_is_reported():
    s = snap(unit("c1", fn("m", Branch("nope", (Line(1),), ()))))
    assert any("undefined condition" in v for v in validate_snapshot(s))


def test_branch_nesting_limit():
    body = (Line(1),)
    for depth in range(9):
        body = (Branch("c", body, ()),)
    s = snap(unit("c1", fn("m", *body)), conds={"c": True})
    assert any("branch nesting exceeds 8" in v for v in validate_snapshot(s))


def blocks_of(u):
    layout = unit_layout(u)
    return [b for fl in layout.functions for b in fl.blocks]


def test_probe_enumeration_is_deterministic():
    u = unit(
        "c1",
        fn("a", Line(1), Branch("c", (Line(2),), (Line(3),)), Line(4), Return()),
        fn("b", Line(5), Return()),
    )
    first = [(b.probe, b.lines) for b in blocks_of(u)]
    second = [(b.probe, b.lines) for b in blocks_of(u)]
    assert first == second
    assert [p.index for p, _ in first] == list(range(len(first)))


def test_probe_table_shape():
    u = unit(
        "c1",
        fn("a", Line(1), Branch("c", (Line(2),), (Line(3),)), Line(4), Return()),
        fn("b", Line(5), Return()),
    )
    blocks = blocks_of(u)
    # fn a: entry, then-arm, else-arm, continuation; fn b: entry.
    assert [b.probe.index for b in blocks] == [0, 1, 2, 3, 4]
    assert [b.lines for b in blocks] == [(1,), (2,), (3,), (4,), (5,)]
    layout = unit_layout(u)
    assert layout.probe_count == 5
    assert layout.functions[0].blocks[0].on_true == 1
    assert layout.functions[0].blocks[0].on_false == 2


def test_empty_branch_arm_still_gets_a_block():
    u = unit("c1", fn("a", Branch("c", (Line(1),), ()), Line(2)))
    blocks = blocks_of(u)
    assert len(blocks) == 4  # entry, then, empty else, continuation
    assert blocks[2].lines == ()


def test_blocks_in_preorder_for_nested_branches():
    u = unit(
        "c1",
        fn(
            "a",
            Branch("c", (Branch("d", (Line(1),), (Line(2),)),), (Line(3),)),
            Line(4),
        ),
    )
    blocks = blocks_of(u)
    # entry, outer-then, inner-then, inner-else, outer-else, continuation
    assert [b.lines for b in blocks] == [(), (), (1,), (2,), (3,), (4,)]


def test_source_lines_counts_distinct_numbers():
    u = unit("c1", fn("a", Line(1), Line(3)), fn("b", Line(3), Line(7)))
    assert u.source_lines == 3


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_parse_render_round_trip(seed):
    history = generate_history(
        seed, HistoryParams(units=6, tests=2, versions=1, edit_rate=0.2)
    )
    s = history[0]
    parsed = parse_project(render_project(s), s.version_id)
    assert parsed == s


def test_round_trip_preserves_comments_and_conditions(fig_original):
    s = snap(
        unit("c1", fn("m", Line(1), Return()), comment="keep\n\nme"),
        unit("t1", fn("t", Call("c1", "m")), test=True),
        conds={"x": True, "y": False},
    )
    assert parse_project(render_project(s), "v1") == s
