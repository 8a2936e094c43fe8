"""Checksum normalization and changeset computation."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

from hypothesis import given, settings
from hypothesis import strategies as st

from incov import (
    Branch,
    Call,
    HistoryParams,
    Line,
    Return,
    compute_changeset,
    generate_history,
    normalized_encoding,
    snapshot_digests,
    unit_digest,
)
from conftest import fn, snap, unit


def test_comment_only_difference_gives_identical_encodings():
    a = unit("c1", fn("m", Line(1), Return()), comment="old text")
    b = replace(a, comment_text="totally different")
    assert normalized_encoding(a) == normalized_encoding(b)


def test_line_number_difference_changes_encoding():
    a = unit("c1", fn("m", Line(1), Return()))
    b = unit("c1", fn("m", Line(2), Return()))
    assert normalized_encoding(a) != normalized_encoding(b)


def test_encoding_is_deterministic():
    u = unit("c1", fn("m", Line(1), Branch("c", (Call("c1", "m"),), ()), Return()))
    assert normalized_encoding(u, {"c": True}) == normalized_encoding(u, {"c": True})


def test_call_target_difference_changes_encoding():
    a = unit("c1", fn("m", Call("x", "f")))
    b = unit("c1", fn("m", Call("y", "f")))
    assert normalized_encoding(a) != normalized_encoding(b)


def test_condition_binding_is_part_of_the_encoding():
    u = unit("c1", fn("m", Branch("fast", (Line(1),), (Line(2),))))
    assert normalized_encoding(u, {"fast": True}) != normalized_encoding(u, {"fast": False})
    # Unreferenced conditions do not matter.
    plain = unit("c1", fn("m", Line(1)))
    assert normalized_encoding(plain, {"fast": True}) == normalized_encoding(plain, {})


def test_identical_snapshots_give_empty_changeset(fig_original):
    assert compute_changeset(fig_original, fig_original).is_empty


def test_fig_change_modifies_only_edited_unit(fig_original, fig_change_a):
    cs = compute_changeset(fig_original, fig_change_a)
    assert cs.modified == {"c2"}
    assert cs.added == frozenset()
    assert cs.removed == frozenset()


def test_added_test_appears_as_added(fig_original):
    extra = unit("t4", fn("t", Line(1), Call("c1", "m"), Return()), test=True)
    grown = snap(*fig_original.units.values(), extra, version="v2")
    cs = compute_changeset(fig_original, grown)
    assert cs.added == {"t4"}
    assert cs.modified == frozenset() and cs.removed == frozenset()


def test_condition_flip_marks_referencing_units_modified():
    shared = [
        unit("c1", fn("m", Branch("fast", (Line(1),), (Line(2),)), Return())),
        unit("c2", fn("m", Line(1), Return())),
        unit("t1", fn("t", Call("c1", "m")), test=True),
    ]
    old = snap(*shared, conds={"fast": True})
    new = snap(*shared, conds={"fast": False}, version="v2")
    cs = compute_changeset(old, new)
    assert cs.modified == {"c1"}


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000))
def test_changeset_detection_is_symmetric(seed):
    history = generate_history(
        seed, HistoryParams(units=8, tests=3, versions=2, edit_rate=0.3)
    )
    a, b = history
    forward = compute_changeset(a, b)
    backward = compute_changeset(b, a)
    assert forward.modified == backward.modified
    assert forward.added == backward.removed
    assert forward.removed == backward.added


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000))
def test_self_changeset_is_empty(seed):
    s = generate_history(seed, HistoryParams(units=8, tests=3, versions=1))[0]
    assert compute_changeset(s, s).is_empty


def test_concurrent_digesting_matches_sequential(fig_original):
    s = fig_original
    sequential = snapshot_digests(s)
    with ThreadPoolExecutor(max_workers=4) as pool:
        futures = {
            uid: pool.submit(unit_digest, u, s.condition_defaults)
            for uid, u in s.units.items()
        }
        concurrent = {uid: f.result().digest for uid, f in futures.items()}
    assert concurrent == sequential
