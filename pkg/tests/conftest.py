from __future__ import annotations

from pathlib import Path

import pytest

from incov import (
    Branch,
    Call,
    Function,
    Line,
    ProbeId,
    Return,
    Snapshot,
    Unit,
    parse_project,
    unit_layout,
)

FIXTURES = Path(__file__).parent / "fixtures"


def load_fixture(name: str, version_id: str) -> Snapshot:
    return parse_project((FIXTURES / name).read_text(encoding="utf-8"), version_id)


@pytest.fixture
def fig_original() -> Snapshot:
    return load_fixture("fig_original.proj", "v1")


@pytest.fixture
def fig_change_a() -> Snapshot:
    return load_fixture("fig_change_a.proj", "v2")


@pytest.fixture
def fig_change_b() -> Snapshot:
    return load_fixture("fig_change_b.proj", "v2")


def fn(fid: str, *stmts) -> Function:
    return Function(fid, tuple(stmts))


def unit(uid: str, *functions: Function, test: bool = False, comment: str = "") -> Unit:
    return Unit(uid, test, tuple(functions), comment)


def snap(*units: Unit, conds=None, version: str = "v1") -> Snapshot:
    return Snapshot.make(version, list(units), conds or {})


def probe_for_line(s: Snapshot, uid: str, number: int) -> ProbeId:
    """The unique probe whose block owns this line; fails if ambiguous."""
    indices = unit_layout(s.units[uid]).probes_for_line(number)
    assert len(indices) == 1, f"line {number} of {uid} maps to {indices}"
    return ProbeId(uid, indices[0])


__all__ = [
    "Branch",
    "Call",
    "FIXTURES",
    "Line",
    "Return",
    "fn",
    "load_fixture",
    "probe_for_line",
    "snap",
    "unit",
]
