"""Immutable domain model for versioned mini-projects and their coverage vocabulary.

Identifiers are plain strings ordered lexicographically; every serialization
and report iterates sets in that order so equal inputs yield identical bytes.
Units own probes, one per basic block, numbered densely by a single canonical
traversal (functions in declared order, blocks in control-flow pre-order).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Mapping, NamedTuple, Optional, Union

UnitId = str
TestId = str
FunctionId = str
ConditionName = str

#: Branch statements may nest at most this deep unless a caller overrides it.
MAX_BRANCH_DEPTH = 8

_IDENT_RE = re.compile(r"[A-Za-z0-9_][A-Za-z0-9_.$-]*\Z")


def is_identifier(text: str) -> bool:
    return bool(_IDENT_RE.match(text))


class ProbeId(NamedTuple):
    """Coverage probe owned by exactly one basic block of one unit."""

    unit: UnitId
    index: int

    def __str__(self) -> str:
        return f"{self.unit}:{self.index}"


# --- statements -------------------------------------------------------------


@dataclass(frozen=True)
class Line:
    """A logical source line; covered when its enclosing block executes."""

    number: int


@dataclass(frozen=True)
class Call:
    unit: UnitId
    function: FunctionId


@dataclass(frozen=True)
class Branch:
    """Two-way branch on a named condition resolved from the snapshot table."""

    condition: ConditionName
    then_body: tuple["Statement", ...]
    else_body: tuple["Statement", ...] = ()


@dataclass(frozen=True)
class Return:
    pass


Statement = Union[Line, Call, Branch, Return]


def iter_statements(body: tuple[Statement, ...]) -> Iterator[Statement]:
    """Pre-order walk: statement, then its then-arm, then its else-arm."""
    for st in body:
        yield st
        if isinstance(st, Branch):
            yield from iter_statements(st.then_body)
            yield from iter_statements(st.else_body)


@dataclass(frozen=True)
class Function:
    id: FunctionId
    body: tuple[Statement, ...]

    @property
    def entry_block(self) -> tuple[FunctionId, int]:
        return (self.id, 0)


@dataclass(frozen=True)
class Unit:
    id: UnitId
    is_test: bool
    functions: tuple[Function, ...]
    comment_text: str = ""

    @property
    def source_lines(self) -> int:
        """Count of distinct logical line numbers across all functions."""
        return len(self.line_numbers())

    def line_numbers(self) -> frozenset[int]:
        out = set()
        for fn in self.functions:
            for st in iter_statements(fn.body):
                if isinstance(st, Line):
                    out.add(st.number)
        return frozenset(out)

    def referenced_conditions(self) -> frozenset[ConditionName]:
        out = set()
        for fn in self.functions:
            for st in iter_statements(fn.body):
                if isinstance(st, Branch):
                    out.add(st.condition)
        return frozenset(out)


@dataclass(frozen=True)
class Snapshot:
    """One version of the codebase: all units plus the condition table."""

    version_id: str
    units: Mapping[UnitId, Unit]
    tests: frozenset[TestId]
    condition_defaults: Mapping[ConditionName, bool]

    @staticmethod
    def make(
        version_id: str,
        units: "list[Unit] | tuple[Unit, ...]",
        condition_defaults: Optional[Mapping[ConditionName, bool]] = None,
    ) -> "Snapshot":
        by_id = {u.id: u for u in sorted(units, key=lambda u: u.id)}
        tests = frozenset(u.id for u in units if u.is_test)
        conds = dict(sorted((condition_defaults or {}).items()))
        return Snapshot(version_id, by_id, tests, conds)


@dataclass(frozen=True)
class DependencyGraph:
    """Map test -> units it transitively touched, always including itself."""

    edges: Mapping[TestId, frozenset[UnitId]]

    def __post_init__(self) -> None:
        for t, deps in self.edges.items():
            if t not in deps:
                raise ValueError(f"dependency graph lacks self-edge for {t}")

    @staticmethod
    def empty() -> "DependencyGraph":
        return DependencyGraph({})

    @property
    def is_empty(self) -> bool:
        return not self.edges


@dataclass(frozen=True)
class CoverageData:
    """Map unit -> executed probes; absent key means no probe executed."""

    hits: Mapping[UnitId, frozenset[ProbeId]]

    def __post_init__(self) -> None:
        for unit, probes in self.hits.items():
            if not probes:
                raise ValueError(f"empty probe set stored for {unit}")
            for p in probes:
                if p.unit != unit:
                    raise ValueError(f"probe {p} filed under unit {unit}")

    @staticmethod
    def of(mapping: Mapping[UnitId, "frozenset[ProbeId] | set[ProbeId]"]) -> "CoverageData":
        return CoverageData(
            {u: frozenset(ps) for u, ps in sorted(mapping.items()) if ps}
        )

    @staticmethod
    def empty() -> "CoverageData":
        return CoverageData({})


@dataclass(frozen=True)
class ChangeSet:
    """Units whose normalized checksum differs between two snapshots."""

    modified: frozenset[UnitId]
    added: frozenset[UnitId]
    removed: frozenset[UnitId]

    def __post_init__(self) -> None:
        if self.modified & self.added or self.modified & self.removed or self.added & self.removed:
            raise ValueError("changeset categories overlap")

    @staticmethod
    def empty() -> "ChangeSet":
        return ChangeSet(frozenset(), frozenset(), frozenset())

    @property
    def is_empty(self) -> bool:
        return not (self.modified or self.added or self.removed)


@dataclass(frozen=True)
class SelectionResult:
    """Outcome of the analysis phase."""

    rts_selected: frozenset[TestId]
    affected_units: frozenset[UnitId]
    final_selected: frozenset[TestId]

    def __post_init__(self) -> None:
        if not self.rts_selected <= self.final_selected:
            raise ValueError("rts_selected must be a subset of final_selected")


# --- validation -------------------------------------------------------------


def validate_snapshot(s: Snapshot, max_branch_depth: int = MAX_BRANCH_DEPTH) -> list[str]:
    """Return all invariant violations, each naming the offending entity.

    An empty list means the snapshot is well-formed. Violations are data,
    not failures; callers decide whether to raise.
    """
    out: list[str] = []
    if not s.version_id:
        out.append("empty version_id")

    for uid, unit in s.units.items():
        if uid != unit.id:
            out.append(f"unit {unit.id} stored under key {uid}")
        if not is_identifier(uid):
            out.append(f"invalid unit identifier {uid!r}")
        seen_fns: set[str] = set()
        for fn in unit.functions:
            if not is_identifier(fn.id):
                out.append(f"invalid function identifier {uid}.{fn.id!r}")
            if fn.id in seen_fns:
                out.append(f"duplicate function {uid}.{fn.id}")
            seen_fns.add(fn.id)
            out.extend(_validate_body(s, uid, fn, max_branch_depth))

    for t in sorted(s.tests):
        unit = s.units.get(t)
        if unit is None:
            out.append(f"test {t} missing from units")
        elif not unit.is_test:
            out.append(f"test {t} has is_test=false")
    for uid, unit in s.units.items():
        if unit.is_test and uid not in s.tests:
            out.append(f"unit {uid} is marked test but absent from tests set")

    return out


def _validate_body(s: Snapshot, uid: UnitId, fn: Function, max_depth: int) -> list[str]:
    out: list[str] = []
    last_line = 0

    def walk(body: tuple[Statement, ...], depth: int) -> None:
        nonlocal last_line
        for st in body:
            if isinstance(st, Line):
                if st.number <= last_line:
                    out.append(
                        f"unit {uid}.{fn.id}: line numbers not strictly increasing"
                        f" ({last_line} then {st.number})"
                    )
                last_line = max(last_line, st.number)
            elif isinstance(st, Call):
                target = s.units.get(st.unit)
                if target is None or all(f.id != st.function for f in target.functions):
                    out.append(f"dangling call {uid}.{fn.id} -> {st.unit}.{st.function}")
            elif isinstance(st, Branch):
                if st.condition not in s.condition_defaults:
                    out.append(f"unit {uid}.{fn.id}: undefined condition {st.condition!r}")
                if depth + 1 > max_depth:
                    out.append(f"unit {uid}.{fn.id}: branch nesting exceeds {max_depth}")
                else:
                    walk(st.then_body, depth + 1)
                    walk(st.else_body, depth + 1)

    walk(fn.body, 0)
    return out


# --- basic-block layout -----------------------------------------------------


@dataclass(frozen=True)
class BasicBlock:
    """One basic block: a probe, the lines and calls it owns, and its exits.

    ``on_true``/``on_false``/``next`` are function-local block indices;
    ``next is None`` on a fall-through block means the function returns.
    """

    probe: ProbeId
    lines: tuple[int, ...]
    calls: tuple[tuple[UnitId, FunctionId], ...]
    terminator: str  # "return" | "branch" | "fall"
    condition: Optional[ConditionName] = None
    on_true: Optional[int] = None
    on_false: Optional[int] = None
    next: Optional[int] = None


@dataclass(frozen=True)
class BranchSite:
    condition: ConditionName
    then_entry: int
    else_entry: int


@dataclass(frozen=True)
class FunctionLayout:
    function: FunctionId
    blocks: tuple[BasicBlock, ...]  # blocks[0] is the entry block
    branches: tuple[BranchSite, ...]


@dataclass(frozen=True)
class UnitLayout:
    unit: UnitId
    functions: tuple[FunctionLayout, ...]
    probe_count: int
    probe_lines: tuple[tuple[int, ...], ...]

    def function_layout(self, fn_id: FunctionId) -> FunctionLayout:
        for fl in self.functions:
            if fl.function == fn_id:
                return fl
        raise KeyError(f"{self.unit} has no function {fn_id}")

    def probes_for_line(self, number: int) -> tuple[int, ...]:
        return tuple(i for i, lines in enumerate(self.probe_lines) if number in lines)


def _layout_function(uid: UnitId, fn: Function, offset: int) -> FunctionLayout:
    drafts: list[dict] = []
    branches: list[Optional[tuple[str, int, int]]] = []

    def alloc() -> int:
        drafts.append(
            {"lines": [], "calls": [], "terminator": "fall",
             "condition": None, "on_true": None, "on_false": None, "next": None}
        )
        return len(drafts) - 1

    def scan(body: tuple[Statement, ...], entry: int) -> list[int]:
        """Fill blocks from ``entry``; return indices still needing a successor."""
        cur: Optional[int] = entry
        pending: list[int] = []
        for st in body:
            if cur is None:
                cur = alloc()
                for b in pending:
                    drafts[b]["next"] = cur
                pending = []
            blk = drafts[cur]
            if isinstance(st, Line):
                blk["lines"].append(st.number)
            elif isinstance(st, Call):
                blk["calls"].append((st.unit, st.function))
            elif isinstance(st, Return):
                blk["terminator"] = "return"
                cur = None
            elif isinstance(st, Branch):
                site = len(branches)
                branches.append(None)
                then_entry = alloc()
                then_dangle = scan(st.then_body, then_entry)
                else_entry = alloc()
                else_dangle = scan(st.else_body, else_entry)
                branches[site] = (st.condition, then_entry, else_entry)
                blk["terminator"] = "branch"
                blk["condition"] = st.condition
                blk["on_true"] = then_entry
                blk["on_false"] = else_entry
                pending = then_dangle + else_dangle
                cur = None
        dangle = [] if cur is None else [cur]
        dangle.extend(pending)
        return dangle

    scan(fn.body, alloc())
    # Dangling blocks at function end fall off the end: implicit return.
    blocks = tuple(
        BasicBlock(
            probe=ProbeId(uid, offset + i),
            lines=tuple(d["lines"]),
            calls=tuple(d["calls"]),
            terminator=d["terminator"],
            condition=d["condition"],
            on_true=d["on_true"],
            on_false=d["on_false"],
            next=d["next"],
        )
        for i, d in enumerate(drafts)
    )
    sites = tuple(BranchSite(c, t, e) for (c, t, e) in branches)  # type: ignore[misc]
    return FunctionLayout(fn.id, blocks, sites)


@lru_cache(maxsize=1 << 14)
def unit_layout(unit: Unit) -> UnitLayout:
    """Derive the probe table of a unit; deterministic for equal units."""
    fls: list[FunctionLayout] = []
    offset = 0
    for fn in unit.functions:
        fl = _layout_function(unit.id, fn, offset)
        fls.append(fl)
        offset += len(fl.blocks)
    probe_lines = tuple(b.lines for fl in fls for b in fl.blocks)
    return UnitLayout(unit.id, tuple(fls), offset, probe_lines)
