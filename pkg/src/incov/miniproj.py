"""Parser, canonical renderer, and deterministic interpreter for mini-projects.

Project file format (UTF-8, line oriented):

    cond <name> = true|false        global condition defaults
    unit <id> [test]                starts a unit
    # <text>                        comment line, kept out of checksums
    fn <id>:                        starts a function
    line <n>                        a logical source line
    call <unit>.<fn>                call into another unit (last dot splits)
    if <cond> {                     branch on a named condition
    } else {                        optional else arm
    }                               closes a branch
    return                          returns from the function

A snapshot may live in one file or in a directory of ``.unit`` files, which
are concatenated in sorted filename order. The first declared function of a
test unit is its entry point.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional

from .model import (
    Branch,
    Call,
    CoverageData,
    DependencyGraph,
    Function,
    Line,
    MAX_BRANCH_DEPTH,
    ProbeId,
    Return,
    Snapshot,
    Statement,
    TestId,
    Unit,
    UnitId,
    is_identifier,
    unit_layout,
)

#: Call frames per test before the run is aborted and marked failed.
MAX_CALL_DEPTH = 64


class ParseError(Exception):
    def __init__(self, message: str, line: int, col: int = 1) -> None:
        super().__init__(f"{message} (line {line}, col {col})")
        self.line = line
        self.col = col


class LinkError(Exception):
    """A parsed reference does not resolve: call target or condition name."""

    def __init__(self, message: str, line: int) -> None:
        super().__init__(f"{message} (line {line})")
        self.line = line


class UnknownTest(Exception):
    def __init__(self, test: TestId) -> None:
        super().__init__(f"unknown test {test}")
        self.test = test


# --- parsing ----------------------------------------------------------------


class _FnDraft:
    def __init__(self, name: str, header_line: int) -> None:
        self.name = name
        self.header_line = header_line
        self.body: list[Statement] = []
        self.frames: list[dict] = []  # open branches, innermost last
        self.last_line = 0

    def active(self) -> list[Statement]:
        if not self.frames:
            return self.body
        top = self.frames[-1]
        return top["else"] if top["in_else"] else top["then"]


class _UnitDraft:
    def __init__(self, name: str, is_test: bool) -> None:
        self.name = name
        self.is_test = is_test
        self.comments: list[str] = []
        self.fns: list[_FnDraft] = []


def parse_project(
    text: str, version_id: str = "v0", max_branch_depth: int = MAX_BRANCH_DEPTH
) -> Snapshot:
    """Parse one project file into a validated snapshot.

    Raises ParseError for malformed syntax and LinkError for dangling call
    targets or undefined branch conditions.
    """
    units: dict[str, _UnitDraft] = {}
    conds: dict[str, bool] = {}
    cur_unit: Optional[_UnitDraft] = None
    cur_fn: Optional[_FnDraft] = None
    call_sites: list[tuple[int, str, str]] = []  # (line_no, unit, function)
    cond_sites: list[tuple[int, str]] = []

    def close_fn(line_no: int) -> None:
        nonlocal cur_fn
        if cur_fn is None:
            return
        if cur_fn.frames:
            raise ParseError(
                f"unclosed branch in function {cur_fn.name}", cur_fn.frames[-1]["line"]
            )
        cur_fn = None

    for line_no, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        col = len(raw) - len(raw.lstrip()) + 1
        if not stripped:
            continue
        if stripped.startswith("#"):
            if cur_unit is not None:
                body = stripped[1:]
                cur_unit.comments.append(body[1:] if body.startswith(" ") else body)
            continue
        tokens = stripped.split()
        head = tokens[0]

        if head == "cond":
            close_fn(line_no)
            if len(tokens) != 4 or tokens[2] != "=" or tokens[3] not in ("true", "false"):
                raise ParseError("expected 'cond <name> = true|false'", line_no, col)
            name = tokens[1]
            if not is_identifier(name):
                raise ParseError(f"invalid condition name {name!r}", line_no, col)
            if name in conds:
                raise ParseError(f"duplicate condition {name}", line_no, col)
            conds[name] = tokens[3] == "true"
            continue

        if head == "unit":
            close_fn(line_no)
            if len(tokens) == 2:
                is_test = False
            elif len(tokens) == 3 and tokens[2] == "test":
                is_test = True
            else:
                raise ParseError("expected 'unit <id> [test]'", line_no, col)
            name = tokens[1]
            if not is_identifier(name):
                raise ParseError(f"invalid unit identifier {name!r}", line_no, col)
            if name in units:
                raise ParseError(f"duplicate unit {name}", line_no, col)
            cur_unit = _UnitDraft(name, is_test)
            units[name] = cur_unit
            continue

        if head == "fn":
            close_fn(line_no)
            if cur_unit is None:
                raise ParseError("function outside of a unit", line_no, col)
            if len(tokens) != 2 or not tokens[1].endswith(":"):
                raise ParseError("expected 'fn <id>:'", line_no, col)
            name = tokens[1][:-1]
            if not is_identifier(name) or "." in name:
                raise ParseError(f"invalid function identifier {name!r}", line_no, col)
            if any(f.name == name for f in cur_unit.fns):
                raise ParseError(f"duplicate function {cur_unit.name}.{name}", line_no, col)
            cur_fn = _FnDraft(name, line_no)
            cur_unit.fns.append(cur_fn)
            continue

        if cur_fn is None:
            raise ParseError(f"statement outside of a function: {stripped!r}", line_no, col)

        if head == "line":
            if len(tokens) != 2 or not tokens[1].isdigit():
                raise ParseError("expected 'line <n>'", line_no, col)
            number = int(tokens[1])
            if number <= cur_fn.last_line:
                raise ParseError(
                    f"line numbers must increase within a function"
                    f" ({cur_fn.last_line} then {number})",
                    line_no,
                    col,
                )
            cur_fn.last_line = number
            cur_fn.active().append(Line(number))
        elif head == "call":
            if len(tokens) != 2 or "." not in tokens[1]:
                raise ParseError("expected 'call <unit>.<fn>'", line_no, col)
            target_unit, target_fn = tokens[1].rsplit(".", 1)
            if not is_identifier(target_unit) or not is_identifier(target_fn):
                raise ParseError(f"invalid call target {tokens[1]!r}", line_no, col)
            cur_fn.active().append(Call(target_unit, target_fn))
            call_sites.append((line_no, target_unit, target_fn))
        elif head == "if":
            if len(tokens) != 3 or tokens[2] != "{":
                raise ParseError("expected 'if <cond> {'", line_no, col)
            if len(cur_fn.frames) + 1 > max_branch_depth:
                raise ParseError(
                    f"branch nesting exceeds {max_branch_depth}", line_no, col
                )
            name = tokens[1]
            if not is_identifier(name):
                raise ParseError(f"invalid condition name {name!r}", line_no, col)
            cur_fn.frames.append(
                {"cond": name, "then": [], "else": [], "in_else": False, "line": line_no}
            )
            cond_sites.append((line_no, name))
        elif stripped == "} else {":
            if not cur_fn.frames or cur_fn.frames[-1]["in_else"]:
                raise ParseError("'else' without open branch", line_no, col)
            cur_fn.frames[-1]["in_else"] = True
        elif stripped == "}":
            if not cur_fn.frames:
                raise ParseError("unmatched '}'", line_no, col)
            frame = cur_fn.frames.pop()
            branch = Branch(frame["cond"], tuple(frame["then"]), tuple(frame["else"]))
            cur_fn.active().append(branch)
        elif stripped == "return":
            cur_fn.active().append(Return())
        else:
            raise ParseError(f"unknown statement {stripped!r}", line_no, col)

    close_fn(0)
    if not units:
        raise ParseError("no units", 1)

    for line_no, target_unit, target_fn in call_sites:
        draft = units.get(target_unit)
        if draft is None or all(f.name != target_fn for f in draft.fns):
            raise LinkError(f"dangling call -> {target_unit}.{target_fn}", line_no)
    for line_no, name in cond_sites:
        if name not in conds:
            raise LinkError(f"undefined condition {name!r}", line_no)

    built = [
        Unit(
            id=d.name,
            is_test=d.is_test,
            functions=tuple(Function(f.name, tuple(f.body)) for f in d.fns),
            comment_text="\n".join(d.comments),
        )
        for d in units.values()
    ]
    return Snapshot.make(version_id, built, conds)


def load_project(path: "str | Path", version_id: Optional[str] = None) -> Snapshot:
    """Load a snapshot from a project file or a directory of .unit files."""
    p = Path(path)
    if p.is_dir():
        chunks = [f.read_text(encoding="utf-8") for f in sorted(p.glob("*.unit"))]
        if not chunks:
            raise ParseError("no units", 1)
        text = "\n".join(chunks)
    else:
        text = p.read_text(encoding="utf-8")
    return parse_project(text, version_id or p.stem)


# --- rendering --------------------------------------------------------------


def _render_stmts(body: tuple[Statement, ...], depth: int, out: list[str]) -> None:
    pad = "  " * depth
    for st in body:
        if isinstance(st, Line):
            out.append(f"{pad}line {st.number}")
        elif isinstance(st, Call):
            out.append(f"{pad}call {st.unit}.{st.function}")
        elif isinstance(st, Return):
            out.append(f"{pad}return")
        elif isinstance(st, Branch):
            out.append(f"{pad}if {st.condition} {{")
            _render_stmts(st.then_body, depth + 1, out)
            if st.else_body:
                out.append(f"{pad}}} else {{")
                _render_stmts(st.else_body, depth + 1, out)
            out.append(f"{pad}}}")


def render_project(s: Snapshot) -> str:
    """Canonical text form; parsing it back reproduces the snapshot."""
    out: list[str] = []
    for name, value in sorted(s.condition_defaults.items()):
        out.append(f"cond {name} = {'true' if value else 'false'}")
    if s.condition_defaults:
        out.append("")
    for uid in sorted(s.units):
        unit = s.units[uid]
        out.append(f"unit {uid} test" if unit.is_test else f"unit {uid}")
        if unit.comment_text:
            for line in unit.comment_text.split("\n"):
                out.append(f"# {line}" if line else "#")
        for fn in unit.functions:
            out.append(f"fn {fn.id}:")
            _render_stmts(fn.body, 1, out)
        out.append("")
    return "\n".join(out)


# --- execution --------------------------------------------------------------


@dataclass(frozen=True)
class ExecutionResult:
    coverage_delta: CoverageData
    dep_delta: DependencyGraph
    outcomes: Mapping[TestId, str]  # "passed" | "failed"
    executed_count: int


class _DepthOverflow(Exception):
    pass


def execute_tests(
    s: Snapshot,
    tests: frozenset[TestId],
    max_call_depth: int = MAX_CALL_DEPTH,
    per_test_cost_s: float = 0.0,
) -> ExecutionResult:
    """Interpret each requested test and collect both execution deltas.

    Tests are independent: no state crosses test boundaries, so results do
    not depend on execution order. A test that overflows the call depth is
    marked failed but keeps the probes and dependencies it already touched.
    """
    layouts: dict[UnitId, object] = {}

    def layout_of(uid: UnitId):
        found = layouts.get(uid)
        if found is None:
            found = unit_layout(s.units[uid])
            layouts[uid] = found
        return found

    hits: dict[UnitId, set[int]] = {}
    edges: dict[TestId, frozenset[UnitId]] = {}
    outcomes: dict[TestId, str] = {}

    def run_function(uid: UnitId, fn_id: str, deps: set[UnitId], depth: int) -> None:
        if depth >= max_call_depth:
            raise _DepthOverflow()
        deps.add(uid)
        unit_hits = hits.setdefault(uid, set())
        fl = layout_of(uid).function_layout(fn_id)
        block: Optional[int] = 0
        while block is not None:
            blk = fl.blocks[block]
            unit_hits.add(blk.probe.index)
            for call_unit, call_fn in blk.calls:
                run_function(call_unit, call_fn, deps, depth + 1)
            if blk.terminator == "return":
                return
            if blk.terminator == "branch":
                taken = s.condition_defaults[blk.condition]
                block = blk.on_true if taken else blk.on_false
            else:
                block = blk.next

    for t in sorted(tests):
        if t not in s.tests:
            raise UnknownTest(t)
        deps: set[UnitId] = {t}
        try:
            unit = s.units[t]
            if unit.functions:
                run_function(t, unit.functions[0].id, deps, depth=0)
            outcomes[t] = "passed"
        except _DepthOverflow:
            outcomes[t] = "failed"
        edges[t] = frozenset(deps)

    if per_test_cost_s > 0 and tests:
        time.sleep(per_test_cost_s * len(tests))

    coverage = CoverageData.of(
        {u: frozenset(ProbeId(u, i) for i in ids) for u, ids in hits.items() if ids}
    )
    return ExecutionResult(coverage, DependencyGraph(edges), outcomes, len(tests))
