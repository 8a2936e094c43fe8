"""End-to-end pipeline per version, retest-all oracle, and replay harness.

One incremental run loads the previous state, analyzes the change, executes
only the selected tests, merges both deltas back, saves the state, and
reports. The oracle executes every test from scratch; the two must produce
identical coverage data whenever selection is safe, and the harness can
check that on every version of a (generated or loaded) history.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from time import perf_counter
from typing import Mapping, Optional, Sequence

from .changedet import DIGEST_ALGORITHM, compute_changeset, diff_digests, snapshot_digests
from .merge import merge_coverage, merge_dependency_graph
from .miniproj import execute_tests, load_project, render_project
from .model import (
    Branch,
    Call,
    ChangeSet,
    CoverageData,
    DependencyGraph,
    Function,
    Line,
    ProbeId,
    Return,
    SelectionResult,
    Snapshot,
    Statement,
    Unit,
    UnitId,
    validate_snapshot,
)
from .report import CoverageReport, compute_report
from .selection import (
    SnapshotInvalid,
    compose_selection,
    first_version_selection,
)
from .store import StoreState, load_state, save_state


class ParamError(Exception):
    pass


@dataclass(frozen=True)
class RunResult:
    version_id: str
    selection: SelectionResult
    executed_tests: int
    total_tests: int
    selection_rate: float
    phase_times: Mapping[str, float]
    report: CoverageReport

    def __post_init__(self) -> None:
        if not 0.0 <= self.selection_rate <= 1.0:
            raise ValueError(f"selection rate {self.selection_rate} out of range")
        if self.executed_tests != len(self.selection.final_selected):
            raise ValueError("executed_tests disagrees with final_selected")

    @property
    def execution_collection_seconds(self) -> float:
        """The two interleaved phases measured together."""
        return self.phase_times["execution"] + self.phase_times["collection"]


@dataclass(frozen=True)
class CoverageDiff:
    unit: UnitId
    missing: frozenset[ProbeId]  # in the oracle but not in the incremental data
    extra: frozenset[ProbeId]


def _require_valid(s: Snapshot) -> None:
    violations = validate_snapshot(s)
    if violations:
        raise SnapshotInvalid(s.version_id, violations)


def run_full(
    s: Snapshot, include_tests: bool = False, test_cost_s: float = 0.0
) -> tuple[CoverageData, DependencyGraph, CoverageReport]:
    """Retest-all baseline: execute every test against an empty store."""
    _require_valid(s)
    result = execute_tests(s, frozenset(s.tests), per_test_cost_s=test_cost_s)
    report = compute_report(s, result.coverage_delta, include_tests)
    return result.coverage_delta, result.dep_delta, report


def run_incremental(
    store_dir: "str | Path",
    s: Snapshot,
    include_tests: bool = False,
    test_cost_s: float = 0.0,
) -> RunResult:
    """One pipeline pass: load state, analyze, execute, merge, save, report."""
    _require_valid(s)
    current_tests = frozenset(s.tests)
    current_units = frozenset(s.units)

    t0 = perf_counter()
    state = load_state(store_dir)
    new_digests = snapshot_digests(s)
    if state is None:
        cs = ChangeSet(frozenset(), added=current_units, removed=frozenset())
        sel = first_version_selection(s)
        old_graph = DependencyGraph.empty()
        old_coverage = CoverageData.empty()
    else:
        cs = diff_digests(state.unit_digests, new_digests)
        old_tests = frozenset(state.graph.edges)
        sel = compose_selection(state.graph, cs, old_tests, current_tests)
        old_graph = state.graph
        old_coverage = state.coverage
    t1 = perf_counter()

    result = execute_tests(s, sel.final_selected, per_test_cost_s=test_cost_s)
    t2 = perf_counter()

    new_graph = merge_dependency_graph(
        old_graph, result.dep_delta, sel.final_selected, current_tests
    )
    # Changed units are overwritten even when no test reaches them, so a unit
    # that lost all its dependents cannot keep probes from its old shape.
    overwrite = sel.affected_units | cs.modified
    new_coverage = merge_coverage(
        old_coverage, result.coverage_delta, overwrite, current_units
    )
    save_state(
        store_dir,
        StoreState(s.version_id, DIGEST_ALGORITHM, new_digests, new_graph, new_coverage),
    )
    t3 = perf_counter()

    report = compute_report(s, new_coverage, include_tests)
    t4 = perf_counter()

    executed = len(sel.final_selected)
    total = len(current_tests)
    return RunResult(
        version_id=s.version_id,
        selection=sel,
        executed_tests=executed,
        total_tests=total,
        selection_rate=executed / total if total else 0.0,
        phase_times={
            "analysis": t1 - t0,
            "execution": t2 - t1,
            "collection": t3 - t2,
            "report": t4 - t3,
        },
        report=report,
    )


def analyze_against_store(store_dir: "str | Path", s: Snapshot) -> SelectionResult:
    """Analysis phase only: what would run, given the stored state."""
    _require_valid(s)
    state = load_state(store_dir)
    if state is None:
        return first_version_selection(s)
    cs = diff_digests(state.unit_digests, snapshot_digests(s))
    return compose_selection(
        state.graph, cs, frozenset(state.graph.edges), frozenset(s.tests)
    )


def verify_equivalence(
    incremental: CoverageData, oracle: CoverageData
) -> list[CoverageDiff]:
    """Structural set equality per unit; empty result means equal."""
    diffs: list[CoverageDiff] = []
    for unit in sorted(set(incremental.hits) | set(oracle.hits)):
        got = incremental.hits.get(unit, frozenset())
        want = oracle.hits.get(unit, frozenset())
        if got != want:
            diffs.append(CoverageDiff(unit, missing=want - got, extra=got - want))
    return diffs


# --- synthetic history generation -------------------------------------------


@dataclass(frozen=True)
class HistoryParams:
    units: int = 100
    tests: int = 30
    versions: int = 50
    edit_rate: float = 0.1
    add_rate: float = 0.15
    delete_rate: float = 0.05
    branch_flip_rate: float = 0.1

    def validate(self) -> None:
        if self.units < 1 or self.tests < 1 or self.versions < 1:
            raise ParamError("units, tests, and versions must be positive")
        rates = (self.edit_rate, self.add_rate, self.delete_rate, self.branch_flip_rate)
        if any(not 0.0 <= r <= 1.0 for r in rates):
            raise ParamError("rates must lie in [0, 1]")
        if self.versions > 1 and all(r == 0.0 for r in rates):
            raise ParamError("all rates are zero; consecutive versions could not differ")


class _Draft:
    """Mutable working copy of one unit while a history evolves."""

    def __init__(self, name: str, is_test: bool, level: int) -> None:
        self.name = name
        self.is_test = is_test
        self.level = level
        self.fns: list[tuple[str, list[Statement]]] = []
        self.comment = ""

    def freeze(self) -> Unit:
        return Unit(
            self.name,
            self.is_test,
            tuple(Function(fid, tuple(body)) for fid, body in self.fns),
            self.comment,
        )


def _max_line(body: Sequence[Statement]) -> int:
    top = 0
    for st in body:
        if isinstance(st, Line):
            top = max(top, st.number)
        elif isinstance(st, Branch):
            top = max(top, _max_line(st.then_body), _max_line(st.else_body))
    return top


def _append_stmt(body: list[Statement], st: Statement) -> None:
    if body and isinstance(body[-1], Return):
        body.insert(len(body) - 1, st)
    else:
        body.append(st)


def _collect_call_count(body: Sequence[Statement]) -> int:
    n = 0
    for st in body:
        if isinstance(st, Call):
            n += 1
        elif isinstance(st, Branch):
            n += _collect_call_count(st.then_body) + _collect_call_count(st.else_body)
    return n


def _rewrite_calls(body: Sequence[Statement], fn) -> list[Statement]:
    """Rebuild a body applying ``fn(call)`` to every call; None drops it."""
    out: list[Statement] = []
    for st in body:
        if isinstance(st, Call):
            new = fn(st)
            if new is not None:
                out.append(new)
        elif isinstance(st, Branch):
            out.append(
                Branch(
                    st.condition,
                    tuple(_rewrite_calls(st.then_body, fn)),
                    tuple(_rewrite_calls(st.else_body, fn)),
                )
            )
        else:
            out.append(st)
    return out


class _HistoryBuilder:
    def __init__(self, seed: int, params: HistoryParams) -> None:
        self.rng = random.Random(seed)
        self.p = params
        self.drafts: dict[str, _Draft] = {}
        self.conds: dict[str, bool] = {}
        self.level_step = max(1, -(-params.units // 40))
        self.max_level = (params.units - 1) // self.level_step
        self.unit_counter = 0
        self.test_counter = 0

    # -- target discipline: calls only descend levels, so no cycles ----------

    def _call_targets(self, level: Optional[int]) -> list[tuple[str, str]]:
        """(unit, fn) pairs a caller of this level may call; tests pass None."""
        out = []
        for name in sorted(self.drafts):
            d = self.drafts[name]
            if d.is_test:
                continue
            if level is not None and d.level >= level:
                continue
            for fid, _ in d.fns:
                out.append((name, fid))
        return out

    def _gen_body(
        self, line_no: int, targets: list[tuple[str, str]], depth: int
    ) -> tuple[list[Statement], int]:
        rng = self.rng
        body: list[Statement] = []
        line_no += rng.randint(1, 3)
        body.append(Line(line_no))
        for _ in range(rng.randint(0, 2)):
            roll = rng.random()
            if roll < 0.45 and targets:
                body.append(Call(*rng.choice(targets)))
            elif roll < 0.70 and self.conds and depth < 2:
                cond = rng.choice(sorted(self.conds))
                then_body, line_no = self._gen_body(line_no, targets, depth + 1)
                if rng.random() < 0.6:
                    else_body, line_no = self._gen_body(line_no, targets, depth + 1)
                else:
                    else_body = []
                body.append(Branch(cond, tuple(then_body), tuple(else_body)))
            else:
                line_no += rng.randint(1, 2)
                body.append(Line(line_no))
        if rng.random() < 0.8:
            body.append(Return())
        return body, line_no

    def _new_production_unit(self, level: int) -> _Draft:
        name = f"c{self.unit_counter:03d}"
        self.unit_counter += 1
        draft = _Draft(name, False, level)
        targets = self._call_targets(level)
        line_no = 0
        for j in range(self.rng.randint(1, 3)):
            body, line_no = self._gen_body(line_no, targets, depth=0)
            draft.fns.append((f"f{j}", body))
        return draft

    def _new_test_unit(self) -> _Draft:
        name = f"t{self.test_counter:03d}"
        self.test_counter += 1
        draft = _Draft(name, True, self.max_level + 1)
        targets = self._call_targets(None)
        body: list[Statement] = [Line(1)]
        for _ in range(self.rng.randint(1, 4)):
            if targets:
                body.append(Call(*self.rng.choice(targets)))
        body.append(Return())
        draft.fns.append(("t", body))
        return draft

    def initial(self) -> None:
        n_conds = max(2, min(10, self.p.units // 10))
        for i in range(n_conds):
            self.conds[f"cond{i}"] = bool(self.rng.getrandbits(1))
        for i in range(self.p.units):
            draft = self._new_production_unit(i // self.level_step)
            self.drafts[draft.name] = draft
        for _ in range(self.p.tests):
            draft = self._new_test_unit()
            self.drafts[draft.name] = draft

    # -- evolution ------------------------------------------------------------

    def _edit_unit(self, name: str) -> None:
        rng = self.rng
        draft = self.drafts[name]
        fn_idx = rng.randrange(len(draft.fns))
        _, body = draft.fns[fn_idx]
        level = None if draft.is_test else draft.level
        targets = self._call_targets(level)
        op = rng.choice(("append_line", "retarget", "add_call", "drop_last"))

        if op == "retarget" and targets:
            total = sum(_collect_call_count(b) for _, b in draft.fns)
            if total:
                victim = rng.randrange(total)
                new_target = rng.choice(targets)
                seen = [0]

                def swap(call: Call) -> Call:
                    idx = seen[0]
                    seen[0] += 1
                    if idx == victim:
                        return Call(*new_target)
                    return call

                draft.fns = [(fid, _rewrite_calls(b, swap)) for fid, b in draft.fns]
                return
            op = "add_call"
        if op == "add_call" and targets:
            _append_stmt(body, Call(*rng.choice(targets)))
            return
        if op == "drop_last" and len(body) > 1:
            body.pop()
            return
        top = max(_max_line(b) for _, b in draft.fns)
        _append_stmt(body, Line(top + rng.randint(1, 3)))

    def _add_unit(self) -> None:
        rng = self.rng
        if rng.random() < 0.3:
            draft = self._new_test_unit()
            self.drafts[draft.name] = draft
            return
        level = rng.randint(0, self.max_level)
        draft = self._new_production_unit(level)
        self.drafts[draft.name] = draft
        if rng.random() < 0.8:
            callers = [
                n
                for n in sorted(self.drafts)
                if n != draft.name
                and (self.drafts[n].is_test or self.drafts[n].level > level)
            ]
            if callers:
                caller = self.drafts[rng.choice(callers)]
                _append_stmt(caller.fns[0][1], Call(draft.name, draft.fns[0][0]))

    def _delete_unit(self, name: str) -> None:
        del self.drafts[name]
        for other in self.drafts.values():
            other.fns = [
                (fid, _rewrite_calls(b, lambda c: None if c.unit == name else c))
                for fid, b in other.fns
            ]

    def step(self) -> None:
        rng = self.rng
        p = self.p
        for name in sorted(self.drafts):
            if rng.random() < p.edit_rate:
                self._edit_unit(name)
        for name in sorted(self.drafts):
            if rng.random() < p.edit_rate * 0.5:
                self.drafts[name].comment = f"rev {rng.randrange(1 << 20)}"
        if rng.random() < p.add_rate:
            self._add_unit()
        prod = [n for n in sorted(self.drafts) if not self.drafts[n].is_test]
        if rng.random() < p.delete_rate and len(prod) > 3:
            self._delete_unit(rng.choice(prod))
        tests = [n for n in sorted(self.drafts) if self.drafts[n].is_test]
        if rng.random() < p.delete_rate and len(tests) > 2:
            del self.drafts[rng.choice(tests)]
        for cname in sorted(self.conds):
            if rng.random() < p.branch_flip_rate:
                self.conds[cname] = not self.conds[cname]

    def force_change(self) -> None:
        name = self.rng.choice(sorted(self.drafts))
        draft = self.drafts[name]
        top = max(_max_line(b) for _, b in draft.fns)
        _append_stmt(draft.fns[0][1], Line(top + 1))

    def freeze(self, version_id: str) -> Snapshot:
        units = [d.freeze() for d in self.drafts.values()]
        snap = Snapshot.make(version_id, units, dict(self.conds))
        violations = validate_snapshot(snap)
        if violations:  # pragma: no cover - generator bug guard
            raise RuntimeError(f"generated invalid snapshot: {violations[:3]}")
        return snap


def generate_history(seed: int, params: Optional[HistoryParams] = None) -> list[Snapshot]:
    """Deterministic sequence of snapshots; consecutive versions always differ
    at normalized-encoding level."""
    p = params or HistoryParams()
    p.validate()
    builder = _HistoryBuilder(seed, p)
    builder.initial()
    history = [builder.freeze("v000")]
    for k in range(1, p.versions):
        builder.step()
        snap = builder.freeze(f"v{k:03d}")
        while compute_changeset(history[-1], snap).is_empty:
            builder.force_change()
            snap = builder.freeze(f"v{k:03d}")
        history.append(snap)
    return history


def write_history(history: Sequence[Snapshot], directory: "str | Path") -> list[Path]:
    out_dir = Path(directory)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for snap in history:
        path = out_dir / f"{snap.version_id}.proj"
        path.write_text(render_project(snap), encoding="utf-8")
        paths.append(path)
    return paths


def load_history(directory: "str | Path") -> list[Snapshot]:
    paths = sorted(Path(directory).glob("*.proj"))
    if not paths:
        raise FileNotFoundError(f"no .proj files in {directory}")
    return [load_project(p) for p in paths]


# --- replay -------------------------------------------------------------------


@dataclass(frozen=True)
class ReplayRow:
    result: RunResult
    verified: str  # "equal" | "mismatch" | "skipped"
    incremental_seconds: float
    oracle_seconds: Optional[float]
    speedup: Optional[float]
    diffs: tuple[CoverageDiff, ...] = ()


@dataclass(frozen=True)
class ReplayResult:
    rows: tuple[ReplayRow, ...]
    mean_selection_rate: float
    mean_rts_rate: float
    mean_speedup: Optional[float]

    @property
    def all_equal(self) -> bool:
        return all(r.verified in ("equal", "skipped") for r in self.rows)


def replay(
    history: Sequence[Snapshot],
    store_dir: "str | Path",
    verify: bool = True,
    include_tests: bool = False,
    test_cost_s: float = 0.0,
) -> ReplayResult:
    """Run the incremental pipeline across a version history with one store,
    optionally checking every version against the retest-all oracle."""
    if not history:
        raise ParamError("history is empty")
    rows: list[ReplayRow] = []
    for snap in history:
        t0 = perf_counter()
        result = run_incremental(
            store_dir, snap, include_tests=include_tests, test_cost_s=test_cost_s
        )
        inc_seconds = perf_counter() - t0
        if verify:
            t1 = perf_counter()
            oracle_cov, _, _ = run_full(
                snap, include_tests=include_tests, test_cost_s=test_cost_s
            )
            oracle_seconds = perf_counter() - t1
            state = load_state(store_dir)
            assert state is not None
            diffs = tuple(verify_equivalence(state.coverage, oracle_cov))
            verified = "equal" if not diffs else "mismatch"
            speedup = oracle_seconds / max(inc_seconds, 1e-9)
        else:
            oracle_seconds = None
            diffs = ()
            verified = "skipped"
            speedup = None
        rows.append(
            ReplayRow(result, verified, inc_seconds, oracle_seconds, speedup, diffs)
        )

    n = len(rows)
    mean_rate = sum(r.result.selection_rate for r in rows) / n
    mean_rts = sum(
        (len(r.result.selection.rts_selected) / r.result.total_tests)
        if r.result.total_tests
        else 0.0
        for r in rows
    ) / n
    speedups = [r.speedup for r in rows if r.speedup is not None]
    mean_speedup = sum(speedups) / len(speedups) if speedups else None
    return ReplayResult(tuple(rows), mean_rate, mean_rts, mean_speedup)


#: Frozen CSV column order; timings are deliberately excluded so replays of
#: the same seed are byte-identical.
CSV_COLUMNS = (
    "version_id",
    "total_tests",
    "rts_selected",
    "final_selected",
    "executed_tests",
    "selection_rate",
    "lines_covered",
    "lines_total",
    "verified",
)


def replay_csv(result: ReplayResult) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for row in result.rows:
        r = row.result
        lines.append(
            ",".join(
                (
                    r.version_id,
                    str(r.total_tests),
                    str(len(r.selection.rts_selected)),
                    str(len(r.selection.final_selected)),
                    str(r.executed_tests),
                    f"{r.selection_rate:.4f}",
                    str(r.report.totals.lines_covered),
                    str(r.report.totals.lines_total),
                    row.verified,
                )
            )
        )
    return "\n".join(lines) + "\n"
