"""Coverage reports at line, branch, and function granularity.

A line is covered when any block containing it was executed; a branch arm is
covered when its entry block was executed; a function is covered when its
entry block was executed. Test units are excluded unless requested.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Mapping

from .model import CoverageData, Snapshot, UnitId, unit_layout


class StaleProbe(Exception):
    """A stored probe does not resolve in the snapshot; the store and the
    codebase are out of sync, which indicates a merge or store bug."""


@dataclass(frozen=True)
class UnitCounters:
    lines_covered: int
    lines_total: int
    branches_covered: int
    branches_total: int
    functions_covered: int
    functions_total: int

    def __add__(self, other: "UnitCounters") -> "UnitCounters":
        return UnitCounters(
            self.lines_covered + other.lines_covered,
            self.lines_total + other.lines_total,
            self.branches_covered + other.branches_covered,
            self.branches_total + other.branches_total,
            self.functions_covered + other.functions_covered,
            self.functions_total + other.functions_total,
        )


_ZERO = UnitCounters(0, 0, 0, 0, 0, 0)


@dataclass(frozen=True)
class CoverageReport:
    per_unit: Mapping[UnitId, UnitCounters]
    totals: UnitCounters
    covered_line_map: Mapping[UnitId, frozenset[int]]

    def line_rate(self) -> float:
        if self.totals.lines_total == 0:
            return 0.0
        return self.totals.lines_covered / self.totals.lines_total


def compute_report(
    s: Snapshot, d: CoverageData, include_tests: bool = False
) -> CoverageReport:
    for uid, probes in d.hits.items():
        unit = s.units.get(uid)
        if unit is None:
            raise StaleProbe(f"coverage entry for unknown unit {uid}")
        count = unit_layout(unit).probe_count
        for p in probes:
            if p.index >= count:
                raise StaleProbe(f"probe {p} out of range for {uid} ({count} probes)")

    per_unit: dict[UnitId, UnitCounters] = {}
    covered_lines: dict[UnitId, frozenset[int]] = {}
    totals = _ZERO
    for uid in sorted(s.units):
        unit = s.units[uid]
        if unit.is_test and not include_tests:
            continue
        layout = unit_layout(unit)
        hit = {p.index for p in d.hits.get(uid, frozenset())}

        all_lines: set[int] = set()
        lines_hit: set[int] = set()
        for index, lines in enumerate(layout.probe_lines):
            all_lines.update(lines)
            if index in hit:
                lines_hit.update(lines)

        branches_total = 0
        branches_covered = 0
        functions_covered = 0
        for fl in layout.functions:
            if fl.blocks[0].probe.index in hit:
                functions_covered += 1
            for site in fl.branches:
                branches_total += 2
                if fl.blocks[site.then_entry].probe.index in hit:
                    branches_covered += 1
                if fl.blocks[site.else_entry].probe.index in hit:
                    branches_covered += 1

        counters = UnitCounters(
            lines_covered=len(lines_hit),
            lines_total=len(all_lines),
            branches_covered=branches_covered,
            branches_total=branches_total,
            functions_covered=functions_covered,
            functions_total=len(unit.functions),
        )
        per_unit[uid] = counters
        covered_lines[uid] = frozenset(lines_hit)
        totals = totals + counters

    return CoverageReport(per_unit, totals, covered_lines)


def _pct(covered: int, total: int) -> str:
    return f"{100.0 * covered / total:5.1f}%" if total else "    -"


def _text_rows(r: CoverageReport) -> list[tuple[str, UnitCounters]]:
    rows = [(uid, r.per_unit[uid]) for uid in sorted(r.per_unit)]
    rows.append(("TOTAL", r.totals))
    return rows


def render_report(r: CoverageReport, format: str = "text") -> bytes:
    """Deterministic rendering; equal reports produce identical bytes."""
    if format == "json":
        payload = {
            "per_unit": {uid: asdict(c) for uid, c in sorted(r.per_unit.items())},
            "totals": asdict(r.totals),
            "covered_lines": {
                uid: sorted(lines) for uid, lines in sorted(r.covered_line_map.items())
            },
        }
        return (json.dumps(payload, indent=2, sort_keys=True) + "\n").encode("utf-8")
    if format != "text":
        raise ValueError(f"unknown report format {format!r}")

    rows = _text_rows(r)
    width = max([len("unit")] + [len(name) for name, _ in rows])
    header = (
        f"{'unit':<{width}}  {'lines':>11}  {'branches':>11}  {'functions':>11}"
    )
    lines = [header, "-" * len(header)]
    for name, c in rows:
        lines.append(
            f"{name:<{width}}"
            f"  {c.lines_covered:>3}/{c.lines_total:<3}{_pct(c.lines_covered, c.lines_total)}"
            f"  {c.branches_covered:>3}/{c.branches_total:<3}{_pct(c.branches_covered, c.branches_total)}"
            f"  {c.functions_covered:>3}/{c.functions_total:<3}{_pct(c.functions_covered, c.functions_total)}"
        )
    return ("\n".join(lines) + "\n").encode("utf-8")
