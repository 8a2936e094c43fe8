"""Persistent cross-version state: digests, dependency graph, coverage.

Single text file, sorted and line oriented so version-to-version diffs stay
auditable. Layout:

    incov-store v1 <digest_algorithm> <version_id>
    digest <count>
    <unit> <hex digest>
    crc <8 hex>
    graph <count>
    <test> <dep> <dep> ...
    crc <8 hex>
    coverage <count>
    <unit> <probe index> <probe index> ...
    crc <8 hex>
    end

Each section CRC covers its header line and entry lines. Writes go through a
temp file plus atomic rename, guarded by an advisory lock; readers of a
completed file need no lock.
"""

from __future__ import annotations

import os
import zlib
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional

from .changedet import DIGEST_ALGORITHM
from .model import CoverageData, DependencyGraph, ProbeId, UnitId

try:
    import fcntl
except ImportError:  # pragma: no cover - non-posix fallback, lock becomes a no-op
    fcntl = None  # type: ignore[assignment]

MAGIC = "incov-store"
FORMAT_VERSION = "v1"
STORE_FILENAME = "incov.store"
LOCK_FILENAME = "incov.lock"


class CorruptStore(Exception):
    """The store file exists but cannot be trusted; never treated as absent."""


class IncompatibleStore(Exception):
    """The store file uses a different format version or digest algorithm."""


@dataclass(frozen=True)
class StoreState:
    version_id: str
    digest_algorithm: str
    unit_digests: Mapping[UnitId, str]
    graph: DependencyGraph
    coverage: CoverageData


@contextmanager
def store_lock(directory: "str | Path"):
    """Advisory exclusive lock for writers in this store directory."""
    path = Path(directory) / LOCK_FILENAME
    handle = open(path, "a+")
    try:
        if fcntl is not None:
            fcntl.flock(handle.fileno(), fcntl.LOCK_EX)
        yield
    finally:
        if fcntl is not None:
            fcntl.flock(handle.fileno(), fcntl.LOCK_UN)
        handle.close()


def _check_token(token: str, what: str) -> str:
    if not token or any(ch.isspace() for ch in token):
        raise ValueError(f"{what} {token!r} cannot be stored (empty or whitespace)")
    return token


def _section(name: str, entries: list[str]) -> list[str]:
    lines = [f"{name} {len(entries)}"] + entries
    crc = zlib.crc32(("\n".join(lines) + "\n").encode("utf-8"))
    return lines + [f"crc {crc:08x}"]


def render_state(st: StoreState) -> str:
    if "\n" in st.version_id or not st.version_id:
        raise ValueError(f"bad version id {st.version_id!r}")
    digest_lines = [
        f"{_check_token(u, 'unit id')} {_check_token(d, 'digest')}"
        for u, d in sorted(st.unit_digests.items())
    ]
    graph_lines = [
        " ".join([_check_token(t, "test id")] + sorted(deps))
        for t, deps in sorted(st.graph.edges.items())
    ]
    coverage_lines = [
        " ".join([_check_token(u, "unit id")] + [str(p.index) for p in sorted(probes)])
        for u, probes in sorted(st.coverage.hits.items())
    ]
    lines = [f"{MAGIC} {FORMAT_VERSION} {st.digest_algorithm} {st.version_id}"]
    lines += _section("digest", digest_lines)
    lines += _section("graph", graph_lines)
    lines += _section("coverage", coverage_lines)
    lines.append("end")
    return "\n".join(lines) + "\n"


def save_state(directory: "str | Path", st: StoreState) -> None:
    """Atomically write the store file; equal states produce identical bytes."""
    directory = Path(directory)
    payload = render_state(st).encode("utf-8")
    with store_lock(directory):
        tmp = directory / f".{STORE_FILENAME}.tmp.{os.getpid()}"
        try:
            with open(tmp, "wb") as fh:
                fh.write(payload)
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, directory / STORE_FILENAME)
        finally:
            if tmp.exists():
                tmp.unlink()


class _Reader:
    def __init__(self, text: str) -> None:
        self.lines = text.split("\n")
        self.pos = 0

    def next(self) -> str:
        if self.pos >= len(self.lines):
            raise CorruptStore("unexpected end of store file")
        line = self.lines[self.pos]
        self.pos += 1
        return line

    def section(self, name: str) -> list[str]:
        header = self.next()
        parts = header.split()
        if len(parts) != 2 or parts[0] != name or not parts[1].isdigit():
            raise CorruptStore(f"bad section header {header!r}, expected {name}")
        count = int(parts[1])
        entries = [self.next() for _ in range(count)]
        crc_line = self.next()
        body = "\n".join([header] + entries) + "\n"
        expected = f"crc {zlib.crc32(body.encode('utf-8')):08x}"
        if crc_line != expected:
            raise CorruptStore(f"checksum mismatch in section {name}")
        return entries


def parse_state(text: str, expected_algorithm: str = DIGEST_ALGORITHM) -> StoreState:
    reader = _Reader(text)
    header = reader.next()
    parts = header.split(maxsplit=3)
    if len(parts) != 4 or parts[0] != MAGIC:
        raise CorruptStore(f"not a store file (header {header!r})")
    _, version, algorithm, version_id = parts
    if version != FORMAT_VERSION:
        raise IncompatibleStore(f"unsupported format version {version!r}")
    if algorithm != expected_algorithm:
        raise IncompatibleStore(
            f"store digests use {algorithm!r}, expected {expected_algorithm!r}"
        )

    digests: dict[UnitId, str] = {}
    for entry in reader.section("digest"):
        fields = entry.split()
        if len(fields) != 2:
            raise CorruptStore(f"bad digest entry {entry!r}")
        if fields[0] in digests:
            raise CorruptStore(f"duplicate digest entry {fields[0]}")
        digests[fields[0]] = fields[1]

    edges: dict[str, frozenset[str]] = {}
    for entry in reader.section("graph"):
        fields = entry.split()
        if not fields:
            raise CorruptStore("empty graph entry")
        if fields[0] in edges:
            raise CorruptStore(f"duplicate graph entry {fields[0]}")
        edges[fields[0]] = frozenset(fields[1:])
    try:
        graph = DependencyGraph(edges)
    except ValueError as exc:
        raise CorruptStore(str(exc)) from exc

    hits: dict[UnitId, frozenset[ProbeId]] = {}
    for entry in reader.section("coverage"):
        fields = entry.split()
        if len(fields) < 2 or not all(f.isdigit() for f in fields[1:]):
            raise CorruptStore(f"bad coverage entry {entry!r}")
        if fields[0] in hits:
            raise CorruptStore(f"duplicate coverage entry {fields[0]}")
        hits[fields[0]] = frozenset(ProbeId(fields[0], int(f)) for f in fields[1:])
    try:
        coverage = CoverageData(hits)
    except ValueError as exc:
        raise CorruptStore(str(exc)) from exc

    if reader.next() != "end":
        raise CorruptStore("missing end marker")
    for line in reader.lines[reader.pos :]:
        if line:
            raise CorruptStore(f"trailing data after end marker: {line!r}")

    return StoreState(version_id, algorithm, digests, graph, coverage)


def load_state(
    directory: "str | Path", expected_algorithm: str = DIGEST_ALGORITHM
) -> Optional[StoreState]:
    """Read the store; None means no state was ever saved (first version)."""
    path = Path(directory) / STORE_FILENAME
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        return None
    return parse_state(text, expected_algorithm)
