"""Change detection between snapshots via normalized per-unit checksums.

The normalized encoding captures everything that can influence test behavior
or probe placement: function ids, statement structure, branch structure, call
targets, line numbers, and the resolved values of the branch conditions the
unit references. Comment text is excluded, so cosmetic edits never register.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from typing import Mapping, Optional

from .model import (
    Branch,
    Call,
    ChangeSet,
    ConditionName,
    Line,
    Return,
    Snapshot,
    Statement,
    Unit,
    UnitId,
)

#: Fixed for the lifetime of a store; recorded in the store header.
DIGEST_ALGORITHM = "sha256"

_TAG_LINE = b"L"
_TAG_CALL = b"C"
_TAG_BRANCH = b"B"
_TAG_RETURN = b"R"


@dataclass(frozen=True)
class UnitDigest:
    unit: UnitId
    digest: str  # 64 hex chars


def _enc_str(text: str) -> bytes:
    raw = text.encode("utf-8")
    return struct.pack(">I", len(raw)) + raw


def _enc_stmts(body: tuple[Statement, ...]) -> bytes:
    parts = [struct.pack(">I", len(body))]
    for st in body:
        if isinstance(st, Line):
            parts.append(_TAG_LINE + struct.pack(">q", st.number))
        elif isinstance(st, Call):
            parts.append(_TAG_CALL + _enc_str(st.unit) + _enc_str(st.function))
        elif isinstance(st, Branch):
            parts.append(
                _TAG_BRANCH
                + _enc_str(st.condition)
                + _enc_stmts(st.then_body)
                + _enc_stmts(st.else_body)
            )
        elif isinstance(st, Return):
            parts.append(_TAG_RETURN)
        else:  # pragma: no cover - exhaustive over Statement
            raise TypeError(f"unknown statement {st!r}")
    return b"".join(parts)


def normalized_encoding(
    u: Unit, condition_defaults: Optional[Mapping[ConditionName, bool]] = None
) -> bytes:
    """Canonical length-prefixed byte encoding of a unit, minus comments.

    The resolved default of every condition the unit references is folded in,
    so flipping a condition changes exactly the encodings of the units whose
    control flow depends on it.
    """
    conds = condition_defaults or {}
    parts = [b"unit", _enc_str(u.id), b"\x01" if u.is_test else b"\x00"]
    parts.append(struct.pack(">I", len(u.functions)))
    for fn in u.functions:
        parts.append(_enc_str(fn.id))
        parts.append(_enc_stmts(fn.body))
    referenced = sorted(u.referenced_conditions())
    parts.append(struct.pack(">I", len(referenced)))
    for name in referenced:
        value = conds.get(name)
        tag = b"\x02" if value is None else (b"\x01" if value else b"\x00")
        parts.append(_enc_str(name) + tag)
    return b"".join(parts)


def unit_digest(
    u: Unit, condition_defaults: Optional[Mapping[ConditionName, bool]] = None
) -> UnitDigest:
    raw = normalized_encoding(u, condition_defaults)
    return UnitDigest(u.id, hashlib.sha256(raw).hexdigest())


def snapshot_digests(s: Snapshot) -> dict[UnitId, str]:
    return {
        uid: unit_digest(u, s.condition_defaults).digest
        for uid, u in sorted(s.units.items())
    }


def diff_digests(
    old: Mapping[UnitId, str], new: Mapping[UnitId, str]
) -> ChangeSet:
    old_keys = frozenset(old)
    new_keys = frozenset(new)
    modified = frozenset(u for u in old_keys & new_keys if old[u] != new[u])
    return ChangeSet(modified, added=new_keys - old_keys, removed=old_keys - new_keys)


def compute_changeset(old: Snapshot, new: Snapshot) -> ChangeSet:
    """Diff two snapshots at checksum granularity."""
    return diff_digests(snapshot_digests(old), snapshot_digests(new))
