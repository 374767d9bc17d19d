"""Per-column statistical profiles."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from datetime import date, datetime, time
from typing import Any, Sequence

from .model import CanonicalType, ColumnMeta, NUMERIC_TYPES, TEMPORAL_TYPES

TOP_K = 10
SAMPLE_VALUES = 10


@dataclass(frozen=True)
class ColumnProfile:
    column: str
    canonical_type: CanonicalType
    row_count: int
    observed_rows: int
    distinct_count: int
    uniqueness: float
    null_fraction: float
    blank_or_zero_fraction: float
    min_value: Any = None
    max_value: Any = None
    top_k_frequencies: tuple[tuple[Any, int], ...] = ()
    sample_values: tuple[Any, ...] = ()
    type_profile: dict | None = None
    is_estimate: bool = False
    max_length: int = 0
    verified: bool = field(default=False)

    @property
    def is_empty(self) -> bool:
        return self.observed_rows == 0

    @property
    def non_null_count(self) -> int:
        return self.observed_rows - round(self.null_fraction * self.observed_rows)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["canonical_type"] = self.canonical_type.value
        d["top_k_frequencies"] = [list(kv) for kv in self.top_k_frequencies]
        d["sample_values"] = list(self.sample_values)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ColumnProfile":
        d = dict(d)
        d["canonical_type"] = CanonicalType(d["canonical_type"])
        d["top_k_frequencies"] = tuple((v, c) for v, c in d["top_k_frequencies"])
        d["sample_values"] = tuple(d["sample_values"])
        return cls(**d)


def nearest_rank(sorted_values: Sequence, pct: float):
    """Nearest-rank percentile of an ascending sequence."""
    rank = max(1, math.ceil(pct / 100.0 * len(sorted_values)))
    return sorted_values[rank - 1]


def _is_blank_or_zero(v) -> bool:
    if isinstance(v, bool):
        return False
    if isinstance(v, str):
        return v.strip() == ""
    if isinstance(v, (int, float)):
        return v == 0
    return False


def _parse_temporal(v: str, ctype: CanonicalType):
    if ctype is CanonicalType.DATE:
        return date.fromisoformat(v[:10])
    if ctype is CanonicalType.TIME:
        return time.fromisoformat(v)
    return datetime.fromisoformat(v.replace("Z", "+00:00"))


def _type_profile(ctype: CanonicalType, values: list) -> dict | None:
    if not values:
        return None
    if ctype in NUMERIC_TYPES:
        s = sorted(values)
        return {"kind": "numeric", "p25": nearest_rank(s, 25), "p50": nearest_rank(s, 50),
                "p75": nearest_rank(s, 75)}
    if ctype in TEMPORAL_TYPES:
        s = sorted(values)
        summary = {"kind": "temporal", "earliest": s[0], "latest": s[-1]}
        if ctype is not CanonicalType.TIME:
            try:
                lo, hi = _parse_temporal(s[0], ctype), _parse_temporal(s[-1], ctype)
                summary["span_days"] = (hi - lo).days
            except ValueError:
                summary["span_days"] = None
        return summary
    if ctype is CanonicalType.BOOLEAN:
        return None
    lengths = [len(str(v)) for v in values]
    return {"kind": "string", "min_length": min(lengths),
            "avg_length": sum(lengths) / len(lengths), "max_length": max(lengths)}


def profile_column(column: ColumnMeta, values: Sequence, row_count: int | None = None,
                   cardinality_threshold: int | None = None) -> ColumnProfile:
    """Profile ``values`` of ``column``.

    When ``values`` covers the whole table (``len(values) == row_count``) uniqueness is
    exact; otherwise it is the sample distinct ratio and flagged as an estimate.
    ``cardinality_threshold`` suppresses the frequency distribution of columns with
    more distinct values than the threshold.
    """
    observed = len(values)
    if row_count is None:
        row_count = observed
    ctype = column.canonical_type
    if observed == 0:
        return ColumnProfile(column.name, ctype, row_count, 0, 0, 0.0, 0.0, 0.0,
                             is_estimate=row_count > 0)

    non_null = [v for v in values if v is not None]
    counts = Counter(non_null)
    distinct = len(counts)
    full = observed == row_count
    uniqueness = distinct / observed
    ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    if cardinality_threshold is not None and distinct > cardinality_threshold:
        top = ()
    else:
        top = tuple(ordered[:TOP_K])
    seen: list = []
    for v in non_null:
        if v not in seen:
            seen.append(v)
            if len(seen) == SAMPLE_VALUES:
                break
    return ColumnProfile(
        column=column.name,
        canonical_type=ctype,
        row_count=row_count,
        observed_rows=observed,
        distinct_count=distinct,
        uniqueness=uniqueness,
        null_fraction=(observed - len(non_null)) / observed,
        blank_or_zero_fraction=sum(_is_blank_or_zero(v) for v in values) / observed,
        min_value=min(counts) if counts else None,
        max_value=max(counts) if counts else None,
        top_k_frequencies=top,
        sample_values=tuple(seen),
        type_profile=_type_profile(ctype, non_null),
        is_estimate=not full,
        max_length=max((len(str(v)) for v in non_null), default=0),
        verified=full,
    )


def verify_uniqueness(profile: ColumnProfile, full_values: Sequence) -> ColumnProfile:
    """Recompute uniqueness from a full-column scan (used for PK shortlists only)."""
    if profile.verified:
        return profile
    non_null = [v for v in full_values if v is not None]
    n = len(full_values)
    distinct = len(set(non_null))
    return ColumnProfile(**{**profile.__dict__, "distinct_count": distinct,
                            "uniqueness": distinct / n if n else 0.0,
                            "null_fraction": (n - len(non_null)) / n if n else 0.0,
                            "blank_or_zero_fraction":
                                sum(_is_blank_or_zero(v) for v in full_values) / n if n else 0.0,
                            "is_estimate": False, "verified": True})


def profile_table(table, rows: Sequence[tuple], cardinality_threshold: int | None = None
                  ) -> dict[str, ColumnProfile]:
    return {c.name: profile_column(c, [r[c.ordinal_position] for r in rows], table.row_count,
                                   cardinality_threshold)
            for c in table.columns}
