"""Primary key candidate generation, hard rejection, scoring and position heuristics."""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

from .model import CanonicalType, INTEGER_TYPES, TableMeta
from .stats import ColumnProfile, verify_uniqueness

PK_NAME_PATTERN = r".*[Ii][Dd]$"
PK_THRESHOLD = 70.0
HIGH_UNIQUENESS = 0.95
BLACKLIST = ("date", "time", "qty", "quantity", "amount", "amt", "price", "cost", "total",
             "desc", "note", "comment", "name")

W_UNIQUENESS, W_NAME, W_TYPE, W_PATTERN = 50.0, 20.0, 15.0, 15.0
NULL_PENALTY = 0.7
ATYPICAL_PENALTY = 0.5
FK_LIKELIHOOD_WEIGHT = 0.6
SURROGATE_BOOST = 20.0
CONTIGUOUS_COMPOSITE_BOOST = 1.1
# shared by H9 (ordinal position) and H11 (rank among eligible columns)
POSITION_STEPS = (1.0, 0.85, 0.70, 0.55)

UUID_RE = re.compile(r"^[0-9a-fA-F]{8}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}-[0-9a-fA-F]{12}$")
CODE_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_\-]{0,15}$")


@dataclass(frozen=True)
class PKCandidate:
    table: str
    columns: tuple[str, ...]
    positions: tuple[int, ...]
    uniqueness: float
    factors: dict = field(default_factory=dict)
    penalties: tuple[tuple[str, float], ...] = ()
    surrogate_boost: float = 0.0
    position_multiplier: float = 1.0
    fk_likelihood: float = 0.0
    heuristic_multipliers: tuple[tuple[str, float], ...] = ()
    score: float = 0.0
    accepted: bool = False
    suppressed: bool = False
    rejected: str | None = None

    @property
    def is_composite(self) -> bool:
        return len(self.columns) > 1

    def to_dict(self) -> dict:
        return {
            "table": self.table, "columns": list(self.columns), "positions": list(self.positions),
            "uniqueness": self.uniqueness, "factors": dict(self.factors),
            "penalties": [list(p) for p in self.penalties],
            "surrogate_boost": self.surrogate_boost,
            "position_multiplier": self.position_multiplier,
            "fk_likelihood": self.fk_likelihood,
            "heuristic_multipliers": [list(h) for h in self.heuristic_multipliers],
            "score": self.score, "accepted": self.accepted, "suppressed": self.suppressed,
            "rejected": self.rejected,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PKCandidate":
        return cls(d["table"], tuple(d["columns"]), tuple(d["positions"]), d["uniqueness"],
                   dict(d["factors"]), tuple((n, m) for n, m in d["penalties"]),
                   d["surrogate_boost"], d["position_multiplier"], d["fk_likelihood"],
                   tuple((n, m) for n, m in d["heuristic_multipliers"]), d["score"],
                   d["accepted"], d["suppressed"], d["rejected"])


# --------------------------------------------------------------------------- factors

def uniqueness_factor(u: float) -> float:
    """f(u): identity above 0.95, linear from 0 at u=0.5 up to 0.95, zero below."""
    if u >= HIGH_UNIQUENESS:
        return u
    if u >= 0.5:
        return HIGH_UNIQUENESS * (u - 0.5) / 0.45
    return 0.0


def type_factor(ctype: CanonicalType) -> float:
    if ctype in INTEGER_TYPES or ctype is CanonicalType.UUID:
        return 1.0
    if ctype is CanonicalType.VARCHAR:
        return 0.6
    if ctype in (CanonicalType.TEXT, CanonicalType.BINARY):
        return 0.2
    return 0.3


def pattern_factor(profile: ColumnProfile) -> float:
    """Data-pattern factor on [0, 1]: sequential/UUID 1, natural codes 10/15, else 0."""
    ctype = profile.canonical_type
    samples = [v for v in profile.sample_values if v is not None]
    if ctype is CanonicalType.UUID or (samples and all(UUID_RE.match(str(v)) for v in samples)):
        return 1.0
    if ctype in INTEGER_TYPES and profile.distinct_count > 0:
        if profile.max_value - profile.min_value + 1 == profile.distinct_count:
            return 1.0
        return 0.0
    if ctype is CanonicalType.VARCHAR and samples and all(CODE_RE.match(str(v)) for v in samples):
        return 10.0 / 15.0
    return 0.0


COMPOSITE_PATTERN = 5.0 / 15.0


def position_multiplier(pos: int) -> float:
    """phi(pos) for a zero-indexed ordinal position."""
    return POSITION_STEPS[min(pos, len(POSITION_STEPS) - 1)]


def matches_pk_pattern(name: str, pattern: str = PK_NAME_PATTERN) -> bool:
    return re.fullmatch(pattern, name) is not None


def is_surrogate_name(name: str, table_name: str) -> bool:
    low = name.lower()
    return low == "id" or low == f"{table_name.lower()}_id"


def blacklisted(name: str) -> bool:
    low = name.lower()
    return any(token in low for token in BLACKLIST)


def pk_score(f_u: float, n: float, d: float, p: float, penalties: Sequence[float] = (),
             boost: float = 0.0, phi: float = 1.0) -> float:
    """Weighted base, multiplicative penalties, additive boost, position multiplier, clamp."""
    base = W_UNIQUENESS * f_u + W_NAME * n + W_TYPE * d + W_PATTERN * p
    for m in penalties:
        base *= m
    return min(100.0, max(0.0, (base + boost) * phi))


def recompute_score(c: PKCandidate) -> float:
    f = c.factors
    s = pk_score(f["f_u"], f["n"], f["d"], f["p"], [m for _, m in c.penalties],
                 c.surrogate_boost, c.position_multiplier)
    for _, m in c.heuristic_multipliers:
        s = min(100.0, max(0.0, s * m))
    return s


# --------------------------------------------------------------------------- pipeline steps

def _composite_uniqueness(rows: Sequence[tuple], idx: tuple[int, ...]) -> float:
    if not rows:
        return 0.0
    keys = {tuple(r[i] for i in idx) for r in rows if all(r[i] is not None for i in idx)}
    return len(keys) / len(rows)


def generate_pk_candidates(table: TableMeta, profiles: Mapping[str, ColumnProfile],
                           rows: Sequence[tuple] = (), pattern: str = PK_NAME_PATTERN
                           ) -> list[PKCandidate]:
    """Name-pattern or high-uniqueness columns, plus unique pairs when no column is fully unique."""
    usable = [c for c in table.columns if c.canonical_type is not CanonicalType.OTHER]
    out = []
    for c in usable:
        prof = profiles[c.name]
        if matches_pk_pattern(c.name, pattern) or prof.uniqueness >= HIGH_UNIQUENESS:
            out.append(PKCandidate(table.key, (c.name,), (c.ordinal_position,), prof.uniqueness))
    if rows and not any(profiles[c.name].uniqueness >= 1.0 for c in usable):
        for a, b in itertools.combinations(usable, 2):
            idx = (a.ordinal_position, b.ordinal_position)
            u = _composite_uniqueness(rows, idx)
            if u >= HIGH_UNIQUENESS:
                out.append(PKCandidate(table.key, (a.name, b.name), idx, u))
    return out


def hard_reject(candidate: PKCandidate, profiles: Mapping[str, ColumnProfile]) -> str | None:
    """Return a rejection reason, or None to keep the candidate."""
    parts = [profiles[c] for c in candidate.columns]
    if any(blacklisted(c) for c in candidate.columns):
        return "blacklist"
    if any(p.blank_or_zero_fraction > 0.5 for p in parts):
        return "blank_or_zero"
    # composite parts with nulls are penalised in scoring instead
    if not candidate.is_composite and parts[0].null_fraction > 0:
        return "nulls"
    return None


def score_pk(candidate: PKCandidate, table: TableMeta, profiles: Mapping[str, ColumnProfile],
             fk_likelihood: float = 0.0, threshold: float = PK_THRESHOLD,
             position_heuristics: bool = True, pattern: str = PK_NAME_PATTERN) -> PKCandidate:
    parts = [profiles[c] for c in candidate.columns]
    u = candidate.uniqueness
    f_u = uniqueness_factor(u)
    n = 1.0 if all(matches_pk_pattern(c, pattern) for c in candidate.columns) else 0.0
    d = min(type_factor(p.canonical_type) for p in parts)
    p = COMPOSITE_PATTERN if candidate.is_composite else pattern_factor(parts[0])

    penalties: list[tuple[str, float]] = []
    if any(pp.null_fraction > 0 for pp in parts):
        penalties.append(("nulls", NULL_PENALTY))
    surrogate = (not candidate.is_composite
                 and is_surrogate_name(candidate.columns[0], table.table_name))
    if u >= HIGH_UNIQUENESS and n == 0.0 and not surrogate:
        penalties.append(("atypical_name", ATYPICAL_PENALTY))
    if fk_likelihood > 0:
        penalties.append(("fk_likelihood", 1.0 - FK_LIKELIHOOD_WEIGHT * fk_likelihood))
    boost = SURROGATE_BOOST if (surrogate and u >= HIGH_UNIQUENESS and d >= 0.9) else 0.0
    phi = position_multiplier(min(candidate.positions)) if position_heuristics else 1.0

    score = pk_score(f_u, n, d, p, [m for _, m in penalties], boost, phi)
    return replace(candidate, factors={"f_u": f_u, "n": n, "d": d, "p": p},
                   penalties=tuple(penalties), surrogate_boost=boost, position_multiplier=phi,
                   fk_likelihood=fk_likelihood, score=score, accepted=score >= threshold)


def _with_multiplier(c: PKCandidate, name: str, m: float, threshold: float) -> PKCandidate:
    mults = c.heuristic_multipliers + ((name, m),)
    score = min(100.0, max(0.0, c.score * m))
    return replace(c, heuristic_multipliers=mults, score=score, accepted=score >= threshold)


def apply_position_heuristics(candidates: Sequence[PKCandidate],
                              threshold: float = PK_THRESHOLD) -> list[PKCandidate]:
    """Contiguous-prefix composite boost, progressive discount, composite supersedes parts.

    Expects scored candidates of a single table that survived hard rejection.
    """
    out = list(candidates)
    for i, c in enumerate(out):
        if c.is_composite and sorted(c.positions) == list(range(len(c.positions))):
            out[i] = _with_multiplier(c, "contiguous_prefix", CONTIGUOUS_COMPOSITE_BOOST, threshold)

    eligible = sorted((i for i, c in enumerate(out)
                       if not c.is_composite and c.uniqueness >= HIGH_UNIQUENESS),
                      key=lambda i: out[i].positions[0])
    for rank, i in enumerate(eligible):
        if rank > 0:
            out[i] = _with_multiplier(out[i], "progressive_discount",
                                      POSITION_STEPS[min(rank, len(POSITION_STEPS) - 1)], threshold)

    singles = {c.columns[0]: i for i, c in enumerate(out) if not c.is_composite}
    for c in out:
        if c.is_composite and c.accepted and all(col in singles for col in c.columns):
            for col in c.columns:
                j = singles[col]
                out[j] = replace(out[j], accepted=False, suppressed=True)
    return out


@dataclass(frozen=True)
class PKResult:
    table: str
    candidates: tuple[PKCandidate, ...]
    selected: PKCandidate | None

    @property
    def accepted(self) -> list[PKCandidate]:
        return [c for c in self.candidates if c.accepted]


def select_primary_key(candidates: Sequence[PKCandidate]) -> PKCandidate | None:
    accepted = [c for c in candidates if c.accepted and not c.suppressed]
    if not accepted:
        return None
    return min(accepted, key=lambda c: (-c.score, min(c.positions), len(c.columns), c.columns))


def discover_primary_keys(table: TableMeta, profiles: Mapping[str, ColumnProfile],
                          rows: Sequence[tuple] = (), full_rows: Sequence[tuple] | None = None,
                          fk_likelihood: Mapping[str, float] | None = None,
                          threshold: float = PK_THRESHOLD, position_heuristics: bool = True,
                          pattern: str = PK_NAME_PATTERN) -> PKResult:
    """Run the whole PK stage for one table.

    ``rows`` are the sampled rows used for composite checks; ``full_rows`` (when the
    sample is partial) drive exact uniqueness verification of the shortlist.
    ``fk_likelihood`` maps column name to its FK likelihood on [0, 1].
    """
    fk_likelihood = fk_likelihood or {}
    profiles = dict(profiles)
    candidates = generate_pk_candidates(table, profiles, rows, pattern)
    if full_rows is not None:
        for c in candidates:
            for col in c.columns:
                if not profiles[col].verified:
                    idx = table.column(col).ordinal_position
                    profiles[col] = verify_uniqueness(profiles[col], [r[idx] for r in full_rows])
        candidates = [replace(c, uniqueness=profiles[c.columns[0]].uniqueness)
                      if not c.is_composite else c for c in candidates]

    kept, rejected = [], []
    for c in candidates:
        reason = hard_reject(c, profiles)
        if reason:
            rejected.append(replace(c, rejected=reason))
            continue
        ell = 0.0 if c.is_composite else fk_likelihood.get(c.columns[0], 0.0)
        kept.append(score_pk(c, table, profiles, ell, threshold, position_heuristics, pattern))
    if position_heuristics:
        kept = apply_position_heuristics(kept, threshold)
    ordered = tuple(sorted(kept + rejected, key=lambda c: (c.positions, c.columns)))
    return PKResult(table.key, ordered, select_primary_key(kept))
