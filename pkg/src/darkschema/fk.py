"""Foreign key discovery: target finding, tiered pre-filters, containment, gates, scoring."""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

from .ingest import render_value
from .model import CanonicalType, INTEGER_TYPES, TableMeta
from .pk import HIGH_UNIQUENESS, UUID_RE, is_surrogate_name
from .similarity import name_similarity, names_match_table, normalize_name, strip_id_suffix
from .stats import ColumnProfile

FK_THRESHOLD = 60.0
CONTAINMENT_SAMPLE = 500
SIMILARITY_CUTOFF = 0.8
TIER2_SAMPLE = 10
MAX_CODE_LENGTH = 64
TOP_N_PER_SOURCE = 3
MIN_CONTAINMENT = 0.75
ORPHAN_LIMIT = 0.20
ORPHAN_PENALTY = 0.7
INCOMPATIBLE_PENALTY = 0.5
ADAPTIVE_K0_FRACTION = 0.40
DEFAULT_WEIGHTS = (40.0, 15.0)
ADAPTIVE_WEIGHTS = (55.0, 0.0)
W_NAME, W_CARDINALITY, W_NULLS = 20.0, 15.0, 10.0
FULL_SCAN_MARGIN = 5.0

TIER1_EXCLUDED = frozenset({CanonicalType.DATE, CanonicalType.TIME, CanonicalType.TIMESTAMP,
                            CanonicalType.BOOLEAN, CanonicalType.FLOAT, CanonicalType.BINARY,
                            CanonicalType.TEXT, CanonicalType.OTHER})
EMAIL_RE = re.compile(r"^[^@\s]+@[^@\s]+\.[^@\s]+$")
URL_RE = re.compile(r"^(https?|ftp)://|^www\.", re.IGNORECASE)
NUMERIC_CODE_RE = re.compile(r"^\d{1,10}$")


# --------------------------------------------------------------------------- records

@dataclass(frozen=True)
class TargetRef:
    table: str
    column: str
    strategy: str


@dataclass(frozen=True)
class FKCandidate:
    source_table: str
    source_column: str
    target_table: str
    target_column: str
    strategy: str = ""
    origin: str = "STATISTICAL"
    factors: dict = field(default_factory=dict)
    weights: tuple[float, float] = DEFAULT_WEIGHTS
    penalties: tuple[tuple[str, float], ...] = ()
    fan_out: int = 1
    fan_out_penalty: float = 1.0
    row_ratio_multiplier: float = 1.0
    gates: tuple[tuple[str, bool], ...] = ()
    promoted: bool = False
    score: float = 0.0
    accepted: bool = False
    dropped: str | None = None

    @property
    def key(self) -> tuple[str, str, str, str]:
        return (self.source_table, self.source_column, self.target_table, self.target_column)

    @property
    def passed_gates(self) -> bool:
        return all(ok for _, ok in self.gates)

    @property
    def failed_gate(self) -> str | None:
        return next((g for g, ok in self.gates if not ok), None)

    def label(self) -> str:
        return f"{self.source_table}.{self.source_column} -> {self.target_table}.{self.target_column}"

    def to_dict(self) -> dict:
        return {
            "source_table": self.source_table, "source_column": self.source_column,
            "target_table": self.target_table, "target_column": self.target_column,
            "strategy": self.strategy, "origin": self.origin, "factors": dict(self.factors),
            "weights": list(self.weights), "penalties": [list(p) for p in self.penalties],
            "fan_out": self.fan_out, "fan_out_penalty": self.fan_out_penalty,
            "row_ratio_multiplier": self.row_ratio_multiplier,
            "gates": [list(g) for g in self.gates], "promoted": self.promoted,
            "score": self.score, "accepted": self.accepted, "dropped": self.dropped,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FKCandidate":
        return cls(d["source_table"], d["source_column"], d["target_table"], d["target_column"],
                   d["strategy"], d["origin"], dict(d["factors"]), tuple(d["weights"]),
                   tuple((n, m) for n, m in d["penalties"]), d["fan_out"], d["fan_out_penalty"],
                   d["row_ratio_multiplier"], tuple((g, ok) for g, ok in d["gates"]),
                   d["promoted"], d["score"], d["accepted"], d["dropped"])


# --------------------------------------------------------------------------- target finding

def find_targets(source_table: TableMeta, source_column: str, tables: Sequence[TableMeta],
                 pk_columns: Mapping[str, str | None]) -> list[TargetRef]:
    """Name-derived lookup, then PK name similarity, then homonymous PK lookup.

    ``pk_columns`` maps table key to its single-column PK (or None when none was
    detected).  For name-derived matches against a table without a detected PK the
    lookup falls back to a column named like the source or like ``<table>_id``.
    """
    out: list[TargetRef] = []
    seen: set[tuple[str, str]] = set()

    def add(table: TableMeta, column: str, strategy: str):
        if table.key == source_table.key and column == source_column:
            return
        if (table.key, column) not in seen:
            seen.add((table.key, column))
            out.append(TargetRef(table.key, column, strategy))

    stem = strip_id_suffix(source_column)
    if stem and stem.lower() != source_column.lower():
        for t in tables:
            if not names_match_table(stem, t.table_name):
                continue
            pk = pk_columns.get(t.key)
            if pk:
                add(t, pk, "name_derived")
                continue
            wanted = {normalize_name(source_column), "id", normalize_name(t.table_name) + "id"}
            for c in t.columns:
                if normalize_name(c.name) in wanted:
                    add(t, c.name, "name_derived")
                    break

    for t in tables:
        pk = pk_columns.get(t.key)
        if pk and name_similarity(source_column, pk) >= SIMILARITY_CUTOFF:
            add(t, pk, "pk_similarity")

    for t in tables:
        pk = pk_columns.get(t.key)
        if pk and pk.lower() == source_column.lower():
            add(t, pk, "homonym")
    return out


# --------------------------------------------------------------------------- tier filters

def _family(ctype: CanonicalType) -> str:
    if ctype in INTEGER_TYPES or ctype is CanonicalType.DECIMAL:
        return "numeric"
    if ctype is CanonicalType.VARCHAR:
        return "string"
    if ctype is CanonicalType.UUID:
        return "uuid"
    return ctype.value.lower()


def type_compatibility(source: CanonicalType, target: CanonicalType) -> str:
    """'same', 'coercible' (numeric/uuid vs string) or 'incompatible'."""
    a, b = _family(source), _family(target)
    if a == b:
        return "same"
    if "string" in (a, b) and {a, b} <= {"string", "numeric", "uuid"}:
        return "coercible"
    return "incompatible"


@dataclass(frozen=True)
class TierDecision:
    keep: bool
    tier: int = 0
    reason: str = ""
    promoted: bool = False
    coercible: bool = False


def _promotable(v) -> bool:
    if isinstance(v, bool):
        return False
    if isinstance(v, int):
        return True
    s = str(v)
    return bool(UUID_RE.match(s) or NUMERIC_CODE_RE.match(s))


def tier_filter(source: ColumnProfile, target: ColumnProfile) -> TierDecision:
    """Zero-cost type exclusion, then a 10-value pattern check on the source."""
    if source.canonical_type in TIER1_EXCLUDED:
        return TierDecision(False, 1, f"source type {source.canonical_type.value}")
    compat = type_compatibility(source.canonical_type, target.canonical_type)
    if compat == "incompatible":
        return TierDecision(False, 1, "incompatible types "
                            f"{source.canonical_type.value}/{target.canonical_type.value}")
    samples = [v for v in source.sample_values[:TIER2_SAMPLE] if v is not None]
    coercible = compat == "coercible"
    if samples and all(_promotable(v) for v in samples):
        return TierDecision(True, 2, "promoted", promoted=True, coercible=coercible)
    texts = [str(v) for v in samples]
    if any(EMAIL_RE.match(s) for s in texts):
        return TierDecision(False, 2, "email values")
    if any(URL_RE.match(s) for s in texts):
        return TierDecision(False, 2, "url values")
    if any(len(s) > MAX_CODE_LENGTH for s in texts):
        return TierDecision(False, 2, "long strings")
    if coercible:
        return TierDecision(False, 2, "coercible types without promotable values")
    return TierDecision(True, 2, "")


# --------------------------------------------------------------------------- containment

def _membership_key(v, as_text: bool):
    # mixed-type pairs compare on the snapshot's text rendering
    return render_value(v) if as_text else v


def containment_sample(source_values: Sequence, seed: int = 0, limit: int = CONTAINMENT_SAMPLE,
                       label: str = "") -> list:
    distinct = sorted({v for v in source_values if v is not None}, key=lambda v: (str(type(v)), v))
    if len(distinct) <= limit:
        return distinct
    rng = random.Random(f"{seed}:{label}")
    return sorted(rng.sample(distinct, limit), key=lambda v: (str(type(v)), v))


def compute_containment(source_values: Sequence, target_values: Sequence, seed: int = 0,
                        limit: int = CONTAINMENT_SAMPLE, label: str = "") -> float | None:
    """Fraction of (up to ``limit``) distinct non-null source values found in the full target.

    Returns None when the source has no non-null values.
    """
    sample = containment_sample(source_values, seed, limit, label)
    if not sample:
        return None
    src_types = {type(v) for v in sample}
    tgt = [v for v in target_values if v is not None]
    as_text = bool(tgt) and src_types != {type(v) for v in tgt}
    target_set = {_membership_key(v, as_text) for v in tgt}
    hits = sum(_membership_key(v, as_text) in target_set for v in sample)
    return hits / len(sample)


# --------------------------------------------------------------------------- gates

def target_pk_eligible(target: ColumnProfile) -> bool:
    """G1: the target must be unique, non-null and not mostly blank/zero."""
    return (target.observed_rows > 0 and target.null_fraction == 0
            and target.blank_or_zero_fraction <= 0.5 and target.uniqueness >= 1.0)


def is_rowguid(column: str) -> bool:
    return column.lower() == "rowguid"


def row_ratio_multiplier(source_rows: int, target_rows: int) -> float:
    """G4: damp confidence when the source table is dramatically smaller than the target."""
    if target_rows > 0 and source_rows < 0.01 * target_rows:
        return min(1.0, max(0.5, source_rows / target_rows))
    return 1.0


def fan_out_multiplier(n: int) -> float:
    """psi(n) for n surviving target tables of one source column."""
    if n <= 1:
        return 1.0
    return {2: 0.85, 3: 0.75}.get(n, 0.65)


def cardinality_factor(rho: float) -> float:
    return min(rho, 2.0) / 2.0


def null_factor(null_fraction: float) -> float:
    if null_fraction < 0.30:
        return 1.0
    if null_fraction <= 0.70:
        return 0.5
    return 0.0


def weight_vector(adaptive: bool) -> tuple[float, float, float, float, float]:
    """Full (containment, name, cardinality, target-key, nulls) weight vector."""
    w_v, w_k = ADAPTIVE_WEIGHTS if adaptive else DEFAULT_WEIGHTS
    return (w_v, W_NAME, W_CARDINALITY, w_k, W_NULLS)


def fk_penalties(orphan_rate: float, coercible: bool) -> tuple[tuple[str, float], ...]:
    """Multiplicative penalties in application order."""
    out = []
    if coercible:
        out.append(("incompatible_types", INCOMPATIBLE_PENALTY))
    if orphan_rate > ORPHAN_LIMIT:
        out.append(("orphan_rate", ORPHAN_PENALTY))
    return tuple(out)


def fk_score(v: float, s: float, r: float, k: float, nu: float,
             weights: tuple[float, float] = DEFAULT_WEIGHTS, penalties: Sequence[float] = (),
             psi: float = 1.0, row_ratio: float = 1.0) -> float:
    w_v, w_k = weights
    score = w_v * v + W_NAME * s + W_CARDINALITY * r + w_k * k + W_NULLS * nu
    for m in penalties:
        score *= m
    return min(100.0, max(0.0, score * psi * row_ratio))


def recompute_score(c: FKCandidate) -> float:
    f = c.factors
    return fk_score(f["v"], f["s"], f["r"], f["k"], f["nu"], c.weights,
                    [m for _, m in c.penalties], c.fan_out_penalty, c.row_ratio_multiplier)


def naming_score(source_column: str, target_table: TableMeta, target_column: str) -> float:
    return max(name_similarity(source_column, target_column),
               name_similarity(strip_id_suffix(source_column), target_table.table_name))


# --------------------------------------------------------------------------- pipeline

@dataclass
class DiscoveryContext:
    """Everything key discovery reads.  Declared constraints are deliberately absent."""

    tables: dict[str, TableMeta]
    profiles: dict[str, dict[str, ColumnProfile]]
    sample_rows: dict[str, list[tuple]]
    full_values: Callable[[str, str], list]
    pk_columns: dict[str, tuple[str, ...]] = field(default_factory=dict)
    seed: int = 0
    threshold: float = FK_THRESHOLD

    def sampled_values(self, table: str, column: str) -> list:
        idx = self.tables[table].column(column).ordinal_position
        return [r[idx] for r in self.sample_rows[table]]

    @property
    def single_pks(self) -> dict[str, str | None]:
        return {t: (cols[0] if len(cols) == 1 else None) for t, cols in self.pk_columns.items()}

    def is_pk_column(self, table: str, column: str) -> bool:
        return self.pk_columns.get(table) == (column,)


@dataclass(frozen=True)
class FKResult:
    candidates: tuple[FKCandidate, ...]
    adaptive: bool
    k0_fraction: float

    @property
    def accepted(self) -> list[FKCandidate]:
        return [c for c in self.candidates if c.accepted]

    @property
    def weights(self) -> tuple[float, float]:
        return ADAPTIVE_WEIGHTS if self.adaptive else DEFAULT_WEIGHTS

    @property
    def weight_vector(self) -> tuple[float, float, float, float, float]:
        return weight_vector(self.adaptive)


def _evaluate(ctx: DiscoveryContext, src_t: TableMeta, src_col: str, ref: TargetRef,
              origin: str = "STATISTICAL") -> FKCandidate:
    """Tier filters, containment, gates G1/G3/G6/G8 and the raw factors (unscored)."""
    cand = FKCandidate(src_t.key, src_col, ref.table, ref.column, ref.strategy, origin)
    sp = ctx.profiles[src_t.key][src_col]
    tp = ctx.profiles[ref.table][ref.column]
    decision = tier_filter(sp, tp)
    if not decision.keep:
        return replace(cand, dropped=f"tier{decision.tier}: {decision.reason}")
    src_values = ctx.sampled_values(src_t.key, src_col)
    v = compute_containment(src_values, ctx.full_values(ref.table, ref.column), ctx.seed,
                            label=f"{src_t.key}.{src_col}")
    if v is None:
        return replace(cand, dropped="empty source sample", promoted=decision.promoted)

    tgt_t = ctx.tables[ref.table]
    self_ref = src_t.key == ref.table
    gates = (
        ("G1", target_pk_eligible(tp)),
        ("G3", not is_rowguid(ref.column)),
        ("G6", v >= MIN_CONTAINMENT),
        ("G8", self_ref or not ctx.is_pk_column(src_t.key, src_col)),
    )
    rho = src_t.row_count / sp.distinct_count if sp.distinct_count else 0.0
    factors = {
        "v": v,
        "s": naming_score(src_col, tgt_t, ref.column),
        "r": cardinality_factor(rho),
        "rho": rho,
        "k": 1.0 if ctx.is_pk_column(ref.table, ref.column) else 0.0,
        "nu": null_factor(sp.null_fraction),
    }
    penalties = (("incompatible_types", INCOMPATIBLE_PENALTY),) if decision.coercible else ()
    return replace(cand, factors=factors, penalties=penalties, gates=gates,
                   promoted=decision.promoted,
                   row_ratio_multiplier=row_ratio_multiplier(src_t.row_count, tgt_t.row_count))


def _score(ctx: DiscoveryContext, c: FKCandidate, weights: tuple[float, float],
           fan_out: int) -> FKCandidate:
    f = c.factors
    psi = fan_out_multiplier(fan_out)
    coercible = any(name == "incompatible_types" for name, _ in c.penalties)

    def total(v_orphan: float) -> tuple[float, tuple]:
        pens = fk_penalties(1.0 - v_orphan, coercible)
        return fk_score(f["v"], f["s"], f["r"], f["k"], f["nu"], weights,
                        [m for _, m in pens], psi, c.row_ratio_multiplier), pens

    score, pens = total(f["v"])
    sampled = len({v for v in ctx.sampled_values(c.source_table, c.source_column)
                   if v is not None})
    full_needed = (abs(score - ctx.threshold) <= FULL_SCAN_MARGIN
                   and (sampled > CONTAINMENT_SAMPLE
                        or len(ctx.sample_rows[c.source_table]) < ctx.tables[c.source_table].row_count))
    factors = dict(f)
    if full_needed:
        full_v = compute_containment(ctx.full_values(c.source_table, c.source_column),
                                     ctx.full_values(c.target_table, c.target_column),
                                     limit=10 ** 12)
        if full_v is not None:
            factors["orphan_rate_full"] = 1.0 - full_v
            score, pens = total(full_v)
    accepted = c.passed_gates and score >= ctx.threshold
    return replace(c, factors=factors, weights=weights, penalties=pens, fan_out=fan_out,
                   fan_out_penalty=psi, score=score, accepted=accepted)


def discover_foreign_keys(ctx: DiscoveryContext) -> FKResult:
    tables = [ctx.tables[k] for k in sorted(ctx.tables)]
    single = ctx.single_pks
    evaluated: list[FKCandidate] = []
    for t in tables:
        for col in t.columns:
            if col.canonical_type is CanonicalType.OTHER:
                continue
            for ref in find_targets(t, col.name, tables, single):
                evaluated.append(_evaluate(ctx, t, col.name, ref))

    population = [c for c in evaluated if c.dropped is None]
    k0 = sum(1 for c in population if c.factors["k"] == 0.0)
    k0_fraction = k0 / len(population) if population else 0.0
    adaptive = k0_fraction > ADAPTIVE_K0_FRACTION
    weights = ADAPTIVE_WEIGHTS if adaptive else DEFAULT_WEIGHTS

    by_source: dict[tuple[str, str], list[FKCandidate]] = {}
    for c in population:
        by_source.setdefault((c.source_table, c.source_column), []).append(c)

    final: dict[tuple, FKCandidate] = {c.key: c for c in evaluated}
    for group in by_source.values():
        survivors = [c for c in group if c.passed_gates]
        fan_out = len({c.target_table for c in survivors})
        scored = [_score(ctx, c, weights, max(fan_out, 1)) for c in group]
        ranked = sorted((c for c in scored if c.passed_gates),
                        key=lambda c: (-c.score, c.target_table, c.target_column))
        keep = {c.key for c in ranked[:TOP_N_PER_SOURCE]}
        for c in scored:
            if c.passed_gates:
                in_top = c.key in keep
                c = replace(c, gates=c.gates + (("G5", in_top),),
                            accepted=c.accepted and in_top)
            final[c.key] = c
    ordered = tuple(final[k] for k in sorted(final))
    return FKResult(ordered, adaptive, k0_fraction)


def validate_proposed_fk(ctx: DiscoveryContext, source_table: str, source_column: str,
                         target_table: str, target_column: str, adaptive: bool = False
                         ) -> FKCandidate:
    """Statistically check an analyzer-proposed FK with the same containment, gates and threshold."""
    cand = FKCandidate(source_table, source_column, target_table, target_column,
                       "analyzer", "ANALYZER_PROPOSED")
    for tkey, col in ((source_table, source_column), (target_table, target_column)):
        if tkey not in ctx.tables or not ctx.tables[tkey].has_column(col):
            return replace(cand, dropped=f"unknown column {tkey}.{col}")
    if source_table == target_table and source_column == target_column:
        return replace(cand, dropped="source equals target")
    evaluated = _evaluate(ctx, ctx.tables[source_table], source_column,
                          TargetRef(target_table, target_column, "analyzer"), "ANALYZER_PROPOSED")
    if evaluated.dropped:
        return evaluated
    weights = ADAPTIVE_WEIGHTS if adaptive else DEFAULT_WEIGHTS
    return _score(ctx, evaluated, weights, 1)


def estimate_fk_likelihood(tables: Sequence[TableMeta],
                           profiles: Mapping[str, Mapping[str, ColumnProfile]],
                           provisional_pks: Mapping[str, str | None]) -> dict[str, dict[str, float]]:
    """FK likelihood per column, fed into PK scoring.

    A column following its own table's key convention scores 0.  Otherwise the score
    is the number of other tables it has a tier-filter-surviving candidate target in,
    capped at 1.
    """
    out: dict[str, dict[str, float]] = {}
    for t in tables:
        own = {"id", normalize_name(t.table_name) + "id"}
        out[t.key] = {}
        for col in t.columns:
            if (col.canonical_type is CanonicalType.OTHER or is_surrogate_name(col.name, t.table_name)
                    or normalize_name(col.name) in own):
                out[t.key][col.name] = 0.0
                continue
            hits = set()
            for ref in find_targets(t, col.name, tables, provisional_pks):
                if ref.table == t.key:
                    continue
                if tier_filter(profiles[t.key][col.name], profiles[ref.table][ref.column]).keep:
                    hits.add(ref.table)
            out[t.key][col.name] = min(1.0, float(len(hits)))
    return out


def provisional_primary_keys(tables: Sequence[TableMeta],
                             profiles: Mapping[str, Mapping[str, ColumnProfile]],
                             pattern_match: Callable[[str], bool]) -> dict[str, str | None]:
    """First fully unique, non-null, PK-named column of each table (pre-scoring guess)."""
    out: dict[str, str | None] = {}
    for t in tables:
        out[t.key] = None
        for col in t.columns:
            p = profiles[t.key][col.name]
            if (pattern_match(col.name) and p.uniqueness >= HIGH_UNIQUENESS and p.null_fraction == 0
                    and col.canonical_type is not CanonicalType.OTHER):
                out[t.key] = col.name
                break
    return out
