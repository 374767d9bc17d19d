"""Iterative description refinement: forward pass by level, insight backpropagation,
sanity checks and convergence detection."""

from __future__ import annotations

import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

from .analyzer import AnalysisRequest, Analyzer, RequestKind, exact_match_classification
from .guardrails import WARN, BudgetLedger
from .model import Relationship, TableMeta, build_dependency_graph
from .stats import ColumnProfile

logger = logging.getLogger(__name__)

HARD_MAX_ITERATIONS = 5
JUNCTION_WORDS = ("link", "junction", "relationship", "associat", "bridge")
CHANGED, UNCHANGED = "changed", "unchanged"
MATERIAL, COSMETIC = "material", "cosmetic"


# --------------------------------------------------------------------------- records

@dataclass
class DescriptionRecord:
    object_id: str
    text: str = ""
    confidence: float = 0.0
    immutable: bool = False
    history: list[dict] = field(default_factory=list)

    def log(self, iteration: int, text: str, result: str, reasoning: str) -> None:
        self.history.append({"iteration": iteration, "text": text, "result": result,
                             "reasoning": reasoning})

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DescriptionRecord":
        return cls(d["object_id"], d["text"], d["confidence"], d["immutable"],
                   [dict(h) for h in d["history"]])


@dataclass(frozen=True)
class Insight:
    from_table: str
    about_parent: str
    text: str
    confidence: float
    iteration: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Violation:
    table: str
    rule: str
    message: str
    scope: str = "level"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Violation":
        return cls(**d)


@dataclass(frozen=True)
class ConvergenceConfig:
    window: int = 2
    confidence_threshold: float = 0.6
    max_iterations: int = 3

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("stability window must be >= 1")
        if not 0 < self.confidence_threshold <= 1:
            raise ValueError("confidence threshold must be in (0, 1]")
        if self.max_iterations < 2:
            raise ValueError("max iterations must be >= 2")
        if self.max_iterations > HARD_MAX_ITERATIONS:
            logger.warning("max iterations %d capped at %d", self.max_iterations,
                           HARD_MAX_ITERATIONS)
            object.__setattr__(self, "max_iterations", HARD_MAX_ITERATIONS)


@dataclass(frozen=True)
class SanityRules:
    """Structural rule toggles (R5 is delegated to the analyzer)."""

    r1_fk_target_unique: bool = True
    r2_pk_not_null: bool = True
    r3_self_reference_nullable: bool = True
    r4_junction_described: bool = True
    r5_analyzer_consistency: bool = True
    r6_single_pk: bool = True

    @classmethod
    def from_config(cls, d: dict | None) -> "SanityRules":
        d = d or {}
        return cls(*(bool(d.get(k, True)) for k in ("R1", "R2", "R3", "R4", "R5", "R6")))


@dataclass
class IterationRecord:
    iteration: int
    table_analyses: int = 0
    revisions: int = 0
    material_changes: int = 0
    cosmetic_changes: int = 0
    violations: int = 0
    changed_tables: list[str] = field(default_factory=list)
    stable: bool = False
    confident: bool = False
    semantic: bool = False
    converged: bool = False

    @property
    def material_total(self) -> int:
        """Material description changes plus sanity violations."""
        return self.material_changes + self.violations

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "IterationRecord":
        return cls(**d)


@dataclass(frozen=True)
class ConvergenceStatus:
    stable: bool
    confident: bool
    semantic: bool
    converged: bool


def check_convergence(history: Sequence[IterationRecord], confidences: Iterable[float],
                      config: ConvergenceConfig) -> ConvergenceStatus:
    """Evaluate the three criteria after the latest completed iteration."""
    if not history:
        raise ValueError("at least one completed iteration is required")
    recent = history[-config.window:]
    stable = len(history) >= config.window and all(r.material_total == 0 for r in recent)
    confident = all(c >= config.confidence_threshold for c in confidences)
    semantic = history[-1].material_changes == 0
    held = stable + confident + semantic
    return ConvergenceStatus(stable, confident, semantic, held >= 2 and len(history) >= 2)


# --------------------------------------------------------------------------- schema facts

@dataclass
class SchemaFacts:
    """Read-only discovery outputs the refinement loop works against."""

    tables: dict[str, TableMeta]
    profiles: dict[str, dict[str, ColumnProfile]]
    primary_keys: dict[str, tuple[str, ...]]
    accepted_pk_candidates: dict[str, list[tuple[str, ...]]] = field(default_factory=dict)

    def column_id(self, table: str, column: str) -> str:
        return f"{table}.{column}"


def parents_of(table: str, relationships: Sequence[Relationship]) -> list[str]:
    return sorted({r.target_table for r in relationships
                   if r.source_table == table and r.target_table != table})


def children_of(table: str, relationships: Sequence[Relationship]) -> list[str]:
    return sorted({r.source_table for r in relationships
                   if r.target_table == table and r.source_table != table})


def is_junction(table: str, facts: SchemaFacts, relationships: Sequence[Relationship]) -> bool:
    pk = facts.primary_keys.get(table, ())
    if len(pk) != 2:
        return False
    targets = {r.target_table for r in relationships
               if r.source_table == table and r.source_columns[0] in pk and r.target_table != table}
    covered = {r.source_columns[0] for r in relationships
               if r.source_table == table and r.source_columns[0] in pk}
    return len(targets) == 2 and covered == set(pk)


def structural_violations(tables: Iterable[str], facts: SchemaFacts,
                          relationships: Sequence[Relationship],
                          descriptions: Mapping[str, DescriptionRecord],
                          rules: SanityRules = SanityRules(), scope: str = "level") -> list[Violation]:
    out: list[Violation] = []
    for t in sorted(set(tables)):
        profiles = facts.profiles.get(t, {})
        meta = facts.tables[t]
        for r in relationships:
            if r.source_table != t:
                continue
            if rules.r1_fk_target_unique:
                tp = facts.profiles[r.target_table][r.target_columns[0]]
                if tp.uniqueness < 1.0 or tp.null_fraction > 0:
                    out.append(Violation(t, "R1", f"{r.label()} targets a column that is not "
                                                  "unique and non-null", scope))
            if rules.r3_self_reference_nullable and r.is_self_referencing:
                col = meta.column(r.source_columns[0])
                if not col.nullable and profiles[col.name].null_fraction == 0:
                    out.append(Violation(t, "R3", f"self-referencing {col.name} is not nullable",
                                         scope))
        if rules.r2_pk_not_null:
            for c in facts.primary_keys.get(t, ()):
                if profiles[c].null_fraction > 0:
                    out.append(Violation(t, "R2", f"primary key column {c} contains nulls", scope))
        if rules.r4_junction_described and is_junction(t, facts, relationships):
            text = descriptions[t].text.lower() if t in descriptions else ""
            if not any(w in text for w in JUNCTION_WORDS):
                out.append(Violation(t, "R4", "junction table not described as a relationship "
                                              "table", scope))
        if rules.r6_single_pk and len(facts.accepted_pk_candidates.get(t, [])) > 1:
            out.append(Violation(t, "R6", "more than one accepted primary key", scope))
    return out


# --------------------------------------------------------------------------- state

@dataclass
class RefinementState:
    descriptions: dict[str, DescriptionRecord]
    relationships: list[Relationship]
    iteration: int = 0
    steps: list[list[str]] = field(default_factory=list)
    completed_steps: int = 0
    requeue: list[str] = field(default_factory=list)
    current: IterationRecord | None = None
    log: list[IterationRecord] = field(default_factory=list)
    insights: list[Insight] = field(default_factory=list)
    proposals: list[dict] = field(default_factory=list)
    violations: list[Violation] = field(default_factory=list)
    finished: bool = False
    stop_reason: str = ""

    @property
    def table_confidences(self) -> dict[str, float]:
        return {k: r.confidence for k, r in self.descriptions.items() if k.count(".") == 1}

    def to_dict(self) -> dict:
        return {
            "descriptions": {k: self.descriptions[k].to_dict() for k in sorted(self.descriptions)},
            "relationships": [r.to_dict() for r in self.relationships],
            "iteration": self.iteration,
            "steps": [list(s) for s in self.steps],
            "completed_steps": self.completed_steps,
            "requeue": list(self.requeue),
            "current": self.current.to_dict() if self.current else None,
            "log": [r.to_dict() for r in self.log],
            "insights": [i.to_dict() for i in self.insights],
            "proposals": list(self.proposals),
            "violations": [v.to_dict() for v in self.violations],
            "finished": self.finished,
            "stop_reason": self.stop_reason,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RefinementState":
        return cls(
            descriptions={k: DescriptionRecord.from_dict(v) for k, v in d["descriptions"].items()},
            relationships=[Relationship.from_dict(r) for r in d["relationships"]],
            iteration=d["iteration"],
            steps=[list(s) for s in d["steps"]],
            completed_steps=d["completed_steps"],
            requeue=list(d["requeue"]),
            current=IterationRecord.from_dict(d["current"]) if d["current"] else None,
            log=[IterationRecord.from_dict(r) for r in d["log"]],
            insights=[Insight(**i) for i in d["insights"]],
            proposals=list(d["proposals"]),
            violations=[Violation.from_dict(v) for v in d["violations"]],
            finished=d["finished"],
            stop_reason=d["stop_reason"],
        )


def initial_state(facts: SchemaFacts, relationships: Sequence[Relationship],
                  ground_truth: Mapping[str, str] | None = None) -> RefinementState:
    """Empty description store with ground-truth objects loaded as immutable anchors.

    Ground-truth keys are ``schema.table`` or ``schema.table.column``.
    """
    ground_truth = ground_truth or {}
    descriptions: dict[str, DescriptionRecord] = {}
    for key in sorted(facts.tables):
        ids = [key] + [f"{key}.{c.name}" for c in facts.tables[key].columns]
        for oid in ids:
            rec = DescriptionRecord(oid)
            if oid in ground_truth:
                rec.text = ground_truth[oid]
                rec.confidence = 1.0
                rec.immutable = True
                rec.log(0, rec.text, CHANGED, "ground truth")
            descriptions[oid] = rec
    unknown = sorted(set(ground_truth) - set(descriptions))
    if unknown:
        logger.warning("ground truth for unknown objects ignored: %s", unknown)
    return RefinementState(descriptions, sorted(relationships, key=lambda r: r.edge_key))


# --------------------------------------------------------------------------- engine

FeedDiscovery = Callable[[str, list[dict]], list[tuple[dict, Relationship | None, str]]]


def _profile_summary(p: ColumnProfile) -> dict:
    return {"observed_rows": p.observed_rows, "distinct_count": p.distinct_count,
            "uniqueness": p.uniqueness, "null_fraction": p.null_fraction,
            "min": p.min_value, "max": p.max_value, "sample_values": list(p.sample_values)}


class RefinementEngine:
    """Runs the iteration loop over a :class:`RefinementState`, resuming where it stopped."""

    def __init__(self, facts: SchemaFacts, analyzer: Analyzer, state: RefinementState,
                 config: ConvergenceConfig = ConvergenceConfig(),
                 budget: BudgetLedger | None = None, seed_context: str = "",
                 feed_discovery: FeedDiscovery | None = None,
                 rules: SanityRules = SanityRules(), workers: int = 1,
                 checkpoint: Callable[[RefinementState], None] | None = None):
        self.facts = facts
        self.analyzer = analyzer
        self.state = state
        self.config = config
        self.budget = budget or BudgetLedger()
        self.seed_context = seed_context
        self.feed_discovery = feed_discovery
        self.rules = rules
        self.workers = max(1, workers)
        self.checkpoint = checkpoint or (lambda s: None)
        self.requests: list[AnalysisRequest] = []  # every issued request, for inspection

    # -- helpers
    def _call(self, phase: str, request: AnalysisRequest, pending: int = 0):
        self.budget.require(phase, self.budget.estimate(request), pending)
        resp = self.analyzer.analyze(request)
        self.budget.record(phase, resp.usage)
        self.requests.append(request)
        return resp

    def _optional_ok(self, phase: str, request: AnalysisRequest) -> bool:
        """Skip optional calls in warn mode; a denial still stops the run."""
        return self.budget.require(phase, self.budget.estimate(request)) != WARN

    def classify(self, old: str, new: str, subject: str) -> str:
        if not old:
            return MATERIAL
        request = AnalysisRequest(RequestKind.SEMANTIC_COMPARISON, {"old": old, "new": new},
                                  subject=subject)
        if not self._optional_ok("analysis", request):
            return exact_match_classification(old, new)
        return self._call("analysis", request).payload["classification"]

    def immutable(self, table: str) -> bool:
        return self.state.descriptions[table].immutable

    def build_context(self, table: str) -> dict:
        meta = self.facts.tables[table]
        rels = self.state.relationships
        desc = self.state.descriptions
        parents, children = parents_of(table, rels), children_of(table, rels)
        ctx = {
            "table": {"key": table, "schema": meta.schema_name, "name": meta.table_name,
                      "row_count": meta.row_count,
                      "columns": [{"name": c.name, "type": c.canonical_type.value,
                                   "nullable": c.nullable, "ordinal": c.ordinal_position}
                                  for c in meta.columns]},
            "profiles": {c: _profile_summary(p) for c, p in self.facts.profiles[table].items()},
            "primary_key": list(self.facts.primary_keys.get(table, ())),
            "foreign_keys": [{"column": r.source_columns[0], "target_table": r.target_table,
                              "target_column": r.target_columns[0]}
                             for r in rels if r.source_table == table],
            "referenced_by": [{"table": r.source_table, "column": r.source_columns[0],
                               "target_column": r.target_columns[0]}
                              for r in rels if r.target_table == table],
            "parents": {p: desc[p].text for p in parents},
            "children": {c: desc[c].text for c in children},
            "ground_truth_neighbors": {t: desc[t].text for t in parents + children
                                       if desc[t].immutable},
            "schema_tables": [{"key": k, "name": self.facts.tables[k].table_name,
                               "primary_key": list(self.facts.primary_keys.get(k, ()))}
                              for k in sorted(self.facts.tables)],
            "seed_context": self.seed_context,
            "violations": [v.to_dict() for v in self.state.violations
                           if v.table == table and v.scope == "level"],
        }
        rec = desc[table]
        if self.state.iteration > 1 and rec.text:
            reasoning = rec.history[-1]["reasoning"] if rec.history else ""
            ctx["previous"] = {"description": rec.text, "reasoning": reasoning}
        return ctx

    # -- iteration structure
    def plan_iteration(self) -> list[list[str]]:
        graph = build_dependency_graph(self.facts.tables.values(), self.state.relationships)
        queued = sorted(t for t in set(self.state.requeue) if not self.immutable(t))
        steps = [queued] if queued else []
        for level in graph.levels:
            rest = [t for t in sorted(level) if t not in queued]
            if rest:
                steps.append(rest)
        return steps

    def run(self) -> RefinementState:
        s = self.state
        while not s.finished:
            if not s.steps:
                if s.iteration >= self.config.max_iterations:
                    s.finished, s.stop_reason = True, "max_iterations"
                    self.checkpoint(s)
                    break
                s.iteration += 1
                s.steps = self.plan_iteration()
                s.completed_steps = 0
                s.requeue = []
                s.current = IterationRecord(s.iteration)
            while s.completed_steps < len(s.steps):
                self.process_step(s.steps[s.completed_steps])
                s.completed_steps += 1
                self.checkpoint(s)
            self.finish_iteration()
        return s

    def finish_iteration(self) -> None:
        s = self.state
        rec = s.current
        status = check_convergence(s.log + [rec], s.table_confidences.values(), self.config)
        rec.stable, rec.confident, rec.semantic, rec.converged = (
            status.stable, status.confident, status.semantic, status.converged)
        s.log.append(rec)
        s.current = None
        s.steps = []
        s.completed_steps = 0
        logger.info("iteration %d: %d material, %d cosmetic, %d violations; converged=%s",
                    rec.iteration, rec.material_changes, rec.cosmetic_changes, rec.violations,
                    rec.converged)
        if rec.converged:
            s.finished, s.stop_reason = True, "converged"
        elif s.iteration >= self.config.max_iterations:
            s.finished, s.stop_reason = True, "max_iterations"
        self.checkpoint(s)

    def process_step(self, batch: list[str]) -> None:
        s = self.state
        rec = s.current
        tables = [t for t in batch if not self.immutable(t)]
        requests = [AnalysisRequest(RequestKind.TABLE_ANALYSIS, self.build_context(t), subject=t)
                    for t in tables]
        # reserve the whole batch up front so a denial happens before any call in it
        pending = 0
        for r in requests:
            est = self.budget.estimate(r)
            self.budget.require("analysis", est, pending)
            pending += est
        if self.workers > 1 and len(requests) > 1:
            with ThreadPoolExecutor(self.workers) as pool:
                responses = list(pool.map(self.analyzer.analyze, requests))
        else:
            responses = [self.analyzer.analyze(r) for r in requests]
        batch_insights: list[Insight] = []
        for t, req, resp in zip(tables, requests, responses):
            self.budget.record("analysis", resp.usage)
            self.requests.append(req)
            rec.table_analyses += 1
            batch_insights.extend(self.apply_analysis(t, resp.payload))

        violations = self.sanity_check("level", batch)
        self.register_violations(violations)

        by_parent: dict[str, list[Insight]] = {}
        for ins in batch_insights:
            by_parent.setdefault(ins.about_parent, []).append(ins)
        for parent in sorted(by_parent):
            if self.immutable(parent):
                continue
            self.revise_parent(parent, by_parent[parent])

    def register_violations(self, violations: list[Violation]) -> None:
        s = self.state
        s.violations.extend(violations)
        tables = sorted({v.table for v in violations})
        s.requeue = sorted(set(s.requeue) | set(tables))
        if s.current is not None:
            s.current.violations += len(tables)

    def _record_change(self, oid: str, new_text: str, confidence: float, reasoning: str,
                       classify: bool) -> None:
        s = self.state
        rec = s.descriptions[oid]
        old = rec.text
        rec.confidence = confidence
        if new_text == old:
            rec.log(s.iteration, new_text, UNCHANGED, reasoning)
            return
        if classify:
            kind = self.classify(old, new_text, oid)
            if kind == MATERIAL:
                s.current.material_changes += 1
            else:
                s.current.cosmetic_changes += 1
            s.current.changed_tables.append(oid)
            reasoning = f"{reasoning} ({kind})"
        rec.text = new_text
        rec.log(s.iteration, new_text, CHANGED, reasoning)

    def apply_analysis(self, table: str, payload: dict) -> list[Insight]:
        s = self.state
        self._record_change(table, payload["table_description"], payload["confidence"],
                            "table analysis", classify=True)
        meta = self.facts.tables[table]
        for col in payload["columns"]:
            oid = f"{table}.{col['name']}"
            if not meta.has_column(col["name"]) or s.descriptions[oid].immutable:
                continue
            self._record_change(oid, col["description"], col["confidence"], "table analysis",
                                classify=False)

        if payload["foreign_keys"] and self.feed_discovery is not None:
            known = {r.edge_key for r in s.relationships}
            proposals = [dict(p, source_table=table) for p in payload["foreign_keys"]]
            for proposal, rel, reason in self.feed_discovery(table, proposals):
                s.proposals.append({"iteration": s.iteration, **proposal,
                                    "accepted": rel is not None, "reason": reason})
                if rel is not None and rel.edge_key not in known:
                    s.relationships.append(rel)
                    known.add(rel.edge_key)
            s.relationships.sort(key=lambda r: r.edge_key)

        parents = set(parents_of(table, s.relationships))
        out = []
        for item in payload["parent_insights"]:
            if item["parent"] not in parents:
                logger.debug("dropping insight about non-parent %s", item["parent"])
                continue
            ins = Insight(table, item["parent"], item["text"], item["confidence"], s.iteration)
            out.append(ins)
            s.insights.append(ins)
        return out

    def revise_parent(self, parent: str, insights: list[Insight]) -> None:
        s = self.state
        rec = s.descriptions[parent]
        request = AnalysisRequest(RequestKind.REVISION, {
            "parent": parent, "description": rec.text,
            "insights": [{"text": i.text, "confidence": i.confidence, "from_table": i.from_table}
                         for i in insights],
            "violations": [v.to_dict() for v in s.violations if v.table == parent],
            "seed_context": self.seed_context}, subject=parent)
        resp = self._call("analysis", request)
        s.current.revisions += 1
        p = resp.payload
        if p["needsRevision"] and p["revisedDescription"] != rec.text:
            self._record_change(parent, p["revisedDescription"], rec.confidence,
                                f"revision: {p['reasoning']}", classify=True)
        else:
            rec.log(s.iteration, rec.text, UNCHANGED, f"revision declined: {p['reasoning']}")

    def sanity_check(self, scope: str, tables: Sequence[str]) -> list[Violation]:
        """Structural rules plus the analyzer consistency check for ``scope``."""
        s = self.state
        found = structural_violations(tables, self.facts, s.relationships, s.descriptions,
                                      self.rules, scope)
        if self.rules.r5_analyzer_consistency and tables:
            kind = {"level": RequestKind.SANITY_LEVEL, "schema": RequestKind.SANITY_SCHEMA,
                    "cross-schema": RequestKind.SANITY_CROSS}[scope]
            scoped = sorted(tables)
            request = AnalysisRequest(kind, {
                "scope": scope,
                "tables": {t: s.descriptions[t].text for t in scoped},
                "relationships": [r.label() for r in s.relationships
                                  if r.source_table in scoped or r.target_table in scoped],
                "seed_context": self.seed_context}, subject=scope, effort="high")
            if self._optional_ok("sanity", request):
                resp = self._call("sanity", request)
                known = set(self.facts.tables)
                found.extend(Violation(v["table"], v["rule"], v["message"], scope)
                             for v in resp.payload["violations"] if v["table"] in known)
        return found


def first_iteration_containing(record: DescriptionRecord, token: str) -> int | None:
    """First iteration whose logged text contains ``token`` (trace helper)."""
    pattern = re.compile(re.escape(token))
    for h in record.history:
        if pattern.search(h["text"]):
            return h["iteration"]
    return None
