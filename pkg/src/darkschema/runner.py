"""Pipeline orchestration: config, phases, checkpoints, guardrail stops and resume."""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

from .analyzer import AnalysisRequest, Analyzer, HttpAnalyzer, MockAnalyzer, RequestKind
from .fk import DiscoveryContext, discover_foreign_keys, estimate_fk_likelihood, \
    provisional_primary_keys, validate_proposed_fk
from .guardrails import DENY, WARN, BudgetExceeded, BudgetLedger, Guardrails
from .ingest import DEFAULT_SAMPLE_SIZE, SchemaSnapshot, load_snapshot, sample_rows
from .model import Origin, Relationship
from .outputs import write_outputs
from .pk import PK_NAME_PATTERN, PK_THRESHOLD, discover_primary_keys, matches_pk_pattern
from .refine import (ConvergenceConfig, RefinementEngine, SanityRules, SchemaFacts,
                     initial_state)
from .state import COMPLETE, IN_PROGRESS, PHASE_NAMES, RunState
from .stats import profile_table

logger = logging.getLogger(__name__)

STATE_FILE = "state.json"
OUTPUT_DIR = "outputs"
# keys that may change between a run and its resume
NON_SEMANTIC_KEYS = ("guardrails", "outputs", "workers", "outputRoot")


class ConfigError(ValueError):
    pass


class ResumeError(RuntimeError):
    pass


# --------------------------------------------------------------------------- config

@dataclass(frozen=True)
class RunConfig:
    raw: dict
    base_dir: Path

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(raw, path.parent)

    @classmethod
    def from_dict(cls, raw: dict, base_dir: str | Path = ".") -> "RunConfig":
        if "snapshot" not in raw:
            raise ConfigError("config needs a 'snapshot' manifest path")
        raw = copy.deepcopy(raw)
        base = Path(base_dir).resolve()
        raw["snapshot"] = str((base / raw["snapshot"]).resolve())
        gt = raw.get("groundTruth") or {}
        if "descriptionsFile" in gt:
            gt["descriptionsFile"] = str((base / gt["descriptionsFile"]).resolve())
        raw["outputRoot"] = str((base / raw.get("outputRoot", "runs")).resolve())
        return cls(raw, base)

    def get(self, *path, default=None):
        node = self.raw
        for p in path:
            if not isinstance(node, dict) or p not in node:
                return default
            node = node[p]
        return node

    @property
    def digest(self) -> str:
        semantic = {k: v for k, v in self.raw.items() if k not in NON_SEMANTIC_KEYS}
        return hashlib.sha256(json.dumps(semantic, sort_keys=True).encode()).hexdigest()

    @property
    def seed(self) -> int:
        return int(self.raw.get("seed", 42))

    @property
    def guardrails(self) -> Guardrails:
        return Guardrails.from_config(self.raw.get("guardrails"))

    @property
    def convergence(self) -> ConvergenceConfig:
        c = self.raw.get("convergence") or {}
        return ConvergenceConfig(c.get("window", 2), c.get("confidenceThreshold", 0.6),
                                 c.get("maxIterations", 3))

    @property
    def ground_truth_descriptions(self) -> dict[str, str]:
        gt = self.raw.get("groundTruth") or {}
        out = {}
        if "descriptionsFile" in gt:
            out.update(json.loads(Path(gt["descriptionsFile"]).read_text(encoding="utf-8")))
        out.update(gt.get("descriptions", {}))
        return out

    def with_overrides(self, **changes) -> "RunConfig":
        raw = copy.deepcopy(self.raw)
        for dotted, value in changes.items():
            node = raw
            keys = dotted.split(".")
            for k in keys[:-1]:
                node = node.setdefault(k, {})
            node[keys[-1]] = value
        return RunConfig(raw, self.base_dir)


def make_analyzer(config: RunConfig) -> Analyzer:
    a = config.raw.get("analyzer") or {"kind": "mock"}
    kind = a.get("kind", "mock")
    if kind == "mock":
        return MockAnalyzer()
    if kind == "http":
        if "endpoint" not in a or "model" not in a:
            raise ConfigError("http analyzer needs 'endpoint' and 'model'")
        return HttpAnalyzer(a["endpoint"], a["model"], a.get("apiKeyEnv", "DARKSCHEMA_API_KEY"),
                            max_retries=a.get("maxRetries", 3),
                            timeout=a.get("timeoutSeconds", 60.0),
                            template_dir=a.get("templateDir"))
    raise ConfigError(f"unknown analyzer kind {kind!r}")


def next_run_number(root: str | Path) -> int:
    root = Path(root)
    nums = [int(m.group(1)) for p in root.glob("run-*")
            if (m := re.fullmatch(r"run-(\d+)", p.name)) and p.is_dir()]
    return max(nums, default=0) + 1


# --------------------------------------------------------------------------- orchestrator

@dataclass
class RunResult:
    state: RunState
    run_dir: Path
    completed: bool
    breach: dict | None = None

    @property
    def outputs_dir(self) -> Path:
        return self.run_dir / OUTPUT_DIR


@dataclass
class Orchestrator:
    config: RunConfig
    run_dir: Path
    state: RunState
    analyzer: Analyzer | None = None
    on_checkpoint: Callable[[str, RunState], None] | None = None
    dry_run: bool = False
    snapshot: SchemaSnapshot | None = field(default=None, repr=False)

    def __post_init__(self):
        self.analyzer = self.analyzer or make_analyzer(self.config)
        self.budget = BudgetLedger(self.config.guardrails,
                                   BudgetLedger.counters_from_dict(self.state.counters),
                                   elapsed_offset=self.state.elapsed_seconds)
        self._last_checkpoint = self.state.to_json()

    # -- persistence
    @property
    def state_path(self) -> Path:
        return self.run_dir / STATE_FILE

    def checkpoint(self, label: str) -> None:
        self.state.counters = self.budget.counters_dict()
        self.state.elapsed_seconds = round(self.budget.elapsed, 3)
        text = self.state.to_json()
        tmp = self.state_path.with_suffix(".tmp")
        tmp.write_text(text, encoding="utf-8")
        tmp.replace(self.state_path)
        self._last_checkpoint = text
        logger.debug("checkpoint %s", label)
        if self.on_checkpoint is not None:
            self.on_checkpoint(label, self.state)

    def _set_phase(self, phase: str, status: str) -> None:
        self.state.phase_status[phase] = status

    # -- phases
    def load(self) -> SchemaSnapshot:
        if self.snapshot is None:
            c = self.config
            self.snapshot = load_snapshot(c.raw["snapshot"], c.get("schemas", "include", default=()),
                                          c.get("schemas", "exclude", default=()),
                                          c.get("tables", "exclude", default=()))
        return self.snapshot

    def samples(self) -> dict[str, list[tuple]]:
        snap = self.load()
        size = int(self.config.raw.get("sampleSize", DEFAULT_SAMPLE_SIZE))
        return {k: sample_rows(snap.rows(k), size, self.state.seed, k) for k in snap.table_keys}

    def phase_ingestion(self) -> None:
        snap = self.load()
        samples = self.samples()
        threshold = self.config.raw.get("cardinalityThreshold")
        self.state.tables = list(snap.tables)
        self.state.profiles = {t.key: profile_table(t, samples[t.key], threshold)
                               for t in snap.tables}

    def _discovery_call(self, request: AnalysisRequest):
        decision = self.budget.precheck("discovery", self.budget.estimate(request))
        if decision == DENY:
            raise BudgetExceeded("discovery", "pruning call would exceed the discovery budget")
        if decision == WARN:
            return None  # pruning is optional
        resp = self.analyzer.analyze(request)
        self.budget.record("discovery", resp.usage)
        return resp

    def discovery_context(self) -> DiscoveryContext:
        snap = self.load()
        return DiscoveryContext(
            tables={t.key: t for t in self.state.tables},
            profiles=self.state.profiles,
            sample_rows=self.samples(),
            full_values=snap.column_values,
            pk_columns=dict(self.state.primary_keys),
            seed=self.state.seed,
            threshold=self.config.get("discovery", "fkThreshold", default=60.0),
        )

    def phase_discovery(self) -> None:
        st, cfg = self.state, self.config
        snap = self.load()
        samples = self.samples()
        pattern = cfg.get("discovery", "pkNamePattern", default=PK_NAME_PATTERN)
        heuristics = cfg.get("discovery", "positionHeuristics", default=True)
        pruning = cfg.get("discovery", "analyzerPruning", default=True)
        tables = sorted(st.tables, key=lambda t: t.key)

        provisional = provisional_primary_keys(tables, st.profiles,
                                               lambda n: matches_pk_pattern(n, pattern))
        likelihood = estimate_fk_likelihood(tables, st.profiles, provisional)
        st.primary_keys, st.pk_candidates = {}, {}
        for t in tables:
            full = snap.rows(t.key)
            res = discover_primary_keys(
                t, st.profiles[t.key], samples[t.key],
                full_rows=full if len(samples[t.key]) < len(full) else None,
                fk_likelihood=likelihood[t.key],
                threshold=cfg.get("discovery", "pkThreshold", default=PK_THRESHOLD),
                position_heuristics=heuristics, pattern=pattern)
            st.pk_candidates[t.key] = list(res.candidates)
            accepted = [c for c in res.candidates if c.accepted and not c.suppressed]
            selected = res.selected
            if pruning and len(accepted) > 1:
                resp = self._discovery_call(AnalysisRequest(RequestKind.PK_PRUNING, {
                    "table": t.key, "candidates": [{"columns": list(c.columns), "score": c.score}
                                                   for c in accepted]}, subject=t.key))
                if resp is not None:
                    keep = {tuple(k) for k in resp.payload["keep"]}
                    kept = [c for c in accepted if c.columns in keep] or accepted
                    selected = min(kept, key=lambda c: (-c.score, min(c.positions),
                                                        len(c.columns), c.columns))
                    st.pruning.append({"kind": "pk", "table": t.key,
                                       "kept": [list(c.columns) for c in kept]})
            if selected is not None:
                st.primary_keys[t.key] = selected.columns

        ctx = self.discovery_context()
        result = discover_foreign_keys(ctx)
        candidates = list(result.candidates)
        if pruning:
            by_source: dict[tuple, list] = {}
            for c in candidates:
                if c.accepted:
                    by_source.setdefault((c.source_table, c.source_column), []).append(c)
            for (src_t, src_c), group in sorted(by_source.items()):
                if len(group) < 2:
                    continue
                resp = self._discovery_call(AnalysisRequest(RequestKind.FK_PRUNING, {
                    "source_table": src_t, "source_column": src_c,
                    "candidates": [{"target_table": c.target_table,
                                    "target_column": c.target_column, "score": c.score}
                                   for c in group]}, subject=f"{src_t}.{src_c}"))
                if resp is None:
                    continue
                keep = {(k["target_table"], k["target_column"]) for k in resp.payload["keep"]}
                if not keep & {(c.target_table, c.target_column) for c in group}:
                    continue
                st.pruning.append({"kind": "fk", "source": f"{src_t}.{src_c}",
                                   "kept": sorted(f"{t}.{c}" for t, c in keep)})
                for i, c in enumerate(candidates):
                    if c in group and (c.target_table, c.target_column) not in keep:
                        candidates[i] = replace(c, accepted=False, dropped="analyzer pruning")
        st.fk_candidates = candidates
        st.fk_adaptive, st.fk_k0_fraction = result.adaptive, result.k0_fraction
        rels = [Relationship(c.source_table, (c.source_column,), c.target_table,
                             (c.target_column,), min(100.0, c.score), Origin.STATISTICAL)
                for c in candidates if c.accepted]
        for g in cfg.get("groundTruth", "relationships", default=[]) or []:
            rels.append(Relationship(g["source_table"], (g["source_column"],), g["target_table"],
                                     (g["target_column"],), 100.0, Origin.GROUND_TRUTH))
        uniq = {r.edge_key: r for r in rels}
        st.discovered_relationships = [uniq[k] for k in sorted(uniq)]

    def _facts(self) -> SchemaFacts:
        st = self.state
        return SchemaFacts(
            tables={t.key: t for t in st.tables}, profiles=st.profiles,
            primary_keys=dict(st.primary_keys),
            accepted_pk_candidates={t: [c.columns for c in cs if c.accepted and not c.suppressed]
                                    for t, cs in st.pk_candidates.items()})

    def seed_context(self) -> str:
        text = self.config.raw.get("seedContext", "") or ""
        existing = self.load().existing_descriptions
        if existing:
            notes = "\n".join(f"Existing comment on {k}: {v}" for k, v in sorted(existing.items()))
            text = f"{text}\n{notes}" if text else notes
        return text

    def feed_discovery(self, table: str, proposals: list[dict]):
        ctx = self.discovery_context()
        out = []
        for p in proposals:
            cand = validate_proposed_fk(ctx, table, p["source_column"], p["target_table"],
                                        p["target_column"], self.state.fk_adaptive)
            if cand.accepted:
                rel = Relationship(table, (p["source_column"],), p["target_table"],
                                   (p["target_column"],), min(100.0, cand.score),
                                   Origin.ANALYZER_PROPOSED)
                out.append((p, rel, f"accepted with score {cand.score:.2f}"))
            else:
                reason = cand.dropped or (f"gate {cand.failed_gate}" if cand.failed_gate
                                          else f"score {cand.score:.2f} below threshold")
                out.append((p, None, reason))
        return out

    def engine(self) -> RefinementEngine:
        st = self.state
        if st.refinement is None:
            st.refinement = initial_state(self._facts(), st.discovered_relationships,
                                          self.config.ground_truth_descriptions)
        return RefinementEngine(
            self._facts(), self.analyzer, st.refinement, self.config.convergence, self.budget,
            seed_context=self.seed_context(), feed_discovery=self.feed_discovery,
            rules=SanityRules.from_config(self.config.raw.get("sanityRules")),
            workers=int(self.config.raw.get("workers", 1)),
            checkpoint=lambda s: self.checkpoint(
                f"analysis:iteration-{s.iteration}:"
                + (f"step-{s.completed_steps}" if s.steps else "end")))

    def phase_analysis(self) -> None:
        self.engine().run()

    def phase_sanity(self) -> None:
        eng = self.engine()
        found = []
        schemas: dict[str, list[str]] = {}
        for t in self.state.tables:
            schemas.setdefault(t.schema_name, []).append(t.key)
        for s in sorted(schemas):
            found += eng.sanity_check("schema", schemas[s])
        if len(schemas) > 1:
            found += eng.sanity_check("cross-schema", sorted(t.key for t in self.state.tables))
        self.state.final_violations = found

    def phase_outputs(self) -> None:
        write_outputs(self.state, self.run_dir / OUTPUT_DIR, self.config.raw.get("outputs"))

    # -- driver
    def run(self) -> RunResult:
        phases = [("ingestion", self.phase_ingestion), ("discovery", self.phase_discovery),
                  ("analysis", self.phase_analysis), ("sanity", self.phase_sanity),
                  ("outputs", self.phase_outputs)]
        if self.dry_run:
            phases = phases[:2] + [phases[-1]]
        try:
            for name, fn in phases:
                if self.state.phase_status[name] == COMPLETE:
                    continue
                self._set_phase(name, IN_PROGRESS)
                fn()
                self._set_phase(name, COMPLETE)
                self.checkpoint(f"phase:{name}")
        except BudgetExceeded as exc:
            return self._stop(exc)
        done = all(self.state.phase_status[p] == COMPLETE for p, _ in phases)
        return RunResult(self.state, self.run_dir, done)

    def _stop(self, exc: BudgetExceeded) -> RunResult:
        """Persist the last checkpoint plus a breach record; discard partial work."""
        spent = self.budget.counters_dict()
        state = RunState.from_json(self._last_checkpoint)
        abandoned = {p: {k: spent[p][k] - state.counters.get(p, {}).get(k, 0) for k in spent[p]}
                     for p in spent}
        breach = {"event": "guardrail_breach", "phase": exc.phase, "reason": exc.reason,
                  "abandoned_usage": abandoned}
        state.events.append(breach)
        state.save(self.state_path)
        logger.warning("run stopped by guardrail: %s", exc)
        return RunResult(state, self.run_dir, False, breach)


def orchestrate(config: RunConfig | str | Path, analyzer: Analyzer | None = None,
                on_checkpoint: Callable[[str, RunState], None] | None = None,
                dry_run: bool = False, max_iterations: int | None = None) -> RunResult:
    """Start a fresh numbered run."""
    if not isinstance(config, RunConfig):
        config = RunConfig.load(config)
    if max_iterations is not None:
        config = config.with_overrides(**{"convergence.maxIterations": max_iterations})
    root = Path(config.raw["outputRoot"])
    root.mkdir(parents=True, exist_ok=True)
    number = next_run_number(root)
    run_dir = root / f"run-{number}"
    run_dir.mkdir()
    state = RunState(number, config.raw, config.digest, config.seed)
    orch = Orchestrator(config, run_dir, state, analyzer, on_checkpoint, dry_run)
    orch.checkpoint("start")
    return orch.run()


def resume(state_path: str | Path, config: RunConfig | str | Path | None = None,
           analyzer: Analyzer | None = None,
           on_checkpoint: Callable[[str, RunState], None] | None = None) -> RunResult:
    """Continue a run from its earliest incomplete phase.

    ``config`` may supply new guardrails or output toggles; anything else must match
    the digest recorded in the state file.
    """
    state_path = Path(state_path)
    state = RunState.load(state_path)
    stored = RunConfig(state.config, Path(state.config["snapshot"]).parent)
    if config is None:
        config = stored
    elif not isinstance(config, RunConfig):
        config = RunConfig.load(config)
    if config.digest != state.config_digest:
        raise ResumeError("config digest mismatch: the analysis settings differ from the "
                          "interrupted run (only guardrails, outputs, workers and outputRoot "
                          "may change on resume)")
    state.config = config.raw
    state.events.append({"event": "resume"})
    orch = Orchestrator(config, state_path.parent, state, analyzer, on_checkpoint)
    return orch.run()


__all__ = ["ConfigError", "Orchestrator", "ResumeError", "RunConfig", "RunResult",
           "next_run_number", "orchestrate", "resume", "PHASE_NAMES"]
