"""Persisted pipeline state (``state.json``)."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .fk import FKCandidate
from .model import Origin, Relationship, TableMeta
from .pk import PKCandidate
from .refine import RefinementState, Violation
from .stats import ColumnProfile

STATE_VERSION = "1"
PHASE_NAMES = ("ingestion", "discovery", "analysis", "sanity", "outputs")
PENDING, IN_PROGRESS, COMPLETE = "pending", "in_progress", "complete"


@dataclass
class RunState:
    run_number: int
    config: dict
    config_digest: str
    seed: int
    phase_status: dict[str, str] = field(
        default_factory=lambda: {p: PENDING for p in PHASE_NAMES})
    tables: list[TableMeta] = field(default_factory=list)
    profiles: dict[str, dict[str, ColumnProfile]] = field(default_factory=dict)
    primary_keys: dict[str, tuple[str, ...]] = field(default_factory=dict)
    pk_candidates: dict[str, list[PKCandidate]] = field(default_factory=dict)
    fk_candidates: list[FKCandidate] = field(default_factory=list)
    fk_adaptive: bool = False
    fk_k0_fraction: float = 0.0
    pruning: list[dict] = field(default_factory=list)
    discovered_relationships: list[Relationship] = field(default_factory=list)
    refinement: RefinementState | None = None
    final_violations: list[Violation] = field(default_factory=list)
    counters: dict = field(default_factory=dict)
    elapsed_seconds: float = 0.0
    events: list[dict] = field(default_factory=list)

    # -- views
    def table_map(self) -> dict[str, TableMeta]:
        return {t.key: t for t in self.tables}

    @property
    def relationships(self) -> list[Relationship]:
        """Final relationship set: the refined one when available."""
        if self.refinement is not None:
            return list(self.refinement.relationships)
        return list(self.discovered_relationships)

    def description(self, object_id: str):
        if self.refinement is None:
            return None
        return self.refinement.descriptions.get(object_id)

    def discovered(self, include_ground_truth: bool = False) -> list[Relationship]:
        return [r for r in self.relationships
                if include_ground_truth or r.origin is not Origin.GROUND_TRUTH]

    # -- serialization
    def to_dict(self) -> dict:
        return {
            "format_version": STATE_VERSION,
            "run_number": self.run_number,
            "config": self.config,
            "config_digest": self.config_digest,
            "seed": self.seed,
            "phase_status": dict(self.phase_status),
            "tables": [t.to_dict() for t in self.tables],
            "profiles": {t: {c: p.to_dict() for c, p in cols.items()}
                         for t, cols in self.profiles.items()},
            "primary_keys": {t: list(c) for t, c in self.primary_keys.items()},
            "pk_candidates": {t: [c.to_dict() for c in cs] for t, cs in self.pk_candidates.items()},
            "fk_candidates": [c.to_dict() for c in self.fk_candidates],
            "fk_adaptive": self.fk_adaptive,
            "fk_k0_fraction": self.fk_k0_fraction,
            "pruning": list(self.pruning),
            "discovered_relationships": [r.to_dict() for r in self.discovered_relationships],
            "refinement": self.refinement.to_dict() if self.refinement else None,
            "final_violations": [v.to_dict() for v in self.final_violations],
            "counters": self.counters,
            "elapsed_seconds": self.elapsed_seconds,
            "events": list(self.events),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "RunState":
        if d.get("format_version") != STATE_VERSION:
            raise ValueError(f"unsupported state version {d.get('format_version')!r}")
        tables = [TableMeta.from_dict(t) for t in d["tables"]]
        order = {t.key: [c.name for c in t.columns] for t in tables}
        profiles = {}
        for t, cols in d["profiles"].items():
            names = order.get(t, sorted(cols))
            profiles[t] = {c: ColumnProfile.from_dict(cols[c]) for c in names if c in cols}
        return cls(
            run_number=d["run_number"],
            config=d["config"],
            config_digest=d["config_digest"],
            seed=d["seed"],
            phase_status=dict(d["phase_status"]),
            tables=tables,
            profiles=profiles,
            primary_keys={t: tuple(c) for t, c in d["primary_keys"].items()},
            pk_candidates={t: [PKCandidate.from_dict(c) for c in cs]
                           for t, cs in d["pk_candidates"].items()},
            fk_candidates=[FKCandidate.from_dict(c) for c in d["fk_candidates"]],
            fk_adaptive=d["fk_adaptive"],
            fk_k0_fraction=d["fk_k0_fraction"],
            pruning=list(d["pruning"]),
            discovered_relationships=[Relationship.from_dict(r)
                                      for r in d["discovered_relationships"]],
            refinement=(RefinementState.from_dict(d["refinement"])
                        if d["refinement"] else None),
            final_violations=[Violation.from_dict(v) for v in d["final_violations"]],
            counters=d["counters"],
            elapsed_seconds=d["elapsed_seconds"],
            events=list(d["events"]),
        )

    @classmethod
    def from_json(cls, text: str) -> "RunState":
        return cls.from_dict(json.loads(text))

    def save(self, path: str | Path) -> None:
        path = Path(path)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(self.to_json(), encoding="utf-8")
        tmp.replace(path)

    @classmethod
    def load(cls, path: str | Path) -> "RunState":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))
