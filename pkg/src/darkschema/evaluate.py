"""Key-discovery and coverage metrics against a truth file."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field

from .ingest import KeyTruth
from .state import RunState

logger = logging.getLogger(__name__)

SCORE_WEIGHTS = {"fk_f1": 0.35, "pk_f1": 0.30, "table_coverage": 0.20, "column_coverage": 0.15}
GRADE_BANDS = ((0.95, "A+"), (0.90, "A"), (0.85, "B+"), (0.80, "B"))
COVERAGE_MIN_CONFIDENCE = 0.5


def normalize_identifier(name: str) -> str:
    """Case-insensitive, whitespace-collapsed identifier used for matching."""
    return re.sub(r"\s+", " ", name.strip()).lower()


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float
    true_positives: tuple = ()
    false_positives: tuple = ()
    false_negatives: tuple = ()

    def to_dict(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1,
                "true_positives": [list(x) if isinstance(x, tuple) else x
                                   for x in self.true_positives],
                "false_positives": [list(x) if isinstance(x, tuple) else x
                                    for x in self.false_positives],
                "false_negatives": [list(x) if isinstance(x, tuple) else x
                                    for x in self.false_negatives]}


def f1_score(precision: float, recall: float) -> float:
    return 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)


def precision_recall(detected: set, truth: set) -> PRF:
    tp = detected & truth
    p = len(tp) / len(detected) if detected else 0.0
    r = len(tp) / len(truth) if truth else 0.0
    return PRF(p, r, f1_score(p, r), tuple(sorted(tp, key=repr)),
               tuple(sorted(detected - truth, key=repr)), tuple(sorted(truth - detected, key=repr)))


def overall_score(fk_f1: float, pk_f1: float, table_coverage: float,
                  column_coverage: float) -> float:
    w = SCORE_WEIGHTS
    return (w["fk_f1"] * fk_f1 + w["pk_f1"] * pk_f1 + w["table_coverage"] * table_coverage
            + w["column_coverage"] * column_coverage)


def grade(score: float) -> str:
    for floor, letter in GRADE_BANDS:
        if score >= floor:
            return letter
    return "C"


@dataclass(frozen=True)
class EvalReport:
    pk: PRF
    fk: PRF
    table_coverage: float
    column_coverage: float
    overall: float
    grade: str
    warnings: tuple[str, ...] = field(default=())

    def to_dict(self) -> dict:
        return {"pk": self.pk.to_dict(), "fk": self.fk.to_dict(),
                "table_coverage": self.table_coverage, "column_coverage": self.column_coverage,
                "overall": self.overall, "grade": self.grade, "warnings": list(self.warnings)}

    @classmethod
    def from_components(cls, pk: PRF, fk: PRF, table_coverage: float, column_coverage: float,
                        warnings=()) -> "EvalReport":
        s = overall_score(fk.f1, pk.f1, table_coverage, column_coverage)
        return cls(pk, fk, table_coverage, column_coverage, s, grade(s), tuple(warnings))


def _pk_items(pks: dict[str, tuple[str, ...]]) -> set:
    return {(normalize_identifier(t), tuple(sorted(normalize_identifier(c) for c in cols)))
            for t, cols in pks.items() if cols}


def _fk_item(src_t, src_c, tgt_t, tgt_c) -> frozenset:
    return frozenset({(normalize_identifier(src_t), normalize_identifier(src_c)),
                      (normalize_identifier(tgt_t), normalize_identifier(tgt_c))})


def coverage(state: RunState) -> tuple[float, float]:
    """Fractions of tables / columns carrying a non-empty description with confidence >= 0.5."""
    def covered(oid: str) -> bool:
        rec = state.description(oid)
        return rec is not None and bool(rec.text) and rec.confidence >= COVERAGE_MIN_CONFIDENCE
    tables = [t.key for t in state.tables]
    columns = [f"{t.key}.{c.name}" for t in state.tables for c in t.columns]
    ct = sum(map(covered, tables)) / len(tables) if tables else 0.0
    cc = sum(map(covered, columns)) / len(columns) if columns else 0.0
    return ct, cc


def compare(state: RunState, truth: KeyTruth) -> EvalReport:
    known = {normalize_identifier(t.key) for t in state.tables}
    warnings = []
    for t in sorted(truth.primary_keys):
        if normalize_identifier(t) not in known:
            warnings.append(f"truth primary key on unknown table {t}")
    for r in truth.foreign_keys:
        for t in (r.source_table, r.target_table):
            if normalize_identifier(t) not in known:
                warnings.append(f"truth foreign key {r.label()} references unknown table {t}")
    for w in warnings:
        logger.warning(w)

    pk = precision_recall(_pk_items(state.primary_keys), _pk_items(truth.primary_keys))
    detected_fk = {_fk_item(r.source_table, r.source_columns[0], r.target_table,
                            r.target_columns[0]) for r in state.discovered()}
    truth_fk = {_fk_item(r.source_table, r.source_columns[0], r.target_table, r.target_columns[0])
                for r in truth.foreign_keys}
    fk = precision_recall(detected_fk, truth_fk)
    fk = PRF(fk.precision, fk.recall, fk.f1,
             *(tuple(sorted(tuple(sorted(x)) for x in items))
               for items in (fk.true_positives, fk.false_positives, fk.false_negatives)))
    ct, cc = coverage(state)
    return EvalReport.from_components(pk, fk, ct, cc, warnings)


def format_report(report: EvalReport) -> str:
    lines = [
        f"PK  precision {report.pk.precision:.3f}  recall {report.pk.recall:.3f}  "
        f"F1 {report.pk.f1:.3f}",
        f"FK  precision {report.fk.precision:.3f}  recall {report.fk.recall:.3f}  "
        f"F1 {report.fk.f1:.3f}",
        f"Table coverage {report.table_coverage:.3f}  column coverage "
        f"{report.column_coverage:.3f}",
        f"Overall {report.overall:.4f} ({report.grade})",
    ]
    lines += [f"warning: {w}" for w in report.warnings]
    return "\n".join(lines)


__all__ = ["EvalReport", "PRF", "compare", "coverage", "f1_score", "format_report", "grade",
           "overall_score", "precision_recall"]
