"""Evaluation: precision/recall, the weighted overall score and grades."""

from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from conftest import FIXTURES
from oracles import oracle_overall

from darkschema.evaluate import (PRF, EvalReport, compare, f1_score, format_report, grade,
                                 overall_score, precision_recall)
from darkschema.ingest import KeyTruth, load_truth
from darkschema.model import Origin, Relationship


# (label, fk F1, pk F1, table cov, column cov, published percentage, published grade)
PUBLISHED = [
    ("cross-model, first column", 0.942, 0.950, 0.99, 0.99, 96.1, "A+"),
    ("cross-model, second column", 0.779, 0.894, 0.97, 0.96, 87.9, "B+"),
    ("cross-model, third column", 0.930, 0.950, 1.00, 1.00, 96.1, "A+"),
    ("cross-database, second row", 0.952, 0.952, 1.00, 1.00, 96.9, "A+"),
    ("cross-database, third row", 0.750, 0.727, 1.00, 1.00, 83.1, "B"),
]


@pytest.mark.parametrize("label,fk,pk,ct,cc,pct,letter", PUBLISHED)
def test_published_scores(label, fk, pk, ct, cc, pct, letter):
    s = overall_score(fk, pk, ct, cc)
    assert s == pytest.approx(oracle_overall(fk, pk, ct, cc), abs=1e-12)
    # published to one decimal place
    assert abs(100 * s - pct) <= 0.05 + 1e-9, (label, s)
    assert grade(s) == letter


def test_exact_cross_check():
    assert overall_score(0.942, 0.950, 0.99, 0.99) == pytest.approx(0.9612, abs=1e-9)


@pytest.mark.parametrize("score,letter", [(0.95, "A+"), (0.9499, "A"), (0.90, "A"),
                                          (0.85, "B+"), (0.80, "B"), (0.7999, "C")])
def test_grade_bands(score, letter):
    assert grade(score) == letter


def test_nine_of_ten_with_one_spurious():
    truth = {("s", i) for i in range(10)}
    detected = {("s", i) for i in range(9)} | {("x", 0)}
    prf = precision_recall(detected, truth)
    assert (prf.precision, prf.recall) == (0.9, 0.9)
    assert prf.f1 == pytest.approx(0.9)
    assert prf.false_positives == (("x", 0),) and prf.false_negatives == (("s", 9),)


sets = st.sets(st.integers(0, 12), max_size=10)


@given(sets, sets)
def test_f1_symmetric_in_precision_and_recall(a, b):
    ab, ba = precision_recall(a, b), precision_recall(b, a)
    assert (ab.precision, ab.recall) == (ba.recall, ba.precision)
    assert ab.f1 == pytest.approx(ba.f1)
    assert f1_score(ab.precision, ab.recall) == f1_score(ab.recall, ab.precision)


def test_compare_on_lousy8(lousy8_run):
    truth = load_truth(FIXTURES / "lousy8" / "truth.json")
    report = compare(lousy8_run.state, truth)
    assert report.pk.f1 == 1.0 and report.fk.f1 == 1.0
    assert report.table_coverage == 1.0 and report.column_coverage == 1.0
    assert report.grade == "A+" and "Overall 1.0000 (A+)" in format_report(report)


def test_fk_direction_and_case_do_not_matter(lousy8_run):
    truth = load_truth(FIXTURES / "lousy8" / "truth.json")
    flipped = KeyTruth({k.upper(): v for k, v in truth.primary_keys.items()},
                       tuple(Relationship(r.target_table, r.target_columns, r.source_table,
                                          r.source_columns, 100.0, Origin.DECLARED)
                             for r in truth.foreign_keys))
    assert compare(lousy8_run.state, flipped).overall == compare(lousy8_run.state, truth).overall


def test_unknown_truth_tables_warn(lousy8_run):
    truth = KeyTruth({"dbo.ghost": ("id",)}, ())
    report = compare(lousy8_run.state, truth)
    assert report.warnings and "dbo.ghost" in report.warnings[0]


def test_report_from_components():
    r = EvalReport.from_components(PRF(1, 1, 1), PRF(0.5, 0.5, 0.5), 1.0, 0.0)
    assert r.overall == pytest.approx(0.35 * 0.5 + 0.30 + 0.20)
