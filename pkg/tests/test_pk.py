"""Primary-key scoring, filters and position heuristics."""

from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from conftest import manifest
from oracles import f_of_u, oracle_pk_score, phi

from darkschema.ingest import load_snapshot
from darkschema.model import CanonicalType, ColumnMeta, TableMeta
from darkschema.pk import (PKCandidate, apply_position_heuristics, discover_primary_keys,
                           generate_pk_candidates, hard_reject, pk_score, position_multiplier,
                           recompute_score, score_pk, type_factor, uniqueness_factor)
from darkschema.stats import ColumnProfile, profile_table


def prof(name, ctype=CanonicalType.INT, u=1.0, nulls=0.0, blank=0.0, lo=1, hi=100, samples=()):
    distinct = round(u * 100)
    return ColumnProfile(name, ctype, 100, 100, distinct, u, nulls, blank, lo, hi, (),
                         samples or tuple(range(1, 11)), None, False, 3, True)


def tbl(name, *cols):
    return TableMeta("dbo", name, tuple(ColumnMeta(c, i, t) for i, (c, t) in enumerate(cols)), 100)


def test_position_steps():
    assert [position_multiplier(p) for p in range(6)] == [1.0, 0.85, 0.70, 0.55, 0.55, 0.55]
    assert [position_multiplier(p) for p in range(6)] == [phi(p) for p in range(6)]


@pytest.mark.parametrize("ctype,d", [
    (CanonicalType.INT, 1.0), (CanonicalType.BIGINT, 1.0), (CanonicalType.SMALLINT, 1.0),
    (CanonicalType.UUID, 1.0), (CanonicalType.VARCHAR, 0.6), (CanonicalType.TEXT, 0.2),
    (CanonicalType.BINARY, 0.2), (CanonicalType.DATE, 0.3), (CanonicalType.DECIMAL, 0.3)])
def test_type_factor(ctype, d):
    assert type_factor(ctype) == d


@given(st.floats(0, 1))
def test_uniqueness_factor_matches_oracle(u):
    assert uniqueness_factor(u) == pytest.approx(f_of_u(u), abs=1e-12)


def test_all_factors_maximal_scores_100():
    t = tbl("cst", ("cst_id", CanonicalType.INT))
    c = score_pk(PKCandidate(t.key, ("cst_id",), (0,), 1.0), t, {"cst_id": prof("cst_id")})
    assert c.score == 100.0 and c.accepted


def test_atypical_unique_name_halves():
    assert pk_score(1.0, 0.0, 1.0, 1.0, [0.5]) == 40.0
    t = tbl("x", ("serial", CanonicalType.INT))
    c = score_pk(PKCandidate(t.key, ("serial",), (0,), 1.0), t, {"serial": prof("serial")})
    assert c.score == 40.0 and not c.accepted
    assert c.penalties == (("atypical_name", 0.5),)


def test_recompute_from_factors():
    t = tbl("cst", ("a", CanonicalType.INT), ("ref_id", CanonicalType.VARCHAR))
    c = score_pk(PKCandidate(t.key, ("ref_id",), (1,), 0.97), t,
                 {"ref_id": prof("ref_id", CanonicalType.VARCHAR, 0.97, samples=("A1", "B2"))}, 0.25)
    assert recompute_score(c) == pytest.approx(c.score, abs=1e-12)
    assert c.score == pytest.approx(oracle_pk_score(0.97, "ref_id", "cst", "VARCHAR", 10 / 15,
                                                    0.0, 0.25, 1), abs=1e-9)


@pytest.mark.parametrize("name,expected", [("cst_id", 100.0), ("id", 100.0)])
def test_surrogate_boost_applies(name, expected):
    t = tbl("cst", (name, CanonicalType.INT))
    c = score_pk(PKCandidate(t.key, (name,), (0,), 1.0), t, {name: prof(name, lo=5, hi=900)})
    assert c.surrogate_boost == 20.0 and c.score == expected


@given(st.floats(0.95, 1.0), st.floats(0.95, 1.0), st.sampled_from(["id", "ref_id", "ref"]),
       st.floats(0, 1), st.integers(0, 6))
def test_monotone_in_high_uniqueness(u1, u2, name, ell, pos):
    lo, hi = sorted((u1, u2))
    a = oracle_pk_score(lo, name, "t", "INT", 1.0, 0.0, ell, pos)
    b = oracle_pk_score(hi, name, "t", "INT", 1.0, 0.0, ell, pos)
    assert b >= a
    cols = [(f"c{i}", CanonicalType.INT) for i in range(pos)] + [(name, CanonicalType.INT)]
    t = tbl("t", *cols)
    scores = [score_pk(PKCandidate(t.key, (name,), (pos,), u), t, {name: prof(name, u=u)}, ell).score
              for u in (lo, hi)]
    assert scores[1] >= scores[0]


def test_hard_reject_reasons():
    profiles = {"a": prof("a", nulls=0.01), "OrderDate": prof("OrderDate"), "ID": prof("ID"),
                "code": prof("code", CanonicalType.VARCHAR, blank=0.6)}
    cand = lambda c: PKCandidate("dbo.t", (c,), (0,), 1.0)
    assert hard_reject(cand("a"), profiles) == "nulls"
    assert hard_reject(cand("OrderDate"), profiles) == "blacklist"
    assert hard_reject(cand("code"), profiles) == "blank_or_zero"
    assert hard_reject(cand("ID"), profiles) is None


def test_generation_and_pairs():
    t = tbl("t", ("CustomerID", CanonicalType.INT), ("notes", CanonicalType.TEXT),
            ("a", CanonicalType.INT), ("b", CanonicalType.INT))
    rows = [(i, "n", i // 2, i % 2) for i in range(20)]
    profiles = profile_table(t, rows)
    got = {c.columns for c in generate_pk_candidates(t, profiles, rows)}
    assert ("CustomerID",) in got and ("notes",) not in got
    # CustomerID is fully unique, so no pair is tested
    assert all(len(c) == 1 for c in got)
    t2 = tbl("t", ("a", CanonicalType.INT), ("b", CanonicalType.INT))
    rows2 = [(i // 2, i % 2) for i in range(20)]
    got2 = {c.columns for c in generate_pk_candidates(t2, profile_table(t2, rows2), rows2)}
    assert ("a", "b") in got2


def _scored(table, name, pos, score, composite=False, u=1.0):
    cols = (name, name + "2") if composite else (name,)
    positions = (pos, pos + 1) if composite else (pos,)
    return PKCandidate(table, cols, positions, u, score=score, accepted=score >= 70)


def test_contiguous_prefix_boost():
    out = apply_position_heuristics([_scored("t", "a", 0, 80, composite=True)])
    assert out[0].score == pytest.approx(88.0) and out[0].heuristic_multipliers == (
        ("contiguous_prefix", 1.1),)
    capped = apply_position_heuristics([_scored("t", "a", 0, 95, composite=True)])
    assert capped[0].score == 100.0
    off = apply_position_heuristics([_scored("t", "a", 1, 80, composite=True)])
    assert off[0].score == 80


def test_progressive_discount():
    out = apply_position_heuristics([_scored("t", f"c{i}", i, 90) for i in range(5)])
    assert [c.score for c in out] == pytest.approx([90, 90 * 0.85, 90 * 0.70, 90 * 0.55, 90 * 0.55])


def test_composite_suppresses_parts():
    comp = PKCandidate("t", ("a", "b"), (0, 1), 1.0, score=90, accepted=True)
    parts = [PKCandidate("t", ("a",), (0,), 0.9, score=75, accepted=True),
             PKCandidate("t", ("b",), (1,), 0.9, score=75, accepted=True)]
    out = apply_position_heuristics([comp] + parts)
    assert out[0].accepted and all(c.suppressed and not c.accepted for c in out[1:])


def test_lousy_fixture_cases():
    snap = load_snapshot(manifest("lousy8"))
    results = {}
    for key in ("dbo.prd", "dbo.cst"):
        t = snap.table(key)
        rows = snap.rows(key)
        for heur in (True, False):
            results[key, heur] = discover_primary_keys(t, profile_table(t, rows), rows,
                                                       position_heuristics=heur)
    by = lambda r, col: next(c for c in r.candidates if c.columns == (col,))
    # 89 points at position 1, then the second-eligible discount
    assert by(results["dbo.prd", True], "sku_id").score == pytest.approx(89 * 0.85 * 0.85, abs=1e-9)
    # 85 points at position 5, then the third-eligible discount
    assert by(results["dbo.cst", True], "ext_ref_id").score == pytest.approx(85 * 0.55 * 0.70, abs=1e-9)
    # the heuristics strip the planted late unique column without losing the true key
    assert by(results["dbo.cst", False], "ext_ref_id").accepted
    assert not by(results["dbo.cst", True], "ext_ref_id").accepted
    for key, pk in (("dbo.prd", ("prd_id",)), ("dbo.cst", ("cst_id",))):
        assert results[key, True].selected.columns == pk
        assert all(c.score >= 70 and c.rejected is None for c in results[key, True].accepted)
