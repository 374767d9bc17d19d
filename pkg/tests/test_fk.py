"""Foreign-key target finding, tiers, containment, gates and scoring."""

from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from oracles import brute_force_containment, oracle_fk_score, psi

from darkschema.fk import (DiscoveryContext, FKCandidate, cardinality_factor, compute_containment,
                           discover_foreign_keys, fan_out_multiplier, find_targets, fk_score,
                           null_factor, recompute_score, row_ratio_multiplier, tier_filter,
                           validate_proposed_fk)
from darkschema.model import CanonicalType as CT, ColumnMeta, TableMeta
from darkschema.stats import ColumnProfile, profile_column, profile_table


def tbl(name, cols, rows=0):
    return TableMeta("dbo", name, tuple(ColumnMeta(c, i, t) for i, (c, t) in enumerate(cols)), rows)


def context(spec: dict[str, tuple[list, list[tuple]]], pks: dict[str, tuple[str, ...]]):
    tables, data = {}, {}
    for name, (cols, rows) in spec.items():
        t = tbl(name, cols, len(rows))
        tables[t.key], data[t.key] = t, rows
    profiles = {k: profile_table(t, data[k]) for k, t in tables.items()}

    def full(table, column):
        idx = tables[table].column(column).ordinal_position
        return [r[idx] for r in data[table]]
    return DiscoveryContext(tables, profiles, data, full, {f"dbo.{k}": v for k, v in pks.items()})


# ---------------------------------------------------------------- factor tables

def test_fan_out_table():
    assert [fan_out_multiplier(n) for n in (1, 2, 3, 4, 7)] == [1.0, 0.85, 0.75, 0.65, 0.65]
    assert all(fan_out_multiplier(n) == psi(n) for n in range(1, 9))


@pytest.mark.parametrize("rho,r", [(0.5, 0.25), (1.0, 0.5), (2.0, 1.0), (10.0, 1.0)])
def test_cardinality_factor(rho, r):
    assert cardinality_factor(rho) == r


@pytest.mark.parametrize("nf,nu", [(0.0, 1.0), (0.29, 1.0), (0.30, 0.5), (0.70, 0.5), (0.71, 0.0)])
def test_null_factor(nf, nu):
    assert null_factor(nf) == nu


def test_all_maximal_is_100_and_row_ratio():
    assert fk_score(1, 1, 1, 1, 1) == 100.0
    assert row_ratio_multiplier(5, 1000) == 0.5
    assert row_ratio_multiplier(9, 100) == 1.0
    assert row_ratio_multiplier(10, 1000) == 1.0


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 5), st.sampled_from([0.0, 1.0]),
       st.floats(0, 1), st.booleans(), st.booleans(), st.integers(1, 6))
def test_score_matches_oracle(v, s, rho, k, nf, adaptive, coercible, n):
    from darkschema.fk import fk_penalties, weight_vector
    w = weight_vector(adaptive)
    got = fk_score(v, s, cardinality_factor(rho), k, null_factor(nf), (w[0], w[3]),
                   [m for _, m in fk_penalties(1 - v, coercible)], fan_out_multiplier(n))
    assert got == pytest.approx(oracle_fk_score(v, s, rho, k, nf, adaptive, coercible, n, 1, 1),
                                abs=1e-9)
    assert 0.0 <= got <= 100.0


# ---------------------------------------------------------------- containment

def test_containment_examples():
    assert compute_containment([1, 2, 3], [1, 2, 3, 4]) == 1.0
    assert compute_containment([1, 2, 3, 4], [1, 2, 3]) == 0.75
    assert compute_containment([None, None], [1]) is None


@given(st.lists(st.one_of(st.none(), st.integers(0, 30))),
       st.lists(st.one_of(st.none(), st.integers(0, 30))))
def test_containment_matches_brute_force(src, tgt):
    text = lambda xs: [None if x is None else str(x) for x in xs]
    assert compute_containment(src, tgt) == brute_force_containment(text(src), text(tgt))


def test_containment_samples_at_most_500_distinct():
    src = list(range(2000))
    v = compute_containment(src, list(range(1000)), seed=3, label="x")
    assert v == pytest.approx(0.5, abs=0.1)
    assert v == compute_containment(src, list(range(1000)), seed=3, label="x")


# ---------------------------------------------------------------- targets and tiers

TABLES = [tbl("Customers", [("CustomerID", CT.INT)]), tbl("SalesTerritory", [("SalesTerritoryID", CT.INT)]),
          tbl("BusinessEntity", [("BusinessEntityID", CT.INT)]),
          tbl("Person", [("BusinessEntityID", CT.INT), ("TerritoryID", CT.INT), ("CustomerID", CT.INT)])]
PKS = {"dbo.Customers": "CustomerID", "dbo.SalesTerritory": "SalesTerritoryID",
       "dbo.BusinessEntity": "BusinessEntityID", "dbo.Person": "BusinessEntityID"}


def test_find_targets_strategies():
    person = TABLES[3]
    refs = lambda col: {(r.table, r.column, r.strategy) for r in find_targets(person, col, TABLES, PKS)}
    assert ("dbo.Customers", "CustomerID", "name_derived") in refs("CustomerID")
    assert ("dbo.SalesTerritory", "SalesTerritoryID", "pk_similarity") in refs("TerritoryID")
    assert ("dbo.BusinessEntity", "BusinessEntityID", "name_derived") in refs("BusinessEntityID")
    # never a target of itself
    assert all(t != "dbo.Person" or c != "BusinessEntityID" for t, c, _ in refs("BusinessEntityID"))


def _p(ctype, samples):
    return ColumnProfile("c", ctype, 10, 10, len(samples), 1.0, 0.0, 0.0, None, None, (),
                         tuple(samples))


def test_tiers():
    intp = _p(CT.INT, range(10))
    assert tier_filter(_p(CT.BOOLEAN, [True]), intp).tier == 1
    assert not tier_filter(_p(CT.BOOLEAN, [True]), intp).keep
    mails = [f"u{i}@x.org" for i in range(10)]
    d = tier_filter(_p(CT.VARCHAR, mails), _p(CT.VARCHAR, mails))
    assert (d.keep, d.tier, d.reason) == (False, 2, "email values")
    uuids = [f"{i:08x}-0000-4000-8000-{i:012x}" for i in range(10)]
    d = tier_filter(_p(CT.UUID, uuids), _p(CT.UUID, uuids))
    assert d.keep and d.promoted
    assert not tier_filter(_p(CT.VARCHAR, ["x" * 65]), _p(CT.VARCHAR, ["a"])).keep
    d = tier_filter(_p(CT.VARCHAR, ["12", "13"]), intp)
    assert d.keep and d.coercible


# ---------------------------------------------------------------- gates end to end

def _shop():
    cst = ([("cst_id", CT.INT), ("nm", CT.VARCHAR)], [(i, f"n{i}") for i in range(1, 21)])
    ords = ([("ord_id", CT.INT), ("cst_id", CT.INT), ("rowguid", CT.VARCHAR), ("old_cst_id", CT.INT)],
            [(i, 1 + i % 20, f"g{i}", i if i <= 14 else 100 + i) for i in range(1, 41)])
    doc = ([("rowguid", CT.VARCHAR)], [(f"g{i}",) for i in range(1, 61)])
    return context({"cst": cst, "ord": ords, "doc": doc},
                   {"cst": ("cst_id",), "ord": ("ord_id",), "doc": ("rowguid",)})


def test_gates_on_small_schema():
    ctx = _shop()
    result = discover_foreign_keys(ctx)
    by = {c.key: c for c in result.candidates}
    true_fk = by["dbo.ord", "cst_id", "dbo.cst", "cst_id"]
    assert true_fk.accepted and true_fk.factors["v"] == 1.0
    assert recompute_score(true_fk) == pytest.approx(true_fk.score)
    assert by["dbo.ord", "rowguid", "dbo.doc", "rowguid"].failed_gate == "G3"
    assert by["dbo.ord", "old_cst_id", "dbo.cst", "cst_id"].failed_gate == "G6"
    assert discover_foreign_keys(ctx) == result


def test_g1_rejects_nullable_target():
    ctx = context({"cst": ([("cst_id", CT.INT)], [(i,) for i in range(1, 10)] + [(None,)]),
                   "ord": ([("ord_id", CT.INT), ("cst_id", CT.INT)], [(i, 1 + i % 9) for i in range(30)])},
                  {"ord": ("ord_id",)})
    refs = [c for c in discover_foreign_keys(ctx).candidates if c.target_table == "dbo.cst"]
    assert refs and all(c.failed_gate == "G1" for c in refs)


def test_g5_keeps_top_three():
    spec = {f"t{i}": ([("ref_id", CT.INT)], [(j,) for j in range(1, 31)]) for i in range(5)}
    spec["src"] = ([("src_id", CT.INT), ("ref_id", CT.INT)], [(j, 1 + j % 30) for j in range(60)])
    pks = {f"t{i}": ("ref_id",) for i in range(5)} | {"src": ("src_id",)}
    result = discover_foreign_keys(context(spec, pks))
    group = [c for c in result.candidates if c.source_table == "dbo.src" and c.dropped is None]
    assert len(group) == 5 and all(c.fan_out == 5 for c in group)
    g5 = [dict(c.gates)["G5"] for c in group]
    assert g5.count(True) == 3 and g5.count(False) == 2


def test_validate_proposals():
    ctx = _shop()
    ok = validate_proposed_fk(ctx, "dbo.ord", "cst_id", "dbo.cst", "cst_id")
    assert ok.accepted and ok.origin == "ANALYZER_PROPOSED"
    low = validate_proposed_fk(ctx, "dbo.ord", "old_cst_id", "dbo.cst", "cst_id")
    assert low.failed_gate == "G6" and not low.accepted
    guid = validate_proposed_fk(ctx, "dbo.ord", "rowguid", "dbo.doc", "rowguid")
    assert guid.failed_gate == "G3"
    missing = validate_proposed_fk(ctx, "dbo.ord", "nope", "dbo.cst", "cst_id")
    assert missing.dropped.startswith("unknown column")


def test_candidate_round_trip():
    c = FKCandidate("a", "b", "c", "d", factors={"v": 1.0}, gates=(("G1", True),))
    assert FKCandidate.from_dict(c.to_dict()) == c
