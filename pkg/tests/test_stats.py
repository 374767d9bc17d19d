"""Column profiles against hand counts and a brute-force uniqueness oracle."""

from __future__ import annotations

from hypothesis import given, strategies as st

from conftest import FIXTURES, manifest
from oracles import read_raw_columns

from darkschema.ingest import load_snapshot
from darkschema.model import CanonicalType, ColumnMeta
from darkschema.stats import nearest_rank, profile_column, profile_table, verify_uniqueness

INT_COL = ColumnMeta("x", 0, CanonicalType.INT)
STR_COL = ColumnMeta("s", 0, CanonicalType.VARCHAR)


def test_full_unique_integers():
    p = profile_column(INT_COL, [1, 2, 3, 4], 4)
    assert (p.uniqueness, p.min_value, p.max_value) == (1.0, 1, 4)
    assert p.verified and not p.is_estimate
    assert p.type_profile == {"kind": "numeric", "p25": 1, "p50": 2, "p75": 3}


def test_hand_counted_strings():
    p = profile_column(STR_COL, ["A", "A", "B", None], 4)
    assert p.distinct_count == 2 and p.null_fraction == 0.25 and p.uniqueness == 0.5
    assert p.top_k_frequencies == (("A", 2), ("B", 1))
    assert p.type_profile["min_length"] == 1


def test_empty_sentinel():
    p = profile_column(INT_COL, [], 0)
    assert p.is_empty and p.uniqueness == 0.0 and p.null_fraction == 0.0
    assert p.top_k_frequencies == () and p.type_profile is None


def test_sampled_is_estimate_and_verification():
    p = profile_column(INT_COL, [1, 2, 3], 10)
    assert p.is_estimate and p.uniqueness == 1.0
    full = verify_uniqueness(p, [1, 2, 3, 3, 4, 5, 6, 7, 8, 9])
    assert full.verified and full.uniqueness == 0.9


def test_blank_or_zero_counts_empty_strings_and_zero():
    assert profile_column(STR_COL, ["", " ", "x", None], 4).blank_or_zero_fraction == 0.5
    assert profile_column(INT_COL, [0, 0, 1], 3).blank_or_zero_fraction == 2 / 3


def test_cardinality_threshold_suppresses_distribution():
    assert profile_column(INT_COL, list(range(20)), 20, cardinality_threshold=5).top_k_frequencies == ()


def test_nearest_rank():
    assert [nearest_rank(list(range(1, 11)), p) for p in (0, 25, 50, 75, 100)] == [1, 3, 5, 8, 10]


@given(st.lists(st.one_of(st.none(), st.integers(-3, 6)), max_size=40))
def test_profile_invariants(values):
    p = profile_column(INT_COL, values, len(values))
    assert 0.0 <= p.uniqueness <= 1.0 and 0.0 <= p.null_fraction <= 1.0
    if values:
        assert p.uniqueness == len({v for v in values if v is not None}) / len(values)
    counts = [c for _, c in p.top_k_frequencies]
    assert counts == sorted(counts, reverse=True) and len(counts) <= 10
    assert profile_column(INT_COL, list(values), len(values)) == p


def test_fixture_uniqueness_matches_raw_scan():
    for name in ("lousy8", "chain4", "nopk"):
        snap = load_snapshot(manifest(name))
        for t in snap.tables:
            raw = read_raw_columns((FIXTURES / name / "data" / f"{t.key}.csv").read_text())
            profiles = profile_table(t, snap.rows(t.key))
            for c in t.columns:
                distinct = {v for v in raw[c.name] if v is not None}
                assert profiles[c.name].uniqueness == len(distinct) / t.row_count, (t.key, c.name)
