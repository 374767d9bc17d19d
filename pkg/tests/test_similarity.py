"""Name similarity against a full-matrix edit-distance oracle."""

from __future__ import annotations

from hypothesis import given, strategies as st

from oracles import levenshtein_dp

from darkschema.similarity import (levenshtein, name_similarity, names_match_table,
                                   strip_id_suffix)

words = st.text(alphabet="abcdeid_", max_size=12)


@given(words, words)
def test_levenshtein_matches_dp(a, b):
    assert levenshtein(a, b) == levenshtein_dp(a, b) == levenshtein(b, a)


@given(words, words)
def test_similarity_bounded_and_symmetric(a, b):
    s = name_similarity(a, b)
    assert 0.0 <= s <= 1.0
    assert s == name_similarity(b, a)


def test_similarity_cases():
    assert name_similarity("CustomerID", "customer_id") == 1.0
    assert name_similarity("cst", "cst_ref") == 0.8
    assert name_similarity("ab", "abc") == 1.0 - 1 / 3  # too short for containment
    assert name_similarity("", "x") == 0.0


def test_strip_and_table_match():
    assert strip_id_suffix("cst_id") == "cst"
    assert strip_id_suffix("CustomerID") == "Customer"
    assert names_match_table("category", "categories")
    assert names_match_table("orders", "order")
    assert not names_match_table("ord", "cst")
