"""Refinement loop: convergence rules, propagation, immutability and sanity rules."""

from __future__ import annotations

import itertools

import pytest
from hypothesis import given, strategies as st

from darkschema.analyzer import MockAnalyzer, RequestKind
from darkschema.guardrails import BudgetLedger
from darkschema.model import CanonicalType as CT, ColumnMeta, Relationship, TableMeta
from darkschema.refine import (ConvergenceConfig, IterationRecord, RefinementEngine,
                               RefinementState, SanityRules, SchemaFacts, check_convergence,
                               first_iteration_containing, initial_state, is_junction,
                               structural_violations)
from darkschema.stats import profile_table

# ---------------------------------------------------------------- convergence


def record(i, material=0, violations=0):
    return IterationRecord(i, material_changes=material, violations=violations)


@given(st.lists(st.tuples(st.integers(0, 2), st.integers(0, 2)), min_size=1, max_size=5),
       st.lists(st.floats(0, 1), max_size=5), st.integers(1, 3), st.floats(0.05, 1.0))
def test_convergence_matches_rule(rows, confidences, window, tau):
    history = [record(i + 1, m, v) for i, (m, v) in enumerate(rows)]
    cfg = ConvergenceConfig(window=window, confidence_threshold=tau)
    got = check_convergence(history, confidences, cfg)
    stable = len(history) >= window and all(m + v == 0 for m, v in rows[-window:])
    semantic = rows[-1][0] == 0
    confident = all(c >= tau for c in confidences)
    assert (got.stable, got.semantic, got.confident) == (stable, semantic, confident)
    assert got.converged == (stable + semantic + confident >= 2 and len(history) >= 2)


# every combination of the three criteria: (stable, semantic, confident) -> converged
COMBOS = list(itertools.product([False, True], repeat=3))


@pytest.mark.parametrize("stable,semantic,confident", COMBOS)
def test_each_criteria_combination(stable, semantic, confident):
    if stable and not semantic:
        # a stable window forces zero material changes in the latest iteration
        history = [record(1), record(2, material=0)]
        assert check_convergence(history, [1.0], ConvergenceConfig()).semantic
        return
    last = record(2, material=0 if semantic else 1, violations=0 if stable or not semantic else 1)
    history = [record(1), last]
    status = check_convergence(history, [0.9 if confident else 0.1], ConvergenceConfig())
    assert (status.stable, status.semantic, status.confident) == (stable, semantic, confident)
    assert status.converged == (stable + semantic + confident >= 2)


def test_single_iteration_never_converges():
    assert not check_convergence([record(1)], [1.0], ConvergenceConfig(window=1)).converged


def test_config_validation():
    assert ConvergenceConfig(max_iterations=9).max_iterations == 5
    for bad in ({"window": 0}, {"confidence_threshold": 0}, {"max_iterations": 1}):
        with pytest.raises(ValueError):
            ConvergenceConfig(**bad)


# ---------------------------------------------------------------- small schemas

def build(spec, pks, rels):
    tables, profiles = {}, {}
    for name, (cols, rows) in spec.items():
        t = TableMeta("dbo", name, tuple(ColumnMeta(c, i, ty) for i, (c, ty) in enumerate(cols)),
                      len(rows))
        tables[t.key] = t
        profiles[t.key] = profile_table(t, rows)
    facts = SchemaFacts(tables, profiles, {f"dbo.{k}": v for k, v in pks.items()})
    return facts, [Relationship(f"dbo.{s}", (c,), f"dbo.{t}", (tc,)) for s, c, t, tc in rels]


def chain():
    spec = {"a": ([("a_id", CT.INT)], [(i,) for i in range(1, 5)]),
            "b": ([("b_id", CT.INT), ("a_id", CT.INT)], [(i, 1 + i % 4) for i in range(1, 9)]),
            "c": ([("c_id", CT.INT), ("b_id", CT.INT)], [(i, 1 + i % 8) for i in range(1, 17)])}
    return build(spec, {"a": ("a_id",), "b": ("b_id",), "c": ("c_id",)},
                 [("b", "a_id", "a", "a_id"), ("c", "b_id", "b", "b_id")])


def run(facts, rels, ground=None, seed="", **cfg):
    state = initial_state(facts, rels, ground)
    budget = BudgetLedger()
    engine = RefinementEngine(facts, MockAnalyzer(), state, ConvergenceConfig(**cfg), budget,
                              seed_context=seed)
    return engine.run(), engine, budget


def test_note_climbs_one_level_per_iteration():
    facts, rels = chain()
    seed = "Existing comment on dbo.c: Note: c is fed hourly."
    state, _, _ = run(facts, rels, seed=seed, max_iterations=3, confidence_threshold=1.0)
    trace = [first_iteration_containing(state.descriptions[f"dbo.{t}"], "Note: c is fed hourly.")
             for t in "cba"]
    assert trace == [1, 1, 2]


def test_observations_reach_direct_parent_only():
    facts, rels = chain()
    state, _, _ = run(facts, rels)
    assert "Observed: c references b via b_id." in state.descriptions["dbo.b"].text
    assert "Observed: c references" not in state.descriptions["dbo.a"].text
    assert state.stop_reason == "converged"


def test_ground_truth_is_never_touched_or_analyzed():
    facts, rels = chain()
    text = "Anchor text for b."
    state, engine, _ = run(facts, rels, ground={"dbo.b": text}, max_iterations=3,
                           confidence_threshold=1.0)
    rec = state.descriptions["dbo.b"]
    assert rec.immutable and rec.text == text and len(rec.history) == 1
    analyzed = {r.subject for r in engine.requests if r.kind is RequestKind.TABLE_ANALYSIS}
    assert "dbo.b" not in analyzed and {"dbo.a", "dbo.c"} <= analyzed
    assert not any(r.kind is RequestKind.REVISION and r.subject == "dbo.b" for r in engine.requests)


def test_call_accounting_matches_ledger():
    facts, rels = chain()
    state, engine, budget = run(facts, rels)
    issued = len(engine.requests)
    counted = sum(c.calls for c in budget.counters.values())
    assert issued == counted > 0
    assert sum(r.table_analyses for r in state.log) == 3 * len(state.log)


def test_state_round_trip():
    facts, rels = chain()
    state, _, _ = run(facts, rels)
    assert RefinementState.from_dict(state.to_dict()).to_dict() == state.to_dict()


# ---------------------------------------------------------------- structural rules

def test_r1_non_unique_target():
    spec = {"p": ([("code", CT.INT)], [(1,), (1,), (2,)]),
            "c": ([("c_id", CT.INT), ("code", CT.INT)], [(1, 1), (2, 2)])}
    facts, rels = build(spec, {"c": ("c_id",)}, [("c", "code", "p", "code")])
    found = structural_violations(["dbo.c"], facts, rels, {})
    assert [v.rule for v in found] == ["R1"]


def test_r2_r6_and_toggles():
    spec = {"t": ([("a", CT.INT), ("b", CT.INT)], [(1, 1), (None, 2)])}
    facts, _ = build(spec, {"t": ("a",)}, [])
    facts.accepted_pk_candidates = {"dbo.t": [("a",), ("b",)]}
    rules = {v.rule for v in structural_violations(["dbo.t"], facts, [], {})}
    assert rules == {"R2", "R6"}
    off = SanityRules.from_config({"R2": False, "R6": False})
    assert structural_violations(["dbo.t"], facts, [], {}, off) == []


def test_r4_junction_wording():
    spec = {"x": ([("x_id", CT.INT)], [(1,), (2,)]), "y": ([("y_id", CT.INT)], [(1,), (2,)]),
            "xy": ([("x_id", CT.INT), ("y_id", CT.INT)], [(1, 1), (1, 2), (2, 1)])}
    facts, rels = build(spec, {"x": ("x_id",), "y": ("y_id",), "xy": ("x_id", "y_id")},
                        [("xy", "x_id", "x", "x_id"), ("xy", "y_id", "y", "y_id")])
    assert is_junction("dbo.xy", facts, rels)
    state = initial_state(facts, rels)
    state.descriptions["dbo.xy"].text = "xy stores rows."
    assert [v.rule for v in structural_violations(["dbo.xy"], facts, rels, state.descriptions)] == ["R4"]
    state.descriptions["dbo.xy"].text = "xy links x and y records."
    assert structural_violations(["dbo.xy"], facts, rels, state.descriptions) == []
    # the mock describes junctions as links, so the loop raises no R4
    final, _, _ = run(facts, rels)
    assert not [v for v in final.violations if v.rule == "R4"]
