"""Documentation artifacts: round trips, headers, markers and frozen golden files."""

from __future__ import annotations

import csv
import io
import json

import pytest

from conftest import GOLDEN

from darkschema.model import CanonicalType as CT, ColumnMeta, Relationship, TableMeta
from darkschema.outputs import (COLUMNS_CSV_COLUMNS, RELATIONSHIPS_CSV_COLUMNS, TABLES_CSV_COLUMNS,
                                UNDOCUMENTED, bundle_bytes, emit_csv, emit_markdown, emit_mermaid,
                                emit_sql, mermaid_name, parse_mermaid, parse_sql_comments,
                                write_outputs)
from darkschema.refine import RefinementState, initial_state, SchemaFacts
from darkschema.state import RunState


def tiny_state(texts: dict[str, str]) -> RunState:
    a = TableMeta("dbo", "a", (ColumnMeta("a_id", 0, CT.INT, False),), 2)
    b = TableMeta("dbo", "b b", (ColumnMeta("b_id", 0, CT.INT, False),
                                 ColumnMeta('a"id', 1, CT.INT)), 3)
    rel = Relationship("dbo.b b", ('a"id',), "dbo.a", ("a_id",), 88.0)
    state = RunState(1, {}, "x", 0, tables=[a, b], primary_keys={"dbo.a": ("a_id",),
                                                                  "dbo.b b": ("b_id",)})
    facts = SchemaFacts({t.key: t for t in (a, b)}, {}, state.primary_keys)
    state.refinement = initial_state(facts, [rel])
    for oid, text in texts.items():
        state.refinement.descriptions[oid].text = text
        state.refinement.descriptions[oid].confidence = 0.9
    return state


TEXTS = {"dbo.a": "Holds a's; it's \"quoted\".", "dbo.b b.a\"id": "Points at a.",
         "dbo.b b": "Rows | with pipes\nand breaks."}


@pytest.mark.parametrize("dialect", ["ansi", "extended-properties"])
def test_sql_round_trip(dialect):
    state = tiny_state(TEXTS)
    assert parse_sql_comments(emit_sql(state, dialect)) == TEXTS


def test_sql_unknown_dialect():
    with pytest.raises(ValueError):
        emit_sql(tiny_state({}), "oracle")


def test_extended_properties_are_guarded():
    script = emit_sql(tiny_state(TEXTS), "extended-properties")
    assert script.count("IF EXISTS") == script.count("sp_updateextendedproperty") == 3
    assert script.count("sp_addextendedproperty") == 3


def test_mermaid_round_trip():
    state = tiny_state({})
    entities, edges = parse_mermaid(emit_mermaid(state))
    assert set(entities) == {mermaid_name("dbo.a"), mermaid_name("dbo.b b")}
    assert entities["dbo__a"] == [("a_id", "INT", ("PK",))]
    assert entities["dbo__b_b"][1] == ("a_id", "INT", ("FK",))
    assert edges == [("dbo__b_b", "dbo__a", 'a"id')]


def test_undocumented_marker_and_markdown_escaping():
    md = emit_markdown(tiny_state({"dbo.a": "A table."}))
    assert "A table." in md and md.count(UNDOCUMENTED) == 4   # b b, its two columns, a_id
    md2 = emit_markdown(tiny_state({**TEXTS, "dbo.b b.b_id": "Key | of b\nrows."}))
    assert "| b_id | INT | no | PK | Key \\| of b rows. |" in md2


def test_csv_headers_and_values():
    files = emit_csv(tiny_state(TEXTS))
    for name, header in (("tables.csv", TABLES_CSV_COLUMNS), ("columns.csv", COLUMNS_CSV_COLUMNS),
                         ("relationships.csv", RELATIONSHIPS_CSV_COLUMNS)):
        rows = list(csv.reader(io.StringIO(files[name])))
        assert tuple(rows[0]) == header
    tables = list(csv.DictReader(io.StringIO(files["tables.csv"])))
    assert [(t["table"], t["level"]) for t in tables] == [("a", "0"), ("b b", "1")]
    assert tables[1]["description"] == TEXTS["dbo.b b"]
    rel = next(csv.DictReader(io.StringIO(files["relationships.csv"])))
    assert rel["confidence"] == "88.0000" and rel["origin"] == "STATISTICAL"


def test_toggles(tmp_path):
    write_outputs(tiny_state({}), tmp_path, {"sql": False, "metrics": False})
    assert sorted(bundle_bytes(tmp_path)) == ["csv/columns.csv", "csv/relationships.csv",
                                              "csv/tables.csv", "md/schema.md", "mermaid/erd.mmd"]


def test_lousy8_bundle_matches_golden(lousy8_run):
    got = bundle_bytes(lousy8_run.outputs_dir)
    want = bundle_bytes(GOLDEN / "lousy8")
    assert sorted(got) == sorted(want)
    for name in want:
        assert got[name] == want[name], name
    metrics = json.loads(got["metrics/metrics.json"])
    # the planted rowguid and PK-as-source defects plus four low-overlap pairs
    assert metrics["discovery"]["gate_rejections"] == {"G3": 1, "G6": 4, "G8": 1}


def test_lousy8_sql_describes_every_object(lousy8_run):
    state = lousy8_run.state
    parsed = parse_sql_comments(emit_sql(state))
    ids = {t.key for t in state.tables} | {f"{t.key}.{c.name}" for t in state.tables
                                           for c in t.columns}
    assert set(parsed) == ids
    assert all(parsed[i] == state.description(i).text for i in ids)
