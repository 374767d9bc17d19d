"""Documentation artifacts rendered from a RunState: SQL comments, Markdown, Mermaid, CSV, metrics."""

from __future__ import annotations

import csv
import io
import json
import re
from pathlib import Path

from .fk import weight_vector
from .model import build_dependency_graph
from .state import RunState

UNDOCUMENTED = "_undocumented_"
SQL_DIALECTS = ("ansi", "extended-properties")
TABLES_CSV_COLUMNS = ("schema", "table", "row_count", "level", "primary_key", "description",
                      "confidence", "immutable")
COLUMNS_CSV_COLUMNS = ("schema", "table", "column", "ordinal", "type", "nullable", "is_pk",
                       "references", "distinct_count", "null_fraction", "description",
                       "confidence", "immutable")
RELATIONSHIPS_CSV_COLUMNS = ("source_table", "source_column", "target_table", "target_column",
                             "confidence", "origin")


def _documented(state: RunState):
    """(object_id, record) pairs with non-empty text, tables then their columns."""
    for t in sorted(state.tables, key=lambda t: t.key):
        for oid in [t.key] + [f"{t.key}.{c.name}" for c in t.columns]:
            rec = state.description(oid)
            if rec is not None and rec.text:
                yield oid, rec


def _split_id(oid: str) -> tuple[str, str, str | None]:
    parts = oid.split(".", 2)
    return parts[0], parts[1], parts[2] if len(parts) == 3 else None


# --------------------------------------------------------------------------- SQL

def _sql_str(text: str, national: bool = False) -> str:
    return ("N" if national else "") + "'" + text.replace("'", "''") + "'"


def _ansi_ident(name: str) -> str:
    return '"' + name.replace('"', '""') + '"'


def _mssql_ident(name: str) -> str:
    return "[" + name.replace("]", "]]") + "]"


def emit_sql(state: RunState, dialect: str = "ansi") -> str:
    """One comment statement per documented object.

    ``ansi`` emits ``COMMENT ON`` statements; ``extended-properties`` emits guarded
    add/update calls so the script can be re-run safely.
    """
    if dialect not in SQL_DIALECTS:
        raise ValueError(f"unknown SQL dialect {dialect!r}")
    lines = [f"-- schema documentation ({dialect})", ""]
    for oid, rec in _documented(state):
        schema, table, column = _split_id(oid)
        if dialect == "ansi":
            target = f"{_ansi_ident(schema)}.{_ansi_ident(table)}"
            if column is None:
                lines.append(f"COMMENT ON TABLE {target} IS {_sql_str(rec.text)};")
            else:
                lines.append(f"COMMENT ON COLUMN {target}.{_ansi_ident(column)} IS "
                             f"{_sql_str(rec.text)};")
            continue
        obj = _sql_str(f"{_mssql_ident(schema)}.{_mssql_ident(table)}", True)
        levels = (f"@level0type = N'SCHEMA', @level0name = {_sql_str(schema, True)}, "
                  f"@level1type = N'TABLE', @level1name = {_sql_str(table, True)}")
        if column is None:
            minor = "0"
        else:
            minor = f"COLUMNPROPERTY(OBJECT_ID({obj}), {_sql_str(column, True)}, 'ColumnId')"
            levels += f", @level2type = N'COLUMN', @level2name = {_sql_str(column, True)}"
        value = _sql_str(rec.text, True)
        lines += [
            "IF EXISTS (SELECT 1 FROM sys.extended_properties WHERE major_id = "
            f"OBJECT_ID({obj}) AND minor_id = {minor} AND name = N'MS_Description')",
            f"    EXEC sys.sp_updateextendedproperty @name = N'MS_Description', "
            f"@value = {value}, {levels};",
            "ELSE",
            f"    EXEC sys.sp_addextendedproperty @name = N'MS_Description', "
            f"@value = {value}, {levels};",
            "GO",
        ]
    return "\n".join(lines) + "\n"


_STR = r"N?'((?:[^']|'')*)'"
_ANSI_IDENT = r'"((?:[^"]|"")*)"'
_ANSI_RE = re.compile(
    rf"COMMENT ON (TABLE|COLUMN) {_ANSI_IDENT}\.{_ANSI_IDENT}(?:\.{_ANSI_IDENT})? IS {_STR};")
_ADD_RE = re.compile(
    rf"sp_addextendedproperty @name = N'MS_Description', @value = {_STR}, "
    rf"@level0type = N'SCHEMA', @level0name = {_STR}, @level1type = N'TABLE', "
    rf"@level1name = {_STR}(?:, @level2type = N'COLUMN', @level2name = {_STR})?;")


def parse_sql_comments(script: str) -> dict[str, str]:
    """Recover ``object_id -> description`` from a script produced by :func:`emit_sql`."""
    out: dict[str, str] = {}
    for m in _ANSI_RE.finditer(script):
        kind, schema, table, column, text = m.groups()
        schema, table = schema.replace('""', '"'), table.replace('""', '"')
        oid = f"{schema}.{table}"
        if kind == "COLUMN":
            oid += "." + column.replace('""', '"')
        out[oid] = text.replace("''", "'")
    for m in _ADD_RE.finditer(script):
        text, schema, table, column = (g.replace("''", "'") if g is not None else None
                                       for g in m.groups())
        out[f"{schema}.{table}" if column is None else f"{schema}.{table}.{column}"] = text
    return out


# --------------------------------------------------------------------------- Mermaid

def mermaid_name(table_key: str) -> str:
    return re.sub(r"[^0-9A-Za-z_]", "_", table_key.replace(".", "__"))


def _edge_label(text: str) -> str:
    return text.replace("#", "#35;").replace('"', "#quot;")


def _edge_label_text(label: str) -> str:
    return label.replace("#quot;", '"').replace("#35;", "#")


def emit_mermaid(state: RunState) -> str:
    tables = sorted(state.tables, key=lambda t: t.key)
    rels = sorted(state.relationships, key=lambda r: r.edge_key)
    fk_cols = {(r.source_table, r.source_columns[0]) for r in rels}
    lines = ["erDiagram"]
    for t in tables:
        pk = set(state.primary_keys.get(t.key, ()))
        lines.append(f"    {mermaid_name(t.key)} {{")
        for c in t.columns:
            keys = [k for k, hit in (("PK", c.name in pk), ("FK", (t.key, c.name) in fk_cols))
                    if hit]
            suffix = (" " + ", ".join(keys)) if keys else ""
            lines.append(f"        {c.canonical_type.value} {re.sub(r'[^0-9A-Za-z_]', '_', c.name)}"
                         f"{suffix}")
        lines.append("    }")
    for r in rels:
        lines.append(f"    {mermaid_name(r.source_table)} }}o--|| {mermaid_name(r.target_table)}"
                     f" : \"{_edge_label(r.source_columns[0])}\"")
    return "\n".join(lines) + "\n"


_ENTITY_RE = re.compile(r"^\s{4}(\w+) \{$")
_ATTR_RE = re.compile(r"^\s{8}(\w+) (\w+)(?: ([A-Z, ]+))?$")
_EDGE_RE = re.compile(r'^\s{4}(\w+) \}o--\|\| (\w+) : "([^"]*)"$')


def parse_mermaid(text: str) -> tuple[dict[str, list[tuple[str, str, tuple[str, ...]]]],
                                      list[tuple[str, str, str]]]:
    """Parse the subset of Mermaid ER syntax emitted above: (entities, edges)."""
    entities: dict[str, list] = {}
    edges: list[tuple[str, str, str]] = []
    current = None
    for line in text.splitlines():
        if m := _ENTITY_RE.match(line):
            current = m.group(1)
            entities[current] = []
        elif line.strip() == "}":
            current = None
        elif current and (m := _ATTR_RE.match(line)):
            keys = tuple(k.strip() for k in (m.group(3) or "").split(",") if k.strip())
            entities[current].append((m.group(2), m.group(1), keys))
        elif m := _EDGE_RE.match(line):
            src, tgt, label = m.groups()
            edges.append((src, tgt, _edge_label_text(label)))
    return entities, edges


# --------------------------------------------------------------------------- Markdown

def _anchor(text: str) -> str:
    return re.sub(r"[^a-z0-9\- ]", "", text.lower()).replace(" ", "-")


def _md_cell(text: str) -> str:
    return text.replace("|", "\\|").replace("\n", " ")


def emit_markdown(state: RunState) -> str:
    tables = sorted(state.tables, key=lambda t: t.key)
    rels = sorted(state.relationships, key=lambda r: r.edge_key)
    schemas = sorted({t.schema_name for t in tables})
    out = ["# Schema documentation", "", "## Contents", ""]
    for s in schemas:
        out.append(f"- [Schema {s}](#{_anchor('schema ' + s)})")
        for t in tables:
            if t.schema_name == s:
                out.append(f"  - [{t.key}](#{_anchor(t.key)})")
    for s in schemas:
        out += ["", f"## Schema {s}"]
        for t in (t for t in tables if t.schema_name == s):
            rec = state.description(t.key)
            pk = state.primary_keys.get(t.key, ())
            out += ["", f"### {t.key}", "",
                    rec.text if rec is not None and rec.text else UNDOCUMENTED, "",
                    f"- Rows: {t.row_count}",
                    f"- Primary key: {', '.join(pk) if pk else 'none detected'}", "",
                    "| Column | Type | Nullable | Key | Description |",
                    "|---|---|---|---|---|"]
            fk_of = {r.source_columns[0]: r for r in rels if r.source_table == t.key}
            for c in t.columns:
                crec = state.description(f"{t.key}.{c.name}")
                key = ", ".join(k for k, hit in (("PK", c.name in pk), ("FK", c.name in fk_of))
                                if hit)
                text = crec.text if crec is not None and crec.text else UNDOCUMENTED
                out.append(f"| {_md_cell(c.name)} | {c.canonical_type.value} | "
                           f"{'yes' if c.nullable else 'no'} | {key} | {_md_cell(text)} |")
            outgoing = [r for r in rels if r.source_table == t.key]
            incoming = [r for r in rels if r.target_table == t.key and r.source_table != t.key]
            out += ["", "Relationships:", ""]
            if not outgoing and not incoming:
                out.append("- none")
            for r in outgoing:
                out.append(f"- {r.source_columns[0]} references {r.target_table}."
                           f"{r.target_columns[0]} ({r.origin.value.lower()}, "
                           f"confidence {r.confidence:.1f})")
            for r in incoming:
                out.append(f"- referenced by {r.source_table}.{r.source_columns[0]}")
    return "\n".join(out) + "\n"


# --------------------------------------------------------------------------- CSV

def _fmt(x: float | None) -> str:
    return "" if x is None else f"{x:.4f}"


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def emit_csv(state: RunState) -> dict[str, str]:
    tables = sorted(state.tables, key=lambda t: t.key)
    rels = sorted(state.relationships, key=lambda r: r.edge_key)
    graph = build_dependency_graph(tables, rels)
    t_rows, c_rows = [], []
    for t in tables:
        rec = state.description(t.key)
        pk = state.primary_keys.get(t.key, ())
        t_rows.append([t.schema_name, t.table_name, t.row_count, graph.level_of(t.key),
                       " ".join(pk), rec.text if rec else "",
                       _fmt(rec.confidence) if rec and rec.text else "",
                       int(bool(rec and rec.immutable))])
        refs = {r.source_columns[0]: f"{r.target_table}.{r.target_columns[0]}"
                for r in rels if r.source_table == t.key}
        for c in t.columns:
            crec = state.description(f"{t.key}.{c.name}")
            prof = state.profiles.get(t.key, {}).get(c.name)
            c_rows.append([t.schema_name, t.table_name, c.name, c.ordinal_position,
                           c.canonical_type.value, int(c.nullable), int(c.name in pk),
                           refs.get(c.name, ""), prof.distinct_count if prof else "",
                           _fmt(prof.null_fraction) if prof else "",
                           crec.text if crec else "",
                           _fmt(crec.confidence) if crec and crec.text else "",
                           int(bool(crec and crec.immutable))])
    r_rows = [[r.source_table, r.source_columns[0], r.target_table, r.target_columns[0],
               _fmt(r.confidence), r.origin.value] for r in rels]
    return {"tables.csv": _csv(TABLES_CSV_COLUMNS, t_rows),
            "columns.csv": _csv(COLUMNS_CSV_COLUMNS, c_rows),
            "relationships.csv": _csv(RELATIONSHIPS_CSV_COLUMNS, r_rows)}


# --------------------------------------------------------------------------- metrics

def metrics(state: RunState) -> dict:
    counters = state.counters or {}
    totals = {k: sum(c.get(k, 0) for c in counters.values())
              for k in ("input_tokens", "output_tokens", "calls")}
    gate_rejections: dict[str, int] = {}
    for c in state.fk_candidates:
        if c.dropped is None and c.failed_gate:
            gate_rejections[c.failed_gate] = gate_rejections.get(c.failed_gate, 0) + 1
    ref = state.refinement
    return {
        "tokens": {"per_phase": counters, "total": totals},
        "discovery": {
            "tables": len(state.tables),
            "primary_keys": len(state.primary_keys),
            "pk_candidates": sum(len(v) for v in state.pk_candidates.values()),
            "fk_candidates": len(state.fk_candidates),
            "fk_accepted": sum(1 for c in state.fk_candidates if c.accepted),
            "fk_dropped_by_tier": sum(1 for c in state.fk_candidates if c.dropped),
            "gate_rejections": dict(sorted(gate_rejections.items())),
            "adaptive_weights": state.fk_adaptive,
            "k0_fraction": state.fk_k0_fraction,
            "fk_weights": list(weight_vector(state.fk_adaptive)),
        },
        "convergence": {
            "iterations": [r.to_dict() for r in ref.log] if ref else [],
            "stop_reason": ref.stop_reason if ref else "",
            "analyzer_proposals": len(ref.proposals) if ref else 0,
        },
        "sanity": {"violations": [v.to_dict() for v in state.final_violations]},
    }


def emit_metrics(state: RunState) -> str:
    return json.dumps(metrics(state), indent=2, sort_keys=True) + "\n"


# --------------------------------------------------------------------------- bundle

def write_outputs(state: RunState, directory: str | Path, toggles: dict | None = None) -> Path:
    """Write every enabled artifact below ``directory`` and return it."""
    toggles = {"sql": True, "markdown": True, "mermaid": True, "csv": True, "metrics": True,
               **(toggles or {})}
    root = Path(directory)
    files: dict[str, str] = {}
    if toggles["sql"]:
        for d in SQL_DIALECTS:
            files[f"sql/comments.{d}.sql"] = emit_sql(state, d)
    if toggles["markdown"]:
        files["md/schema.md"] = emit_markdown(state)
    if toggles["mermaid"]:
        files["mermaid/erd.mmd"] = emit_mermaid(state)
    if toggles["csv"]:
        files.update({f"csv/{k}": v for k, v in emit_csv(state).items()})
    if toggles["metrics"]:
        files["metrics/metrics.json"] = emit_metrics(state)
    for rel, text in files.items():
        path = root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    return root


def bundle_bytes(directory: str | Path) -> dict[str, bytes]:
    """Relative path -> content for every file below ``directory``."""
    root = Path(directory)
    return {p.relative_to(root).as_posix(): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()}
