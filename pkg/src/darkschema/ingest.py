"""Snapshot ingestion: manifest + per-table delimited data files.

Data files use a header row matching column order.  An empty *unquoted* field is
NULL; a quoted empty field (``""``) is the empty string.  The stdlib ``csv``
module on the supported Python versions cannot tell the two apart, hence the
small reader/writer below.
"""

from __future__ import annotations

import json
import logging
import random
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Protocol, Sequence

from .model import (CanonicalType, ColumnMeta, IngestionIntegrityError, INTEGER_TYPES,
                    Relationship, TableMeta, Origin)

logger = logging.getLogger(__name__)

FORMAT_VERSION = "1"
DEFAULT_SAMPLE_SIZE = 1000


class SnapshotError(IngestionIntegrityError):
    pass


_TYPE_MAP: dict[str, CanonicalType] = {
    # integers
    "int": CanonicalType.INT, "integer": CanonicalType.INT, "int4": CanonicalType.INT,
    "mediumint": CanonicalType.INT, "serial": CanonicalType.INT,
    "bigint": CanonicalType.BIGINT, "int8": CanonicalType.BIGINT,
    "bigserial": CanonicalType.BIGINT,
    "smallint": CanonicalType.SMALLINT, "int2": CanonicalType.SMALLINT,
    "tinyint": CanonicalType.SMALLINT, "smallserial": CanonicalType.SMALLINT,
    # exact / approximate numerics
    "decimal": CanonicalType.DECIMAL, "numeric": CanonicalType.DECIMAL,
    "money": CanonicalType.DECIMAL, "smallmoney": CanonicalType.DECIMAL,
    "float": CanonicalType.FLOAT, "real": CanonicalType.FLOAT, "double": CanonicalType.FLOAT,
    "double precision": CanonicalType.FLOAT, "float4": CanonicalType.FLOAT,
    "float8": CanonicalType.FLOAT,
    # strings
    "varchar": CanonicalType.VARCHAR, "nvarchar": CanonicalType.VARCHAR,
    "char": CanonicalType.VARCHAR, "nchar": CanonicalType.VARCHAR,
    "character varying": CanonicalType.VARCHAR, "character": CanonicalType.VARCHAR,
    "bpchar": CanonicalType.VARCHAR, "sysname": CanonicalType.VARCHAR,
    "text": CanonicalType.TEXT, "ntext": CanonicalType.TEXT, "longtext": CanonicalType.TEXT,
    "mediumtext": CanonicalType.TEXT, "tinytext": CanonicalType.TEXT, "clob": CanonicalType.TEXT,
    # temporal
    "date": CanonicalType.DATE,
    "time": CanonicalType.TIME, "time without time zone": CanonicalType.TIME,
    "timestamp": CanonicalType.TIMESTAMP, "datetime": CanonicalType.TIMESTAMP,
    "datetime2": CanonicalType.TIMESTAMP, "smalldatetime": CanonicalType.TIMESTAMP,
    "datetimeoffset": CanonicalType.TIMESTAMP, "timestamptz": CanonicalType.TIMESTAMP,
    "timestamp without time zone": CanonicalType.TIMESTAMP,
    "timestamp with time zone": CanonicalType.TIMESTAMP,
    # other families
    "bit": CanonicalType.BOOLEAN, "bool": CanonicalType.BOOLEAN, "boolean": CanonicalType.BOOLEAN,
    "uniqueidentifier": CanonicalType.UUID, "uuid": CanonicalType.UUID,
    "binary": CanonicalType.BINARY, "varbinary": CanonicalType.BINARY,
    "image": CanonicalType.BINARY, "bytea": CanonicalType.BINARY, "blob": CanonicalType.BINARY,
    "longblob": CanonicalType.BINARY, "rowversion": CanonicalType.BINARY,
}
# canonical names are accepted verbatim as well
_TYPE_MAP.update({t.value.lower(): t for t in CanonicalType})


def map_physical_type(physical: str) -> CanonicalType:
    """Map a physical type string such as ``nvarchar(50)`` to its canonical member.

    Unknown types map to OTHER with a warning.
    """
    base = re.sub(r"\(.*\)", "", physical).strip().lower()
    base = re.sub(r"\s+", " ", base)
    if base in _TYPE_MAP:
        return _TYPE_MAP[base]
    logger.warning("unknown physical type %r mapped to OTHER", physical)
    return CanonicalType.OTHER


# --------------------------------------------------------------------------- delimited I/O

def parse_delimited(text: str, delimiter: str = ",") -> list[list[str | None]]:
    """Parse RFC-4180 style text keeping NULL (bare empty) distinct from ``""``."""
    records: list[list[str | None]] = []
    row: list[str | None] = []
    buf: list[str] = []
    quoted = False
    in_quotes = False
    i, n = 0, len(text)
    at_field_start = True

    def end_field():
        nonlocal buf, quoted, at_field_start
        row.append("".join(buf) if (buf or quoted) else None)
        buf, quoted, at_field_start = [], False, True

    while i < n:
        ch = text[i]
        if in_quotes:
            if ch == '"':
                if i + 1 < n and text[i + 1] == '"':
                    buf.append('"')
                    i += 1
                else:
                    in_quotes = False
            else:
                buf.append(ch)
        elif ch == '"' and at_field_start:
            in_quotes = quoted = True
            at_field_start = False
        elif ch == delimiter:
            end_field()
        elif ch in "\r\n":
            end_field()
            records.append(row)
            row = []
            if ch == "\r" and i + 1 < n and text[i + 1] == "\n":
                i += 1
        else:
            if quoted:
                raise SnapshotError(f"unexpected character {ch!r} after closing quote")
            buf.append(ch)
            at_field_start = False
        i += 1
    if in_quotes:
        raise SnapshotError("unterminated quoted field")
    if buf or quoted or row:
        end_field()
        records.append(row)
    return records


def _format_field(value: str | None, delimiter: str) -> str:
    if value is None:
        return ""
    if value == "" or any(c in value for c in (delimiter, '"', "\n", "\r")):
        return '"' + value.replace('"', '""') + '"'
    return value


def format_delimited(rows: Iterable[Sequence[str | None]], delimiter: str = ",") -> str:
    return "".join(delimiter.join(_format_field(v, delimiter) for v in r) + "\n" for r in rows)


def parse_value(text: str | None, ctype: CanonicalType) -> Any:
    """Convert a raw field to its in-memory value; temporal values stay ISO strings."""
    if text is None:
        return None
    if ctype in INTEGER_TYPES:
        return int(text)
    if ctype in (CanonicalType.DECIMAL, CanonicalType.FLOAT):
        return float(text)
    if ctype is CanonicalType.BOOLEAN:
        low = text.strip().lower()
        if low in ("1", "true", "t", "yes", "y"):
            return True
        if low in ("0", "false", "f", "no", "n"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if ctype is CanonicalType.UUID:
        return text.strip().lower()
    return text


def render_value(value: Any) -> str | None:
    if value is None:
        return None
    if isinstance(value, bool):
        return "1" if value else "0"
    return str(value)


# --------------------------------------------------------------------------- truth files

@dataclass(frozen=True)
class KeyTruth:
    """Declared keys used only for evaluation; never visible to discovery."""

    primary_keys: dict[str, tuple[str, ...]]
    foreign_keys: tuple[Relationship, ...]

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "primary_keys": [{"table": t, "columns": list(c)}
                             for t, c in sorted(self.primary_keys.items())],
            "foreign_keys": [{"source_table": r.source_table, "source_column": r.source_columns[0],
                              "target_table": r.target_table, "target_column": r.target_columns[0]}
                             for r in sorted(self.foreign_keys, key=lambda r: r.edge_key)],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KeyTruth":
        pks = {p["table"]: tuple(p["columns"]) for p in d.get("primary_keys", [])}
        fks = tuple(Relationship(f["source_table"], (f["source_column"],), f["target_table"],
                                 (f["target_column"],), 100.0, Origin.DECLARED)
                    for f in d.get("foreign_keys", []))
        return cls(pks, fks)


def load_truth(path: str | Path) -> KeyTruth:
    path = Path(path)
    if not path.exists():
        raise SnapshotError(f"truth file not found: {path}")
    return KeyTruth.from_dict(json.loads(path.read_text()))


# --------------------------------------------------------------------------- snapshot

@dataclass
class SchemaSnapshot:
    tables: tuple[TableMeta, ...]
    data: dict[str, list[tuple]] = field(repr=False)
    declared_constraints: KeyTruth | None = field(default=None, repr=False)
    existing_descriptions: dict[str, str] = field(default_factory=dict)
    source_path: str | None = None

    def __post_init__(self):
        self._by_key = {t.key: t for t in self.tables}
        for t in self.tables:
            for row in self.data.get(t.key, []):
                if len(row) != len(t.columns):
                    raise SnapshotError(f"row arity {len(row)} != {len(t.columns)} in {t.key}")

    def table(self, key: str) -> TableMeta:
        return self._by_key[key]

    def has_table(self, key: str) -> bool:
        return key in self._by_key

    @property
    def table_keys(self) -> list[str]:
        return sorted(self._by_key)

    def rows(self, key: str) -> list[tuple]:
        return self.data.get(key, [])

    def column_values(self, key: str, column: str, rows: list[tuple] | None = None) -> list:
        idx = self.table(key).column(column).ordinal_position
        return [r[idx] for r in (self.rows(key) if rows is None else rows)]

    def structurally_equal(self, other: "SchemaSnapshot") -> bool:
        return self.tables == other.tables and self.data == other.data


def _resolve(base: Path, p: str) -> Path:
    q = Path(p)
    return q if q.is_absolute() else base / q


def load_snapshot(manifest_path: str | Path, include_schemas: Sequence[str] = (),
                  exclude_schemas: Sequence[str] = (),
                  exclude_tables: Sequence[str] = ()) -> SchemaSnapshot:
    """Load a manifest and its data files into a :class:`SchemaSnapshot`.

    ``exclude_tables`` accepts bare table names or ``schema.table`` keys.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise SnapshotError(f"manifest not found: {manifest_path}")
    manifest = json.loads(manifest_path.read_text())
    version = str(manifest.get("format_version"))
    if version != FORMAT_VERSION:
        raise SnapshotError(f"unsupported manifest version {version!r}")
    base = manifest_path.parent

    tables: list[TableMeta] = []
    data: dict[str, list[tuple]] = {}
    existing: dict[str, str] = {}
    for schema in manifest["schemas"]:
        sname = schema["name"]
        if include_schemas and sname not in include_schemas:
            continue
        if sname in exclude_schemas:
            continue
        for tdef in schema["tables"]:
            tname = tdef["name"]
            if tname in exclude_tables or f"{sname}.{tname}" in exclude_tables:
                continue
            cols = []
            for cdef in sorted(tdef["columns"], key=lambda c: c["ordinal"]):
                cols.append(ColumnMeta(cdef["name"], cdef["ordinal"], map_physical_type(cdef["type"]),
                                       bool(cdef.get("nullable", True)), cdef.get("default")))
            meta = TableMeta(sname, tname, tuple(cols), int(tdef.get("row_count", 0)))
            tables.append(meta)
            if tdef.get("description"):
                existing[meta.key] = tdef["description"]
            for cdef in tdef["columns"]:
                if cdef.get("description"):
                    existing[f"{meta.key}.{cdef['name']}"] = cdef["description"]
            data[meta.key] = _read_table_data(_resolve(base, tdef["data_file"]), meta)

    truth = None
    if manifest.get("ground_truth_file"):
        truth = load_truth(_resolve(base, manifest["ground_truth_file"]))
    tables.sort(key=lambda t: (t.schema_name, t.table_name))
    return SchemaSnapshot(tuple(tables), data, truth, existing, str(manifest_path))


def _read_table_data(path: Path, meta: TableMeta) -> list[tuple]:
    if not path.exists():
        raise SnapshotError(f"data file not found for {meta.key}: {path}")
    records = parse_delimited(path.read_text(encoding="utf-8"))
    if not records:
        raise SnapshotError(f"data file for {meta.key} lacks a header row")
    header, body = records[0], records[1:]
    expected = [c.name for c in meta.columns]
    if header != expected:
        raise SnapshotError(f"header of {path.name} {header} does not match columns {expected}")
    rows = []
    for lineno, rec in enumerate(body, start=2):
        if len(rec) != len(meta.columns):
            raise SnapshotError(f"{path.name}:{lineno}: arity {len(rec)} != {len(meta.columns)}")
        try:
            rows.append(tuple(parse_value(v, c.canonical_type) for v, c in zip(rec, meta.columns)))
        except ValueError as exc:
            raise SnapshotError(f"{path.name}:{lineno}: {exc}") from exc
    return rows


def write_snapshot(directory: str | Path, tables: Sequence[TableMeta],
                   physical_types: dict[str, list[str]], data: dict[str, list[tuple]],
                   truth: KeyTruth | None = None, nullable: dict[str, list[bool]] | None = None,
                   descriptions: dict[str, str] | None = None) -> Path:
    """Write manifest.json, data/<schema>.<table>.csv and optionally truth.json.

    ``descriptions`` maps table keys to existing table comments.
    """
    descriptions = descriptions or {}
    directory = Path(directory)
    (directory / "data").mkdir(parents=True, exist_ok=True)
    schemas: dict[str, list[dict]] = {}
    for t in tables:
        rel = f"data/{t.key}.csv"
        body = [[c.name for c in t.columns]] + [[render_value(v) for v in row] for row in data[t.key]]
        (directory / rel).write_text(format_delimited(body), encoding="utf-8")
        entry = {
            "name": t.table_name,
            "row_count": t.row_count,
            "data_file": rel,
            "columns": [{"name": c.name, "type": physical_types[t.key][c.ordinal_position],
                         "nullable": c.nullable, "ordinal": c.ordinal_position}
                        for c in t.columns],
        }
        if t.key in descriptions:
            entry["description"] = descriptions[t.key]
        schemas.setdefault(t.schema_name, []).append(entry)
    manifest: dict[str, Any] = {
        "format_version": FORMAT_VERSION,
        "schemas": [{"name": s, "tables": ts} for s, ts in sorted(schemas.items())],
    }
    if truth is not None:
        manifest["ground_truth_file"] = "truth.json"
        (directory / "truth.json").write_text(json.dumps(truth.to_dict(), indent=2) + "\n")
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


# --------------------------------------------------------------------------- sampling

def sample_rows(rows: Sequence[tuple], sample_size: int, seed: int, table_key: str = "") -> list[tuple]:
    """Deterministic seeded sample; all rows when the table fits, none when size is 0."""
    if sample_size < 0:
        raise ValueError("sample_size must be >= 0")
    if sample_size == 0:
        return []
    if len(rows) <= sample_size:
        return list(rows)
    rng = random.Random(f"{seed}:{table_key}")
    picked = sorted(rng.sample(range(len(rows)), sample_size))
    return [rows[i] for i in picked]


class CatalogProvider(Protocol):
    """Extension point for live catalogs.  Fast row counts are the provider's job."""

    def list_tables(self) -> list[tuple[str, str]]: ...

    def list_columns(self, schema: str, table: str) -> list[ColumnMeta]: ...

    def fetch_sample(self, schema: str, table: str, size: int, seed: int) -> list[tuple]: ...

    def row_count(self, schema: str, table: str) -> int: ...


class SnapshotProvider:
    """:class:`CatalogProvider` backed by a loaded snapshot."""

    def __init__(self, snapshot: SchemaSnapshot):
        self.snapshot = snapshot

    def list_tables(self) -> list[tuple[str, str]]:
        return [(t.schema_name, t.table_name) for t in self.snapshot.tables]

    def list_columns(self, schema: str, table: str) -> list[ColumnMeta]:
        return list(self.snapshot.table(f"{schema}.{table}").columns)

    def fetch_sample(self, schema: str, table: str, size: int, seed: int) -> list[tuple]:
        key = f"{schema}.{table}"
        return sample_rows(self.snapshot.rows(key), size, seed, key)

    def row_count(self, schema: str, table: str) -> int:
        return self.snapshot.table(f"{schema}.{table}").row_count
