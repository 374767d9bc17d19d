"""Canonical schema representation and dependency-level stratification."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable

import networkx as nx


class IngestionIntegrityError(ValueError):
    """Raised when relationships or rows do not match the declared schema."""


class CanonicalType(str, enum.Enum):
    INT = "INT"
    BIGINT = "BIGINT"
    SMALLINT = "SMALLINT"
    DECIMAL = "DECIMAL"
    FLOAT = "FLOAT"
    VARCHAR = "VARCHAR"
    TEXT = "TEXT"
    DATE = "DATE"
    TIME = "TIME"
    TIMESTAMP = "TIMESTAMP"
    BOOLEAN = "BOOLEAN"
    UUID = "UUID"
    BINARY = "BINARY"
    OTHER = "OTHER"


INTEGER_TYPES = frozenset({CanonicalType.INT, CanonicalType.BIGINT, CanonicalType.SMALLINT})
NUMERIC_TYPES = INTEGER_TYPES | {CanonicalType.DECIMAL, CanonicalType.FLOAT}
TEMPORAL_TYPES = frozenset({CanonicalType.DATE, CanonicalType.TIME, CanonicalType.TIMESTAMP})
STRING_TYPES = frozenset({CanonicalType.VARCHAR, CanonicalType.TEXT})


class Origin(str, enum.Enum):
    DECLARED = "DECLARED"
    STATISTICAL = "STATISTICAL"
    ANALYZER_PROPOSED = "ANALYZER_PROPOSED"
    GROUND_TRUTH = "GROUND_TRUTH"


@dataclass(frozen=True)
class ColumnMeta:
    name: str
    ordinal_position: int
    canonical_type: CanonicalType
    nullable: bool = True
    default_expr: str | None = None

    def __post_init__(self):
        if self.ordinal_position < 0:
            raise IngestionIntegrityError(f"negative ordinal for column {self.name!r}")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "ordinal_position": self.ordinal_position,
            "canonical_type": self.canonical_type.value,
            "nullable": self.nullable,
            "default_expr": self.default_expr,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ColumnMeta":
        return cls(d["name"], d["ordinal_position"], CanonicalType(d["canonical_type"]),
                   d["nullable"], d.get("default_expr"))


@dataclass(frozen=True)
class TableMeta:
    schema_name: str
    table_name: str
    columns: tuple[ColumnMeta, ...]
    row_count: int = 0

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise IngestionIntegrityError(f"duplicate column names in {self.key}")
        if [c.ordinal_position for c in self.columns] != list(range(len(self.columns))):
            raise IngestionIntegrityError(f"ordinals of {self.key} are not contiguous from 0")
        if self.row_count < 0:
            raise IngestionIntegrityError(f"negative row count for {self.key}")

    @property
    def key(self) -> str:
        return f"{self.schema_name}.{self.table_name}"

    def column(self, name: str) -> ColumnMeta:
        for c in self.columns:
            if c.name == name:
                return c
        raise KeyError(f"{self.key} has no column {name!r}")

    def has_column(self, name: str) -> bool:
        return any(c.name == name for c in self.columns)

    def to_dict(self) -> dict:
        return {
            "schema_name": self.schema_name,
            "table_name": self.table_name,
            "row_count": self.row_count,
            "columns": [c.to_dict() for c in self.columns],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TableMeta":
        return cls(d["schema_name"], d["table_name"],
                   tuple(ColumnMeta.from_dict(c) for c in d["columns"]), d["row_count"])


@dataclass(frozen=True)
class Relationship:
    """A (possibly composite) reference from source columns to target columns."""

    source_table: str
    source_columns: tuple[str, ...]
    target_table: str
    target_columns: tuple[str, ...]
    confidence: float = 100.0
    origin: Origin = Origin.STATISTICAL

    def __post_init__(self):
        object.__setattr__(self, "source_columns", tuple(self.source_columns))
        object.__setattr__(self, "target_columns", tuple(self.target_columns))
        if len(self.source_columns) != len(self.target_columns) or not self.source_columns:
            raise IngestionIntegrityError(f"arity mismatch in relationship {self.edge_key}")
        if not 0.0 <= self.confidence <= 100.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 100]")
        if self.is_self_referencing and self.source_columns == self.target_columns:
            raise IngestionIntegrityError(f"relationship {self.edge_key} references itself")

    @property
    def is_self_referencing(self) -> bool:
        return self.source_table == self.target_table

    @property
    def edge_key(self) -> tuple:
        return (self.source_table, self.source_columns, self.target_table, self.target_columns)

    def label(self) -> str:
        return (f"{self.source_table}({', '.join(self.source_columns)}) -> "
                f"{self.target_table}({', '.join(self.target_columns)})")

    def to_dict(self) -> dict:
        return {
            "source_table": self.source_table,
            "source_columns": list(self.source_columns),
            "target_table": self.target_table,
            "target_columns": list(self.target_columns),
            "confidence": self.confidence,
            "origin": self.origin.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Relationship":
        return cls(d["source_table"], tuple(d["source_columns"]), d["target_table"],
                   tuple(d["target_columns"]), d["confidence"], Origin(d["origin"]))


@dataclass(frozen=True)
class DependencyGraph:
    nodes: tuple[str, ...]
    edges: tuple[Relationship, ...]
    levels: tuple[tuple[str, ...], ...]
    removed_cycle_edges: tuple[Relationship, ...] = ()
    _level_of: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        for i, level in enumerate(self.levels):
            for t in level:
                self._level_of[t] = i

    def level_of(self, table: str) -> int:
        return self._level_of[table]

    @property
    def depth(self) -> int:
        return len(self.levels) - 1

    @property
    def retained_edges(self) -> tuple[Relationship, ...]:
        removed = {r.edge_key for r in self.removed_cycle_edges}
        return tuple(r for r in self.edges if r.edge_key not in removed)

    def parents(self, table: str) -> list[str]:
        """Tables referenced by ``table`` (all edges, including cycle-removed ones)."""
        return sorted({r.target_table for r in self.edges
                       if r.source_table == table and not r.is_self_referencing})

    def children(self, table: str) -> list[str]:
        return sorted({r.source_table for r in self.edges
                       if r.target_table == table and not r.is_self_referencing})

    def to_dict(self) -> dict:
        return {
            "nodes": list(self.nodes),
            "edges": [r.to_dict() for r in self.edges],
            "levels": [list(level) for level in self.levels],
            "removed_cycle_edges": [r.to_dict() for r in self.removed_cycle_edges],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DependencyGraph":
        return cls(tuple(d["nodes"]), tuple(Relationship.from_dict(r) for r in d["edges"]),
                   tuple(tuple(level) for level in d["levels"]),
                   tuple(Relationship.from_dict(r) for r in d["removed_cycle_edges"]))


def _edge_sort_key(rel: Relationship):
    return (rel.confidence, rel.edge_key)


def build_dependency_graph(tables: Iterable[TableMeta],
                           relationships: Iterable[Relationship]) -> DependencyGraph:
    """Stratify tables into dependency levels, level 0 holding tables that reference nothing.

    Cycles are broken one strongly connected component at a time by dropping the
    lowest-confidence edge inside the component (ties on the lexicographic edge key),
    then recomputing.  Self-references are always dropped for ordering.  Dropped
    edges stay in ``edges`` and are listed in ``removed_cycle_edges``.
    """
    tables = list(tables)
    by_key = {t.key: t for t in tables}
    rels = sorted(set(relationships), key=lambda r: r.edge_key)
    for rel in rels:
        for tkey, cols in ((rel.source_table, rel.source_columns),
                           (rel.target_table, rel.target_columns)):
            if tkey not in by_key:
                raise IngestionIntegrityError(f"unknown table {tkey!r} in {rel.label()}")
            for c in cols:
                if not by_key[tkey].has_column(c):
                    raise IngestionIntegrityError(f"unknown column {tkey}.{c} in {rel.label()}")

    nodes = sorted(by_key)
    removed: list[Relationship] = [r for r in rels if r.is_self_referencing]
    retained = [r for r in rels if not r.is_self_referencing]

    while True:
        g = nx.DiGraph()
        g.add_nodes_from(nodes)
        g.add_edges_from((r.source_table, r.target_table) for r in retained)
        cyclic = sorted(sorted(c) for c in nx.strongly_connected_components(g) if len(c) > 1)
        if not cyclic:
            break
        for component in cyclic:
            members = set(component)
            inside = [r for r in retained
                      if r.source_table in members and r.target_table in members]
            victim = min(inside, key=_edge_sort_key)
            retained.remove(victim)
            removed.append(victim)

    parents: dict[str, set[str]] = {n: set() for n in nodes}
    for r in retained:
        parents[r.source_table].add(r.target_table)
    level: dict[str, int] = {}

    def resolve(node: str) -> int:
        if node not in level:
            level[node] = 1 + max((resolve(p) for p in parents[node]), default=-1)
        return level[node]

    for n in nodes:
        resolve(n)
    depth = max(level.values(), default=-1)
    levels = tuple(tuple(n for n in nodes if level[n] == k) for k in range(depth + 1))
    removed.sort(key=lambda r: r.edge_key)
    return DependencyGraph(tuple(nodes), tuple(rels), levels, tuple(removed))
