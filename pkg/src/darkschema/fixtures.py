"""Deterministic synthetic "dark database" fixtures with known keys and planted defects."""

from __future__ import annotations

import random
import uuid
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta
from pathlib import Path

from .ingest import KeyTruth, map_physical_type, write_snapshot
from .model import ColumnMeta, Origin, Relationship, TableMeta

DEFECTS = (
    "unique-non-pk-at-late-position",
    "rowguid-target",
    "coincidental-overlap-below-75",
    "orphan-rows-20pct",
    "null-pk-violation",
    "two-unique-columns",
)
LAYOUTS = ("lousy", "chain", "nopk")
SCHEMA = "dbo"

# which pipeline mechanism each defect exercises
DEFECT_MECHANISMS = {
    "unique-non-pk-at-late-position": "PK position multiplier (cst.ext_ref_id at position 5)",
    "rowguid-target": "FK gate G3 (inv.rowguid -> doc.rowguid)",
    "coincidental-overlap-below-75": "FK gate G6 (inv.old_cst_id -> cst.cst_id, containment 0.70)",
    "orphan-rows-20pct": "FK orphan-rate penalty (cst.rgn_id -> rgn.rgn_id, containment 0.78)",
    "null-pk-violation": "PK hard rejection on nulls (emp.badge_id)",
    "two-unique-columns": "PK progressive discount (prd.sku_id at position 1)",
}

CLEAN_NAMES = {
    "rgn": "region", "prd": "product", "emp": "employee", "doc": "document", "cst": "customer",
    "ord": "order", "inv": "invoice", "shp": "shipment", "pkg": "package", "trk": "tracking",
    "nm": "name", "cd": "code", "dt": "date", "ts": "timestamp", "tm": "time", "amt": "amount",
    "qty": "quantity", "eml": "email", "mgr": "manager", "ttl": "title", "ext": "external",
    "ref": "reference", "sts": "status", "prc": "price", "ln": "line", "actv": "active",
    "crt": "created", "pd": "paid",
}


@dataclass(frozen=True)
class FixtureSpec:
    name: str
    seed: int
    table_count: int
    depth: int
    naming: str = "cryptic"
    defects: tuple[str, ...] = ()
    layout: str = "lousy"

    def __post_init__(self):
        if self.naming not in ("clean", "cryptic"):
            raise ValueError("naming must be 'clean' or 'cryptic'")
        if self.layout not in LAYOUTS:
            raise ValueError(f"layout must be one of {LAYOUTS}")
        unknown = set(self.defects) - set(DEFECTS)
        if unknown:
            raise ValueError(f"unknown defects: {sorted(unknown)}")
        if self.layout == "lousy" and (self.table_count, self.depth) != (8, 3):
            raise ValueError("the lousy layout has 8 tables and depth 3")
        if self.layout == "chain" and not (2 <= self.table_count <= 6
                                           and self.depth == self.table_count - 1):
            raise ValueError("a chain of n tables (2..6) has depth n - 1")
        if self.layout == "nopk" and (self.table_count, self.depth) != (4, 2):
            raise ValueError("the nopk layout has 4 tables and depth 2")
        if self.defects and self.layout != "lousy":
            raise ValueError("planted defects are only available in the lousy layout")


PRESETS = {
    "lousy8": FixtureSpec("lousy8", 7, 8, 3, "cryptic", DEFECTS, "lousy"),
    "chain4": FixtureSpec("chain4", 11, 4, 3, "cryptic", (), "chain"),
    "nopk": FixtureSpec("nopk", 5, 4, 2, "clean", (), "nopk"),
}


# --------------------------------------------------------------------------- builder

@dataclass
class _Table:
    name: str
    columns: list[tuple[str, str, bool]] = field(default_factory=list)  # name, physical, nullable
    rows: list[list] = field(default_factory=list)

    def add(self, name: str, physical: str, values: list, nullable: bool = False):
        self.columns.append((name, physical, nullable))
        if not self.rows:
            self.rows = [[] for _ in values]
        if len(values) != len(self.rows):
            raise ValueError(f"{self.name}.{name}: {len(values)} values for {len(self.rows)} rows")
        for row, v in zip(self.rows, values):
            row.append(v)


class _Fixture:
    def __init__(self, spec: FixtureSpec):
        self.spec = spec
        self.rng = random.Random(spec.seed)
        self.tables: list[_Table] = []
        self.pks: dict[str, tuple[str, ...]] = {}
        self.fks: list[tuple[str, str, str, str]] = []
        self.descriptions: dict[str, str] = {}

    def table(self, name: str) -> _Table:
        t = _Table(name)
        self.tables.append(t)
        return t

    def uuid(self) -> str:
        return str(uuid.UUID(int=self.rng.getrandbits(128), version=4))

    def day(self, start: date = date(2019, 1, 1), span: int = 1500) -> str:
        return (start + timedelta(days=self.rng.randrange(span))).isoformat()

    def stamp(self) -> str:
        d = datetime(2020, 1, 1) + timedelta(seconds=self.rng.randrange(3 * 365 * 86400))
        return d.isoformat(sep=" ")

    def money(self, lo: float, hi: float) -> str:
        return f"{self.rng.uniform(lo, hi):.2f}"

    def words(self, pool: list[str], n: int) -> list[str]:
        return [self.rng.choice(pool) for _ in range(n)]


FIRST = ["Ana", "Ben", "Chen", "Dara", "Eli", "Fay", "Gus", "Hana", "Ivo", "Jun", "Kai", "Lea"]
LAST = ["Ng", "Olsen", "Patel", "Quinn", "Rossi", "Sato", "Tran", "Ueda", "Vega", "Wong"]
PLACES = ["North", "South", "East", "West", "Central", "Coastal", "Highland", "Metro",
          "Valley", "Harbor", "Plains", "Lakes"]
GOODS = ["Bolt", "Nut", "Gear", "Valve", "Pump", "Hose", "Clamp", "Seal", "Filter", "Belt"]


def _lousy(f: _Fixture) -> None:
    d, rng = set(f.spec.defects), f.rng
    n_rgn, n_prd, n_emp, n_doc, n_cst, n_ord, n_inv, n_lines = 50, 120, 60, 400, 200, 400, 300, 500

    rgn = f.table("rgn")
    rgn.add("rgn_id", "int", list(range(1, n_rgn + 1)))
    rgn.add("rgn_cd", "varchar(8)", [f"R{i:03d}" for i in range(1, n_rgn + 1)])
    rgn.add("rgn_nm", "nvarchar(40)", f.words(PLACES, n_rgn))
    f.pks["rgn"] = ("rgn_id",)

    prd = f.table("prd")
    prd.add("prd_id", "int", list(range(1, n_prd + 1)))
    if "two-unique-columns" in d:
        prd.add("sku_id", "varchar(12)",
                [f"SKU-{c:05d}" for c in rng.sample(range(10000, 99999), n_prd)])
    prd.add("prd_nm", "nvarchar(60)", [f"{g} {rng.randint(1, 30)}" for g in f.words(GOODS, n_prd)])
    prd.add("unit_prc", "decimal(10,2)", [f.money(1, 500) for _ in range(n_prd)])
    prd.add("actv", "bit", [rng.random() < 0.8 for _ in range(n_prd)])
    f.pks["prd"] = ("prd_id",)

    emp = f.table("emp")
    emp.add("emp_id", "int", list(range(1, n_emp + 1)))
    emp.add("emp_nm", "nvarchar(60)", [f"{a} {b}" for a, b in zip(f.words(FIRST, n_emp),
                                                                 f.words(LAST, n_emp))])
    if "null-pk-violation" in d:
        badges = rng.sample(range(10000, 99999), n_emp)
        badges[rng.randrange(n_emp)] = None
        emp.add("badge_id", "int", badges, nullable=True)
    emp.add("mgr_emp_id", "int", [None if i <= 5 else rng.randint(1, min(i - 1, 15))
                                  for i in range(1, n_emp + 1)], nullable=True)
    emp.add("hire_dt", "date", [f.day() for _ in range(n_emp)])
    emp.add("shift_tm", "time", [time(rng.choice([6, 8, 14, 22]), 0).isoformat()
                                 for _ in range(n_emp)])
    f.pks["emp"] = ("emp_id",)
    f.fks.append(("emp", "mgr_emp_id", "emp", "emp_id"))

    doc = f.table("doc")
    guids = [f.uuid() for _ in range(n_doc)]
    doc.add("rowguid", "uniqueidentifier", guids)
    doc.add("doc_ttl", "nvarchar(80)", [f"Report {rng.randint(1, 150)}" for _ in range(n_doc)])
    doc.add("body", "text", [" ".join(f.words(GOODS + PLACES, 12)) for _ in range(n_doc)])
    doc.add("crt_ts", "datetime2", [f.stamp() for _ in range(n_doc)])
    doc.add("thumb", "varbinary(64)", [bytes(rng.getrandbits(8) for _ in range(8)).hex()
                                       for _ in range(n_doc)])
    doc.add("meta", "xml", [f"<m v='{rng.randint(1, 9)}'/>" for _ in range(n_doc)])
    doc.add("score", "float", [round(rng.random(), 6) for _ in range(n_doc)])
    f.pks["doc"] = ("rowguid",)

    cst = f.table("cst")
    cst.add("cst_id", "int", list(range(1, n_cst + 1)))
    if "orphan-rows-20pct" in d:
        # 50 distinct region references: 39 real, 11 orphaned -> containment 0.78
        distinct = rng.sample(range(1, n_rgn + 1), 39) + list(range(n_rgn + 1, n_rgn + 12))
    else:
        distinct = list(range(1, n_rgn + 1))
    refs = distinct + [rng.choice(distinct) for _ in range(n_cst - len(distinct))]
    rng.shuffle(refs)
    cst.add("rgn_id", "int", refs)
    names = [f"{a} {b}" for a, b in zip(f.words(FIRST, n_cst), f.words(LAST, n_cst))]
    cst.add("cst_nm", "nvarchar(60)", names)
    cst.add("eml", "varchar(120)", [f"{n.split()[0].lower()}{i}@example.com"
                                    for i, n in enumerate(names)])
    cst.add("crt_dt", "date", [f.day() for _ in range(n_cst)])
    if "unique-non-pk-at-late-position" in d:
        cst.add("ext_ref_id", "int", rng.sample(range(100000, 999999), n_cst))
    f.pks["cst"] = ("cst_id",)
    f.fks.append(("cst", "rgn_id", "rgn", "rgn_id"))

    ordt = f.table("ord")
    ordt.add("ord_id", "int", list(range(1, n_ord + 1)))
    ordt.add("cst_id", "int", [rng.randint(1, n_cst) for _ in range(n_ord)])
    ordt.add("emp_id", "int", [rng.randint(1, n_emp) for _ in range(n_ord)])
    ordt.add("ord_dt", "date", [f.day() for _ in range(n_ord)])
    ordt.add("tot_amt", "decimal(12,2)", [f.money(10, 5000) for _ in range(n_ord)])
    ordt.add("sts_cd", "char(3)", f.words(["NEW", "SHP", "CLS", "CXL"], n_ord))
    f.pks["ord"] = ("ord_id",)
    f.fks += [("ord", "cst_id", "cst", "cst_id"), ("ord", "emp_id", "emp", "emp_id")]

    inv = f.table("inv")
    inv.add("inv_id", "int", list(range(1, n_inv + 1)))
    inv.add("ord_id", "int", rng.sample(range(1, n_ord + 1), n_inv))
    inv.add("inv_dt", "date", [f.day(date(2019, 2, 1)) for _ in range(n_inv)])
    inv.add("amt", "decimal(12,2)", [f.money(10, 5000) for _ in range(n_inv)])
    if "coincidental-overlap-below-75" in d:
        # 100 distinct values, 70 of them valid customer ids -> containment exactly 0.70
        distinct = rng.sample(range(1, n_cst + 1), 70) + list(range(5001, 5031))
        vals = [v for v in distinct for _ in range(3)]
        rng.shuffle(vals)
        inv.add("old_cst_id", "int", vals)
    inv.add("pd", "bit", [rng.random() < 0.6 for _ in range(n_inv)])
    if "rowguid-target" in d:
        inv.add("rowguid", "uniqueidentifier", rng.sample(guids, n_inv))
    f.pks["inv"] = ("inv_id",)
    f.fks.append(("inv", "ord_id", "ord", "ord_id"))

    lines = [(o, rng.randint(1, n_prd)) for o in range(1, n_ord + 1)]
    seen = set(lines)
    while len(lines) < n_lines:
        pair = (rng.randint(1, n_ord), rng.randint(1, n_prd))
        if pair not in seen:
            seen.add(pair)
            lines.append(pair)
    lines.sort()
    op = f.table("ord_prd")
    op.add("ord_id", "int", [o for o, _ in lines])
    op.add("prd_id", "int", [p for _, p in lines])
    op.add("qty", "smallint", [rng.randint(1, 10) for _ in lines])
    op.add("ln_amt", "decimal(12,2)", [f.money(1, 900) for _ in lines])
    f.pks["ord_prd"] = ("ord_id", "prd_id")
    f.fks += [("ord_prd", "ord_id", "ord", "ord_id"), ("ord_prd", "prd_id", "prd", "prd_id")]


CHAIN_NAMES = ["rgn", "cst", "ord", "shp", "pkg", "trk"]
# Existing comment on the deepest chain table; its note travels up one level per iteration.
PLANTED_NOTE = "Note: {name} rows are loaded nightly by the carrier feed."

CHAIN_ROWS = [60, 120, 240, 400, 450, 500]


def _chain(f: _Fixture) -> None:
    rng = f.rng
    names = CHAIN_NAMES[:f.spec.table_count]
    for i, name in enumerate(names):
        n = CHAIN_ROWS[i]
        t = f.table(name)
        t.add(f"{name}_id", "int", list(range(1, n + 1)))
        if i:
            parent, pn = names[i - 1], CHAIN_ROWS[i - 1]
            refs = list(range(1, pn + 1)) + [rng.randint(1, pn) for _ in range(n - pn)]
            rng.shuffle(refs)
            t.add(f"{parent}_id", "int", refs)
            f.fks.append((name, f"{parent}_id", parent, f"{parent}_id"))
        t.add(f"{name}_cd", "varchar(6)", f.words(["A1", "B2", "C3", "D4", "E5"], n))
        t.add(f"{name}_dt", "date", [f.day() for _ in range(n)])
        f.pks[name] = (f"{name}_id",)
    f.descriptions[names[-1]] = PLANTED_NOTE.format(name=names[-1])


def _nopk(f: _Fixture) -> None:
    """Keys sit at ordinal 3, so position discounts keep every PK below threshold."""
    rng = f.rng
    layout = [("dept", 50, []), ("emp", 200, ["dept"]), ("proj", 80, ["dept"]),
              ("asgn", 400, ["emp", "proj"])]
    sizes = {name: n for name, n, _ in layout}
    for name, n, parents in layout:
        t = f.table(name)
        t.add("label", "varchar(20)", f.words(["alpha", "beta", "gamma", "delta"], n))
        t.add("code", "varchar(4)", f.words(["X1", "Y2", "Z3"], n))
        t.add("flag", "bit", [rng.random() < 0.5 for _ in range(n)])
        t.add(f"{name}_id", "int", list(range(1, n + 1)))
        for p in parents:
            pn = sizes[p]
            refs = list(range(1, min(pn, n) + 1)) + [rng.randint(1, pn)
                                                     for _ in range(n - min(pn, n))]
            rng.shuffle(refs)
            t.add(f"{p}_id", "int", refs)
            f.fks.append((name, f"{p}_id", p, f"{p}_id"))
        f.pks[name] = (f"{name}_id",)


def _clean(name: str) -> str:
    return "_".join(CLEAN_NAMES.get(tok, tok) for tok in name.split("_"))


def generate(spec: FixtureSpec | str, directory: str | Path) -> Path:
    """Write the fixture snapshot (manifest, data files, truth file); return the manifest path."""
    if isinstance(spec, str):
        spec = PRESETS[spec]
    f = _Fixture(spec)
    {"lousy": _lousy, "chain": _chain, "nopk": _nopk}[spec.layout](f)
    rename = _clean if spec.naming == "clean" and spec.layout != "nopk" else (lambda s: s)

    tables, physical, data = [], {}, {}
    for t in f.tables:
        cols = tuple(ColumnMeta(rename(c), i, map_physical_type(p), nullable)
                     for i, (c, p, nullable) in enumerate(t.columns))
        meta = TableMeta(SCHEMA, rename(t.name), cols, len(t.rows))
        tables.append(meta)
        physical[meta.key] = [p for _, p, _ in t.columns]
        data[meta.key] = [tuple(r) for r in t.rows]

    def key(name: str) -> str:
        return f"{SCHEMA}.{rename(name)}"

    truth = KeyTruth(
        {key(t): tuple(rename(c) for c in cols) for t, cols in f.pks.items()},
        tuple(Relationship(key(s), (rename(sc),), key(t), (rename(tc),), 100.0, Origin.DECLARED)
              for s, sc, t, tc in f.fks))
    descriptions = {key(t): text for t, text in f.descriptions.items()}
    return write_snapshot(directory, tables, physical, data, truth, descriptions=descriptions)


def fixture_readme(spec: FixtureSpec) -> str:
    lines = [f"# Fixture {spec.name}", "",
             f"seed {spec.seed}, {spec.table_count} tables, depth {spec.depth}, "
             f"{spec.naming} names, layout {spec.layout}", ""]
    if spec.defects:
        lines += ["| Planted defect | Caught by |", "|---|---|"]
        lines += [f"| {d} | {DEFECT_MECHANISMS[d]} |" for d in spec.defects]
    return "\n".join(lines) + "\n"
