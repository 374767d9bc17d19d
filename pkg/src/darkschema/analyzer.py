"""Semantic analyzer gateway: request/response types, a deterministic mock, an HTTP client."""

from __future__ import annotations

import enum
import json
import logging
import os
import random
import re
import string
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable

import httpx
import jsonschema

from .similarity import names_match_table, normalize_name, strip_id_suffix

logger = logging.getLogger(__name__)

TEMPERATURE = 0.1
INSIGHT_RE = re.compile(r"Observed: [^.]*\.")
NOTE_RE = re.compile(r"Note: [^.]*\.")


class AnalyzerError(RuntimeError):
    """The analyzer could not produce a schema-valid response."""


class AnalyzerTransportError(AnalyzerError):
    """Transport kept failing after the bounded retries."""


class RequestKind(str, enum.Enum):
    TABLE_ANALYSIS = "TABLE_ANALYSIS"
    REVISION = "REVISION"
    SANITY_LEVEL = "SANITY_LEVEL"
    SANITY_SCHEMA = "SANITY_SCHEMA"
    SANITY_CROSS = "SANITY_CROSS"
    SEMANTIC_COMPARISON = "SEMANTIC_COMPARISON"
    PK_PRUNING = "PK_PRUNING"
    FK_PRUNING = "FK_PRUNING"


TEMPLATE_FOR_KIND = {
    RequestKind.TABLE_ANALYSIS: "table-analysis",
    RequestKind.REVISION: "backpropagation",
    RequestKind.SANITY_LEVEL: "dep-level-sanity",
    RequestKind.SANITY_SCHEMA: "schema-sanity",
    RequestKind.SANITY_CROSS: "cross-schema-sanity",
    RequestKind.SEMANTIC_COMPARISON: "semantic-comparison",
    RequestKind.PK_PRUNING: "pk-pruning",
    RequestKind.FK_PRUNING: "fk-pruning",
}

_CONFIDENCE = {"type": "number", "minimum": 0, "maximum": 1}
_VIOLATIONS = {
    "type": "object",
    "required": ["violations"],
    "properties": {"violations": {"type": "array", "items": {
        "type": "object", "required": ["table", "rule", "message"],
        "properties": {"table": {"type": "string"}, "rule": {"type": "string"},
                       "message": {"type": "string"}}}}},
}

RESPONSE_SCHEMAS: dict[RequestKind, dict] = {
    RequestKind.TABLE_ANALYSIS: {
        "type": "object",
        "required": ["table_description", "confidence", "columns", "foreign_keys",
                     "parent_insights"],
        "properties": {
            "table_description": {"type": "string"},
            "confidence": _CONFIDENCE,
            "columns": {"type": "array", "items": {
                "type": "object", "required": ["name", "description", "confidence"],
                "properties": {"name": {"type": "string"}, "description": {"type": "string"},
                               "confidence": _CONFIDENCE}}},
            "foreign_keys": {"type": "array", "items": {
                "type": "object", "required": ["source_column", "target_table", "target_column"],
                "properties": {"source_column": {"type": "string"},
                               "target_table": {"type": "string"},
                               "target_column": {"type": "string"}}}},
            "parent_insights": {"type": "array", "items": {
                "type": "object", "required": ["parent", "text", "confidence"],
                "properties": {"parent": {"type": "string"}, "text": {"type": "string"},
                               "confidence": _CONFIDENCE}}},
        },
    },
    RequestKind.REVISION: {
        "type": "object",
        "required": ["needsRevision", "revisedDescription", "reasoning", "confidence"],
        "properties": {"needsRevision": {"type": "boolean"},
                       "revisedDescription": {"type": "string"},
                       "reasoning": {"type": "string"}, "confidence": _CONFIDENCE},
    },
    RequestKind.SEMANTIC_COMPARISON: {
        "type": "object", "required": ["classification"],
        "properties": {"classification": {"enum": ["material", "cosmetic"]},
                       "reasoning": {"type": "string"}},
    },
    RequestKind.SANITY_LEVEL: _VIOLATIONS,
    RequestKind.SANITY_SCHEMA: _VIOLATIONS,
    RequestKind.SANITY_CROSS: _VIOLATIONS,
    RequestKind.PK_PRUNING: {
        "type": "object", "required": ["keep"],
        "properties": {"keep": {"type": "array", "items": {
            "type": "array", "items": {"type": "string"}}}, "reasoning": {"type": "string"}},
    },
    RequestKind.FK_PRUNING: {
        "type": "object", "required": ["keep"],
        "properties": {"keep": {"type": "array", "items": {
            "type": "object", "required": ["target_table", "target_column"],
            "properties": {"target_table": {"type": "string"},
                           "target_column": {"type": "string"}}}},
            "reasoning": {"type": "string"}},
    },
}


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


@dataclass(frozen=True)
class AnalysisRequest:
    kind: RequestKind
    context: dict
    subject: str = ""
    temperature: float = TEMPERATURE
    effort: str | None = None

    def to_json(self) -> str:
        return canonical_json({"kind": self.kind.value, "subject": self.subject,
                               "context": self.context, "temperature": self.temperature})


@dataclass(frozen=True)
class TokenUsage:
    input_tokens: int = 0
    output_tokens: int = 0


@dataclass(frozen=True)
class AnalysisResponse:
    kind: RequestKind
    payload: dict
    usage: TokenUsage = field(default_factory=TokenUsage)


def validate_payload(kind: RequestKind, payload: Any) -> None:
    jsonschema.validate(payload, RESPONSE_SCHEMAS[kind])


# --------------------------------------------------------------------------- tokens

def tokenize(text: str) -> set[str]:
    return set(re.findall(r"[a-z0-9_]+", text.lower()))


def jaccard_similarity(a: str, b: str) -> float:
    x, y = tokenize(a), tokenize(b)
    if not x and not y:
        return 1.0
    return len(x & y) / len(x | y)


MATERIAL_JACCARD = 0.8


def classify_change(old: str, new: str) -> str:
    """Mock rule: material iff token-set Jaccard similarity drops below 0.8."""
    return "material" if jaccard_similarity(old, new) < MATERIAL_JACCARD else "cosmetic"


def exact_match_classification(old: str, new: str) -> str:
    """Degraded fallback used when optional analyzer calls are being skipped."""
    return "cosmetic" if tokenize(old) == tokenize(new) else "material"


# --------------------------------------------------------------------------- base

class Analyzer:
    """Base gateway.  Subclasses implement ``_complete``; validation lives here."""

    name = "base"

    def _complete(self, request: AnalysisRequest, repair: str | None = None
                  ) -> tuple[Any, TokenUsage]:
        raise NotImplementedError

    def analyze(self, request: AnalysisRequest) -> AnalysisResponse:
        payload, usage = self._complete(request)
        try:
            validate_payload(request.kind, payload)
        except jsonschema.ValidationError as exc:
            logger.warning("invalid %s payload, asking for a repair: %s", request.kind.value,
                           exc.message)
            payload, usage2 = self._complete(request, repair=exc.message)
            usage = TokenUsage(usage.input_tokens + usage2.input_tokens,
                               usage.output_tokens + usage2.output_tokens)
            try:
                validate_payload(request.kind, payload)
            except jsonschema.ValidationError as exc2:
                raise AnalyzerError(f"schema-invalid {request.kind.value} response after "
                                    f"repair: {exc2.message}") from exc2
        return AnalysisResponse(request.kind, payload, usage)

    def revise(self, parent: str, description: str, insights: list[dict],
               violations: list[dict] = (), seed_context: str = "") -> AnalysisResponse:
        return self.analyze(AnalysisRequest(RequestKind.REVISION, {
            "parent": parent, "description": description, "insights": list(insights),
            "violations": list(violations), "seed_context": seed_context}, subject=parent))

    def compare_semantics(self, old: str, new: str, subject: str = "") -> str:
        resp = self.analyze(AnalysisRequest(RequestKind.SEMANTIC_COMPARISON,
                                            {"old": old, "new": new}, subject=subject))
        return resp.payload["classification"]


# --------------------------------------------------------------------------- mock

ABBREVIATIONS = {
    "cst": "customer", "cust": "customer", "ord": "order", "prd": "product", "prod": "product",
    "inv": "invoice", "ln": "line", "qty": "quantity", "amt": "amount", "emp": "employee",
    "mgr": "manager", "rgn": "region", "doc": "document", "nm": "name", "dt": "date",
    "tm": "time", "ts": "timestamp", "cd": "code", "desc": "description", "addr": "address",
    "tot": "total", "pmt": "payment", "shp": "shipment", "sup": "supplier", "whs": "warehouse",
    "cat": "category", "id": "identifier", "ref": "reference", "ext": "external",
    "actv": "active", "crt": "created", "upd": "updated", "no": "number", "num": "number",
    "ttl": "title", "sku": "stock keeping unit", "lbl": "label", "acct": "account",
    "alt": "alternate", "trk": "tracking", "ver": "version", "seq": "sequence",
}


def expand_name(name: str) -> str:
    parts = re.findall(r"[A-Z]?[a-z]+|[A-Z]+(?![a-z])|\d+", name.replace("_", " "))
    return " ".join(ABBREVIATIONS.get(p.lower(), p.lower()) for p in parts) or name


def _bare(table_key: str) -> str:
    return table_key.split(".", 1)[-1]


class MockAnalyzer(Analyzer):
    """Deterministic rule-based analyzer: a pure function of the request bundle."""

    name = "mock"

    def _complete(self, request, repair=None):
        handler = getattr(self, f"_{request.kind.value.lower()}")
        payload = handler(request.context)
        usage = TokenUsage(max(1, len(request.to_json()) // 4),
                           max(1, len(canonical_json(payload)) // 4))
        return payload, usage

    # -- table analysis
    def _table_analysis(self, ctx: dict) -> dict:
        table = ctx["table"]
        name = table["name"]
        profiles = ctx.get("profiles", {})
        pk = list(ctx.get("primary_key", []))
        fks = ctx.get("foreign_keys", [])
        parents = sorted({_bare(fk["target_table"]) for fk in fks
                          if fk["target_table"] != table["key"]})
        fk_cols = {fk["column"]: fk for fk in fks}

        junction_parents = sorted({_bare(fk_cols[c]["target_table"]) for c in pk if c in fk_cols})
        if len(pk) == 2 and len(junction_parents) == 2:
            base = f"{name} links {junction_parents[0]} and {junction_parents[1]} records"
        else:
            base = f"{name} stores {expand_name(name)} records"
        if parents:
            base += f"; references {', '.join(parents)}"
        base += "."
        previous = (ctx.get("previous") or {}).get("description", "")
        carried = sorted(set(INSIGHT_RE.findall(previous)))
        # notes come from the table's existing comment or were carried in by a child
        prefix = f"Existing comment on {table['key']}:"
        comments = " ".join(line[len(prefix):] for line in ctx.get("seed_context", "").splitlines()
                            if line.startswith(prefix))
        notes = sorted(set(NOTE_RE.findall(previous)) | set(NOTE_RE.findall(comments)))
        description = " ".join([base] + carried + notes)

        has_data = any(p.get("observed_rows", 0) > 0 and p.get("sample_values")
                       for p in profiles.values())
        confidence = 0.9 if has_data else 0.5

        columns = []
        for col in table["columns"]:
            p = profiles.get(col["name"], {})
            text = f"{expand_name(col['name'])} ({col['type'].lower()})"
            if p.get("observed_rows"):
                text += (f"; {p['distinct_count']} distinct values, "
                         f"{100 * p['null_fraction']:.0f}% null")
            if col["name"] in pk:
                text += "; part of the primary key" if len(pk) > 1 else "; primary key"
            if col["name"] in fk_cols:
                fk = fk_cols[col["name"]]
                text += f"; references {_bare(fk['target_table'])}.{fk['target_column']}"
            columns.append({"name": col["name"], "description": text,
                            "confidence": 0.9 if p.get("sample_values") else 0.5})

        insights = []
        for parent in sorted({fk["target_table"] for fk in fks if fk["target_table"] != table["key"]}):
            via = ", ".join(sorted(fk["column"] for fk in fks if fk["target_table"] == parent))
            # relationship observations stay local; notes travel on towards the roots
            texts = {f"Observed: {name} references {_bare(parent)} via {via}."} | set(notes)
            insights.extend({"parent": parent, "text": t, "confidence": 0.8} for t in sorted(texts))

        proposals = []
        own_pk = set(pk)
        for col in table["columns"]:
            c = col["name"]
            if c in fk_cols or c in own_pk:
                continue
            for other in ctx.get("schema_tables", []):
                if other["key"] == table["key"]:
                    continue
                if normalize_name(c) == normalize_name(other["name"]) + "id":
                    target = (other["primary_key"][0] if len(other.get("primary_key", [])) == 1
                              else c)
                    proposals.append({"source_column": c, "target_table": other["key"],
                                      "target_column": target})
        return {"table_description": description, "confidence": confidence, "columns": columns,
                "foreign_keys": proposals, "parent_insights": insights}

    # -- backward pass
    def _revision(self, ctx: dict) -> dict:
        description = ctx["description"]
        missing = sorted({i["text"] for i in ctx["insights"]} - {
            i["text"] for i in ctx["insights"] if i["text"] in description})
        if missing:
            return {"needsRevision": True,
                    "revisedDescription": " ".join([description] + missing),
                    "reasoning": f"added {len(missing)} child insight(s)", "confidence": 0.9}
        return {"needsRevision": False, "revisedDescription": description,
                "reasoning": "all insights already reflected", "confidence": 0.9}

    def _semantic_comparison(self, ctx: dict) -> dict:
        sim = jaccard_similarity(ctx["old"], ctx["new"])
        return {"classification": classify_change(ctx["old"], ctx["new"]),
                "reasoning": f"token jaccard {sim:.3f}"}

    def _sanity_level(self, ctx: dict) -> dict:
        return {"violations": []}

    _sanity_schema = _sanity_level
    _sanity_cross = _sanity_level

    def _pk_pruning(self, ctx: dict) -> dict:
        return {"keep": [list(c["columns"]) for c in ctx["candidates"]],
                "reasoning": "all candidates plausible"}

    def _fk_pruning(self, ctx: dict) -> dict:
        """Prefer targets whose table name is derivable from the source column name."""
        cands = ctx["candidates"]
        stem = strip_id_suffix(ctx["source_column"])
        named = [c for c in cands if names_match_table(stem, _bare(c["target_table"]))]
        keep = named if named else cands
        return {"keep": [{"target_table": c["target_table"], "target_column": c["target_column"]}
                         for c in keep],
                "reasoning": "name-derived target preferred" if named else "no preference"}


# --------------------------------------------------------------------------- templates

def load_template(role: str, template_dir: str | Path | None = None) -> string.Template:
    if template_dir is not None:
        text = (Path(template_dir) / f"{role}.txt").read_text(encoding="utf-8")
    else:
        text = resources.files("darkschema").joinpath("templates", f"{role}.txt").read_text(
            encoding="utf-8")
    return string.Template(text)


def render_prompt(request: AnalysisRequest, template_dir: str | Path | None = None) -> str:
    tmpl = load_template(TEMPLATE_FOR_KIND[request.kind], template_dir)
    ctx = request.context
    return tmpl.safe_substitute(
        subject=request.subject,
        context=json.dumps(ctx, indent=2, sort_keys=True, ensure_ascii=False),
        seed_context=ctx.get("seed_context", "") if isinstance(ctx, dict) else "",
        schema=json.dumps(RESPONSE_SCHEMAS[request.kind], indent=2, sort_keys=True),
    )


# --------------------------------------------------------------------------- http

class HttpAnalyzer(Analyzer):
    """Chat-completion client with schema-constrained output and bounded retries.

    Request body: ``model``, ``messages``, ``response_format`` (JSON schema),
    ``temperature`` and an optional ``effort``.  The response must carry the JSON
    text in ``content`` (or ``choices[0].message.content``) and token counts in
    ``usage.input_tokens``/``usage.output_tokens`` (or the prompt/completion names).
    """

    name = "http"

    def __init__(self, endpoint: str, model: str, api_key_env: str = "DARKSCHEMA_API_KEY",
                 max_retries: int = 3, backoff_base: float = 0.5, backoff_max: float = 8.0,
                 timeout: float = 60.0, template_dir: str | Path | None = None,
                 client: httpx.Client | None = None, sleep: Callable[[float], None] = time.sleep,
                 rng: random.Random | None = None):
        self.endpoint = endpoint
        self.model = model
        self.api_key_env = api_key_env
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self.backoff_max = backoff_max
        self.template_dir = template_dir
        self.client = client or httpx.Client(timeout=timeout)
        self.sleep = sleep
        self.rng = rng or random.Random()

    def _delay(self, attempt: int) -> float:
        # full jitter
        return self.rng.uniform(0, min(self.backoff_max, self.backoff_base * 2 ** attempt))

    def build_body(self, request: AnalysisRequest, repair: str | None = None) -> dict:
        messages = [
            {"role": "system", "content": "You document relational database schemas. "
                                          "Answer with JSON matching the response schema."},
            {"role": "user", "content": render_prompt(request, self.template_dir)},
        ]
        if repair:
            messages.append({"role": "user", "content": "The previous answer did not match the "
                                                        f"schema ({repair}). Return corrected JSON."})
        body = {
            "model": self.model,
            "messages": messages,
            "response_format": {"type": "json_schema",
                                "json_schema": {"name": request.kind.value.lower(),
                                                "schema": RESPONSE_SCHEMAS[request.kind]}},
            "temperature": request.temperature,
        }
        if request.effort:
            body["effort"] = request.effort
        return body

    def _post(self, body: dict) -> dict:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        last: Exception | None = None
        for attempt in range(self.max_retries + 1):
            try:
                resp = self.client.post(self.endpoint, json=body, headers=headers)
                if resp.status_code == 429 or resp.status_code >= 500:
                    raise httpx.HTTPStatusError(f"status {resp.status_code}",
                                                request=resp.request, response=resp)
                resp.raise_for_status()
                return resp.json()
            except (httpx.TransportError, httpx.HTTPStatusError) as exc:
                retryable = (isinstance(exc, httpx.TransportError)
                             or exc.response.status_code == 429
                             or exc.response.status_code >= 500)
                if not retryable:
                    raise AnalyzerTransportError(str(exc)) from exc
                last = exc
                if attempt < self.max_retries:
                    delay = self._delay(attempt)
                    logger.info("analyzer call failed (%s); retry %d in %.2fs", exc,
                                attempt + 1, delay)
                    self.sleep(delay)
        raise AnalyzerTransportError(
            f"analyzer endpoint failed after {self.max_retries + 1} attempts: {last}")

    def _complete(self, request, repair=None):
        data = self._post(self.build_body(request, repair))
        content = data.get("content")
        if content is None and data.get("choices"):
            content = data["choices"][0]["message"]["content"]
        usage_raw = data.get("usage", {})
        usage = TokenUsage(int(usage_raw.get("input_tokens", usage_raw.get("prompt_tokens", 0))),
                           int(usage_raw.get("output_tokens",
                                             usage_raw.get("completion_tokens", 0))))
        try:
            payload = json.loads(content) if isinstance(content, str) else content
        except json.JSONDecodeError:
            payload = {"_unparseable": content}
        return payload, usage
