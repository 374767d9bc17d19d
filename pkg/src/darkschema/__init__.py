"""Reverse-engineer undocumented relational schemas: key discovery, dependency levels,
iterative description refinement and documentation outputs."""

from .analyzer import AnalysisRequest, AnalysisResponse, HttpAnalyzer, MockAnalyzer, RequestKind
from .evaluate import EvalReport, compare, overall_score
from .fixtures import PRESETS, FixtureSpec, generate
from .ingest import SchemaSnapshot, load_snapshot, load_truth, sample_rows
from .model import CanonicalType, ColumnMeta, Relationship, TableMeta, build_dependency_graph
from .runner import RunConfig, orchestrate, resume
from .state import RunState

__version__ = "0.1.0"

__all__ = [
    "AnalysisRequest", "AnalysisResponse", "CanonicalType", "ColumnMeta", "EvalReport",
    "FixtureSpec", "HttpAnalyzer", "MockAnalyzer", "PRESETS", "Relationship", "RequestKind",
    "RunConfig", "RunState", "SchemaSnapshot", "TableMeta", "build_dependency_graph", "compare",
    "generate", "load_snapshot", "load_truth", "orchestrate", "overall_score", "resume",
    "sample_rows",
]
