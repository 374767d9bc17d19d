"""Trace how a note planted on the deepest table of chain4 climbs one level per iteration."""

import tempfile
from pathlib import Path

from darkschema.model import build_dependency_graph
from darkschema.runner import RunConfig, orchestrate

FIXTURE = Path(__file__).resolve().parents[1] / "fixtures" / "chain4" / "manifest.json"


def main() -> None:
    config = RunConfig.from_dict({"snapshot": str(FIXTURE),
                                  "outputRoot": tempfile.mkdtemp(),
                                  "convergence": {"maxIterations": 5}})
    state = orchestrate(config).state
    ref = state.refinement
    for it in ref.log:
        changed = ", ".join(dict.fromkeys(it.changed_tables)) or "-"
        print(f"iteration {it.iteration}: material {it.material_changes}, "
              f"cosmetic {it.cosmetic_changes}, touched {changed}")
    print(f"stop reason: {ref.stop_reason}\n")
    graph = build_dependency_graph(state.tables, ref.relationships)
    for level, tables in enumerate(graph.levels):
        for table in tables:
            print(f"level {level} {table}: {ref.descriptions[table].text}")


if __name__ == "__main__":
    main()
