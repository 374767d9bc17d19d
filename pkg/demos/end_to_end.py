"""Discover keys on the lousy8 fixture, document it with the mock analyzer and grade it."""

import logging
import sys
import tempfile
from pathlib import Path

from darkschema.evaluate import compare, format_report
from darkschema.ingest import load_truth
from darkschema.runner import RunConfig, orchestrate

FIXTURE = Path(__file__).resolve().parents[1] / "fixtures" / "lousy8"


def main() -> None:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp())
    config = RunConfig.from_dict({"snapshot": str(FIXTURE / "manifest.json"),
                                  "outputRoot": str(out)})
    result = orchestrate(config)
    state = result.state

    print("\nPrimary keys")
    for table, cols in sorted(state.primary_keys.items()):
        print(f"  {table}: {', '.join(cols)}")
    print("\nForeign key candidates")
    for c in state.fk_candidates:
        verdict = "accepted" if c.accepted else (c.failed_gate or c.dropped or "below threshold")
        print(f"  {c.label():45s} {c.score:6.2f}  {verdict}")

    ref = state.refinement
    print(f"\nRefinement stopped after {len(ref.log)} iterations ({ref.stop_reason})")
    print(format_report(compare(state, load_truth(FIXTURE / "truth.json"))))
    print(f"\nArtifacts: {result.outputs_dir}")
    print((result.outputs_dir / "mermaid" / "erd.mmd").read_text())


if __name__ == "__main__":
    main()
