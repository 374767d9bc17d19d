"""Stop a run with a tight token budget, resume it with a larger one, and compare bundles."""

import tempfile
from pathlib import Path

from darkschema.outputs import bundle_bytes
from darkschema.runner import RunConfig, orchestrate, resume

FIXTURE = Path(__file__).resolve().parents[1] / "fixtures" / "lousy8" / "manifest.json"


def config(root: Path, tokens: int | None) -> RunConfig:
    raw = {"snapshot": str(FIXTURE), "outputRoot": str(root)}
    if tokens:
        raw["guardrails"] = {"maxTokensPerRun": tokens}
    return RunConfig.from_dict(raw)


def main() -> None:
    root = Path(tempfile.mkdtemp())
    reference = orchestrate(config(root / "reference", None))
    used = sum(c["input_tokens"] + c["output_tokens"] for c in reference.state.counters.values())
    print(f"unconstrained run used {used} tokens")

    stopped = orchestrate(config(root / "tight", 14000))
    print(f"tight budget: completed={stopped.completed}")
    print(f"  breach: {stopped.breach}")
    print(f"  phases: {stopped.state.phase_status}")

    resumed = resume(stopped.run_dir / "state.json", config(root / "tight", 10 ** 7))
    same = bundle_bytes(resumed.outputs_dir) == bundle_bytes(reference.outputs_dir)
    print(f"resumed run completed={resumed.completed}; bundle identical to reference: {same}")


if __name__ == "__main__":
    main()
