"""Command line entry point: ``analyze``, ``compare`` and ``fixture generate``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .evaluate import compare, format_report
from .fixtures import PRESETS, fixture_readme, generate
from .ingest import load_truth
from .runner import ConfigError, ResumeError, orchestrate, resume
from .state import RunState


def _analyze(args) -> int:
    if bool(args.config) == bool(args.resume):
        print("analyze needs exactly one of --config or --resume", file=sys.stderr)
        return 2
    if args.resume:
        if args.max_iterations is not None or args.dry_run:
            print("--max-iterations and --dry-run only apply to fresh runs", file=sys.stderr)
            return 2
        result = resume(args.resume, args.guardrails_config)
    else:
        result = orchestrate(args.config, dry_run=args.dry_run,
                             max_iterations=args.max_iterations)
    print(f"run directory: {result.run_dir}")
    if result.breach:
        print(f"stopped by guardrail in {result.breach['phase']}: {result.breach['reason']}")
        print(f"resume with: darkschema analyze --resume {result.run_dir / 'state.json'}")
        return 3
    ref = result.state.refinement
    if ref is not None:
        print(f"iterations: {len(ref.log)} ({ref.stop_reason})")
    return 0


def _compare(args) -> int:
    state = RunState.load(args.state)
    report = compare(state, load_truth(args.truth))
    if args.json:
        print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    else:
        print(format_report(report))
    return 0


def _fixture(args) -> int:
    spec = PRESETS[args.name]
    out = Path(args.output or args.name)
    manifest = generate(spec, out)
    (out / "README.md").write_text(fixture_readme(spec), encoding="utf-8")
    print(f"wrote {manifest}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="darkschema", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="run the pipeline or resume an interrupted run")
    a.add_argument("--config", help="run configuration (JSON)")
    a.add_argument("--resume", metavar="STATE", help="state.json of an interrupted run")
    a.add_argument("--guardrails-config", metavar="CONFIG",
                   help="with --resume: config carrying new guardrails or output toggles")
    a.add_argument("--max-iterations", type=int)
    a.add_argument("--dry-run", action="store_true", help="ingestion and key discovery only")
    a.set_defaults(func=_analyze)

    c = sub.add_parser("compare", help="score a run against a truth file")
    c.add_argument("--state", required=True)
    c.add_argument("--truth", required=True)
    c.add_argument("--json", action="store_true")
    c.set_defaults(func=_compare)

    f = sub.add_parser("fixture", help="synthetic fixtures")
    fsub = f.add_subparsers(dest="fixture_command", required=True)
    g = fsub.add_parser("generate", help="write a preset fixture snapshot")
    g.add_argument("name", choices=sorted(PRESETS))
    g.add_argument("--output", "-o", help="target directory (default: ./<name>)")
    g.set_defaults(func=_fixture)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ResumeError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
