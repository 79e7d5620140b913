"""Command line entry point: ``billiards <task> --config <file> [--out <dir>] [--seed <int>]``.

Exit codes: 0 success, 2 domain finding or invalid scenario, 1 internal error.
"""
from __future__ import annotations

import argparse
import json
import sys
import traceback

from .scenario import (EXIT_FINDING, EXIT_INTERNAL, TASKS, ConfigError, ScenarioConfig,
                       run_scenario)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="billiards", description=__doc__.splitlines()[0])
    ap.add_argument("task", choices=TASKS, help="pipeline to run")
    ap.add_argument("--config", required=True, help="scenario JSON file")
    ap.add_argument("--out", help="output directory (overrides output.dir)")
    ap.add_argument("--seed", type=int, help="RNG seed (overrides rng_seed)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = ScenarioConfig.from_file(args.config, task=args.task, seed=args.seed, out=args.out)
    except ConfigError as exc:
        print(f"billiards: invalid scenario: {exc}", file=sys.stderr)
        return EXIT_FINDING
    except OSError as exc:
        print(f"billiards: cannot read scenario: {exc}", file=sys.stderr)
        return EXIT_FINDING
    try:
        rec = run_scenario(cfg)
    except ConfigError as exc:
        print(f"billiards: invalid scenario: {exc}", file=sys.stderr)
        return EXIT_FINDING
    except Exception:  # noqa: BLE001 - anything else is a bug
        traceback.print_exc()
        return EXIT_INTERNAL
    summary = {"task": rec.task, "status": rec.status, "scenario_hash": rec.scenario_hash,
               "out": str(cfg.out_dir), "artifacts": rec.artifacts}
    if rec.status != "ok":
        summary.update(rec.payload)
    print(json.dumps(summary))
    return rec.exit_code


if __name__ == "__main__":
    sys.exit(main())
