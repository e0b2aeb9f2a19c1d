"""``iml`` command line: run, validate and list experiments.

Exit codes: 0 when every pass flag is true, 2 when a run completes with
failed checks, 1 on any error.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import IMLError
from .experiments import ExperimentConfig, list_experiments, run, validate

OK, FAILED_CHECKS, ERROR = 0, 2, 1


def _parser():
    p = argparse.ArgumentParser(prog="iml", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment from a JSON config")
    r.add_argument("config")
    v = sub.add_parser("validate", help="check a config without running it")
    v.add_argument("config")
    sub.add_parser("list-experiments", help="print experiment ids and what they test")
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        if args.command == "list-experiments":
            for name, claim in list_experiments():
                print(f"{name:20s} {claim}")
            return OK
        config = ExperimentConfig.load(args.config)
        if args.command == "validate":
            resolved = validate(config)
            print(json.dumps({"experiment": config.experiment, **resolved}, indent=1,
                             default=str))
            return OK
        result = run(config)
    except (IMLError, OSError) as exc:
        print(f"iml: error: {exc}", file=sys.stderr)
        return ERROR
    for name, ok in result.checks.items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    print(f"summary: {result.run_dir / 'summary.json'}")
    return OK if result.passed else FAILED_CHECKS


if __name__ == "__main__":
    sys.exit(main())
