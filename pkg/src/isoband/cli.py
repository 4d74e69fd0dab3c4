"""Command line entry point: ``isoband run | bench | presets``."""

from __future__ import annotations

import argparse
import json
import sys

from .errors import IsobandError
from .pipeline import PROBLEM_PRESETS, ProblemSpec, bench, run_pipeline


def _load(path: str) -> ProblemSpec:
    if path in PROBLEM_PRESETS:
        return ProblemSpec.from_dict({"preset": path})
    return ProblemSpec.load(path)


def _cmd_run(args) -> int:
    spec = _load(args.spec)
    report = run_pipeline(spec, args.out, jobs=args.jobs, verify=args.verify)
    for name, chk in report.checks.items():
        status = "PASS" if chk["passed"] else "FAIL"
        print(f"{status}  {name:<24} value={chk['value']:.3e}  tol={chk['tol']:.1e}")
    if report.kappa is not None:
        print(f"kappa = {report.kappa.real:.12g} + {report.kappa.imag:.12g}i")
    print(f"bands: {report.bands_csv}")
    return 0 if report.passed else 1


def _cmd_bench(args) -> int:
    spec = _load(args.spec)
    table = bench(spec, repeat=args.repeat, jobs=args.jobs)
    width = max(len(s) for s in table)
    for stage, ms in table.items():
        print(f"{stage:<{width}}  {ms:10.2f} ms")
    print(f"{'total':<{width}}  {sum(table.values()):10.2f} ms")
    return 0


def _cmd_presets(args) -> int:
    for name, data in PROBLEM_PRESETS.items():
        extra = f" bc={data['bc']}" if "bc" in data else ""
        print(f"{name:<24} {data['geometry']}{extra}")
    if args.show:
        print(json.dumps(PROBLEM_PRESETS[args.show], indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="isoband", description="Band structures of periodic elliptic operators")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the pipeline on a problem JSON file or preset name")
    run.add_argument("spec")
    run.add_argument("--out", required=True)
    run.add_argument("--jobs", type=int, default=1)
    run.add_argument("--verify", choices=("fast", "full"), default="fast")
    run.set_defaults(fn=_cmd_run)

    b = sub.add_parser("bench", help="median per-stage timings")
    b.add_argument("spec")
    b.add_argument("--repeat", type=int, default=3)
    b.add_argument("--jobs", type=int, default=1)
    b.set_defaults(fn=_cmd_bench)

    p = sub.add_parser("presets", help="list built-in problems")
    p.add_argument("--show", choices=sorted(PROBLEM_PRESETS))
    p.set_defaults(fn=_cmd_presets)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except IsobandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
