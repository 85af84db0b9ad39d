"""Command-line entry point: ``cpkern run`` and ``cpkern probe``."""

import argparse
import json
import sys

from .errors import ValidationError
from .probe import MAP_KINDS, run_probe
from .report import dumps
from .runner import EXIT_VALIDATION, load_scenario, run_tasks, validation_report


def _tol_pair(text):
    key, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    try:
        return key.strip(), float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"tolerance {key!r} needs a number") from None


def _dims(text):
    try:
        n, d = (int(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("dims must look like n,d") from None
    if n < 1 or d < 1:
        raise argparse.ArgumentTypeError("dims must be positive")
    return n, d


def _emit(report, out_path):
    text = dumps(report)
    if out_path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(out_path, "w") as fh:
            fh.write(text)


def cmd_run(args):
    try:
        with open(args.scenario) as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        _emit(validation_report(f"cannot read scenario: {exc}"), args.output)
        return EXIT_VALIDATION
    try:
        ctx = load_scenario(obj, dict(args.tol))
    except ValidationError as exc:
        seed = obj.get("seed") if isinstance(obj, dict) and isinstance(obj.get("seed"), int) else None
        _emit(validation_report(str(exc), seed), args.output)
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    ctx.workers = args.workers
    report, code = run_tasks(obj, ctx, args.emit_series, args.timing)
    _emit(report, args.output)
    return code


def cmd_probe(args):
    report = run_probe(args.instances, args.seed, args.dims, args.rank_deficient, args.maps, args.alphas)
    _emit(report, args.output)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="cpkern", description="Iterated CP maps on operator-valued kernels.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="execute a scenario file")
    r.add_argument("scenario")
    r.add_argument("-o", "--output", help="report path (default: stdout)")
    r.add_argument("--emit-series", metavar="DIR", help="write CSV series into DIR")
    r.add_argument("--tol", type=_tol_pair, action="append", default=[], metavar="KEY=VALUE",
                   help="override a tolerance (psd, rank, cert, adm, conv, expect)")
    r.add_argument("--workers", type=int, default=1, help="threads for Monte-Carlo trials")
    r.add_argument("--timing", action="store_true", help="include wall-clock timings in the report")
    r.set_defaults(func=cmd_run)

    q = sub.add_parser("probe", help="randomized search for premise violations")
    q.add_argument("--instances", type=int, default=100)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--dims", type=_dims, default=(2, 2), metavar="n,d")
    q.add_argument("--rank-deficient", action="store_true")
    q.add_argument("--maps", choices=MAP_KINDS, default="unital")
    q.add_argument("--alphas", type=int, default=8, help="random directions per instance")
    q.add_argument("-o", "--output", help="report path (default: stdout)")
    q.set_defaults(func=cmd_probe)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
