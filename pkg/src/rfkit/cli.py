"""Command-line front end: compress, operator gen/inspect, and the experiment sweeps."""

import argparse
import hashlib
import json
import os
import platform
import sys

import numpy as np
import scipy

from . import __version__
from .exceptions import RfkitError
from .harness import (
    ExperimentConfig,
    run_calcium_experiment,
    run_isometry_sweep,
    run_manifold_comparison,
    run_scaling_study,
    run_vorticity_experiment,
)
from .matrixio import ingest_matrix, write_matrix
from .operator import apply_batch, build_operator, deserialize_operator, serialize_operator

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2

RUNNERS = {
    "isometry": run_isometry_sweep,
    "calcium": run_calcium_experiment,
    "vorticity": run_vorticity_experiment,
    "manifold": run_manifold_comparison,
    "scaling": run_scaling_study,
}


class _Parser(argparse.ArgumentParser):
    """argparse defaults to exit code 2 on usage errors; the contract here is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class UsageError(Exception):
    """Flag combinations argparse cannot express on its own; exit code 1."""


def _versions():
    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "rfkit": __version__,
    }


def _write_cli_manifest(out_path, params, seeds):
    """Manifest beside a single-file output: parameters, their hash, versions."""
    canonical = json.dumps(params, sort_keys=True, separators=(",", ":"))
    manifest = {
        "config": params,
        "config_sha256": hashlib.sha256(canonical.encode()).hexdigest(),
        "seeds": seeds,
        "versions": _versions(),
    }
    path = f"{out_path}.manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _cmd_compress(args):
    X = ingest_matrix(args.infile)
    n = X.shape[0]
    if args.n is not None and args.n != n:
        raise ValueError(f"--n {args.n} does not match the {n} rows of {args.infile}")
    if args.m is None and args.ratio is None:
        raise UsageError("need --m or --ratio")
    m = args.m if args.m is not None else max(1, round(n / args.ratio))
    op = build_operator(n, m, args.seed)
    write_matrix(apply_batch(op, X), args.out)
    params = {"command": "compress", "n": n, "m": m, "seed": args.seed, "in": args.infile, "out": args.out}
    _write_cli_manifest(args.out, params, [args.seed])
    print(f"wrote {args.out} ({m} x {X.shape[1]})")
    return EXIT_OK


def _cmd_operator_gen(args):
    op = build_operator(args.n, args.m, args.seed)
    text = serialize_operator(op, extended=args.extended)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(text)
    params = {"command": "operator gen", "n": args.n, "m": args.m, "seed": args.seed, "out": args.out}
    _write_cli_manifest(args.out, params, [args.seed])
    print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_operator_inspect(args):
    with open(args.infile, encoding="utf-8") as fh:
        op = deserialize_operator(fh.read())
    info = {"n": op.n, "m": op.m, "seed": op.seed, "ratio": op.ratio, "scale": op.scale}
    print(json.dumps(info, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_experiment(args):
    config = ExperimentConfig.from_json(args.config)
    updates = config.to_dict()
    if args.seed is not None:
        updates["seed_base"] = args.seed
    if args.ratio is not None:
        updates["ratios"] = [args.ratio]
    if args.out is not None:
        updates["out_dir"] = args.out
    if args.full:
        updates["options"] = {**updates["options"], "full": True}
    if not updates["out_dir"]:
        updates["out_dir"] = os.path.join("runs", updates["experiment"])
    config = ExperimentConfig.from_dict(updates)
    result = RUNNERS[args.command](config)
    print(f"wrote {os.path.join(config.out_dir, 'results.csv')} ({len(result.rows)} rows)")
    return EXIT_OK


def build_parser():
    parser = _Parser(prog="rfkit", description="Randomized filtering toolkit")
    parser.add_argument("--version", action="version", version=f"rfkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("compress", help="project a matrix file through a seeded operator")
    p.add_argument("--n", type=int, default=None, help="expected input dimension (validated)")
    p.add_argument("--m", type=int, default=None, help="output dimension")
    p.add_argument("--ratio", type=float, default=None, help="compression ratio, alternative to --m")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--in", dest="infile", required=True, help="input matrix (RFM1 or CSV)")
    p.add_argument("--out", required=True, help="output RFM1 path")
    p.set_defaults(func=_cmd_compress)

    op = sub.add_parser("operator", help="generate or inspect a serialized operator")
    opsub = op.add_subparsers(dest="opcommand", required=True, parser_class=_Parser)
    g = opsub.add_parser("gen", help="build and serialize an operator")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--m", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--extended", action="store_true", help="include the sampled row set")
    g.set_defaults(func=_cmd_operator_gen)
    i = opsub.add_parser("inspect", help="print a serialized operator's parameters")
    i.add_argument("--in", dest="infile", required=True)
    i.set_defaults(func=_cmd_operator_inspect)

    for name in RUNNERS:
        e = sub.add_parser(name, help=f"run the {name} experiment from a config file")
        e.add_argument("--config", required=True, help="experiment config JSON (or a manifest)")
        e.add_argument("--seed", type=int, default=None, help="override the first seed")
        e.add_argument("--ratio", type=float, default=None, help="override the ratio list")
        e.add_argument("--out", default=None, help="override the output directory")
        e.add_argument("--full", action="store_true", help="paper-scale preset instead of desk scale")
        e.set_defaults(func=_cmd_experiment)

    return parser


def cli_main(argv):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage or version text
        code = exc.code
        return code if isinstance(code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"rfkit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RfkitError, OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"rfkit: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main():
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
