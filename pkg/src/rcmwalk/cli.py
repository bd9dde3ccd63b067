"""Command-line front end.

Subcommands: sample, kernel, coarse, iso, gn, traps, run, report.
Exit codes: 0 on success, 1 when an invariant check fails, 2 on usage or
configuration errors.  RCMWALK_OUT sets the default output root.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import __version__
from .experiments import ConfigError, ExperimentConfig, RunManifest, emit_report, run_experiment
from .field import load_field, sample_field, save_field
from .kernel import fit_decay, mc_return, return_series
from .laws import ConductanceLaw, LawError
from . import laws as _laws


def _default_out():
    return os.environ.get("RCMWALK_OUT", ".")


def _parse_law(args) -> ConductanceLaw:
    if getattr(args, "law_file", None):
        with open(args.law_file) as fh:
            return ConductanceLaw.from_json(fh.read())
    if getattr(args, "law_json", None):
        return ConductanceLaw.from_json(args.law_json)
    if getattr(args, "law", None):
        name, *params = args.law.split(":")
        params = [float(p) for p in params]
        if name == "homogeneous":
            return _laws.homogeneous(*params)
        if name == "bernoulli":
            return _laws.bernoulli_perc(*params)
        if name == "two-value":
            return _laws.two_value(params[0], int(params[1]))
        if name == "dyadic":
            return _laws.dyadic_polylog(*params)
        raise LawError(f"unknown law shorthand {name!r}")
    raise LawError("no law given (use --law, --law-json or --law-file)")


def _load_or_sample(args):
    if getattr(args, "field", None):
        return load_field(args.field)
    law = _parse_law(args)
    return sample_field(args.d, args.L, law, args.seed)


def _add_field_args(p, need_geometry=True):
    p.add_argument("--field", help="path to an RCMF field file")
    p.add_argument("--law", help="shorthand law, e.g. two-value:0.7:10")
    p.add_argument("--law-json", help="law descriptor as inline JSON")
    p.add_argument("--law-file", help="path to a law descriptor JSON file")
    if need_geometry:
        p.add_argument("--d", type=int, default=2)
        p.add_argument("--L", type=int, default=20)
        p.add_argument("--seed", type=int, default=0)


def _cmd_sample(args):
    law = _parse_law(args)
    fld = sample_field(args.d, args.L, law, args.seed)
    out = args.out or os.path.join(_default_out(), "field.rcmf")
    save_field(fld, out)
    print(f"wrote {out}  digest {fld.digest()}")
    return 0


def _cmd_kernel(args):
    fld = _load_or_sample(args)
    source = tuple(int(c) for c in args.source.split(","))
    if args.mode == "exact":
        series = return_series(fld, source, args.n_max, stride=args.stride, alpha=args.alpha)
        out = args.out or os.path.join(_default_out(), "series.csv")
        series.to_csv(out)
        series.plot_data(os.path.splitext(out)[0] + ".dat")
        print(f"wrote {out} ({len(series.entries)} entries)")
        if args.fit_min is not None and args.fit_max is not None:
            fit = fit_decay(series, (args.fit_min, args.fit_max), with_log=args.with_log)
            print(fit.summary())
    else:
        est, se = mc_return(fld, source, args.n_max, args.walkers, args.mc_seed)
        print(f"mc_return n={args.n_max} walkers={args.walkers}: {est!r} +- {se!r}")
    return 0


def _cmd_coarse(args):
    cfg = ExperimentConfig(
        kind="coarse-check",
        d=args.d,
        L=args.L,
        seed=args.seed,
        outdir=args.out or os.path.join(_default_out(), "coarse"),
        law=_parse_law(args),
        alpha=args.alpha,
        params={"anchors": args.anchors},
    )
    manifest = run_experiment(cfg)
    text, ok = emit_report(manifest)
    print(text)
    return 0 if ok else 1


def _cmd_iso(args):
    cfg = ExperimentConfig(
        kind="iso-profile",
        d=args.d,
        L=args.L,
        seed=args.seed,
        outdir=args.out or os.path.join(_default_out(), "iso"),
        law=_parse_law(args),
        alpha=args.alpha,
        params={"mode": args.mode, "budget": args.budget}
        | ({"r_max": args.r_max} if args.r_max is not None else {}),
    )
    manifest = run_experiment(cfg)
    text, ok = emit_report(manifest)
    print(text)
    return 0 if ok else 1


def _cmd_gn(args):
    cfg = ExperimentConfig(
        kind="gn-scan",
        d=args.d,
        L=max(args.N_grid),
        seed=args.seed,
        outdir=args.out or os.path.join(_default_out(), "gn"),
        ensemble=args.ensemble,
        params={"p": args.p, "N_grid": args.N_grid},
    )
    manifest = run_experiment(cfg)
    text, ok = emit_report(manifest)
    print(text)
    return 0 if ok else 1


def _cmd_traps(args):
    cfg = ExperimentConfig(
        kind="trap-census",
        d=args.d,
        L=args.L,
        seed=args.seed,
        outdir=args.out or os.path.join(_default_out(), "traps"),
        law=_parse_law(args),
        alpha=args.alpha,
        n_grid=tuple(args.n_grid or ()),
        ensemble=args.ensemble,
        params={"weak_max": args.weak_max},
    )
    manifest = run_experiment(cfg)
    text, ok = emit_report(manifest)
    print(text)
    return 0 if ok else 1


def _cmd_run(args):
    with open(args.config) as fh:
        cfg = ExperimentConfig.from_json(fh.read())
    manifest = run_experiment(cfg, max_workers=args.workers)
    text, ok = emit_report(manifest)
    print(text)
    return 0 if ok else 1


def _cmd_report(args):
    manifest = RunManifest.load(args.manifest)
    text, ok = emit_report(manifest)
    print(text)
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rcmwalk",
        description="random walks among bounded random conductances",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="sample a field and write an RCMF file")
    _add_field_args(p)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("kernel", help="exact or MC return probabilities")
    _add_field_args(p)
    p.add_argument("--source", default="0,0")
    p.add_argument("--mode", choices=("exact", "mc"), default="exact")
    p.add_argument("--n-max", type=int, default=64)
    p.add_argument("--stride", type=int, default=2)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--walkers", type=int, default=100_000)
    p.add_argument("--mc-seed", type=int, default=1)
    p.add_argument("--fit-min", type=int, default=None)
    p.add_argument("--fit-max", type=int, default=None)
    p.add_argument("--with-log", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_kernel)

    p = sub.add_parser("coarse", help="coarse-grained walk census")
    _add_field_args(p)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--anchors", type=int, default=100)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_coarse)

    p = sub.add_parser("iso", help="isoperimetric profile of a small field")
    _add_field_args(p)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--mode", choices=("exhaustive", "heuristic"), default="heuristic")
    p.add_argument("--budget", type=int, default=200)
    p.add_argument("--r-max", type=float, default=None)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_iso)

    p = sub.add_parser("gn", help="block renormalization event probability scan")
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--N-grid", type=int, nargs="+", required=True)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--ensemble", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_gn)

    p = sub.add_parser("traps", help="trap census and distance-weighted sums")
    _add_field_args(p)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--weak-max", type=float, default=0.5)
    p.add_argument("--n-grid", type=int, nargs="*", default=None)
    p.add_argument("--ensemble", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_traps)

    p = sub.add_parser("run", help="run an experiment config (JSON)")
    p.add_argument("--config", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("report", help="render a manifest as a report")
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, LawError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
