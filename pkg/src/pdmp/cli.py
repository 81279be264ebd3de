"""Command-line entry points: run, sweep, rate, spectral."""

import argparse
import json
import sys

import numpy as np

from . import harness, rates, spectral
from .potentials import PotentialMeta


def _sig6(x) -> str:
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def _print_rows(report):
    cols = ["name", "process", "d", "gamma", "nu_hat", "nu_stderr",
            "nu_theory", "nu_spec", "z_worst"]
    widths = {c: len(c) for c in cols}
    table = []
    for row in report.rows:
        cells = {c: _sig6(row.get(c, "")) for c in cols}
        table.append(cells)
        for c in cols:
            widths[c] = max(widths[c], len(cells[c]))
    print("  ".join(c.ljust(widths[c]) for c in cols))
    for cells in table:
        print("  ".join(cells[c].ljust(widths[c]) for c in cols))


def _cmd_run(args):
    report = harness.run_experiment(args.config)
    _print_rows(report)
    if args.out:
        path = report.write(args.out)
        print(f"wrote {path}")
    return 0


def _parse_overrides(pairs):
    out = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise SystemExit(f"--set expects key=value, got {pair!r}")
        key, val = pair.split("=", 1)
        try:
            parsed = json.loads(val)
        except json.JSONDecodeError:
            parsed = val
        out[key] = parsed
    return out


def _cmd_sweep(args):
    report = harness.run_sweep(args.preset, _parse_overrides(args.set))
    _print_rows(report)
    out = args.out or f"runs/{args.preset}"
    path = report.write(out)
    print(f"wrote {path}")
    return 0


def _meta_from_args(args) -> PotentialMeta:
    hess_lower = args.hess_lower_neg
    if args.convex:
        hess_lower = 0.0
    return PotentialMeta(m_poincare=args.m, hess_upper=args.hess_upper,
                         hess_lower_neg=hess_lower, growth_M=args.growth_M,
                         is_convex=args.convex)


def _cmd_rate(args):
    meta = _meta_from_args(args)
    gamma = None if args.gamma == "auto" else float(args.gamma)
    rep = rates.build_rate_report(args.process, meta, args.d, gamma=gamma,
                                  c_universal=args.c_universal)
    if args.json:
        print(json.dumps(rep.__dict__, indent=2))
        return 0
    for field in ("process", "d", "m", "r", "r_zz", "gamma", "gamma_opt",
                  "nu_lower", "nu_lower_opt", "window_opt",
                  "cj_at_window_opt", "c_universal"):
        print(f"{field:>16}  {_sig6(getattr(rep, field))}")
    return 0


def _cmd_spectral(args):
    gen = spectral.assemble_generator_1d(args.process, args.m, args.gamma,
                                         n_trunc=args.ntrunc)
    dt = args.dt if args.dt else spectral.suggested_dt(gen)
    nu, curve = spectral.decay_rate_spectral(gen, spectral.x_mode(args.ntrunc),
                                             horizon=args.horizon, dt=dt)
    print(f"nu_spec  {nu:.6g}")
    if args.out:
        lines = ["t,norm"] + [f"{t:.17g},{n:.17g}" for t, n in curve]
        with open(args.out, "w") as fh:
            fh.write("\n".join(lines) + "\n")
        print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="pdmp",
        description="Event-driven continuous-time samplers with "
                    "rate diagnostics.")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment from a TOML config")
    run.add_argument("--config", required=True)
    run.add_argument("--out", help="directory for report.csv/json and curves")
    run.set_defaults(fn=_cmd_run)

    sweep = sub.add_parser("sweep", help="run a named preset")
    sweep.add_argument("--preset", required=True,
                       help=", ".join(sorted(harness.PRESETS)))
    sweep.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config field on every row")
    sweep.add_argument("--out")
    sweep.set_defaults(fn=_cmd_sweep)

    rate = sub.add_parser("rate", help="theoretical rate report")
    rate.add_argument("--process", required=True,
                      choices=["rhmc", "zz", "bps"])
    rate.add_argument("--m", type=float, required=True,
                      help="spectral-gap constant of the target")
    rate.add_argument("--d", type=int, default=1)
    rate.add_argument("--gamma", default="auto")
    rate.add_argument("--hess-upper", dest="hess_upper", type=float,
                      default=float("inf"))
    rate.add_argument("--hess-lower-neg", dest="hess_lower_neg", type=float,
                      default=None,
                      help="L with Hessian >= -L (omit if unknown)")
    rate.add_argument("--growth-M", dest="growth_M", type=float, default=1.0)
    rate.add_argument("--convex", action="store_true")
    rate.add_argument("--c-universal", dest="c_universal", type=float,
                      default=1.0)
    rate.add_argument("--json", action="store_true")
    rate.set_defaults(fn=_cmd_rate)

    spec = sub.add_parser("spectral", help="truncated-generator decay rate")
    spec.add_argument("--process", required=True,
                      choices=["rhmc", "zz", "bps"])
    spec.add_argument("--m", type=float, default=1.0)
    spec.add_argument("--gamma", type=float, required=True)
    spec.add_argument("--ntrunc", type=int, default=32)
    spec.add_argument("--horizon", type=float, default=40.0)
    spec.add_argument("--dt", type=float, default=0.0,
                      help="0 picks the largest stable step")
    spec.add_argument("--out", help="norm curve CSV path")
    spec.set_defaults(fn=_cmd_spectral)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (harness.ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except harness.ChainFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
