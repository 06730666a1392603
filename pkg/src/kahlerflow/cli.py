"""Command-line interface.

Subcommands: run a scenario config, solve one elliptic comparison parameter,
run the full verification suite, fit a decay exponent from a series CSV, and
plot series columns to SVG.  The output root directory comes from the
KAHLERFLOW_OUT environment variable (default ./out) unless overridden.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np


def _load_config(path: str):
    from .harness import parse_config

    with open(path) as fh:
        doc = json.load(fh)
    return parse_config(doc, name=path.rsplit("/", 1)[-1].removesuffix(".json"))


def _cmd_run(args) -> int:
    from .harness import run_scenario

    config = _load_config(args.config)
    traj, summary, (csv_path, sum_path) = run_scenario(config, out_dir=args.out)
    print(f"wrote {csv_path}")
    print(f"wrote {sum_path}")
    bad = [v for v in summary["verdicts"] if not v["passed"]]
    for v in summary["verdicts"]:
        status = "PASS" if v["passed"] else "FAIL"
        print(f"  {status} {v['name']} ({v['anchor']}) margin={v['margin']:.3e}")
    if summary["failed"]:
        print(f"flow failed: {summary['failure']}", file=sys.stderr)
        return 2
    return 1 if bad else 0


def _cmd_elliptic(args) -> int:
    from .elliptic import apriori_bound_check, solve_psi

    config = _load_config(args.config)
    sol = solve_psi(args.s, config.model)
    rep = apriori_bound_check(sol, config.model)
    out = {
        "s": sol.s,
        "iterations": sol.iterations,
        "residual": sol.residual,
        "residual_trace": sol.residual_trace,
        "sup_psi": rep.sup_psi,
        "sup_bound": rep.sup_bound,
        "normalization_rel_err": rep.integral_rel_err,
    }
    print(json.dumps(out, indent=2))
    return 0


def _cmd_verify(args) -> int:
    from .verify import verify_all

    report = verify_all(out_dir=args.out, fast=args.fast)
    for line in report.lines():
        print(line)
    return 0 if report.all_passed else 1


def _cmd_fit_decay(args) -> int:
    from .harness import fit_decay
    from .trajio import read_trajectory_csv

    traj = read_trajectory_csv(args.series)
    s = traj.series("s")
    if np.any(np.isnan(s)):
        raise SystemExit("series has no s column; fit-decay needs the unnormalized view")
    max_r = np.maximum(np.abs(traj.series("sup_r")), np.abs(traj.series("inf_r")))
    lo, hi = (float(v) for v in args.window.split(":"))
    rep = fit_decay(s, max_r, (lo, hi))
    print(json.dumps({
        "slope": rep.slope, "intercept": rep.intercept,
        "window": list(rep.window), "residual_rms": rep.residual_rms,
        "count": rep.count,
    }, indent=2))
    return 0


def _cmd_plot(args) -> int:
    from .plots import plot
    from .trajio import read_trajectory_csv

    traj = read_trajectory_csv(args.series)
    columns = args.columns.split(",") if args.columns else ["sup_r", "inf_r"]
    if args.x == "s":
        x = traj.series("s")
        if np.any(np.isnan(x)):
            raise SystemExit("series has no s column")
        x = 1.0 + x
        xlabel = "1+s"
    else:
        x = traj.times()
        xlabel = "t"
    series = []
    for c in columns:
        y = traj.series(c)
        keep = ~np.isnan(y)
        if np.any(keep):
            series.append((c, x[keep], y[keep]))
    plot(series, args.output, loglog=args.loglog, xlabel=xlabel)
    print(f"wrote {args.output}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="kahlerflow",
        description="Collapsing Kahler potential flow laboratory",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="integrate a scenario config")
    p.add_argument("config")
    p.add_argument("-o", "--out", default=None, help="output directory")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("elliptic", help="solve one comparison parameter")
    p.add_argument("config")
    p.add_argument("--s", type=float, required=True)
    p.set_defaults(func=_cmd_elliptic)

    p = sub.add_parser("verify", help="run the acceptance verification suite")
    p.add_argument("-o", "--out", default=None)
    p.add_argument("--fast", action="store_true",
                   help="smaller grids (development only, not the acceptance gate)")
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("fit-decay", help="log-log decay slope from a series CSV")
    p.add_argument("series")
    p.add_argument("--window", required=True, help="lo:hi in s")
    p.set_defaults(func=_cmd_fit_decay)

    p = sub.add_parser("plot", help="plot series columns to SVG")
    p.add_argument("series")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--columns", default=None, help="comma-separated column names")
    p.add_argument("--x", choices=("t", "s"), default="t")
    p.add_argument("--loglog", action="store_true")
    p.set_defaults(func=_cmd_plot)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
