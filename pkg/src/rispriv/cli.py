"""Command line front end.

Exit codes: 0 success, 1 bad arguments or bad configuration, 2 runtime
failure (numerical breakdown, unwritable output).
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace

import numpy as np

from .gradcheck import GRADCHECK_TOL, run_gradcheck
from .harness import (CONVERGENCE_COLUMNS, CSV_COLUMNS, SWEEP_PARAMS,
                      SweepSpec, _format_cell, run_aoa_study, run_convergence,
                      run_sweep, write_csv)
from .linalg import NumericalError
from .scenario import (PRIOR_SCENARIOS, config_from_dict, desk_config,
                       load_toml, paper_scale_config, watt_to_dbm)


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad flags; the contract here is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="TOML",
                        help="TOML file overriding the built-in instance")
    common.add_argument("--seed", type=int, help="base seed override")
    common.add_argument("--trials", type=int, help="Monte Carlo trials")
    common.add_argument("--out", metavar="CSV", help="write results here")
    common.add_argument("--no-ris", action="store_true",
                        help="remove the surface (m_R = 0)")
    common.add_argument("--prior", choices=sorted(PRIOR_SCENARIOS),
                        help="prior-knowledge scenario")
    common.add_argument("--paper-scale", action="store_true",
                        help="start from the full-size instance")
    common.add_argument("--n-mc", type=int,
                        help="observations per trial for the empirical NMSE")

    parser = _Parser(prog="rispriv",
                     description="transmitter-privacy simulation harness")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.add_parser("run", parents=[common],
                   help="optimize and score one operating point")
    p_sweep = sub.add_parser("sweep", parents=[common],
                             help="repeat across one swept parameter")
    p_sweep.add_argument("--param", choices=SWEEP_PARAMS,
                         help="which knob to sweep")
    p_sweep.add_argument("--values", help="comma separated sweep values")
    p_aoa = sub.add_parser("aoa", parents=[common],
                           help="direction-finding error with and without the surface")
    p_aoa.add_argument("--grid-step", type=float,
                       help="spectrum grid step in degrees")
    p_grad = sub.add_parser("gradcheck", parents=[common],
                            help="finite-difference check of the gradients")
    p_grad.add_argument("--points", type=int, default=20,
                        help="random evaluation points")
    sub.add_parser("convergence", parents=[common],
                   help="trace one optimizer run iteration by iteration")
    return parser


def _resolve(args):
    """Config plus any harness tables from the TOML file."""
    base = paper_scale_config() if args.paper_scale else desk_config()
    tables = {}
    if args.config:
        try:
            data = load_toml(args.config)
        except FileNotFoundError as exc:
            raise ValueError(f"config file not found: {args.config}") from exc
        tables = {k: data[k] for k in ("sweep", "aoa", "harness") if k in data}
        cfg = config_from_dict(data, base=base)
    else:
        cfg = base
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg, tables


def _emit(rows, out, columns=None):
    cols = columns if columns is not None else CSV_COLUMNS
    for row in rows:
        parts = [f"{c}={_format_cell(row.get(c, ''))}"
                 for c in cols if row.get(c, "") != ""]
        print(" ".join(parts))
    if out:
        write_csv(out, rows, cols)


def _cmd_run(args) -> int:
    cfg, tables = _resolve(args)
    table = tables.get("harness", {})
    spec = SweepSpec(param="p_max_dbm",
                     values=[watt_to_dbm(cfg.p_max)],
                     trials=args.trials or int(table.get("trials", 20)),
                     scenario=args.prior or table.get("scenario", "imperfect_both"),
                     ris_enabled=not args.no_ris,
                     n_mc=args.n_mc or int(table.get("n_mc", 200)))
    rows, _ = run_sweep(spec, cfg)
    _emit(rows, args.out)
    return 0


def _cmd_sweep(args) -> int:
    cfg, tables = _resolve(args)
    table = tables.get("sweep", {})
    param = args.param or table.get("param")
    if not param:
        raise ValueError("sweep needs --param or a [sweep] table with one")
    raw = args.values if args.values is not None else table.get("values")
    if raw is None:
        raise ValueError("sweep needs --values or a [sweep] table with them")
    values = ([float(v) for v in raw.split(",")] if isinstance(raw, str)
              else [float(v) for v in raw])
    spec = SweepSpec(param=param, values=values,
                     trials=args.trials or int(table.get("trials", 20)),
                     scenario=args.prior or table.get("scenario", "imperfect_both"),
                     ris_enabled=not args.no_ris,
                     n_mc=args.n_mc or int(table.get("n_mc", 200)))
    rows, _ = run_sweep(spec, cfg)
    _emit(rows, args.out)
    return 0


def _cmd_aoa(args) -> int:
    cfg, tables = _resolve(args)
    table = tables.get("aoa", {})
    grid = args.grid_step if args.grid_step is not None else float(
        table.get("grid_step", 0.1))
    rows, true_deg = run_aoa_study(
        cfg,
        trials=args.trials or int(table.get("trials", 100)),
        scenario=args.prior or table.get("scenario", "imperfect_S"),
        grid_step=grid,
        with_surface=not args.no_ris)
    print(f"true bearing {true_deg:.2f} deg")
    _emit(rows, args.out)
    return 0


def _cmd_gradcheck(args) -> int:
    seed = args.seed if args.seed is not None else 0
    results = [run_gradcheck(n_points=args.points, seed=seed),
               run_gradcheck(n_points=max(args.points // 4, 1), seed=seed + 1,
                             structured=False)]
    for res in results:
        tag = "factored" if res["structured"] else "dense"
        blocks = " ".join(f"{k}={v:.3e}" for k, v in res["per_block"].items())
        print(f"{tag}: max_rel_error={res['max_rel_error']:.3e} ({blocks})")
    worst = max(r["max_rel_error"] for r in results)
    ok = worst <= GRADCHECK_TOL
    print(f"{'PASS' if ok else 'FAIL'}: worst relative error {worst:.3e} "
          f"(tolerance {GRADCHECK_TOL:g})")
    return 0 if ok else 1


def _cmd_convergence(args) -> int:
    cfg, _ = _resolve(args)
    if args.no_ris:
        cfg = replace(cfg, m_R=0)
    scenario = args.prior or "imperfect_both"
    rng = np.random.default_rng(cfg.seed)
    rows, report = run_convergence(cfg, scenario, rng)
    last = rows[-1]
    print(f"{len(rows)} recorded iterations, reason={report.reason}, "
          f"objective={last['objective']:.6g}, residual={last['residual']:.3e}, "
          f"rate={last['rate']:.4f}")
    if args.out:
        write_csv(args.out, rows, CONVERGENCE_COLUMNS)
    return 0


_HANDLERS = {
    "run": _cmd_run,
    "sweep": _cmd_sweep,
    "aoa": _cmd_aoa,
    "gradcheck": _cmd_gradcheck,
    "convergence": _cmd_convergence,
}


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        return _HANDLERS[args.command](args)
    except (ValueError, KeyError) as exc:
        print(f"rispriv: error: {exc}", file=sys.stderr)
        return 1
    except (NumericalError, np.linalg.LinAlgError, OSError) as exc:
        print(f"rispriv: failure: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
