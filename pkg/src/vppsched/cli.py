"""Command-line front end.

    vpp-sched make-instance       --preset desk|day|full --out DIR
    vpp-sched generate-scenarios  --config FILE
    vpp-sched solve               --config FILE --method benders|extensive
                                  [--risk neutral|cvar] [--alpha A]
                                  [--workers N] [--out DIR]
    vpp-sched evaluate            --config FILE --solution DIR [--out DIR]
    vpp-sched tariff-sweep        --config FILE [--levels 0:1:0.1] [--out DIR]

Exit codes: 0 success, 2 usage or configuration error, 3 infeasible model,
4 convergence failure.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

from . import benders as bd
from . import reports as rp
from . import scenarios as sg
from . import stochastic as st
from .config import ConfigError, load_config
from .instance import PRESETS, write_instance

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INFEASIBLE = 3
EXIT_NO_CONVERGENCE = 4


class UsageError(Exception):
    pass


def _parse_levels(spec: str) -> list[float]:
    try:
        start, stop, step = (float(x) for x in spec.split(":"))
    except ValueError as exc:
        raise UsageError(f"bad --levels spec {spec!r}, expected start:stop:step") \
            from exc
    if step <= 0 or stop < start:
        raise UsageError(f"bad --levels range {spec!r}")
    levels = []
    k = 0
    while True:
        val = round(start + k * step, 10)
        if val > stop + 1e-9:
            break
        levels.append(val)
        k += 1
    return levels


def cmd_make_instance(args) -> int:
    if args.preset not in PRESETS:
        raise UsageError(f"unknown preset {args.preset!r}")
    inst = PRESETS[args.preset](seed=args.seed) if args.seed is not None \
        else PRESETS[args.preset]()
    path = write_instance(inst, args.out, scenario_count=args.scenario_count,
                          scenario_seed=args.scenario_seed)
    print(f"instance written, config at {path}")
    return EXIT_OK


def cmd_generate_scenarios(args) -> int:
    cfg = load_config(args.config)
    if cfg.scenario_count < 1:
        raise UsageError("scenario count must be at least 1")
    base = cfg.load_forecast()
    specs = cfg.error_specs()
    sset = sg.build_scenarios(base, specs, cfg.scenario_count,
                              cfg.scenario_seed)
    sg.save_scenario_set(sset, cfg.scenario_dir, cfg.horizon.step_hours,
                         cfg.horizon.rcm_window_hours, specs,
                         config_hash=cfg.config_hash)
    print(f"{len(sset)} scenarios written to {cfg.scenario_dir}")
    return EXIT_OK


def _load_scenarios(cfg):
    if not os.path.isdir(cfg.scenario_dir):
        raise UsageError(f"no scenario directory at {cfg.scenario_dir}; "
                         "run generate-scenarios first")
    sset, _ = sg.load_scenario_set(cfg.scenario_dir)
    return sset


def cmd_solve(args) -> int:
    cfg = load_config(args.config)
    model = cfg.build_model()
    sset = _load_scenarios(cfg)
    risk_kind = {"neutral": st.EXPECTATION, "cvar": st.CVAR}.get(
        args.risk or ("cvar" if cfg.risk_kind == st.CVAR else "neutral"))
    alpha = args.alpha if args.alpha is not None else cfg.alpha
    risk = st.RiskMeasure(risk_kind, alpha)
    opts_raw = cfg.benders_options
    if args.workers is not None:
        opts_raw["workers"] = args.workers
    opts = bd.BendersOptions(**opts_raw)
    out_dir = args.out or os.path.join(
        cfg.output_dir, f"solution_{args.method}_{risk.kind}")
    started = time.perf_counter()
    out = rp.solve_with_method(model, sset, risk, args.method, opts,
                               cfg.extensive_max_variables,
                               lp_dump_path=args.dump_lp)
    runtime = time.perf_counter() - started
    rp.write_solution(out_dir, model, sset, out, args.method, risk,
                      cfg.config_hash,
                      rp.scenario_manifest_hash(cfg.scenario_dir), runtime)
    status = "converged" if out.converged else "NOT CONVERGED"
    print(f"{args.method} objective {out.objective:.6f} ({status}), "
          f"artifacts in {out_dir}")
    if not out.converged:
        return EXIT_NO_CONVERGENCE
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = load_config(args.config)
    sset = _load_scenarios(cfg)
    report = rp.evaluate_solution(cfg, args.solution, sset)
    out_dir = args.out or os.path.join(args.solution, "evaluation")
    rp.write_profit_report(report, out_dir)
    print(f"expected profit {report.expected_profit:.4f} "
          f"(std {report.profit_std:.4f}, cost CVaR_{report.alpha:g} "
          f"{report.cost_cvar:.4f}); report in {out_dir}")
    return EXIT_OK


def cmd_tariff_sweep(args) -> int:
    cfg = load_config(args.config)
    model = cfg.build_model()
    sset = _load_scenarios(cfg)
    levels = _parse_levels(args.levels) if args.levels else None
    rows, profiles = rp.tariff_sweep(cfg, model, sset, levels)
    out_dir = args.out or os.path.join(cfg.output_dir, "tariff_sweep")
    rp.write_sweep_report(rows, profiles, out_dir, cfg.config_hash)
    failed = [r.level for r in rows if r.failed]
    print(f"sweep over {len(rows)} levels written to {out_dir}"
          + (f" ({len(failed)} failed levels: {failed})" if failed else ""))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vpp-sched",
        description="Multi-market scheduling of a virtual power plant "
                    "under uncertainty")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-instance", help="write a synthetic instance")
    p.add_argument("--preset", default="desk", help="desk, day, or full")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--scenario-count", type=int, default=10)
    p.add_argument("--scenario-seed", type=int, default=42)
    p.set_defaults(func=cmd_make_instance)

    p = sub.add_parser("generate-scenarios", help="sample and persist scenarios")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_generate_scenarios)

    p = sub.add_parser("solve", help="solve the two-stage program")
    p.add_argument("--config", required=True)
    p.add_argument("--method", required=True, choices=("benders", "extensive"))
    p.add_argument("--risk", choices=("neutral", "cvar"), default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--dump-lp", default=None, metavar="FILE",
                   help="also write the monolithic program in LP text format "
                        "(extensive method only)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("evaluate", help="profit report from a stored solution")
    p.add_argument("--config", required=True)
    p.add_argument("--solution", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("tariff-sweep", help="dynamic-tariff sensitivity sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--levels", default=None, help="start:stop:step, e.g. 0:1:0.1")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_tariff_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse already printed the message; normalize the code
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except (UsageError, ConfigError, sg.ScenarioError, rp.ReportError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (st.ModelInfeasible, bd.SubproblemInfeasible) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (st.StochasticError, bd.BendersError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
