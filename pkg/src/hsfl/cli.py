"""Command-line entry point: ``hsfl {solve-round,simulate,sweep,baselines,selftest}``."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .channel import draw_round_channels
from .config import ConfigError, load_config, validate
from .delay import RoundEnv
from .orchestrator import SCHEMES, TRACE_COLUMNS, bcd_solve, channel_rng, check_feasibility, decision_rng, run_schedule, sweep_weights
from .outputs import CHANNEL_COLUMNS, SUMMARY_COLUMNS, SWEEP_COLUMNS, channel_rows, trace_rows, write_csv, write_json
from .selftest import run_selftest
from .trainer import HybridTrainer, TrainingDiverged

EXIT_OK, EXIT_INVARIANT, EXIT_USAGE = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hsfl", description="Hybrid split/federated learning round scheduler and simulator.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("solve-round", "solve one round and write solution.json"),
        ("simulate", "run schemes for several rounds and write trace CSVs"),
        ("sweep", "grid over (rho1, rho2 index) and write sweep.csv"),
        ("baselines", "train every scheme to a loss target and write baselines.csv"),
        ("selftest", "run oracle checks"),
    ):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--config", type=Path, help="JSON config (defaults when omitted)")
        s.add_argument("--seed", type=int)
        s.add_argument("--out", type=Path, help="output directory")
        if name in ("simulate", "sweep", "baselines"):
            s.add_argument("--rounds", type=int)
        if name == "simulate":
            s.add_argument("--scheme", action="append", choices=SCHEMES, help="repeatable; default: config schemes")
            s.add_argument("--train", action="store_true", help="attach the toy trainer")
        if name in ("baselines", "sweep"):
            s.add_argument("--target-loss", type=float)
        if name == "baselines":
            s.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds")
    return p


def _trainer(cfg, data, seed):
    return HybridTrainer(data, eta=cfg.eta, seed=seed)


def cmd_solve_round(cfg, out: Path) -> int:
    scenario, _ = cfg.build()
    env = RoundEnv(scenario, draw_round_channels(scenario, channel_rng(cfg.seed, 0), cfg.scenario.fading), cfg.model_profile())
    sol = bcd_solve(env, cfg.hyperweights(), decision_rng(cfg.seed, 0), cfg.tolerances)
    problems = check_feasibility(sol, env, cfg.tolerances.eps2)
    payload = sol.to_dict()
    payload["feasibility_violations"] = problems
    write_json(out / "solution.json", payload)
    print(f"u={sol.u:.6g} u_lb={sol.u_lb:.6g} u_ub={sol.u_ub:.6g} K_S={sol.num_sl} T={sol.allocation.t_round:.6g}s")
    return EXIT_INVARIANT if problems else EXIT_OK


def cmd_simulate(cfg, out: Path, schemes, train: bool) -> int:
    scenario, data = cfg.build()
    profile = cfg.model_profile()
    for scheme in schemes:
        trainer = _trainer(cfg, data, cfg.seed) if train else None
        res = run_schedule(
            scenario, profile, cfg.hyperweights(), cfg.rounds, scheme, cfg.seed, trainer, cfg.target_loss, cfg.tolerances,
            cfg.scenario.fading,
        )
        write_csv(out / f"trace_{scheme}.csv", TRACE_COLUMNS, trace_rows(res))
        write_csv(out / f"channels_{scheme}.csv", CHANNEL_COLUMNS, channel_rows(res))
        print(f"{scheme}: rounds={len(res.rows)} cumulative_delay={res.cumulative_delay:.6g}s")
    return EXIT_OK


def cmd_sweep(cfg, out: Path) -> int:
    scenario, data = cfg.build()
    factory = (lambda: _trainer(cfg, data, cfg.seed)) if cfg.train or cfg.target_loss is not None else None
    table = sweep_weights(
        scenario, cfg.model_profile(), cfg.sweep.rho1, cfg.sweep.rho2_index, cfg.rounds, cfg.seed, factory,
        cfg.target_loss, cfg.tolerances,
    )
    write_csv(out / "sweep.csv", SWEEP_COLUMNS, table)
    print(f"sweep: {len(table)} cells")
    return EXIT_OK


def cmd_baselines(cfg, out: Path, seeds: int) -> int:
    if cfg.target_loss is None:
        raise ConfigError("target_loss", "baselines need a loss target")
    rows = []
    for seed in range(cfg.seed, cfg.seed + seeds):
        run_cfg = replace(cfg, seed=seed)
        scenario, data = run_cfg.build()
        for scheme in cfg.schemes:
            res = run_schedule(
                scenario, run_cfg.model_profile(), cfg.hyperweights(), cfg.rounds, scheme, seed,
                _trainer(cfg, data, seed), cfg.target_loss, cfg.tolerances, cfg.scenario.fading,
            )
            write_csv(out / f"trace_{scheme}_seed{seed}.csv", TRACE_COLUMNS, trace_rows(res))
            rows.append(
                {
                    "seed": seed,
                    "scheme": scheme,
                    "rounds": len(res.rows),
                    "rounds_to_target": res.rounds_to_target,
                    "cumulative_delay": res.cumulative_delay,
                    "final_loss": res.rows[-1]["loss"],
                }
            )
            print(f"seed {seed} {scheme}: rounds_to_target={res.rounds_to_target} delay={res.cumulative_delay:.6g}s")
    write_csv(out / "baselines.csv", SUMMARY_COLUMNS, rows)
    return EXIT_OK


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        cfg = load_config(args.config)
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if getattr(args, "rounds", None) is not None:
            overrides["rounds"] = args.rounds
        if getattr(args, "target_loss", None) is not None:
            overrides["target_loss"] = args.target_loss
        if overrides:
            cfg = validate(replace(cfg, **overrides))
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    if args.command == "selftest":
        return EXIT_OK if run_selftest() else EXIT_INVARIANT

    out = args.out or Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        if args.command == "solve-round":
            return cmd_solve_round(cfg, out)
        if args.command == "simulate":
            return cmd_simulate(cfg, out, args.scheme or cfg.schemes, args.train or cfg.train)
        if args.command == "sweep":
            return cmd_sweep(cfg, out)
        return cmd_baselines(cfg, out, args.seeds)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
