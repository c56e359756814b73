"""Command-line entry points.

Subcommands cover the full pipeline: gen-scenarios -> train ->
sample-prior / refine -> evaluate -> report. Every command that draws
randomness takes --seed, and fixed seeds reproduce outputs byte for
byte on a given platform.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .dynamics import builtin_fleet, get_vehicle, load_fleet
from .env import TargetTrajectory, default_distance_tolerance
from .evaluate import ExperimentConfig, compare, emit_report, format_report, load_report
from .nn import load_policy, load_value, save_policy, save_value
from .ppo import PpoConfig, train
from .prior import (
    BurnIn,
    PriorConfig,
    default_scenario_specs,
    generate_scenario,
    sample_prior,
    training_scenarios,
)
from .refine import refine


def _fleet(args):
    return load_fleet(args.fleet) if getattr(args, "fleet", None) else builtin_fleet()


def _add_fleet_arg(parser):
    parser.add_argument("--fleet", default=None,
                        help="optional fleet JSON instead of the builtin one")


def cmd_gen_scenarios(args) -> int:
    vehicle = get_vehicle(args.vehicle, _fleet(args))
    os.makedirs(args.out, exist_ok=True)
    specs = default_scenario_specs(vehicle)
    names = args.scenarios.split(",") if args.scenarios != "all" else list(specs)
    for name in names:
        if name not in specs:
            print(f"unknown scenario kind {name!r} (known: {sorted(specs)})",
                  file=sys.stderr)
            return 2
        traj = generate_scenario(specs[name], vehicle)
        path = os.path.join(args.out, f"{name}.csv")
        traj.to_csv(path)
        print(f"{name}: {len(traj)} waypoints -> {path}")
    return 0


def cmd_train(args) -> int:
    vehicle = get_vehicle(args.vehicle, _fleet(args))
    config = PpoConfig.from_json(args.config) if args.config else PpoConfig()
    if args.total_steps is not None:
        config.total_steps = args.total_steps
    if args.scenarios == "all":
        scenarios = training_scenarios(vehicle)
    else:
        specs = default_scenario_specs(vehicle)
        scenarios = []
        for name in args.scenarios.split(","):
            if name.endswith(".csv"):
                scenarios.append(TargetTrajectory.from_csv(name))
            elif name in specs:
                scenarios.append(generate_scenario(specs[name], vehicle))
            else:
                print(f"unknown scenario {name!r} (known: {sorted(specs)})",
                      file=sys.stderr)
                return 2
    rng = np.random.default_rng(args.seed)
    policy, valuenet, log = train(None, vehicle, scenarios, config, rng)
    out = os.path.join(args.out, vehicle.name)
    os.makedirs(out, exist_ok=True)
    save_policy(policy, os.path.join(out, "policy.json"))
    save_value(valuenet, os.path.join(out, "value.json"))
    log.to_csv(os.path.join(out, "training_log.csv"))
    last = log.records[-1]
    print(f"trained {vehicle.name} for {last.env_steps} env steps; "
          f"final mean hit fraction {last.mean_hit_fraction:.3f} "
          f"-> {out}")
    return 0


def cmd_sample_prior(args) -> int:
    burnin = BurnIn.from_csv(args.burnin)
    config = PriorConfig.from_json(args.config) if args.config else PriorConfig()
    rng = np.random.default_rng(args.seed)
    os.makedirs(args.out, exist_ok=True)
    for i in range(args.n):
        traj = sample_prior(burnin, config, rng)
        traj.to_csv(os.path.join(args.out, f"candidate_{i:03d}.csv"))
    print(f"wrote {args.n} candidates -> {args.out}")
    return 0


def cmd_refine(args) -> int:
    vehicle = get_vehicle(args.vehicle, _fleet(args))
    policy = load_policy(args.policy)
    valuenet = load_value(args.value)
    burnin = BurnIn.from_csv(args.burnin)
    config = PriorConfig.from_json(args.prior_config) if args.prior_config \
        else PriorConfig()
    rng = np.random.default_rng(args.seed)

    def sampler(b, r):
        return sample_prior(b, config, r)

    result = refine(sampler, policy, valuenet, vehicle, burnin,
                    count=args.num_candidates, rng=rng)
    os.makedirs(args.out, exist_ok=True)
    table = os.path.join(args.out, "candidates.csv")
    with open(table, "w", encoding="utf-8") as fh:
        fh.write("sample_id,s0_value,weight,selected_flag\n")
        for c in result.candidates:
            flag = 1 if c.index == result.selected.index else 0
            fh.write(f"{c.index},{c.score!r},{c.weight!r},{flag}\n")
    for c in result.candidates:
        c.trajectory.to_csv(os.path.join(args.out, f"candidate_{c.index:03d}.csv"))
    result.selected.trajectory.to_csv(os.path.join(args.out, "selected.csv"))
    print(f"selected candidate {result.selected.index} "
          f"(s0 value {result.selected.score:.3f}, "
          f"weight {result.selected.weight:.4f}, "
          f"log evidence {result.log_evidence:.3f}) -> {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    config = ExperimentConfig.from_json(args.config)
    report = compare(config)
    paths = emit_report(report, args.out)
    print(f"wrote {paths['comparison']}")
    if "weighted" in paths:
        print(f"wrote {paths['weighted']}")
    return 0


def cmd_report(args) -> int:
    print(format_report(load_report(getattr(args, "in"))))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drivefit",
        description="waypoint-following controllers and feasibility-aware "
                    "trajectory resampling",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-scenarios", help="write scripted scenario CSVs")
    p.add_argument("--vehicle", required=True)
    p.add_argument("--scenarios", default="all",
                   help="comma-separated kinds, or 'all'")
    p.add_argument("--out", required=True)
    _add_fleet_arg(p)
    p.set_defaults(func=cmd_gen_scenarios)

    p = sub.add_parser("train", help="train a follower for one vehicle")
    p.add_argument("--vehicle", required=True)
    p.add_argument("--scenarios", default="all",
                   help="comma-separated kinds or trajectory CSV paths; "
                        "'all' is every kind plus faster envelope variants")
    p.add_argument("--config", default=None, help="PPO config JSON")
    p.add_argument("--out", required=True, help="artifacts directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--total-steps", type=int, default=None,
                   help="override the config's total env steps")
    _add_fleet_arg(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample-prior", help="draw prior continuations")
    p.add_argument("--burnin", required=True, help="burn-in CSV")
    p.add_argument("--config", default=None, help="prior config JSON")
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample_prior)

    p = sub.add_parser("refine", help="resample prior candidates by value")
    p.add_argument("--vehicle", required=True)
    p.add_argument("--policy", required=True, help="policy checkpoint (.json)")
    p.add_argument("--value", required=True, help="value checkpoint (.json)")
    p.add_argument("--burnin", required=True, help="burn-in CSV")
    p.add_argument("--prior-config", default=None)
    p.add_argument("--num-candidates", "-L", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    _add_fleet_arg(p)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("evaluate", help="paired prior/posterior comparison")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="print a comparison report")
    p.add_argument("--in", required=True, dest="in",
                   help="report directory or comparison.csv")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
