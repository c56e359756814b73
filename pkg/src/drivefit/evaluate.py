"""Paired prior-vs-posterior evaluation across vehicles and initial
conditions.

For each (vehicle, initial condition, seed) one shared candidate batch is
drawn from the prior and executed by the vehicle's trained follower; the
prior row averages hit fractions over the whole batch, the posterior row
over value-weighted resampled draws from the same batch, so the two
distributions are compared on identical samples. A separate table
carries the fully weighted expectation under the importance weights.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .dynamics import VehicleParams, builtin_fleet, get_vehicle, load_fleet
from .env import (
    EpisodeTrace,
    TargetTrajectory,
    WaypointEnv,
    default_distance_tolerance,
    hit_fraction,
)
from .nn import GaussianPolicy, ValueNet, load_policy, load_value
from .prior import BurnIn, PriorConfig, burn_in_execute, default_initial_conditions, sample_prior
from .refine import importance_weights, resample, score_s0


@dataclass
class ExperimentConfig:
    vehicles: list[str]
    ics: list[str]  # builtin burn-in names, or paths to burn-in CSVs
    seeds: list[int]
    artifacts_dir: str
    num_candidates: int = 100
    num_posterior_draws: int = 20
    burnin_steps: int = 10
    prior: PriorConfig = field(default_factory=PriorConfig)
    fleet_path: str | None = None

    def __post_init__(self):
        if not self.vehicles or not self.ics or not self.seeds:
            raise ValueError("vehicles, ics and seeds must be non-empty")
        if self.num_candidates < 1 or self.num_posterior_draws < 1:
            raise ValueError("candidate and draw counts must be >= 1")
        if isinstance(self.prior, dict):
            self.prior = PriorConfig(**self.prior)

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, indent=2)
            fh.write("\n")

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown experiment config fields: {sorted(unknown)}")
        return cls(**raw)


@dataclass(frozen=True)
class ReportRow:
    vehicle: str
    initial_condition: str
    distribution: str  # "prior" or "posterior"
    mean_hit_fraction: float
    num_samples: int
    seed: str  # semicolon-joined seed list


@dataclass(frozen=True)
class WeightedRow:
    vehicle: str
    initial_condition: str
    mean_weighted_hit_fraction: float
    num_samples: int
    seed: str


@dataclass
class ComparisonReport:
    rows: list[ReportRow]
    weighted_rows: list[WeightedRow] = field(default_factory=list)
    # per (vehicle, ic, seed): dict with raw per-candidate arrays, kept out
    # of the CSVs; emit/load round-trips only the rows above
    samples: dict = field(default_factory=dict)


def execute_follower(policy: GaussianPolicy, vehicle: VehicleParams,
                     trajectory: TargetTrajectory, s0, eps: float) -> EpisodeTrace:
    """Run the follower's mean actions (no exploration noise) from s0."""
    sim = WaypointEnv(vehicle, eps=eps, window=policy.window)
    obs = sim.reset(trajectory, s0)
    done = False
    while not done:
        obs, _, done = sim.step(policy.mean_action(obs))
    return sim.trace()


def load_artifacts(artifacts_dir: str, vehicle_name: str):
    policy = load_policy(os.path.join(artifacts_dir, vehicle_name, "policy.json"))
    valuenet = load_value(os.path.join(artifacts_dir, vehicle_name, "value.json"))
    return policy, valuenet


def _resolve_ics(config: ExperimentConfig, vehicle: VehicleParams):
    builtin = dict(default_initial_conditions(vehicle, steps=config.burnin_steps))
    out = []
    for entry in config.ics:
        if entry.endswith(".csv"):
            name = os.path.splitext(os.path.basename(entry))[0]
            out.append((name, BurnIn.from_csv(entry)))
        elif entry in builtin:
            out.append((entry, builtin[entry]))
        else:
            raise KeyError(
                f"unknown initial condition {entry!r} (builtin: {sorted(builtin)})"
            )
    return out


def _seed_label(seeds) -> str:
    return ";".join(str(s) for s in seeds)


def compare(config: ExperimentConfig, artifacts: dict | None = None) -> ComparisonReport:
    """Run the paired evaluation; returns rows for every
    (vehicle, initial condition, distribution) plus weighted-expectation
    rows and the raw per-sample diagnostics."""
    fleet = load_fleet(config.fleet_path) if config.fleet_path else builtin_fleet()
    rows: list[ReportRow] = []
    weighted_rows: list[WeightedRow] = []
    samples: dict = {}
    seed_label = _seed_label(config.seeds)
    for vi, vehicle_name in enumerate(config.vehicles):
        vehicle = get_vehicle(vehicle_name, fleet)
        if artifacts and vehicle_name in artifacts:
            policy, valuenet = artifacts[vehicle_name]
        else:
            policy, valuenet = load_artifacts(config.artifacts_dir, vehicle_name)
        eps = default_distance_tolerance(vehicle)
        for ici, (ic_name, burnin) in enumerate(_resolve_ics(config, vehicle)):
            prior_means = []
            posterior_means = []
            weighted_means = []
            for seed in config.seeds:
                rng = np.random.default_rng([int(seed), vi, ici])
                s0 = burn_in_execute(policy, vehicle, burnin, eps=eps)
                candidates = [sample_prior(burnin, config.prior, rng)
                              for _ in range(config.num_candidates)]
                hits = np.array([
                    hit_fraction(execute_follower(policy, vehicle, traj, s0, eps), eps)
                    for traj in candidates
                ])
                scores = np.array([score_s0(valuenet, s0, traj)
                                   for traj in candidates])
                weights = importance_weights(scores)
                draws = resample(weights, rng, config.num_posterior_draws)
                prior_means.append(float(hits.mean()))
                posterior_means.append(float(hits[draws].mean()))
                weighted_means.append(float(np.dot(weights, hits)))
                samples[(vehicle_name, ic_name, int(seed))] = {
                    "scores": scores, "hits": hits, "weights": weights,
                    "draws": draws,
                }
            n_seeds = len(config.seeds)
            rows.append(ReportRow(
                vehicle=vehicle_name, initial_condition=ic_name,
                distribution="prior",
                mean_hit_fraction=float(np.mean(prior_means)),
                num_samples=config.num_candidates * n_seeds, seed=seed_label,
            ))
            rows.append(ReportRow(
                vehicle=vehicle_name, initial_condition=ic_name,
                distribution="posterior",
                mean_hit_fraction=float(np.mean(posterior_means)),
                num_samples=config.num_posterior_draws * n_seeds, seed=seed_label,
            ))
            weighted_rows.append(WeightedRow(
                vehicle=vehicle_name, initial_condition=ic_name,
                mean_weighted_hit_fraction=float(np.mean(weighted_means)),
                num_samples=config.num_candidates * n_seeds, seed=seed_label,
            ))
    return ComparisonReport(rows=rows, weighted_rows=weighted_rows, samples=samples)


COMPARISON_HEADER = ("vehicle,initial_condition,distribution,"
                     "mean_hit_fraction,num_samples,seed")
WEIGHTED_HEADER = ("vehicle,initial_condition,mean_weighted_hit_fraction,"
                   "num_samples,seed")


def emit_report(report: ComparisonReport, out_dir) -> dict[str, str]:
    """Write comparison.csv (+ weighted_expectation.csv when present);
    returns the paths. Identical reports serialize byte-identically."""
    os.makedirs(out_dir, exist_ok=True)
    comparison_path = os.path.join(out_dir, "comparison.csv")
    with open(comparison_path, "w", encoding="utf-8") as fh:
        fh.write(COMPARISON_HEADER + "\n")
        for r in report.rows:
            fh.write(f"{r.vehicle},{r.initial_condition},{r.distribution},"
                     f"{r.mean_hit_fraction!r},{r.num_samples},{r.seed}\n")
    paths = {"comparison": comparison_path}
    if report.weighted_rows:
        weighted_path = os.path.join(out_dir, "weighted_expectation.csv")
        with open(weighted_path, "w", encoding="utf-8") as fh:
            fh.write(WEIGHTED_HEADER + "\n")
            for r in report.weighted_rows:
                fh.write(f"{r.vehicle},{r.initial_condition},"
                         f"{r.mean_weighted_hit_fraction!r},{r.num_samples},"
                         f"{r.seed}\n")
        paths["weighted"] = weighted_path
    return paths


def load_report(path) -> ComparisonReport:
    """Read back emit_report output (a directory or the comparison.csv)."""
    if os.path.isdir(path):
        comparison_path = os.path.join(path, "comparison.csv")
        weighted_path = os.path.join(path, "weighted_expectation.csv")
    else:
        comparison_path = path
        weighted_path = os.path.join(os.path.dirname(path),
                                     "weighted_expectation.csv")
    rows = []
    with open(comparison_path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != COMPARISON_HEADER:
            raise ValueError(f"unexpected comparison header {header!r}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            p = line.split(",")
            rows.append(ReportRow(
                vehicle=p[0], initial_condition=p[1], distribution=p[2],
                mean_hit_fraction=float(p[3]), num_samples=int(p[4]), seed=p[5],
            ))
    weighted_rows = []
    if os.path.exists(weighted_path):
        with open(weighted_path, "r", encoding="utf-8") as fh:
            header = fh.readline().strip()
            if header != WEIGHTED_HEADER:
                raise ValueError(f"unexpected weighted header {header!r}")
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                p = line.split(",")
                weighted_rows.append(WeightedRow(
                    vehicle=p[0], initial_condition=p[1],
                    mean_weighted_hit_fraction=float(p[2]),
                    num_samples=int(p[3]), seed=p[4],
                ))
    return ComparisonReport(rows=rows, weighted_rows=weighted_rows)


def format_report(report: ComparisonReport) -> str:
    """Human-readable table with prior -> posterior deltas."""
    by_cell: dict[tuple[str, str], dict[str, float]] = {}
    for r in report.rows:
        by_cell.setdefault((r.vehicle, r.initial_condition), {})[r.distribution] = \
            r.mean_hit_fraction
    lines = [f"{'vehicle':<12} {'initial_condition':<16} "
             f"{'prior':>8} {'posterior':>10} {'delta':>8}"]
    for (vehicle, ic), cells in by_cell.items():
        prior = cells.get("prior", math.nan)
        posterior = cells.get("posterior", math.nan)
        lines.append(f"{vehicle:<12} {ic:<16} {prior:>8.3f} {posterior:>10.3f} "
                     f"{posterior - prior:>+8.3f}")
    return "\n".join(lines)
