"""Feasibility refinement by importance resampling.

Candidate continuations drawn from the generic prior are scored with the
trained value function at the continuation's start state, turned into
self-normalized importance weights, and resampled. The weights only ever
use score differences, so the (intractable) per-step normalizer behind
the optimality likelihood cancels and is never computed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import VehicleParams, VehicleState
from .env import TargetTrajectory, default_distance_tolerance, observe
from .nn import GaussianPolicy, ValueNet, value
from .prior import BurnIn, burn_in_execute


@dataclass(frozen=True)
class OptimalityModel:
    """Exponential-in-reward step optimality with tolerance eps. The
    per-step log normalizer is symbolic: weights and evidence bounds are
    built from score differences in which it cancels."""

    eps: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.eps) and self.eps > 0.0):
            raise ValueError("eps must be positive and finite")


@dataclass
class WeightedTrajectory:
    """One candidate with its start-state score and normalized weight."""

    trajectory: TargetTrajectory
    score: float
    weight: float
    index: int


@dataclass
class RefineResult:
    selected: WeightedTrajectory
    candidates: list[WeightedTrajectory]
    s0: VehicleState
    log_evidence: float

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.candidates])

    @property
    def scores(self) -> np.ndarray:
        return np.array([c.score for c in self.candidates])


def score_s0(valuenet: ValueNet, s0: VehicleState,
             trajectory: TargetTrajectory) -> float:
    """Value of starting `trajectory` from s0: the expected reward-to-go
    the trained critic assigns to the first observation."""
    obs = observe(s0, trajectory, 0, valuenet.window)
    return value(valuenet, obs.flat)


def importance_weights(scores) -> np.ndarray:
    """Normalized weights proportional to exp(score).

    Computed as a max-shifted softmax, so adding any constant to all
    scores leaves the weights unchanged and no exp overflows.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1 or scores.size == 0:
        raise ValueError("scores must be a non-empty 1-D array")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    shifted = scores - scores.max()
    w = np.exp(shifted)
    return w / w.sum()


def resample(weights, rng: np.random.Generator, count: int = 1) -> np.ndarray:
    """i.i.d. categorical draws of candidate indices under `weights`."""
    weights = np.asarray(weights, dtype=np.float64)
    if weights.ndim != 1 or weights.size == 0:
        raise ValueError("weights must be a non-empty 1-D array")
    if not np.all(np.isfinite(weights)) or np.any(weights < 0.0):
        raise ValueError("weights must be finite and non-negative")
    total = weights.sum()
    if not math.isfinite(total) or total <= 0.0:
        raise ValueError("weights must sum to a positive value")
    if count < 1:
        raise ValueError("count must be >= 1")
    cdf = np.cumsum(weights / total)
    cdf[-1] = 1.0  # close the rounding gap
    u = rng.random(count)
    return np.searchsorted(cdf, u, side="left").astype(np.int64)


def log_evidence(scores) -> float:
    """Log of the mean importance ratio, log(mean(exp(score))).

    By Jensen's inequality this is at least mean(score); up to the
    symbolic normalizer it lower-bounds the log marginal optimality of
    the start state.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1 or scores.size == 0:
        raise ValueError("scores must be a non-empty 1-D array")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    m = float(scores.max())
    return m + math.log(float(np.exp(scores - m).mean()))


def refine(sampler, policy: GaussianPolicy, valuenet: ValueNet,
           vehicle: VehicleParams, burnin: BurnIn, count: int,
           rng: np.random.Generator, eps: float | None = None) -> RefineResult:
    """Draw `count` candidates from `sampler(burnin, rng)`, weight them by
    exp(value at the burn-in end state), and resample one.

    The policy and value checkpoints must agree on the observation
    window; s0 comes from replaying the burn-in with the policy's mean
    actions.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if policy.window != valuenet.window:
        raise ValueError(
            f"policy window {policy.window} and value window {valuenet.window} "
            f"do not match"
        )
    if eps is None:
        eps = default_distance_tolerance(vehicle)
    s0 = burn_in_execute(policy, vehicle, burnin, eps=eps)
    trajectories = [sampler(burnin, rng) for _ in range(count)]
    scores = np.array([score_s0(valuenet, s0, traj) for traj in trajectories])
    weights = importance_weights(scores)
    selected_index = int(resample(weights, rng, 1)[0])
    candidates = [
        WeightedTrajectory(trajectory=traj, score=float(scores[i]),
                           weight=float(weights[i]), index=i)
        for i, traj in enumerate(trajectories)
    ]
    return RefineResult(
        selected=candidates[selected_index],
        candidates=candidates,
        s0=s0,
        log_evidence=log_evidence(scores),
    )
