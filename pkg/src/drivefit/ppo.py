"""PPO with clipped surrogate objective over the waypoint environment.

Rollouts come from a round-robin pool of environment instances stepped in
lockstep with batched network forwards; everything is seeded through one
Generator, so a fixed (seed, num_envs, config) reproduces checkpoints
bit for bit on a given platform.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .dynamics import VehicleParams, VehicleState, gear_for_speed
from .env import (
    TERMINATED_TIME,
    TargetTrajectory,
    WaypointEnv,
    default_distance_tolerance,
    obs_dim,
    state_on_trajectory,
)
from . import _kernels
from .nn import (
    Adam,
    GaussianPolicy,
    ValueNet,
    clip_grad_norm,
    composite_backward,
    composite_forward_cached,
    net_param_arrays,
    policy_entropy,
    policy_mean_batch,
    policy_new,
    value,
    value_batch,
    value_new,
)

_LOG_2PI = math.log(2.0 * math.pi)


class PpoUpdateError(RuntimeError):
    """Raised when an update produces a non-finite loss; nothing is applied."""


@dataclass
class PpoConfig:
    window: int = 30
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_ratio: float = 0.2
    learning_rate: float = 3e-4
    epochs: int = 4
    minibatch_size: int = 64
    steps_per_update: int = 2048
    total_steps: int = 200_000
    value_coef: float = 0.5
    entropy_coef: float = 0.0
    max_grad_norm: float = 0.5
    hidden: int = 128
    encoder_out: int = 64
    log_std_init: float = -0.5
    num_envs: int = 8
    start_jitter_pos: float = 0.1  # m, uniform per axis
    start_jitter_yaw: float = 0.02  # rad, uniform
    start_jitter_speed: float = 0.3  # m/s, uniform, floored at 0
    mid_start_prob: float = 0.5  # chance to reset on-profile at a random cursor
    warmup_steps: int = 2048  # normalizer priming, discarded

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ValueError("gae_lambda must lie in [0, 1]")
        if self.clip_ratio <= 0.0:
            raise ValueError("clip_ratio must be positive")
        for name in ("epochs", "minibatch_size", "steps_per_update", "total_steps",
                     "num_envs", "window"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0.0 <= self.mid_start_prob <= 1.0:
            raise ValueError("mid_start_prob must lie in [0, 1]")

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, indent=2)
            fh.write("\n")

    @classmethod
    def from_json(cls, path) -> "PpoConfig":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown PPO config fields: {sorted(unknown)}")
        return cls(**raw)


def compute_gae(rewards, values, gamma: float, lam: float,
                bootstrap: float = 0.0):
    """Generalized advantage estimation over one contiguous segment.

    `values` are the critic predictions for the states the rewards were
    earned from; `bootstrap` stands in for V(state after the last step)
    (zero for true terminations, V of the final observation for
    truncations). Returns (advantages, returns = advantages + values).
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if rewards.shape != values.shape or rewards.ndim != 1:
        raise ValueError("rewards and values must be 1-D arrays of equal length")
    n = rewards.shape[0]
    advantages = np.empty(n, dtype=np.float64)
    next_value = float(bootstrap)
    acc = 0.0
    for t in range(n - 1, -1, -1):
        delta = rewards[t] + gamma * next_value - values[t]
        acc = delta + gamma * lam * acc
        advantages[t] = acc
        next_value = values[t]
    return advantages, advantages + values


def normalize_advantages(advantages: np.ndarray) -> np.ndarray:
    """Zero-mean, unit-variance copy (variance guard for tiny batches)."""
    advantages = np.asarray(advantages, dtype=np.float64)
    std = float(advantages.std())
    if std < 1e-8:
        return advantages - advantages.mean()
    return (advantages - advantages.mean()) / std


@dataclass
class RolloutBatch:
    """One update's worth of experience. actions hold the pre-clamp
    Gaussian draws so stored log-probs stay exact; episodes lists
    (start, stop, terminated_by_or_truncated) half-open index pairs into
    the flat arrays."""

    obs: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray
    episodes: list[tuple[int, int, str]]


@dataclass
class UpdateStats:
    policy_loss: float
    value_loss: float
    entropy: float
    approx_kl: float
    clip_fraction: float
    grad_norm: float


def _minibatch_grads(policy: GaussianPolicy, valuenet: ValueNet, obs, actions,
                     log_probs_old, advantages, returns, config: PpoConfig):
    """Loss pieces and gradients for one minibatch.

    The clipped surrogate is maximized; samples whose ratio fell on the
    clipped, worse side contribute no policy gradient. Value targets are
    regressed in return-normalized space.
    """
    n = obs.shape[0]
    mean, p_caches = composite_forward_cached(policy, obs)
    std = np.exp(policy.log_std)
    z = (actions - mean) / std
    log_probs = -0.5 * np.sum(z * z, axis=1) - np.sum(policy.log_std) \
        - 0.5 * actions.shape[1] * _LOG_2PI
    ratio = np.exp(log_probs - log_probs_old)
    unclipped = ratio * advantages
    clipped = np.clip(ratio, 1.0 - config.clip_ratio, 1.0 + config.clip_ratio) \
        * advantages
    surrogate = float(np.minimum(unclipped, clipped).mean())
    entropy = policy_entropy(policy)

    active = unclipped <= clipped
    dlogp = np.where(active, ratio * advantages, 0.0) / n  # d surrogate / d logp
    dmean = (-dlogp)[:, None] * (z / std)  # d(-surrogate)/d mean
    policy_grads = composite_backward(policy, p_caches, dmean)
    dlog_std = -(dlogp @ (z * z - 1.0)) - config.entropy_coef
    policy_grads.append(dlog_std)

    ret_std = valuenet.ret_norm.std[0]
    ret_mean = valuenet.ret_norm.mean[0]
    v_norm, v_caches = composite_forward_cached(valuenet, obs)
    targets = (returns - ret_mean) / ret_std
    err = v_norm[:, 0] - targets
    value_loss = float(np.mean(err * err))
    dv = (config.value_coef * 2.0 / n) * err
    value_grads = composite_backward(valuenet, v_caches, dv[:, None])

    total = -surrogate + config.value_coef * value_loss \
        - config.entropy_coef * entropy
    if not math.isfinite(total):
        raise PpoUpdateError(
            f"non-finite loss (surrogate={surrogate}, value={value_loss}, "
            f"entropy={entropy}); update aborted"
        )
    approx_kl = float(np.mean(log_probs_old - log_probs))
    clip_fraction = float(np.mean(np.abs(ratio - 1.0) > config.clip_ratio))
    stats = (-surrogate, value_loss, entropy, approx_kl, clip_fraction)
    return policy_grads + value_grads, stats


def ppo_update(policy: GaussianPolicy, valuenet: ValueNet, batch: RolloutBatch,
               config: PpoConfig, rng: np.random.Generator,
               optimizer: Adam | None = None) -> UpdateStats:
    """Run config.epochs of shuffled minibatch updates over the batch.

    Advantages are normalized once per batch. Pass a persistent optimizer
    to keep Adam moments across updates (train() does); omitting it uses
    a fresh one.
    """
    if optimizer is None:
        optimizer = Adam(net_param_arrays(policy) + net_param_arrays(valuenet),
                         lr=config.learning_rate)
    if not np.all(np.isfinite(batch.advantages)):
        raise PpoUpdateError("non-finite advantages; update aborted")
    n = batch.obs.shape[0]
    advantages = normalize_advantages(batch.advantages)
    sums = np.zeros(5)
    grad_norm_sum = 0.0
    count = 0
    for _ in range(config.epochs):
        perm = rng.permutation(n)
        for lo in range(0, n, config.minibatch_size):
            idx = perm[lo : lo + config.minibatch_size]
            grads, stats = _minibatch_grads(
                policy, valuenet, batch.obs[idx], batch.actions[idx],
                batch.log_probs[idx], advantages[idx], batch.returns[idx],
                config,
            )
            grad_norm_sum += clip_grad_norm(grads, config.max_grad_norm)
            optimizer.step(grads)
            np.clip(policy.log_std, -5.0, 2.0, out=policy.log_std)
            sums += stats
            count += 1
    means = sums / count
    return UpdateStats(
        policy_loss=float(means[0]), value_loss=float(means[1]),
        entropy=float(means[2]), approx_kl=float(means[3]),
        clip_fraction=float(means[4]), grad_norm=grad_norm_sum / count,
    )


@dataclass
class LogRecord:
    update: int
    env_steps: int
    episodes: int
    mean_return: float
    mean_hit_fraction: float
    policy_loss: float
    value_loss: float
    entropy: float


class TrainingLog:
    """Per-update training metrics with CSV round trip."""

    HEADER = ("update,env_steps,episodes,mean_return,mean_hit_fraction,"
              "policy_loss,value_loss,entropy")

    def __init__(self, records: list[LogRecord] | None = None):
        self.records: list[LogRecord] = list(records or [])

    def append(self, record: LogRecord) -> None:
        self.records.append(record)

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.HEADER + "\n")
            for r in self.records:
                fh.write(
                    f"{r.update},{r.env_steps},{r.episodes},{r.mean_return!r},"
                    f"{r.mean_hit_fraction!r},{r.policy_loss!r},{r.value_loss!r},"
                    f"{r.entropy!r}\n"
                )

    @classmethod
    def from_csv(cls, path) -> "TrainingLog":
        records = []
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().strip()
            if header != cls.HEADER:
                raise ValueError(f"unexpected training log header {header!r}")
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                p = line.split(",")
                records.append(LogRecord(
                    update=int(p[0]), env_steps=int(p[1]), episodes=int(p[2]),
                    mean_return=float(p[3]), mean_hit_fraction=float(p[4]),
                    policy_loss=float(p[5]), value_loss=float(p[6]),
                    entropy=float(p[7]),
                ))
        return cls(records)


class _Slot:
    """One environment instance plus its private rng and pending observation."""

    __slots__ = ("env", "rng", "obs")

    def __init__(self, env: WaypointEnv, rng: np.random.Generator):
        self.env = env
        self.rng = rng
        self.obs: np.ndarray | None = None


def _reset_slot(slot: _Slot, scenarios, vehicle: VehicleParams,
                config: PpoConfig) -> None:
    traj = scenarios[int(slot.rng.integers(len(scenarios)))]
    # mid-trajectory starts cover late profile phases (braking ramps, the
    # stationary tail) that exploration rarely survives long enough to reach
    start = 0
    if config.mid_start_prob > 0.0 and slot.rng.random() < config.mid_start_prob:
        start = int(slot.rng.integers(1, len(traj)))
    base = state_on_trajectory(traj, vehicle, start)
    jx, jy = slot.rng.uniform(-config.start_jitter_pos, config.start_jitter_pos, 2)
    jyaw = float(slot.rng.uniform(-config.start_jitter_yaw, config.start_jitter_yaw))
    jv = float(slot.rng.uniform(-config.start_jitter_speed, config.start_jitter_speed))
    v_lon = max(0.0, base.v_lon + jv)
    jittered = VehicleState(
        x=base.x + float(jx), y=base.y + float(jy),
        yaw=_kernels.wrap_angle(base.yaw + jyaw), v_lon=v_lon,
        v_lat=base.v_lat, steer_angle=base.steer_angle,
        gear=gear_for_speed(v_lon, vehicle),
    )
    slot.obs = slot.env.reset(traj, jittered, start=start)


def _collect(policy: GaussianPolicy, valuenet: ValueNet, slots: list[_Slot],
             scenarios, vehicle: VehicleParams, config: PpoConfig,
             action_rng: np.random.Generator, steps_per_env: int):
    """Lockstep rollout collection; returns (RolloutBatch, episode stats)."""
    num_envs = len(slots)
    dim = obs_dim(config.window)
    obs_buf = np.empty((num_envs, steps_per_env, dim))
    act_buf = np.empty((num_envs, steps_per_env, 2))
    logp_buf = np.empty((num_envs, steps_per_env))
    rew_buf = np.empty((num_envs, steps_per_env))
    val_buf = np.empty((num_envs, steps_per_env))
    segments: list[list[tuple[int, int, float, str]]] = [[] for _ in slots]
    seg_start = [0] * num_envs
    finished: list[tuple[float, float]] = []  # (episode return, hit fraction)

    stack = np.empty((num_envs, dim))
    log_std_sum = None
    for k in range(steps_per_env):
        for i, slot in enumerate(slots):
            stack[i] = slot.obs
        means = policy_mean_batch(policy, stack)
        vals = value_batch(valuenet, stack)
        noise = action_rng.standard_normal((num_envs, 2))
        std = np.exp(policy.log_std)
        raw = means + std * noise
        log_std_sum = float(np.sum(policy.log_std))
        logps = -0.5 * np.sum(noise * noise, axis=1) - log_std_sum - _LOG_2PI
        clamped = np.clip(raw, -1.0, 1.0)
        for i, slot in enumerate(slots):
            obs_buf[i, k] = stack[i]
            act_buf[i, k] = raw[i]
            logp_buf[i, k] = logps[i]
            val_buf[i, k] = vals[i]
            next_obs, r, done = slot.env.step(clamped[i])
            rew_buf[i, k] = r
            if done:
                kind = slot.env.terminated_by
                bootstrap = value(valuenet, next_obs) if kind == TERMINATED_TIME else 0.0
                segments[i].append((seg_start[i], k + 1, bootstrap, kind))
                finished.append((
                    slot.env.episode_return,
                    slot.env.hit_count / slot.env.scheduled_steps,
                ))
                _reset_slot(slot, scenarios, vehicle, config)
                seg_start[i] = k + 1
            else:
                slot.obs = next_obs
    for i, slot in enumerate(slots):
        if seg_start[i] < steps_per_env:
            bootstrap = value(valuenet, slot.obs)
            segments[i].append((seg_start[i], steps_per_env, bootstrap, "truncated"))

    n = num_envs * steps_per_env
    adv_flat = np.empty(n)
    ret_flat = np.empty(n)
    episodes = []
    offset = 0
    for i in range(num_envs):
        for (a, b, bootstrap, kind) in segments[i]:
            adv, ret = compute_gae(rew_buf[i, a:b], val_buf[i, a:b],
                                   config.gamma, config.gae_lambda, bootstrap)
            adv_flat[offset + a : offset + b] = adv
            ret_flat[offset + a : offset + b] = ret
            episodes.append((offset + a, offset + b, kind))
        offset += steps_per_env
    batch = RolloutBatch(
        obs=obs_buf.reshape(n, dim), actions=act_buf.reshape(n, 2),
        log_probs=logp_buf.reshape(n), rewards=rew_buf.reshape(n),
        values=val_buf.reshape(n), advantages=adv_flat, returns=ret_flat,
        episodes=episodes,
    )
    return batch, finished


class TrainingDiverged(RuntimeError):
    pass


def train(env_factory, vehicle: VehicleParams, scenarios, config: PpoConfig,
          rng: np.random.Generator, num_envs: int | None = None):
    """Train a follower for one vehicle over a scenario set.

    env_factory() must return a fresh WaypointEnv for this vehicle (None
    selects the default construction); scenarios is a non-empty list of
    TargetTrajectory, sampled uniformly per episode with a jittered start
    state. Returns (policy, valuenet, TrainingLog).
    """
    scenarios = list(scenarios)
    if not scenarios:
        raise ValueError("at least one scenario is required")
    for traj in scenarios:
        if not isinstance(traj, TargetTrajectory):
            raise TypeError("scenarios must be TargetTrajectory instances")
    if env_factory is None:
        def env_factory():
            return WaypointEnv(vehicle, eps=default_distance_tolerance(vehicle),
                               window=config.window)
    num_envs = config.num_envs if num_envs is None else int(num_envs)

    init_rng, action_rng, update_rng, *env_rngs = rng.spawn(3 + num_envs)
    policy = policy_new(config.window, init_rng, hidden=config.hidden,
                        encoder_out=config.encoder_out,
                        log_std_init=config.log_std_init)
    valuenet = value_new(config.window, init_rng, hidden=config.hidden,
                         encoder_out=config.encoder_out)
    optimizer = Adam(net_param_arrays(policy) + net_param_arrays(valuenet),
                     lr=config.learning_rate)
    slots = [_Slot(env_factory(), erng) for erng in env_rngs]
    for slot in slots:
        _reset_slot(slot, scenarios, vehicle, config)

    steps_per_env = max(1, math.ceil(config.steps_per_update / num_envs))

    # prime the normalizers on a discarded batch so the first real update
    # does not see raw meter-scale inputs through unit-variance stats
    if config.warmup_steps > 0:
        warm_per_env = max(1, math.ceil(config.warmup_steps / num_envs))
        warm_batch, _ = _collect(policy, valuenet, slots, scenarios, vehicle,
                                 config, action_rng, warm_per_env)
        policy.obs_norm.update(warm_batch.obs)
        valuenet.obs_norm.update(warm_batch.obs)
        valuenet.ret_norm.update(warm_batch.returns)
        for slot in slots:
            _reset_slot(slot, scenarios, vehicle, config)

    log = TrainingLog()
    env_steps = 0
    update = 0
    while env_steps < config.total_steps:
        batch, finished = _collect(policy, valuenet, slots, scenarios, vehicle,
                                   config, action_rng, steps_per_env)
        stats = ppo_update(policy, valuenet, batch, config, update_rng, optimizer)
        policy.obs_norm.update(batch.obs)
        valuenet.obs_norm.update(batch.obs)
        valuenet.ret_norm.update(batch.returns)
        env_steps += batch.obs.shape[0]
        update += 1
        if finished:
            mean_return = float(np.mean([f[0] for f in finished]))
            mean_hit = float(np.mean([f[1] for f in finished]))
        else:
            mean_return = math.nan
            mean_hit = math.nan
        if finished and not math.isfinite(mean_return):
            raise TrainingDiverged(f"mean episode return diverged at update {update}")
        log.append(LogRecord(
            update=update, env_steps=env_steps, episodes=len(finished),
            mean_return=mean_return, mean_hit_fraction=mean_hit,
            policy_loss=stats.policy_loss, value_loss=stats.value_loss,
            entropy=stats.entropy,
        ))
    return policy, valuenet, log
