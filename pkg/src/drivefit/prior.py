"""Scripted scenario families, burn-in records, and the generic
behavioral prior over continuation trajectories.

The prior is deliberately vehicle-agnostic: it proposes continuations of
a burn-in from a mixture of curvature intents plus smooth noise, knowing
nothing about any vehicle's limits. Whether a proposal is drivable is
exactly what the downstream value-based re-weighting has to sort out.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import _kernels
from .dynamics import VehicleParams, VehicleState, gear_for_speed, min_turning_radius
from .env import (
    DEFAULT_RATE_HZ,
    TERMINATED_DISTANCE,
    TargetTrajectory,
    Waypoint,
    WaypointEnv,
    default_distance_tolerance,
)
from .nn import GaussianPolicy

SCENARIO_KINDS = ("straight", "left_turn", "right_turn", "full_stop", "s_shape")

# fraction of each limit a scripted scenario may demand
FEASIBILITY_MARGIN = 0.9


class ScenarioInfeasibleError(ValueError):
    """A scripted scenario demands more than the vehicle envelope allows."""


class PriorRejectionError(RuntimeError):
    """Corridor rejection exhausted the redraw budget."""


class BurnInDeviationError(RuntimeError):
    """The follower left the corridor while replaying a burn-in."""


@dataclass(frozen=True)
class ScenarioSpec:
    """Parameters of one scripted drive."""

    kind: str
    entry_speed: float  # m/s
    curvature_scale: float  # rad/m, peak demanded curvature
    duration: int = 150  # steps; defaults stay within [120, 180]
    rate_hz: float = DEFAULT_RATE_HZ

    def __post_init__(self):
        if self.kind not in SCENARIO_KINDS:
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if not (math.isfinite(self.entry_speed) and self.entry_speed > 0.0):
            raise ValueError("entry_speed must be positive")
        if not (math.isfinite(self.curvature_scale) and self.curvature_scale >= 0.0):
            raise ValueError("curvature_scale must be non-negative")
        if self.duration < 2:
            raise ValueError("duration must be at least 2 steps")
        if self.rate_hz <= 0.0:
            raise ValueError("rate_hz must be positive")


def curvature_cap(vehicle: VehicleParams) -> float:
    """Peak path curvature at full steering lock (1 / min turning radius)."""
    return 1.0 / min_turning_radius(vehicle)


def default_entry_speed(vehicle: VehicleParams) -> float:
    return min(8.0, 0.32 * vehicle.max_speed)


def default_scenario_specs(vehicle: VehicleParams) -> dict[str, ScenarioSpec]:
    """One spec per scenario kind, scaled to the vehicle's envelope."""
    entry = default_entry_speed(vehicle)
    kappa = 0.6 * curvature_cap(vehicle)
    return {
        "straight": ScenarioSpec("straight", entry, 0.0, duration=120),
        "left_turn": ScenarioSpec("left_turn", entry, kappa, duration=150),
        "right_turn": ScenarioSpec("right_turn", entry, kappa, duration=150),
        "full_stop": ScenarioSpec("full_stop", entry, 0.0, duration=140),
        "s_shape": ScenarioSpec("s_shape", entry, kappa, duration=170),
    }


def training_scenarios(vehicle: VehicleParams) -> list:
    """Scripted training set: every default spec plus faster variants.

    The extras cruise in the behavioral prior's speed range and demand
    curvature near the envelope at that speed. Steering-rate transients make
    the trackable-curvature boundary tighten with speed, and the critic only
    learns that boundary if training visits it; without these it extrapolates
    from low-speed turns and overvalues infeasible fast proposals.
    """
    specs = default_scenario_specs(vehicle)
    entry = default_entry_speed(vehicle)
    v_fast = min(1.5 * entry, 0.5 * vehicle.max_speed)
    v_turn = min(1.3 * entry, 0.45 * vehicle.max_speed)
    # just past the steepest demand the default prior makes, but never past
    # the steering envelope; agile vehicles gain nothing from lock-limit
    # heroics the prior cannot propose
    kappa_hard = min(0.8 * curvature_cap(vehicle),
                     1.1 * PriorConfig().kappa_limit)
    variants = [
        ScenarioSpec("straight", v_fast, 0.0, duration=120),
        ScenarioSpec("left_turn", v_turn, kappa_hard),
        ScenarioSpec("right_turn", v_turn, kappa_hard),
        ScenarioSpec("left_turn", entry, kappa_hard),
        ScenarioSpec("right_turn", entry, kappa_hard),
    ]
    all_specs = list(specs.values()) + variants
    return [generate_scenario(spec, vehicle) for spec in all_specs]


def _steer_ramp_steps(kappa: float, vehicle: VehicleParams, rate_hz: float) -> int:
    """Steps needed to slew the wheel from straight to curvature kappa,
    inside the feasibility margin, padded 20%."""
    dsteer = abs(math.atan(kappa * vehicle.wheelbase))
    seconds = dsteer / (FEASIBILITY_MARGIN * vehicle.steer_rate_limit)
    return max(1, math.ceil(1.2 * seconds * rate_hz))


def _check_feasible(name: str, kappa: np.ndarray, v: np.ndarray,
                    vehicle: VehicleParams, rate_hz: float) -> None:
    dt = 1.0 / rate_hz
    m = FEASIBILITY_MARGIN
    v_cap = m * vehicle.max_speed
    if float(v.max()) > v_cap:
        raise ScenarioInfeasibleError(
            f"scenario {name!r} infeasible for {vehicle.name}: speed "
            f"{float(v.max()):.3f} m/s exceeds {v_cap:.3f} (90% of max_speed)"
        )
    k_cap = m * curvature_cap(vehicle)
    worst = float(np.abs(kappa).max())
    if worst > k_cap:
        raise ScenarioInfeasibleError(
            f"scenario {name!r} infeasible for {vehicle.name}: curvature "
            f"{worst:.4f}/m exceeds {k_cap:.4f} (90% of the steering envelope)"
        )
    accel = np.diff(v) / dt
    for i, a in enumerate(accel):
        if a >= 0.0:
            scale = vehicle.gear_accel_scale[gear_for_speed(float(v[i]), vehicle) - 1]
            cap = m * vehicle.max_accel * scale
            if a > cap:
                raise ScenarioInfeasibleError(
                    f"scenario {name!r} infeasible for {vehicle.name}: acceleration "
                    f"{a:.3f} m/s^2 at step {i} exceeds {cap:.3f} (90% of gear-scaled "
                    f"max_accel)"
                )
        elif -a > m * vehicle.max_brake:
            raise ScenarioInfeasibleError(
                f"scenario {name!r} infeasible for {vehicle.name}: braking "
                f"{-a:.3f} m/s^2 at step {i} exceeds "
                f"{m * vehicle.max_brake:.3f} (90% of max_brake)"
            )
    steer = np.arctan(kappa * vehicle.wheelbase)
    steer_rate = np.abs(np.diff(steer)) / dt
    if steer_rate.size and float(steer_rate.max()) > m * vehicle.steer_rate_limit:
        raise ScenarioInfeasibleError(
            f"scenario {name!r} infeasible for {vehicle.name}: steering rate "
            f"{float(steer_rate.max()):.3f} rad/s exceeds "
            f"{m * vehicle.steer_rate_limit:.3f} (90% of steer_rate_limit)"
        )


def _integrate_profile(kappa: np.ndarray, v: np.ndarray,
                       rate_hz: float) -> TargetTrajectory:
    """Turn per-step (curvature, speed) demands into waypoints from the
    origin pose. Heading integrates before position, so successive
    headings differ by exactly curvature * chord length."""
    dt = 1.0 / rate_hz
    x = 0.0
    y = 0.0
    psi = 0.0
    waypoints = []
    for i in range(kappa.shape[0]):
        psi = _kernels.wrap_angle(psi + kappa[i] * v[i] * dt)
        x += v[i] * dt * math.cos(psi)
        y += v[i] * dt * math.sin(psi)
        waypoints.append(Waypoint(x=x, y=y, v=float(v[i]), psi=psi))
    return TargetTrajectory(waypoints, rate_hz=rate_hz)


def _turn_profile(spec: ScenarioSpec, vehicle: VehicleParams, sign: float,
                  sweep: float) -> np.ndarray:
    """Curvature profile: lead-in, ramp, hold to sweep the target heading,
    ramp out. The hold shrinks if the duration cannot fit the sweep."""
    T = spec.duration
    kappa_pk = sign * spec.curvature_scale
    ramp = _steer_ramp_steps(spec.curvature_scale, vehicle, spec.rate_hz)
    lead = min(20, max(2, T // 8))
    tail = max(5, T // 10)
    if lead + 2 * ramp + tail > T:
        raise ScenarioInfeasibleError(
            f"scenario {spec.kind!r} infeasible for {vehicle.name}: steering rate "
            f"{vehicle.steer_rate_limit:.3f} rad/s needs {ramp} steps per ramp, "
            f"which does not fit in {T} steps"
        )
    per_step = spec.curvature_scale * spec.entry_speed / spec.rate_hz
    if per_step > 0.0:
        hold_needed = math.ceil(max(0.0, sweep / per_step - ramp))
    else:
        hold_needed = 0
    hold = max(0, min(hold_needed, T - lead - 2 * ramp - tail))
    kappa = np.zeros(T)
    up = np.linspace(0.0, kappa_pk, ramp + 1)[1:]
    start = lead
    kappa[start : start + ramp] = up
    kappa[start + ramp : start + ramp + hold] = kappa_pk
    down = np.linspace(kappa_pk, 0.0, ramp + 1)[1:]
    kappa[start + ramp + hold : start + 2 * ramp + hold] = down
    return kappa


def _s_profile(spec: ScenarioSpec, vehicle: VehicleParams, sweep: float) -> np.ndarray:
    T = spec.duration
    kappa_pk = spec.curvature_scale
    ramp = _steer_ramp_steps(kappa_pk, vehicle, spec.rate_hz)
    lead = min(15, max(2, T // 10))
    tail = max(5, T // 10)
    if lead + 4 * ramp + tail > T:
        raise ScenarioInfeasibleError(
            f"scenario {spec.kind!r} infeasible for {vehicle.name}: steering rate "
            f"{vehicle.steer_rate_limit:.3f} rad/s needs {ramp} steps per ramp, "
            f"which does not fit in {T} steps"
        )
    per_step = kappa_pk * spec.entry_speed / spec.rate_hz
    hold_needed = math.ceil(max(0.0, sweep / per_step - ramp)) if per_step > 0 else 0
    budget = T - lead - 4 * ramp - tail
    hold = max(0, min(hold_needed, budget // 2))
    kappa = np.zeros(T)
    i = lead
    kappa[i : i + ramp] = np.linspace(0.0, kappa_pk, ramp + 1)[1:]
    i += ramp
    kappa[i : i + hold] = kappa_pk
    i += hold
    kappa[i : i + 2 * ramp] = np.linspace(kappa_pk, -kappa_pk, 2 * ramp + 1)[1:]
    i += 2 * ramp
    kappa[i : i + hold] = -kappa_pk
    i += hold
    kappa[i : i + ramp] = np.linspace(-kappa_pk, 0.0, ramp + 1)[1:]
    return kappa


def generate_scenario(spec: ScenarioSpec, vehicle: VehicleParams) -> TargetTrajectory:
    """Build the scripted drive for one spec, validated against 90% of the
    vehicle envelope (raises ScenarioInfeasibleError naming the violated
    limit)."""
    T = spec.duration
    v = np.full(T, spec.entry_speed)
    if spec.kind == "straight":
        kappa = np.zeros(T)
    elif spec.kind == "left_turn":
        kappa = _turn_profile(spec, vehicle, +1.0, math.pi / 2)
    elif spec.kind == "right_turn":
        kappa = _turn_profile(spec, vehicle, -1.0, math.pi / 2)
    elif spec.kind == "s_shape":
        kappa = _s_profile(spec, vehicle, math.radians(55.0))
    elif spec.kind == "full_stop":
        kappa = np.zeros(T)
        decel = 0.35 * vehicle.max_brake
        cruise = max(2, T // 4)
        for i in range(T):
            v[i] = max(0.0, spec.entry_speed - decel * max(0, i - cruise) / spec.rate_hz)
    else:  # unreachable, ScenarioSpec validates kind
        raise ValueError(spec.kind)
    _check_feasible(spec.kind, kappa, v, vehicle, spec.rate_hz)
    return _integrate_profile(kappa, v, spec.rate_hz)


# -- burn-ins ------------------------------------------------------------------

@dataclass(frozen=True)
class BurnInRecord:
    """Kinematic summary of one burn-in step."""

    v_lon: float
    v_lat: float
    gear: int
    waypoint: Waypoint


@dataclass
class BurnIn:
    """U+1 records covering a short demonstrated drive; the final record
    is the anchor that continuation proposals must attach to."""

    records: tuple[BurnInRecord, ...]
    rate_hz: float = DEFAULT_RATE_HZ

    def __post_init__(self):
        self.records = tuple(self.records)
        if not self.records:
            raise ValueError("a burn-in needs at least one record")
        if self.rate_hz <= 0.0:
            raise ValueError("rate_hz must be positive")

    @property
    def steps(self) -> int:
        return len(self.records) - 1

    @property
    def anchor(self) -> Waypoint:
        return self.records[-1].waypoint

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# rate_hz={self.rate_hz!r}\n")
            fh.write("t,v_lon,v_lat,gear,x,y,v,psi\n")
            for i, r in enumerate(self.records):
                w = r.waypoint
                fh.write(f"{i},{r.v_lon!r},{r.v_lat!r},{r.gear},"
                         f"{w.x!r},{w.y!r},{w.v!r},{w.psi!r}\n")

    @classmethod
    def from_csv(cls, path) -> "BurnIn":
        rate_hz = DEFAULT_RATE_HZ
        records = []
        with open(path, "r", encoding="utf-8") as fh:
            header_seen = False
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    key, _, value = line.lstrip("# ").partition("=")
                    if key.strip() == "rate_hz":
                        rate_hz = float(value)
                    continue
                if not header_seen:
                    if line != "t,v_lon,v_lat,gear,x,y,v,psi":
                        raise ValueError(f"unexpected burn-in header {line!r}")
                    header_seen = True
                    continue
                p = line.split(",")
                if len(p) != 8:
                    raise ValueError(f"malformed burn-in row {line!r}")
                records.append(BurnInRecord(
                    v_lon=float(p[1]), v_lat=float(p[2]), gear=int(p[3]),
                    waypoint=Waypoint(x=float(p[4]), y=float(p[5]),
                                      v=float(p[6]), psi=float(p[7])),
                ))
        return cls(tuple(records), rate_hz=rate_hz)


def _scripted_burnin(kappa_per_step, v_per_step, steps: int, vehicle: VehicleParams,
                     rate_hz: float) -> BurnIn:
    dt = 1.0 / rate_hz
    x = y = psi = 0.0
    records = [BurnInRecord(
        v_lon=float(v_per_step(0)), v_lat=0.0,
        gear=gear_for_speed(float(v_per_step(0)), vehicle),
        waypoint=Waypoint(x=0.0, y=0.0, v=float(v_per_step(0)), psi=0.0),
    )]
    for i in range(steps):
        v = float(v_per_step(i))
        psi = _kernels.wrap_angle(psi + float(kappa_per_step(i)) * v * dt)
        x += v * dt * math.cos(psi)
        y += v * dt * math.sin(psi)
        records.append(BurnInRecord(
            v_lon=v, v_lat=0.0, gear=gear_for_speed(v, vehicle),
            waypoint=Waypoint(x=x, y=y, v=v, psi=psi),
        ))
    return BurnIn(tuple(records), rate_hz=rate_hz)


def default_initial_conditions(vehicle: VehicleParams, steps: int = 10,
                               rate_hz: float = DEFAULT_RATE_HZ
                               ) -> list[tuple[str, BurnIn]]:
    """Four scripted burn-ins per vehicle, scaled to its envelope:
    sustained arcs left/right, a corner entry, and a faster straight."""
    entry = default_entry_speed(vehicle)
    kappa = 0.6 * curvature_cap(vehicle)
    fast = min(1.3 * entry, 0.85 * vehicle.max_speed)
    return [
        ("arc_left", _scripted_burnin(
            lambda i: 0.5 * kappa, lambda i: 0.9 * entry, steps, vehicle, rate_hz)),
        ("arc_right", _scripted_burnin(
            lambda i: -0.7 * kappa, lambda i: 0.8 * entry, steps, vehicle, rate_hz)),
        ("corner_entry", _scripted_burnin(
            lambda i: 0.85 * kappa * (i + 1) / steps, lambda i: 0.85 * entry,
            steps, vehicle, rate_hz)),
        ("fast_straight", _scripted_burnin(
            lambda i: 0.0, lambda i: fast, steps, vehicle, rate_hz)),
    ]


# -- the generic prior ---------------------------------------------------------

@dataclass
class PriorConfig:
    """Mixture-of-intents continuation sampler settings (vehicle-agnostic)."""

    num_modes: int = 7
    mode_curvature_span: float = 0.09  # rad/m, half-range of curvature intents
    curvature_noise: float = 0.012  # OU sigma, rad/m per sqrt(s)
    speed_noise: float = 0.25  # OU sigma, m/s per sqrt(s)
    noise_timescale: float = 1.5  # s
    horizon: int = 90  # continuation steps
    corridor_half_width: float = 3.0  # m, lateral band around the intent arc
    max_redraws: int = 100
    kappa_limit: float = 0.12  # rad/m, hard clamp on demanded curvature

    def __post_init__(self):
        if self.num_modes < 1:
            raise ValueError("num_modes must be >= 1")
        if self.horizon < 2:
            raise ValueError("horizon must be >= 2")
        for name in ("mode_curvature_span", "curvature_noise", "speed_noise",
                     "corridor_half_width", "kappa_limit"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be non-negative")
        if self.noise_timescale <= 0.0:
            raise ValueError("noise_timescale must be positive")
        if self.max_redraws < 1:
            raise ValueError("max_redraws must be >= 1")

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, indent=2)
            fh.write("\n")

    @classmethod
    def from_json(cls, path) -> "PriorConfig":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown prior config fields: {sorted(unknown)}")
        return cls(**raw)

    def mode_curvatures(self) -> np.ndarray:
        if self.num_modes == 1:
            return np.zeros(1)
        return np.linspace(-self.mode_curvature_span, self.mode_curvature_span,
                           self.num_modes)


def continuity_speed_tolerance(config: PriorConfig, rate_hz: float) -> float:
    """Bound on how much the first proposed step's speed can exceed the
    burn-in end speed (per-step speed increments are 3-sigma truncated)."""
    return 3.0 * config.speed_noise * math.sqrt(1.0 / rate_hz)


def _corridor_violated(xs, ys, anchor: Waypoint, mode: float,
                       half_width: float) -> bool:
    """Lateral distance from the intent's nominal locus: a circle through
    the anchor for curved intents, the heading line for straight ones."""
    if abs(mode) < 1e-9:
        c = math.cos(anchor.psi)
        s = math.sin(anchor.psi)
        lateral = -s * (xs - anchor.x) + c * (ys - anchor.y)
        return bool(np.any(np.abs(lateral) > half_width))
    radius = 1.0 / mode
    cx = anchor.x - math.sin(anchor.psi) * radius
    cy = anchor.y + math.cos(anchor.psi) * radius
    dist = np.hypot(xs - cx, ys - cy)
    return bool(np.any(np.abs(dist - abs(radius)) > half_width))


def sample_prior(burnin: BurnIn, config: PriorConfig,
                 rng: np.random.Generator) -> TargetTrajectory:
    """Propose one continuation of the burn-in.

    A curvature intent is drawn uniformly from the mode set; curvature
    and speed then follow Ornstein-Uhlenbeck wander around (intent,
    burn-in end speed). Proposals leaving the lateral corridor around the
    intent's nominal arc are redrawn, up to config.max_redraws. Knows
    nothing about vehicles.
    """
    anchor = burnin.anchor
    rate_hz = burnin.rate_hz
    dt = 1.0 / rate_hz
    modes = config.mode_curvatures()
    rho = math.exp(-dt / config.noise_timescale)
    sig_k = config.curvature_noise * math.sqrt(dt)
    sig_v = config.speed_noise * math.sqrt(dt)
    dv_cap = 3.0 * sig_v
    pull = 1.0 / config.noise_timescale

    for _ in range(config.max_redraws):
        mode = float(modes[int(rng.integers(config.num_modes))])
        n_k = 0.0
        v = anchor.v
        psi = anchor.psi
        x = anchor.x
        y = anchor.y
        xs = np.empty(config.horizon)
        ys = np.empty(config.horizon)
        vs = np.empty(config.horizon)
        psis = np.empty(config.horizon)
        noise = rng.standard_normal((config.horizon, 2))
        for i in range(config.horizon):
            n_k = rho * n_k + sig_k * noise[i, 0]
            kappa = min(config.kappa_limit, max(-config.kappa_limit, mode + n_k))
            dv = pull * (anchor.v - v) * dt + sig_v * noise[i, 1]
            dv = min(dv_cap, max(-dv_cap, dv))
            v = max(0.0, v + dv)
            psi = _kernels.wrap_angle(psi + kappa * v * dt)
            x += v * dt * math.cos(psi)
            y += v * dt * math.sin(psi)
            xs[i] = x
            ys[i] = y
            vs[i] = v
            psis[i] = psi
        if _corridor_violated(xs, ys, anchor, mode, config.corridor_half_width):
            continue
        waypoints = [Waypoint(x=float(xs[i]), y=float(ys[i]), v=float(vs[i]),
                              psi=float(psis[i]))
                     for i in range(config.horizon)]
        return TargetTrajectory(waypoints, rate_hz=rate_hz)
    raise PriorRejectionError(
        f"no proposal stayed inside the {config.corridor_half_width} m corridor "
        f"after {config.max_redraws} redraws"
    )


# -- burn-in execution ----------------------------------------------------------

def _state_from_records(records, vehicle: VehicleParams) -> VehicleState:
    r0 = records[0]
    w0 = r0.waypoint
    steer = 0.0
    if len(records) > 1:
        w1 = records[1].waypoint
        ds = math.hypot(w1.x - w0.x, w1.y - w0.y)
        if ds > 1e-9:
            kappa = _kernels.wrap_angle(w1.psi - w0.psi) / ds
            steer = math.atan(kappa * vehicle.wheelbase)
            steer = min(vehicle.max_steer, max(-vehicle.max_steer, steer))
    v0 = min(r0.v_lon, vehicle.max_speed)
    return VehicleState(
        x=w0.x, y=w0.y, yaw=w0.psi, v_lon=v0, v_lat=r0.v_lat,
        steer_angle=steer, gear=gear_for_speed(v0, vehicle),
    )


def _extend_straight(waypoints, extra: int, rate_hz: float) -> list:
    """Continue past the last waypoint along its heading at constant speed.

    Used to fill the follower's lookahead window during a burn-in replay.
    Without it the window end-pads with the final waypoint, which reads as
    an upcoming stop and makes the follower brake into the hand-off. A
    straight continuation is the prior's mean (its curvature intents are
    symmetric around zero), and it lets the wheel unwind toward neutral,
    which keeps the hand-off state executable for candidates turning
    either way.
    """
    out = list(waypoints)
    last = out[-1]
    dt = 1.0 / rate_hz
    x, y = last.x, last.y
    for _ in range(extra):
        x += last.v * dt * math.cos(last.psi)
        y += last.v * dt * math.sin(last.psi)
        out.append(Waypoint(x, y, last.v, last.psi))
    return out


def burn_in_execute(policy: GaussianPolicy, vehicle: VehicleParams,
                    burnin: BurnIn, eps: float | None = None) -> VehicleState:
    """Replay the burn-in with the follower's mean actions; returns the
    state the continuation starts from.

    Zero-step burn-ins return the initial state untouched. The follower
    must stay within eps of every burn-in waypoint, otherwise
    BurnInDeviationError is raised (single-step burn-ins cannot form a
    trajectory and are rejected). Only burn-in waypoints are ever scored;
    the replay target is extended past them (straight, constant speed)
    purely so the lookahead window never sees end padding.
    """
    if eps is None:
        eps = default_distance_tolerance(vehicle)
    state = _state_from_records(burnin.records, vehicle)
    if burnin.steps == 0:
        return state
    if burnin.steps == 1:
        raise ValueError("burn-ins must have zero or at least two steps")
    traj = TargetTrajectory(
        _extend_straight([r.waypoint for r in burnin.records[1:]],
                          policy.window, burnin.rate_hz),
        rate_hz=burnin.rate_hz)
    sim = WaypointEnv(vehicle, eps=eps, window=policy.window)
    obs = sim.reset(traj, state)
    for _ in range(burnin.steps):
        obs, _, done = sim.step(policy.mean_action(obs))
        if done and sim.terminated_by == TERMINATED_DISTANCE:
            raise BurnInDeviationError(
                f"follower left the burn-in corridor at step {sim.t} "
                f"(d > {eps} m)"
            )
    return sim.state()
