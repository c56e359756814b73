"""Waypoint-following environment.

Targets are time-indexed: after n steps the vehicle is compared against
the n-th waypoint, never against the nearest point on the path, so
falling behind schedule is itself a failure mode. The observation is a
sliding window of waypoint poses expressed in the vehicle frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .dynamics import Action, VehicleParams, VehicleState, gear_for_speed

TERMINATED_COMPLETED = "completed"
TERMINATED_DISTANCE = "distance_exceeded"
TERMINATED_TIME = "time_limit"

DEFAULT_EPS = 1.0
DEFAULT_WINDOW = 30
DEFAULT_RATE_HZ = 10.0

# permissive global bound used only to reject nonsense trajectories
MAX_WAYPOINT_SPEED = 60.0


def default_distance_tolerance(vehicle: VehicleParams | str) -> float:
    """Success tolerance in meters; the heavy archetype gets a wider band."""
    name = vehicle if isinstance(vehicle, str) else vehicle.name
    return 1.5 if name == "heavytruck" else DEFAULT_EPS


@dataclass(frozen=True)
class Waypoint:
    """One target: position, demanded speed, demanded heading."""

    x: float
    y: float
    v: float
    psi: float

    def __post_init__(self):
        for field in ("x", "y", "v", "psi"):
            value = float(getattr(self, field))
            if not math.isfinite(value):
                raise ValueError(f"waypoint {field} must be finite")
            object.__setattr__(self, field, value)
        if self.v < 0.0:
            raise ValueError("waypoint speed must be non-negative")
        object.__setattr__(self, "psi", _kernels.wrap_angle(self.psi))


class TargetTrajectory:
    """Fixed-rate waypoint sequence.

    waypoints[i] is the target i+1 steps after the implied start pose
    (the pose one step before waypoints[0]). Consecutive waypoints may
    not be farther apart than MAX_WAYPOINT_SPEED / rate_hz.
    """

    __slots__ = ("waypoints", "rate_hz", "array")

    def __init__(self, waypoints, rate_hz: float = DEFAULT_RATE_HZ):
        waypoints = tuple(waypoints)
        if len(waypoints) < 2:
            raise ValueError("a trajectory needs at least 2 waypoints")
        rate_hz = float(rate_hz)
        if not (math.isfinite(rate_hz) and rate_hz > 0.0):
            raise ValueError("rate_hz must be positive and finite")
        arr = np.empty((len(waypoints), 4), dtype=np.float64)
        for i, w in enumerate(waypoints):
            if not isinstance(w, Waypoint):
                raise TypeError("waypoints must be Waypoint instances")
            arr[i, 0] = w.x
            arr[i, 1] = w.y
            arr[i, 2] = w.v
            arr[i, 3] = w.psi
        gaps = np.hypot(np.diff(arr[:, 0]), np.diff(arr[:, 1]))
        bound = MAX_WAYPOINT_SPEED / rate_hz
        if gaps.size and float(gaps.max()) > bound:
            raise ValueError(
                f"consecutive waypoints {float(gaps.max()):.3f} m apart exceed the "
                f"{bound:.3f} m bound at {rate_hz} Hz"
            )
        self.waypoints = waypoints
        self.rate_hz = rate_hz
        self.array = arr

    def __len__(self) -> int:
        return len(self.waypoints)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, TargetTrajectory)
            and self.rate_hz == other.rate_hz
            and self.waypoints == other.waypoints
        )

    @property
    def dt(self) -> float:
        return 1.0 / self.rate_hz

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# rate_hz={self.rate_hz!r}\n")
            fh.write("t,x,y,v,psi\n")
            for i, w in enumerate(self.waypoints):
                fh.write(f"{i + 1},{w.x!r},{w.y!r},{w.v!r},{w.psi!r}\n")

    @classmethod
    def from_csv(cls, path) -> "TargetTrajectory":
        rate_hz = DEFAULT_RATE_HZ
        waypoints = []
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
                    if line != "t,x,y,v,psi":
                        raise ValueError(f"unexpected trajectory header {line!r}")
                    header_seen = True
                    continue
                parts = line.split(",")
                if len(parts) != 5:
                    raise ValueError(f"malformed trajectory row {line!r}")
                waypoints.append(
                    Waypoint(x=float(parts[1]), y=float(parts[2]),
                             v=float(parts[3]), psi=float(parts[4]))
                )
        return cls(waypoints, rate_hz=rate_hz)


@dataclass
class Observation:
    """Egocentric view: scalar motion state plus a window of relative
    waypoint poses (window positions rotated into the vehicle frame,
    heading offsets wrapped to (-pi, pi])."""

    v_lon: float
    v_lat: float
    gear: float
    rel_x: np.ndarray
    rel_y: np.ndarray
    rel_psi: np.ndarray

    @property
    def flat(self) -> np.ndarray:
        return np.concatenate(
            ([self.v_lon, self.v_lat, self.gear], self.rel_x, self.rel_y, self.rel_psi)
        )

    @classmethod
    def from_flat(cls, vec) -> "Observation":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.ndim != 1 or (vec.size - 3) % 3 != 0 or vec.size < 6:
            raise ValueError("flat observation must have length 3 + 3 * window")
        window = (vec.size - 3) // 3
        return cls(
            v_lon=float(vec[0]), v_lat=float(vec[1]), gear=float(vec[2]),
            rel_x=vec[3 : 3 + window].copy(),
            rel_y=vec[3 + window : 3 + 2 * window].copy(),
            rel_psi=vec[3 + 2 * window :].copy(),
        )


def obs_dim(window: int) -> int:
    return 3 * (window + 1)


def observe(state: VehicleState, traj: TargetTrajectory, t: int, window: int) -> Observation:
    """Observation at step index t (0 = before the first step; t may equal
    len(traj) so a terminal observation exists). The window covers
    waypoint indices t .. t+window-1, end-padded with the final waypoint."""
    if window < 1:
        raise ValueError("window must be >= 1")
    if not 0 <= t <= len(traj):
        raise ValueError(f"step index {t} outside [0, {len(traj)}]")
    out = np.empty(obs_dim(window), dtype=np.float64)
    _kernels.observe_window(state.as_array(), traj.array, t, window, out)
    return Observation.from_flat(out)


def reward(state: VehicleState, waypoint: Waypoint, eps: float) -> float:
    """Per-step reward: eps minus the planar distance to the target."""
    return eps - math.hypot(state.x - waypoint.x, state.y - waypoint.y)


@dataclass
class EpisodeTrace:
    """Everything one episode produced. states has one more entry than the
    per-step lists (the initial state). target_length is the T of the
    trajectory being followed, which an early termination never reached."""

    states: list[VehicleState]
    actions: list[Action]
    rewards: list[float]
    distances: list[float]
    terminated_by: str
    target_length: int
    rate_hz: float = DEFAULT_RATE_HZ

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# rate_hz={self.rate_hz!r} target_length={self.target_length} "
                     f"terminated_by={self.terminated_by}\n")
            fh.write("t,x,y,yaw,v_lon,gear,steer_cmd,pedal_cmd,reward,d\n")
            for i in range(len(self.actions)):
                s = self.states[i + 1]
                a = self.actions[i]
                fh.write(
                    f"{i + 1},{s.x!r},{s.y!r},{s.yaw!r},{s.v_lon!r},{s.gear},"
                    f"{a.steer_cmd!r},{a.pedal_cmd!r},{self.rewards[i]!r},"
                    f"{self.distances[i]!r}\n"
                )


def success(trace: EpisodeTrace, eps: float) -> bool:
    """True iff every scheduled step was taken and stayed within eps."""
    return (
        len(trace.distances) == trace.target_length
        and all(d <= eps for d in trace.distances)
    )


def hit_fraction(trace: EpisodeTrace, eps: float) -> float:
    """Fraction of the T scheduled steps with d <= eps; steps an early
    termination never reached count as misses."""
    hits = sum(1 for d in trace.distances if d <= eps)
    return hits / trace.target_length


def _implied_steer(w_from: Waypoint, w_to: Waypoint, params: VehicleParams) -> float:
    ds = math.hypot(w_to.x - w_from.x, w_to.y - w_from.y)
    if ds <= 1e-9:
        return 0.0
    kappa = _kernels.wrap_angle(w_to.psi - w_from.psi) / ds
    steer = math.atan(kappa * params.wheelbase)
    return min(params.max_steer, max(-params.max_steer, steer))


def initial_state_for(traj: TargetTrajectory, params: VehicleParams) -> VehicleState:
    """Implied start state one step before the first waypoint.

    Pose back-extrapolates the first waypoint along its own heading;
    steering is pre-set from the curvature implied by the first heading
    change so arc entries do not start with a steering transient.
    """
    w0, w1 = traj.waypoints[0], traj.waypoints[1]
    dt = traj.dt
    v0 = min(w0.v, params.max_speed)
    return VehicleState(
        x=w0.x - math.cos(w0.psi) * v0 * dt,
        y=w0.y - math.sin(w0.psi) * v0 * dt,
        yaw=w0.psi,
        v_lon=v0,
        v_lat=0.0,
        steer_angle=_implied_steer(w0, w1, params),
        gear=gear_for_speed(v0, params),
    )


def state_on_trajectory(traj: TargetTrajectory, params: VehicleParams,
                        start: int) -> VehicleState:
    """State from which a `start`-indexed episode begins on schedule.

    start = 0 gives initial_state_for; start >= 1 sits exactly on
    waypoint start-1 (the pose one step before the first compared
    waypoint), with steering pre-set from the upcoming heading change.
    """
    if start == 0:
        return initial_state_for(traj, params)
    if not 1 <= start <= len(traj) - 1:
        raise ValueError(f"start {start} outside [0, {len(traj) - 1}]")
    anchor = traj.waypoints[start - 1]
    v0 = min(anchor.v, params.max_speed)
    return VehicleState(
        x=anchor.x, y=anchor.y, yaw=anchor.psi, v_lon=v0, v_lat=0.0,
        steer_angle=_implied_steer(anchor, traj.waypoints[start], params),
        gear=gear_for_speed(v0, params),
    )


class WaypointEnv:
    """Steps a vehicle against a TargetTrajectory.

    Termination: first step with d > eps ends the episode as
    "distance_exceeded"; surviving all T waypoints ends it as
    "completed"; a configured time limit (T + time_limit_extra, only
    reachable when the extra is negative) ends it as "time_limit".
    """

    def __init__(self, vehicle: VehicleParams, eps: float = DEFAULT_EPS,
                 window: int = DEFAULT_WINDOW, time_limit_extra: int = 10):
        if eps <= 0.0 or not math.isfinite(eps):
            raise ValueError("eps must be positive and finite")
        if window < 1:
            raise ValueError("window must be >= 1")
        self.vehicle = vehicle
        self.eps = float(eps)
        self.window = int(window)
        self.time_limit_extra = int(time_limit_extra)
        self._traj: TargetTrajectory | None = None
        self._obs = np.empty(obs_dim(self.window), dtype=np.float64)

    # -- episode control -------------------------------------------------

    def reset(self, traj: TargetTrajectory, initial_state: VehicleState | None = None,
              start: int = 0):
        """Start an episode; returns the flat initial observation.

        start is the waypoint cursor: the first step is judged against
        waypoints[start]. Non-zero starts need an initial_state that is
        on schedule there (see state_on_trajectory).
        """
        if not 0 <= start <= len(traj) - 1:
            raise ValueError(f"start {start} outside [0, {len(traj) - 1}]")
        if initial_state is None:
            initial_state = state_on_trajectory(traj, self.vehicle, start)
        initial_state.validate_for(self.vehicle)
        self._traj = traj
        self._dt = traj.dt
        self._T = len(traj)
        self._t_max = self._T + self.time_limit_extra
        if self._t_max <= start:
            raise ValueError("time limit leaves no room for a single step")
        n = self._t_max
        self._states = np.empty((n + 1, 7), dtype=np.float64)
        self._actions = np.empty((n, 2), dtype=np.float64)
        self._rewards = np.empty(n, dtype=np.float64)
        self._distances = np.empty(n, dtype=np.float64)
        self._states[start] = initial_state.as_array()
        self._start = start
        self._t = start
        self._hits = 0
        self.terminated_by: str | None = None
        _kernels.observe_window(self._states[start], traj.array, start,
                                self.window, self._obs)
        return self._obs.copy()

    def step(self, action):
        """Apply one action; returns (flat observation, reward, done).

        Accepts an Action or any (steer_cmd, pedal_cmd) pair; commands are
        clamped to [-1, 1], non-finite commands are rejected.
        """
        if self._traj is None:
            raise RuntimeError("reset() must be called before step()")
        if self.terminated_by is not None:
            raise RuntimeError("episode already terminated; call reset()")
        if isinstance(action, Action):
            steer_cmd, pedal_cmd = action.steer_cmd, action.pedal_cmd
        else:
            steer_cmd = float(action[0])
            pedal_cmd = float(action[1])
            if not (math.isfinite(steer_cmd) and math.isfinite(pedal_cmd)):
                raise ValueError("action commands must be finite")
            steer_cmd = min(1.0, max(-1.0, steer_cmd))
            pedal_cmd = min(1.0, max(-1.0, pedal_cmd))

        t = self._t
        vehicle = self.vehicle
        _kernels.bicycle_step(
            self._states[t], steer_cmd, pedal_cmd, vehicle._core,
            vehicle._thresholds, vehicle._scales, self._dt, self._states[t + 1],
        )
        n = t + 1
        wp = self._traj.array
        d = math.hypot(self._states[n, 0] - wp[n - 1, 0],
                       self._states[n, 1] - wp[n - 1, 1])
        r = self.eps - d
        self._actions[t, 0] = steer_cmd
        self._actions[t, 1] = pedal_cmd
        self._rewards[t] = r
        self._distances[t] = d
        self._t = n
        if d <= self.eps:
            self._hits += 1
        if d > self.eps:
            self.terminated_by = TERMINATED_DISTANCE
        elif n == self._T:
            self.terminated_by = TERMINATED_COMPLETED
        elif n >= self._t_max:
            self.terminated_by = TERMINATED_TIME
        _kernels.observe_window(self._states[n], wp, n, self.window, self._obs)
        return self._obs.copy(), r, self.terminated_by is not None

    # -- inspection --------------------------------------------------------

    @property
    def t(self) -> int:
        return self._t

    @property
    def start_index(self) -> int:
        return self._start

    @property
    def done(self) -> bool:
        return self.terminated_by is not None

    @property
    def target_length(self) -> int:
        return self._T

    @property
    def scheduled_steps(self) -> int:
        """Waypoints this episode could reach (T minus the start cursor)."""
        return self._T - self._start

    @property
    def hit_count(self) -> int:
        return self._hits

    @property
    def episode_return(self) -> float:
        return float(self._rewards[self._start : self._t].sum())

    def state(self) -> VehicleState:
        return VehicleState.from_array(self._states[self._t])

    def observation(self) -> Observation:
        return Observation.from_flat(self._obs)

    def trace(self) -> EpisodeTrace:
        """Materialize the episode so far as dataclasses."""
        n = self._t
        s = self._start
        return EpisodeTrace(
            states=[VehicleState.from_array(self._states[i]) for i in range(s, n + 1)],
            actions=[Action(self._actions[i, 0], self._actions[i, 1]) for i in range(s, n)],
            rewards=[float(r) for r in self._rewards[s:n]],
            distances=[float(d) for d in self._distances[s:n]],
            terminated_by=self.terminated_by,
            target_length=self._T - s,
            rate_hz=self._traj.rate_hz,
        )
