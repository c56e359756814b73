"""Kinematic bicycle vehicle models with steering-rate and gear limits.

Every vehicle shares one integration scheme; what differs between
archetypes is the parameter set. The step update is bit-reproducible:
same (state, action, params, dt) gives the same floats every call.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_left
from dataclasses import dataclass, fields

import numpy as np

from . import _kernels

DEFAULT_DT = 0.1


def _require_finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class VehicleParams:
    """Static description of one vehicle.

    gear_speed_thresholds holds the ascending speeds (m/s) at which the
    next gear engages (length gear_count - 1); gear_accel_scale gives the
    drive-acceleration factor per gear in (0, 1] (length gear_count).
    Braking is never gear-scaled.
    """

    name: str
    wheelbase: float  # m
    max_steer: float  # rad, in (0, pi/2)
    max_accel: float  # m/s^2, at gear 1
    max_brake: float  # m/s^2, positive
    max_speed: float  # m/s
    steer_rate_limit: float  # rad/s
    gear_count: int
    gear_speed_thresholds: tuple[float, ...]
    gear_accel_scale: tuple[float, ...]

    def __post_init__(self):
        if not self.name or not isinstance(self.name, str):
            raise ValueError("vehicle name must be a non-empty string")
        for field in ("wheelbase", "max_accel", "max_brake", "max_speed", "steer_rate_limit"):
            if not (_require_finite(field, getattr(self, field)) > 0.0):
                raise ValueError(f"{field} must be positive")
        _require_finite("max_steer", self.max_steer)
        if not 0.0 < self.max_steer < math.pi / 2:
            raise ValueError("max_steer must lie in (0, pi/2)")
        if not isinstance(self.gear_count, int) or self.gear_count < 1:
            raise ValueError("gear_count must be an integer >= 1")
        thresholds = tuple(float(t) for t in self.gear_speed_thresholds)
        scales = tuple(float(s) for s in self.gear_accel_scale)
        object.__setattr__(self, "gear_speed_thresholds", thresholds)
        object.__setattr__(self, "gear_accel_scale", scales)
        if len(thresholds) != self.gear_count - 1:
            raise ValueError("gear_speed_thresholds must have gear_count - 1 entries")
        if len(scales) != self.gear_count:
            raise ValueError("gear_accel_scale must have gear_count entries")
        for t in thresholds:
            _require_finite("gear speed threshold", t)
            if t <= 0.0:
                raise ValueError("gear speed thresholds must be positive")
        if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
            raise ValueError("gear speed thresholds must be strictly ascending")
        for s in scales:
            _require_finite("gear accel scale", s)
            if not 0.0 < s <= 1.0:
                raise ValueError("gear accel scales must lie in (0, 1]")
        # cached arrays for the step kernel
        core = np.array(
            [self.wheelbase, self.max_steer, self.max_accel, self.max_brake,
             self.max_speed, self.steer_rate_limit],
            dtype=np.float64,
        )
        object.__setattr__(self, "_core", core)
        object.__setattr__(self, "_thresholds", np.array(thresholds, dtype=np.float64))
        object.__setattr__(self, "_scales", np.array(scales, dtype=np.float64))


def min_turning_radius(params: VehicleParams) -> float:
    """Turning radius at full steering lock: wheelbase / tan(max_steer)."""
    return params.wheelbase / math.tan(params.max_steer)


def gear_for_speed(v: float, params: VehicleParams) -> int:
    """Gear engaged at longitudinal speed v: 1 + thresholds strictly below |v|."""
    return 1 + bisect_left(params.gear_speed_thresholds, abs(v))


@dataclass(frozen=True)
class VehicleState:
    """Pose and motion at one instant. yaw is normalized to (-pi, pi];
    v_lat is carried for interface completeness and is identically zero
    under this kinematic model."""

    x: float
    y: float
    yaw: float
    v_lon: float
    v_lat: float
    steer_angle: float
    gear: int

    def __post_init__(self):
        for field in ("x", "y", "v_lon", "v_lat", "steer_angle"):
            object.__setattr__(self, field, _require_finite(field, getattr(self, field)))
        yaw = _require_finite("yaw", self.yaw)
        object.__setattr__(self, "yaw", _kernels.wrap_angle(yaw))
        if self.v_lon < 0.0:
            raise ValueError("v_lon must be non-negative")
        if not isinstance(self.gear, int) or self.gear < 1:
            raise ValueError("gear must be an integer >= 1")

    def validate_for(self, params: VehicleParams) -> None:
        """Raise if this state violates the vehicle's envelope or gear rule."""
        if abs(self.steer_angle) > params.max_steer:
            raise ValueError(
                f"steer_angle {self.steer_angle} exceeds max_steer {params.max_steer}"
            )
        if self.v_lon > params.max_speed:
            raise ValueError(f"v_lon {self.v_lon} exceeds max_speed {params.max_speed}")
        expected = gear_for_speed(self.v_lon, params)
        if self.gear != expected:
            raise ValueError(
                f"gear {self.gear} inconsistent with speed {self.v_lon} (expected {expected})"
            )

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.x, self.y, self.yaw, self.v_lon, self.v_lat, self.steer_angle,
             float(self.gear)],
            dtype=np.float64,
        )

    @classmethod
    def from_array(cls, arr) -> "VehicleState":
        return cls(
            x=float(arr[0]), y=float(arr[1]), yaw=float(arr[2]), v_lon=float(arr[3]),
            v_lat=float(arr[4]), steer_angle=float(arr[5]), gear=int(round(float(arr[6]))),
        )


@dataclass(frozen=True)
class Action:
    """Normalized control: steer_cmd and pedal_cmd clamped to [-1, 1].
    Non-finite inputs are rejected rather than clamped."""

    steer_cmd: float
    pedal_cmd: float

    def __post_init__(self):
        for field in ("steer_cmd", "pedal_cmd"):
            v = _require_finite(field, getattr(self, field))
            object.__setattr__(self, field, min(1.0, max(-1.0, v)))


def step(state: VehicleState, action: Action, params: VehicleParams,
         dt: float = DEFAULT_DT) -> VehicleState:
    """Advance one step of length dt.

    Update order (the one documented order, mirrored by the kernels):
    steering angle slews toward steer_cmd * max_steer under the rate
    limit; v_lon integrates the pedal acceleration (drive scaled by the
    current gear, braking unscaled and never reversing, result clamped to
    [0, max_speed]); position advances along the OLD heading with the NEW
    speed; heading integrates the NEW speed through the NEW steering
    angle and wraps to (-pi, pi]; the gear re-engages from the new speed.
    """
    dt = _require_finite("dt", dt)
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    state.validate_for(params)
    out = np.empty(7, dtype=np.float64)
    _kernels.bicycle_step(
        state.as_array(), action.steer_cmd, action.pedal_cmd,
        params._core, params._thresholds, params._scales, dt, out,
    )
    return VehicleState.from_array(out)


def builtin_fleet() -> tuple[VehicleParams, ...]:
    """Four archetypes spanning nimble to heavy.

    Ordered roughly by agility; the heavy truck has a strictly larger
    minimum turning radius and strictly smaller peak acceleration than
    the sporty archetype.
    """
    return (
        VehicleParams(
            name="sporty", wheelbase=2.7, max_steer=0.62, max_accel=4.5,
            max_brake=8.0, max_speed=40.0, steer_rate_limit=1.2, gear_count=3,
            gear_speed_thresholds=(8.0, 16.0), gear_accel_scale=(1.0, 0.8, 0.6),
        ),
        VehicleParams(
            name="offroad", wheelbase=2.95, max_steer=0.55, max_accel=3.2,
            max_brake=7.0, max_speed=33.0, steer_rate_limit=1.0, gear_count=3,
            gear_speed_thresholds=(6.0, 13.0), gear_accel_scale=(1.0, 0.75, 0.55),
        ),
        VehicleParams(
            name="boxtruck", wheelbase=4.2, max_steer=0.45, max_accel=2.2,
            max_brake=5.0, max_speed=27.0, steer_rate_limit=0.8, gear_count=4,
            gear_speed_thresholds=(5.0, 10.0, 16.0),
            gear_accel_scale=(1.0, 0.7, 0.5, 0.35),
        ),
        VehicleParams(
            name="heavytruck", wheelbase=5.2, max_steer=0.38, max_accel=1.5,
            max_brake=3.5, max_speed=25.0, steer_rate_limit=0.6, gear_count=4,
            gear_speed_thresholds=(4.0, 9.0, 14.0),
            gear_accel_scale=(1.0, 0.6, 0.4, 0.25),
        ),
    )


def get_vehicle(name: str, fleet: tuple[VehicleParams, ...] | None = None) -> VehicleParams:
    fleet = builtin_fleet() if fleet is None else fleet
    for params in fleet:
        if params.name == name:
            return params
    known = ", ".join(p.name for p in fleet)
    raise KeyError(f"unknown vehicle {name!r} (known: {known})")


_PARAM_FIELDS = None


def _param_fields() -> dict[str, type]:
    global _PARAM_FIELDS
    if _PARAM_FIELDS is None:
        _PARAM_FIELDS = {f.name for f in fields(VehicleParams)}
    return _PARAM_FIELDS


def load_fleet(path) -> tuple[VehicleParams, ...]:
    """Load vehicle definitions from a JSON list of parameter objects.

    Field names must match VehicleParams exactly; unknown fields are
    rejected so typos cannot silently fall back to defaults.
    """
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, list):
        raise ValueError("fleet JSON must be a list of vehicle objects")
    out = []
    for i, entry in enumerate(raw):
        if not isinstance(entry, dict):
            raise ValueError(f"fleet entry {i} is not an object")
        unknown = set(entry) - _param_fields()
        if unknown:
            raise ValueError(f"fleet entry {i} has unknown fields: {sorted(unknown)}")
        missing = _param_fields() - set(entry)
        if missing:
            raise ValueError(f"fleet entry {i} is missing fields: {sorted(missing)}")
        entry = dict(entry)
        entry["gear_speed_thresholds"] = tuple(entry["gear_speed_thresholds"])
        entry["gear_accel_scale"] = tuple(entry["gear_accel_scale"])
        out.append(VehicleParams(**entry))
    return tuple(out)


def save_fleet(fleet, path) -> None:
    rows = []
    for p in fleet:
        rows.append({f.name: getattr(p, f.name) for f in fields(VehicleParams)})
        rows[-1]["gear_speed_thresholds"] = list(p.gear_speed_thresholds)
        rows[-1]["gear_accel_scale"] = list(p.gear_accel_scale)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(rows, fh, indent=2)
        fh.write("\n")
