"""Reference (numpy) implementations of the per-step hot kernels.

Semantics here are the contract; `_native.pyx` mirrors this file operation
for operation. Keep the two in sync.

Shared array conventions:
    state  : float64[7]  = [x, y, yaw, v_lon, v_lat, steer, gear]
    core   : float64[6]  = [wheelbase, max_steer, max_accel, max_brake,
                            max_speed, steer_rate_limit]
    wps    : float64[T,4] = rows of (x, y, v, psi)
"""

from __future__ import annotations

import math

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    if -math.pi < a <= math.pi:  # already wrapped; keep bit-exact
        return a
    r = math.fmod(a + math.pi, TWO_PI)
    if r <= 0.0:
        r += TWO_PI
    return r - math.pi


def bicycle_step(state, steer_cmd, pedal_cmd, core, thresholds, scales, dt, out):
    """Advance the kinematic bicycle one step of length dt into `out`.

    Integration order (fixed, documented once here): steering angle moves
    toward steer_cmd * max_steer under the slew limit; longitudinal speed
    integrates pedal acceleration (drive force scaled by the current gear,
    braking unscaled, never reversing); the pose then advances using the
    NEW speed along the OLD heading, and heading integrates the NEW speed
    through the NEW steering angle. Gear is recomputed from the new speed.
    """
    x = state[0]
    y = state[1]
    yaw = state[2]
    v = state[3]
    steer = state[5]
    gear = int(state[6])
    wheelbase = core[0]
    max_steer = core[1]

    target = steer_cmd * max_steer
    dmax = core[5] * dt
    d = target - steer
    if d > dmax:
        d = dmax
    elif d < -dmax:
        d = -dmax
    steer_new = steer + d

    if pedal_cmd >= 0.0:
        accel = pedal_cmd * core[2] * scales[gear - 1]
    else:
        accel = pedal_cmd * core[3]
    v_new = v + accel * dt
    if v_new < 0.0:
        v_new = 0.0
    elif v_new > core[4]:
        v_new = core[4]

    out[0] = x + v_new * math.cos(yaw) * dt
    out[1] = y + v_new * math.sin(yaw) * dt
    out[2] = wrap_angle(yaw + v_new * math.tan(steer_new) / wheelbase * dt)
    out[3] = v_new
    out[4] = 0.0
    out[5] = steer_new
    g = 1
    for i in range(thresholds.shape[0]):
        if thresholds[i] < v_new:
            g += 1
    out[6] = float(g)


def observe_window(state, wps, t, window, out):
    """Fill `out` (length 3 + 3*window) with the egocentric observation.

    Layout: [v_lon, v_lat, gear, dx * window, dy * window, dpsi * window]
    where row j looks at waypoint index min(t + j, T - 1) (end padding
    repeats the final waypoint) and (dx, dy) is the world displacement
    rotated into the vehicle frame.
    """
    x = state[0]
    y = state[1]
    yaw = state[2]
    out[0] = state[3]
    out[1] = state[4]
    out[2] = state[6]
    c = math.cos(yaw)
    s = math.sin(yaw)
    last = wps.shape[0] - 1
    idx = np.arange(t, t + window)
    np.minimum(idx, last, out=idx)
    dx = wps[idx, 0] - x
    dy = wps[idx, 1] - y
    out[3 : 3 + window] = c * dx + s * dy
    out[3 + window : 3 + 2 * window] = -s * dx + c * dy
    r = np.fmod(wps[idx, 3] - yaw + math.pi, TWO_PI)
    r[r <= 0.0] += TWO_PI
    out[3 + 2 * window : 3 + 3 * window] = r - math.pi


def affine_act(w, b, x, act, out):
    """out = act(w @ x + b); act code 0 = identity, 1 = tanh."""
    np.dot(w, x, out=out)
    out += b
    if act == 1:
        np.tanh(out, out=out)
