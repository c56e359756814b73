"""Kernel backends: frozen-value oracles, cross-backend agreement, selection."""

import math
import os
import subprocess
import sys

import numpy as np
import pytest

from drivefit import _kernels
from drivefit._kernels import load_backend, reference

try:
    from drivefit._kernels import _native
except ImportError:
    _native = None

BACKENDS = [reference] if _native is None else [reference, _native]
needs_native = pytest.mark.skipif(_native is None, reason="compiled extension not built")


def _random_case(rng):
    wheelbase = rng.uniform(2.0, 6.0)
    max_steer = rng.uniform(0.3, 0.7)
    max_speed = rng.uniform(20.0, 45.0)
    core = np.array([wheelbase, max_steer, rng.uniform(1.0, 5.0),
                     rng.uniform(3.0, 9.0), max_speed, rng.uniform(0.5, 1.5)])
    thresholds = np.sort(rng.uniform(3.0, max_speed - 1.0, rng.integers(0, 4)))
    scales = np.concatenate([[1.0], rng.uniform(0.2, 0.9, thresholds.size)])
    v = rng.uniform(0.0, max_speed)
    gear = 1 + int(np.searchsorted(thresholds, v, side="left"))
    state = np.array([rng.uniform(-50, 50), rng.uniform(-50, 50),
                      rng.uniform(-math.pi, math.pi), v, 0.0,
                      rng.uniform(-max_steer, max_steer), float(gear)])
    steer_cmd, pedal_cmd = rng.uniform(-1.0, 1.0, 2)
    return state, steer_cmd, pedal_cmd, core, thresholds, scales


# ---------------------------------------------------------------- wrap_angle

@pytest.mark.parametrize("backend", BACKENDS)
def test_wrap_angle_frozen_values(backend):
    assert backend.wrap_angle(0.0) == 0.0
    assert backend.wrap_angle(math.pi) == math.pi
    assert backend.wrap_angle(-math.pi) == math.pi  # half-open interval (-pi, pi]
    assert backend.wrap_angle(3.0 * math.pi) == pytest.approx(math.pi, abs=1e-15)
    assert backend.wrap_angle(6.2) == pytest.approx(6.2 - 2.0 * math.pi, abs=1e-15)
    assert backend.wrap_angle(-3.6) == pytest.approx(-3.6 + 2.0 * math.pi, abs=1e-15)
    assert backend.wrap_angle(0.25) == 0.25


@pytest.mark.parametrize("backend", BACKENDS)
def test_wrap_angle_range_and_periodicity(backend):
    rng = np.random.default_rng(11)
    for _ in range(500):
        a = float(rng.uniform(-40.0, 40.0))
        w = backend.wrap_angle(a)
        assert -math.pi < w <= math.pi
        k = int(rng.integers(-4, 5))
        assert backend.wrap_angle(a + 2.0 * math.pi * k) == pytest.approx(w, abs=1e-9)


# --------------------------------------------------------------- bicycle_step

@pytest.mark.parametrize("backend", BACKENDS)
def test_step_accelerate_from_rest(backend):
    # pedal 1.0 from rest, max_accel 3.0, dt 0.1: speed integrates first,
    # then position uses the new speed, so v = 0.3 and x = 0.03.
    state = np.zeros(7)
    state[6] = 1.0
    core = np.array([2.7, 0.62, 3.0, 8.0, 40.0, 1.2])
    out = np.empty(7)
    backend.bicycle_step(state, 0.0, 1.0, core, np.array([8.0, 16.0]),
                         np.array([1.0, 0.8, 0.6]), 0.1, out)
    assert out[3] == pytest.approx(0.3, abs=1e-15)
    assert out[0] == pytest.approx(0.03, abs=1e-15)
    assert out[1] == 0.0 and out[2] == 0.0
    assert out[6] == 1.0


@pytest.mark.parametrize("backend", BACKENDS)
def test_step_rest_is_fixed_point(backend):
    state = np.array([3.0, -2.0, 0.7, 0.0, 0.0, 0.0, 1.0])
    core = np.array([2.7, 0.62, 4.5, 8.0, 40.0, 1.2])
    out = np.empty(7)
    backend.bicycle_step(state, 0.0, 0.0, core, np.array([8.0, 16.0]),
                         np.array([1.0, 0.8, 0.6]), 0.1, out)
    assert np.array_equal(out, state)


@pytest.mark.parametrize("backend", BACKENDS)
def test_step_steer_slew_limit(backend):
    state = np.zeros(7)
    state[3] = 5.0
    state[6] = 1.0
    core = np.array([2.7, 0.62, 4.5, 8.0, 40.0, 1.2])
    out = np.empty(7)
    backend.bicycle_step(state, 1.0, 0.0, core, np.array([8.0, 16.0]),
                         np.array([1.0, 0.8, 0.6]), 0.1, out)
    # full-left command moves the wheel by at most rate * dt in one step
    assert out[5] == 1.2 * 0.1
    # repeated commands saturate exactly at steer_cmd * max_steer
    cur = state.copy()
    for _ in range(20):
        backend.bicycle_step(cur, 1.0, 0.0, core, np.array([8.0, 16.0]),
                             np.array([1.0, 0.8, 0.6]), 0.1, out)
        cur = out.copy()
    assert cur[5] == 0.62


@pytest.mark.parametrize("backend", BACKENDS)
def test_step_brake_clamps_at_zero_and_top_speed(backend):
    core = np.array([2.7, 0.62, 4.5, 8.0, 40.0, 1.2])
    thresholds = np.array([8.0, 16.0])
    scales = np.array([1.0, 0.8, 0.6])
    out = np.empty(7)
    slow = np.array([0.0, 0.0, 0.0, 0.2, 0.0, 0.0, 1.0])
    backend.bicycle_step(slow, 0.0, -1.0, core, thresholds, scales, 0.1, out)
    assert out[3] == 0.0  # no reversing
    fast = np.array([0.0, 0.0, 0.0, 40.0, 0.0, 0.0, 3.0])
    backend.bicycle_step(fast, 0.0, 1.0, core, thresholds, scales, 0.1, out)
    assert out[3] == 40.0  # capped at max_speed


@pytest.mark.parametrize("backend", BACKENDS)
def test_step_gear_recomputed_from_new_speed(backend):
    core = np.array([2.7, 0.62, 3.0, 8.0, 40.0, 1.2])
    thresholds = np.array([8.0, 16.0])
    scales = np.array([1.0, 0.8, 0.6])
    out = np.empty(7)
    state = np.array([0.0, 0.0, 0.0, 7.95, 0.0, 0.0, 1.0])
    backend.bicycle_step(state, 0.0, 1.0, core, thresholds, scales, 0.1, out)
    assert out[3] > 8.0 and out[6] == 2.0
    # strict inequality: landing exactly on a threshold keeps the lower gear
    state = np.array([0.0, 0.0, 0.0, 8.0, 0.0, 0.0, 1.0])
    backend.bicycle_step(state, 0.0, 0.0, core, thresholds, scales, 0.1, out)
    assert out[6] == 1.0


@pytest.mark.parametrize("backend", BACKENDS)
def test_step_gear_scales_drive_not_brake(backend):
    core = np.array([2.7, 0.62, 4.0, 8.0, 40.0, 1.2])
    thresholds = np.array([8.0, 16.0])
    scales = np.array([1.0, 0.5, 0.25])
    out = np.empty(7)
    state = np.array([0.0, 0.0, 0.0, 10.0, 0.0, 0.0, 2.0])
    backend.bicycle_step(state, 0.0, 1.0, core, thresholds, scales, 0.1, out)
    assert out[3] == pytest.approx(10.0 + 4.0 * 0.5 * 0.1, abs=1e-15)
    backend.bicycle_step(state, 0.0, -0.5, core, thresholds, scales, 0.1, out)
    assert out[3] == pytest.approx(10.0 - 0.5 * 8.0 * 0.1, abs=1e-15)


# ------------------------------------------------------------- observe_window

@pytest.mark.parametrize("backend", BACKENDS)
def test_observe_frozen_axis_aligned(backend):
    state = np.array([1.0, 2.0, 0.0, 4.0, 0.25, 0.0, 2.0])
    wps = np.array([
        [2.0, 2.0, 4.0, 0.0],
        [3.0, 2.5, 4.0, 0.5],
    ])
    out = np.empty(3 + 3 * 3)
    backend.observe_window(state, wps, 0, 3, out)
    assert out[0] == 4.0 and out[1] == 0.25 and out[2] == 2.0
    assert np.allclose(out[3:6], [1.0, 2.0, 2.0], atol=1e-15)  # dx, padded
    assert np.allclose(out[6:9], [0.0, 0.5, 0.5], atol=1e-15)  # dy
    assert np.allclose(out[9:12], [0.0, 0.5, 0.5], atol=1e-15)  # dpsi


@pytest.mark.parametrize("backend", BACKENDS)
def test_observe_heading_wrap(backend):
    # vehicle yaw -3.1, waypoint psi 3.1: shortest rotation is -0.083..., not 6.2
    state = np.array([0.0, 0.0, -3.1, 1.0, 0.0, 0.0, 1.0])
    wps = np.array([[1.0, 0.0, 1.0, 3.1]])
    out = np.empty(6)
    backend.observe_window(state, wps, 0, 1, out)
    assert out[5] == pytest.approx(6.2 - 2.0 * math.pi, abs=1e-12)


@pytest.mark.parametrize("backend", BACKENDS)
def test_observe_rigid_motion_invariance(backend):
    rng = np.random.default_rng(5)
    for _ in range(50):
        state = np.array([rng.uniform(-5, 5), rng.uniform(-5, 5),
                          rng.uniform(-math.pi, math.pi), rng.uniform(0, 10),
                          0.0, 0.0, 1.0])
        wps = np.column_stack([
            rng.uniform(-5, 5, 6), rng.uniform(-5, 5, 6),
            rng.uniform(0, 10, 6), rng.uniform(-math.pi, math.pi, 6),
        ])
        a = np.empty(3 + 3 * 4)
        backend.observe_window(state, wps, 1, 4, a)
        # translate everything and rotate about the origin by the same angle
        ang = float(rng.uniform(-math.pi, math.pi))
        tx, ty = rng.uniform(-20, 20, 2)
        c, s = math.cos(ang), math.sin(ang)
        rot = np.array([[c, -s], [s, c]])
        state2 = state.copy()
        state2[:2] = rot @ state[:2] + (tx, ty)
        state2[2] = reference.wrap_angle(state[2] + ang)
        wps2 = wps.copy()
        wps2[:, :2] = wps[:, :2] @ rot.T + (tx, ty)
        wps2[:, 3] = [reference.wrap_angle(p + ang) for p in wps[:, 3]]
        b = np.empty_like(a)
        backend.observe_window(state2, wps2, 1, 4, b)
        assert np.allclose(a, b, atol=1e-9)


# ---------------------------------------------------------------- affine_act

@pytest.mark.parametrize("backend", BACKENDS)
def test_affine_act_frozen(backend):
    w = np.array([[1.0, 2.0], [3.0, 4.0]])
    b = np.array([0.5, -0.5])
    x = np.array([1.0, 1.0])
    out = np.empty(2)
    backend.affine_act(w, b, x, 0, out)
    assert np.array_equal(out, [3.5, 6.5])
    backend.affine_act(w, b, x, 1, out)
    assert np.allclose(out, np.tanh([3.5, 6.5]), atol=1e-15)


# ------------------------------------------------------- cross-backend checks

@needs_native
def test_backends_agree_on_bicycle_step():
    rng = np.random.default_rng(101)
    for _ in range(300):
        state, steer_cmd, pedal_cmd, core, thresholds, scales = _random_case(rng)
        a, b = np.empty(7), np.empty(7)
        reference.bicycle_step(state, steer_cmd, pedal_cmd, core, thresholds,
                               scales, 0.1, a)
        _native.bicycle_step(state, steer_cmd, pedal_cmd, core, thresholds,
                             scales, 0.1, b)
        assert np.allclose(a, b, rtol=0.0, atol=1e-12), (a, b)


@needs_native
def test_backends_agree_on_observe_window():
    rng = np.random.default_rng(103)
    for _ in range(200):
        state = np.array([rng.uniform(-50, 50), rng.uniform(-50, 50),
                          rng.uniform(-math.pi, math.pi), rng.uniform(0, 30),
                          0.0, 0.0, 2.0])
        n = int(rng.integers(1, 12))
        wps = np.column_stack([
            rng.uniform(-60, 60, n), rng.uniform(-60, 60, n),
            rng.uniform(0, 20, n), rng.uniform(-math.pi, math.pi, n),
        ])
        t = int(rng.integers(0, n))
        window = int(rng.integers(1, 8))
        a = np.empty(3 + 3 * window)
        b = np.empty_like(a)
        reference.observe_window(state, wps, t, window, a)
        _native.observe_window(state, wps, t, window, b)
        assert np.allclose(a, b, rtol=0.0, atol=1e-12)


@needs_native
def test_backends_agree_on_affine_act():
    rng = np.random.default_rng(107)
    for _ in range(200):
        n_out = int(rng.integers(1, 40))
        n_in = int(rng.integers(1, 40))
        w = rng.normal(size=(n_out, n_in))
        b = rng.normal(size=n_out)
        x = rng.normal(size=n_in)
        act = int(rng.integers(0, 2))
        a, c = np.empty(n_out), np.empty(n_out)
        reference.affine_act(w, b, x, act, a)
        _native.affine_act(w, b, x, act, c)
        assert np.allclose(a, c, rtol=0.0, atol=1e-12)


@needs_native
def test_backends_agree_wrap_angle():
    rng = np.random.default_rng(109)
    for a in rng.uniform(-50.0, 50.0, 1000):
        assert _native.wrap_angle(float(a)) == pytest.approx(
            reference.wrap_angle(float(a)), abs=1e-12)


@pytest.mark.parametrize("backend", BACKENDS)
def test_step_deterministic_bitwise(backend):
    state, steer_cmd, pedal_cmd, core, thresholds, scales = _random_case(
        np.random.default_rng(113))
    a, b = np.empty(7), np.empty(7)
    backend.bicycle_step(state, steer_cmd, pedal_cmd, core, thresholds, scales, 0.1, a)
    backend.bicycle_step(state, steer_cmd, pedal_cmd, core, thresholds, scales, 0.1, b)
    assert np.array_equal(a, b)


# ------------------------------------------------------------------ selection

def test_selected_backend_reported():
    assert _kernels.BACKEND in ("native", "reference")
    if _native is not None:
        assert _kernels.BACKEND == "native"  # auto prefers the extension


def test_load_backend_names():
    assert load_backend("reference") is reference
    with pytest.raises(ValueError):
        load_backend("bogus")
    if _native is not None:
        assert load_backend("native") is _native


def test_env_var_validation_subprocess():
    env = dict(os.environ, DRIVEFIT_KERNELS="bogus")
    proc = subprocess.run(
        [sys.executable, "-c", "import drivefit._kernels"],
        capture_output=True, text=True, env=env,
    )
    assert proc.returncode != 0
    assert "DRIVEFIT_KERNELS" in proc.stderr


def test_env_var_forces_reference_subprocess():
    env = dict(os.environ, DRIVEFIT_KERNELS="reference")
    proc = subprocess.run(
        [sys.executable, "-c",
         "import drivefit._kernels as k; print(k.BACKEND)"],
        capture_output=True, text=True, env=env,
    )
    assert proc.returncode == 0
    assert proc.stdout.strip() == "reference"
