"""Time the compiled kernels against the numpy reference backend.

Per-kernel microbenchmarks run both backends in-process via
load_backend; the closed-loop rollout (env stepping + policy forward)
runs in subprocesses so each side sees its own DRIVEFIT_KERNELS choice
end to end.

Usage: python3 benchmarks/bench_kernels.py [--repeats 5] [--skip-rollout]
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from drivefit._kernels import load_backend

STATE = np.array([1.0, -2.0, 0.4, 6.0, 0.0, 0.05, 2.0])
CORE = np.array([2.7, 0.62, 4.5, 8.0, 40.0, 1.2])
THRESHOLDS = np.array([8.0, 16.0])
SCALES = np.array([1.0, 0.8, 0.6])


def _bench(fn, iters, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(iters)
        best = min(best, (time.perf_counter() - t0) / iters)
    return best


def _kernel_cases(backend, rng):
    out7 = np.empty(7)
    wps = np.column_stack([
        np.linspace(0.0, 60.0, 120), np.zeros(120),
        np.full(120, 5.0), np.zeros(120),
    ]).astype(np.float64)
    obs = np.empty(3 + 3 * 30)
    w = rng.normal(size=(128, 128))
    b = rng.normal(size=128)
    x = rng.normal(size=128)
    act_out = np.empty(128)

    def run_wrap(n):
        f = backend.wrap_angle
        for i in range(n):
            f(7.3 + 0.001 * i)

    def run_step(n):
        f = backend.bicycle_step
        for _ in range(n):
            f(STATE, 0.3, 0.5, CORE, THRESHOLDS, SCALES, 0.1, out7)

    def run_observe(n):
        f = backend.observe_window
        for i in range(n):
            f(STATE, wps, i % 80, 30, obs)

    def run_affine(n):
        f = backend.affine_act
        for _ in range(n):
            f(w, b, x, 1, act_out)

    return [
        ("wrap_angle", run_wrap, 200_000),
        ("bicycle_step", run_step, 100_000),
        ("observe_window w=30", run_observe, 50_000),
        ("affine_act 128x128", run_affine, 20_000),
    ]


_ROLLOUT_SNIPPET = """
import time
import numpy as np
from drivefit import _kernels
from drivefit.dynamics import get_vehicle
from drivefit.env import default_distance_tolerance, initial_state_for
from drivefit.evaluate import execute_follower
from drivefit.nn import policy_new
from drivefit.prior import ScenarioSpec, generate_scenario

vehicle = get_vehicle("sporty")
traj = generate_scenario(ScenarioSpec("straight", 5.0, 0.0, duration=120), vehicle)
policy = policy_new(30, np.random.default_rng(0), hidden=128)
s0 = initial_state_for(traj, vehicle)
eps = default_distance_tolerance(vehicle)
execute_follower(policy, vehicle, traj, s0, eps)  # warm up
steps = 0
t0 = time.perf_counter()
while time.perf_counter() - t0 < 2.0:
    trace = execute_follower(policy, vehicle, traj, s0, eps)
    steps += len(trace.actions)
print(f"{_kernels.BACKEND} {steps / (time.perf_counter() - t0):.0f}")
"""


def _rollout_rate(backend_name):
    env = dict(os.environ, DRIVEFIT_KERNELS=backend_name)
    out = subprocess.run([sys.executable, "-c", _ROLLOUT_SNIPPET], env=env,
                         capture_output=True, text=True, check=True).stdout
    reported, rate = out.split()
    if reported != backend_name:
        raise RuntimeError(f"subprocess selected {reported!r}, "
                           f"wanted {backend_name!r}")
    return float(rate)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--skip-rollout", action="store_true",
                        help="only run the per-kernel microbenchmarks")
    args = parser.parse_args(argv)

    try:
        native = load_backend("native")
    except ImportError:
        print("compiled backend not built; run pip install -e . first",
              file=sys.stderr)
        return 1
    reference = load_backend("reference")
    rng = np.random.default_rng(0)

    print(f"{'kernel':<22} {'native':>12} {'reference':>12} {'speedup':>8}")
    ref_cases = dict((name, (fn, iters))
                     for name, fn, iters in _kernel_cases(reference, rng))
    for name, fn, iters in _kernel_cases(native, np.random.default_rng(0)):
        t_native = _bench(fn, iters, args.repeats)
        ref_fn, ref_iters = ref_cases[name]
        t_ref = _bench(ref_fn, max(ref_iters // 10, 1), args.repeats)
        print(f"{name:<22} {t_native * 1e9:>10.0f}ns {t_ref * 1e9:>10.0f}ns "
              f"{t_ref / t_native:>7.1f}x")

    if not args.skip_rollout:
        native_rate = _rollout_rate("native")
        ref_rate = _rollout_rate("reference")
        print(f"{'closed-loop steps/s':<22} {native_rate:>12.0f} "
              f"{ref_rate:>12.0f} {native_rate / ref_rate:>7.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
