"""drivefit: vehicle-specific waypoint followers plus feasibility-aware
re-weighting of generic trajectory proposals.

The pieces, bottom up: `dynamics` (kinematic bicycle fleet), `env`
(time-indexed waypoint following), `nn` (numpy policy/value nets), `ppo`
(training), `prior` (scenarios, burn-ins, the generic proposal
distribution), `refine` (value-based importance resampling), `evaluate`
(paired prior/posterior experiments). Hot kernels live in `_kernels`
with a compiled backend selected at import when available.
"""

from ._kernels import BACKEND as kernel_backend

__version__ = "0.1.0"

__all__ = ["kernel_backend", "__version__"]
