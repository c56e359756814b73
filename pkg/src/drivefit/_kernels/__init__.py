"""Kernel backend selection.

The environment variable DRIVEFIT_KERNELS picks the implementation:
"auto" (default) prefers the compiled extension and falls back to the
numpy reference backend when the extension is absent; "native" and
"reference" force one side. `BACKEND` records what was selected.
"""

from __future__ import annotations

import os

from . import reference

ACT_IDENTITY = 0
ACT_TANH = 1

_choice = os.environ.get("DRIVEFIT_KERNELS", "auto").strip().lower()
if _choice not in ("auto", "native", "reference"):
    raise RuntimeError(
        f"DRIVEFIT_KERNELS must be 'auto', 'native' or 'reference', got {_choice!r}"
    )

_impl = None
if _choice in ("auto", "native"):
    try:
        from . import _native as _impl
    except ImportError:
        if _choice == "native":
            raise
if _impl is None:
    _impl = reference

BACKEND = "reference" if _impl is reference else "native"

wrap_angle = _impl.wrap_angle
bicycle_step = _impl.bicycle_step
observe_window = _impl.observe_window
affine_act = _impl.affine_act


def load_backend(name: str):
    """Return the named backend module (used by tests and benchmarks)."""
    if name == "reference":
        return reference
    if name == "native":
        from . import _native

        return _native
    raise ValueError(f"unknown kernel backend {name!r}")
