"""Floating-point policy.

All core arithmetic runs in float64; the invariance and round-trip tests
depend on the tight tolerances that precision affords. Float32 inputs are
upcast on entry unless `allow_float32(True)` has been called, in which case
they are carried through unchanged (useful only for storage experiments --
the shipped tolerances assume float64).
"""

from __future__ import annotations

import numpy as np

_FLOAT32_ENABLED = False


def allow_float32(enabled: bool = True) -> None:
    """Globally permit float32 arrays to pass through uncoerced. Default off."""
    global _FLOAT32_ENABLED
    _FLOAT32_ENABLED = bool(enabled)


def float32_allowed() -> bool:
    return _FLOAT32_ENABLED


def coerce(x) -> np.ndarray:
    """Return `x` as an ndarray under the active precision policy."""
    a = np.asarray(x)
    if a.dtype == np.float32 and _FLOAT32_ENABLED:
        return a
    if a.dtype != np.float64:
        return a.astype(np.float64)
    return a
