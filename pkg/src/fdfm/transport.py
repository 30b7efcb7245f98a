"""The heterogeneous interpolation path between noise and data.

All band arithmetic is per-band scalar multiplication in wavelet coordinates,
which is exactly the diagonal transport operator conjugated by the orthonormal
analysis transform; the dense-matrix form exists only in test oracles. Time
arguments may be a scalar (one sample or a shared time) or a vector matching a
leading batch dimension of the band tensors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import precision
from .errors import DimensionError, SingularityError
from .haar import FreqState, dwt2, idwt2
from .schedules import HeteroSchedule, _check_unit_interval

T_MAX_DEFAULT = 1.0 - 1e-3

NOISE_SCALE = 1.0  # source noise is standard Gaussian in pixel space


@dataclass(frozen=True)
class TransportSample:
    """One point on the interpolation path.

    `state` holds the noisy bands, `pixels` their pixel-space synthesis, and
    `target_velocity` the conditional path derivative in wavelet coordinates.
    """

    t: float | np.ndarray
    state: FreqState
    pixels: np.ndarray
    target_velocity: FreqState


def _per_sample(factor, band: np.ndarray):
    """Broadcast a scalar or per-sample (B,) factor onto a band tensor."""
    f = np.asarray(factor, dtype=np.float64)
    if f.ndim == 0:
        return f
    if band.ndim < 4 or f.shape[0] != band.shape[0]:
        raise DimensionError(
            f"per-sample factor of shape {f.shape} does not match band shape {band.shape}"
        )
    return f.reshape(f.shape + (1,) * (band.ndim - 1))


def interpolate_bands(
    data: FreqState, noise: FreqState, t, sch: HeteroSchedule
) -> TransportSample:
    """Mix clean and noise bands at time t and attach the conditional velocity."""
    _check_unit_interval(t)
    if np.shape(data.low) != np.shape(noise.low) or np.shape(data.high) != np.shape(noise.high):
        raise DimensionError("data and noise band shapes differ")
    g_lo, g_hi = sch.mix(t)
    r_lo, r_hi = sch.rate(t)
    lo_f, hi_f = _per_sample(g_lo, np.asarray(data.low)), _per_sample(g_hi, np.asarray(data.high))
    state = FreqState(
        low=lo_f * data.low + (1.0 - lo_f) * noise.low,
        high=hi_f * data.high + (1.0 - hi_f) * noise.high,
    )
    velocity = FreqState(
        low=_per_sample(r_lo, np.asarray(data.low)) * (data.low - noise.low),
        high=_per_sample(r_hi, np.asarray(data.high)) * (data.high - noise.high),
    )
    return TransportSample(t=t, state=state, pixels=idwt2(state), target_velocity=velocity)


def interpolate(x: np.ndarray, noise: np.ndarray, t, sch: HeteroSchedule) -> TransportSample:
    """Pixel-space entry point: transform both endpoints, then mix per band."""
    x = precision.coerce(x)
    noise = precision.coerce(noise)
    if x.shape != noise.shape:
        raise DimensionError(f"data shape {x.shape} != noise shape {noise.shape}")
    return interpolate_bands(dwt2(x), dwt2(noise), t, sch)


def xpred_to_velocity(
    xhat: FreqState, state: FreqState, t, sch: HeteroSchedule, t_max: float = T_MAX_DEFAULT
) -> FreqState:
    """Convert a clean-target prediction into the induced velocity.

    Per band: rate/(1-mix) * (prediction - state). Exact in wavelet
    coordinates because the transport operator is diagonal there. Times past
    `t_max` are refused: the factor 1/(1-mix) diverges at t=1.
    """
    t_arr = _check_unit_interval(t)
    if np.max(t_arr) > t_max:
        raise SingularityError(f"velocity conversion needs t <= {t_max}, got {np.max(t_arr)}")
    if np.shape(xhat.low) != np.shape(state.low) or np.shape(xhat.high) != np.shape(state.high):
        raise DimensionError("prediction and state band shapes differ")
    g_lo, g_hi = sch.mix(t)
    r_lo, r_hi = sch.rate(t)
    coef_lo = _per_sample(np.asarray(r_lo) / (1.0 - np.asarray(g_lo)), np.asarray(state.low))
    coef_hi = _per_sample(np.asarray(r_hi) / (1.0 - np.asarray(g_hi)), np.asarray(state.high))
    return FreqState(
        low=coef_lo * (np.asarray(xhat.low) - state.low),
        high=coef_hi * (np.asarray(xhat.high) - state.high),
    )


def apply_band_mixing(x: np.ndarray, t, sch: HeteroSchedule) -> np.ndarray:
    """Apply the pixel-space transport operator: scale each band by its mix value."""
    _check_unit_interval(t)
    s = dwt2(x)
    g_lo, g_hi = sch.mix(t)
    scaled = FreqState(
        low=_per_sample(g_lo, np.asarray(s.low)) * s.low,
        high=_per_sample(g_hi, np.asarray(s.high)) * s.high,
    )
    return idwt2(scaled)
