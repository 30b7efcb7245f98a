"""Band-weighted flow-matching loss, its analytic gradient, and the plain baseline.

Normalization convention: each band term is the mean over that band's own
element count, so the 1:3 low/high channel asymmetry does not skew the two
terms. The time weights scale the terms without touching the regression
targets, and both band weights positive makes the quadratic form definite:
the loss is zero iff prediction equals target.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .haar import FreqState
from .schedules import FreqWeights, band_weights


@dataclass(frozen=True)
class LossBreakdown:
    """Per-band weighted mean-square terms; total is their sum."""

    low_term: float
    high_term: float

    @property
    def total(self) -> float:
        return self.low_term + self.high_term


def _band_term(pred: np.ndarray, target: np.ndarray, weight) -> float:
    """Weighted per-sample band MSE, averaged over any leading batch axes."""
    diff = np.asarray(pred, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    per_sample = np.mean(np.square(diff), axis=(-1, -2, -3))
    return float(np.mean(np.asarray(weight) * per_sample))


def _check_pair(v_pred: FreqState, v_target: FreqState) -> None:
    if np.shape(v_pred.low) != np.shape(v_target.low) or np.shape(v_pred.high) != np.shape(
        v_target.high
    ):
        raise DimensionError("prediction and target band shapes differ")


def band_weighted_loss(
    v_pred: FreqState, v_target: FreqState, t, w: FreqWeights
) -> LossBreakdown:
    """Weighted velocity regression loss.

    `t` may be a scalar or a per-sample vector matching a leading batch axis;
    batched inputs are averaged over the batch.
    """
    _check_pair(v_pred, v_target)
    lam_lo, lam_hi = band_weights(w, t)
    return LossBreakdown(
        low_term=_band_term(v_pred.low, v_target.low, lam_lo),
        high_term=_band_term(v_pred.high, v_target.high, lam_hi),
    )


def band_weighted_loss_grad(
    v_pred: FreqState, v_target: FreqState, t, w: FreqWeights
) -> FreqState:
    """Gradient of `band_weighted_loss` total with respect to the prediction."""
    _check_pair(v_pred, v_target)
    lam_lo, lam_hi = band_weights(w, t)
    lo = np.asarray(v_pred.low, dtype=np.float64) - np.asarray(v_target.low, dtype=np.float64)
    hi = np.asarray(v_pred.high, dtype=np.float64) - np.asarray(v_target.high, dtype=np.float64)
    n_lo = int(np.prod(lo.shape[-3:]))
    n_hi = int(np.prod(hi.shape[-3:]))
    batch = int(np.prod(lo.shape[:-3])) if lo.ndim > 3 else 1

    def _expand(lam, arr):
        lam = np.asarray(lam, dtype=np.float64)
        return lam.reshape(lam.shape + (1,) * 3) if lam.ndim else lam

    return FreqState(
        low=2.0 * _expand(lam_lo, lo) * lo / (n_lo * batch),
        high=2.0 * _expand(lam_hi, hi) * hi / (n_hi * batch),
    )


def velocity_mse(v_pred: np.ndarray, v_target: np.ndarray) -> float:
    """Plain pixel-space velocity MSE: the homogeneous baseline objective."""
    p = np.asarray(v_pred, dtype=np.float64)
    q = np.asarray(v_target, dtype=np.float64)
    if p.shape != q.shape:
        raise DimensionError(f"shape mismatch: {p.shape} vs {q.shape}")
    return float(np.mean(np.square(p - q)))
