"""Single-level orthonormal 2D Haar transform: the frequency-decomposed state space.

Pixel tensors are plain float64 ndarrays with trailing shape (C, H, W), H and W
even; arbitrary leading batch dimensions are allowed and carried through. The
analysis of each 2x2 block [[a, b], [c, d]] uses taps of magnitude 1/2:

    low = (a + b + c + d) / 2          LH = (a + b - c - d) / 2   (vertical difference)
    HL  = (a - b + c - d) / 2          HH = (a - b - c + d) / 2   (diagonal difference)

which is an orthonormal change of basis, so the split is exact and preserves
energy. The high band stacks the three detail sub-bands along channels in the
fixed order LH, HL, HH (all C channels of LH first, then HL, then HH); the
serialized FPXT1 tensors use the same ordering, so files are portable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import precision
from .errors import DimensionError


@dataclass(frozen=True)
class FreqState:
    """Paired wavelet bands of a pixel tensor.

    low has trailing shape (C, H/2, W/2), high has (3C, H/2, W/2); leading
    batch dimensions must agree between the two.
    """

    low: np.ndarray
    high: np.ndarray

    def __post_init__(self):
        lo, hi = np.asarray(self.low), np.asarray(self.high)
        if lo.ndim < 3 or hi.ndim < 3 or lo.ndim != hi.ndim:
            raise DimensionError(f"band ranks mismatch: low {lo.shape}, high {hi.shape}")
        if hi.shape[:-3] != lo.shape[:-3] or hi.shape[-2:] != lo.shape[-2:]:
            raise DimensionError(f"band shapes inconsistent: low {lo.shape}, high {hi.shape}")
        if hi.shape[-3] != 3 * lo.shape[-3]:
            raise DimensionError(
                f"high band must carry 3x the low channels, got {hi.shape[-3]} vs {lo.shape[-3]}"
            )

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return np.asarray(self.low).shape[:-3]

    def energy(self) -> float:
        return float(np.sum(np.square(self.low)) + np.sum(np.square(self.high)))

    def ravel(self) -> np.ndarray:
        """Band coordinates: low entries first, then high, flattened per sample."""
        b = self.batch_shape
        n_low = int(np.prod(np.asarray(self.low).shape[-3:]))
        n_high = int(np.prod(np.asarray(self.high).shape[-3:]))
        return np.concatenate(
            [np.reshape(self.low, b + (n_low,)), np.reshape(self.high, b + (n_high,))], axis=-1
        )

    @staticmethod
    def unravel(coords: np.ndarray, low_shape: tuple[int, int, int]) -> "FreqState":
        """Inverse of ravel for a known trailing low-band shape (C, H/2, W/2)."""
        coords = np.asarray(coords)
        c, h2, w2 = low_shape
        n_low = c * h2 * w2
        if coords.shape[-1] != 4 * n_low:
            raise DimensionError(f"expected {4 * n_low} coordinates, got {coords.shape[-1]}")
        b = coords.shape[:-1]
        low = coords[..., :n_low].reshape(b + (c, h2, w2))
        high = coords[..., n_low:].reshape(b + (3 * c, h2, w2))
        return FreqState(low=low, high=high)


def check_pixels(x: np.ndarray) -> np.ndarray:
    """Validate a pixel tensor: trailing (C, H, W) with H, W even and >= 2, all finite."""
    a = precision.coerce(x)
    if a.ndim < 3:
        raise DimensionError(f"pixel tensor needs trailing (C, H, W), got shape {a.shape}")
    _, h, w = a.shape[-3:]
    if h < 2 or w < 2 or h % 2 or w % 2:
        raise DimensionError(f"H and W must be even and >= 2, got H={h}, W={w}")
    if not np.all(np.isfinite(a)):
        raise DimensionError("pixel tensor contains non-finite entries")
    return a


def dwt2(x: np.ndarray) -> FreqState:
    """Orthonormal single-level Haar analysis of a pixel tensor."""
    a = check_pixels(x)
    tl = a[..., 0::2, 0::2]
    tr = a[..., 0::2, 1::2]
    bl = a[..., 1::2, 0::2]
    br = a[..., 1::2, 1::2]
    low = (tl + tr + bl + br) / 2.0
    lh = (tl + tr - bl - br) / 2.0
    hl = (tl - tr + bl - br) / 2.0
    hh = (tl - tr - bl + br) / 2.0
    return FreqState(low=low, high=np.concatenate([lh, hl, hh], axis=-3))


def idwt2(s: FreqState) -> np.ndarray:
    """Exact inverse of dwt2."""
    low = precision.coerce(s.low)
    high = precision.coerce(s.high)
    c = low.shape[-3]
    lh, hl, hh = high[..., 0:c, :, :], high[..., c : 2 * c, :, :], high[..., 2 * c :, :, :]
    tl = (low + lh + hl + hh) / 2.0
    tr = (low + lh - hl - hh) / 2.0
    bl = (low - lh + hl - hh) / 2.0
    br = (low - lh - hl + hh) / 2.0
    h2, w2 = low.shape[-2:]
    out = np.empty(low.shape[:-3] + (c, 2 * h2, 2 * w2), dtype=low.dtype)
    out[..., 0::2, 0::2] = tl
    out[..., 0::2, 1::2] = tr
    out[..., 1::2, 0::2] = bl
    out[..., 1::2, 1::2] = br
    return out


def analysis_matrix(c: int, h: int, w: int) -> np.ndarray:
    """Dense d x d matrix of dwt2 in band-coordinate order (rows: low then high).

    Built column-by-column from unit impulses; test oracles use it to
    materialize the transport operator explicitly. d = c*h*w stays small.
    """
    d = c * h * w
    m = np.empty((d, d), dtype=np.float64)
    for j in range(d):
        e = np.zeros(d)
        e[j] = 1.0
        m[:, j] = dwt2(e.reshape(c, h, w)).ravel()
    return m
