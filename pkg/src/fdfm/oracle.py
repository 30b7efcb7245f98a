"""Closed-form ground truth for transport over finite point mixtures.

Everything here lives in band coordinates: a d-vector whose first `low_dims`
entries follow the low-band schedule and whose remainder follows the high-band
schedule. Because the analysis transform is orthonormal, standard Gaussian
noise in pixel space is standard Gaussian in these coordinates, so the noisy
state given a data atom is Gaussian with per-coordinate scale (1 - mix).
Posterior weights over atoms are computed in the log domain throughout;
direct-space weights underflow catastrophically once (1 - mix) is small.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DimensionError, SingularityError, UndefinedEstimateError
from .schedules import HeteroSchedule

MAX_ORACLE_DIM = 64


@dataclass(frozen=True)
class PointMixture:
    """Finite data distribution: atoms `points` (N, d) with probabilities `weights` (N,).

    `low_dims` assigns the first coordinates to the low band; image-derived
    mixtures use the band-coordinate packing of the wavelet module (low block
    first). Weights must already be normalized (checked to 1e-12).
    """

    points: np.ndarray
    weights: np.ndarray
    low_dims: int

    def __post_init__(self):
        p = np.asarray(self.points, dtype=np.float64)
        w = np.asarray(self.weights, dtype=np.float64)
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "weights", w)
        if p.ndim != 2 or p.shape[0] < 1:
            raise DimensionError(f"points must be (N, d) with N >= 1, got {p.shape}")
        if p.shape[1] > MAX_ORACLE_DIM:
            raise ConfigError(f"oracle dimension capped at {MAX_ORACLE_DIM}, got {p.shape[1]}")
        if w.shape != (p.shape[0],) or np.any(w < 0.0):
            raise ConfigError("weights must be nonnegative with one entry per atom")
        if abs(float(np.sum(w)) - 1.0) > 1e-12:
            raise ConfigError(f"weights must sum to 1 within 1e-12, got {np.sum(w)}")
        if not 0 <= self.low_dims <= p.shape[1]:
            raise ConfigError(f"low_dims must lie in [0, {p.shape[1]}], got {self.low_dims}")

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def band_scale_vectors(mix: PointMixture, sch: HeteroSchedule, t: float):
    """Per-coordinate (mix, rate) vectors of length d at time t."""
    g_lo, g_hi = sch.mix(float(t))
    r_lo, r_hi = sch.rate(float(t))
    d, k = mix.dim, mix.low_dims
    g = np.concatenate([np.full(k, g_lo), np.full(d - k, g_hi)])
    r = np.concatenate([np.full(k, r_lo), np.full(d - k, r_hi)])
    return g, r


def _check_pre(mix: PointMixture, x_t: np.ndarray, t: float) -> np.ndarray:
    if t >= 1.0:
        raise SingularityError(f"posterior covariance is singular at t >= 1, got t={t}")
    x = np.asarray(x_t, dtype=np.float64)
    if x.shape[-1] != mix.dim:
        raise DimensionError(f"query dimension {x.shape[-1]} != mixture dimension {mix.dim}")
    return x


def posterior_log_weights(mix: PointMixture, x_t, t: float, sch: HeteroSchedule) -> np.ndarray:
    """Unnormalized log posterior over atoms, shape (..., N)."""
    x = _check_pre(mix, x_t, t)
    g, _ = band_scale_vectors(mix, sch, t)
    sigma = 1.0 - g
    resid = (x[..., None, :] - g * mix.points) / sigma
    with np.errstate(divide="ignore"):
        return np.log(mix.weights) - 0.5 * np.sum(resid * resid, axis=-1)


def posterior_mean(mix: PointMixture, x_t, t: float, sch: HeteroSchedule) -> np.ndarray:
    """E[data | noisy state]: the Bayes average of atoms. Accepts (d,) or (..., d) queries."""
    lw = posterior_log_weights(mix, x_t, t, sch)
    lw = lw - np.max(lw, axis=-1, keepdims=True)
    w = np.exp(lw)
    w /= np.sum(w, axis=-1, keepdims=True)
    return w @ mix.points


def marginal_velocity(mix: PointMixture, x_t, t: float, sch: HeteroSchedule) -> np.ndarray:
    """The population-optimal velocity field at (x_t, t).

    Computed as rate * (E[data|x_t] - E[noise|x_t]) with the posterior noise
    mean recovered coordinate-wise from the state identity.
    """
    x = _check_pre(mix, x_t, t)
    g, r = band_scale_vectors(mix, sch, t)
    xbar = posterior_mean(mix, x, t, sch)
    eps_bar = (x - g * xbar) / (1.0 - g)
    return r * (xbar - eps_bar)


def mc_velocity(
    mix: PointMixture,
    x_t,
    t: float,
    sch: HeteroSchedule,
    draws: int,
    bandwidth: float,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Kernel-smoothed Monte-Carlo estimate of the marginal velocity at one query.

    Simulates (data, noise) pairs, weights their conditional velocities by a
    Gaussian kernel around the query state, and returns the self-normalized
    estimate with a linearized standard error. This is the brute-force
    cross-check for `marginal_velocity`; it shares no code with it beyond the
    schedule evaluations.
    """
    if draws < 10_000:
        raise ConfigError(f"mc_velocity needs draws >= 10000, got {draws}")
    if not (bandwidth > 0.0):
        raise ConfigError(f"bandwidth must be positive, got {bandwidth}")
    x = _check_pre(mix, x_t, t)
    if x.ndim != 1:
        raise DimensionError("mc_velocity takes a single query vector")
    g, r = band_scale_vectors(mix, sch, t)
    idx = rng.choice(mix.points.shape[0], size=draws, p=mix.weights)
    data = mix.points[idx]
    noise = rng.standard_normal((draws, mix.dim))
    states = g * data + (1.0 - g) * noise
    vels = r * (data - noise)
    log_k = -0.5 * np.sum(np.square((states - x) / bandwidth), axis=1)
    log_k -= np.max(log_k)
    k = np.exp(log_k)
    total = float(np.sum(k))
    ess = total * total / float(np.sum(k * k))
    if not np.isfinite(ess) or ess < 2.0:
        raise UndefinedEstimateError(
            f"effective sample size {ess:.2f} too small near the query; widen the bandwidth"
        )
    estimate = (k @ vels) / total
    resid = vels - estimate
    stderr = np.sqrt(np.sum((k[:, None] * resid) ** 2, axis=0)) / total
    return estimate, stderr


def export_grid_csv(
    path: str | Path,
    mix: PointMixture,
    sch: HeteroSchedule,
    times,
    queries,
    draws: int = 0,
    bandwidth: float = 0.05,
    rng: np.random.Generator | None = None,
) -> int:
    """Write closed-form (and optionally Monte-Carlo) velocities over a grid.

    Columns: t, x0..x{d-1}, v0..v{d-1}, source in {closed, mc}, s0..s{d-1}
    (standard errors; zero for closed rows). Returns the number of rows.
    """
    d = mix.dim
    header = (
        ["t"]
        + [f"x{j}" for j in range(d)]
        + [f"v{j}" for j in range(d)]
        + ["source"]
        + [f"s{j}" for j in range(d)]
    )
    rows = []
    for t in times:
        for q in np.atleast_2d(np.asarray(queries, dtype=np.float64)):
            v = marginal_velocity(mix, q, float(t), sch)
            rows.append([float(t), *q.tolist(), *v.tolist(), "closed", *([0.0] * d)])
            if draws:
                est, se = mc_velocity(mix, q, float(t), sch, draws, bandwidth, rng)
                rows.append([float(t), *q.tolist(), *est.tolist(), "mc", *se.tolist()])
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return len(rows)
