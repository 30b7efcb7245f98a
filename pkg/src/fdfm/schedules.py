"""Transport schedules, band loss weights, the training-time sampler, and the
sampling-time warp.

A smoothed power schedule mixes data into noise as

    g(t) = ((t + eps)^gamma - eps^gamma) / ((1 + eps)^gamma - eps^gamma)

with g(0)=0 and g(1)=1 by construction; the offset regularizes the slope near
t=0 for gamma < 1. A pair of such schedules (low band ahead of high band when
gamma_low < gamma_high) drives the coarse-to-fine transport path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError


def _check_unit_interval(t, name: str = "t"):
    a = np.asarray(t, dtype=np.float64)
    if a.size and (np.min(a) < 0.0 or np.max(a) > 1.0):
        raise DomainError(f"{name} must lie in [0, 1], got {a if a.ndim == 0 else [np.min(a), np.max(a)]}")
    return a


@dataclass(frozen=True)
class PowerSchedule:
    """One band's mixing schedule: exponent `gamma` > 0, smoothing offset `eps_smooth` >= 0."""

    gamma: float
    eps_smooth: float = 0.01

    def __post_init__(self):
        if not (self.gamma > 0.0) or not math.isfinite(self.gamma):
            raise ConfigError(f"gamma must be positive and finite, got {self.gamma}")
        if self.eps_smooth < 0.0 or not math.isfinite(self.eps_smooth):
            raise ConfigError(f"eps_smooth must be >= 0, got {self.eps_smooth}")

    def value(self, t):
        """g(t); scalar in, scalar out, arrays broadcast. gamma=1 collapses to g(t)=t exactly."""
        t = np.asarray(t, dtype=np.float64)
        if self.gamma == 1.0:
            return t if t.ndim else float(t)
        e, g = self.eps_smooth, self.gamma
        denom = (1.0 + e) ** g - e**g
        out = ((t + e) ** g - e**g) / denom
        return out if out.ndim else float(out)

    def slope(self, t):
        """Analytic dg/dt. Infinite only at t=0 when eps_smooth=0 and gamma<1."""
        t = np.asarray(t, dtype=np.float64)
        if self.gamma == 1.0:
            out = np.ones_like(t)
            return out if out.ndim else 1.0
        e, g = self.eps_smooth, self.gamma
        denom = (1.0 + e) ** g - e**g
        with np.errstate(divide="ignore"):
            out = g * (t + e) ** (g - 1.0) / denom
        return out if out.ndim else float(out)


def eval_schedule(s: PowerSchedule, t) -> tuple:
    """(g(t), dg/dt) with the domain check t in [0, 1]."""
    t = _check_unit_interval(t)
    return s.value(t), s.slope(t)


@dataclass(frozen=True)
class HeteroSchedule:
    """Per-band schedules; represents the diagonal transport operator in the wavelet basis."""

    low: PowerSchedule
    high: PowerSchedule

    @classmethod
    def from_gammas(cls, gamma_low: float, gamma_high: float, eps_smooth: float = 0.01) -> "HeteroSchedule":
        return cls(
            low=PowerSchedule(gamma_low, eps_smooth), high=PowerSchedule(gamma_high, eps_smooth)
        )

    def mix(self, t) -> tuple:
        """(g_low(t), g_high(t))."""
        return self.low.value(t), self.high.value(t)

    def rate(self, t) -> tuple:
        """(dg_low/dt, dg_high/dt)."""
        return self.low.slope(t), self.high.slope(t)

    def max_slope(self, grid_points: int = 10_001) -> float:
        """Largest |dg/dt| of either band over a uniform grid.

        The slope of a power schedule is monotone in t, so the grid maximum
        (which includes both endpoints) is the exact supremum when it is finite.
        """
        grid = np.linspace(0.0, 1.0, grid_points)
        return float(max(np.max(np.abs(self.low.slope(grid))), np.max(np.abs(self.high.slope(grid)))))


@dataclass(frozen=True)
class FreqWeights:
    """Strength of the time-dependent band reweighting; |omega| < 1 keeps both weights positive."""

    omega: float

    def __post_init__(self):
        if not (abs(self.omega) < 1.0):
            raise ConfigError(f"|omega| must be < 1 to keep both band weights positive, got {self.omega}")


def band_weights(w: FreqWeights, t) -> tuple:
    """(weight_low, weight_high) at time t: 1 -/+ omega*cos(pi*(1-t)); they sum to 2."""
    t = _check_unit_interval(t)
    c = w.omega * np.cos(np.pi * (1.0 - t))
    lo, hi = 1.0 - c, 1.0 + c
    if t.ndim:
        return lo, hi
    return float(lo), float(hi)


@dataclass(frozen=True)
class TimeSampler:
    """Logit-normal training-time distribution: t = sigmoid(mu + sigma*z), z ~ N(0,1)."""

    mu: float = -0.8
    sigma: float = 0.8

    def __post_init__(self):
        if not (self.sigma > 0.0):
            raise ConfigError(f"sigma must be positive, got {self.sigma}")


def sample_time(ts: TimeSampler, rng: np.random.Generator, size=None):
    """Draw t strictly inside (0, 1); deterministic for a seeded generator."""
    z = rng.standard_normal(size=size)
    t = 1.0 / (1.0 + np.exp(-(ts.mu + ts.sigma * z)))
    t = np.clip(t, np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))
    return t if size is not None else float(t)


def timeshift(t, shift: float):
    """Rational warp t' = shift*t / (1 + (shift-1)*t): a monotone bijection of [0,1].

    shift=1 is the identity. The warp compresses steps toward t=1 for shift > 1.
    This particular formula is a documented choice; only its endpoint and
    monotonicity behavior is contractual.
    """
    if shift < 1.0:
        raise ConfigError(f"timeshift requires shift >= 1, got {shift}")
    t = _check_unit_interval(t)
    out = shift * t / (1.0 + (shift - 1.0) * t)
    return out if out.ndim else float(out)
