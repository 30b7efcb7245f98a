"""Desk-scale datasets: tiny image distributions with known structure.

Three kinds:

  single_point     one fixed smooth pattern (the degenerate distribution)
  point_mixture    K constant-valued images; a constant image has exactly one
                   nonzero wavelet coordinate (its low band), so this is the
                   one-effective-dimension mixture used by the end-to-end tests
  checker_texture  8x8 binary checkerboards, 2 phases x 2 scales, plus
                   low-amplitude uniform noise; genuinely distinct low- and
                   high-frequency content for the ablation sweeps

All values stay inside [-1, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .haar import dwt2
from .oracle import PointMixture

KINDS = ("single_point", "point_mixture", "checker_texture")


@dataclass(frozen=True)
class DatasetSpec:
    kind: str
    shape: tuple[int, int, int] = (1, 2, 2)
    mixture_values: tuple[float, ...] = ()
    mixture_weights: tuple[float, ...] = ()
    labeled: bool = False
    texture_noise: float = 0.05

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"dataset kind must be one of {KINDS}, got {self.kind!r}")
        c, h, w = self.shape
        if c < 1 or h < 2 or w < 2 or h % 2 or w % 2 or h > 8 or w > 8:
            raise ConfigError(f"shape must have C >= 1 and even 2 <= H, W <= 8, got {self.shape}")
        if self.kind == "point_mixture":
            if not self.mixture_values:
                raise ConfigError("point_mixture needs mixture_values")
            if any(abs(v) > 1.0 for v in self.mixture_values):
                raise ConfigError("mixture values must lie in [-1, 1]")
            if len(self.mixture_weights) != len(self.mixture_values):
                raise ConfigError("mixture_weights must pair with mixture_values")
            wsum = float(np.sum(self.mixture_weights))
            if any(w < 0 for w in self.mixture_weights) or abs(wsum - 1.0) > 1e-9:
                raise ConfigError(f"mixture weights must be nonnegative and sum to 1, got sum {wsum}")
        if self.kind == "checker_texture":
            if (h, w) != (8, 8):
                raise ConfigError(f"checker_texture requires an 8x8 grid, got {(h, w)}")
            if not (0.0 <= self.texture_noise <= 0.2):
                raise ConfigError(f"texture_noise must lie in [0, 0.2], got {self.texture_noise}")


@dataclass
class ToyDataset:
    """Materialized atoms plus the sampling rule."""

    spec: DatasetSpec
    atoms: np.ndarray  # (K, C, H, W)
    weights: np.ndarray  # (K,)
    labels: np.ndarray | None  # (K,) int labels, or None when unconditional
    noise_amplitude: float

    @property
    def num_classes(self) -> int:
        return 0 if self.labels is None else int(self.labels.max()) + 1

    def sample(self, rng: np.random.Generator, n: int):
        """(images (n,C,H,W), labels (n,) or None); additive noise for textures."""
        idx = rng.choice(self.atoms.shape[0], size=n, p=self.weights)
        x = self.atoms[idx].copy()
        if self.noise_amplitude > 0.0:
            x = np.clip(x + rng.uniform(-self.noise_amplitude, self.noise_amplitude, x.shape), -1.0, 1.0)
        cond = self.labels[idx] if self.labels is not None else None
        return x, cond

    def as_point_mixture(self) -> PointMixture:
        """The atoms as a band-coordinate point mixture (exact only without sampling noise)."""
        if self.noise_amplitude > 0.0:
            raise ConfigError("noisy texture datasets are not point mixtures")
        coords = dwt2(self.atoms).ravel()
        c, h, w = self.spec.shape
        return PointMixture(points=coords, weights=self.weights, low_dims=c * (h // 2) * (w // 2))


def _single_point_atom(shape: tuple[int, int, int]) -> np.ndarray:
    """A fixed smooth pattern, deterministic and bounded by 0.7."""
    c, h, w = shape
    rows = np.sin(2 * np.pi * (np.arange(h) + 0.37) / h)
    cols = np.cos(2 * np.pi * (np.arange(w) + 0.11) / w)
    base = rows[:, None] * cols[None, :]
    chans = [0.7 * np.cos(0.5 * k) * base + 0.15 * np.sin(0.9 * k + 1.0) for k in range(c)]
    return np.clip(np.stack(chans), -1.0, 1.0)


def _checker_atoms(shape: tuple[int, int, int]) -> np.ndarray:
    c, h, w = shape
    i, j = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    atoms = []
    for scale in (1, 2):
        for phase in (0, 1):
            pattern = 0.8 * (((i // scale + j // scale + phase) % 2) * 2.0 - 1.0)
            atoms.append(np.broadcast_to(pattern, (c, h, w)).copy())
    return np.stack(atoms)


def build_dataset(spec: DatasetSpec) -> ToyDataset:
    c, h, w = spec.shape
    if spec.kind == "single_point":
        atoms = _single_point_atom(spec.shape)[None]
        weights = np.array([1.0])
        labels = np.array([0]) if spec.labeled else None
        noise = 0.0
    elif spec.kind == "point_mixture":
        atoms = np.stack([np.full((c, h, w), v, dtype=np.float64) for v in spec.mixture_values])
        weights = np.asarray(spec.mixture_weights, dtype=np.float64)
        weights = weights / weights.sum()
        labels = np.arange(len(spec.mixture_values)) if spec.labeled else None
        noise = 0.0
    else:
        atoms = _checker_atoms(spec.shape)
        weights = np.full(4, 0.25)
        labels = np.arange(4) if spec.labeled else None
        noise = spec.texture_noise
    return ToyDataset(spec=spec, atoms=atoms, weights=weights, labels=labels, noise_amplitude=noise)
