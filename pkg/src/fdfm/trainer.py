"""The training loop, sweep runner, and the desk-scale sample-quality metric.

One training step follows the fixed sequence: wavelet-transform the batch and
its noise, mix per band at the drawn times, predict clean bands, convert the
prediction to a velocity, score it with the band-weighted loss, backpropagate,
and apply the optimizer. The loop is single-writer and bitwise deterministic
for a fixed seed; batch reductions happen inside single matmuls.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import haar, objective, predictor, transport
from .datasets import DatasetSpec, ToyDataset, build_dataset
from .errors import ConfigError, NumericsError
from .objective import LossBreakdown
from .sampler import CleanPredictor, SampleConfig, sample
from .schedules import FreqWeights, HeteroSchedule, TimeSampler, sample_time
from .transport import NOISE_SCALE, T_MAX_DEFAULT


@dataclass(frozen=True)
class TrainConfig:
    dataset: DatasetSpec
    gamma_low: float = 0.95
    gamma_high: float = 1.05
    eps_smooth: float = 0.01
    omega: float = 0.7
    time_mu: float = -0.8
    time_sigma: float = 0.8
    lr: float = 1e-4
    batch_size: int = 64
    steps: int = 1000
    cond_dropout: float = 0.1
    hidden: tuple[int, ...] = (64, 64)
    optimizer: str = "adam"  # "adam" or "sgd"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 0.0
    ema: bool = False
    ema_decay: float = 0.9999
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0 or self.batch_size < 1 or self.steps < 0:
            raise ConfigError("lr must be positive, batch_size >= 1, steps >= 0")
        if not abs(self.omega) < 1.0:
            raise ConfigError(f"|omega| must be < 1, got {self.omega}")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"optimizer must be adam or sgd, got {self.optimizer!r}")
        if not (0.0 <= self.cond_dropout <= 1.0):
            raise ConfigError(f"cond_dropout must lie in [0, 1], got {self.cond_dropout}")

    def schedule(self) -> HeteroSchedule:
        return HeteroSchedule.from_gammas(self.gamma_low, self.gamma_high, self.eps_smooth)

    def freq_weights(self) -> FreqWeights:
        return FreqWeights(self.omega)

    def time_sampler(self) -> TimeSampler:
        return TimeSampler(self.time_mu, self.time_sigma)

    def config_hash(self) -> str:
        return hashlib.sha256(
            json.dumps(asdict(self), sort_keys=True, default=str).encode()
        ).hexdigest()[:16]


@dataclass
class RunMetrics:
    low_terms: np.ndarray
    high_terms: np.ndarray
    totals: np.ndarray
    wall_time: float
    config_hash: str
    final_energy_distance: float = float("nan")


@dataclass
class OptState:
    count: int
    m: list[np.ndarray]
    v: list[np.ndarray]


def _param_arrays(model: predictor.FactorizedModel) -> list[np.ndarray]:
    nets = (model.structure, model.detail)
    return [a for net in nets for a in (*net.weights, *net.biases)]


def _rebuild(model: predictor.FactorizedModel, arrays: list[np.ndarray]) -> predictor.FactorizedModel:
    it = iter(arrays)

    def _net(template: predictor.MlpParams) -> predictor.MlpParams:
        n = len(template.weights)
        ws = [next(it) for _ in range(n)]
        bs = [next(it) for _ in range(n)]
        return predictor.MlpParams(weights=ws, biases=bs, activation=template.activation)

    return replace(model, structure=_net(model.structure), detail=_net(model.detail))


def _optimizer_update(params, grads, state: OptState | None, config: TrainConfig):
    if state is None:
        state = OptState(count=0, m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params])
    state.count += 1
    out = []
    if config.optimizer == "sgd":
        for p, g in zip(params, grads):
            if config.weight_decay:
                g = g + config.weight_decay * p
            out.append(p - config.lr * g)
        return out, state
    b1, b2 = config.beta1, config.beta2
    c1 = 1.0 - b1**state.count
    c2 = 1.0 - b2**state.count
    for i, (p, g) in enumerate(zip(params, grads)):
        if config.weight_decay:
            p = p * (1.0 - config.lr * config.weight_decay)
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g
        out.append(p - config.lr * (state.m[i] / c1) / (np.sqrt(state.v[i] / c2) + config.adam_eps))
    return out, state


def loss_and_param_grads(
    model: predictor.FactorizedModel,
    state,
    t_batch,
    v_target,
    sch,
    weights,
    cond=None,
):
    """Band-weighted velocity loss and its parameter gradients (stop-gradient applied).

    Returns (LossBreakdown, structure grads, detail grads).
    """
    out, tapes = predictor.predict_with_tapes(model, state, t_batch, cond)
    v_pred = transport.xpred_to_velocity(out.bands, state, t_batch, sch)
    breakdown = objective.band_weighted_loss(v_pred, v_target, t_batch, weights)
    g_v = objective.band_weighted_loss_grad(v_pred, v_target, t_batch, weights)
    # chain rule through the conversion: velocity = coef * (estimate - state)
    g_lo, g_hi = sch.mix(t_batch)
    r_lo, r_hi = sch.rate(t_batch)
    coef_lo = transport._per_sample(np.asarray(r_lo) / (1.0 - np.asarray(g_lo)), np.asarray(g_v.low))
    coef_hi = transport._per_sample(np.asarray(r_hi) / (1.0 - np.asarray(g_hi)), np.asarray(g_v.high))
    s_grads, d_grads = predictor.backprop(model, tapes, coef_lo * g_v.low, coef_hi * g_v.high)
    return breakdown, s_grads, d_grads, v_pred


def train_step(
    model: predictor.FactorizedModel,
    batch,
    t_batch: np.ndarray,
    noise_batch: np.ndarray,
    config: TrainConfig,
    opt_state: OptState | None = None,
):
    """One optimizer step on a pre-drawn (batch, times, noise) triple.

    `batch` is (images, cond) where cond is an int array with -1 for the null
    condition, or None for unconditional data. Returns (model, LossBreakdown,
    opt_state); the input model is not mutated.
    """
    x, cond = batch
    sch = config.schedule()
    weights = config.freq_weights()
    data_bands = haar.dwt2(x)
    noise_bands = haar.dwt2(noise_batch)
    path = transport.interpolate_bands(data_bands, noise_bands, t_batch, sch)
    breakdown, s_grads, d_grads, v_pred = loss_and_param_grads(
        model, path.state, t_batch, path.target_velocity, sch, weights, cond
    )
    if not np.isfinite(breakdown.total):
        per = np.mean((np.asarray(v_pred.low) - path.target_velocity.low) ** 2, axis=(-1, -2, -3))
        per = per + np.mean(
            (np.asarray(v_pred.high) - path.target_velocity.high) ** 2, axis=(-1, -2, -3)
        )
        bad = np.nonzero(~np.isfinite(np.atleast_1d(per)))[0].tolist()
        raise NumericsError(f"non-finite loss; offending batch indices {bad}")
    grads = [a for net in (s_grads, d_grads) for a in (*net.weights, *net.biases)]
    new_arrays, opt_state = _optimizer_update(_param_arrays(model), grads, opt_state, config)
    return _rebuild(model, new_arrays), breakdown, opt_state


def fit(config: TrainConfig, out_dir: str | Path | None = None):
    """Run the full training loop; returns (model, RunMetrics).

    Deterministic per seed. With EMA enabled the returned model carries the
    exponential moving average of the parameters. If `out_dir` is given, a
    checkpoint directory and a per-step metrics CSV are written there.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(config.seed)
    dataset = build_dataset(config.dataset)
    model = predictor.FactorizedModel.create(
        config.dataset.shape, rng, hidden=config.hidden, num_classes=dataset.num_classes
    )
    sampler_cfg = config.time_sampler()
    opt_state = None
    ema = [a.copy() for a in _param_arrays(model)] if config.ema else None
    lows = np.empty(config.steps)
    highs = np.empty(config.steps)
    for k in range(config.steps):
        x, cond = dataset.sample(rng, config.batch_size)
        if cond is not None and config.cond_dropout > 0.0:
            cond = np.where(rng.random(config.batch_size) < config.cond_dropout, -1, cond)
        t = np.minimum(sample_time(sampler_cfg, rng, config.batch_size), T_MAX_DEFAULT)
        noise = rng.standard_normal(x.shape) * NOISE_SCALE
        model, breakdown, opt_state = train_step(model, (x, cond), t, noise, config, opt_state)
        if ema is not None:
            d = config.ema_decay
            for i, p in enumerate(_param_arrays(model)):
                ema[i] = d * ema[i] + (1.0 - d) * p
        lows[k], highs[k] = breakdown.low_term, breakdown.high_term
    if ema is not None:
        model = _rebuild(model, ema)
    metrics = RunMetrics(
        low_terms=lows,
        high_terms=highs,
        totals=lows + highs,
        wall_time=time.perf_counter() - t0,
        config_hash=config.config_hash(),
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        predictor.save_checkpoint(
            out / "checkpoint",
            model,
            config.config_hash(),
            extra={
                "gamma_low": config.gamma_low,
                "gamma_high": config.gamma_high,
                "eps_smooth": config.eps_smooth,
            },
        )
        write_metrics_csv(out / "metrics.csv", config, metrics)
    return model, metrics


def write_metrics_csv(path: str | Path, config: TrainConfig, metrics: RunMetrics) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["step", "low_term", "high_term", "total", "lr", "omega", "gamma_low", "gamma_high", "seed"]
        )
        for k in range(len(metrics.totals)):
            writer.writerow(
                [
                    k,
                    repr(metrics.low_terms[k]),
                    repr(metrics.high_terms[k]),
                    repr(metrics.totals[k]),
                    repr(config.lr),
                    repr(config.omega),
                    repr(config.gamma_low),
                    repr(config.gamma_high),
                    config.seed,
                ]
            )


def energy_distance(a: np.ndarray, b: np.ndarray) -> float:
    """All-pairs energy distance 2 E|A-B| - E|A-A'| - E|B-B'| (V-statistics).

    Zero for identical empirical distributions, nonnegative up to estimation
    noise; the desk-scale stand-in for learned-metric sample quality scores.
    """
    x = np.asarray(a, dtype=np.float64).reshape(len(a), -1)
    y = np.asarray(b, dtype=np.float64).reshape(len(b), -1)
    if x.shape[0] == 0 or y.shape[0] == 0:
        raise ConfigError("energy distance needs non-empty batches")
    if x.shape[1] != y.shape[1]:
        raise ConfigError(f"dimension mismatch: {x.shape[1]} vs {y.shape[1]}")
    return 2.0 * _mean_pair_distance(x, y) - _mean_pair_distance(x, x) - _mean_pair_distance(y, y)


def _mean_pair_distance(x: np.ndarray, y: np.ndarray, block: int = 512) -> float:
    total = 0.0
    for i in range(0, x.shape[0], block):
        chunk = x[i : i + block]
        sq = np.sum((chunk[:, None, :] - y[None, :, :]) ** 2, axis=-1)
        total += float(np.sum(np.sqrt(sq)))
    return total / (x.shape[0] * y.shape[0])


def worker_count() -> int:
    """Parallelism cap: FDFM_THREADS if set, else all cores."""
    env = os.environ.get("FDFM_THREADS", "").strip()
    cores = os.cpu_count() or 1
    if not env:
        return cores
    try:
        n = int(env)
    except ValueError:
        raise ConfigError(f"FDFM_THREADS must be an integer, got {env!r}") from None
    return max(1, min(n, cores))


SWEEP_COLUMNS = [
    "gamma_low",
    "gamma_high",
    "omega",
    "seed",
    "energy_distance",
    "final_loss",
    "wall_time_s",
    "status",
    "error",
]


def run_sweep(
    base: TrainConfig,
    gamma_pairs,
    omegas,
    seeds,
    eval_samples: int = 512,
    eval_steps: int = 32,
    out_csv: str | Path | None = None,
    max_workers: int | None = None,
) -> list[dict]:
    """Cross product of schedule pairs, weights, and seeds: fit, sample, score.

    Per-cell failures are recorded in the report and do not stop the sweep.
    Rows come back in deterministic (grid-order) sequence regardless of how
    the cells were scheduled across workers.
    """
    cells = [
        (gl, gh, om, sd)
        for gl, gh in gamma_pairs
        for om in omegas
        for sd in seeds
    ]

    def _one(cell):
        gl, gh, om, sd = cell
        row = {"gamma_low": gl, "gamma_high": gh, "omega": om, "seed": sd}
        t0 = time.perf_counter()
        try:
            cfg = replace(base, gamma_low=gl, gamma_high=gh, omega=om, seed=sd)
            model, metrics = fit(cfg)
            dataset = build_dataset(cfg.dataset)
            pred = CleanPredictor.from_model(model, cfg.schedule())
            drawn = sample(pred, eval_samples, SampleConfig(steps=eval_steps, seed=sd + 1))
            reference, _ = dataset.sample(np.random.default_rng([sd, 0xE0]), eval_samples)
            row.update(
                energy_distance=energy_distance(drawn, reference),
                final_loss=float(np.mean(metrics.totals[-50:])) if len(metrics.totals) else float("nan"),
                wall_time_s=time.perf_counter() - t0,
                status="ok",
                error="",
            )
        except Exception as exc:  # cell isolation: record and continue
            row.update(
                energy_distance=float("nan"),
                final_loss=float("nan"),
                wall_time_s=time.perf_counter() - t0,
                status="error",
                error=f"{type(exc).__name__}: {exc}",
            )
        return row

    workers = max_workers if max_workers is not None else worker_count()
    if workers > 1 and len(cells) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_one, cells))
    else:
        rows = [_one(c) for c in cells]
    if out_csv is not None:
        with Path(out_csv).open("w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
            writer.writeheader()
            writer.writerows(rows)
    return rows
