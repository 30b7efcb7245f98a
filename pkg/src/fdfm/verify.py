"""Named end-to-end checks behind `fdfm verify`, plus the shared measurement
helpers the acceptance suite reuses at full size.

Checks call the wavelet routines through their module so a fault injected by
rebinding `fdfm.haar.dwt2` (as the test harness does) is actually exercised.
"""

from __future__ import annotations

import numpy as np

from . import haar
from .oracle import PointMixture, marginal_velocity
from .predictor import tabular_fit, tabular_predict
from .sampler import CleanPredictor, SampleConfig, initial_noise, step, time_grid
from .schedules import FreqWeights, HeteroSchedule, TimeSampler, band_weights, sample_time
from .transport import interpolate_bands


# ---------------------------------------------------------------------------
# Measurement helpers (deterministic given their seeds)
# ---------------------------------------------------------------------------


def roundtrip_and_parseval(n_inputs: int, shape=(3, 8, 8), seed: int = 0) -> tuple[float, float]:
    """(max round-trip abs error, max Parseval relative error) over random inputs."""
    rng = np.random.default_rng(seed)
    worst_rt, worst_pv = 0.0, 0.0
    for _ in range(n_inputs):
        x = rng.standard_normal(shape)
        s = haar.dwt2(x)
        worst_rt = max(worst_rt, float(np.max(np.abs(haar.idwt2(s) - x))))
        ex = float(np.sum(x * x))
        worst_pv = max(worst_pv, abs(ex - s.energy()) / ex)
    return worst_rt, worst_pv


def velocity_bound_margin(
    n_triples: int, sch: HeteroSchedule, shape=(1, 4, 4), seed: int = 0
) -> float:
    """max ||path velocity|| / (L * (||x|| + ||noise||)) over random triples; <= 1 means the bound holds."""
    rng = np.random.default_rng(seed)
    bound = sch.max_slope()
    x = rng.uniform(-1.0, 1.0, (n_triples,) + shape)
    eps = rng.standard_normal((n_triples,) + shape)
    t = rng.uniform(0.0, 1.0, n_triples)
    path = interpolate_bands(haar.dwt2(x), haar.dwt2(eps), t, sch)
    v = path.target_velocity
    v_norm = np.sqrt(
        np.sum(np.square(v.low), axis=(1, 2, 3)) + np.sum(np.square(v.high), axis=(1, 2, 3))
    )
    x_norm = np.sqrt(np.sum(np.square(x), axis=(1, 2, 3)))
    e_norm = np.sqrt(np.sum(np.square(eps), axis=(1, 2, 3)))
    return float(np.max(v_norm / (bound * (x_norm + e_norm))))


def two_point_line_mixture(
    values=(-1.0, 1.0), weights=(0.4, 0.6), low_dims: int = 1
) -> PointMixture:
    pts = np.asarray(values, dtype=np.float64)[:, None]
    return PointMixture(points=pts, weights=np.asarray(weights, dtype=np.float64), low_dims=low_dims)


def weighted_tabular_fields(
    mix: PointMixture,
    sch: HeteroSchedule,
    omegas,
    n_samples: int,
    seed: int = 0,
    t_eval: float = 0.5,
    query_halfwidth: float = 2.0,
    n_queries: int = 21,
):
    """Fit time-pooled tabular velocity fields under several weighting strengths.

    One shared sample set (times from the logit-normal sampler, states from the
    mixture path) is fitted per omega with per-sample low-band weights; the
    fits are read out on cell centers along the t_eval row. Returns
    (queries, {omega: fitted values}, oracle values).
    """
    rng = np.random.default_rng(seed)
    times = sample_time(TimeSampler(), rng, n_samples)
    idx = rng.choice(mix.points.shape[0], n_samples, p=mix.weights)
    data = mix.points[idx, 0]
    eps = rng.standard_normal(n_samples)
    g = np.asarray(sch.low.value(times))
    r = np.asarray(sch.low.slope(times))
    states = g * data + (1.0 - g) * eps
    targets = r * (data - eps)
    # cells: t centers at multiples of 0.02 (t_eval must be one), x centers at multiples of 0.1
    t_edges = np.arange(-0.01, 1.02, 0.02)
    x_edges = np.arange(-3.05, 3.06, 0.1)
    queries = np.linspace(-query_halfwidth, query_halfwidth, n_queries)
    eval_points = np.column_stack([np.full(n_queries, t_eval), queries])
    fields = {}
    for omega in omegas:
        lam_low, _ = band_weights(FreqWeights(omega), times)
        model = tabular_fit(
            (t_edges, x_edges), np.column_stack([times, states]), targets, weights=np.asarray(lam_low)
        )
        fields[omega] = tabular_predict(model, eval_points)[:, 0]
    oracle_vals = np.array(
        [marginal_velocity(mix, np.array([q]), t_eval, sch)[0] for q in queries]
    )
    return queries, fields, oracle_vals


def constant_image_mixture(
    values=(-0.6, 0.6), weights=(0.5, 0.5), shape=(1, 2, 2)
) -> PointMixture:
    """Constant-image atoms as a band-coordinate mixture (one effective dimension)."""
    c, h, w = shape
    atoms = np.stack([np.full((c, h, w), v) for v in values])
    coords = haar.dwt2(atoms).ravel()
    return PointMixture(
        points=coords, weights=np.asarray(weights, dtype=np.float64), low_dims=c * (h // 2) * (w // 2)
    )


def euler_convergence(
    steps_list,
    sch: HeteroSchedule,
    n_draws: int = 32,
    seed: int = 7,
    shape=(1, 2, 2),
    mix: PointMixture | None = None,
    reference_steps: int = 20_000,
    checkpoint: float = 0.5,
):
    """Euler-vs-exact RMS errors at a shared interior checkpoint and at t=1.

    The reference integrates the identical closed-form field (the posterior
    mean converted to a velocity equals the marginal velocity exactly) in band
    coordinates with `reference_steps` Euler steps, far finer than any entry
    of steps_list. Returns (checkpoint slope, checkpoint errors, terminal
    errors).

    The slope is measured at the checkpoint because it is where the scheme's
    first-order character is visible: the flow onto point targets contracts
    perturbations by (1 - mix(1)) / (1 - mix(s)) -> 0, so the error measured
    at t=1 is just the last step's local truncation and decays ~1/steps^2.
    Every steps entry must make checkpoint*steps an integer so all runs share
    the checkpoint as a grid point.
    """
    mix = mix if mix is not None else constant_image_mixture(shape=shape)
    pred = CleanPredictor.from_mixture(mix, sch, shape)
    x0 = initial_noise(n_draws, shape, seed)
    z = haar.dwt2(x0).ravel()
    z_mid = None
    dt = 1.0 / reference_steps
    for i in range(reference_steps):
        z = z + dt * marginal_velocity(mix, z, i * dt, sch)
        if z_mid is None and (i + 1) * dt >= checkpoint - dt / 2:
            z_mid = z.copy()

    def _rms(a, b):
        diff = a - b
        return float(np.sqrt(np.mean(np.sum(diff * diff, axis=-1))))

    mid_errors, end_errors = [], []
    for n_steps in steps_list:
        k_mid = int(round(checkpoint * n_steps))
        if abs(k_mid - checkpoint * n_steps) > 1e-9:
            raise ValueError(f"checkpoint {checkpoint} is not a grid point of {n_steps} steps")
        cfg = SampleConfig(steps=n_steps, variant="euler")
        grid = time_grid(n_steps)
        x = x0
        for i in range(n_steps):
            x = step(pred, x, float(grid[i]), float(grid[i + 1]), cfg)
            if i + 1 == k_mid:
                mid_errors.append(_rms(haar.dwt2(x).ravel(), z_mid))
        end_errors.append(_rms(haar.dwt2(x).ravel(), z))
    slope = float(
        np.polyfit(np.log(np.asarray(steps_list, float)), np.log(mid_errors), 1)[0]
    )
    return slope, mid_errors, end_errors


def reinterp_path_deviation(
    steps: int = 13, seed: int = 3, shape=(1, 2, 2), sch: HeteroSchedule | None = None
) -> float:
    """Max deviation of the reinterp trajectory from the exact path, perfect predictor."""
    sch = sch if sch is not None else HeteroSchedule.from_gammas(0.95, 1.05)
    c, h, w = shape
    atom = np.full((c, h, w), 0.45)
    mix = constant_image_mixture(values=(0.45,), weights=(1.0,), shape=shape)
    pred = CleanPredictor.from_mixture(mix, sch, shape)
    noise = initial_noise(4, shape, seed)
    data = np.broadcast_to(atom, noise.shape)
    cfg = SampleConfig(steps=steps, variant="reinterp")
    grid = time_grid(steps)
    x = noise
    worst = 0.0
    for i in range(steps):
        x = step(pred, x, float(grid[i]), float(grid[i + 1]), cfg)
        expected = interpolate_bands(haar.dwt2(data), haar.dwt2(noise), float(grid[i + 1]), sch)
        worst = max(worst, float(np.max(np.abs(x - expected.pixels))))
    return worst


# ---------------------------------------------------------------------------
# The named checks
# ---------------------------------------------------------------------------


def check_dwt_roundtrip() -> tuple[bool, str]:
    worst, _ = roundtrip_and_parseval(128, seed=11)
    return worst <= 1e-12, f"max round-trip error {worst:.3e} (budget 1e-12)"


def check_parseval() -> tuple[bool, str]:
    _, worst = roundtrip_and_parseval(128, seed=12)
    return worst <= 1e-10, f"max Parseval relative error {worst:.3e} (budget 1e-10)"


def check_velocity_bound() -> tuple[bool, str]:
    margin = velocity_bound_margin(1000, HeteroSchedule.from_gammas(0.95, 1.05), seed=13)
    return margin <= 1.0, f"max ||velocity|| / bound ratio {margin:.6f} (must be <= 1)"


def check_weighting_invariance() -> tuple[bool, str]:
    sch = HeteroSchedule.from_gammas(0.95, 1.05)
    mix = two_point_line_mixture()
    omegas = (0.0, 0.5, 0.7)
    _, fields, oracle_vals = weighted_tabular_fields(mix, sch, omegas, n_samples=2_000_000, seed=14)
    rms = {om: float(np.sqrt(np.nanmean((fields[om] - oracle_vals) ** 2))) for om in omegas}
    pairwise = max(
        float(np.sqrt(np.nanmean((fields[a] - fields[b]) ** 2)))
        for a in omegas
        for b in omegas
        if a < b
    )
    ok = max(rms.values()) <= 0.05 and pairwise <= 0.10
    return ok, f"rms to oracle {max(rms.values()):.4f} (<=0.05), max pairwise {pairwise:.4f} (<=0.10)"


def check_sampler_convergence() -> tuple[bool, str]:
    sch = HeteroSchedule.from_gammas(0.95, 1.05)
    slope, _, end_errors = euler_convergence(
        (10, 30, 100), sch, n_draws=16, seed=15, reference_steps=5000
    )
    terminal_ok = end_errors[-1] <= end_errors[0] * (100 / 10) ** -0.8
    exact = reinterp_path_deviation(steps=11, seed=16, sch=sch)
    ok = (-1.2 <= slope <= -0.8) and terminal_ok and exact <= 1e-10
    return ok, (
        f"euler checkpoint slope {slope:.3f} (-1 +/- 0.2), terminal decay ok={terminal_ok}, "
        f"reinterp deviation {exact:.2e} (<=1e-10)"
    )


CHECKS = (
    ("dwt_roundtrip", check_dwt_roundtrip),
    ("parseval", check_parseval),
    ("velocity_bound", check_velocity_bound),
    ("weighting_invariance", check_weighting_invariance),
    ("sampler_convergence", check_sampler_convergence),
)


def run_checks(emit=print) -> int:
    """Run every check in order; stop at the first failure. Returns 0 or 1."""
    for name, fn in CHECKS:
        ok, detail = fn()
        emit(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        if not ok:
            return 1
    return 0
