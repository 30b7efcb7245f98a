"""Command-line surface: fdfm train | sample | curves | sweep | verify.

Common flags: --config PATH (key = value file), --out DIR, --seed N (overrides
the config seed). Exit codes are a stable scripting contract: 0 success,
2 configuration or input error, 3 numeric failure; `verify` exits 1 on the
first failed check. A lock file guards each output directory against
concurrent writers. FDFM_THREADS caps worker parallelism for sweeps.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import runconfig, verify
from .errors import ConfigError, DimensionError, DomainError, FormatError, NumericsError
from .predictor import load_checkpoint
from .sampler import CleanPredictor, sample
from .schedules import FreqWeights, HeteroSchedule, band_weights
from .tensorio import write_tensor
from .trainer import fit, run_sweep, worker_count


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fdfm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, needs_config in (
        ("train", True),
        ("sample", True),
        ("curves", True),
        ("sweep", True),
        ("verify", False),
    ):
        p = sub.add_parser(name)
        p.add_argument("--config", required=needs_config, help="path to a key = value config file")
        p.add_argument("--out", default="fdfm-out", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
    return parser


@contextlib.contextmanager
def _dir_lock(out: Path):
    out.mkdir(parents=True, exist_ok=True)
    lock = out / ".fdfm-lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ConfigError(
            f"lock file {lock} exists: another run owns this directory (remove it if stale)"
        ) from None
    os.write(fd, str(os.getpid()).encode())
    os.close(fd)
    try:
        yield
    finally:
        lock.unlink(missing_ok=True)


def _echo(pairs) -> dict:
    return {k: v.raw for k, v in sorted(pairs.items())}


def cmd_train(args) -> int:
    pairs = runconfig.load_pairs(args.config)
    config = runconfig.build_train_config(pairs, args.seed)
    out = Path(args.out)
    with _dir_lock(out):
        _, metrics = fit(config, out_dir=out)
    print(f"trained {config.steps} steps; checkpoint and metrics under {out}")
    if config.steps:
        print(f"final loss (last step): {metrics.totals[-1]:.6g}")
    return 0


def cmd_sample(args) -> int:
    pairs = runconfig.load_pairs(args.config)
    config, ckpt, n, cond, overrides = runconfig.build_sample_config(pairs, args.seed)
    model, manifest = load_checkpoint(ckpt)
    sched_args = {
        "gamma_low": manifest.get("gamma_low", 0.95),
        "gamma_high": manifest.get("gamma_high", 1.05),
        "eps_smooth": manifest.get("eps_smooth", 0.01),
    }
    sched_args.update(overrides)
    schedule = HeteroSchedule.from_gammas(**sched_args)
    predictor = CleanPredictor.from_model(model, schedule)
    out = Path(args.out)
    with _dir_lock(out):
        t0 = time.perf_counter()
        batch = sample(predictor, n, config, cond)
        wall = time.perf_counter() - t0
        write_tensor(out / "samples.fpxt", batch)
        info = {
            "command": "sample",
            "checkpoint": str(ckpt),
            "n": n,
            "cond": cond,
            "seed": config.seed,
            "steps": config.steps,
            "variant": config.variant,
            "t_max": config.t_max,
            "cfg_scale": config.cfg_scale,
            "cfg_interval": list(config.cfg_interval),
            "timeshift": config.timeshift,
            "schedule": sched_args,
            "config_echo": _echo(pairs),
            "wall_time_s": wall,
        }
        (out / "manifest.json").write_text(json.dumps(info, indent=1, sort_keys=True))
    print(f"wrote {batch.shape} samples to {out / 'samples.fpxt'}")
    return 0


def cmd_curves(args) -> int:
    pairs = runconfig.load_pairs(args.config)
    values = runconfig.build_curves_config(pairs)
    schedule = HeteroSchedule.from_gammas(
        values["gamma_low"], values["gamma_high"], values["eps_smooth"]
    )
    weights = FreqWeights(values["omega"])
    out = Path(args.out)
    with _dir_lock(out):
        path = out / "curves.csv"
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["t", "g_low", "g_high", "dg_low", "dg_high", "lambda_low", "lambda_high"]
            )
            for t in np.linspace(0.0, 1.0, values["grid"]):
                g_lo, g_hi = schedule.mix(float(t))
                r_lo, r_hi = schedule.rate(float(t))
                lam_lo, lam_hi = band_weights(weights, float(t))
                writer.writerow([repr(float(v)) for v in (t, g_lo, g_hi, r_lo, r_hi, lam_lo, lam_hi)])
    print(f"wrote {values['grid']} rows to {path}")
    return 0


def cmd_sweep(args) -> int:
    pairs = runconfig.load_pairs(args.config)
    base, gammas, omegas, seeds, eval_samples, eval_steps = runconfig.build_sweep_config(
        pairs, args.seed
    )
    out = Path(args.out)
    with _dir_lock(out):
        rows = run_sweep(
            base,
            gammas,
            omegas,
            seeds,
            eval_samples=eval_samples,
            eval_steps=eval_steps,
            out_csv=out / "sweep.csv",
            max_workers=worker_count(),
        )
    failures = sum(1 for r in rows if r["status"] != "ok")
    print(f"swept {len(rows)} cells ({failures} failed) -> {out / 'sweep.csv'}")
    return 0


def cmd_verify(args) -> int:
    return verify.run_checks(print)


_COMMANDS = {
    "train": cmd_train,
    "sample": cmd_sample,
    "curves": cmd_curves,
    "sweep": cmd_sweep,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, FormatError, DimensionError, DomainError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericsError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


def console_entry() -> None:
    sys.exit(main())
