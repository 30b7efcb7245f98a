"""Run-config files: plain-text `key = value` lines with `#` comments.

Parsing is total: every line is classified as a pair, comment, blank, or an
error carrying its line number. Unknown keys are errors. Each subcommand has
its own key schema; values are converted and validated here so the CLI can
report all problems in one pass with line diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .datasets import DatasetSpec
from .errors import ConfigError
from .sampler import SampleConfig
from .trainer import TrainConfig


@dataclass(frozen=True)
class ConfigValue:
    raw: str
    line: int


def parse_pairs(text: str) -> dict[str, ConfigValue]:
    """Classify every line; raise ConfigError listing all malformed lines."""
    pairs: dict[str, ConfigValue] = {}
    problems: list[str] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            problems.append(f"line {lineno}: expected 'key = value', got {stripped!r}")
            continue
        key, _, value = stripped.partition("=")
        key, value = key.strip(), value.strip()
        if not key:
            problems.append(f"line {lineno}: empty key")
            continue
        if key in pairs:
            problems.append(f"line {lineno}: duplicate key {key!r} (first at line {pairs[key].line})")
            continue
        pairs[key] = ConfigValue(raw=value, line=lineno)
    if problems:
        raise ConfigError("; ".join(problems))
    return pairs


def load_pairs(path: str | Path) -> dict[str, ConfigValue]:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return parse_pairs(p.read_text())


def _convert(key: str, cv: ConfigValue, kind: str):
    raw = cv.raw
    try:
        if kind == "float":
            return float(raw)
        if kind == "int":
            return int(raw)
        if kind == "bool":
            low = raw.lower()
            if low in ("1", "true", "on", "yes"):
                return True
            if low in ("0", "false", "off", "no"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if kind == "floats":
            return tuple(float(v) for v in raw.split(",") if v.strip())
        if kind == "ints":
            return tuple(int(v) for v in raw.split(",") if v.strip())
        if kind == "pairs":  # "0.9:1.1, 0.95:1.05"
            out = []
            for item in raw.split(","):
                if not item.strip():
                    continue
                a, _, b = item.partition(":")
                out.append((float(a), float(b)))
            return tuple(out)
        return raw
    except ValueError as exc:
        raise ConfigError(f"line {cv.line}: key {key!r}: {exc}") from None


def _extract(pairs: dict[str, ConfigValue], schema: dict[str, str]) -> dict:
    unknown = [f"line {cv.line}: unknown key {k!r}" for k, cv in pairs.items() if k not in schema]
    if unknown:
        raise ConfigError("; ".join(unknown))
    return {k: _convert(k, cv, schema[k]) for k, cv in pairs.items()}


_DATASET_KEYS = {
    "dataset": "str",
    "channels": "int",
    "height": "int",
    "width": "int",
    "mixture_values": "floats",
    "mixture_weights": "floats",
    "labeled": "bool",
    "texture_noise": "float",
}

_SCHEDULE_KEYS = {
    "gamma_low": "float",
    "gamma_high": "float",
    "eps_smooth": "float",
    "omega": "float",
    "time_mu": "float",
    "time_sigma": "float",
    "timeshift": "float",
}

TRAIN_SCHEMA = {
    **_DATASET_KEYS,
    **{k: v for k, v in _SCHEDULE_KEYS.items() if k != "timeshift"},
    "lr": "float",
    "batch": "int",
    "steps": "int",
    "cond_dropout": "float",
    "hidden": "ints",
    "optimizer": "str",
    "beta1": "float",
    "beta2": "float",
    "adam_eps": "float",
    "weight_decay": "float",
    "ema": "bool",
    "ema_decay": "float",
    "seed": "int",
}

SAMPLE_SCHEMA = {
    "checkpoint": "str",
    "n": "int",
    "steps": "int",
    "variant": "str",
    "t_max": "float",
    "cfg_scale": "float",
    "cfg_lo": "float",
    "cfg_hi": "float",
    "timeshift": "float",
    "seed": "int",
    "cond": "int",
    "gamma_low": "float",
    "gamma_high": "float",
    "eps_smooth": "float",
}

CURVES_SCHEMA = {
    "gamma_low": "float",
    "gamma_high": "float",
    "eps_smooth": "float",
    "omega": "float",
    "grid": "int",
}

SWEEP_SCHEMA = {
    **TRAIN_SCHEMA,
    "sweep_gammas": "pairs",
    "sweep_omegas": "floats",
    "sweep_seeds": "ints",
    "eval_samples": "int",
    "eval_steps": "int",
}


def _dataset_spec(values: dict) -> DatasetSpec:
    if "dataset" not in values:
        raise ConfigError("missing required key 'dataset'")
    shape = (values.pop("channels", 1), values.pop("height", 2), values.pop("width", 2))
    kwargs = {"kind": values.pop("dataset"), "shape": shape}
    for key in ("mixture_values", "mixture_weights", "labeled", "texture_noise"):
        if key in values:
            kwargs[key] = values.pop(key)
    return DatasetSpec(**kwargs)


def build_train_config(pairs: dict[str, ConfigValue], seed_override: int | None = None) -> TrainConfig:
    values = _extract(pairs, TRAIN_SCHEMA)
    spec = _dataset_spec(values)
    if "batch" in values:
        values["batch_size"] = values.pop("batch")
    if seed_override is not None:
        values["seed"] = seed_override
    return TrainConfig(dataset=spec, **values)


def build_sample_config(pairs: dict[str, ConfigValue], seed_override: int | None = None):
    """Returns (SampleConfig, checkpoint path, n, cond, schedule overrides dict)."""
    values = _extract(pairs, SAMPLE_SCHEMA)
    if "checkpoint" not in values:
        raise ConfigError("missing required key 'checkpoint'")
    checkpoint = values.pop("checkpoint")
    n = values.pop("n", 16)
    if n < 0:
        raise ConfigError(f"n must be >= 0, got {n}")
    cond = values.pop("cond", None)
    schedule = {k: values.pop(k) for k in ("gamma_low", "gamma_high", "eps_smooth") if k in values}
    lo = values.pop("cfg_lo", 0.15)
    hi = values.pop("cfg_hi", 1.0)
    if seed_override is not None:
        values["seed"] = seed_override
    cfg = SampleConfig(steps=values.pop("steps", 50), cfg_interval=(lo, hi), **values)
    return cfg, checkpoint, n, cond, schedule


def build_curves_config(pairs: dict[str, ConfigValue]) -> dict:
    values = _extract(pairs, CURVES_SCHEMA)
    out = {
        "gamma_low": values.get("gamma_low", 0.95),
        "gamma_high": values.get("gamma_high", 1.05),
        "eps_smooth": values.get("eps_smooth", 0.01),
        "omega": values.get("omega", 0.7),
        "grid": values.get("grid", 101),
    }
    if out["grid"] < 2:
        raise ConfigError(f"grid must be >= 2, got {out['grid']}")
    return out


def build_sweep_config(pairs: dict[str, ConfigValue], seed_override: int | None = None):
    """Returns (base TrainConfig, gamma pairs, omegas, seeds, eval_samples, eval_steps)."""
    values = _extract(pairs, SWEEP_SCHEMA)
    gammas = values.pop("sweep_gammas", ((0.9, 1.1), (0.95, 1.05), (1.0, 1.0), (1.05, 0.95), (1.1, 0.9)))
    omegas = values.pop("sweep_omegas", (0.0, 0.3, 0.5, 0.7, -0.7))
    seeds = values.pop("sweep_seeds", (0,))
    eval_samples = values.pop("eval_samples", 512)
    eval_steps = values.pop("eval_steps", 32)
    spec = _dataset_spec(values)
    if "batch" in values:
        values["batch_size"] = values.pop("batch")
    if seed_override is not None:
        values["seed"] = seed_override
    base = TrainConfig(dataset=spec, **values)
    return base, gammas, omegas, seeds, eval_samples, eval_steps
