"""Factorized clean-target prediction at toy scale.

Two small MLPs realize the factorization contract: a structure net maps the
noisy low band (plus time and condition embeddings) to a clean low-band
estimate, then a detail net maps the noisy high band, the *predicted* low band,
and the same embeddings to a clean high-band estimate. The predicted low band
enters the detail net as a constant: gradients of the detail loss never reach
the structure net (stop-gradient), though forward perturbations do propagate.

Gradients are hand-written reverse mode over an activation tape, checked
against central finite differences in the test suite. Also here: the tabular
(per-cell mean) velocity fitter used by the optimality tests, and FPXT1
checkpoint serialization.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ContractError, DimensionError, DomainError, FormatError
from .haar import FreqState, idwt2
from .tensorio import read_tensor, write_tensor

TIME_EMB_DIM = 4

_ACTIVATIONS = ("tanh", "identity")


@dataclass
class MlpParams:
    """Dense-layer stack: weights[i] is (n_in, n_out), biases[i] is (n_out,).

    The nonlinearity is applied between layers, never after the last one. The
    same container doubles as the gradient carrier returned by mlp_backward.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "tanh"

    def __post_init__(self):
        if self.activation not in _ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ConfigError("weights and biases must be non-empty lists of equal length")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.ndim != 1 or w.shape[1] != b.shape[0]:
                raise DimensionError(f"layer {i}: weight {w.shape} and bias {b.shape} incompatible")
            if i and self.weights[i - 1].shape[1] != w.shape[0]:
                raise DimensionError(
                    f"layer {i - 1} output {self.weights[i - 1].shape[1]} != layer {i} input {w.shape[0]}"
                )
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise DimensionError(f"layer {i}: non-finite parameter tensor")

    @classmethod
    def init(
        cls, sizes: list[int], rng: np.random.Generator, activation: str = "tanh"
    ) -> "MlpParams":
        """Gaussian init scaled by 1/sqrt(fan_in); biases start at zero."""
        weights = [
            rng.standard_normal((n_in, n_out)) / np.sqrt(n_in)
            for n_in, n_out in zip(sizes[:-1], sizes[1:])
        ]
        biases = [np.zeros(n_out) for n_out in sizes[1:]]
        return cls(weights=weights, biases=biases, activation=activation)

    @property
    def sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def num_params(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def copy(self) -> "MlpParams":
        return MlpParams(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            activation=self.activation,
        )


@dataclass
class MlpTape:
    """Activation record from one forward pass; consumed by mlp_backward."""

    params: MlpParams
    layer_inputs: list[np.ndarray]  # input to each layer (post-activation of previous)
    was_vector: bool


def _activate(name: str, pre: np.ndarray) -> np.ndarray:
    return np.tanh(pre) if name == "tanh" else pre


def _activation_slope(name: str, act: np.ndarray) -> np.ndarray:
    return 1.0 - act * act if name == "tanh" else np.ones_like(act)


def mlp_forward(p: MlpParams, x: np.ndarray) -> tuple[np.ndarray, MlpTape]:
    """Affine+nonlinearity stack; returns the output and a tape for backward.

    Accepts a single vector (n_in,) or a batch (B, n_in).
    """
    a = np.asarray(x, dtype=np.float64)
    was_vector = a.ndim == 1
    if was_vector:
        a = a[None, :]
    if a.ndim != 2 or a.shape[1] != p.weights[0].shape[0]:
        raise DimensionError(f"input shape {np.shape(x)} does not match first layer {p.weights[0].shape}")
    layer_inputs = []
    h = a
    last = len(p.weights) - 1
    for i, (w, b) in enumerate(zip(p.weights, p.biases)):
        layer_inputs.append(h)
        pre = h @ w + b
        h = pre if i == last else _activate(p.activation, pre)
    out = h[0] if was_vector else h
    return out, MlpTape(params=p, layer_inputs=layer_inputs, was_vector=was_vector)


def mlp_backward(
    p: MlpParams, tape: MlpTape, output_grad: np.ndarray
) -> tuple[MlpParams, np.ndarray]:
    """Exact reverse-mode gradients from a matching forward tape.

    Returns (parameter gradients shaped like `p`, gradient w.r.t. the input).
    Batch contributions reduce through a single matmul, so accumulation order
    is fixed and results are bitwise reproducible.
    """
    if tape.params is not p:
        raise ContractError("tape was produced by a different parameter set")
    g = np.asarray(output_grad, dtype=np.float64)
    if tape.was_vector:
        if g.ndim != 1:
            raise DimensionError("output_grad must be a vector for a vector forward pass")
        g = g[None, :]
    if g.shape != (tape.layer_inputs[0].shape[0], p.weights[-1].shape[1]):
        raise DimensionError(f"output_grad shape {output_grad.shape} mismatches forward pass")
    grad_w: list[np.ndarray] = [np.empty(0)] * len(p.weights)
    grad_b: list[np.ndarray] = [np.empty(0)] * len(p.biases)
    for i in range(len(p.weights) - 1, -1, -1):
        inp = tape.layer_inputs[i]
        grad_w[i] = inp.T @ g
        grad_b[i] = g.sum(axis=0)
        g = g @ p.weights[i].T
        if i > 0:
            g = g * _activation_slope(p.activation, inp)
    input_grad = g[0] if tape.was_vector else g
    grads = MlpParams(weights=grad_w, biases=grad_b, activation=p.activation)
    return grads, input_grad


def time_embedding(t) -> np.ndarray:
    """Smooth 4-feature time code: (t, sin 2*pi*t, cos 2*pi*t, t^2)."""
    t = np.asarray(t, dtype=np.float64)
    return np.stack([t, np.sin(2 * np.pi * t), np.cos(2 * np.pi * t), t * t], axis=-1)


def cond_onehot(num_classes: int, cond, batch: int) -> np.ndarray:
    """One-hot condition rows of width num_classes+1; the last slot is the null condition.

    `cond` is an int label, None (null), or an int array with -1 meaning null.
    """
    width = num_classes + 1
    idx = np.full(batch, num_classes, dtype=np.int64)
    if cond is not None:
        c = np.asarray(cond, dtype=np.int64)
        idx = np.broadcast_to(c, (batch,)).copy() if c.ndim else np.full(batch, int(c))
        idx[idx < 0] = num_classes
        if np.any(idx > num_classes):
            raise DomainError(f"condition label exceeds num_classes={num_classes}")
    out = np.zeros((batch, width))
    out[np.arange(batch), idx] = 1.0
    return out


@dataclass
class PredictorOutput:
    """Clean-band estimates plus their pixel-space synthesis."""

    l_hat: np.ndarray
    h_hat: np.ndarray
    x_hat: np.ndarray

    @property
    def bands(self) -> FreqState:
        return FreqState(low=self.l_hat, high=self.h_hat)


@dataclass
class FactorizedModel:
    """Structure net then detail net, wired per the factorization contract."""

    structure: MlpParams
    detail: MlpParams
    shape: tuple[int, int, int]
    num_classes: int = 0
    hidden: tuple[int, ...] = (64, 64)

    @classmethod
    def create(
        cls,
        shape: tuple[int, int, int],
        rng: np.random.Generator,
        hidden: tuple[int, ...] = (64, 64),
        num_classes: int = 0,
        activation: str = "tanh",
    ) -> "FactorizedModel":
        c, h, w = shape
        if h % 2 or w % 2 or h < 2 or w < 2:
            raise ConfigError(f"image shape {shape} needs even H and W >= 2")
        n_low = c * (h // 2) * (w // 2)
        n_high = 3 * n_low
        aux = TIME_EMB_DIM + num_classes + 1
        structure = MlpParams.init([n_low + aux, *hidden, n_low], rng, activation)
        detail = MlpParams.init([n_high + n_low + aux, *hidden, n_high], rng, activation)
        return cls(
            structure=structure,
            detail=detail,
            shape=tuple(shape),
            num_classes=num_classes,
            hidden=tuple(hidden),
        )

    @property
    def low_shape(self) -> tuple[int, int, int]:
        c, h, w = self.shape
        return (c, h // 2, w // 2)

    @property
    def high_shape(self) -> tuple[int, int, int]:
        c, h, w = self.shape
        return (3 * c, h // 2, w // 2)


def _flatten_band(a: np.ndarray, expected: tuple[int, int, int]) -> tuple[np.ndarray, bool]:
    a = np.asarray(a, dtype=np.float64)
    if a.shape[-3:] != expected:
        raise DimensionError(f"band shape {a.shape} does not match model band {expected}")
    was_single = a.ndim == 3
    if was_single:
        a = a[None]
    if a.ndim != 4:
        raise DimensionError(f"band must be (C,H,W) or (B,C,H,W), got {a.shape}")
    return a.reshape(a.shape[0], -1), was_single


def _predict_parts(m: FactorizedModel, state: FreqState, t, cond):
    low_flat, was_single = _flatten_band(state.low, m.low_shape)
    high_flat, _ = _flatten_band(state.high, m.high_shape)
    batch = low_flat.shape[0]
    temb = np.broadcast_to(time_embedding(t), (batch, TIME_EMB_DIM))
    cemb = cond_onehot(m.num_classes, cond, batch)
    s_in = np.concatenate([low_flat, temb, cemb], axis=1)
    l_hat_flat, s_tape = mlp_forward(m.structure, s_in)
    d_in = np.concatenate([high_flat, l_hat_flat, temb, cemb], axis=1)
    h_hat_flat, d_tape = mlp_forward(m.detail, d_in)
    return l_hat_flat, h_hat_flat, s_tape, d_tape, was_single


def predict(m: FactorizedModel, state: FreqState, t, cond=None) -> PredictorOutput:
    """Clean-target prediction: low band first, detail conditioned on it.

    `state` may carry a leading batch axis; `t` is a scalar or per-sample
    vector; `cond` is an int label, None, or an int array with -1 for null.
    """
    out, _ = predict_with_tapes(m, state, t, cond)
    return out


def predict_with_tapes(m: FactorizedModel, state: FreqState, t, cond=None):
    """predict() plus the two MLP tapes, for the training backward pass."""
    l_hat_flat, h_hat_flat, s_tape, d_tape, was_single = _predict_parts(m, state, t, cond)
    batch = l_hat_flat.shape[0]
    l_hat = l_hat_flat.reshape((batch,) + m.low_shape)
    h_hat = h_hat_flat.reshape((batch,) + m.high_shape)
    if was_single:
        l_hat, h_hat = l_hat[0], h_hat[0]
    x_hat = idwt2(FreqState(low=l_hat, high=h_hat))
    return PredictorOutput(l_hat=l_hat, h_hat=h_hat, x_hat=x_hat), (s_tape, d_tape)


def backprop(
    m: FactorizedModel,
    tapes,
    grad_l_hat: np.ndarray,
    grad_h_hat: np.ndarray,
) -> tuple[MlpParams, MlpParams]:
    """Parameter gradients from band-estimate gradients, honoring stop-gradient.

    The detail net's gradient w.r.t. its inputs is discarded wholesale: the
    noisy band slice is data, and the predicted-low slice is blocked by
    contract. The structure net therefore sees only grad_l_hat.
    """
    s_tape, d_tape = tapes
    gl = np.asarray(grad_l_hat, dtype=np.float64).reshape(s_tape.layer_inputs[0].shape[0], -1)
    gh = np.asarray(grad_h_hat, dtype=np.float64).reshape(d_tape.layer_inputs[0].shape[0], -1)
    if s_tape.was_vector:
        gl, gh = gl[0], gh[0]
    d_grads, _ = mlp_backward(m.detail, d_tape, gh)
    s_grads, _ = mlp_backward(m.structure, s_tape, gl)
    return s_grads, d_grads


# ---------------------------------------------------------------------------
# Tabular velocity models (per-cell least squares)
# ---------------------------------------------------------------------------


@dataclass
class TabularModel:
    """Per-cell constant fit on a rectangular partition of a 1-D or 2-D input space.

    Cells that received no sample weight hold NaN and are excluded from
    comparisons by the callers.
    """

    edges: tuple[np.ndarray, ...]
    values: np.ndarray
    weight_sums: np.ndarray


def _cell_index(edges: tuple[np.ndarray, ...], inputs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(flat cell index, in-range mask) for inputs of shape (N, k)."""
    n_cells = [len(e) - 1 for e in edges]
    idx = np.zeros(inputs.shape[0], dtype=np.int64)
    ok = np.ones(inputs.shape[0], dtype=bool)
    for dim, e in enumerate(edges):
        j = np.searchsorted(e, inputs[:, dim], side="right") - 1
        ok &= (j >= 0) & (j < n_cells[dim])
        idx = idx * n_cells[dim] + np.clip(j, 0, n_cells[dim] - 1)
    return idx, ok


def tabular_fit(
    edges,
    inputs: np.ndarray,
    targets: np.ndarray,
    weights: np.ndarray | None = None,
) -> TabularModel:
    """Fit the (weighted) per-cell mean of `targets`: the least-squares optimum.

    `edges` is one monotone edge array per input dimension (1 or 2 of them);
    `inputs` is (N,) or (N, k), `targets` (N,) or (N, m). Samples outside the
    partition are ignored.
    """
    edges = tuple(np.asarray(e, dtype=np.float64) for e in (edges if isinstance(edges, (tuple, list)) else (edges,)))
    if not 1 <= len(edges) <= 2:
        raise ConfigError("tabular fits support 1-D or 2-D input spaces only")
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[1] != len(edges):
        raise DimensionError(f"inputs have {x.shape[1]} dims, partition has {len(edges)}")
    y = np.asarray(targets, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    w = np.ones(x.shape[0]) if weights is None else np.asarray(weights, dtype=np.float64)
    idx, ok = _cell_index(edges, x)
    n_cells = [len(e) - 1 for e in edges]
    flat = int(np.prod(n_cells))
    wsum = np.zeros(flat)
    ysum = np.zeros((flat, y.shape[1]))
    np.add.at(wsum, idx[ok], w[ok])
    np.add.at(ysum, idx[ok], w[ok, None] * y[ok])
    with np.errstate(invalid="ignore", divide="ignore"):
        values = ysum / wsum[:, None]
    values[wsum == 0.0] = np.nan
    return TabularModel(
        edges=edges,
        values=values.reshape(tuple(n_cells) + (y.shape[1],)),
        weight_sums=wsum.reshape(tuple(n_cells)),
    )


def tabular_predict(model: TabularModel, inputs: np.ndarray) -> np.ndarray:
    """Evaluate the fitted table; NaN rows for out-of-range or undefined cells."""
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    idx, ok = _cell_index(model.edges, x)
    flat_values = model.values.reshape(-1, model.values.shape[-1])
    out = np.full((x.shape[0], flat_values.shape[1]), np.nan)
    out[ok] = flat_values[idx[ok]]
    return out


# ---------------------------------------------------------------------------
# Checkpoints: FPXT1 tensors plus a manifest with layer shapes and config hash
# ---------------------------------------------------------------------------

CHECKPOINT_FORMAT = "fdfm-checkpoint-v1"


def save_checkpoint(
    directory: str | Path,
    model: FactorizedModel,
    config_hash: str = "",
    extra: dict | None = None,
) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    tensors = []
    for net_name, net in (("structure", model.structure), ("detail", model.detail)):
        for i, (w, b) in enumerate(zip(net.weights, net.biases)):
            for kind, arr in (("w", w), ("b", b)):
                name = f"{net_name}_{kind}{i}"
                write_tensor(d / f"{name}.fpxt", arr)
                tensors.append({"name": name, "file": f"{name}.fpxt", "dims": list(arr.shape)})
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "config_hash": config_hash,
        "shape": list(model.shape),
        "num_classes": model.num_classes,
        "hidden": list(model.hidden),
        "activation": model.structure.activation,
        "structure_sizes": model.structure.sizes,
        "detail_sizes": model.detail.sizes,
        "tensors": tensors,
    }
    if extra:
        manifest.update(extra)
    (d / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))


def load_checkpoint(directory: str | Path) -> tuple[FactorizedModel, dict]:
    d = Path(directory)
    manifest_path = d / "manifest.json"
    if not manifest_path.is_file():
        raise FormatError(f"no manifest.json under {d}")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise FormatError(f"unsupported checkpoint format {manifest.get('format')!r}")
    arrays = {}
    for entry in manifest["tensors"]:
        arr = read_tensor(d / entry["file"])
        if list(arr.shape) != entry["dims"]:
            raise FormatError(f"{entry['file']}: dims {list(arr.shape)} != manifest {entry['dims']}")
        arrays[entry["name"]] = arr

    def _net(prefix: str, sizes: list[int]) -> MlpParams:
        n_layers = len(sizes) - 1
        try:
            weights = [arrays[f"{prefix}_w{i}"] for i in range(n_layers)]
            biases = [arrays[f"{prefix}_b{i}"] for i in range(n_layers)]
        except KeyError as missing:
            raise FormatError(f"checkpoint missing tensor {missing}") from None
        net = MlpParams(weights=weights, biases=biases, activation=manifest["activation"])
        if net.sizes != sizes:
            raise FormatError(f"{prefix} layer sizes {net.sizes} != manifest {sizes}")
        return net

    model = FactorizedModel(
        structure=_net("structure", manifest["structure_sizes"]),
        detail=_net("detail", manifest["detail_sizes"]),
        shape=tuple(manifest["shape"]),
        num_classes=int(manifest["num_classes"]),
        hidden=tuple(manifest["hidden"]),
    )
    return model, manifest
