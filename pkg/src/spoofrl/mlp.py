"""Small dense ReLU network trained with mean-absolute-error loss and ADAM.

Parameters live in one flat float64 vector; per-layer weight matrices
(fan_in x fan_out) and bias vectors are views into it, so the optimiser
updates everything with a few vector operations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


class ModelFormatError(ValueError):
    pass


class MlpNetwork:
    def __init__(self, layer_sizes: Sequence[int], params: np.ndarray | None = None):
        sizes = tuple(int(s) for s in layer_sizes)
        if len(sizes) < 2 or any(s <= 0 for s in sizes):
            raise ValueError(f"layer_sizes must have ≥ 2 positive entries, got {layer_sizes}")
        self.layer_sizes = sizes
        n = sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))
        if params is None:
            params = np.zeros(n)
        params = np.asarray(params, dtype=float)
        if params.shape != (n,):
            raise ValueError(f"expected {n} parameters, got shape {params.shape}")
        self.params = params
        self._bind_views()

    def _bind_views(self) -> None:
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        off = 0
        for a, b in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            self.weights.append(self.params[off:off + a * b].reshape(a, b))
            off += a * b
            self.biases.append(self.params[off:off + b])
            off += b

    @property
    def n_params(self) -> int:
        return self.params.size

    def copy(self) -> "MlpNetwork":
        return MlpNetwork(self.layer_sizes, self.params.copy())

    def load_params(self, other: "MlpNetwork") -> None:
        self.params[:] = other.params

    def __call__(self, x):
        return forward(self, x)


def init_network(layer_sizes: Sequence[int], rng_seed: int = 0) -> MlpNetwork:
    """Glorot-uniform weights, zero biases."""
    net = MlpNetwork(layer_sizes)
    rng = np.random.default_rng(rng_seed)
    for w in net.weights:
        fan_in, fan_out = w.shape
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w[...] = rng.uniform(-limit, limit, size=w.shape)
    return net


def _as_batch(net: MlpNetwork, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.layer_sizes[0]:
        raise ValueError(f"input width {x.shape[-1]} != {net.layer_sizes[0]}")
    return x, single


def forward(net: MlpNetwork, x) -> np.ndarray:
    """Affine + ReLU on hidden layers, affine output.  Accepts (n_in,) or (batch, n_in)."""
    a, single = _as_batch(net, x)
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        a = a @ w + b
        if i < last:
            a = np.maximum(a, 0.0)
    return a[0] if single else a


def loss_and_gradients(net: MlpNetwork, x, target, mask=None) -> tuple[float, np.ndarray]:
    """MAE loss and its exact gradient as a flat vector aligned with ``net.params``.

    Loss is the mean of ``|y - target|`` over batch rows and output units; with
    ``mask`` (same shape as the output, 0/1) only masked entries count and the
    mean is over the masked entries.  Subgradient 0 is used at both kinks
    (``y == target`` and ReLU pre-activation exactly 0).
    """
    x, single = _as_batch(net, x)
    target = np.asarray(target, dtype=float)
    if single:
        target = target[None, :]
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(target))):
        raise ValueError("non-finite input or target")
    acts = [x]
    pre = []
    a = x
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ w + b
        pre.append(z)
        a = np.maximum(z, 0.0) if i < last else z
        acts.append(a)
    diff = a - target
    if diff.shape != a.shape:
        raise ValueError(f"target shape {target.shape} != output shape {a.shape}")
    if mask is None:
        count = diff.size
        delta = np.sign(diff)
        loss = float(np.abs(diff).sum() / count)
    else:
        mask = np.asarray(mask, dtype=float).reshape(diff.shape)
        count = max(float(mask.sum()), 1.0)
        delta = np.sign(diff) * mask
        loss = float((np.abs(diff) * mask).sum() / count)
    delta = delta / count

    grad = np.empty_like(net.params)
    gw, gb = _views(net.layer_sizes, grad)
    for i in range(last, -1, -1):
        gw[i][...] = acts[i].T @ delta
        gb[i][...] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ net.weights[i].T) * (pre[i - 1] > 0.0)
    return loss, grad


def gradients_mae(net: MlpNetwork, x, target) -> np.ndarray:
    return loss_and_gradients(net, x, target)[1]


def _views(sizes, flat):
    ws, bs = [], []
    off = 0
    for a, b in zip(sizes[:-1], sizes[1:]):
        ws.append(flat[off:off + a * b].reshape(a, b))
        off += a * b
        bs.append(flat[off:off + b])
        off += b
    return ws, bs


def split_gradients(net: MlpNetwork, grad: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Per-layer (weight, bias) views of a flat gradient."""
    return _views(net.layer_sizes, grad)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_network(cls, net: MlpNetwork, lr: float = 1e-3, beta1: float = 0.9,
                    beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        return cls(np.zeros(net.n_params), np.zeros(net.n_params), 0, lr, beta1, beta2, eps)


def adam_step(net: MlpNetwork, grad: np.ndarray, state: AdamState) -> tuple[MlpNetwork, AdamState]:
    """One bias-corrected ADAM update, applied in place."""
    if grad.shape != net.params.shape or state.m.shape != net.params.shape:
        raise ValueError("gradient / optimiser state shape mismatch")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    state.m *= b1
    state.m += (1.0 - b1) * grad
    state.v *= b2
    state.v += (1.0 - b2) * grad * grad
    m_hat = state.m / (1.0 - b1 ** state.t)
    v_hat = state.v / (1.0 - b2 ** state.t)
    net.params -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return net, state


@dataclass
class TrainConfig:
    epochs: int = 1000
    batch_size: int = 32
    rng_seed: int = 0
    learning_rate: float = 1e-3
    loss: str = field(default="mae", init=False)

    def __post_init__(self):
        if self.epochs <= 0 or self.batch_size <= 0:
            raise ValueError("epochs and batch_size must be positive")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be ≥ 0")


def train(net: MlpNetwork, x, y, cfg: TrainConfig, log_every: int = 0) -> tuple[MlpNetwork, list[float]]:
    """Minibatch ADAM on MAE, reshuffled every epoch.  Returns per-epoch mean loss."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    if len(x) == 0 or len(x) != len(y):
        raise ValueError("dataset must be non-empty with matching x/y lengths")
    rng = np.random.default_rng(cfg.rng_seed)
    state = AdamState.for_network(net, lr=cfg.learning_rate)
    n = len(x)
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        xs, ys = x[order], y[order]
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            xb = xs[start:start + cfg.batch_size]
            yb = ys[start:start + cfg.batch_size]
            loss, grad = loss_and_gradients(net, xb, yb)
            adam_step(net, grad, state)
            total += loss * len(xb)
        history.append(total / n)
        if log_every and (epoch + 1) % log_every == 0:
            print(f"epoch {epoch + 1}/{cfg.epochs} mae={history[-1]:.6g}")
    return net, history


# -- serialisation -------------------------------------------------------------

def model_to_dict(net: MlpNetwork, normalization: dict | None = None, role: str | None = None) -> dict:
    d: dict = {}
    if role is not None:
        d["role"] = role
    d["layer_sizes"] = list(net.layer_sizes)
    d["weights"] = [w.tolist() for w in net.weights]
    d["biases"] = [b.tolist() for b in net.biases]
    d["normalization"] = normalization
    return d


def model_from_dict(d: dict) -> MlpNetwork:
    try:
        sizes = [int(s) for s in d["layer_sizes"]]
        weights = d["weights"]
        biases = d["biases"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed model: {exc!r}") from None
    if len(sizes) < 2 or len(weights) != len(sizes) - 1 or len(biases) != len(sizes) - 1:
        raise ModelFormatError("layer count does not match layer_sizes")
    flat = []
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        w = np.asarray(weights[i], dtype=float)
        bias = np.asarray(biases[i], dtype=float)
        if w.shape != (a, b) or bias.shape != (b,):
            raise ModelFormatError(f"layer {i}: got weight {w.shape}, bias {bias.shape}; expected ({a}, {b}), ({b},)")
        flat.extend([w.ravel(), bias])
    params = np.concatenate(flat)
    if not np.all(np.isfinite(params)):
        raise ModelFormatError("non-finite parameters")
    return MlpNetwork(sizes, params)


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=False) + "\n"


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)


def save_model(net: MlpNetwork, stats, path, role: str | None = None) -> None:
    """Write ``net`` plus its normalisation stats (a ``NormalizationStats`` or None)."""
    norm = stats.to_dict() if stats is not None else None
    atomic_write_text(path, dumps_json(model_to_dict(net, norm, role)))


def load_model(path):
    """Returns ``(net, stats)``; ``stats`` is None when the file carries none."""
    from .data import NormalizationStats

    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(d, dict):
        raise ModelFormatError(f"{path}: expected a JSON object")
    net = model_from_dict(d)
    norm = d.get("normalization")
    try:
        stats = NormalizationStats.from_dict(norm) if norm else None
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"{path}: bad normalization block: {exc!r}") from None
    return net, stats
