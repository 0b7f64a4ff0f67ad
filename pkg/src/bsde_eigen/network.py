"""Periodic MLP ansatz for the eigenfunction and its scaled gradient.

Inputs go through a fixed trigonometric feature map, then through two
independent ReLU MLPs: a scalar head for the eigenfunction and a d-vector
head for sigma^T grad psi. The eigenvalue is carried alongside as a
trainable scalar.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Var

CHECKPOINT_VERSION = 1


def feature_multipliers(d: int, order: int) -> np.ndarray:
    """d x (order*d) matrix ``J`` with ``(x @ J)[:, (j-1)*d + i] = j * x_i``."""
    J = np.zeros((d, order * d))
    for j in range(1, order + 1):
        J[:, (j - 1) * d : j * d] = j * np.eye(d)
    return J


def featurize(x, order: int):
    """Trigonometric features of ``x`` (shape ``(K, d)``).

    Column layout: ``sin(1 x), sin(2 x), ..., sin(M x), cos(1 x), ..., cos(M x)``
    where each block holds the d coordinates in order. Output width ``2*M*d``.
    Works on plain arrays and on Vars.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    if isinstance(x, Var):
        z = x @ feature_multipliers(x.shape[1], order)
        return ad.concat([ad.sin(z), ad.cos(z)], axis=1)
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    z = x @ feature_multipliers(x.shape[1], order)
    return np.concatenate([np.sin(z), np.cos(z)], axis=1)


def _mlp(layers, h):
    last = len(layers) - 1
    for i, (W, b) in enumerate(layers):
        h = h @ W + b
        if i < last:
            h = ad.relu(h)
    return h


def init_layers(sizes: list[int], rng: np.random.Generator) -> list[tuple[np.ndarray, np.ndarray]]:
    """He-uniform weights, zero biases."""
    layers = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / fan_in)
        layers.append((rng.uniform(-bound, bound, size=(fan_in, fan_out)), np.zeros(fan_out)))
    return layers


@dataclass
class NetworkParams:
    d: int
    order: int
    psi: list = field(default_factory=list)
    grad: list = field(default_factory=list)
    lam: float = 0.0

    @classmethod
    def init(cls, d: int, hidden: list[int], order: int = 5, lam: float = 0.0, seed: int = 0):
        rng = np.random.default_rng(seed)
        n_in = 2 * order * d
        psi = init_layers([n_in, *hidden, 1], rng)
        grad = init_layers([n_in, *hidden, d], rng)
        out = cls(d, order, psi, grad, float(lam))
        # sign gauge: start with a positive mean so the signed RMS starts positive
        probe = rng.uniform(0.0, 2 * np.pi, size=(256, d))
        if np.sum(eval_psi(out, probe).value) < 0:
            W, b = psi[-1]
            psi[-1] = (-W, -b)
        return out

    @property
    def hidden(self) -> list[int]:
        return [W.shape[1] for W, _ in self.psi[:-1]]

    def named(self) -> dict[str, np.ndarray]:
        """Flat view; arrays are shared with ``self``, lambda is a 0-d copy."""
        out = {}
        for head in ("psi", "grad"):
            for i, (W, b) in enumerate(getattr(self, head)):
                out[f"{head}.W{i}"] = W
                out[f"{head}.b{i}"] = b
        out["lambda"] = np.array(self.lam)
        return out

    def update(self, named: dict[str, np.ndarray]) -> "NetworkParams":
        heads = {}
        for head in ("psi", "grad"):
            n = len(getattr(self, head))
            heads[head] = [(named[f"{head}.W{i}"], named[f"{head}.b{i}"]) for i in range(n)]
        lam = np.asarray(named["lambda"])
        lam = float(lam) if lam.dtype.itemsize <= 8 else lam[()]
        return NetworkParams(self.d, self.order, heads["psi"], heads["grad"], lam)

    def copy(self) -> "NetworkParams":
        return self.update({k: v.copy() for k, v in self.named().items()})

    def bind(self, tape: Tape | None = None) -> "BoundNetwork":
        """Attach the parameters to ``tape`` as leaves (or as constants if None)."""
        named = self.named()
        if tape is None:
            leaves = {k: Var(v) for k, v in named.items()}
        else:
            leaves = {k: tape.leaf(v, name=k) for k, v in named.items()}
        return BoundNetwork(self, leaves)


class BoundNetwork:
    """Parameters as Vars on one tape; evaluation records onto that tape."""

    def __init__(self, params: NetworkParams, leaves: dict[str, Var]):
        self.params = params
        self.leaves = leaves
        self.order = params.order
        self._psi = [(leaves[f"psi.W{i}"], leaves[f"psi.b{i}"]) for i in range(len(params.psi))]
        self._grad = [(leaves[f"grad.W{i}"], leaves[f"grad.b{i}"]) for i in range(len(params.grad))]

    @property
    def lam(self) -> Var:
        return self.leaves["lambda"]

    def psi(self, x) -> Var:
        """Scalar head, shape ``(K,)``."""
        out = _mlp(self._psi, featurize(x, self.order))
        return ad.reshape(out, (out.shape[0],))

    def grad_head(self, x) -> Var:
        """Scaled-gradient head, shape ``(K, d)``."""
        return _mlp(self._grad, featurize(x, self.order))

    def psi_and_input_gradient(self, x_leaf: Var) -> tuple[Var, Var]:
        """Scalar head and its gradient in x, both recorded.

        ``x_leaf`` must be a leaf on the same tape. Rows are independent, so
        the gradient of the batch sum gives per-row input gradients.
        """
        values = self.psi(x_leaf)
        return values, ad.input_gradient(ad.sum(values), x_leaf)


def eval_psi(params: NetworkParams, x, tape: Tape | None = None) -> Var:
    return params.bind(tape).psi(x)


def eval_grad_head(params: NetworkParams, x, tape: Tape | None = None) -> Var:
    return params.bind(tape).grad_head(x)


def psi_input_gradient(params: NetworkParams, x, tape: Tape | None = None) -> Var:
    tape = tape or Tape()
    x_leaf = tape.leaf(np.atleast_2d(x))
    return params.bind(tape).psi_and_input_gradient(x_leaf)[1]


def predict(params: NetworkParams, x) -> tuple[np.ndarray, np.ndarray]:
    """Plain-array evaluation of both heads."""
    net = params.bind(None)
    return net.psi(x).value, net.grad_head(x).value


# -- checkpoints --------------------------------------------------------------


def save_checkpoint(path, params: NetworkParams, *, Z: float, step: int, seed: int, adam=None, extra=None):
    """Write an ``.npz`` archive holding everything needed to resume.

    Random draws are keyed by ``(seed, step)``, so those two integers are
    the complete generator state.
    """
    arrays = {f"param/{k}": v for k, v in params.named().items()}
    meta = {
        "format_version": CHECKPOINT_VERSION,
        "d": params.d,
        "order": params.order,
        "n_psi": len(params.psi),
        "n_grad": len(params.grad),
        "Z": float(Z),
        "step": int(step),
        "seed": int(seed),
    }
    if extra:
        meta.update(extra)
    if adam is not None:
        meta["adam_t"] = adam.t
        for k in adam.m:
            arrays[f"adam_m/{k}"] = adam.m[k]
            arrays[f"adam_v/{k}"] = adam.v[k]
    for k, v in meta.items():
        arrays[f"meta/{k}"] = np.array(v)
    path = Path(path)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_checkpoint(path) -> tuple[NetworkParams, dict]:
    with np.load(path) as data:
        arrays = {k: data[k] for k in data.files}
    meta = {k[5:]: arrays[k].item() for k in arrays if k.startswith("meta/")}
    version = meta.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version!r}")
    named = {k[6:]: arrays[k] for k in arrays if k.startswith("param/")}
    psi = [(named[f"psi.W{i}"], named[f"psi.b{i}"]) for i in range(meta["n_psi"])]
    grad = [(named[f"grad.W{i}"], named[f"grad.b{i}"]) for i in range(meta["n_grad"])]
    params = NetworkParams(meta["d"], meta["order"], psi, grad, float(named["lambda"]))
    meta["adam_m"] = {k[7:]: arrays[k] for k in arrays if k.startswith("adam_m/")}
    meta["adam_v"] = {k[7:]: arrays[k] for k in arrays if k.startswith("adam_v/")}
    return params, meta
