"""Training loop for the fixed-point eigensolver.

One step: sample uniform starting points and Brownian increments, form the
paths, update the normalisation constant from the batch, propagate the
normalised eigenfunction along the paths, and take an Adam step on the
terminal-mismatch loss with respect to both heads and the eigenvalue.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Callable

import numpy as np

from . import autodiff as ad
from . import metrics
from .autodiff import Tape
from .network import NetworkParams, load_checkpoint, predict, save_checkpoint
from .normalization import NormState, PiecewiseConstant, batch_estimate, batch_estimate_var, hinge_penalty
from .sde import ClipBounds, PathBatch, TimeGrid, make_rng, propagate, sample_initial, simulate_forward

log = logging.getLogger(__name__)

HISTORY_COLUMNS = ("step", "loss", "lambda", "Z", "err_lambda", "err_psi_l2", "err_psi_inf", "err_grad")

# generator streams; the step index is the other half of the key
_STREAM_TRAIN = 0
_STREAM_VALID = 1
_STREAM_SUPERVISED = 2


@dataclass
class TrainConfig:
    T: float = 0.2
    N: int = 80
    K: int = 1024
    order: int = 5
    hidden: tuple = (80, 80, 80)
    eta1: float = 1000.0
    eta2: float = 20.0
    eta3: float = 100.0
    Z0: float = 2.0
    clip_P: float = -5.0
    clip_Q: float = 5.0
    lr: PiecewiseConstant = field(default_factory=lambda: PiecewiseConstant((1e-4, 5e-5, 1e-5), (30000, 60000)))
    gamma: PiecewiseConstant = field(default_factory=lambda: PiecewiseConstant((0.2, 0.5, 0.9), (30000, 60000)))
    iterations: int = 80000
    seed: int = 0
    lambda_init: float = 0.0
    lambda_freeze_steps: int = 0
    record_every: int = 100
    smooth_window: int = 10
    report_last: int = 1000
    validation_size: int | None = None
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_through_z: bool = True
    grad_clip_norm: float | None = None
    eigen_index: int = 0
    supervised_steps: int = 0
    supervised_lr: float = 1e-3
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.N < 1 or self.T <= 0:
            raise ValueError("need N >= 1 and T > 0")
        for name in ("eta1", "eta2", "eta3"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.T, self.N)

    @property
    def bounds(self) -> ClipBounds:
        return ClipBounds(self.clip_P, self.clip_Q)

    def with_updates(self, **kw) -> "TrainConfig":
        return replace(self, **kw)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class TrainRecord:
    step: int
    loss: float
    lam: float
    Z: float
    err_lambda: float = math.nan
    err_psi_l2: float = math.nan
    err_psi_inf: float = math.nan
    err_grad: float = math.nan

    def row(self) -> tuple:
        return (self.step, self.loss, self.lam, self.Z, self.err_lambda, self.err_psi_l2, self.err_psi_inf, self.err_grad)


@dataclass
class TrainResult:
    params: NetworkParams
    history: list
    Z: float
    adam: "Adam"
    step: int

    @property
    def lam(self) -> float:
        return self.params.lam

    def summary(self, last: int = 1000) -> dict:
        """Errors averaged over records in the final ``last`` steps."""
        recs = [r for r in self.history if r.step > self.step - last and r.step >= 1] or self.history[-1:]
        out = {"step": self.step, "lambda": self.params.lam, "Z": self.Z}
        for name in ("err_lambda", "err_psi_l2", "err_psi_inf", "err_grad"):
            out[name] = float(np.mean([getattr(r, name) for r in recs])) if recs else math.nan
        return out


class Adam:
    def __init__(self, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: dict, grads: dict, lr: float, frozen=()) -> dict:
        """Return updated copies of ``params``; keys in ``frozen`` pass through untouched."""
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        out = {}
        for k, p in params.items():
            if k in frozen:
                out[k] = p
                continue
            g = grads[k]
            if k not in self.m:
                self.m[k] = np.zeros_like(p)
                self.v[k] = np.zeros_like(p)
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * (g * g)
            out[k] = p - lr * (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + self.eps)
        return out


def adam_step(params: dict, grads: dict, state: Adam, lr: float, frozen=()) -> dict:
    return state.step(params, grads, lr, frozen)


# -- loss -----------------------------------------------------------------------


def loss(batch: PathBatch, net, U_T, G_all, Z, problem, config: TrainConfig):
    """Batch loss on the current tape.

    ``G_all`` is the scaled-gradient head over ``batch.time_major()``; its
    last ``K`` rows are the terminal values. Only the eigenfunction head is
    divided by ``Z``.
    """
    tape = net.leaves["lambda"].tape
    K, N = batch.K, batch.N
    x_T = tape.leaf(batch.X[:, -1])
    psi_T, dpsi_T = net.psi_and_input_gradient(x_T)
    G_T = G_all[N * K :]
    value_gap = ad.square(psi_T / Z - U_T) * config.eta1
    grad_gap = ad.sum(ad.square(G_T - (dpsi_T @ problem.sigma) / Z), axis=1) * config.eta2
    total = ad.mean(value_gap + grad_gap)
    return total + hinge_penalty(Z, config.Z0, config.eta3)


def _clip_norm(grads: dict, max_norm: float | None) -> dict:
    if max_norm is None:
        return grads
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total <= max_norm:
        return grads
    return {k: g * (max_norm / total) for k, g in grads.items()}


def _forward(params: NetworkParams, batch: PathBatch, problem, config: TrainConfig, Z_prev, step: int):
    tape = Tape()
    net = params.bind(tape)
    psi0 = net.psi(batch.X[:, 0])
    Z_hat = batch_estimate(psi0.value)
    gamma = config.gamma(step)
    if Z_hat == 0.0:
        # degenerate batch: keep the previous constant, penalise fully
        Z = Z_prev if Z_prev is not None else config.Z0
        Z_used = Z
    elif config.grad_through_z:
        Z_var = batch_estimate_var(psi0)
        Z_used = Z_var if Z_prev is None else Z_var * (1.0 - gamma) + gamma * Z_prev
        Z = float(Z_used.value)
    else:
        Z = Z_hat if Z_prev is None else gamma * Z_prev + (1.0 - gamma) * Z_hat
        Z_used = Z
    G_all = net.grad_head(batch.time_major())
    bounds = config.bounds if problem.semilinear else None
    U_T = propagate(batch, psi0 / Z_used, G_all, net.lam, problem, bounds)
    total = loss(batch, net, U_T, G_all, Z_used, problem, config)
    if Z_hat == 0.0:
        total = total + config.eta3 * config.Z0
    if not np.isfinite(total.value):
        raise FloatingPointError(f"non-finite loss at step {step}")
    return total, net, Z, Z_hat


def loss_value(params: NetworkParams, batch: PathBatch, problem, config: TrainConfig, Z_prev, step: int):
    """Forward pass only; the value keeps the parameters' float type."""
    return _forward(params, batch, problem, config, Z_prev, step)[0].value


def loss_and_grads(params: NetworkParams, batch: PathBatch, problem, config: TrainConfig, Z_prev, step: int):
    """Forward + backward for one batch.

    Returns ``(loss, grads, Z, Z_hat)``. ``Z`` is the moving average; with
    ``grad_through_z`` the current batch estimate stays on the tape.
    """
    total, net, Z, Z_hat = _forward(params, batch, problem, config, Z_prev, step)
    leaves = net.leaves
    g = ad.backward(total, wrt=list(leaves.values()))
    grads = {k: g[v] for k, v in leaves.items()}
    return float(total.value), grads, Z, Z_hat


# -- loop -----------------------------------------------------------------------


def sample_batch(problem, config: TrainConfig, step: int) -> PathBatch:
    rng = make_rng(config.seed, step, _STREAM_TRAIN)
    x0 = sample_initial(config.K, problem.d, rng)
    return simulate_forward(x0, config.grid, problem.sigma, rng)


def validation_set(problem, config: TrainConfig):
    if not problem.eigenpairs or config.eigen_index >= len(problem.eigenpairs):
        return None
    rng = make_rng(config.seed, 0, _STREAM_VALID)
    size = config.validation_size or config.K
    return metrics.ValidationSet.build(problem, problem.eigenpairs[config.eigen_index], size, rng)


def _record(step, loss_value, params, Z, valid) -> TrainRecord:
    rec = TrainRecord(step, loss_value, params.lam, Z)
    if valid is not None and Z not in (None, 0.0):
        psi, grad = predict(params, valid.points)
        for k, v in valid.evaluate(psi, grad, Z, params.lam).items():
            setattr(rec, k, v)
    return rec


def init_params(problem, config: TrainConfig) -> NetworkParams:
    return NetworkParams.init(problem.d, list(config.hidden), config.order, config.lambda_init, config.seed)


def train(
    problem,
    config: TrainConfig,
    params: NetworkParams | None = None,
    callbacks: list[Callable] | None = None,
    resume=None,
    checkpoint_dir=None,
) -> TrainResult:
    """Run ``config.iterations`` steps and return the trained state.

    Records (every ``record_every`` steps, plus step 0) are passed to each
    callback as they are produced. ``resume`` is a checkpoint path.
    """
    callbacks = callbacks or []
    adam = Adam(config.adam_beta1, config.adam_beta2, config.adam_eps)
    start = 0
    Z = None
    if resume is not None:
        params, meta = load_checkpoint(resume)
        start, Z = int(meta["step"]), float(meta["Z"])
        adam.t = int(meta.get("adam_t", 0))
        adam.m, adam.v = dict(meta["adam_m"]), dict(meta["adam_v"])
    elif params is None:
        params = init_params(problem, config)
    norm = NormState(config.gamma, config.Z0, config.eta3, Z)
    valid = validation_set(problem, config)
    history: list[TrainRecord] = []

    def emit(rec):
        history.append(rec)
        for cb in callbacks:
            cb(rec)

    if start == 0:
        Z_init = batch_estimate(predict(params, valid.points)[0]) if valid is not None else None
        emit(_record(0, math.nan, params, Z_init or 1.0, valid))

    for step in range(start + 1, config.iterations + 1):
        batch = sample_batch(problem, config, step)
        loss_value, grads, Z_new, Z_hat = loss_and_grads(params, batch, problem, config, norm.Z, step)
        if Z_hat == 0.0:
            norm.degenerate_batches += 1
        norm.Z = Z_new
        grads = _clip_norm(grads, config.grad_clip_norm)
        frozen = ("lambda",) if step <= config.lambda_freeze_steps else ()
        named = adam.step(params.named(), grads, config.lr(step), frozen)
        params = params.update(named)
        if step % config.record_every == 0 or step == config.iterations:
            emit(_record(step, loss_value, params, norm.Z, valid))
        if checkpoint_dir is not None and config.checkpoint_every and step % config.checkpoint_every == 0:
            save_checkpoint(Path(checkpoint_dir) / "checkpoint.npz", params, Z=norm.Z, step=step, seed=config.seed, adam=adam)

    final_Z = norm.Z if norm.Z is not None else (history[-1].Z if history else 1.0)
    return TrainResult(params, history, final_Z, adam, max(config.iterations, start))


# -- second eigenpair ---------------------------------------------------------------


def fit_heads(params: NetworkParams, problem, psi_target: Callable, grad_target: Callable, config: TrainConfig) -> NetworkParams:
    """Least-squares regression of both heads onto target functions.

    ``grad_target`` returns the plain gradient; it is scaled by sigma here.
    Lambda is left alone.
    """
    adam = Adam(config.adam_beta1, config.adam_beta2, config.adam_eps)
    for step in range(1, config.supervised_steps + 1):
        rng = make_rng(config.seed, step, _STREAM_SUPERVISED)
        x = sample_initial(config.K, problem.d, rng)
        tape = Tape()
        net = params.bind(tape)
        gap = ad.mean(ad.square(net.psi(x) - psi_target(x)))
        ggap = ad.mean(ad.sum(ad.square(net.grad_head(x) - grad_target(x) @ problem.sigma), axis=1))
        total = gap + ggap
        leaves = net.leaves
        g = ad.backward(total, wrt=list(leaves.values()))
        named = adam.step(params.named(), {k: g[v] for k, v in leaves.items()}, config.supervised_lr, ("lambda",))
        params = params.update(named)
    return params


def train_second_eigenpair(problem, config: TrainConfig, lambda_bar: float, init_targets=None, **kw) -> TrainResult:
    """Pre-train the heads with lambda held at ``lambda_bar``, then train jointly.

    ``init_targets`` is an optional ``(psi, grad)`` pair of callables used for
    a supervised warm start before the frozen phase.
    """
    if config.lambda_freeze_steps <= 0:
        raise ValueError("second-eigenpair training needs lambda_freeze_steps > 0")
    params = init_params(problem, config)
    params = NetworkParams(params.d, params.order, params.psi, params.grad, float(lambda_bar))
    if init_targets is not None and config.supervised_steps > 0:
        params = fit_heads(params, problem, init_targets[0], init_targets[1], config)
    return train(problem, config, params=params, **kw)


def mixture_targets(problem, main: int = 1, other: int = 0, eps: float = 0.3, scale: float = 1.0):
    """``scale * (psi_main + eps * psi_other)`` and its gradient, from the known eigenpairs."""
    a, b = problem.eigenpairs[main], problem.eigenpairs[other]

    def psi(x):
        return scale * (a.psi(x) + eps * b.psi(x))

    def grad(x):
        return scale * (a.grad(x) + eps * b.grad(x))

    return psi, grad


# -- output ---------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_history_csv(path, history) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(HISTORY_COLUMNS)
        for rec in history:
            w.writerow([_fmt(v) for v in rec.row()])


def read_history_csv(path) -> list[TrainRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [
        TrainRecord(int(r["step"]), float(r["loss"]), float(r["lambda"]), float(r["Z"]),
                    float(r["err_lambda"]), float(r["err_psi_l2"]), float(r["err_psi_inf"]), float(r["err_grad"]))
        for r in rows
    ]
