"""Euler-Maruyama paths and the coupled propagation of the eigenfunction value.

Forward:   X_{n+1} = X_n + sigma dW_n
Value:     U_{n+1} = U_n + (f(X_n, U_n) - lam U_n - b(X_n) . sigma^{-T} G_n) dt_n + G_n . dW_n

where ``G_n`` is the scaled-gradient head at ``X_n``. Semilinear problems
clip ``U`` into ``[P, Q]`` after every step. Paths are not wrapped back
into the box; every coefficient is 2 pi-periodic so wrapping changes nothing.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Var


class PropagationError(FloatingPointError):
    def __init__(self, step: int, message: str = "non-finite value in propagation"):
        super().__init__(f"{message} at time step {step}")
        self.step = step


@dataclass(frozen=True)
class TimeGrid:
    T: float
    N: int

    def __post_init__(self):
        if self.T <= 0 or self.N < 1:
            raise ValueError("need T > 0 and N >= 1")

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.N + 1)

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.times)


@dataclass(frozen=True)
class ClipBounds:
    P: float = -5.0
    Q: float = 5.0

    def __post_init__(self):
        if not self.P < self.Q:
            raise ValueError("clip bounds need P < Q")


@dataclass
class PathBatch:
    X: np.ndarray  # (K, N+1, d)
    dW: np.ndarray  # (K, N, d)
    dt: np.ndarray  # (N,)
    U: list = field(default_factory=list)
    clip_hits: int = 0

    @property
    def K(self) -> int:
        return self.X.shape[0]

    @property
    def N(self) -> int:
        return self.dW.shape[1]

    @property
    def d(self) -> int:
        return self.X.shape[2]

    def time_major(self) -> np.ndarray:
        """All states stacked as ``((N+1) K, d)``; rows ``n K .. (n+1) K`` are time n."""
        return self.X.transpose(1, 0, 2).reshape(-1, self.d)


def make_rng(seed: int, step: int = 0, stream: int = 0) -> np.random.Generator:
    """Counter-based generator keyed by ``(seed, step, stream)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, step, stream])))


def sample_initial(K: int, d: int, rng: np.random.Generator) -> np.ndarray:
    if K < 1:
        raise ValueError("K must be >= 1")
    return rng.uniform(0.0, 2 * np.pi, size=(K, d))


def simulate_forward(x0: np.ndarray, grid: TimeGrid, sigma: np.ndarray, rng: np.random.Generator, dW=None) -> PathBatch:
    x0 = np.atleast_2d(x0)
    K, d = x0.shape
    sigma = np.asarray(sigma, dtype=np.float64)
    if abs(np.linalg.det(sigma)) < 1e-300:
        raise ValueError("sigma must be invertible")
    dt = grid.dt
    if dW is None:
        dW = rng.standard_normal((K, grid.N, d)) * np.sqrt(dt)[None, :, None]
    steps = dW @ sigma.T
    X = np.empty((K, grid.N + 1, d))
    X[:, 0] = x0
    X[:, 1:] = x0[:, None, :] + np.cumsum(steps, axis=1)
    return PathBatch(X, dW, dt)


def propagate(batch: PathBatch, u0, grad_values, lam, problem, bounds: ClipBounds | None = None):
    """Run the value recursion; returns ``U_T`` and stores every ``U_n`` on ``batch``.

    ``grad_values`` is the scaled-gradient field on ``batch.time_major()``
    (at least the first ``N K`` rows). Vars are recorded; arrays pass through.
    """
    K, N, d = batch.K, batch.N, batch.d
    states = batch.time_major()[: N * K]
    dt = batch.dt[:, None]
    pot = problem.potential(states).reshape(N, K)
    # u-independent parts for all steps at once: noise and drift contributions
    G = grad_values[: N * K]
    dW = batch.dW.transpose(1, 0, 2).reshape(N * K, d)
    shift = ad.sum(G * dW, axis=1)
    if problem.drift is not None:
        drift = problem.drift(states)
        sigma_inv = np.linalg.inv(problem.sigma)
        shift = shift - ad.sum((G @ sigma_inv) * drift, axis=1) * np.repeat(batch.dt, K)
    shift = ad.reshape(shift, (N, K))
    growth = (pot - lam) * dt + 1.0  # (N, K): multiplier of u in the linear part
    u = ad.as_var(u0)
    batch.U = [u]
    batch.clip_hits = 0
    for n in range(N):
        nxt = u * growth[n] + shift[n]
        if problem.semilinear:
            nxt = nxt + problem.nonlinear(u) * batch.dt[n]
        u = nxt
        if bounds is not None:
            batch.clip_hits += int(np.count_nonzero((u.value < bounds.P) | (u.value > bounds.Q)))
            u = ad.clip(u, bounds.P, bounds.Q)
        if not np.all(np.isfinite(u.value)):
            raise PropagationError(n)
        batch.U.append(u)
    return u


def propagate_linear(batch: PathBatch, net, problem, Z):
    """Value recursion driven by a bound network, started from ``psi(X_0) / Z``.

    Returns ``(U_T, grad_values)``; the latter covers all ``N+1`` times so the
    terminal slice can be reused by the loss.
    """
    return _propagate_net(batch, net, problem, Z, None)


def propagate_semilinear(batch: PathBatch, net, problem, Z, bounds: ClipBounds):
    return _propagate_net(batch, net, problem, Z, bounds)


def _propagate_net(batch, net, problem, Z, bounds):
    u0 = net.psi(batch.X[:, 0]) / Z
    G = net.grad_head(batch.time_major())
    return propagate(batch, u0, G, net.lam, problem, bounds), G


def terminal_residual(problem, eigenpair, grid: TimeGrid, K: int, rng, bounds=None) -> float:
    """Mean ``|U_T - psi(X_T)|`` with the exact eigenpair substituted for both heads."""
    x0 = sample_initial(K, problem.d, rng)
    batch = simulate_forward(x0, grid, problem.sigma, rng)
    states = batch.time_major()
    G = eigenpair.grad(states) @ problem.sigma
    u_T = propagate(batch, eigenpair.psi(batch.X[:, 0]), G, eigenpair.lam, problem, bounds)
    return float(np.mean(np.abs(u_T.value - eigenpair.psi(batch.X[:, -1]))))
