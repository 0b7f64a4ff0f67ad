"""Operator catalogue.

Every operator has the form
``L psi = -1/2 Tr(sigma sigma^T Hess psi) - b . grad psi + f(x, psi, sigma^T grad psi)``
on the periodic box [0, 2 pi]^d. All the examples use ``-Laplacian`` as the
principal part, which forces ``sigma = sqrt(2) I``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import reference


@dataclass(frozen=True)
class KnownEigenpair:
    lam: float
    psi: Callable  # (K, d) -> (K,)
    grad: Callable  # (K, d) -> (K, d), plain gradient (not scaled by sigma)


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    d: int
    sigma: np.ndarray
    potential: Callable  # x -> (K,), the part of f linear in u
    drift: Callable | None = None  # x -> (K, d)
    nonlinear: Callable | None = None  # u (Var or array) -> same; added to f
    eigenpairs: tuple = ()
    params: dict = field(default_factory=dict)

    @property
    def semilinear(self) -> bool:
        return self.nonlinear is not None

    def reaction(self, x, u, z=None):
        """``f(x, u, z) * 1`` evaluated on a batch; ``u`` may be a Var."""
        out = u * self.potential(x)
        if self.nonlinear is not None:
            out = out + self.nonlinear(u)
        return out

    def scaled_grad(self, eigenpair: KnownEigenpair, x) -> np.ndarray:
        """sigma^T grad psi, row-wise."""
        return eigenpair.grad(x) @ self.sigma


def _sigma(d: int) -> np.ndarray:
    # -1/2 Tr(sigma sigma^T H) = -Laplacian  <=>  sigma sigma^T = 2 I
    return np.sqrt(2.0) * np.eye(d)


def _coeffs(c, d: int, lo: float, hi: float) -> np.ndarray:
    if c is None:
        return np.linspace(lo, hi, d)
    c = np.broadcast_to(np.asarray(c, dtype=np.float64), (d,)).copy()
    return c


def fokker_planck(d: int, c=None) -> ProblemSpec:
    """``L psi = -Lap psi - div(psi grad V)`` with ``V = sin(sum c_i cos x_i)``.

    Expanded: drift ``b = grad V`` and reaction ``f = -Lap V``; the ground
    state is ``exp(-V)`` with eigenvalue 0.
    """
    c = _coeffs(c, d, 0.1, 1.0)

    def s(x):
        return np.cos(np.atleast_2d(x)) @ c

    def V(x):
        return np.sin(s(x))

    def grad_V(x):
        x = np.atleast_2d(x)
        return -np.cos(s(x))[:, None] * c * np.sin(x)

    def lap_V(x):
        x = np.atleast_2d(x)
        sv = s(x)
        return -np.cos(sv) * sv - np.sin(sv) * np.sum((c * np.sin(x)) ** 2, axis=1)

    def psi(x):
        return np.exp(-V(x))

    def grad(x):
        return -psi(x)[:, None] * grad_V(x)

    return ProblemSpec(
        name="fokker_planck",
        d=d,
        sigma=_sigma(d),
        potential=lambda x: -lap_V(x),
        drift=grad_V,
        eigenpairs=(KnownEigenpair(0.0, psi, grad),),
        params={"c": c, "V": V, "grad_V": grad_V, "lap_V": lap_V},
    )


def _separable(name: str, d: int, coeffs: np.ndarray, freq: int, n_eigenpairs: int, n_modes: int) -> ProblemSpec:
    def V(x):
        return np.cos(freq * np.atleast_2d(x)) @ coeffs

    pairs = reference.separable_eigenpairs(coeffs, freq=freq, count=n_eigenpairs, n_modes=n_modes)
    known = tuple(KnownEigenpair(p.lam, p.psi, p.grad) for p in pairs)
    return ProblemSpec(
        name=name,
        d=d,
        sigma=_sigma(d),
        potential=V,
        eigenpairs=known,
        params={"coeffs": coeffs, "freq": freq, "tensor_pairs": pairs},
    )


def linear_schrodinger(d: int, c=None, n_eigenpairs: int = 3, n_modes: int = 32) -> ProblemSpec:
    """``-Lap psi + sum c_i cos(x_i) psi``; references from the spectral solver."""
    c = _coeffs(c, d, 0.0, 0.2)
    if np.any((c < 0) | (c > 0.2)):
        warnings.warn("linear Schrodinger coefficients outside [0, 0.2]", stacklevel=2)
    return _separable("linear_schrodinger", d, c, 1, n_eigenpairs, n_modes)


def double_well_schrodinger(d: int, A=None, n_eigenpairs: int = 3, n_modes: int = 32) -> ProblemSpec:
    """``-Lap psi + sum A_i cos(2 x_i) psi``."""
    if A is None:
        A = [5.0] if d == 1 else [1.5] + [0.2] * (d - 1)
    A = np.broadcast_to(np.asarray(A, dtype=np.float64), (d,)).copy()
    return _separable("double_well", d, A, 2, n_eigenpairs, n_modes)


def nls_constant(d: int, n_nodes: int = 64) -> float:
    """Positive ``c`` with ``mean over the box of exp((2/d) sum cos x_j) / c^2 = 1``.

    The integrand factorises, so one Gauss-Legendre rule on [0, 2 pi] suffices.
    """
    t, w = np.polynomial.legendre.leggauss(n_nodes)
    x = np.pi * (t + 1.0)
    one_d = np.sum(w * np.pi * np.exp((2.0 / d) * np.cos(x))) / (2 * np.pi)
    return float(np.sqrt(one_d**d))


def nonlinear_schrodinger(d: int, epsilon: float = 1.0) -> ProblemSpec:
    """``-Lap psi + eps psi^3 + V psi`` with ``V`` built so that ``lam = -3``.

    Eigenfunction ``exp((1/d) sum cos x_j) / c``.
    """
    c = nls_constant(d)

    def s(x):
        return np.mean(np.cos(np.atleast_2d(x)), axis=1)

    def V(x):
        x = np.atleast_2d(x)
        return (
            -np.exp(2.0 * s(x)) / c**2
            + np.sum(np.sin(x) ** 2 / d**2 - np.cos(x) / d, axis=1)
            - 3.0
        )

    def psi(x):
        return np.exp(s(x)) / c

    def grad(x):
        x = np.atleast_2d(x)
        return -psi(x)[:, None] * np.sin(x) / d

    def cubic(u):
        return u * u * u * epsilon

    if epsilon != 1.0:
        warnings.warn("the analytic eigenpair assumes epsilon = 1", stacklevel=2)
    return ProblemSpec(
        name="nonlinear_schrodinger",
        d=d,
        sigma=_sigma(d),
        potential=V,
        nonlinear=cubic,
        eigenpairs=(KnownEigenpair(-3.0, psi, grad),),
        params={"epsilon": epsilon, "c": c},
    )


CATALOGUE = {
    "fokker_planck": fokker_planck,
    "linear_schrodinger": linear_schrodinger,
    "nonlinear_schrodinger": nonlinear_schrodinger,
    "double_well": double_well_schrodinger,
}
