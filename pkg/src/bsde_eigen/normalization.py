"""Signed-RMS normalisation constant, its moving average, and the hinge penalty."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Var


@dataclass(frozen=True)
class PiecewiseConstant:
    """Right-continuous step schedule.

    ``values[i]`` applies for ``boundaries[i-1] < step <= boundaries[i]`` with
    1-based steps, so boundaries ``[30000, 60000]`` mean the first value for
    steps 1..30000 and the second from step 30001.
    """

    values: tuple
    boundaries: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        object.__setattr__(self, "boundaries", tuple(int(b) for b in self.boundaries))
        if len(self.values) != len(self.boundaries) + 1:
            raise ValueError("need len(values) == len(boundaries) + 1")
        if list(self.boundaries) != sorted(self.boundaries):
            raise ValueError("boundaries must be non-decreasing")

    def __call__(self, step: int) -> float:
        return self.values[int(np.searchsorted(self.boundaries, step, side="left"))]

    def scaled(self, factor: float) -> "PiecewiseConstant":
        return PiecewiseConstant(self.values, tuple(max(1, int(round(b * factor))) for b in self.boundaries))


def batch_estimate(psi_values) -> float:
    """``sgn(sum v) * sqrt(mean v^2)``; exactly 0 when the sum is 0."""
    v = np.asarray(psi_values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("need at least one value")
    return float(np.sign(v.sum()) * np.sqrt(np.mean(v * v)))


def batch_estimate_var(psi_values: Var) -> Var:
    """Differentiable twin of :func:`batch_estimate`; the sign is held constant."""
    sign = float(np.sign(psi_values.value.sum()))
    return ad.sqrt(ad.mean(ad.square(psi_values))) * sign


@dataclass
class NormState:
    gamma: PiecewiseConstant
    Z0: float = 2.0
    eta3: float = 100.0
    Z: float | None = None
    degenerate_batches: int = 0

    def update(self, Z_hat: float, step: int) -> float:
        """Moving-average update; returns the new ``Z``.

        The first call adopts ``Z_hat`` outright. A zero ``Z_hat`` (batch sum
        exactly 0) leaves ``Z`` unchanged.
        """
        if step < 1:
            raise ValueError("steps are 1-based")
        if Z_hat == 0.0:
            self.degenerate_batches += 1
            if self.Z is None:
                self.Z = self.Z0
            return self.Z
        self.Z = update_moving_average(self.Z, Z_hat, self.gamma(step))
        return self.Z


def update_moving_average(Z_prev, Z_hat, gamma: float):
    if Z_prev is None:
        return Z_hat
    return gamma * Z_prev + (1.0 - gamma) * Z_hat


def hinge_penalty(Z, Z0: float = 2.0, eta3: float = 100.0):
    """``eta3 * max(Z0 - Z, 0)``; accepts floats or Vars."""
    if isinstance(Z, Var):
        return ad.relu(Z0 - Z) * eta3
    return eta3 * max(Z0 - float(Z), 0.0)
