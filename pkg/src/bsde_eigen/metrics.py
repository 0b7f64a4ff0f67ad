"""Validation errors and density-of-psi histograms."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _rms(a) -> float:
    return float(np.sqrt(np.mean(np.square(a))))


def _normalized_ref(net_values, Z, ref_values):
    ref = np.asarray(ref_values, dtype=np.float64)
    scale = _rms(ref)
    if scale == 0.0:
        raise ValueError("reference values have zero RMS")
    net = np.asarray(net_values, dtype=np.float64) / Z
    ref = ref / scale
    # eigenfunction sign is a gauge
    if np.dot(net, ref) < 0:
        ref = -ref
    return net, ref


def err_psi_l2(net_values, Z, ref_values) -> float:
    net, ref = _normalized_ref(net_values, Z, ref_values)
    return _rms(net - ref)


def err_psi_inf(net_values, Z, ref_values) -> float:
    net, ref = _normalized_ref(net_values, Z, ref_values)
    return float(np.max(np.abs(net - ref)))


def err_grad(net_grad, ref_grad) -> float:
    """Both (K, d) fields scaled to unit RMS, then the RMS of the difference."""
    a = np.asarray(net_grad, dtype=np.float64)
    b = np.asarray(ref_grad, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    ra, rb = _rms(a), _rms(b)
    if ra == 0.0 or rb == 0.0:
        raise ValueError("gradient field has zero RMS")
    return _rms(a / ra - b / rb)


@dataclass
class ValidationSet:
    points: np.ndarray
    psi: np.ndarray
    scaled_grad: np.ndarray
    lam: float

    @classmethod
    def build(cls, problem, eigenpair, K: int, rng):
        x = rng.uniform(0.0, 2 * np.pi, size=(K, problem.d))
        return cls(x, eigenpair.psi(x), eigenpair.grad(x) @ problem.sigma, float(eigenpair.lam))

    def evaluate(self, psi_values, grad_values, Z: float, lam: float) -> dict:
        return {
            "err_lambda": abs(lam - self.lam),
            "err_psi_l2": err_psi_l2(psi_values, Z, self.psi),
            "err_psi_inf": err_psi_inf(psi_values, Z, self.psi),
            "err_grad": err_grad(grad_values, self.scaled_grad),
        }


@dataclass
class DensityHistogram:
    edges: np.ndarray
    density: np.ndarray
    counts: np.ndarray

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    def mass(self) -> float:
        return float(np.sum(self.density * np.diff(self.edges)))


def density(values, bins=100, value_range=None) -> DensityHistogram:
    """Histogram of sampled ``psi(X)`` normalised to a probability density.

    A constant sample lands in a single bin of unit width around the value.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("need at least one sample")
    lo, hi = value_range if value_range is not None else (v.min(), v.max())
    if hi <= lo:
        lo, hi = lo - 0.5, hi + 0.5
    counts, edges = np.histogram(v, bins=bins, range=(lo, hi))
    dens = counts / (counts.sum() * np.diff(edges))
    return DensityHistogram(edges, dens, counts)


def density_pair(net_values, ref_values, bins: int = 100):
    """Net and reference histograms over a shared range."""
    both = np.concatenate([np.ravel(net_values), np.ravel(ref_values)])
    rng = (both.min(), both.max())
    return density(net_values, bins, rng), density(ref_values, bins, rng)


def l1_distance(a: DensityHistogram, b: DensityHistogram) -> float:
    if not np.array_equal(a.edges, b.edges):
        raise ValueError("histograms must share bin edges")
    return float(np.sum(np.abs(a.density - b.density) * np.diff(a.edges)))


def smooth(series, window: int = 10) -> np.ndarray:
    """Trailing moving average; the first ``window-1`` entries average what is available."""
    if window < 1:
        raise ValueError("window must be >= 1")
    s = np.asarray(series, dtype=np.float64)
    csum = np.cumsum(np.insert(s, 0, 0.0))
    idx = np.arange(1, len(s) + 1)
    lo = np.maximum(idx - window, 0)
    return (csum[idx] - csum[lo]) / (idx - lo)
