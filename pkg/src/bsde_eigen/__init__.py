"""Neural fixed-point eigensolver for periodic second-order operators.

The eigenfunction and its scaled gradient are two MLPs on trigonometric
features; training matches the network at the end of Euler-Maruyama paths
against the Feynman-Kac propagation of the network from the start of the
paths. A spectral solver supplies reference eigenpairs for separable
potentials.
"""
from . import autodiff, metrics, network, normalization, problems, reference, sde, trainer
from .problems import (
    double_well_schrodinger,
    fokker_planck,
    linear_schrodinger,
    nonlinear_schrodinger,
)
from .trainer import TrainConfig, train, train_second_eigenpair

__all__ = [
    "autodiff",
    "metrics",
    "network",
    "normalization",
    "problems",
    "reference",
    "sde",
    "trainer",
    "TrainConfig",
    "train",
    "train_second_eigenpair",
    "fokker_planck",
    "linear_schrodinger",
    "nonlinear_schrodinger",
    "double_well_schrodinger",
]

__version__ = "0.1.0"
