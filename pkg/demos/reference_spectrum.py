"""Spectrum of the one-dimensional double well from the Fourier Galerkin solver.

The potential c*cos(2x) has two wells on [0, 2pi], so the two lowest
eigenvalues sit close together. The ratio of the gap to the spread of the
spectrum is what makes the second eigenfunction hard to learn.
"""
import numpy as np

from bsde_eigen import reference

prob = reference.FourierProblem1D(5.0, freq=2, n_modes=32)
spec = reference.spectrum_1d(prob)

for k, pair in enumerate(spec[:4], start=1):
    res = reference.galerkin_residual(pair, 5.0, 2)
    print(f"lambda_{k} = {pair.lam: .6f}   residual {res:.1e}")

print("gap lambda_2 - lambda_1 =", round(spec[1].lam - spec[0].lam, 6))

# the two lowest eigenfunctions on a grid: even ground state, odd partner
x = np.linspace(0, 2 * np.pi, 9)
print("x      ", np.round(x, 3))
print("psi_1  ", np.round(spec[0](x), 3))
print("psi_2  ", np.round(spec[1](x), 3))
