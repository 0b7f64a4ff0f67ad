"""Fourier-Galerkin reference eigenpairs for separable periodic Schrodinger operators.

One dimension: ``-psi'' + c cos(freq x) psi = lam psi`` on [0, 2 pi] with
``psi = sum_{m=-N..N} a_m exp(i m x)``. Galerkin projection gives the real
symmetric system ``H a = lam a`` with ``H[m, m] = m^2`` and ``H[m, m +- freq] = c/2``
(``build_matrix`` returns ``2 H``, the matrix with ``2 n^2`` on the diagonal).

``H`` commutes with the reflection ``m -> -m``; rotating into the cos/sin
basis makes it block diagonal with real blocks, and each block splits again
by ``n mod freq`` into symmetric tridiagonal pieces. Those are solved with
implicit-shift QL. Separable d-dimensional pairs are tensor products.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass
from functools import cached_property

import numpy as np


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class FourierProblem1D:
    c: float
    freq: int = 1
    n_modes: int = 32

    def __post_init__(self):
        if self.n_modes < 1:
            raise ValueError("n_modes must be >= 1")
        if self.freq < 1:
            raise ValueError("freq must be >= 1")

    @property
    def size(self) -> int:
        return 2 * self.n_modes + 1


@dataclass(frozen=True)
class SpectralMatrix:
    """Banded symmetric matrix; rows/cols are modes ``-N..N``."""

    diagonal: np.ndarray
    offdiagonal: np.ndarray  # entries at distance ``freq``
    freq: int

    def dense(self) -> np.ndarray:
        n = len(self.diagonal)
        A = np.diag(self.diagonal).astype(np.float64)
        idx = np.arange(n - self.freq)
        A[idx, idx + self.freq] = self.offdiagonal
        A[idx + self.freq, idx] = self.offdiagonal
        return A


def build_matrix(prob: FourierProblem1D) -> SpectralMatrix:
    """Galerkin matrix whose eigenvalues are ``2 * lam``."""
    n = np.arange(-prob.n_modes, prob.n_modes + 1, dtype=np.float64)
    off = np.full(prob.size - prob.freq, float(prob.c)) if prob.size > prob.freq else np.zeros(0)
    return SpectralMatrix(2.0 * n**2, off, prob.freq)


# -- eigensolvers -------------------------------------------------------------


def tridiag_eigensolve(diag, offdiag, max_iter: int = 50) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of a real symmetric tridiagonal matrix by implicit-shift QL.

    Returns ascending eigenvalues ``w`` and orthonormal eigenvectors as the
    columns of ``V``.
    """
    d = np.array(diag, dtype=np.float64)
    n = len(d)
    if len(offdiag) != max(n - 1, 0):
        raise ValueError("offdiag must have length len(diag) - 1")
    e = np.zeros(n)
    e[: n - 1] = offdiag
    z = np.eye(n)
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) + dd == dd:
                    break
                m += 1
            if m == l:
                break
            if it == max_iter:
                raise ConvergenceError(f"QL did not converge for eigenvalue {l} in {max_iter} sweeps")
            it += 1
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = np.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + np.copysign(r, g))
            s = c = 1.0
            p = 0.0
            i = m - 1
            underflow = False
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = np.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    underflow = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                zi1 = z[:, i + 1].copy()
                z[:, i + 1] = s * z[:, i] + c * zi1
                z[:, i] = c * z[:, i] - s * zi1
                i -= 1
            if underflow:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    order = np.argsort(d, kind="stable")
    return d[order], z[:, order]


def jacobi_eigensolve(A, tol: float = 1e-14, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi rotations on a dense symmetric matrix (slow, robust)."""
    A = np.array(A, dtype=np.float64)
    n = A.shape[0]
    if A.shape != (n, n) or not np.allclose(A, A.T):
        raise ValueError("jacobi_eigensolve needs a square symmetric matrix")
    V = np.eye(n)
    scale = np.linalg.norm(A)
    for _ in range(max_sweeps):
        off = np.linalg.norm(A - np.diag(np.diag(A)))
        if off <= tol * max(scale, 1e-300):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= 1e-18 * scale:
                    A[p, q] = A[q, p] = 0.0
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.copysign(1.0, theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                Ap, Aq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * Ap - s * Aq
                A[:, q] = s * Ap + c * Aq
                Ap, Aq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * Ap - s * Aq
                A[q, :] = s * Ap + c * Aq
                Vp, Vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * Vp - s * Vq
                V[:, q] = s * Vp + c * Vq
    else:
        raise ConvergenceError("Jacobi did not converge")
    w = np.diag(A).copy()
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]


# -- 1-d problem ----------------------------------------------------------------


@dataclass(frozen=True)
class Eigenpair1D:
    """Real eigenfunction ``sum_n alpha_n cos(n x) + beta_n sin(n x)``.

    Normalised so that ``(1/2pi) int psi^2 = 1``; sign chosen so the mean is
    positive (or, for zero-mean functions, the largest coefficient is).
    """

    lam: float
    cos_coeffs: np.ndarray
    sin_coeffs: np.ndarray
    coeffs: np.ndarray  # phase-fixed complex a_m, m = -N..N

    def __call__(self, x):
        return self.derivative(x, 0)

    def derivative(self, x, k: int = 1):
        x = np.asarray(x, dtype=np.float64)
        n = np.arange(len(self.cos_coeffs), dtype=np.float64)
        phase = np.multiply.outer(x, n)
        # d^k/dx^k cos(nx) = n^k cos(nx + k pi/2)
        shift = k * np.pi / 2
        scale = n**k
        return (np.cos(phase + shift) @ (scale * self.cos_coeffs)) + (np.sin(phase + shift) @ (scale * self.sin_coeffs))


def _reflection_basis(n_modes: int) -> tuple[np.ndarray, np.ndarray]:
    """Orthogonal Q whose columns are reflection-even then reflection-odd vectors.

    Also returns ``(parity, n)`` labels per column: parity 0 even, 1 odd.
    """
    N = n_modes
    size = 2 * N + 1
    Q = np.zeros((size, size))
    labels = []
    Q[N, 0] = 1.0
    labels.append((0, 0))
    col = 1
    r = 1.0 / np.sqrt(2.0)
    for n in range(1, N + 1):
        Q[N + n, col] = Q[N - n, col] = r
        labels.append((0, n))
        col += 1
    for n in range(1, N + 1):
        Q[N + n, col] = r
        Q[N - n, col] = -r
        labels.append((1, n))
        col += 1
    return Q, np.array(labels)


def _components(B: np.ndarray, tol: float) -> list[list[int]]:
    n = B.shape[0]
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    rows, cols = np.nonzero(np.abs(B) > tol)
    for i, j in zip(rows, cols):
        if i != j:
            parent[find(i)] = find(j)
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return list(groups.values())


def _realize(lam: float, a: np.ndarray, parity: int, N: int) -> Eigenpair1D:
    a_pos = a[N:]  # m = 0..N
    alpha = np.zeros(N + 1)
    beta = np.zeros(N + 1)
    if parity == 0:
        alpha[0] = a_pos[0]
        alpha[1:] = 2.0 * a_pos[1:]
        coeffs = a.astype(np.complex128)
    else:
        # sum a_m e^{imx} = 2i sum a_m sin(mx); multiply by -i
        beta[1:] = 2.0 * a_pos[1:]
        coeffs = -1j * a.astype(np.complex128)
    if abs(alpha[0]) > 1e-12:
        sign = np.sign(alpha[0])
    else:
        flat = np.concatenate([alpha, beta])
        sign = np.sign(flat[np.argmax(np.abs(flat))])
    return Eigenpair1D(float(lam), sign * alpha, sign * beta, sign * coeffs)


def spectrum_1d(prob: FourierProblem1D) -> list[Eigenpair1D]:
    """All ``2N+1`` Galerkin eigenpairs, ascending in ``lam``."""
    N = prob.n_modes
    H = build_matrix(prob).dense() / 2.0
    Q, labels = _reflection_basis(N)
    B = Q.T @ H @ Q
    tol = 1e-13 * max(np.abs(B).max(), 1.0)
    found = []
    for comp in _components(B, tol):
        comp = sorted(comp, key=lambda i: (labels[i][0], labels[i][1]))
        block = B[np.ix_(comp, comp)]
        banded = np.triu(block, 2)
        if np.abs(banded).max(initial=0.0) > tol:
            raise RuntimeError("reflection block is not tridiagonal")
        w, V = tridiag_eigensolve(np.diag(block), np.diag(block, 1))
        parity = labels[comp[0]][0]
        for lam, v in zip(w, V.T):
            full = np.zeros(prob.size)
            full[comp] = v
            found.append((lam, Q @ full, parity))
    found.sort(key=lambda t: t[0])
    return [_realize(lam, a, parity, N) for lam, a, parity in found]


def solve_1d(prob: FourierProblem1D, k: int = 0) -> Eigenpair1D:
    """The ``k``-th smallest eigenpair (``k = 0`` is the ground state)."""
    if not 0 <= k < prob.size:
        raise IndexError(f"k must lie in [0, {prob.size}), got {k}")
    return spectrum_1d(prob)[k]


def galerkin_residual(pair: Eigenpair1D, c: float, freq: int = 1, n_points: int = 4096) -> float:
    """Periodic trapezoid estimate of ``int |-psi'' + c cos(freq x) psi - lam psi|^2``."""
    x = np.linspace(0.0, 2 * np.pi, n_points, endpoint=False)
    r = -pair.derivative(x, 2) + c * np.cos(freq * x) * pair(x) - pair.lam * pair(x)
    return float(2 * np.pi * np.mean(r**2))


# -- tensor products --------------------------------------------------------------


@dataclass(frozen=True)
class TensorEigenpair:
    """``lam = sum lam_j``, ``psi(x) = prod psi_j(x_j)``."""

    factors: tuple

    @cached_property
    def lam(self) -> float:
        return float(np.sum([f.lam for f in self.factors]))

    def psi(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        vals = np.stack([f(x[:, j]) for j, f in enumerate(self.factors)], axis=1)
        return np.prod(vals, axis=1)

    def grad(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        vals = np.stack([f(x[:, j]) for j, f in enumerate(self.factors)], axis=1)
        ders = np.stack([f.derivative(x[:, j]) for j, f in enumerate(self.factors)], axis=1)
        d = vals.shape[1]
        out = np.empty_like(vals)
        for i in range(d):
            others = np.prod(np.delete(vals, i, axis=1), axis=1) if d > 1 else 1.0
            out[:, i] = ders[:, i] * others
        return out

    def laplacian(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        vals = np.stack([f(x[:, j]) for j, f in enumerate(self.factors)], axis=1)
        sec = np.stack([f.derivative(x[:, j], 2) for j, f in enumerate(self.factors)], axis=1)
        d = vals.shape[1]
        total = np.zeros(x.shape[0])
        for i in range(d):
            others = np.prod(np.delete(vals, i, axis=1), axis=1) if d > 1 else 1.0
            total += sec[:, i] * others
        return total


def assemble_tensor_product(pairs, selection) -> TensorEigenpair:
    """Pick ``pairs[j][selection[j]]`` in each dimension."""
    if len(pairs) != len(selection):
        raise ValueError("need one selection index per dimension")
    return TensorEigenpair(tuple(p[s] for p, s in zip(pairs, selection)))


def lowest_tensor_eigenpairs(pairs, count: int) -> list[TensorEigenpair]:
    """The ``count`` smallest separable eigenpairs, by best-first search over index tuples."""
    d = len(pairs)
    lams = [np.array([p.lam for p in dim]) for dim in pairs]
    start = (0,) * d
    heap = [(float(sum(l[0] for l in lams)), start)]
    seen = {start}
    out = []
    while heap and len(out) < count:
        lam, sel = heapq.heappop(heap)
        out.append(assemble_tensor_product(pairs, sel))
        for j in range(d):
            if sel[j] + 1 < len(lams[j]):
                nxt = sel[:j] + (sel[j] + 1,) + sel[j + 1 :]
                if nxt not in seen:
                    seen.add(nxt)
                    heapq.heappush(heap, (lam - lams[j][sel[j]] + lams[j][sel[j] + 1], nxt))
    return out


def separable_eigenpairs(coeffs, freq: int = 1, count: int = 3, n_modes: int = 32) -> list[TensorEigenpair]:
    """Lowest eigenpairs of ``-Laplacian + sum_j coeffs[j] cos(freq x_j)``."""
    cache: dict[float, list[Eigenpair1D]] = {}
    per_dim = []
    for c in np.atleast_1d(coeffs):
        c = float(c)
        if c not in cache:
            cache[c] = spectrum_1d(FourierProblem1D(c, freq, n_modes))[: max(count, 2)]
        per_dim.append(cache[c])
    return lowest_tensor_eigenpairs(per_dim, count)
