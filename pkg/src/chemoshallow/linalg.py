"""Sparse operators on the interior nodes of a Dirichlet problem and a
Jacobi-preconditioned conjugate gradient solver.

Unknowns are the (N-2)^2 interior nodes in row-major order; boundary nodes
carry homogeneous Dirichlet data and never enter the matrices.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .errors import SolverError
from .grid import Grid2D


def interior(f: np.ndarray) -> np.ndarray:
    """Flattened interior values of a (..., N, N) field."""
    f = np.asarray(f)
    return f[..., 1:-1, 1:-1].reshape(*f.shape[:-2], -1)


def embed(grid: Grid2D, x: np.ndarray) -> np.ndarray:
    """Inverse of :func:`interior`: pad with zero boundary values."""
    n = grid.N - 2
    x = np.asarray(x)
    lead = x.shape[:-1]
    out = np.zeros((*lead, grid.N, grid.N))
    out[..., 1:-1, 1:-1] = x.reshape(*lead, n, n)
    return out


@lru_cache(maxsize=16)
def dirichlet_laplacian(grid: Grid2D) -> sp.csr_matrix:
    """Five-point Laplacian on interior nodes with zero boundary values."""
    n = grid.N - 2
    d = sp.diags([np.ones(n - 1), -2.0 * np.ones(n), np.ones(n - 1)], [-1, 0, 1])
    eye = sp.identity(n)
    return ((sp.kron(d, eye) + sp.kron(eye, d)) / grid.dx**2).tocsr()


@lru_cache(maxsize=16)
def cell_divergence(grid: Grid2D) -> sp.csr_matrix:
    """Divergence on the (N-1)^2 cell centres from interior nodal (u1, u2).

    Each cell averages the two edge differences in each direction; boundary
    nodes are zero and drop out. ``D.T @ D`` is then a symmetric positive
    semidefinite discretization of -grad div.
    """
    N = grid.N
    diff = sp.diags([-np.ones(N - 1), np.ones(N - 1)], [0, 1], shape=(N - 1, N)).tocsc()[:, 1:-1]
    avg = sp.diags([0.5 * np.ones(N - 1), 0.5 * np.ones(N - 1)], [0, 1], shape=(N - 1, N)).tocsc()[:, 1:-1]
    return (sp.hstack([sp.kron(diff, avg), sp.kron(avg, diff)]) / grid.dx).tocsr()


@lru_cache(maxsize=16)
def _lame_parts(grid: Grid2D):
    lap = dirichlet_laplacian(grid)
    D = cell_divergence(grid)
    return sp.block_diag([-lap, -lap]).tocsr(), (D.T @ D).tocsr()


def lame_matrix(grid: Grid2D, mu: float, lam: float) -> sp.csr_matrix:
    """Symmetric positive definite Lame operator -mu Lap - (mu + lam) grad div
    on the stacked interior unknowns (u1, u2)."""
    neg_lap, grad_div = _lame_parts(grid)
    return (mu * neg_lap + (mu + lam) * grad_div).tocsr()


@dataclass
class CGInfo:
    iterations: int = 0
    residual: float = 0.0
    converged: bool = True
    energy: list = field(default_factory=list)


def pcg(A, b: np.ndarray, x0: np.ndarray | None = None, tol: float = 1e-12,
        maxiter: int = 5000, diag: np.ndarray | None = None) -> tuple[np.ndarray, CGInfo]:
    """Preconditioned CG for SPD ``A`` with a Jacobi preconditioner.

    Stops when ||b - A x|| <= tol * ||b||. The quadratic energy
    J(x) = x.A x / 2 - b.x is recorded per iteration; a non-positive
    curvature p.A p means A is not SPD and raises :class:`SolverError`.
    """
    b = np.asarray(b, dtype=float)
    info = CGInfo()
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros_like(b), info
    if diag is None:
        diag = A.diagonal()
    inv_d = 1.0 / diag
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x if x0 is not None else b.copy()
    z = inv_d * r
    p = z.copy()
    rz = float(r @ z)
    info.energy.append(-0.5 * float(x @ (b + r)))
    target = tol * bnorm
    rnorm = float(np.linalg.norm(r))
    k = 0
    while rnorm > target:
        if k >= maxiter:
            info.converged = False
            info.iterations, info.residual = k, rnorm / bnorm
            raise SolverError(
                f"CG did not converge in {maxiter} iterations (rel. residual {rnorm / bnorm:.3e})",
                residual=rnorm / bnorm, iterations=k,
            )
        Ap = A @ p
        curv = float(p @ Ap)
        if not curv > 0:
            raise SolverError(f"non-positive curvature {curv:.3e}: operator not SPD",
                              residual=rnorm / bnorm, iterations=k)
        step = rz / curv
        x += step * p
        r -= step * Ap
        # exact CG energy decrease is step * rz / 2 > 0
        info.energy.append(info.energy[-1] - 0.5 * step * rz)
        z = inv_d * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
        rnorm = float(np.linalg.norm(r))
        k += 1
    info.iterations, info.residual = k, rnorm / bnorm
    return x, info
