"""Degenerate linear momentum step

    h u_t + h v . grad u + L u + h^2 grad n + 1/2 (1 + n) grad h^2 = 0,   u = 0 on the boundary,

with the Lame operator L = -mu Lap - (mu + lam) grad div. Mass and Lame terms
are implicit, v . grad u is explicit. The two velocity components form one
coupled SPD system ordered [u1 interior | u2 interior]; the grad-div block
comes from a cell-centred divergence D as D^T D, so the off-diagonal blocks
couple the components symmetrically.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import grid as G
from .errors import SolverError, ValidationError, VacuumError
from .linalg import embed, interior, lame_matrix, pcg
from .parabolic import substeps

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MomentumStepConfig:
    dt: float
    tol_lin: float = 1e-12
    max_iter: int = 20000
    cfl_safety: float = 0.5

    def __post_init__(self):
        if not self.dt > 0:
            raise ValidationError(f"dt must be positive, got {self.dt}", key="dt")


def lame_apply(grid: G.Grid2D, u: np.ndarray, params) -> np.ndarray:
    """-mu Lap u - (mu + lam) grad div u with the grid stencils."""
    u = grid.check(u)
    lap = np.stack([G.laplacian(grid, u[0]), G.laplacian(grid, u[1])])
    return -params.mu * lap - (params.mu + params.lam) * G.gradient(grid, G.divergence(grid, u))


def convective(grid: G.Grid2D, v: np.ndarray, u: np.ndarray) -> np.ndarray:
    """(v . grad) u."""
    return np.einsum("a...,ab...->b...", v, G.gradient(grid, u))


def pressure_force(grid: G.Grid2D, h: np.ndarray, n: np.ndarray) -> np.ndarray:
    """h^2 grad n + 1/2 (1 + n) grad h^2."""
    return h**2 * G.gradient(grid, n) + 0.5 * (1.0 + n) * G.gradient(grid, h**2)


def solve_lame(grid: G.Grid2D, force: np.ndarray, params, tol: float = 1e-12) -> np.ndarray:
    """u with zero boundary values solving the discrete L u = force."""
    A = lame_matrix(grid, params.mu, params.lam)
    x, _ = pcg(A, interior(force).ravel(), tol=tol, maxiter=20000)
    return embed(grid, x.reshape(2, -1))


def _check_floor(h, h_floor):
    k = int(np.argmin(h))
    lo = float(h.flat[k])
    if not lo >= h_floor or not lo > 0:
        node = np.unravel_index(k, h.shape)
        raise VacuumError(f"height {lo:.3e} at node {node} is below the floor {h_floor:.3e}",
                          node=node, value=lo)


def advance_u(grid: G.Grid2D, u: np.ndarray, h: np.ndarray, n: np.ndarray, v: np.ndarray,
              params, cfg: MomentumStepConfig, h_floor: float = 0.0,
              forcing: np.ndarray | None = None) -> np.ndarray:
    """Backward-Euler step of (h I + dt L) u_new = h u - dt (h v . grad u + F).

    ``h`` (and ``n``) are taken at the new time level. ``F`` defaults to the
    pressure force h^2 grad n + 1/2 (1 + n) grad h^2; pass ``forcing`` to
    override it. Raises :class:`VacuumError` if h drops below ``h_floor``.
    """
    u = grid.check(u)
    h = grid.check(h)
    _check_floor(h, h_floor)
    F = pressure_force(grid, h, n) if forcing is None else forcing
    A = lame_matrix(grid, params.mu, params.lam)
    hi = interior(h)
    mass = np.concatenate([hi, hi])
    speed = float(G.magnitude(v).max())
    k = substeps(cfg.dt, speed, grid.dx, cfg.cfl_safety)
    if k > 1:
        log.info("advance_u: CFL fallback with %d substeps", k)
    dt = cfg.dt / k
    M = (sp.diags(mass) + dt * A).tocsr()
    for _ in range(k):
        rhs = mass * interior(u).ravel() - dt * interior(h * convective(grid, v, u) + F).ravel()
        x, info = pcg(M, rhs, tol=cfg.tol_lin, maxiter=cfg.max_iter)
        if len(info.energy) > 1 and np.any(np.diff(info.energy) > 0):
            raise SolverError("CG energy increased: momentum operator not coercive",
                              residual=info.residual, iterations=info.iterations)
        u = embed(grid, x.reshape(2, -1))
    return u
