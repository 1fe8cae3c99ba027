"""Theta-scheme steps for the linear substrate and density equations

    c_t + div(c v) = Lap c - m c,           c = 0 on the boundary,
    n_t + div(n v) = Lap n - div(n grad c), n = 0 on the boundary.

Diffusion (and the reaction -m c) are implicit with weight theta; the
advective and chemotactic fluxes are explicit in conservative face form.
Each step is a single SPD solve on the interior nodes.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import grid as G
from .errors import ValidationError
from .linalg import dirichlet_laplacian, embed, interior, pcg

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ParabolicStepConfig:
    dt: float
    theta: float = 1.0
    tol_lin: float = 1e-12
    max_iter: int = 5000
    cfl_safety: float = 0.5
    tol_neg: float = 1e-10

    def __post_init__(self):
        if not self.dt > 0:
            raise ValidationError(f"dt must be positive, got {self.dt}", key="dt")
        if not 0.5 <= self.theta <= 1.0:
            raise ValidationError(f"theta must lie in [1/2, 1], got {self.theta}", key="theta")
        if not self.tol_lin > 0:
            raise ValidationError(f"tol_lin must be positive, got {self.tol_lin}", key="tol_lin")


def advective_flux_divergence(grid: G.Grid2D, f: np.ndarray, v: np.ndarray) -> np.ndarray:
    """div(f v) from face-averaged fluxes."""
    return G.flux_divergence(grid, G.face_average(f * v[0], 0), G.face_average(f * v[1], 1))


def chemotactic_flux_divergence(grid: G.Grid2D, n: np.ndarray, c: np.ndarray) -> np.ndarray:
    """div(n grad c) with face flux avg(n) * (c_{i+1} - c_i) / dx."""
    dx = grid.dx
    fx = G.face_average(n, 0) * G.face_difference(c, dx, 0)
    fy = G.face_average(n, 1) * G.face_difference(c, dx, 1)
    return G.flux_divergence(grid, fx, fy)


def substeps(dt: float, speed: float, dx: float, safety: float) -> int:
    """Number of equal substeps keeping dt * speed <= safety * dx."""
    if speed <= 0:
        return 1
    return max(1, math.ceil(dt * speed / (safety * dx) - 1e-12))


def _theta_step(grid, f, explicit, reaction, dt, cfg, source):
    lap = dirichlet_laplacian(grid)
    fi = interior(f)
    n_int = fi.size
    react = np.zeros(n_int) if reaction is None else interior(reaction)
    op = -lap + sp.diags(react)
    A = sp.identity(n_int, format="csr") + cfg.theta * dt * op
    rhs = fi - (1.0 - cfg.theta) * dt * (op @ fi) - dt * interior(explicit)
    if source is not None:
        rhs = rhs + dt * interior(source)
    x, _ = pcg(A.tocsr(), rhs, x0=None, tol=cfg.tol_lin, maxiter=cfg.max_iter)
    return embed(grid, x)


def _check_sign(name, f, tol_neg, scale):
    lo = float(f.min())
    if lo < -tol_neg * max(1.0, scale):
        log.warning("%s undershoot %.3e below zero (not clipped)", name, lo)


def advance_c(grid: G.Grid2D, c: np.ndarray, v: np.ndarray, m: np.ndarray,
              cfg: ParabolicStepConfig, source: np.ndarray | None = None) -> np.ndarray:
    """One step of c_t = Lap c - div(c v) - m c (+ source) with c = 0 on the boundary."""
    c = grid.check(c)
    speed = float(G.magnitude(v).max())
    k = substeps(cfg.dt, speed, grid.dx, cfg.cfl_safety)
    if k > 1:
        log.info("advance_c: CFL fallback with %d substeps", k)
    h = cfg.dt / k
    for _ in range(k):
        c = _theta_step(grid, c, advective_flux_divergence(grid, c, v), m, h, cfg, source)
    _check_sign("c", c, cfg.tol_neg, float(np.abs(c).max()))
    return c


def advance_n(grid: G.Grid2D, n: np.ndarray, v: np.ndarray, c: np.ndarray,
              cfg: ParabolicStepConfig, source: np.ndarray | None = None) -> np.ndarray:
    """One step of n_t = Lap n - div(n v) - div(n grad c) (+ source), n = 0 on the boundary.

    ``c`` is the substrate already advanced to the new time level.
    """
    n = grid.check(n)
    speed = float(G.magnitude(v).max() + G.magnitude(G.gradient(grid, c)).max())
    k = substeps(cfg.dt, speed, grid.dx, cfg.cfl_safety)
    if k > 1:
        log.info("advance_n: CFL fallback with %d substeps", k)
    h = cfg.dt / k
    for _ in range(k):
        flux = advective_flux_divergence(grid, n, v) + chemotactic_flux_divergence(grid, n, c)
        n = _theta_step(grid, n, flux, None, h, cfg, source)
    _check_sign("n", n, cfg.tol_neg, float(np.abs(n).max()))
    return n
