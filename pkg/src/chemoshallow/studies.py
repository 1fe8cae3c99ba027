"""Self-contained numerical studies used by the CLI study modes: stencil and
manufactured-solution convergence, the inequality batteries and the
regularization-radius continuation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import diagnostics as D
from . import grid as G
from .fixedpoint import FixedPointConfig, run_fixed_point
from .momentum import MomentumStepConfig, advance_u, lame_apply
from .parabolic import ParabolicStepConfig, advance_n
from .params import PhysicalParams, cutoff_profile


def observed_orders(errors) -> list[float]:
    e = np.asarray(errors, dtype=float)
    return [float(math.log2(a / b)) for a, b in zip(e[:-1], e[1:])]


# ---------------------------------------------------------------------------
# stencils

def stencil_errors(N_list=(33, 65, 129), L: float = math.pi) -> dict:
    """Max-norm errors of gradient, divergence and Laplacian on
    f = sin(x) cos(y) and w = (f, f)."""
    out = {"gradient": [], "divergence": [], "laplacian": []}
    for N in N_list:
        grid = G.make_grid(L, N)
        X, Y = grid.mesh
        f = np.sin(X) * np.cos(Y)
        fx, fy = np.cos(X) * np.cos(Y), -np.sin(X) * np.sin(Y)
        out["gradient"].append(float(np.abs(G.gradient(grid, f) - np.stack([fx, fy])).max()))
        out["divergence"].append(float(np.abs(G.divergence(grid, np.stack([f, f])) - (fx + fy)).max()))
        out["laplacian"].append(float(np.abs(G.laplacian(grid, f) + 2.0 * f).max()))
    return out


# ---------------------------------------------------------------------------
# manufactured solutions on [-L, L]^2 with b = cos(kx) cos(ky), k = pi / (2L)

def _mode(grid):
    k = math.pi / (2.0 * grid.L)
    X, Y = grid.mesh
    b = np.cos(k * X) * np.cos(k * Y)
    bx = -k * np.sin(k * X) * np.cos(k * Y)
    by = -k * np.cos(k * X) * np.sin(k * Y)
    bxy = k * k * np.sin(k * X) * np.sin(k * Y)
    return k, b, np.stack([bx, by]), bxy


MMS_V = (0.4, -0.3)
MMS_GAMMA = 0.5


def density_mms_fields(grid: G.Grid2D, t: float):
    """Exact n = e^-t b, substrate c = gamma e^-t b, constant v, and the
    source making n the solution of the density equation."""
    k, b, db, _ = _mode(grid)
    e = math.exp(-t)
    n, dn = e * b, e * db
    c, dc = MMS_GAMMA * n, MMS_GAMMA * dn
    lap_n, lap_c = -2 * k * k * n, -2 * k * k * c
    v = np.stack([np.full(grid.shape, MMS_V[0]), np.full(grid.shape, MMS_V[1])])
    src = -n + np.sum(v * dn, axis=0) - lap_n + np.sum(dn * dc, axis=0) + n * lap_c
    return n, c, v, src


def density_mms_error(N: int, K: int, T: float = 0.05, L: float = 1.0, theta: float = 1.0) -> float:
    grid = G.make_grid(L, N)
    cfg = ParabolicStepConfig(T / K, theta=theta)
    n = density_mms_fields(grid, 0.0)[0]
    for j in range(K):
        t1 = (j + 1) * cfg.dt
        _, c1, v, s1 = density_mms_fields(grid, t1)
        if theta != 1.0:
            s1 = theta * s1 + (1 - theta) * density_mms_fields(grid, j * cfg.dt)[3]
        n = advance_n(grid, n, v, c1, cfg, source=s1)
    return float(np.abs(n - density_mms_fields(grid, T)[0]).max())


def density_mms_study(N_list=(17, 33, 65), K0: int = 4, T: float = 0.05) -> dict:
    """dt shrinks fourfold per grid doubling (first order in time)."""
    errs = [density_mms_error(N, K0 * 4**i, T) for i, N in enumerate(N_list)]
    return {"N": list(N_list), "errors": errs, "orders": observed_orders(errs)}


def momentum_mms_fields(grid: G.Grid2D, t: float, params: PhysicalParams):
    """u = e^-t (b, b), h = 1 + b / 2, v = 0, and the forcing F with
    h u_t + L u + F = 0."""
    _, b, _, _ = _mode(grid)
    e = math.exp(-t)
    u = e * np.stack([b, b])
    h = 1.0 + 0.5 * b
    Lu = _lame_exact(grid, params) * e
    return u, h, -(-h * u + Lu)


def _lame_exact(grid, params):
    k, b, _, bxy = _mode(grid)
    grad_div = np.stack([-k * k * b + bxy, bxy - k * k * b])
    return params.mu * 2 * k * k * np.stack([b, b]) - (params.mu + params.lam) * grad_div


def momentum_mms_error(N: int, K: int, params: PhysicalParams, T: float = 0.05, L: float = 1.0) -> float:
    grid = G.make_grid(L, N)
    cfg = MomentumStepConfig(T / K)
    u, h, _ = momentum_mms_fields(grid, 0.0, params)
    zero_v = np.zeros((2, *grid.shape))
    zero_n = np.zeros(grid.shape)
    for j in range(K):
        _, _, F = momentum_mms_fields(grid, (j + 1) * cfg.dt, params)
        u = advance_u(grid, u, h, zero_n, zero_v, params, cfg, forcing=F)
    return float(np.abs(u - momentum_mms_fields(grid, T, params)[0]).max())


def momentum_mms_study(params: PhysicalParams, N_list=(17, 33, 65), K0: int = 4, T: float = 0.05) -> dict:
    errs = [momentum_mms_error(N, K0 * 4**i, params, T) for i, N in enumerate(N_list)]
    return {"N": list(N_list), "errors": errs, "orders": observed_orders(errs)}


def lame_stencil_error(N: int, params: PhysicalParams, L: float = 1.0) -> float:
    grid = G.make_grid(L, N)
    u, _, _ = momentum_mms_fields(grid, 0.0, params)
    return float(np.abs(lame_apply(grid, u, params) - _lame_exact(grid, params))[..., 2:-2, 2:-2].max())


# ---------------------------------------------------------------------------
# inequality batteries

def random_compact_field(grid: G.Grid2D, rng: np.random.Generator, n_bumps: int = 3) -> np.ndarray:
    """Random sum of Gaussians times a smooth cutoff at radius 0.7 L."""
    X, Y = grid.mesh
    L = grid.L
    f = np.zeros(grid.shape)
    for _ in range(n_bumps):
        cx, cy = rng.uniform(-0.25 * L, 0.25 * L, size=2)
        w = rng.uniform(0.1 * L, 0.3 * L)
        a = rng.uniform(-1.0, 1.0)
        f += a * np.exp(-((X - cx) ** 2 + (Y - cy) ** 2) / w**2)
    return f * cutoff_profile(grid.radius / (0.7 * L))


@dataclass(frozen=True)
class VerdictRow:
    field_id: str
    param: float
    lhs: float
    rhs: float
    ratio: float
    passed: bool


def ckn_battery(grid: G.Grid2D, alphas, size: int, seed: int, tol: float = D.TOL_INEQ) -> list[VerdictRow]:
    rows = []
    for a in alphas:
        rng = np.random.default_rng([seed, int(round(1e6 * a))])
        for i in range(size):
            v = D.verify_ckn(grid, random_compact_field(grid, rng), a, tol)
            rows.append(VerdictRow(f"ckn_{i}", a, v.lhs, v.alpha**2 / 4 * v.rhs, v.ratio, v.passed))
            rows.append(VerdictRow(f"ckn_sharp_{i}", a, v.lhs, 4 / v.alpha**2 * v.rhs,
                                   v.ratio_sharp, v.passed_sharp))
    return rows


def gn_battery(grid: G.Grid2D, ps, size: int, seed: int) -> dict:
    """Maximum GN quotient over the battery for each p."""
    out = {}
    for p in ps:
        rng = np.random.default_rng([seed, int(round(1e3 * p))])
        out[p] = D.battery_max(D.gn_quotient(grid, random_compact_field(grid, rng), p) for _ in range(size))
    return out


def l2_control_battery(grid: G.Grid2D, params: PhysicalParams, size: int, seed: int) -> float:
    rng = np.random.default_rng([seed, 7])
    q = []
    for _ in range(size):
        dip = np.abs(random_compact_field(grid, rng))
        h = params.h_tilde * (1.0 - dip / dip.max())
        u = np.stack([random_compact_field(grid, rng), random_compact_field(grid, rng)])
        q.append(D.verify_l2_control(grid, u, h, params).quotient)
    return D.battery_max(q)


# ---------------------------------------------------------------------------
# regularization-radius continuation

def restricted_distance(a, b, mask: np.ndarray) -> float:
    """L^2(0, T; H^1) distance of two velocity trajectories on ``mask``."""
    grid = a.grid
    vals = []
    for k in range(len(a.times)):
        w = a.u.frames[k] - b.u.frames[k]
        dens = G.magnitude(w) ** 2 + G.magnitude(G.gradient(grid, w)) ** 2
        vals.append(float(np.sum(grid.weights * mask * dens)))
    return float(np.sqrt(np.trapezoid(vals, a.times)))


def r_study(init, params: PhysicalParams, cfg: FixedPointConfig, R: float, eps: float) -> dict:
    """Solve at R, 2R, 4R and compare consecutive velocities on {h0 > eps}."""
    radii = [R, 2 * R, 4 * R]
    if radii[-1] > init.grid.L:
        raise ValueError(f"r-study needs L >= 4R = {radii[-1]}")
    sols = [run_fixed_point(init, params, _with_R(cfg, r)) for r in radii]
    mask = init.h0 > eps
    d = [restricted_distance(sols[0], sols[1], mask), restricted_distance(sols[1], sols[2], mask)]
    return {"R": radii, "distances": d, "monotone": d[1] < d[0],
            "converged": [s.converged for s in sols]}


def _with_R(cfg, R):
    from dataclasses import replace

    return replace(cfg, R=R)
