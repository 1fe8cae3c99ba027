"""Picard iteration for the coupled system.

One sweep maps an iterate (m, v) to (n, u) through the chain

    h = h(v),  c = c(m, v),  n = n(v, c),  u = u(v, h, n),

each stage marched over the whole horizon before the next starts. Sweeps
repeat until the iterates stop moving in the discrete L^2(0, T; H^1) norm.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import grid as G
from .diagnostics import phi_series
from .errors import SweepError, ValidationError
from .momentum import MomentumStepConfig, advance_u
from .parabolic import ParabolicStepConfig, advance_c, advance_n
from .params import (InitialData, PhysicalParams, RegularizedInit, build_regularized_init,
                     compatibility_residual, compatibility_scale, default_tol_compat,
                     initial_data_norm_c0)
from .transport import Trajectory, constant_trajectory, solve_height

log = logging.getLogger(__name__)

DEFAULT_M = 1.0e3


@dataclass(frozen=True)
class IterateTrajectory:
    m: Trajectory
    v: Trajectory

    def __post_init__(self):
        if self.m.grid != self.v.grid or not np.array_equal(self.m.times, self.v.times):
            raise ValidationError("iterate components are not aligned")
        if self.v.frames.shape[1] != 2:
            raise ValidationError("velocity iterate must have two components")

    @property
    def grid(self) -> G.Grid2D:
        return self.m.grid

    @property
    def times(self) -> np.ndarray:
        return self.m.times


@dataclass(frozen=True)
class FixedPointConfig:
    T: float
    dt: float
    tol_fp: float | None = None      # None: 1e-8 (1 + c0)
    max_sweeps: int = 50
    M: float = DEFAULT_M
    R: float | None = None           # None: the domain half-width
    theta: float = 1.0
    tol_lin: float = 1e-12
    cfl_safety: float = 0.5
    tol_neg: float = 1e-10
    solve_velocity: bool = False
    strict_compat: bool = False
    tol_compat: float | None = None  # None: see compat_tolerance

    def __post_init__(self):
        if not self.T > 0:
            raise ValidationError(f"T must be positive, got {self.T}", key="T")
        if not self.dt > 0:
            raise ValidationError(f"dt must be positive, got {self.dt}", key="dt")
        K = round(self.T / self.dt)
        if K < 1 or abs(K * self.dt - self.T) > 1e-9 * self.T:
            raise ValidationError(f"T = {self.T} is not a multiple of dt = {self.dt}", key="dt")
        if self.tol_fp is not None and not self.tol_fp > 0:
            raise ValidationError(f"tol_fp must be positive, got {self.tol_fp}", key="tol_fp")
        if self.max_sweeps < 1:
            raise ValidationError(f"max_sweeps must be >= 1, got {self.max_sweeps}", key="max_sweeps")
        if not self.M > 1:
            raise ValidationError(f"M must exceed 1, got {self.M}", key="M")
        if self.R is not None and not self.R > 0:
            raise ValidationError(f"R must be positive, got {self.R}", key="R")

    @property
    def K(self) -> int:
        return round(self.T / self.dt)

    def parabolic(self) -> ParabolicStepConfig:
        return ParabolicStepConfig(self.dt, self.theta, self.tol_lin, cfl_safety=self.cfl_safety,
                                   tol_neg=self.tol_neg)

    def momentum(self) -> MomentumStepConfig:
        return MomentumStepConfig(self.dt, self.tol_lin, cfl_safety=self.cfl_safety)


@dataclass
class SolutionTrajectory:
    n: Trajectory
    c: Trajectory
    h: Trajectory
    u: Trajectory
    h_floor: float
    distances: list = field(default_factory=list)
    phi_history: list = field(default_factory=list)
    phi_excursions: list = field(default_factory=list)  # 1-based sweep indices with Phi > M
    converged: bool = False
    sweeps: int = 0
    c0: float = float("nan")
    tol_fp: float = float("nan")
    compat_residual: float = float("nan")
    tol_compat: float = float("nan")
    tstar: float = float("nan")
    clamped: int = 0
    timings: dict = field(default_factory=dict)

    @property
    def grid(self) -> G.Grid2D:
        return self.n.grid

    @property
    def times(self) -> np.ndarray:
        return self.n.times

    @property
    def compat_ok(self) -> bool:
        return bool(self.compat_residual <= self.tol_compat)

    @property
    def outcome(self) -> str:
        if self.phi_excursions:
            return "phi_excursion"
        return "converged" if self.converged else "not_converged"

    def min_density(self) -> float:
        return float(min(self.n.frames.min(), self.c.frames.min()))


def constant_seed(init: RegularizedInit, T: float, K: int) -> IterateTrajectory:
    """(n0, u0) held constant in time."""
    grid = init.grid
    return IterateTrajectory(constant_trajectory(grid, init.base.n0, T, K),
                             constant_trajectory(grid, init.u0, T, K))


def zero_seed(grid: G.Grid2D, T: float, K: int) -> IterateTrajectory:
    return IterateTrajectory(constant_trajectory(grid, np.zeros(grid.shape), T, K),
                             constant_trajectory(grid, np.zeros((2, *grid.shape)), T, K))


def height_floor(v: Trajectory, delta: float) -> float:
    """Lower bound of the transported height for h0 >= delta.

    The discrete divergence integral along any trace is at most
    t * max(div v) since sampled values never exceed the nodal maximum.
    """
    grid = v.grid
    dmax = max(float(G.divergence(grid, f).max()) for f in v.frames)
    return delta * float(np.exp(-v.times[-1] * max(0.0, dmax))) * (1.0 - 1e-12)


def _timed(timings, stage):
    class _T:
        def __enter__(self):
            self.t0 = time.perf_counter()

        def __exit__(self, *exc):
            timings[stage] = timings.get(stage, 0.0) + time.perf_counter() - self.t0
            return False

    return _T()


def picard_sweep(iterate: IterateTrajectory, init: RegularizedInit, params: PhysicalParams,
                 cfg: FixedPointConfig, timings: dict | None = None):
    """One application of the fixed-point map. Returns (solution, next iterate).

    Per step k -> k+1 the substrate uses v^k and m^{k+1}, the density uses
    v^k and the new c, and the velocity uses h, n at the new level and v^k.
    """
    grid = init.grid
    times = iterate.times
    K = len(times) - 1
    if K != cfg.K or not np.isclose(times[-1], cfg.T, rtol=1e-12, atol=0):
        raise ValidationError("iterate frames do not match the configured horizon")
    if not np.all(np.isfinite(iterate.m.frames)) or not np.all(np.isfinite(iterate.v.frames)):
        raise ValidationError("iterate contains non-finite samples")
    timings = {} if timings is None else timings
    m, v = iterate.m.frames, iterate.v.frames
    pcfg, mcfg = cfg.parabolic(), cfg.momentum()

    def fail(stage, k, exc):
        raise SweepError(f"{stage} stage failed at frame {k}: {exc}", stage=stage, frame=k) from exc

    with _timed(timings, "height"):
        try:
            hs = solve_height(init.h0, iterate.v)
        except Exception as exc:  # noqa: BLE001 - re-raised with stage context
            fail("height", None, exc)
    h = hs.h.frames
    h_floor = height_floor(iterate.v, init.delta)

    c = np.empty((K + 1, *grid.shape))
    c[0] = init.base.c0
    with _timed(timings, "substrate"):
        for k in range(K):
            try:
                c[k + 1] = advance_c(grid, c[k], v[k], m[k + 1], pcfg)
            except Exception as exc:  # noqa: BLE001
                fail("substrate", k + 1, exc)

    n = np.empty((K + 1, *grid.shape))
    n[0] = init.base.n0
    with _timed(timings, "density"):
        for k in range(K):
            try:
                n[k + 1] = advance_n(grid, n[k], v[k], c[k + 1], pcfg)
            except Exception as exc:  # noqa: BLE001
                fail("density", k + 1, exc)

    u = np.empty((K + 1, 2, *grid.shape))
    u[0] = init.u0
    with _timed(timings, "momentum"):
        for k in range(K):
            try:
                u[k + 1] = advance_u(grid, u[k], h[k + 1], n[k + 1], v[k], params, mcfg, h_floor=h_floor)
            except Exception as exc:  # noqa: BLE001
                fail("momentum", k + 1, exc)

    tr = lambda f: Trajectory(grid, times.copy(), f)  # noqa: E731
    sol = SolutionTrajectory(tr(n), tr(c), hs.h, tr(u), h_floor=h_floor, clamped=hs.clamped)
    return sol, IterateTrajectory(sol.n, sol.u)


def _h1_sq(grid, f):
    return G.lp_norm(grid, f, 2) ** 2 + G.seminorm(grid, f, 1) ** 2


def iterate_distance(a: IterateTrajectory, b: IterateTrajectory) -> float:
    """sqrt of the time-trapezoid of ||m_a - m_b||_{H^1}^2 + ||v_a - v_b||_{H^1}^2."""
    if a.grid != b.grid or not np.array_equal(a.times, b.times):
        raise ValidationError("iterates are not aligned")
    grid = a.grid
    dm = a.m.frames - b.m.frames
    dv = a.v.frames - b.v.frames
    vals = np.array([_h1_sq(grid, dm[k]) + _h1_sq(grid, dv[k]) for k in range(len(a.times))])
    if len(vals) == 1:
        return float(np.sqrt(vals[0]))
    return float(np.sqrt(np.trapezoid(vals, a.times)))


def select_tstar(M: float) -> float:
    """min(M^-15, 1): the guaranteed existence horizon, for reporting only."""
    if not M > 1:
        raise ValidationError(f"M must exceed 1, got {M}", key="M")
    return min(M**-15.0, 1.0)


def compat_tolerance(init: InitialData, params: PhysicalParams, c0: float) -> float:
    """max(1e-6 (1 + c0), min(10 dx^2, 1/2) scale): the absolute default alone
    is below the truncation error of the stencils for exactly compatible data.
    The cap keeps data with g = 0 (relative residual 1) rejected on coarse grids."""
    dx = init.grid.dx
    return max(default_tol_compat(c0), min(10.0 * dx**2, 0.5) * compatibility_scale(init, params))


class CompatibilityError(ValidationError):
    def __init__(self, residual, tol):
        super().__init__(f"compatibility residual {residual:.3e} exceeds {tol:.3e}", key="compatibility")
        self.residual = residual
        self.tol = tol


def run_fixed_point(init: InitialData, params: PhysicalParams, cfg: FixedPointConfig,
                    seed: IterateTrajectory | None = None) -> SolutionTrajectory:
    """Iterate :func:`picard_sweep` from ``seed`` (default (n0, u0) constant in
    time) until successive iterates are closer than ``tol_fp``.

    The trajectory with the smallest sweep distance is returned; check
    ``converged``. Raises :class:`CompatibilityError` in strict mode.
    """
    grid = init.grid
    c0 = initial_data_norm_c0(init, params)
    tol_fp = 1e-8 * (1.0 + c0) if cfg.tol_fp is None else cfg.tol_fp
    _, res = compatibility_residual(init, params)
    tol_compat = compat_tolerance(init, params, c0) if cfg.tol_compat is None else cfg.tol_compat
    if res > tol_compat:
        if cfg.strict_compat:
            raise CompatibilityError(res, tol_compat)
        log.warning("compatibility residual %.3e exceeds %.3e (warn-only)", res, tol_compat)
    R = grid.L if cfg.R is None else cfg.R
    rinit = build_regularized_init(init, R, params, solve_velocity=cfg.solve_velocity)
    current = constant_seed(rinit, cfg.T, cfg.K) if seed is None else seed
    timings: dict = {}
    best = None
    distances, phis, excursions = [], [], []
    converged = False
    for s in range(1, cfg.max_sweeps + 1):
        sol, nxt = picard_sweep(current, rinit, params, cfg, timings)
        d = iterate_distance(nxt, current)
        phi = float(phi_series(nxt.m, nxt.v, params).values[-1])
        distances.append(d)
        phis.append(phi)
        if phi > cfg.M:
            excursions.append(s)
            log.warning("sweep %d: Phi = %.3e exceeds M = %.3e", s, phi, cfg.M)
        log.info("sweep %d: distance %.3e, Phi %.6g", s, d, phi)
        if best is None or d <= best[0]:
            best = (d, sol)
        current = nxt
        if d < tol_fp:
            converged = True
            best = (d, sol)
            break
    sol = best[1]
    sol.distances, sol.phi_history, sol.phi_excursions = distances, phis, excursions
    sol.converged, sol.sweeps = converged, len(distances)
    sol.c0, sol.tol_fp = c0, tol_fp
    sol.compat_residual, sol.tol_compat = res, tol_compat
    sol.tstar = select_tstar(cfg.M)
    sol.timings = timings
    return sol
