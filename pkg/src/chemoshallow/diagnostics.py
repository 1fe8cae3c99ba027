"""Functionals and norm monitors evaluated on iterates and solutions, plus
numerical checks of the functional inequalities the local theory rests on:
the weighted Hardy / Caffarelli-Kohn-Nirenberg bound, Gagliardo-Nirenberg
interpolation and the L^2 velocity control for a positive far-field height.

Time derivatives are always taken by frame differencing
(:func:`chemoshallow.transport.time_derivative`), never stored by solvers.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import grid as G
from .momentum import convective
from .transport import Trajectory, time_derivative

log = logging.getLogger(__name__)

TOL_INEQ = 1e-2
TOL_MASS = 1e-3


def _trapezoid_cumulative(values: np.ndarray, dt: float) -> np.ndarray:
    out = np.zeros_like(values)
    if len(values) > 1:
        out[1:] = np.cumsum(0.5 * dt * (values[1:] + values[:-1]))
    return out


# ---------------------------------------------------------------------------
# iterate functional

@dataclass(frozen=True)
class PhiSeries:
    times: np.ndarray
    values: np.ndarray
    sup_block: np.ndarray     # per-frame integrand of the running supremum
    integral_block: np.ndarray
    one_sided: np.ndarray     # frames whose time derivative is one-sided


def phi_series(m: Trajectory, v: Trajectory, params) -> PhiSeries:
    """Iterate functional at every frame time.

    Phi(t) = 1 + sup_{s<=t} (||grad v||_{H^1}^2 + || |x|^{a/2} grad v ||^2
                              + ||m||_{H^1}^2 + ||m_t||^2)
               + int_0^t (||v_t||_{L^{4/a}}^2 + ||grad v_t||^2
                          + ||grad v||_{W^{1,4/a} cap H^1}^2
                          + ||grad m||_{H^1}^2 + ||grad m_t||^2) ds
    """
    grid = m.grid
    a = params.alpha
    q = 4.0 / a
    m_t = time_derivative(m)
    v_t = time_derivative(v)
    K = m.K
    sup_block = np.empty(K + 1)
    int_block = np.empty(K + 1)
    for k in range(K + 1):
        dv = G.gradient(grid, v.frames[k])
        d2v = G.gradient(grid, dv)
        dm = G.gradient(grid, m.frames[k])
        d2m = G.gradient(grid, dm)
        dv_l2 = G.lp_norm(grid, dv, 2) ** 2
        d2v_l2 = G.lp_norm(grid, d2v, 2) ** 2
        dm_l2 = G.lp_norm(grid, dm, 2) ** 2
        sup_block[k] = (dv_l2 + d2v_l2
                        + G.weighted_l2_norm(grid, dv, a / 2) ** 2
                        + G.lp_norm(grid, m.frames[k], 2) ** 2 + dm_l2
                        + G.lp_norm(grid, m_t[k], 2) ** 2)
        int_block[k] = (G.lp_norm(grid, v_t[k], q) ** 2
                        + G.seminorm(grid, v_t[k], 1) ** 2
                        + G.lp_norm(grid, dv, q) ** 2 + G.lp_norm(grid, d2v, q) ** 2
                        + dv_l2 + d2v_l2
                        + dm_l2 + G.lp_norm(grid, d2m, 2) ** 2
                        + G.seminorm(grid, m_t[k], 1) ** 2)
    values = 1.0 + np.maximum.accumulate(sup_block) + _trapezoid_cumulative(int_block, m.dt)
    one_sided = np.zeros(K + 1, dtype=bool)
    one_sided[[0, K]] = True
    return PhiSeries(m.times.copy(), values, sup_block, int_block, one_sided)


def phi_functional(iterate, t: float, params) -> float:
    """Phi(v, m, t) for an iterate carrying ``m`` and ``v`` trajectories."""
    series = phi_series(iterate.m, iterate.v, params)
    k = int(round(t / iterate.m.dt)) if iterate.m.K else 0
    if not np.isclose(series.times[k], t, rtol=0, atol=1e-12 * max(1.0, t)):
        raise ValueError(f"t = {t} is not a frame time")
    if k < 1:
        log.info("phi at t=%g uses one-sided time differences", t)
    return float(series.values[k])


def material_derivative(f: Trajectory, u: Trajectory, k: int) -> np.ndarray:
    """f_t + u . grad f at frame k (central in time; one-sided at the ends)."""
    grid = f.grid
    K = f.K
    if not 0 <= k <= K:
        raise IndexError(f"frame {k} outside 0..{K}")
    if 0 < k < K:
        ft = (f.frames[k + 1] - f.frames[k - 1]) / (2.0 * f.dt)
    else:
        log.info("material derivative at endpoint frame %d is one-sided", k)
        ft = time_derivative(f)[k]
    uk = u.frames[k]
    if f.frames.ndim == 3:
        return ft + np.sum(uk * G.gradient(grid, f.frames[k]), axis=0)
    return ft + convective(grid, uk, f.frames[k])


# ---------------------------------------------------------------------------
# inequality verifiers

@dataclass(frozen=True)
class CKNVerdict:
    """Weighted Hardy check for one field.

    ``ratio`` compares against the constant alpha^2/4, ``ratio_sharp``
    against the sharp Hardy constant 4/alpha^2 obtained by integrating
    r^{alpha-1} |f|^2 by parts.
    """

    alpha: float
    lhs: float
    rhs: float
    ratio: float
    passed: bool
    ratio_sharp: float
    passed_sharp: bool
    lq_constant: float
    vacuous: bool = False


def _support_touches_boundary(f: np.ndarray, ring: int = 2) -> bool:
    a = G.magnitude(f)
    top = float(a.max())
    mask = np.ones(a.shape, dtype=bool)
    mask[ring:-ring, ring:-ring] = False
    return top > 0 and float(a[mask].max()) > 1e-12 * top


def verify_ckn(grid: G.Grid2D, f: np.ndarray, alpha: float, tol_ineq: float = TOL_INEQ) -> CKNVerdict:
    if not 0 < alpha < 2:
        raise ValueError(f"alpha must lie in (0, 2), got {alpha}")
    f = grid.check(f)
    if _support_touches_boundary(f):
        raise ValueError("field support touches the domain boundary")
    a2 = G.magnitude(f) ** 2
    lhs = float(np.sum(grid.weights * G.radial_weight(grid, alpha - 2.0, exclude_origin=True) * a2))
    grad2 = G.magnitude(G.gradient(grid, f)) ** 2
    rhs = float(np.sum(grid.weights * G.radial_weight(grid, alpha) * grad2))
    if lhs == 0.0 and rhs == 0.0:
        return CKNVerdict(alpha, 0.0, 0.0, 0.0, True, 0.0, True, 0.0, vacuous=True)
    ratio = lhs / (alpha**2 / 4.0 * rhs)
    ratio_sharp = lhs / (4.0 / alpha**2 * rhs)
    lq = G.lp_norm(grid, f, 4.0 / alpha) ** 2 / rhs
    return CKNVerdict(alpha, lhs, rhs, ratio, ratio <= 1.0 + tol_ineq,
                      ratio_sharp, ratio_sharp <= 1.0 + tol_ineq, lq)


@dataclass(frozen=True)
class QuotientVerdict:
    quotient: float
    vacuous: bool = False


def gn_quotient(grid: G.Grid2D, f: np.ndarray, p: float) -> float:
    """||f||_p / (||f||_2^{2/p} ||grad f||_2^{(p-2)/p})."""
    if p < 2:
        raise ValueError(f"p must be >= 2, got {p}")
    f = grid.check(f)
    l2 = G.lp_norm(grid, f, 2)
    if l2 == 0.0:
        raise ValueError("Gagliardo-Nirenberg quotient undefined for the zero field")
    d = G.seminorm(grid, f, 1)
    return G.lp_norm(grid, f, p) / (l2 ** (2.0 / p) * d ** ((p - 2.0) / p))


def verify_gn(grid: G.Grid2D, f: np.ndarray, p: float) -> QuotientVerdict:
    return QuotientVerdict(gn_quotient(grid, f, p))


def verify_l2_control(grid: G.Grid2D, u: np.ndarray, h: np.ndarray, params) -> QuotientVerdict:
    """||u||^2 / (int h|u|^2 + ||h - h~||^2 ||grad u||^2) for h~ > 0.

    Written as 1 / (h~ + E / ||u||^2) with E collecting everything that
    vanishes when h is identically h~, so that case returns 1/h~ exactly.
    """
    ht = params.h_tilde
    if not ht > 0:
        raise ValueError("L^2 velocity control needs a positive far-field height")
    u = grid.check(u)
    u2 = G.magnitude(u) ** 2
    A = float(np.sum(grid.weights * u2))
    if A == 0.0:
        return QuotientVerdict(0.0, vacuous=True)
    dev = h - ht
    E = float(np.sum(grid.weights * dev * u2)) + G.lp_norm(grid, dev, 2) ** 2 * G.seminorm(grid, u, 1) ** 2
    return QuotientVerdict(1.0 / (ht + E / A))


def battery_max(quotients) -> float:
    return float(max(quotients))


# ---------------------------------------------------------------------------
# conservation

@dataclass(frozen=True)
class ConservationSeries:
    mass: np.ndarray
    drift: np.ndarray
    flagged: np.ndarray  # frame indices with |drift| > tol

    @property
    def max_drift(self) -> float:
        return float(np.abs(self.drift).max())


def conservation_report(h: Trajectory, tol_mass: float = TOL_MASS) -> ConservationSeries:
    """Integral of h per frame and its drift relative to frame 0."""
    grid = h.grid
    mass = np.array([G.integrate(grid, f) for f in h.frames])
    drift = (mass - mass[0]) / mass[0] if mass[0] != 0 else mass - mass[0]
    return ConservationSeries(mass, drift, np.flatnonzero(np.abs(drift) > tol_mass))


# ---------------------------------------------------------------------------
# regularity norms along a solution

@dataclass
class NormTable:
    times: np.ndarray
    tau: float
    series: dict = field(default_factory=dict)
    weighted: dict = field(default_factory=dict)  # t * quantity^2 series

    def sup(self, name: str) -> float:
        return float(np.max(self._lookup(name)))

    def sup_after_tau(self, name: str) -> float:
        mask = self.times >= self.tau - 1e-12
        return float(np.max(self._lookup(name)[mask]))

    def _lookup(self, name):
        return self.series[name] if name in self.series else self.weighted[name]


def theorem_norm_suite(sol, tau: float, params) -> NormTable:
    """Per-frame norms of the regularity class of the strong solution, with
    sup over [0, T] and [tau, T], and the t-weighted higher-order monitors."""
    if sol.u.K < 2:
        raise ValueError("need at least three frames for second time differences")
    if not 0 < tau < sol.times[-1]:
        raise ValueError(f"tau must lie in (0, T), got {tau}")
    grid = sol.grid
    ht = params.h_tilde
    a = params.alpha
    q, q1 = params.q, params.q1
    u_t = time_derivative(sol.u)
    u_tt = time_derivative(Trajectory(grid, sol.times, u_t))
    n_t = time_derivative(sol.n)
    c_t = time_derivative(sol.c)
    K = sol.u.K
    names = ["n_H3", "c_H3", "h_H3", "h2_H3", "u_Lq", "u_D1", "u_D3",
             "ut_D1", "ut_D2", "ut_Lq", "ut_Lq1", "sqrt_h_ut_L2", "sqrt_h_utt_L2"]
    wnames = ["t_sqrt_h_utt_L2", "t_ut_Lq1", "t_ut_D2", "t_xa4_grad_udot", "t_xa2_grad_udot",
              "t_ct_D2", "t_nt_D2"]
    table = NormTable(sol.times.copy(), tau,
                      {k: np.empty(K + 1) for k in names}, {k: np.empty(K + 1) for k in wnames})
    S, W = table.series, table.weighted
    for k in range(K + 1):
        t = sol.times[k]
        h = sol.h.frames[k]
        u = sol.u.frames[k]
        sh = np.sqrt(h)
        S["n_H3"][k] = G.sobolev_norm(grid, sol.n.frames[k], 3)
        S["c_H3"][k] = G.sobolev_norm(grid, sol.c.frames[k], 3)
        S["h_H3"][k] = G.sobolev_norm(grid, h - ht, 3)
        S["h2_H3"][k] = G.sobolev_norm(grid, h**2 - ht**2, 3)
        S["u_Lq"][k] = G.lp_norm(grid, u, q)
        S["u_D1"][k] = G.seminorm(grid, u, 1)
        S["u_D3"][k] = G.seminorm(grid, u, 3)
        S["ut_D1"][k] = G.seminorm(grid, u_t[k], 1)
        S["ut_D2"][k] = G.seminorm(grid, u_t[k], 2)
        S["ut_Lq"][k] = G.lp_norm(grid, u_t[k], q)
        S["ut_Lq1"][k] = G.lp_norm(grid, u_t[k], q1)
        S["sqrt_h_ut_L2"][k] = G.lp_norm(grid, sh * u_t[k], 2)
        S["sqrt_h_utt_L2"][k] = G.lp_norm(grid, sh * u_tt[k], 2)
        grad_udot = G.gradient(grid, u_t[k] + convective(grid, u, u))
        W["t_sqrt_h_utt_L2"][k] = t * S["sqrt_h_utt_L2"][k] ** 2
        W["t_ut_Lq1"][k] = t * S["ut_Lq1"][k] ** 2
        W["t_ut_D2"][k] = t * S["ut_D2"][k] ** 2
        W["t_xa4_grad_udot"][k] = t * G.weighted_l2_norm(grid, grad_udot, a / 4) ** 2
        W["t_xa2_grad_udot"][k] = t * G.weighted_l2_norm(grid, grad_udot, a / 2) ** 2
        W["t_ct_D2"][k] = t * G.seminorm(grid, c_t[k], 2) ** 2
        W["t_nt_D2"][k] = t * G.seminorm(grid, n_t[k], 2) ** 2
    return table


WEIGHTED_FIELDS = ("n", "c", "h2", "grad_n", "grad_c", "grad_u", "grad2_n", "grad2_c")


def weighted_norm_series(sol, params, beta: float | None = None) -> dict:
    """|| |x|^beta f || per frame for the weighted quantities of the local
    estimates (beta defaults to alpha/2)."""
    grid = sol.grid
    beta = params.alpha / 2 if beta is None else beta
    out = {name: np.empty(sol.u.K + 1) for name in WEIGHTED_FIELDS}
    for k in range(sol.u.K + 1):
        n, c, h, u = sol.n.frames[k], sol.c.frames[k], sol.h.frames[k], sol.u.frames[k]
        dn, dc = G.gradient(grid, n), G.gradient(grid, c)
        fields = {"n": n, "c": c, "h2": h**2, "grad_n": dn, "grad_c": dc,
                  "grad_u": G.gradient(grid, u), "grad2_n": G.gradient(grid, dn),
                  "grad2_c": G.gradient(grid, dc)}
        for name in WEIGHTED_FIELDS:
            out[name][k] = G.weighted_l2_norm(grid, fields[name], beta)
    return out
