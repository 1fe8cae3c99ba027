"""Physical parameters, initial data, admissibility checks and the vacuum
regularization (height floor R^-2 and cutoff of the compatibility field)."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import grid as G
from .errors import GridMismatchError, ValidationError

log = logging.getLogger(__name__)

# These three are fixed by the model studied here and deliberately not exposed.
D_N = 1.0
D_C = 1.0
CHI = 1.0


@dataclass(frozen=True)
class PhysicalParams:
    """Viscosities and far-field height.

    Attributes:
        mu: shear viscosity, must be positive.
        lam: bulk viscosity, with mu + lam >= 0.
        h_tilde: far-field height, 0 for a vacuum far field.
    """

    mu: float = 1.0
    lam: float = 0.0
    h_tilde: float = 0.0

    def __post_init__(self):
        if not self.mu > 0:
            raise ValidationError(f"mu must satisfy mu > 0, got {self.mu}", key="mu")
        if not self.mu + self.lam >= 0:
            raise ValidationError(
                f"lam must satisfy mu + lam >= 0, got mu + lam = {self.mu + self.lam}", key="lam"
            )
        if not self.h_tilde >= 0:
            raise ValidationError(f"h_tilde must be >= 0, got {self.h_tilde}", key="h_tilde")
        a = self.mu / (4.0 * (2.0 * self.mu + self.lam))
        if a > 0.125:
            warnings.warn(
                f"alpha = {a:.6g} exceeds 1/8 (lam < 0); weighted estimates are outside "
                "their stated range",
                stacklevel=3,
            )

    @property
    def alpha(self) -> float:
        return alpha(self)

    @property
    def q(self) -> float:
        return 2.0 if self.h_tilde > 0 else 4.0 / self.alpha

    @property
    def q1(self) -> float:
        return 2.0 if self.h_tilde > 0 else 8.0 / self.alpha


def alpha(params: PhysicalParams) -> float:
    """Weight exponent mu / (4 (2 mu + lam))."""
    return params.mu / (4.0 * (2.0 * params.mu + params.lam))


@dataclass(frozen=True)
class InitialData:
    grid: G.Grid2D
    n0: np.ndarray
    c0: np.ndarray
    h0: np.ndarray
    u0: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        for name in ("n0", "c0", "h0"):
            v = getattr(self, name)
            if np.shape(v) != self.grid.shape:
                raise GridMismatchError(f"{name} has shape {np.shape(v)}, grid is {self.grid.shape}")
            if np.any(np.asarray(v) < 0):
                raise ValidationError(f"{name} must be nonnegative", key=name)
        for name in ("u0", "g"):
            if np.shape(getattr(self, name)) != (2, *self.grid.shape):
                raise GridMismatchError(f"{name} must have shape (2, N, N)")


def far_field_deviation(init: InitialData, params: PhysicalParams, ring: int = 2) -> dict:
    """Largest deviation from the far-field state on the outer ``ring`` nodes."""
    mask = np.ones(init.grid.shape, dtype=bool)
    mask[ring:-ring, ring:-ring] = False
    return {
        "h0": float(np.abs(init.h0[mask] - params.h_tilde).max()),
        "n0": float(np.abs(init.n0[mask]).max()),
        "c0": float(np.abs(init.c0[mask]).max()),
        "u0": float(G.magnitude(init.u0)[mask].max()),
    }


def far_field_ok(init: InitialData, params: PhysicalParams, tol: float = 1e-3) -> bool:
    dev = far_field_deviation(init, params)
    return all(
        dev[k] <= tol * max(1.0, float(np.abs(v).max()))
        for k, v in (("h0", init.h0), ("n0", init.n0), ("c0", init.c0), ("u0", init.u0))
    )


def compatibility_residual(init: InitialData, params: PhysicalParams):
    """Discrete residual of the initial momentum balance against h0 g.

    Returns ``(r, ||r||_{L^2})`` with
    r = L u0 + h0^2 grad n0 + 1/2 (1 + n0) grad h0^2 - h0 g.
    """
    from .momentum import lame_apply

    grid = init.grid
    h0, n0 = init.h0, init.n0
    r = (lame_apply(grid, init.u0, params)
         + h0**2 * G.gradient(grid, n0)
         + 0.5 * (1.0 + n0) * G.gradient(grid, h0**2)
         - h0 * init.g)
    return r, G.lp_norm(grid, r, 2)


def default_tol_compat(c0: float) -> float:
    return 1e-6 * (1.0 + c0)


def initial_data_norm_c0(init: InitialData, params: PhysicalParams) -> float:
    """The aggregate initial-data size c_0 controlling the local existence time.

    Includes 1, H^3 norms of n0, c0 and of (h0 - h~, h0^2 - h~^2), the
    sqrt(h0) u0 energy, the D^1 and D^3 seminorms of u0, the |x|^{alpha/2}
    weighted norms of (n0, c0, h0^2, sqrt(h0) g), of their first and second
    derivatives, of grad u0, and the D^1 seminorm of g.
    """
    grid = init.grid
    a2 = 0.5 * params.alpha
    ht = params.h_tilde
    n0, c0, h0, u0, g = init.n0, init.c0, init.h0, init.u0, init.g
    sq = np.sqrt(h0)
    grad_n, grad_c = G.gradient(grid, n0), G.gradient(grid, c0)
    terms = [
        G.sobolev_norm(grid, n0, 3) ** 2,
        G.sobolev_norm(grid, c0, 3) ** 2,
        G.sobolev_norm(grid, h0 - ht, 3) ** 2,
        G.sobolev_norm(grid, h0**2 - ht**2, 3) ** 2,
        G.lp_norm(grid, sq * u0, 2) ** 2,
        G.seminorm(grid, u0, 1) ** 2 + G.seminorm(grid, u0, 3) ** 2,
        G.weighted_l2_norm(grid, n0, a2) ** 2,
        G.weighted_l2_norm(grid, c0, a2) ** 2,
        G.weighted_l2_norm(grid, h0**2, a2) ** 2,
        G.weighted_l2_norm(grid, sq * g, a2) ** 2,
        G.weighted_l2_norm(grid, G.gradient(grid, grad_n), a2) ** 2,
        G.weighted_l2_norm(grid, G.gradient(grid, grad_c), a2) ** 2,
        G.weighted_l2_norm(grid, grad_n, a2) ** 2,
        G.weighted_l2_norm(grid, grad_c, a2) ** 2,
        G.weighted_l2_norm(grid, G.gradient(grid, u0), a2) ** 2,
        G.seminorm(grid, g, 1) ** 2,
    ]
    return 1.0 + float(sum(terms))


# ---------------------------------------------------------------------------
# regularization

def cutoff_profile(s: np.ndarray) -> np.ndarray:
    """Radial cutoff: 1 for s <= 1/2, 0 for s >= 1, quintic C^2 blend between."""
    t = np.clip(2.0 * np.asarray(s, dtype=float) - 1.0, 0.0, 1.0)
    return np.clip(1.0 - t**3 * (10.0 - 15.0 * t + 6.0 * t**2), 0.0, 1.0)


def cutoff_derivative(s: np.ndarray) -> np.ndarray:
    t = np.clip(2.0 * np.asarray(s, dtype=float) - 1.0, 0.0, 1.0)
    return -2.0 * 30.0 * t**2 * (1.0 - t) ** 2


@dataclass(frozen=True)
class RegularizedInit:
    """Initial data lifted off vacuum: h0 + R^-2, with g cut off at radius R."""

    base: InitialData
    R: float
    delta: float
    h0: np.ndarray
    g: np.ndarray
    u0: np.ndarray = field(repr=False)

    @property
    def grid(self) -> G.Grid2D:
        return self.base.grid

    def as_initial_data(self) -> InitialData:
        return replace(self.base, h0=self.h0, g=self.g, u0=self.u0)


def build_regularized_init(init: InitialData, R: float, params: PhysicalParams | None = None,
                           solve_velocity: bool = False) -> RegularizedInit:
    """Apply the height floor R^-2 and the cutoff psi(x / R) to g.

    With ``solve_velocity`` the initial velocity is replaced by the solution
    of L u0 = -(h0^R)^2 grad n0 - 1/2 (1 + n0) grad (h0^R)^2 + h0^R g^R with
    zero boundary values, so that the lifted data is compatible again.
    """
    grid = init.grid
    if not 0 < R <= grid.L:
        raise ValidationError(f"R must satisfy 0 < R <= L = {grid.L}, got {R}", key="R")
    delta = R**-2
    h0 = init.h0 + delta
    g = cutoff_profile(grid.radius / R) * init.g
    u0 = init.u0
    if solve_velocity:
        if params is None:
            raise ValidationError("solve_velocity needs params")
        from .momentum import solve_lame

        force = (-(h0**2) * G.gradient(grid, init.n0)
                 - 0.5 * (1.0 + init.n0) * G.gradient(grid, h0**2)
                 + h0 * g)
        u0 = solve_lame(grid, force, params)
    return RegularizedInit(base=init, R=float(R), delta=delta, h0=h0, g=g, u0=u0)


# ---------------------------------------------------------------------------
# built-in initial data

def _smooth_cutoff(s):
    """C^4 cutoff for the built-in data, so their H^3 norms converge at
    second order under refinement (a C^2 profile only gives first order)."""
    t = np.clip(2.0 * np.asarray(s, dtype=float) - 1.0, 0.0, 1.0)
    return np.clip(1.0 - t**5 * (126.0 - 420.0 * t + 540.0 * t**2 - 315.0 * t**3 + 70.0 * t**4), 0.0, 1.0)


def _smooth_cutoff_derivative(s):
    t = np.clip(2.0 * np.asarray(s, dtype=float) - 1.0, 0.0, 1.0)
    return -2.0 * 630.0 * t**4 * (1.0 - t) ** 4


def _bump(grid: G.Grid2D, amp: float, width: float, support: float, center=(0.0, 0.0)):
    """amp * exp(-|x-x_c|^2 / width^2) * psi(|x-x_c| / support) and its gradient."""
    X, Y = grid.mesh
    dxc, dyc = X - center[0], Y - center[1]
    r = np.hypot(dxc, dyc)
    e = np.exp(-(r**2) / width**2)
    psi = _smooth_cutoff(r / support)
    val = amp * e * psi
    # d/dr of the profile divided by r, finite as r -> 0
    with np.errstate(invalid="ignore", divide="ignore"):
        dpsi_over_r = np.where(r > 0, _smooth_cutoff_derivative(r / support) / (support * np.where(r > 0, r, 1.0)), 0.0)
    dval_over_r = amp * e * (-2.0 / width**2 * psi + dpsi_over_r)
    return val, np.stack([dval_over_r * dxc, dval_over_r * dyc])


def gaussian_vacuum(grid: G.Grid2D, params: PhysicalParams, h_amp: float = 1.0,
                    h_width: float = 1.0, n_amp: float = 0.5, c_amp: float = 0.5,
                    support: float | None = None, compatible: bool = True) -> InitialData:
    """Compactly supported height bump over a vacuum far field, u0 = 0.

    With ``compatible`` the field g = h0 grad n0 + (1 + n0) grad h0 is built
    from closed-form gradients, which satisfies the compatibility balance
    exactly in the continuum; otherwise g = 0 (a deliberately incompatible
    negative control).
    """
    if support is None:
        support = min(3.0, 0.75 * grid.L)
    w_nc = 0.75 * h_width
    h0, dh0 = _bump(grid, h_amp, h_width, support)
    n0, dn0 = _bump(grid, n_amp, w_nc, support, center=(0.4 * h_width, 0.2 * h_width))
    c0, _ = _bump(grid, c_amp, w_nc, support, center=(-0.3 * h_width, -0.3 * h_width))
    h0 = h0 + params.h_tilde
    if compatible:
        g = h0 * dn0 + (1.0 + n0) * dh0
    else:
        g = np.zeros((2, *grid.shape))
    return InitialData(grid, n0, c0, h0, np.zeros((2, *grid.shape)), g)


def uniform_height(grid: G.Grid2D, params: PhysicalParams, n_amp: float = 0.5,
                   c_amp: float = 0.5, width: float = 0.75, support: float | None = None) -> InitialData:
    """h0 = h~ > 0 everywhere with density and substrate bumps."""
    if params.h_tilde <= 0:
        raise ValidationError("uniform_height needs h_tilde > 0", key="h_tilde")
    if support is None:
        support = min(2.0, 0.5 * grid.L)
    n0, dn0 = _bump(grid, n_amp, width, support, center=(0.3, 0.1))
    c0, _ = _bump(grid, c_amp, width, support, center=(-0.2, -0.2))
    h0 = np.full(grid.shape, params.h_tilde)
    return InitialData(grid, n0, c0, h0, np.zeros((2, *grid.shape)), h0 * dn0)


def zero_data(grid: G.Grid2D, params: PhysicalParams) -> InitialData:
    z = np.zeros(grid.shape)
    return InitialData(grid, z, z.copy(), np.full(grid.shape, params.h_tilde),
                       np.zeros((2, *grid.shape)), np.zeros((2, *grid.shape)))


GENERATORS = {
    "gaussian_vacuum": gaussian_vacuum,
    "uniform_height": uniform_height,
    "zero": zero_data,
}


def compatibility_scale(init: InitialData, params: PhysicalParams) -> float:
    """Size of the terms balanced in the compatibility residual."""
    from .momentum import lame_apply, pressure_force

    grid = init.grid
    return (G.lp_norm(grid, lame_apply(grid, init.u0, params), 2)
            + G.lp_norm(grid, pressure_force(grid, init.h0, init.n0), 2)
            + G.lp_norm(grid, init.h0 * init.g, 2))
