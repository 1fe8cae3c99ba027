"""Height transport h_t + div(h v) = 0 along backward characteristics.

The height at (x, t) is the initial height at the foot of the characteristic
through (x, t), damped by the exponential of the divergence integrated along
that characteristic. Feet are found with RK4 on the augmented system
(U, I)' = (v(U, s), div v(U, s)); on the divergence component RK4 reduces
to Simpson's rule on the same substeps. Off-grid values come from bilinear
interpolation in space and linear interpolation in time.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numba
import numpy as np

from . import grid as G
from .errors import CharacteristicExitError, ValidationError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Trajectory:
    """Fields on uniformly spaced frame times; frames have shape (K+1, ...)."""

    grid: G.Grid2D
    times: np.ndarray
    frames: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or len(times) != len(self.frames):
            raise ValidationError("times and frames must align")
        if len(times) > 1:
            steps = np.diff(times)
            if not np.all(steps > 0) or not np.allclose(steps, steps[0], rtol=1e-9, atol=0):
                raise ValidationError("frame times must be increasing and uniform")
        if self.frames.shape[-2:] != self.grid.shape:
            raise ValidationError("frames do not match the grid")
        if not np.all(np.isfinite(self.frames)):
            raise ValidationError("trajectory contains non-finite samples")

    @property
    def K(self) -> int:
        return len(self.times) - 1

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if self.K else 0.0

    def __len__(self):
        return len(self.times)


ScalarFieldTrajectory = Trajectory
VelocityTrajectory = Trajectory


def constant_trajectory(grid: G.Grid2D, frame: np.ndarray, T: float, K: int) -> Trajectory:
    times = np.linspace(0.0, T, K + 1)
    frames = np.broadcast_to(frame, (K + 1, *np.shape(frame))).copy()
    return Trajectory(grid, times, frames)


@dataclass(frozen=True)
class CharacteristicPath:
    """Backward characteristic through (x, t).

    ``positions[j]`` is U(s_j; x, t) at the frame times ``times[j] <= t`` and
    ``div_integral[j]`` the integral of div v along the path from s_j to t.
    """

    anchor: tuple[float, float]
    t: float
    times: np.ndarray
    positions: np.ndarray
    div_integral: np.ndarray
    clamped: bool


# ---------------------------------------------------------------------------
# kernels

@numba.njit(cache=True, error_model="numpy")
def _sample(F, lev, x, y, L, dx, N):
    fx = (x + L) / dx
    fy = (y + L) / dx
    i = int(np.floor(fx))
    j = int(np.floor(fy))
    if i < 0:
        i = 0
    elif i > N - 2:
        i = N - 2
    if j < 0:
        j = 0
    elif j > N - 2:
        j = N - 2
    tx = min(max(fx - i, 0.0), 1.0)
    ty = min(max(fy - j, 0.0), 1.0)
    w00 = (1.0 - tx) * (1.0 - ty)
    w10 = tx * (1.0 - ty)
    w01 = (1.0 - tx) * ty
    w11 = tx * ty
    f00 = F[lev, i, j]
    f10 = F[lev, i + 1, j]
    f01 = F[lev, i, j + 1]
    f11 = F[lev, i + 1, j + 1]
    a = w00 * f00[0] + w10 * f10[0] + w01 * f01[0] + w11 * f11[0]
    b = w00 * f00[1] + w10 * f10[1] + w01 * f01[1] + w11 * f11[1]
    c = w00 * f00[2] + w10 * f10[2] + w01 * f01[2] + w11 * f11[2]
    return a, b, c


@numba.njit(cache=True, error_model="numpy")
def _rk4_back(F, lev, x, y, dt, L, dx, N):
    """One RK4 step from frame ``lev`` to ``lev - 1``; returns (x, y, dI).

    ``F`` interleaves frames (even levels) and time midpoints (odd levels).
    """
    h = -dt
    e = 2 * lev
    k1x, k1y, d1 = _sample(F, e, x, y, L, dx, N)
    k2x, k2y, d2 = _sample(F, e - 1, x + 0.5 * h * k1x, y + 0.5 * h * k1y, L, dx, N)
    k3x, k3y, d3 = _sample(F, e - 1, x + 0.5 * h * k2x, y + 0.5 * h * k2y, L, dx, N)
    k4x, k4y, d4 = _sample(F, e - 2, x + h * k3x, y + h * k3y, L, dx, N)
    xn = x + h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
    yn = y + h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
    dI = dt / 6.0 * (d1 + 2.0 * d2 + 2.0 * d3 + d4)
    return xn, yn, dI


@numba.njit(cache=True, error_model="numpy")
def _clamp(x, y, L, dx):
    """Clamp into the square; flags: 1 clamped, 2 outside by more than a cell."""
    flag = 0
    if x < -L or x > L or y < -L or y > L:
        flag = 1
        if x < -L - dx or x > L + dx or y < -L - dx or y > L + dx:
            flag = 2
        x = min(max(x, -L), L)
        y = min(max(y, -L), L)
    return x, y, flag


@numba.njit(cache=True, error_model="numpy")
def _trace_path(F, k0, x, y, dt, L, dx, N):
    out = np.empty((k0 + 1, 3))
    out[k0, 0] = x
    out[k0, 1] = y
    out[k0, 2] = 0.0
    acc = 0.0
    worst = 0
    for lev in range(k0, 0, -1):
        x, y, dI = _rk4_back(F, lev, x, y, dt, L, dx, N)
        x, y, flag = _clamp(x, y, L, dx)
        worst = max(worst, flag)
        acc += dI
        out[lev - 1, 0] = x
        out[lev - 1, 1] = y
        out[lev - 1, 2] = acc
    return out, worst


@numba.njit(cache=True, error_model="numpy")
def _trace_feet(F, k0, xs, ys, dt, L, dx, N):
    m = xs.shape[0]
    fx = np.empty(m)
    fy = np.empty(m)
    fI = np.empty(m)
    flags = np.zeros(m, dtype=np.int64)
    for p in range(m):
        x = xs[p]
        y = ys[p]
        acc = 0.0
        worst = 0
        for lev in range(k0, 0, -1):
            x, y, dI = _rk4_back(F, lev, x, y, dt, L, dx, N)
            x, y, flag = _clamp(x, y, L, dx)
            if flag > worst:
                worst = flag
            acc += dI
        fx[p] = x
        fy[p] = y
        fI[p] = acc
        flags[p] = worst
    return fx, fy, fI, flags


# ---------------------------------------------------------------------------

def _stacked_levels(v: Trajectory) -> np.ndarray:
    """(2K+1, N, N, 3): (v1, v2, div v) on frames and on time midpoints.

    Midpoint levels are the frame averages, i.e. linear interpolation in time.
    """
    if v.frames.ndim != 4 or v.frames.shape[1] != 2:
        raise ValidationError("velocity trajectory frames must have shape (K+1, 2, N, N)")
    grid = v.grid
    out = np.empty((2 * v.K + 1, grid.N, grid.N, 3))
    for k in range(v.K + 1):
        out[2 * k, :, :, 0] = v.frames[k, 0]
        out[2 * k, :, :, 1] = v.frames[k, 1]
        out[2 * k, :, :, 2] = G.divergence(grid, v.frames[k])
    out[1::2] = 0.5 * (out[0:-1:2] + out[2::2])
    return out


def _frame_index(v: Trajectory, t: float) -> int:
    k = int(round((t - v.times[0]) / v.dt)) if v.K else 0
    if not (0 <= k <= v.K and np.isclose(v.times[k], t, rtol=0, atol=1e-12 * max(1.0, abs(t)))):
        raise ValidationError(f"t = {t} is not a trajectory frame time")
    return k


def trace_characteristic(v: Trajectory, x, t: float) -> CharacteristicPath:
    """Backward characteristic from the point ``x`` at frame time ``t`` to the
    first frame."""
    grid = v.grid
    k0 = _frame_index(v, t)
    out, worst = _trace_path(_stacked_levels(v), k0, float(x[0]), float(x[1]),
                             v.dt, grid.L, grid.dx, grid.N)
    if worst >= 2:
        raise CharacteristicExitError(
            f"characteristic through {tuple(x)} at t={t} left the domain by more than one cell"
        )
    return CharacteristicPath(
        anchor=(float(x[0]), float(x[1])), t=float(t), times=v.times[: k0 + 1].copy(),
        positions=out[:, :2].copy(), div_integral=out[:, 2].copy(), clamped=worst >= 1,
    )


def bilinear(grid: G.Grid2D, f: np.ndarray, px: np.ndarray, py: np.ndarray) -> np.ndarray:
    """Bilinear interpolation of a nodal field at arbitrary points in the square."""
    fx = (np.asarray(px) + grid.L) / grid.dx
    fy = (np.asarray(py) + grid.L) / grid.dx
    i = np.clip(np.floor(fx).astype(int), 0, grid.N - 2)
    j = np.clip(np.floor(fy).astype(int), 0, grid.N - 2)
    tx = np.clip(fx - i, 0.0, 1.0)
    ty = np.clip(fy - j, 0.0, 1.0)
    return ((1 - tx) * (1 - ty) * f[i, j] + tx * (1 - ty) * f[i + 1, j]
            + (1 - tx) * ty * f[i, j + 1] + tx * ty * f[i + 1, j + 1])


@dataclass(frozen=True)
class HeightSolution:
    h: Trajectory
    clamped: int  # node traces that touched the boundary and were clamped


def solve_height(h0: np.ndarray, v: Trajectory) -> HeightSolution:
    """Height on every frame of ``v`` from the characteristic formula.

    The result is a product of an interpolated nonnegative sample and an
    exponential, hence nonnegative wherever h0 is.
    """
    grid = v.grid
    h0 = grid.check(h0)
    if np.any(h0 < 0):
        raise ValidationError("h0 must be nonnegative", key="h0")
    F = _stacked_levels(v)
    X, Y = grid.mesh
    xs, ys = X.ravel().copy(), Y.ravel().copy()
    frames = np.empty((v.K + 1, grid.N, grid.N))
    frames[0] = h0
    clamped = 0
    for k in range(1, v.K + 1):
        fx, fy, fI, flags = _trace_feet(F, k, xs, ys, v.dt, grid.L, grid.dx, grid.N)
        if np.any(flags >= 2):
            bad = int(np.argmax(flags >= 2))
            raise CharacteristicExitError(
                f"characteristic from node {np.unravel_index(bad, grid.shape)} at frame {k} "
                "left the domain by more than one cell"
            )
        clamped += int(np.count_nonzero(flags))
        frames[k] = (bilinear(grid, h0, fx, fy) * np.exp(-fI)).reshape(grid.shape)
    if clamped:
        log.info("solve_height: %d characteristic traces clamped at the boundary", clamped)
    return HeightSolution(Trajectory(grid, v.times.copy(), frames), clamped)


def time_derivative(traj: Trajectory) -> np.ndarray:
    """Frame differencing: central inside, second-order one-sided at the ends
    (first order when only two frames exist)."""
    if traj.K == 0:
        return np.zeros_like(traj.frames)
    if traj.K == 1:
        d = (traj.frames[1] - traj.frames[0]) / traj.dt
        return np.stack([d, d])
    return G.first_difference(traj.frames, traj.dt, 0)


@dataclass(frozen=True)
class HeightSquared:
    h2: Trajectory
    residual: np.ndarray | None  # per-frame L^2 norm of the companion-equation residual


def height_squared(h: Trajectory, v: Trajectory | None = None) -> HeightSquared:
    """Square of the height; with ``v`` also the residual of
    (h^2)_t + v . grad h^2 + 2 h^2 div v = 0 per frame."""
    h2 = Trajectory(h.grid, h.times, h.frames**2)
    if v is None:
        return HeightSquared(h2, None)
    grid = h.grid
    dt_h2 = time_derivative(h2)
    res = np.empty(h.K + 1)
    for k in range(h.K + 1):
        r = (dt_h2[k] + np.sum(v.frames[k] * G.gradient(grid, h2.frames[k]), axis=0)
             + 2.0 * h2.frames[k] * G.divergence(grid, v.frames[k]))
        res[k] = G.lp_norm(grid, r, 2)
    return HeightSquared(h2, res)
