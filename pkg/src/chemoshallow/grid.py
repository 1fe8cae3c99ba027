"""
Uniform tensor grid on the square [-L, L]^2 with finite-difference stencils,
trapezoid quadrature and the plain / weighted / Sobolev norms used by the
solver and the diagnostics.

Fields are plain numpy arrays indexed ``f[i, j]`` with ``x = -L + i*dx`` and
``y = -L + j*dx``. A scalar field has shape ``(N, N)``, a vector field
``(2, N, N)``; higher tensors carry extra leading axes. Norms of non-scalar
fields are taken of the pointwise Euclidean (Frobenius) magnitude.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import GridMismatchError, ValidationError

SNAPSHOT_MAGIC = b"CSWF"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sIII")


@dataclass(frozen=True)
class Grid2D:
    """Uniform N x N node grid on [-L, L]^2."""

    L: float
    N: int

    @property
    def dx(self) -> float:
        return 2.0 * self.L / (self.N - 1)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.N, self.N)

    @cached_property
    def x(self) -> np.ndarray:
        """1D node coordinates, identical along both axes."""
        return -self.L + np.arange(self.N) * self.dx

    @cached_property
    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.x, indexing="ij")

    @cached_property
    def radius(self) -> np.ndarray:
        X, Y = self.mesh
        return np.hypot(X, Y)

    @cached_property
    def weights(self) -> np.ndarray:
        """Composite-trapezoid quadrature weights, shape (N, N)."""
        w = np.full(self.N, self.dx)
        w[0] = w[-1] = 0.5 * self.dx
        return np.outer(w, w)

    @cached_property
    def area(self) -> float:
        return float(self.weights.sum())

    def check(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape[-2:] != self.shape:
            raise GridMismatchError(
                f"field of shape {f.shape} does not live on a {self.N}x{self.N} grid"
            )
        return f


def make_grid(L: float, N: int) -> Grid2D:
    if not L > 0:
        raise ValidationError(f"half width L must be positive, got {L}", key="L")
    if int(N) != N or N < 8:
        raise ValidationError(f"points per axis N must be an integer >= 8, got {N}", key="N")
    return Grid2D(float(L), int(N))


# ---------------------------------------------------------------------------
# stencils

def first_difference(f: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Central difference with one-sided second-order ends (-3, 4, -1) / 2h.

    Stencil weights are combined before dividing by ``h`` so constants
    differentiate to exactly zero.
    """
    f = np.moveaxis(np.asarray(f, dtype=float), axis, 0)
    out = np.empty_like(f)
    out[1:-1] = f[2:] - f[:-2]
    out[0] = -3.0 * f[0] + 4.0 * f[1] - f[2]
    out[-1] = 3.0 * f[-1] - 4.0 * f[-2] + f[-3]
    return np.moveaxis(out, 0, axis) / (2.0 * h)


def gradient(grid: Grid2D, f: np.ndarray) -> np.ndarray:
    """Second-order gradient; prepends an axis of length 2 (d/dx, d/dy).

    Central differences in the interior, one-sided second order on the
    boundary rows. Works on any tensor field: ``gradient(u)[a, b] = d_a u_b``.
    """
    f = grid.check(f)
    return np.stack([first_difference(f, grid.dx, -2), first_difference(f, grid.dx, -1)])


def divergence(grid: Grid2D, w: np.ndarray) -> np.ndarray:
    w = grid.check(w)
    return first_difference(w[0], grid.dx, -2) + first_difference(w[1], grid.dx, -1)


def _second_difference(f: np.ndarray, dx: float, axis: int) -> np.ndarray:
    f = np.moveaxis(f, axis, 0)
    out = np.empty_like(f)
    out[1:-1] = f[2:] - 2.0 * f[1:-1] + f[:-2]
    out[0] = 2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]
    out[-1] = 2.0 * f[-1] - 5.0 * f[-2] + 4.0 * f[-3] - f[-4]
    return np.moveaxis(out, 0, axis) / dx**2


def laplacian(grid: Grid2D, f: np.ndarray) -> np.ndarray:
    """Five-point Laplacian; boundary rows use one-sided second-order
    second differences (2, -5, 4, -1) in the normal direction."""
    f = grid.check(f)
    return _second_difference(f, grid.dx, -2) + _second_difference(f, grid.dx, -1)


def derivative_tensor(grid: Grid2D, f: np.ndarray, order: int) -> np.ndarray:
    """All ordered partial derivatives of ``f`` of the given order."""
    for _ in range(order):
        f = gradient(grid, f)
    return f


def face_average(f: np.ndarray, axis: int) -> np.ndarray:
    """Average onto the faces between neighbouring nodes along ``axis``."""
    f = np.moveaxis(f, axis, 0)
    return np.moveaxis(0.5 * (f[1:] + f[:-1]), 0, axis)


def face_difference(f: np.ndarray, dx: float, axis: int) -> np.ndarray:
    f = np.moveaxis(f, axis, 0)
    return np.moveaxis((f[1:] - f[:-1]) / dx, 0, axis)


def flux_divergence(grid: Grid2D, fx: np.ndarray, fy: np.ndarray) -> np.ndarray:
    """Nodal divergence of face fluxes in conservative form.

    ``fx`` has shape (N-1, N) (faces normal to x), ``fy`` (N, N-1). Boundary
    nodes own half a cell and see zero flux through the outer wall, so the
    trapezoid sum of the result telescopes to zero.
    """
    dx = grid.dx
    out = np.zeros(grid.shape)
    out[1:-1, :] += (fx[1:, :] - fx[:-1, :]) / dx
    out[0, :] += 2.0 * fx[0, :] / dx
    out[-1, :] -= 2.0 * fx[-1, :] / dx
    out[:, 1:-1] += (fy[:, 1:] - fy[:, :-1]) / dx
    out[:, 0] += 2.0 * fy[:, 0] / dx
    out[:, -1] -= 2.0 * fy[:, -1] / dx
    return out


# ---------------------------------------------------------------------------
# quadrature and norms

def magnitude(f: np.ndarray) -> np.ndarray:
    """Pointwise Euclidean magnitude over all leading (tensor) axes."""
    f = np.asarray(f, dtype=float)
    if f.ndim == 2:
        return np.abs(f)
    return np.sqrt(np.sum(f.reshape(-1, *f.shape[-2:]) ** 2, axis=0))


def integrate(grid: Grid2D, f: np.ndarray) -> float:
    return float(np.sum(grid.weights * grid.check(f)))


def lp_norm(grid: Grid2D, f: np.ndarray, p: float) -> float:
    """L^p norm by trapezoid quadrature; ``p = inf`` gives the max norm.

    Finite p is evaluated on the max-normalized field so that large
    exponents (p = 4/alpha can reach 128) do not overflow.
    """
    if not p >= 1:
        raise ValidationError(f"exponent p must be >= 1, got {p}", key="p")
    a = magnitude(grid.check(f))
    top = float(a.max())
    if np.isinf(p) or top == 0.0:
        return top
    return top * float(np.sum(grid.weights * (a / top) ** p)) ** (1.0 / p)


def radial_weight(grid: Grid2D, power: float, exclude_origin: bool = False) -> np.ndarray:
    """|x|^power on the nodes.

    A node sitting exactly on the origin contributes 0 for nonnegative
    powers; for negative powers it must be excluded explicitly.
    """
    r = grid.radius
    if power >= 0:
        return r**power
    if not exclude_origin and np.any(r == 0.0):
        raise ValidationError("negative radial power needs the origin node excluded")
    with np.errstate(divide="ignore"):
        w = np.where(r > 0.0, r, 1.0) ** power
    return np.where(r > 0.0, w, 0.0)


def weighted_l2_norm(grid: Grid2D, f: np.ndarray, beta: float) -> float:
    """|| |x|^beta f ||_{L^2}."""
    if beta < 0:
        raise ValidationError(f"weight exponent must be >= 0, got {beta}", key="beta")
    a = magnitude(grid.check(f))
    return float(np.sqrt(np.sum(grid.weights * radial_weight(grid, 2.0 * beta) * a**2)))


def seminorm(grid: Grid2D, f: np.ndarray, order: int, p: float = 2.0) -> float:
    """Homogeneous norm ||grad^order f||_{L^p}, i.e. the D^{order,p} norm."""
    return lp_norm(grid, derivative_tensor(grid, f, order), p)


def sobolev_norm(grid: Grid2D, f: np.ndarray, k: int) -> float:
    """H^k norm: sqrt of the summed squared L^2 norms of derivatives 0..k."""
    if k not in (0, 1, 2, 3):
        raise ValidationError(f"Sobolev order must be in 0..3, got {k}", key="k")
    total = 0.0
    d = grid.check(f)
    for j in range(k + 1):
        if j:
            d = gradient(grid, d)
        total += lp_norm(grid, d, 2) ** 2
    return float(np.sqrt(total))


# ---------------------------------------------------------------------------
# snapshot files

def write_snapshot(path, values: np.ndarray) -> None:
    values = np.asarray(values, dtype="<f8")
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise ValidationError(f"snapshot must be square 2D, got {values.shape}")
    header = _HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, values.shape[0], 0)
    Path(path).write_bytes(header + np.ascontiguousarray(values).tobytes())


def read_snapshot(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValidationError(f"{path}: truncated snapshot header")
    magic, version, n, _ = _HEADER.unpack_from(data)
    if magic != SNAPSHOT_MAGIC:
        raise ValidationError(f"{path}: bad magic {magic!r}")
    if version != SNAPSHOT_VERSION:
        raise ValidationError(f"{path}: unsupported snapshot version {version}")
    body = data[_HEADER.size:]
    if len(body) != 8 * n * n:
        raise ValidationError(f"{path}: expected {n * n} samples, found {len(body) // 8}")
    return np.frombuffer(body, dtype="<f8").reshape(n, n).astype(float)
