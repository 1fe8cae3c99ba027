import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from chemoshallow import grid as G
from chemoshallow.errors import SolverError
from chemoshallow.linalg import (cell_divergence, dirichlet_laplacian, embed, interior,
                                 lame_matrix, pcg)


def test_interior_embed_roundtrip(rng, g33):
    f = rng.normal(size=(33, 33))
    f[0] = f[-1] = f[:, 0] = f[:, -1] = 0
    assert np.array_equal(embed(g33, interior(f)), f)
    u = rng.normal(size=(2, 33, 33))
    assert embed(g33, interior(u)).shape == (2, 33, 33)


def test_dirichlet_laplacian_matches_stencil(rng):
    grid = G.make_grid(1.0, 17)
    f = np.zeros(grid.shape)
    f[1:-1, 1:-1] = rng.normal(size=(15, 15))
    lap = dirichlet_laplacian(grid) @ interior(f)
    assert np.allclose(lap, interior(G.laplacian(grid, f)), atol=1e-10)


def test_dirichlet_laplacian_eigenvalues():
    grid = G.make_grid(1.0, 12)
    n = grid.N - 2
    A = -dirichlet_laplacian(grid).toarray()
    k = np.arange(1, n + 1)
    lam1 = 4 / grid.dx**2 * np.sin(k * np.pi / (2 * (n + 1))) ** 2
    expected = np.sort((lam1[:, None] + lam1[None, :]).ravel())
    assert np.allclose(np.linalg.eigvalsh(A), expected, rtol=1e-12)


def test_cell_divergence_consistent_for_linear_fields():
    grid = G.make_grid(1.0, 9)
    X, Y = grid.mesh
    # u vanishing on the boundary: u = (phi, 2 phi) with phi = (1-x^2)(1-y^2)
    phi = (1 - X**2) * (1 - Y**2)
    u = np.stack([phi, 2 * phi])
    d = cell_divergence(grid) @ interior(u).ravel()
    # exact cell averages of the bilinear-interpolant divergence: compare at one cell by hand
    dx = grid.dx
    i = j = 3
    dx_u1 = 0.5 * ((u[0, i + 1, j] - u[0, i, j]) + (u[0, i + 1, j + 1] - u[0, i, j + 1])) / dx
    dy_u2 = 0.5 * ((u[1, i, j + 1] - u[1, i, j]) + (u[1, i + 1, j + 1] - u[1, i + 1, j])) / dx
    assert d[i * (grid.N - 1) + j] == pytest.approx(dx_u1 + dy_u2, rel=1e-13)


@pytest.mark.parametrize("mu,lam", [(1.0, 0.0), (1.0, 3.0), (0.5, -0.5), (2.0, 10.0)])
def test_lame_matrix_spd(mu, lam):
    grid = G.make_grid(1.0, 10)
    A = lame_matrix(grid, mu, lam).toarray()
    assert np.allclose(A, A.T, atol=1e-12)
    assert np.linalg.eigvalsh(A).min() > 0


def test_pcg_against_direct(rng):
    grid = G.make_grid(1.0, 20)
    A = (lame_matrix(grid, 1.0, 2.0) + sp.identity(2 * 18 * 18)).tocsr()
    b = rng.normal(size=A.shape[0])
    x, info = pcg(A, b, tol=1e-12)
    assert info.converged
    assert np.allclose(x, spla.spsolve(A.tocsc(), b), rtol=1e-9, atol=1e-12)
    assert np.all(np.diff(info.energy) <= 0)
    # energy bookkeeping matches J(x) = x.Ax/2 - b.x at the end
    assert info.energy[-1] == pytest.approx(0.5 * x @ (A @ x) - b @ x, rel=1e-8)


def test_pcg_zero_rhs():
    A = sp.identity(5, format="csr")
    x, info = pcg(A, np.zeros(5))
    assert not np.any(x) and info.iterations == 0


def test_pcg_rejects_indefinite():
    A = sp.diags([1.0, -1.0, 2.0]).tocsr()
    with pytest.raises(SolverError):
        pcg(A, np.array([1.0, 1.0, 1.0]), diag=np.ones(3))


def test_pcg_maxiter():
    grid = G.make_grid(1.0, 40)
    A = -dirichlet_laplacian(grid)
    with pytest.raises(SolverError) as e:
        pcg(A, np.ones(A.shape[0]), maxiter=3)
    assert e.value.iterations == 3
