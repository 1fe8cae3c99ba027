import numpy as np
import pytest
import scipy.sparse.linalg as spla
import sympy as sp

from chemoshallow import grid as G
from chemoshallow import momentum as Mo
from chemoshallow import params as P
from chemoshallow import studies
from chemoshallow.errors import VacuumError
from chemoshallow.linalg import embed, lame_matrix


def test_lame_constant_zero(g33, params):
    u = np.stack([np.full(g33.shape, 2.0), np.full(g33.shape, -1.0)])
    assert not np.any(Mo.lame_apply(g33, u, params))


def test_lame_analytic_second_order():
    p = P.PhysicalParams(1.0, 0.0)
    errs = []
    for N in (33, 65, 129):
        grid = G.make_grid(np.pi, N)
        X, Y = grid.mesh
        u = np.stack([np.sin(X) * np.sin(Y), np.zeros(grid.shape)])
        exact = np.stack([3 * np.sin(X) * np.sin(Y), -np.cos(X) * np.cos(Y)])
        # nested one-sided differences are first order on the two outer rings
        errs.append(np.abs(Mo.lame_apply(grid, u, p) - exact)[:, 2:-2, 2:-2].max())
    assert 3.5 < errs[0] / errs[1] < 4.5 and 3.5 < errs[1] / errs[2] < 4.5


def test_lame_divergence_free():
    p = P.PhysicalParams(1.0, 2.0)
    errs = []
    for N in (33, 65, 129):
        grid = G.make_grid(3.0, N)
        X, Y = grid.mesh
        phi = np.exp(-(X**2 + Y**2))
        u = np.stack([2 * Y * phi, -2 * X * phi])  # (-phi_y, phi_x)
        lap = np.stack([G.laplacian(grid, u[0]), G.laplacian(grid, u[1])])
        errs.append(np.abs(Mo.lame_apply(grid, u, p) + p.mu * lap).max())
    assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5


def test_rest_state(g33, params):
    z = np.zeros(g33.shape)
    u = Mo.advance_u(g33, np.zeros((2, 33, 33)), z + 1.0, z, np.zeros((2, 33, 33)), params,
                     Mo.MomentumStepConfig(0.01))
    assert not np.any(u)


def test_eigenmode_sine_decay():
    # mu + lam = 0 leaves -mu Lap, diagonalized by products of sines
    grid = G.make_grid(2.0, 25)
    X, Y = grid.mesh
    L = grid.L
    with pytest.warns(UserWarning):
        p = P.PhysicalParams(mu=0.8, lam=-0.8)
    k1, k2 = 2, 3
    mode = np.sin(k1 * np.pi * (X + L) / (2 * L)) * np.sin(k2 * np.pi * (Y + L) / (2 * L))
    mode[[0, -1], :] = 0
    mode[:, [0, -1]] = 0
    eig = p.mu * 4 / grid.dx**2 * (np.sin(k1 * np.pi * grid.dx / (4 * L)) ** 2
                                   + np.sin(k2 * np.pi * grid.dx / (4 * L)) ** 2)
    hbar, dt = 1.3, 0.01
    u = np.stack([mode, -0.5 * mode])
    u0 = u.copy()
    z = np.zeros(grid.shape)
    for step in range(1, 21):
        u = Mo.advance_u(grid, u, z + hbar, z, np.zeros_like(u), p, Mo.MomentumStepConfig(dt))
        assert np.abs(u - (hbar / (hbar + dt * eig)) ** step * u0).max() <= 1e-10


@pytest.mark.parametrize("lam", [0.0, 1.0, 5.0])
def test_eigenmode_general_lame(lam):
    p = P.PhysicalParams(1.0, lam)
    grid = G.make_grid(1.0, 17)
    A = lame_matrix(grid, p.mu, p.lam)
    vals, vecs = spla.eigsh(A.tocsc(), k=3, sigma=0.0)
    hbar, dt = 0.6, 0.002
    z = np.zeros(grid.shape)
    for eig, vec in zip(vals, vecs.T):
        u0 = embed(grid, vec.reshape(2, -1))
        u = Mo.advance_u(grid, u0, z + hbar, z, np.zeros_like(u0), p, Mo.MomentumStepConfig(dt))
        assert np.abs(u - hbar / (hbar + dt * eig) * u0).max() <= 1e-10


@pytest.mark.parametrize("seed", range(10))
def test_kinetic_energy_nonincreasing(seed):
    rng = np.random.default_rng(seed)
    grid = G.make_grid(1.0, 21)
    p = P.PhysicalParams(rng.uniform(0.2, 2.0), rng.uniform(0.0, 3.0))
    hbar = rng.uniform(0.1, 2.0)
    u = embed(grid, rng.normal(size=(2, 19 * 19)))
    z = np.zeros(grid.shape)
    h = z + hbar
    energy = [G.integrate(grid, h * (u**2).sum(axis=0))]
    for _ in range(15):
        u = Mo.advance_u(grid, u, h, z, np.zeros_like(u), p, Mo.MomentumStepConfig(0.005))
        energy.append(G.integrate(grid, h * (u**2).sum(axis=0)))
    assert np.all(np.diff(energy) <= 0)


def test_linearity_in_forcing(rng):
    grid = G.make_grid(1.0, 21)
    p = P.PhysicalParams()
    X, Y = grid.mesh
    h = 1.0 + 0.3 * np.exp(-(X**2 + Y**2))
    u = embed(grid, rng.normal(size=(2, 19 * 19)))
    v = 0.1 * rng.normal(size=(2, *grid.shape))
    F = rng.normal(size=(2, *grid.shape))
    cfg = Mo.MomentumStepConfig(0.01, tol_lin=1e-14)
    z = np.zeros(grid.shape)
    free = Mo.advance_u(grid, u, h, z, v, p, cfg, forcing=np.zeros_like(F))
    one = Mo.advance_u(grid, u, h, z, v, p, cfg, forcing=F)
    two = Mo.advance_u(grid, u, h, z, v, p, cfg, forcing=2 * F)
    assert np.allclose(two - free, 2 * (one - free), rtol=0, atol=1e-12 * np.abs(one - free).max())


def test_pressure_force_default(rng):
    grid = G.make_grid(1.0, 21)
    p = P.PhysicalParams()
    X, Y = grid.mesh
    h = 1.0 + 0.3 * np.exp(-(X**2 + Y**2))
    n = 0.2 * np.exp(-((X - 0.2) ** 2 + Y**2))
    u = np.zeros((2, *grid.shape))
    cfg = Mo.MomentumStepConfig(0.01)
    a = Mo.advance_u(grid, u, h, n, u, p, cfg)
    b = Mo.advance_u(grid, u, h, n, u, p, cfg, forcing=Mo.pressure_force(grid, h, n))
    assert np.array_equal(a, b)
    assert np.all(a[:, [0, -1], :] == 0) and np.all(a[:, :, [0, -1]] == 0)


def test_vacuum_floor_names_node(g33, params):
    h = np.ones(g33.shape)
    h[4, 7] = 1e-4
    with pytest.raises(VacuumError) as e:
        Mo.advance_u(g33, np.zeros((2, 33, 33)), h, np.zeros(g33.shape), np.zeros((2, 33, 33)),
                     params, Mo.MomentumStepConfig(0.01), h_floor=1e-3)
    assert e.value.node == (4, 7)
    with pytest.raises(VacuumError):
        Mo.advance_u(g33, np.zeros((2, 33, 33)), h * 0, np.zeros(g33.shape),
                     np.zeros((2, 33, 33)), params, Mo.MomentumStepConfig(0.01))


def test_first_step_acceleration():
    # h u_t = -(L u0 + F) = -h0 g with the balance taken at the lifted height
    p = P.PhysicalParams()
    dt = 1e-8
    errs = []
    for N in (65, 129, 257):
        grid = G.make_grid(5.0, N)
        init = P.gaussian_vacuum(grid, p)
        reg = P.build_regularized_init(init, 5.0)
        h, n = reg.h0, init.n0
        _, dh = P._bump(grid, 1.0, 1.0, 3.0)
        _, dn = P._bump(grid, 0.5, 0.75, 3.0, center=(0.4, 0.2))
        g_lift = h * dn + (1 + n) * dh
        u1 = Mo.advance_u(grid, init.u0, h, n, np.zeros_like(init.u0), p,
                          Mo.MomentumStepConfig(dt), h_floor=reg.delta * 0.5)
        mask = init.h0 > 0.1
        errs.append(np.abs(u1 / dt + g_lift)[:, mask].max())
    assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5


def test_cfl_fallback(g33, params):
    u = np.zeros((2, 33, 33))
    u[0, 10:20, 10:20] = 1.0
    v = np.stack([np.full(g33.shape, 10.0), np.zeros(g33.shape)])
    h = np.ones(g33.shape)
    out = Mo.advance_u(g33, u, h, np.zeros(g33.shape), v, params, Mo.MomentumStepConfig(0.1))
    assert np.all(np.isfinite(out)) and np.abs(out).max() < 2.0


def test_mms_forcing_matches_symbolic():
    p = P.PhysicalParams(1.0, 2.0)
    x, y, t = sp.symbols("x y t", real=True)
    L = 1.0
    k = sp.pi / (2 * L)
    b = sp.cos(k * x) * sp.cos(k * y)
    u1 = u2 = sp.exp(-t) * b
    h = 1 + b / 2
    div = sp.diff(u1, x) + sp.diff(u2, y)
    Lu1 = -p.mu * (sp.diff(u1, x, 2) + sp.diff(u1, y, 2)) - (p.mu + p.lam) * sp.diff(div, x)
    Lu2 = -p.mu * (sp.diff(u2, x, 2) + sp.diff(u2, y, 2)) - (p.mu + p.lam) * sp.diff(div, y)
    F1 = -(h * sp.diff(u1, t) + Lu1)
    F2 = -(h * sp.diff(u2, t) + Lu2)
    grid = G.make_grid(L, 17)
    X, Y = grid.mesh
    F = studies.momentum_mms_fields(grid, 0.4, p)[2]
    assert np.allclose(F[0], sp.lambdify((x, y, t), F1)(X, Y, 0.4), atol=1e-12)
    assert np.allclose(F[1], sp.lambdify((x, y, t), F2)(X, Y, 0.4), atol=1e-12)


@pytest.mark.parametrize("lam", [0.0, 2.0])
def test_momentum_mms_order(lam):
    res = studies.momentum_mms_study(P.PhysicalParams(1.0, lam))
    assert min(res["orders"]) >= 1.8
