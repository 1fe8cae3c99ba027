"""Acceptance criteria, one test each, at the stated tolerances. Every test
records a single pass/fail line that is repeated in the terminal summary."""

import filecmp
import os

import numpy as np
import pytest

from chemoshallow import cli
from chemoshallow import diagnostics as D
from chemoshallow import fixedpoint as F
from chemoshallow import grid as G
from chemoshallow import momentum as Mo
from chemoshallow import parabolic as Pb
from chemoshallow import params as P
from chemoshallow import studies
from chemoshallow import transport as T
from chemoshallow.linalg import embed


def _ratios(errs):
    e = np.asarray(errs)
    return e[:-1] / e[1:]


def _sine_mode(grid, k1, k2):
    X, Y = grid.mesh
    L = grid.L
    f = np.sin(k1 * np.pi * (X + L) / (2 * L)) * np.sin(k2 * np.pi * (Y + L) / (2 * L))
    f[[0, -1], :] = 0
    f[:, [0, -1]] = 0
    lam = 4 / grid.dx**2 * (np.sin(k1 * np.pi * grid.dx / (4 * L)) ** 2
                            + np.sin(k2 * np.pi * grid.dx / (4 * L)) ** 2)
    return f, lam


def test_c01_stencil_order(report):
    errs = studies.stencil_errors((33, 65, 129))
    ratios = {k: _ratios(v) for k, v in errs.items()}
    ok = all(np.all((3.5 <= r) & (r <= 4.5)) for r in ratios.values())
    report(1, ok, "ratios " + ", ".join(f"{k}={np.round(r, 3).tolist()}" for k, r in ratios.items()))
    assert ok


def test_c02_characteristic_transport(report):
    grid = G.make_grid(5.0, 201)
    X, Y = grid.mesh
    Tend = 0.5
    v = T.constant_trajectory(grid, np.stack([X, Y]), Tend, 100)
    h = T.solve_height(np.exp(-(X**2 + Y**2)), v).h.frames[-1]
    exact = np.exp(-(X**2 + Y**2) * np.exp(-2 * Tend)) * np.exp(-2 * Tend)
    rel = np.sqrt(G.integrate(grid, (h - exact) ** 2) / G.integrate(grid, exact**2))
    coarse = G.make_grid(5.0, 41)
    Xc, Yc = coarse.mesh
    perr = []
    for K in (10, 20, 40):
        p = T.trace_characteristic(T.constant_trajectory(coarse, np.stack([Xc, Yc]), 1.0, K), (1.0, 0.5), 1.0)
        perr.append(np.abs(p.positions - np.array([1.0, 0.5]) * np.exp(p.times - 1.0)[:, None]).max())
    r = _ratios(perr)
    ok = rel <= 1e-3 and bool(np.all((14 <= r) & (r <= 18)))
    report(2, ok, f"rel L2 error {rel:.3e} (<= 1e-3), RK4 path ratios {np.round(r, 2).tolist()}")
    assert ok


def test_c03_height_positivity(report):
    grid = G.make_grid(3.0, 17)
    X, Y = grid.mesh
    bump = np.exp(-(X**2 + Y**2))
    violations = 0
    for seed in range(1000):
        rng = np.random.default_rng([3, seed])
        h0 = np.abs(rng.normal(size=grid.shape)) * (rng.uniform(size=grid.shape) > 0.3)
        K = 5
        a = rng.normal(size=(K + 1, 6))
        frames = np.stack([np.stack([(c[0] * X + c[1] * Y + c[4] * np.sin(X)) * bump,
                                     (c[2] * X + c[3] * Y + c[5] * np.cos(Y)) * bump]) for c in a])
        v = T.Trajectory(grid, np.linspace(0, 0.5, K + 1), frames)
        violations += int(T.solve_height(h0, v).h.frames.min() < 0)
    ok = violations == 0
    report(3, ok, f"{violations} negative heights in 1000 cases")
    assert ok


def test_c04_mass_ledger(report, canonical_solution):
    _, coarse = canonical_solution
    d0 = D.conservation_report(coarse.h).max_drift
    grid = G.make_grid(5.0, 129)
    p = P.PhysicalParams()
    fine = F.run_fixed_point(P.gaussian_vacuum(grid, p), p, F.FixedPointConfig(T=0.1, dt=0.0025))
    d1 = D.conservation_report(fine.h).max_drift
    ok = d0 <= 1e-3 and d1 <= 1e-3 and d1 <= 0.5 * d0
    report(4, ok, f"drift {d0:.3e} at (dx, dt), {d1:.3e} at (dx/2, dt/2), ratio {d1 / d0:.3f} (<= 0.5)")
    assert ok


def test_c05_parabolic(report):
    grid = G.make_grid(2.0, 33)
    worst = 0.0
    for theta in (1.0, 0.5):
        for k in ((1, 1), (2, 3), (5, 1)):
            f, lam = _sine_mode(grid, *k)
            mbar, dt = 0.7, 0.003
            z = lam + mbar
            factor = (1 - (1 - theta) * dt * z) / (1 + theta * dt * z)
            cfg = Pb.ParabolicStepConfig(dt, theta=theta)
            c, v, m = f.copy(), np.zeros((2, *grid.shape)), np.full(grid.shape, mbar)
            for step in range(1, 51):
                c = Pb.advance_c(grid, c, v, m, cfg)
                worst = max(worst, float(np.abs(c - factor**step * f).max()))
    orders = studies.density_mms_study()["orders"]
    ok = worst <= 1e-10 and min(orders) >= 1.8
    report(5, ok, f"eigenmode deviation {worst:.2e} (<= 1e-10), MMS orders {np.round(orders, 3).tolist()}")
    assert ok


def test_c06_momentum(report):
    grid = G.make_grid(1.0, 21)
    z = np.zeros(grid.shape)
    worst = 0.0
    p = P.PhysicalParams(1.0, 0.0)
    import scipy.sparse.linalg as spla

    from chemoshallow.linalg import lame_matrix
    vals, vecs = spla.eigsh(lame_matrix(grid, p.mu, p.lam).tocsc(), k=4, sigma=0.0)
    hbar, dt = 0.8, 0.004
    for eig, vec in zip(vals, vecs.T):
        u = u0 = embed(grid, vec.reshape(2, -1))
        for step in range(1, 11):
            u = Mo.advance_u(grid, u, z + hbar, z, np.zeros_like(u), p, Mo.MomentumStepConfig(dt))
            worst = max(worst, float(np.abs(u - (hbar / (hbar + dt * eig)) ** step * u0).max()))
    violations = 0
    for seed in range(20):
        rng = np.random.default_rng([6, seed])
        pr = P.PhysicalParams(rng.uniform(0.2, 2.0), rng.uniform(0.0, 3.0))
        hb = rng.uniform(0.1, 2.0)
        u = embed(grid, rng.normal(size=(2, 19 * 19)))
        e = [G.integrate(grid, hb * (u**2).sum(axis=0))]
        for _ in range(10):
            u = Mo.advance_u(grid, u, z + hb, z, np.zeros_like(u), pr, Mo.MomentumStepConfig(0.005))
            e.append(G.integrate(grid, hb * (u**2).sum(axis=0)))
        violations += int(np.count_nonzero(np.diff(e) > 0))
    ok = worst <= 1e-10 and violations == 0
    report(6, ok, f"decay-factor deviation {worst:.2e} (<= 1e-10), {violations} energy increases")
    assert ok


def test_c07_fixed_point(report, canonical, canonical_solution):
    zgrid = G.make_grid(2.0, 17)
    p = P.PhysicalParams()
    zsol = F.run_fixed_point(P.zero_data(zgrid, p), p, F.FixedPointConfig(T=0.05, dt=0.01))
    zero_ok = zsol.converged and zsol.sweeps == 1 and zsol.distances == [0.0]
    grid, p, init = canonical
    cfg, sol = canonical_solution
    dec = bool(np.all(np.diff(sol.distances) < 0))
    other = F.run_fixed_point(init, p, cfg, seed=F.zero_seed(grid, cfg.T, cfg.K))
    gap = F.iterate_distance(F.IterateTrajectory(sol.n, sol.u), F.IterateTrajectory(other.n, other.u))
    ok = zero_ok and sol.converged and dec and other.converged and gap <= 10 * sol.tol_fp
    report(7, ok, f"zero data {zsol.sweeps} sweep / distance {zsol.distances[0]}, canonical converged="
                  f"{sol.converged} decreasing={dec}, seed gap {gap:.2e} (<= {10 * sol.tol_fp:.2e})")
    assert ok


def test_c08_functionals(report, canonical, canonical_solution):
    grid = G.make_grid(2.0, 17)
    p = P.PhysicalParams()
    it = F.zero_seed(grid, 0.1, 5)
    phi0 = D.phi_functional(it, 0.1, p)
    c0 = P.initial_data_norm_c0(P.zero_data(grid, p), p)
    _, sol = canonical_solution
    logged = [D.phi_series(sol.n, sol.u, p)]
    gridc, pc, init = canonical
    rinit = P.build_regularized_init(init, gridc.L)
    cfg = F.FixedPointConfig(T=0.1, dt=0.005)
    cur = F.constant_seed(rinit, cfg.T, cfg.K)
    for _ in range(3):
        logged.append(D.phi_series(cur.m, cur.v, pc))
        _, cur = F.picard_sweep(cur, rinit, pc, cfg)
    violations = sum(int(np.count_nonzero(np.diff(s.values) < 0)) for s in logged)
    ok = phi0 == 1.0 and c0 == 1.0 and violations == 0
    report(8, ok, f"Phi(0)={phi0!r}, c0(0)={c0!r}, {violations} decreases over {len(logged)} iterates")
    assert ok


def test_c09_ckn(report):
    grid = G.make_grid(8.0, 257)
    rows = studies.ckn_battery(grid, (1 / 16, 1 / 12, 1 / 8), size=100, seed=12345)
    stated = [r for r in rows if not r.field_id.startswith("ckn_sharp")]
    sharp = [r for r in rows if r.field_id.startswith("ckn_sharp")]
    failed = sum(not r.passed for r in stated)
    worst = max(r.ratio for r in stated)
    ok = failed == 0 and len(stated) == 300
    report(9, ok, f"{failed}/300 fields exceed (1+1e-2) alpha^2/4 rhs, worst lhs/bound {worst:.3e}; "
                  f"sharp 4/alpha^2 form: {sum(not r.passed for r in sharp)} failures")
    assert ok


def test_c10_quotients(report):
    inv = []
    for lam in (1.0, 0.5, 3.0):
        g = G.make_grid(5.0 * lam, 129)
        X, Y = g.mesh
        f = np.exp(-(((X / lam) - 0.4) ** 2 + 2 * (Y / lam) ** 2))
        inv.append([D.gn_quotient(g, f, pp) for pp in (4.0, 8.0, 32.0)])
    inv = np.array(inv)
    scale_dev = float(np.abs(inv / inv[0] - 1).max())
    ps = (4.0, 8.0, 32.0)
    a = studies.gn_battery(G.make_grid(8.0, 129), ps, 100, 12345)
    b = studies.gn_battery(G.make_grid(8.0, 257), ps, 100, 12345)
    drift = max(abs(b[pp] / a[pp] - 1) for pp in ps)
    grid = G.make_grid(2.0, 33)
    u = np.random.default_rng(10).normal(size=(2, *grid.shape))
    q = D.verify_l2_control(grid, u, np.full(grid.shape, 0.6), P.PhysicalParams(h_tilde=0.6)).quotient
    ok = scale_dev <= 1e-12 and drift <= 0.05 and q == 1 / 0.6
    report(10, ok, f"scale deviation {scale_dev:.1e}, battery max drift {drift:.3%} under doubling, "
                   f"constant height {q!r} vs 1/h~ {1 / 0.6!r}")
    assert ok


def test_c11_compatibility(report):
    p = P.PhysicalParams()
    res, bound = [], []
    for N in (65, 129):
        grid = G.make_grid(5.0, N)
        init = P.gaussian_vacuum(grid, p)
        res.append(P.compatibility_residual(init, p)[1])
        bound.append(10 * grid.dx**2 * P.compatibility_scale(init, p))
    grid = G.make_grid(5.0, 65)
    bad = P.gaussian_vacuum(grid, p, compatible=False)
    bad_res = P.compatibility_residual(bad, p)[1]
    tol = F.compat_tolerance(bad, p, P.initial_data_norm_c0(bad, p))
    order = np.log2(res[0] / res[1])
    ok = all(r <= b for r, b in zip(res, bound)) and order >= 1.8 and bad_res > tol
    report(11, ok, f"residuals {res[0]:.3e}, {res[1]:.3e} (bounds {bound[0]:.3e}, {bound[1]:.3e}), "
                   f"order {order:.2f}, negative control {bad_res:.3e} > tol {tol:.3e}")
    assert ok


def test_c12_r_continuation(report):
    grid = G.make_grid(20.0, 121)
    p = P.PhysicalParams()
    init = P.gaussian_vacuum(grid, p)
    res = studies.r_study(init, p, F.FixedPointConfig(T=0.1, dt=0.01), 5.0, 1e-2)
    d = res["distances"]
    ok = res["monotone"] and all(res["converged"])
    report(12, ok, f"R={res['R']}: distances {d[0]:.3e} > {d[1]:.3e}, converged {res['converged']}")
    assert ok


def test_c13_reproducibility(report, tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        cfgfile = tmp_path / f"{name}.txt"
        cfgfile.write_text(f"snapshot_stride=5\nheatmaps=true\noutput_dir={out}\n")
        assert cli.main(["run", str(cfgfile)]) == 0
        outs.append(out)
    compared, mismatched = 0, []
    for sub in ("", "snapshots"):
        names = sorted(f for f in os.listdir(outs[0] / sub)
                       if os.path.isfile(outs[0] / sub / f) and f.endswith((".csv", ".cswf")))
        _, mis, err = filecmp.cmpfiles(outs[0] / sub, outs[1] / sub, names, shallow=False)
        compared += len(names)
        mismatched += mis + err
    ok = compared > 0 and not mismatched
    report(13, ok, f"{compared} CSV/snapshot files compared, {len(mismatched)} differ")
    assert ok
