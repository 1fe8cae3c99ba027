"""Command line driver.

    chemoshallow run <config>
    chemoshallow check-init <config>
    chemoshallow verify-inequalities <config>
    chemoshallow convergence <config>
    chemoshallow r-study <config>

Exit status: 0 success, 1 configuration or I/O error, 2 fixed point not
converged, 3 invariant breach (negative density, mass drift, Phi above M,
compatibility in strict mode, failed verdicts). The manifest names the
triggering condition via ``out.exit_reason``.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from . import diagnostics as D
from . import grid as G
from . import studies
from .config import SNAPSHOT_KEYS, ConfigError, RunConfig, load_config
from .errors import SweepError, ValidationError
from .fixedpoint import CompatibilityError, compat_tolerance, run_fixed_point
from .output import fmt, write_csv, write_manifest, write_snapshots
from .params import (GENERATORS, InitialData, compatibility_residual, far_field_ok,
                     initial_data_norm_c0)

log = logging.getLogger("chemoshallow")

EXIT_OK, EXIT_IO, EXIT_NOT_CONVERGED, EXIT_BREACH = 0, 1, 2, 3


def build_initial_data(cfg: RunConfig, grid: G.Grid2D, params) -> InitialData:
    if cfg.source == "snapshot":
        f = {k: G.read_snapshot(getattr(cfg, k)) for k in SNAPSHOT_KEYS}
        return InitialData(grid, f["n0"], f["c0"], f["h0"], np.stack([f["u0_x"], f["u0_y"]]),
                           np.stack([f["g_x"], f["g_y"]]))
    if cfg.source == "zero":
        return GENERATORS["zero"](grid, params)
    if cfg.source == "uniform_height":
        return GENERATORS["uniform_height"](grid, params, n_amp=cfg.n_amp, c_amp=cfg.c_amp,
                                            support=cfg.support)
    return GENERATORS["gaussian_vacuum"](grid, params, h_amp=cfg.h_amp, h_width=cfg.h_width,
                                         n_amp=cfg.n_amp, c_amp=cfg.c_amp, support=cfg.support,
                                         compatible=cfg.compatible)


def _base_results(cfg: RunConfig, grid) -> dict:
    p = cfg.params
    return {"alpha": p.alpha, "q": p.q, "q1": p.q1, "dx": grid.dx, "K": cfg.K}


def _finish(cfg, results, status, reason):
    results["exit_status"] = status
    results["exit_reason"] = reason
    write_manifest(os.path.join(cfg.output_dir, "manifest.txt"), cfg.echo(), results)
    return status


# ---------------------------------------------------------------------------
# run

def diagnostic_rows(sol, params, tau):
    """Per-frame diagnostic table: (columns, rows)."""
    cons = D.conservation_report(sol.h)
    phi = D.phi_series(sol.n, sol.u, params)
    cols = ["frame", "t", "mass", "mass_drift", "phi", "n_min", "c_min", "h_min"]
    data = [np.arange(len(sol.times)), sol.times, cons.mass, cons.drift, phi.values,
            sol.n.frames.min(axis=(1, 2)), sol.c.frames.min(axis=(1, 2)), sol.h.frames.min(axis=(1, 2))]
    if sol.u.K >= 2 and tau is not None:
        table = D.theorem_norm_suite(sol, tau, params)
        for name, s in {**table.series, **table.weighted}.items():
            cols.append(name)
            data.append(s)
    for name, s in D.weighted_norm_series(sol, params).items():
        cols.append("xw_" + name)
        data.append(s)
    rows = [[int(data[0][k])] + [float(d[k]) for d in data[1:]] for k in range(len(sol.times))]
    return cols, rows, cons


VERDICT_COLUMNS = ["field_id", "param", "lhs", "rhs", "ratio", "pass"]


def final_verdicts(sol, params):
    grid = sol.grid
    rows = []
    for name, f in (("n", sol.n.frames[-1]), ("c", sol.c.frames[-1])):
        if not np.any(f):
            continue
        for p in (4.0, params.q):
            lhs = G.lp_norm(grid, f, p)
            qv = D.gn_quotient(grid, f, p)
            rows.append([f"gn_{name}", p, lhs, lhs / qv, qv, bool(np.isfinite(qv))])
    if params.h_tilde > 0:
        v = D.verify_l2_control(grid, sol.u.frames[-1], sol.h.frames[-1], params)
        rows.append(["l2_control_u", params.h_tilde, v.quotient, 1.0, v.quotient, bool(np.isfinite(v.quotient))])
    return rows


def run_mode(cfg: RunConfig) -> int:
    grid = G.make_grid(cfg.L, cfg.N)
    params = cfg.params
    init = build_initial_data(cfg, grid, params)
    results = _base_results(cfg, grid)
    try:
        sol = run_fixed_point(init, params, cfg.fixed_point())
    except CompatibilityError as exc:
        results.update(compat_residual=exc.residual, tol_compat=exc.tol, compat_ok=False)
        return _finish(cfg, results, EXIT_BREACH, f"compatibility residual {exc.residual!r} exceeds {exc.tol!r}")
    except SweepError as exc:
        results.update(failed_stage=exc.stage, failed_frame=exc.frame if exc.frame is not None else "none")
        return _finish(cfg, results, EXIT_BREACH, f"solver failure: {exc}")
    tau = cfg.tau if cfg.tau is not None else (5 * cfg.dt if 5 * cfg.dt < cfg.T else None)
    cols, rows, cons = diagnostic_rows(sol, params, tau)
    write_csv(os.path.join(cfg.output_dir, "diagnostics.csv"), cols, rows)
    write_csv(os.path.join(cfg.output_dir, "verdicts.csv"), VERDICT_COLUMNS, final_verdicts(sol, params))
    write_snapshots(cfg.output_dir, sol, cfg.snapshot_stride, cfg.heatmaps)

    scale = max(1.0, float(np.abs(sol.n.frames).max()), float(np.abs(sol.c.frames).max()))
    min_density = sol.min_density()
    results.update(
        c0=sol.c0, tol_fp=sol.tol_fp, compat_residual=sol.compat_residual, tol_compat=sol.tol_compat,
        compat_ok=sol.compat_ok, far_field_ok=far_field_ok(init, params),
        converged=sol.converged, outcome=sol.outcome, sweeps=sol.sweeps,
        distances=sol.distances, phi_history=sol.phi_history,
        phi_excursions=sol.phi_excursions or "none", M=cfg.M, tstar=sol.tstar,
        tau=tau if tau is not None else "none",
        max_mass_drift=cons.max_drift, min_density=min_density, h_floor=sol.h_floor,
        clamped_traces=sol.clamped, csv_columns=cols, verdict_columns=VERDICT_COLUMNS,
        snapshot_format="CSWF v1 little-endian f8 row-major, f[i,j] at x=-L+i*dx, y=-L+j*dx",
    )
    for stage, secs in sol.timings.items():
        results[f"wall_seconds.{stage}"] = secs
    breaches = []
    if min_density < -cfg.tol_neg * scale:
        breaches.append(f"negative density {min_density!r} below -tol_neg")
    if cons.max_drift > cfg.tol_mass:
        breaches.append(f"mass drift {cons.max_drift!r} exceeds tol_mass")
    if sol.phi_excursions:
        breaches.append(f"Phi above M at sweeps {fmt(sol.phi_excursions)}")
    if breaches:
        return _finish(cfg, results, EXIT_BREACH, "; ".join(breaches))
    if not sol.converged:
        return _finish(cfg, results, EXIT_NOT_CONVERGED,
                       f"not converged after {sol.sweeps} sweeps (last distance {sol.distances[-1]!r})")
    return _finish(cfg, results, EXIT_OK, "none")


# ---------------------------------------------------------------------------
# other modes

def check_init_mode(cfg: RunConfig) -> int:
    grid = G.make_grid(cfg.L, cfg.N)
    params = cfg.params
    init = build_initial_data(cfg, grid, params)
    c0 = initial_data_norm_c0(init, params)
    _, res = compatibility_residual(init, params)
    tol = compat_tolerance(init, params, c0) if cfg.tol_compat is None else cfg.tol_compat
    ff = far_field_ok(init, params)
    results = _base_results(cfg, grid)
    results.update(c0=c0, compat_residual=res, tol_compat=tol, compat_ok=res <= tol, far_field_ok=ff)
    if res > tol and cfg.strict_compat:
        return _finish(cfg, results, EXIT_BREACH, f"compatibility residual {res!r} exceeds {tol!r}")
    if not ff:
        return _finish(cfg, results, EXIT_BREACH, "initial data does not reach the far field near the boundary")
    return _finish(cfg, results, EXIT_OK, "none")


CKN_ALPHAS = (1 / 16, 1 / 12, 1 / 8)


def verify_mode(cfg: RunConfig) -> int:
    grid = G.make_grid(cfg.L, cfg.N)
    params = cfg.params
    rows = [[r.field_id, r.param, r.lhs, r.rhs, r.ratio, r.passed]
            for r in studies.ckn_battery(grid, CKN_ALPHAS, cfg.battery_size, cfg.battery_seed)]
    ps = (4.0, 8.0, params.q)
    gn = studies.gn_battery(grid, ps, cfg.battery_size, cfg.battery_seed)
    for p, qmax in gn.items():
        rows.append(["gn_max", p, qmax, 1.0, qmax, bool(np.isfinite(qmax))])
    if params.h_tilde > 0:
        qmax = studies.l2_control_battery(grid, params, cfg.battery_size, cfg.battery_seed)
        rows.append(["l2_control_max", params.h_tilde, qmax, 1.0, qmax, bool(np.isfinite(qmax))])
    write_csv(os.path.join(cfg.output_dir, "verdicts.csv"), VERDICT_COLUMNS, rows)
    failed = [r for r in rows if not r[5] and not r[0].startswith("ckn_sharp")]
    failed_sharp = [r for r in rows if not r[5] and r[0].startswith("ckn_sharp")]
    results = _base_results(cfg, grid)
    results.update(verdicts=len(rows), failed=len(failed), failed_sharp=len(failed_sharp),
                   gn_max=[gn[p] for p in ps], verdict_columns=VERDICT_COLUMNS)
    if failed or failed_sharp:
        return _finish(cfg, results, EXIT_BREACH, f"{len(failed) + len(failed_sharp)} inequality verdicts failed")
    return _finish(cfg, results, EXIT_OK, "none")


def convergence_mode(cfg: RunConfig) -> int:
    params = cfg.params
    rows, low = [], []
    st = studies.stencil_errors()
    for name, errs in st.items():
        orders = studies.observed_orders(errs)
        rows += [[name, N, e, o] for N, e, o in zip((33, 65, 129), errs, [float("nan")] + orders)]
        low += [name for o in orders if o < cfg.conv_min_order]
    for name, res in (("density_mms", studies.density_mms_study()),
                      ("momentum_mms", studies.momentum_mms_study(params))):
        rows += [[name, N, e, o] for N, e, o in zip(res["N"], res["errors"], [float("nan")] + res["orders"])]
        low += [name for o in res["orders"] if o < cfg.conv_min_order]
    write_csv(os.path.join(cfg.output_dir, "convergence.csv"), ["study", "N", "error", "order"], rows)
    results = {"min_order": cfg.conv_min_order}
    if low:
        return _finish(cfg, results, EXIT_BREACH, "observed order below threshold: " + ",".join(sorted(set(low))))
    return _finish(cfg, results, EXIT_OK, "none")


def r_study_mode(cfg: RunConfig) -> int:
    grid = G.make_grid(cfg.L, cfg.N)
    params = cfg.params
    init = build_initial_data(cfg, grid, params)
    R = 5.0 if cfg.R is None else cfg.R
    if 4 * R > cfg.L:
        raise ConfigError(f"R: r-study needs 4R <= L, got R={R}, L={cfg.L}", key="R")
    res = studies.r_study(init, params, replace(cfg.fixed_point(), strict_compat=False), R, cfg.r_eps)
    write_csv(os.path.join(cfg.output_dir, "rstudy.csv"), ["R_a", "R_b", "distance"],
              [[res["R"][i], res["R"][i + 1], res["distances"][i]] for i in range(2)])
    results = _base_results(cfg, grid)
    results.update(radii=res["R"], distances=res["distances"], monotone=res["monotone"],
                   converged=res["converged"])
    if not all(res["converged"]):
        return _finish(cfg, results, EXIT_NOT_CONVERGED, "a fixed point did not converge")
    if not res["monotone"]:
        return _finish(cfg, results, EXIT_BREACH, "distances do not decrease with R")
    return _finish(cfg, results, EXIT_OK, "none")


MODE_FUNCS = {"run": run_mode, "check-init": check_init_mode, "verify-inequalities": verify_mode,
              "convergence": convergence_mode, "r-study": r_study_mode}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="chemoshallow", description=__doc__.split("\n\n")[0])
    ap.add_argument("mode", choices=sorted(MODE_FUNCS))
    ap.add_argument("config", help="key=value configuration file")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        cfg = replace(cfg, mode=args.mode)
        os.makedirs(cfg.output_dir, exist_ok=True)
        return MODE_FUNCS[args.mode](cfg)
    except (ConfigError, ValidationError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
