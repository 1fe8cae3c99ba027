"""Run configuration: ``key=value`` lines with ``#`` comments.

Every key has a default, so an empty file is a valid configuration (the
Gaussian vacuum fixture on [-5, 5]^2 with 65 nodes per axis, T = 0.1).
``RunConfig.echo()`` writes every key back out so that parsing the echo
reproduces the same configuration exactly.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, fields, replace

from .errors import ValidationError

MODES = ("run", "check-init", "verify-inequalities", "convergence", "r-study")
SOURCES = ("gaussian_vacuum", "uniform_height", "zero", "snapshot")
SNAPSHOT_KEYS = ("n0", "c0", "h0", "u0_x", "u0_y", "g_x", "g_y")
OUTPUT_ENV = "CSW_OUTPUT_DIR"


class ConfigError(ValidationError):
    def __init__(self, message, key=None, line=None):
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message, key=key)
        self.line = line


@dataclass(frozen=True)
class RunConfig:
    mode: str = "run"
    # grid
    L: float = 5.0
    N: int = 65
    # physics
    mu: float = 1.0
    lam: float = 0.0
    h_tilde: float = 0.0
    # time
    T: float = 0.1
    dt: float = 0.005
    theta: float = 1.0
    # fixed point
    tol_fp: float | None = None
    max_sweeps: int = 50
    M: float = 1.0e3
    R: float | None = None
    tol_lin: float = 1e-12
    cfl_safety: float = 0.5
    solve_velocity: bool = False
    # invariants
    tol_neg: float = 1e-10
    tol_mass: float = 1e-3
    tol_compat: float | None = None
    strict_compat: bool = False
    tau: float | None = None
    # initial data
    source: str = "gaussian_vacuum"
    h_amp: float = 1.0
    h_width: float = 1.0
    n_amp: float = 0.5
    c_amp: float = 0.5
    support: float | None = None
    compatible: bool = True
    n0: str | None = None
    c0: str | None = None
    h0: str | None = None
    u0_x: str | None = None
    u0_y: str | None = None
    g_x: str | None = None
    g_y: str | None = None
    # output
    output_dir: str = "output"
    snapshot_stride: int = 10
    heatmaps: bool = False
    # studies
    battery_size: int = 100
    battery_seed: int = 12345
    r_eps: float = 1e-2
    conv_min_order: float = 1.8

    def __post_init__(self):
        _validate(self)

    @property
    def params(self):
        from .params import PhysicalParams

        return PhysicalParams(mu=self.mu, lam=self.lam, h_tilde=self.h_tilde)

    @property
    def K(self) -> int:
        return round(self.T / self.dt)

    def fixed_point(self):
        from .fixedpoint import FixedPointConfig

        return FixedPointConfig(T=self.T, dt=self.dt, tol_fp=self.tol_fp, max_sweeps=self.max_sweeps,
                                M=self.M, R=self.R, theta=self.theta, tol_lin=self.tol_lin,
                                cfl_safety=self.cfl_safety, tol_neg=self.tol_neg,
                                solve_velocity=self.solve_velocity, strict_compat=self.strict_compat,
                                tol_compat=self.tol_compat)

    def echo(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            lines.append(f"{f.name}={_format(v)}")
        return "\n".join(lines) + "\n"


_FIELDS = {f.name: f for f in fields(RunConfig)}
_BOOL = {"true": True, "false": False, "1": True, "0": False, "yes": True, "no": False}


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _kind(name):
    t = str(_FIELDS[name].type)
    for k in ("bool", "int", "float", "str"):
        if t.startswith(k):
            return k
    raise AssertionError(t)


def _convert(name, raw, line):
    kind = _kind(name)
    try:
        if kind == "bool":
            return _BOOL[raw.lower()]
        if kind == "int":
            return int(raw)
        if kind == "float":
            x = float(raw)
            if not math.isfinite(x):
                raise ValueError
            return x
        return raw
    except (KeyError, ValueError):
        raise ConfigError(f"cannot read {name}={raw!r} as {kind}", key=name, line=line) from None


def _require(ok, key, message):
    if not ok:
        raise ConfigError(f"{key}: {message}", key=key)


def _validate(c: RunConfig):
    _require(c.mode in MODES, "mode", f"must be one of {', '.join(MODES)}")
    _require(c.L > 0, "L", "must satisfy L > 0")
    _require(c.N >= 8, "N", "must satisfy N >= 8")
    _require(c.mu > 0, "mu", "must satisfy mu > 0")
    _require(2 * c.mu + c.lam > 0, "lam", "must satisfy 2 mu + lam > 0")
    _require(c.h_tilde >= 0, "h_tilde", "must satisfy h_tilde >= 0")
    _require(c.T > 0, "T", "must satisfy T > 0")
    _require(c.dt > 0, "dt", "must satisfy dt > 0")
    K = round(c.T / c.dt)
    _require(K >= 1 and abs(K * c.dt - c.T) <= 1e-9 * c.T, "dt", "T must be a multiple of dt")
    _require(0.5 <= c.theta <= 1.0, "theta", "must lie in [1/2, 1]")
    _require(c.tol_fp is None or c.tol_fp > 0, "tol_fp", "must be positive")
    _require(c.max_sweeps >= 1, "max_sweeps", "must be >= 1")
    _require(c.M > 1, "M", "must satisfy M > 1")
    _require(c.R is None or 0 < c.R <= c.L, "R", "must satisfy 0 < R <= L")
    for key in ("tol_lin", "cfl_safety", "tol_neg", "tol_mass", "r_eps"):
        _require(getattr(c, key) > 0, key, "must be positive")
    _require(c.tol_compat is None or c.tol_compat > 0, "tol_compat", "must be positive")
    _require(c.tau is None or 0 < c.tau < c.T, "tau", "must lie in (0, T)")
    _require(c.source in SOURCES, "source", f"must be one of {', '.join(SOURCES)}")
    _require(c.source != "uniform_height" or c.h_tilde > 0, "h_tilde",
             "uniform_height needs h_tilde > 0")
    for key in ("h_amp", "h_width", "n_amp", "c_amp"):
        _require(getattr(c, key) >= 0, key, "must be nonnegative")
    _require(c.h_width > 0, "h_width", "must be positive")
    _require(c.support is None or c.support > 0, "support", "must be positive")
    if c.source == "snapshot":
        for key in SNAPSHOT_KEYS:
            path = getattr(c, key)
            _require(path is not None, key, "required when source=snapshot")
            _require(os.path.isfile(path), key, f"file {path!r} does not exist")
    _require(c.snapshot_stride >= 1, "snapshot_stride", "must be >= 1")
    _require(c.battery_size >= 1, "battery_size", "must be >= 1")


def parse_config(text: str) -> RunConfig:
    """Parse ``key=value`` lines; unknown or repeated keys are errors."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected key=value, got {raw.strip()!r}", line=lineno)
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"unknown key {key!r}", key=key, line=lineno)
        if key in values:
            raise ConfigError(f"duplicate key {key!r}", key=key, line=lineno)
        if val == "":
            raise ConfigError(f"empty value for {key!r}", key=key, line=lineno)
        values[key] = _convert(key, val, lineno)
    return RunConfig(**values)


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        cfg = parse_config(fh.read())
    override = os.environ.get(OUTPUT_ENV)
    if override:
        cfg = replace(cfg, output_dir=override)
    return cfg


def config_from_manifest(text: str) -> RunConfig:
    """Configuration echoed at the top of a run manifest (``out.*`` keys skipped)."""
    keep = [ln for ln in text.splitlines() if not ln.startswith("out.")]
    return parse_config("\n".join(keep))
