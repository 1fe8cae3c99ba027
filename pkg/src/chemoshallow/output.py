"""On-disk artifacts: key=value manifests, CSV logs, field snapshots and PGM
heatmaps. Floats are written with ``repr`` so files are bit-reproducible."""

from __future__ import annotations

import csv
import os

import numpy as np

from . import grid as G


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (list, tuple)):
        return ",".join(fmt(v) for v in x)
    return str(x)


def write_manifest(path, echo: str, results: dict) -> None:
    """Config echo followed by ``out.<key>=value`` result lines."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(echo)
        for k, v in results.items():
            fh.write(f"out.{k}={fmt(v)}\n")


def read_manifest(path) -> dict:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line and not line.startswith("#") and "=" in line:
                k, v = line.split("=", 1)
                out[k] = v
    return out


def write_csv(path, columns, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def render_heatmap(f: np.ndarray, path) -> None:
    """8-bit binary PGM, min-max normalized; pixel row 0 is y = +L and
    column 0 is x = -L. A constant field renders as uniform 128."""
    f = np.asarray(f, dtype=float)
    if f.ndim != 2 or not np.all(np.isfinite(f)):
        raise ValueError("heatmap needs a finite 2D field")
    lo, hi = float(f.min()), float(f.max())
    if hi > lo:
        img = np.rint(255.0 * (f - lo) / (hi - lo)).astype(np.uint8)
    else:
        img = np.full(f.shape, 128, dtype=np.uint8)
    img = img.T[::-1, :]
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img).tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM")
    w, h = (int(s) for s in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w)


def snapshot_frames(K: int, stride: int) -> list[int]:
    frames = list(range(0, K + 1, stride))
    if frames[-1] != K:
        frames.append(K)
    return frames


def write_snapshots(outdir, sol, stride: int, heatmaps: bool = False) -> list[str]:
    snap = os.path.join(outdir, "snapshots")
    os.makedirs(snap, exist_ok=True)
    if heatmaps:
        os.makedirs(os.path.join(outdir, "heatmaps"), exist_ok=True)
    written = []
    for k in snapshot_frames(sol.u.K, stride):
        fields = {"n": sol.n.frames[k], "c": sol.c.frames[k], "h": sol.h.frames[k],
                  "u_x": sol.u.frames[k, 0], "u_y": sol.u.frames[k, 1]}
        for name, f in fields.items():
            p = os.path.join(snap, f"{name}_{k:05d}.cswf")
            G.write_snapshot(p, f)
            written.append(p)
        if heatmaps:
            fields["u_mag"] = G.magnitude(sol.u.frames[k])
            for name in ("n", "c", "h", "u_mag"):
                render_heatmap(fields[name], os.path.join(outdir, "heatmaps", f"{name}_{k:05d}.pgm"))
    return written
