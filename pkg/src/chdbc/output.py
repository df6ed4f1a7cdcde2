"""CSV writers shared by the command line and the experiment scripts.

Floats are written with 17 significant digits so that identical runs give
byte-identical files. Files are written to a temporary name and renamed.
"""

from __future__ import annotations

import csv
import os
from pathlib import Path

import numpy as np

from .diagnostics import Trajectory, energies, masses

SERIES_COLUMNS = (
    "step", "t", "mass_bulk", "mass_surf", "mass_total",
    "energy_bulk", "energy_surf", "energy_total", "newton_iters", "residual",
)


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def write_rows(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if not isinstance(v, str) else v for v in row])
    os.replace(tmp, path)
    return path


def series_rows(traj: Trajectory):
    """One row per stored state; step 0 has no Newton data."""
    reports = [None] + list(traj.reports)
    for s, rep in zip(traj.states, reports):
        mb, ms, mt = masses(s, traj.disc)
        eb, es, et = energies(s, traj.cfg, traj.disc)
        its = rep.newton_iterations if rep is not None else 0
        res = rep.residual if rep is not None else 0.0
        yield (s.n, s.n * traj.cfg.tau, mb, ms, mt, eb, es, et, its, res)


def write_series(traj: Trajectory, path) -> Path:
    return write_rows(path, SERIES_COLUMNS, series_rows(traj))


def write_snapshot(state, disc, out_dir) -> list[Path]:
    """``u_<step>.csv`` with x,y,value and ``p_<step>.csv`` with s,value."""
    out_dir = Path(out_dir)
    xy = disc.mesh.vertices
    files = [write_rows(out_dir / f"u_{state.n}.csv", ("x", "y", "value"),
                        zip(xy[:, 0], xy[:, 1], state.u))]
    if state.p is not None:
        files.append(write_rows(out_dir / f"p_{state.n}.csv", ("s", "value"),
                                zip(disc.bmesh.nodes, state.p)))
    return files
