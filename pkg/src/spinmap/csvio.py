"""CSV readers and writers for trajectories, SVD series, maps and bound reports.

All files are RFC-4180 style with a header row, '.' as decimal separator and
floats written with ``repr`` so they round-trip exactly.
"""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .propagator import Trajectory

TRAJECTORY_COLUMNS = ["t", "rho00", "rho01_re", "rho01_im", "rho11", "sx", "sy", "sz"]
SVD_COLUMNS = ["t", "S1", "S2", "S3", "b1", "b2", "b3"]
MAP_COLUMNS = ["t"] + [f"M{i}{j}" for i in range(1, 4) for j in range(1, 4)]
BOUND_COLUMNS = ["t", "delta", "bound_general", "bound_sigma_z"]
TCL2_COLUMNS = ["t", "S_plus", "S_minus", "S_x", "b1", "b2", "b3"]


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return repr(float(x))


def write_rows(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])


def read_columns(path: str | Path) -> dict[str, np.ndarray]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [r for r in reader if r]
    cols = {}
    for k, name in enumerate(header):
        values = [r[k] for r in rows]
        try:
            cols[name] = np.array([float(v) for v in values])
        except ValueError:
            cols[name] = np.array(values)
    return cols


def write_trajectory(path: str | Path, traj: Trajectory) -> None:
    if traj.states.shape[1:] != (2, 2):
        raise ValueError("trajectory CSV holds two-level states only")
    bloch = traj.bloch()
    rho = traj.states
    rows = (
        (t, rho[k, 0, 0].real, rho[k, 0, 1].real, rho[k, 0, 1].imag, rho[k, 1, 1].real, *bloch[k])
        for k, t in enumerate(traj.times)
    )
    write_rows(path, TRAJECTORY_COLUMNS, rows)


def read_trajectory(path: str | Path, label: str = "") -> Trajectory:
    c = read_columns(path)
    missing = [k for k in TRAJECTORY_COLUMNS if k not in c]
    if missing:
        raise ValueError(f"{path}: missing columns {missing}")
    off = c["rho01_re"] + 1j * c["rho01_im"]
    states = np.empty((c["t"].size, 2, 2), dtype=complex)
    states[:, 0, 0] = c["rho00"]
    states[:, 0, 1] = off
    states[:, 1, 0] = off.conj()
    states[:, 1, 1] = c["rho11"]
    return Trajectory(c["t"], states, label or Path(path).stem)


def write_svd(path: str | Path, times, S, b) -> None:
    write_rows(path, SVD_COLUMNS, (
        (t, *S[k], *b[k]) for k, t in enumerate(times)
    ))


def write_map(path: str | Path, times, M) -> None:
    write_rows(path, MAP_COLUMNS, (
        (t, *M[k].reshape(-1)) for k, t in enumerate(times)
    ))


def write_bound(path: str | Path, report) -> None:
    write_rows(path, BOUND_COLUMNS, zip(report.times, report.delta, report.bound_general,
                                        report.bound_sigma_z))


def write_tcl2(path: str | Path, times, s_plus, s_minus, s_x, b) -> None:
    write_rows(path, TCL2_COLUMNS, (
        (t, s_plus[k], s_minus[k], s_x[k], *b[k]) for k, t in enumerate(times)
    ))
