"""CSV outputs and the binary field dump format.

Binary dump layout, all in the writer's byte order:

    uint32  magic 0x534E4C53 (read back byte-swapped on a foreign-endian host)
    uint32  d
    uint32  N
    uint32  kind (1 = complex128 values, 2 = float64 values)
    float64 L
    N**d values, C order
"""

from __future__ import annotations

import csv
import math
import struct
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .control import ControlResult, TabulatedPotential
from .diagnostics import CSV_HEADER, DiagnosticsRecord
from .dynamics import Trajectory
from .ensemble import EnsembleStats
from .grid import ComplexField, Grid

MAGIC = 0x534E4C53
KIND_COMPLEX = 1
KIND_REAL = 2
_HEADER = "IIIId"
_DTYPES = {KIND_COMPLEX: "c16", KIND_REAL: "f8"}

ENSEMBLE_HEADER = (
    "t", "meanM", "seM", "meanH", "seH", "meanG", "seG", "meanV", "seV", "meanL2s2",
)


# -- binary fields ------------------------------------------------------------


def write_field(path, grid: Grid, values: np.ndarray) -> None:
    values = np.asarray(values)
    if values.shape != grid.shape:
        raise ValueError(f"values of shape {values.shape} do not match grid {grid.shape}")
    kind = KIND_COMPLEX if np.iscomplexobj(values) else KIND_REAL
    order = "<" if sys.byteorder == "little" else ">"
    with open(path, "wb") as fh:
        fh.write(struct.pack(order + _HEADER, MAGIC, grid.d, grid.N, kind, grid.L))
        fh.write(np.ascontiguousarray(values, dtype=order + _DTYPES[kind]).tobytes())


def read_field(path) -> tuple[Grid, np.ndarray]:
    raw = Path(path).read_bytes()
    size = struct.calcsize("<" + _HEADER)
    if len(raw) < size:
        raise ValueError(f"{path}: truncated header")
    for order in "<>":
        magic, d, N, kind, L = struct.unpack(order + _HEADER, raw[:size])
        if magic == MAGIC:
            break
    else:
        raise ValueError(f"{path}: bad magic, not a field dump")
    if kind not in _DTYPES:
        raise ValueError(f"{path}: unknown value kind {kind}")
    grid = Grid(d, L, N)
    data = np.frombuffer(raw[size:], dtype=order + _DTYPES[kind])
    if data.size != grid.size:
        raise ValueError(f"{path}: expected {grid.size} values, found {data.size}")
    return grid, data.reshape(grid.shape).astype(_DTYPES[kind])


def write_complex_field(path, u: ComplexField) -> None:
    write_field(path, u.grid, u.values)


def read_complex_field(path) -> ComplexField:
    grid, values = read_field(path)
    return ComplexField(grid, values)


# -- trajectories ---------------------------------------------------------------


def write_trajectory(path, traj: Trajectory) -> None:
    """One row per record, then a footer ``verdict,<verdict>,tau_star,<tau>``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for r in traj.records:
            w.writerow([repr(float(x)) for x in r.to_row()])
        w.writerow(["verdict", traj.verdict, "tau_star", repr(float(traj.tau_star))])


def read_trajectory(path) -> tuple[list[DiagnosticsRecord], str, float]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise ValueError(f"{path}: not a trajectory file")
    foot = rows[-1]
    if len(foot) < 4 or foot[0] != "verdict":
        raise ValueError(f"{path}: missing verdict footer")
    records = [DiagnosticsRecord.from_row(r) for r in rows[1:-1]]
    return records, foot[1], float(foot[3])


# -- ensembles ------------------------------------------------------------------


def write_ensemble_stats(path, stats: EnsembleStats) -> None:
    cols = [stats.times]
    for q in ("M", "H", "G", "V"):
        cols += [stats.mean(q), stats.stderr(q)]
    cols.append(stats.mean("lp"))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ENSEMBLE_HEADER)
        for row in zip(*cols):
            w.writerow([repr(float(x)) for x in row])


def write_verdicts(path, stats: EnsembleStats) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("path", "verdict", "tau_star"))
        for i, (v, tau) in enumerate(zip(stats.verdicts, stats.tau_star)):
            w.writerow((i, v, repr(float(tau))))


def read_csv_columns(path) -> dict[str, np.ndarray]:
    """Numeric columns of a CSV with a header row; non-numeric rows are skipped."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], []
    for r in rows[1:]:
        try:
            body.append([float(x) for x in r])
        except ValueError:
            continue
    data = np.array(body, dtype=float).reshape(-1, len(header))
    return {name: data[:, i] for i, name in enumerate(header)}


# -- reports ----------------------------------------------------------------------


@dataclass(frozen=True)
class CheckLine:
    name: str
    passed: Optional[bool]  # None for "not applicable"
    detail: str = ""

    def render(self) -> str:
        status = "N/A" if self.passed is None else ("PASS" if self.passed else "FAIL")
        return f"{status:4s}  {self.name}" + (f"  ({self.detail})" if self.detail else "")


def write_report(path, lines: Iterable[CheckLine], header: str = "") -> str:
    lines = list(lines)
    text = (header.rstrip() + "\n" if header else "") + "\n".join(l.render() for l in lines) + "\n"
    Path(path).write_text(text, encoding="utf-8")
    return text


# -- control directory ------------------------------------------------------------


@dataclass
class ControlArchive:
    """What :func:`read_control` recovers: enough to replay the control."""

    sigma: float
    lam: float
    sigma_aux: float
    T2: float
    step_times: np.ndarray
    potential: TabulatedPotential
    certificate: DiagnosticsRecord
    grid: Grid


def write_control(out_dir, ctrl: ControlResult) -> Path:
    """control.csv (t, sup lam|U|^{2 sigma_aux}, H), f/ field dumps, certificate.csv."""
    out = Path(out_dir)
    fdir = out / "f"
    fdir.mkdir(parents=True, exist_ok=True)
    with open(out / "control.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("t", "lambda_term", "H"))
        for row in ctrl.history:
            w.writerow([repr(float(x)) for x in row])
    grid = ctrl.U_T2.grid
    with open(fdir / "index.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("step", "t_start", "t_mid", "t_end", "file"))
        for i, t_mid in enumerate(ctrl.potential.times):
            name = f"f_{i:06d}.bin"
            write_field(fdir / name, grid, ctrl.potential.field_at(i))
            w.writerow((i, repr(float(ctrl.step_times[i])), repr(float(t_mid)),
                        repr(float(ctrl.step_times[i + 1])), name))
    with open(out / "certificate.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER + ("lambda", "sigma", "sigma_aux", "T2", "M_bar", "H_bar"))
        w.writerow([repr(float(x)) for x in ctrl.certificate.to_row()]
                   + [repr(float(x)) for x in (ctrl.lam, ctrl.sigma, ctrl.sigma_aux,
                                               ctrl.T2, ctrl.M_bar, ctrl.H_bar)])
    write_complex_field(out / "U_T2.bin", ctrl.U_T2)
    return out


def read_control(out_dir) -> ControlArchive:
    out = Path(out_dir)
    with open(out / "certificate.csv", newline="") as fh:
        head, row = list(csv.reader(fh))[:2]
    vals = dict(zip(head, (float(x) for x in row)))
    cert = DiagnosticsRecord.from_row([vals[k] for k in CSV_HEADER])
    with open(out / "f" / "index.csv", newline="") as fh:
        index = list(csv.DictReader(fh))
    fields, mids, bounds = [], [], [0.0]
    grid = read_complex_field(out / "U_T2.bin").grid
    for entry in index:
        g, f = read_field(out / "f" / entry["file"])
        if g != grid:
            raise ValueError(f"{entry['file']}: grid does not match U_T2")
        fields.append(f)
        mids.append(float(entry["t_mid"]))
        bounds.append(float(entry["t_end"]))
    if not math.isclose(bounds[-1], vals["T2"], rel_tol=1e-12, abs_tol=1e-15):
        raise ValueError("step boundaries do not end at T2")
    return ControlArchive(
        vals["sigma"], vals["lambda"], vals["sigma_aux"], vals["T2"], np.array(bounds),
        TabulatedPotential(np.array(mids), fields), cert, grid,
    )
