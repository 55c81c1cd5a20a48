"""Flat ``key = value`` run configuration with sections grid, noise, model and run.

Example::

    grid.d = 1
    grid.L = 20
    grid.N = 512
    noise.amplitude = 0.5
    noise.width = 1.0
    model.sigma = 3
    model.u0_amplitude = 1.0
    run.T = 0.3
    run.dt = 1e-3

Lines starting with ``#`` or ``;`` are comments. Unknown keys are errors, so a
typo never silently falls back to a default.
"""

from __future__ import annotations

import configparser
import hashlib
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .dynamics import BlowupDetectorParams, ModelSpec, TruncationParams
from .grid import ComplexField, Grid, field_from_function
from .noise import CovarianceOperator, KernelSpec, build_operator

SECTIONS = ("grid", "noise", "model", "run")
_ROOT = "root"


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text: str) -> Optional[float]:
    return None if text.strip().lower() in ("", "none") else float(text)


@dataclass(frozen=True)
class Config:
    # grid.*
    d: int = 1
    L: float = 20.0
    N: int = 512
    # noise.*
    amplitude: float = 0.0
    width: float = 1.0
    shape: str = "gaussian"
    # model.*: u0 = A exp(-|x - x0|^2 / (2 s^2)) exp(i v . x)
    sigma: float = 3.0
    sigma_aux: Optional[float] = None
    u0_amplitude: float = 1.0
    u0_width: float = 1.0
    u0_center: float = 0.0
    u0_velocity: float = 0.0
    truncation_R: Optional[float] = None
    truncation_s0: float = 1.75
    # run.*
    T: float = 0.1
    dt: float = 1e-3
    paths: int = 100
    seed: int = 12345
    sample_every: int = 1
    workers: int = 1
    K_blow: float = 100.0
    tail_threshold: float = 0.1
    confirm: bool = True
    T1: float = 1.0
    H_bar: float = 10.0
    M_bar: Optional[float] = None
    t2: float = 0.1
    dt2: Optional[float] = None  # step of the noisy phase after the control; run.dt if unset
    t_bar: Optional[float] = None

    @property
    def grid(self) -> Grid:
        return Grid(self.d, self.L, self.N)

    @property
    def kernel(self) -> KernelSpec:
        return KernelSpec(self.amplitude, self.width, self.shape)

    def operator(self) -> Optional[CovarianceOperator]:
        if self.amplitude == 0:
            return None
        return build_operator(self.kernel, self.grid)

    def model(self, op: Optional[CovarianceOperator] = None) -> ModelSpec:
        trunc = None
        if self.truncation_R is not None:
            trunc = TruncationParams(self.truncation_R, self.truncation_s0)
        return ModelSpec(self.sigma, noise=op, truncation=trunc)

    def detector(self) -> BlowupDetectorParams:
        return BlowupDetectorParams(self.K_blow, self.tail_threshold, self.confirm)

    def initial(self) -> ComplexField:
        a, s, x0, v = self.u0_amplitude, self.u0_width, self.u0_center, self.u0_velocity

        def fn(*xs):
            r2 = sum((x - x0) ** 2 for x in xs)
            return a * np.exp(-r2 / (2.0 * s * s)) * np.exp(1j * v * sum(xs))

        return field_from_function(self.grid, fn)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            lines.append(f"{_KEY_OF[f.name]} = {'none' if v is None else v}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]


# config key -> (field name, parser)
_SCHEMA = {
    "grid.d": ("d", int),
    "grid.L": ("L", float),
    "grid.N": ("N", int),
    "noise.amplitude": ("amplitude", float),
    "noise.width": ("width", float),
    "noise.shape": ("shape", str),
    "model.sigma": ("sigma", float),
    "model.sigma_aux": ("sigma_aux", _opt_float),
    "model.u0_amplitude": ("u0_amplitude", float),
    "model.u0_width": ("u0_width", float),
    "model.u0_center": ("u0_center", float),
    "model.u0_velocity": ("u0_velocity", float),
    "model.truncation_R": ("truncation_R", _opt_float),
    "model.truncation_s0": ("truncation_s0", float),
    "run.T": ("T", float),
    "run.dt": ("dt", float),
    "run.paths": ("paths", int),
    "run.seed": ("seed", int),
    "run.sample_every": ("sample_every", int),
    "run.workers": ("workers", int),
    "run.K_blow": ("K_blow", float),
    "run.tail_threshold": ("tail_threshold", float),
    "run.confirm": ("confirm", _bool),
    "run.T1": ("T1", float),
    "run.H_bar": ("H_bar", float),
    "run.M_bar": ("M_bar", _opt_float),
    "run.t2": ("t2", float),
    "run.dt2": ("dt2", _opt_float),
    "run.t_bar": ("t_bar", _opt_float),
}
_KEY_OF = {name: key for key, (name, _) in _SCHEMA.items()}


def parse_config(text: str) -> Config:
    cp = configparser.ConfigParser(
        delimiters=("=",), comment_prefixes=("#", ";"), interpolation=None, strict=True
    )
    cp.optionxform = str  # keys are case sensitive (grid.L vs grid.l)
    try:
        cp.read_string(f"[{_ROOT}]\n" + text)
    except configparser.Error as exc:
        raise ValueError(f"malformed config: {exc}") from exc
    values = {}
    for key, raw in cp[_ROOT].items():
        if key not in _SCHEMA:
            section = key.split(".", 1)[0]
            if section not in SECTIONS:
                raise ValueError(f"unknown section in key {key!r}; expected one of {SECTIONS}")
            raise ValueError(f"unknown config key {key!r}")
        name, conv = _SCHEMA[key]
        try:
            values[name] = conv(raw)
        except ValueError as exc:
            raise ValueError(f"bad value for {key}: {raw!r}") from exc
    cfg = Config(**values)
    _validate(cfg)
    return cfg


def _validate(cfg: Config) -> None:
    cfg.grid  # raises on a bad grid
    cfg.kernel
    if cfg.T < 0:
        raise ValueError("T must be nonnegative")
    for name in ("t2", "T1", "H_bar"):
        if not getattr(cfg, name) > 0:
            raise ValueError(f"{name} must be positive")
    for dt in (cfg.dt, cfg.dt2 if cfg.dt2 is not None else cfg.dt):
        if not (dt > 0 and math.isfinite(dt)):
            raise ValueError("time steps must be positive")
    if cfg.paths < 1 or cfg.sample_every < 1 or cfg.workers < 1:
        raise ValueError("paths, sample_every and workers must be positive integers")


def load_config(path) -> Config:
    return parse_config(Path(path).read_text(encoding="utf-8"))
