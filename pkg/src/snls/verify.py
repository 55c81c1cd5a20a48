"""Verification suites behind ``snls verify --suite ...``.

Each suite runs one configuration, compares against a closed form or an
identity, and returns report lines. Without a config file a suite uses its
standard configuration (see :data:`STANDARD`).
"""

from __future__ import annotations

import math
from dataclasses import replace
from typing import Callable, Optional

import numpy as np

from . import diagnostics as diag
from .config import Config
from .control import construct_control, replay
from .dynamics import DETECTED, ModelSpec, evolve, evolve_path
from .ensemble import (
    check_energy_identity,
    check_momentum_identity,
    check_theorem41,
    run_ensemble,
    variance_residual,
)
from .grid import _integrate
from .io import CheckLine
from .noise import sample_path

SUITES = ("mass", "variance", "energy", "momentum", "linear", "theorem41", "control")
VARIANCE_RATIO_MAX = 0.65  # "halves, +-30%": the refined residual is at most 0.5 * 1.3 of the coarse one

_BASE = Config(d=1, L=20.0, N=512, amplitude=0.5, width=1.0, sigma=3.0, dt=1e-3, seed=12345)
STANDARD = {
    "mass": replace(_BASE, T=0.5),
    "variance": replace(_BASE, T=0.5),
    "energy": replace(_BASE, T=0.3, paths=2000, sample_every=10),
    "momentum": replace(_BASE, T=0.3, paths=2000, sample_every=10),
    "linear": replace(_BASE, amplitude=0.0, T=0.5, dt=0.1),
    "theorem41": Config(
        d=1, L=3.0, N=3072, amplitude=0.1, width=0.5, sigma=3.0, u0_amplitude=3.0,
        T=0.04, t_bar=0.04, dt=2e-6, paths=200, seed=2024, sample_every=1000,
    ),
    "control": Config(
        d=1, L=10.0, N=4096, amplitude=0.0, sigma=3.0, sigma_aux=2.5, T1=1.0, H_bar=10.0,
        dt=1e-4,
    ),
}


def _mass(cfg: Config) -> list[CheckLine]:
    op = cfg.operator()
    rng = np.random.default_rng(cfg.seed)
    tr = evolve(cfg.initial(), cfg.model(op), cfg.T, cfg.dt, cfg.detector(), rng)
    M = tr.series("M")
    drift = float(np.max(np.abs(M / M[0] - 1.0)))
    return [CheckLine("mass conservation", drift < 1e-10, f"max relative drift {drift:.3g} < 1e-10")]


def _variance(cfg: Config) -> list[CheckLine]:
    op = cfg.operator()
    spec = cfg.model(op)
    u0 = cfg.initial()
    fine = 0.5 * cfg.dt
    n = int(round(cfg.T / fine))
    path = sample_path(op, fine, n, cfg.seed) if op is not None else None
    kw = {} if path is not None else {"steps": n // 2}
    coarse = evolve_path(u0, spec, cfg.dt, path, **kw)
    kw = {} if path is not None else {"steps": n}
    refined = evolve_path(u0, spec, fine, path, **kw)
    r, r2 = variance_residual(coarse), variance_residual(refined)
    V0 = coarse.records[0].V
    ratio = r2 / r if r else 0.0
    return [
        CheckLine("variance identity residual", abs(r) < 1e-3 * V0, f"|r| = {abs(r):.3g}, bound {1e-3 * V0:.3g}"),
        CheckLine(
            "variance residual shrinks with dt",
            abs(ratio) <= VARIANCE_RATIO_MAX,
            f"r(dt/2)/r(dt) = {ratio:.3f}, required <= {VARIANCE_RATIO_MAX}",
        ),
    ]


def _ensemble(cfg: Config, workers: int):
    op = cfg.operator()
    return op, run_ensemble(
        cfg.initial(), cfg.model(op), cfg.T, cfg.dt, cfg.paths, cfg.seed, cfg.detector(),
        cfg.sample_every, workers=workers,
    )


def _energy(cfg: Config, workers: int = 1) -> list[CheckLine]:
    op, stats = _ensemble(cfg, workers)
    chk = check_energy_identity(stats, op)
    return [CheckLine("energy drift law in expectation", chk.passed,
                      f"worst |residual| / (3 SE + bias) = {chk.worst_ratio:.3f}, {stats.paths} paths")]


def _momentum(cfg: Config, workers: int = 1) -> list[CheckLine]:
    op, stats = _ensemble(cfg, workers)
    chk = check_momentum_identity(stats)
    return [CheckLine("momentum identity in expectation", chk.passed,
                      f"worst |residual| / (3 SE + bias) = {chk.worst_ratio:.3f}, {stats.paths} paths")]


def _linear(cfg: Config) -> list[CheckLine]:
    """Free flow: V(t) = V0 + 4 G0 t + 4 |grad u0|^2 t^2 exactly."""
    u0 = cfg.initial()
    spec = ModelSpec(cfg.sigma, nonlinearity=0.0)
    n = int(round(cfg.T / cfg.dt))
    tr = evolve_path(u0, spec, cfg.dt, None, steps=n)
    V0, G0, K0 = diag.variance(u0), diag.momentum(u0), diag.kinetic(u0)
    t, V = tr.times, tr.series("V")
    err = float(np.max(np.abs(V - (V0 + 4.0 * G0 * t + 4.0 * K0 * t**2))))
    return [CheckLine("linear variance law", err < 1e-6, f"max error {err:.3g} < 1e-6")]


def _theorem41(cfg: Config, workers: int = 1) -> list[CheckLine]:
    op, stats = _ensemble(cfg, workers)
    t_bar = cfg.t_bar if cfg.t_bar is not None else cfg.T
    chk = check_theorem41(stats, op, t_bar)
    lo, hi = chk.interval
    passed = None if chk.verdict == "not applicable" else chk.verdict == "pass"
    return [CheckLine(
        "blow-up probability positive under the criterion", passed,
        f"criterion {chk.criterion:.4g}, p = {chk.estimate:.3f}, 95% Wilson [{lo:.3f}, {hi:.3f}], "
        f"{stats.under_resolved} under-resolved",
    )]


def _control(cfg: Config) -> list[CheckLine]:
    u0 = cfg.initial()
    ctrl = construct_control(u0, cfg.sigma, cfg.sigma_aux, cfg.T1, cfg.M_bar, cfg.H_bar, cfg.dt,
                             cfg.detector())
    c = ctrl.certificate
    M0 = diag.mass(u0)
    U = replay(ctrl, u0)
    err = math.sqrt(float(_integrate(np.abs(U.values - ctrl.U_T2.values) ** 2, u0.grid)))
    return [
        CheckLine("control reaches T2 <= T1", ctrl.T2 <= min(cfg.T1, 1.0), f"T2 = {ctrl.T2:.6g}"),
        CheckLine("energy below -H_bar at T2", c.H < -cfg.H_bar, f"H = {c.H:.6g}"),
        CheckLine("U(T2) admissible", diag.admissible_from_values(c.M, c.H, c.G, c.V, ctrl.M_bar, ctrl.H_bar),
                  f"M = {c.M:.6g}, G = {c.G:.6g}, V = {c.V:.6g}, M_bar = {ctrl.M_bar:.6g}"),
        CheckLine("mass conserved by the control", abs(c.M - M0) <= 1e-10 * M0,
                  f"relative drift {abs(c.M / M0 - 1):.3g}"),
        CheckLine("replay of stored f reproduces U(T2)", err < 1e-6, f"L2 error {err:.3g}"),
    ]


_RUNNERS: dict[str, Callable] = {
    "mass": _mass,
    "variance": _variance,
    "energy": _energy,
    "momentum": _momentum,
    "linear": _linear,
    "theorem41": _theorem41,
    "control": _control,
}


def run_suite(name: str, cfg: Optional[Config] = None, workers: int = 1) -> list[CheckLine]:
    if name not in _RUNNERS:
        raise ValueError(f"unknown suite {name!r}; choose from {SUITES}")
    cfg = STANDARD[name] if cfg is None else cfg
    fn = _RUNNERS[name]
    if name in ("energy", "momentum", "theorem41"):
        return fn(cfg, workers)
    return fn(cfg)
