"""Monte Carlo over independent noise paths and the in-expectation identity checks."""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .diagnostics import blowup_functional
from .dynamics import (
    DETECTED,
    UNDER_RESOLVED,
    BlowupDetectorParams,
    ModelSpec,
    Trajectory,
    UnderResolvedError,
    evolve,
    evolve_batch,
)
from .grid import ComplexField
from .noise import CovarianceOperator

QUANTITIES = ("M", "H", "G", "V", "lp")
MAX_UNDER_RESOLVED = 0.2
WILSON_Z = 1.959963984540054


def path_rng(master_seed: int, index: int) -> np.random.Generator:
    """Independent stream for path ``index``, derived from the master seed."""
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(index,)))


def trapezoid_cumulative(y: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Running trapezoid integral along the last axis, starting at 0."""
    inc = 0.5 * (y[..., 1:] + y[..., :-1]) * np.diff(t)
    return np.concatenate([np.zeros(y.shape[:-1] + (1,)), np.cumsum(inc, axis=-1)], axis=-1)


@dataclass
class EnsembleStats:
    paths: int
    times: np.ndarray
    series: dict  # name -> (paths, times) array, NaN once a path has stopped
    verdicts: list
    tau_star: np.ndarray
    master_seed: int
    config_hash: str
    sigma: float
    d: int
    initial: dict  # M, H, G, V, lp of u0
    reference: dict = field(default_factory=dict)  # noise-free companion, name -> (times,)

    def __post_init__(self) -> None:
        if self.paths < 2:
            raise ValueError("an ensemble needs at least two paths")

    def alive_counts(self) -> np.ndarray:
        return np.sum(np.isfinite(self.series["M"]), axis=0)

    def mean(self, name: str) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return np.nanmean(self.series[name], axis=0)

    def stderr(self, name: str) -> np.ndarray:
        x = self.series[name]
        n = np.sum(np.isfinite(x), axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            sd = np.nanstd(x, axis=0, ddof=1)
            return np.where(n > 1, sd / np.sqrt(n), np.nan)

    @property
    def under_resolved(self) -> int:
        return sum(v == UNDER_RESOLVED for v in self.verdicts)

    def identity_window(self) -> np.ndarray:
        """Sample indices at which every resolved path is still running."""
        ok = np.array([v != UNDER_RESOLVED for v in self.verdicts])
        alive = np.all(np.isfinite(self.series["M"][ok]), axis=0)
        stop = np.argmin(alive) if not alive.all() else alive.size
        return np.arange(stop)

    def resolved_series(self, name: str) -> np.ndarray:
        ok = np.array([v != UNDER_RESOLVED for v in self.verdicts])
        return self.series[name][ok]


def _config_hash(u0: ComplexField, spec: ModelSpec, T, dt, paths, master_seed, sample_every) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(u0.values).tobytes())
    g = u0.grid
    noise = spec.noise.spec if spec.noise is not None else None
    h.update(
        repr((g.d, g.L, g.N, spec.sigma, spec.nonlinearity, spec.sigma_aux, spec.lam, noise,
              spec.truncation, T, dt, paths, master_seed, sample_every)).encode()
    )
    return h.hexdigest()[:16]


def _run_chunk(args) -> list[Trajectory]:
    u0, spec, T, dt, detector, master_seed, indices, sample_every = args
    rngs = [path_rng(master_seed, i) for i in indices]
    return evolve_batch(u0, spec, T, dt, detector, rngs, sample_every, seeds=list(indices))


def _align(tr: Trajectory, times: np.ndarray, name: str) -> np.ndarray:
    out = np.full(times.size, np.nan)
    t = tr.times
    vals = tr.series(name)
    pos = np.searchsorted(times, t)
    tol = 1e-9 * max(1.0, times[-1])
    for p, ti, v in zip(pos, t, vals):
        if p < times.size and abs(times[p] - ti) <= tol:
            out[p] = v
    if tr.verdict != "none":
        # a stopped path only counts strictly before its stopping record
        stop = tr.times[-1]
        out[times >= stop - tol] = np.nan
    return out


def run_ensemble(
    u0: ComplexField,
    spec: ModelSpec,
    T: float,
    dt: float,
    paths: int,
    master_seed: int,
    detector: BlowupDetectorParams = BlowupDetectorParams(),
    sample_every: int = 1,
    workers: int = 1,
    chunk: int = 250,
) -> EnsembleStats:
    """Run ``paths`` independent trajectories; results do not depend on ``workers``."""
    if paths < 2:
        raise ValueError("paths must be >= 2")
    chunks = [range(a, min(a + chunk, paths)) for a in range(0, paths, chunk)]
    jobs = [(u0, spec, T, dt, detector, master_seed, c, sample_every) for c in chunks]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk, jobs))
    else:
        parts = [_run_chunk(j) for j in jobs]
    trajs = [tr for part in parts for tr in part]

    n = int(round(T / dt))
    idx = list(range(0, n + 1, sample_every))
    if idx[-1] != n:
        idx.append(n)
    times = np.array(idx) * dt
    series = {q: np.stack([_align(tr, times, q) for tr in trajs]) for q in QUANTITIES}
    verdicts = [tr.verdict for tr in trajs]
    bad = sum(v == UNDER_RESOLVED for v in verdicts)
    if bad > MAX_UNDER_RESOLVED * paths:
        raise UnderResolvedError(f"{bad} of {paths} paths ended under-resolved")

    ref_tr = evolve(u0, spec.without_noise(), T, dt, BlowupDetectorParams(
        detector.K_blow, detector.tail_threshold, confirm=False), sample_every=sample_every)
    reference = {q: _align(ref_tr, times, q) for q in QUANTITIES}
    r0 = trajs[0].records[0]
    initial = {"M": r0.M, "H": r0.H, "G": r0.G, "V": r0.V, "lp": trajs[0].lp[0]}
    return EnsembleStats(
        paths=paths,
        times=times,
        series=series,
        verdicts=verdicts,
        tau_star=np.array([tr.tau_star for tr in trajs]),
        master_seed=master_seed,
        config_hash=_config_hash(u0, spec, T, dt, paths, master_seed, sample_every),
        sigma=spec.sigma,
        d=u0.grid.d,
        initial=initial,
        reference=reference,
    )


def wilson_interval(k: int, n: int, z: float = WILSON_Z) -> tuple[float, float]:
    if n <= 0:
        raise ValueError("need at least one trial")
    p = k / n
    den = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    # the endpoints are exactly 0 and 1 at k = 0 and k = n; avoid roundoff there
    lo = 0.0 if k == 0 else max(0.0, centre - half)
    hi = 1.0 if k == n else min(1.0, centre + half)
    return lo, hi


def estimate_blowup_probability(stats: EnsembleStats, t_bar: float) -> tuple[float, tuple[float, float]]:
    """Fraction of paths detected with tau* <= t_bar, with a 95% Wilson interval."""
    if t_bar > stats.times[-1] + 1e-12:
        raise ValueError("t_bar exceeds the ensemble horizon")
    hits = sum(
        1 for v, tau in zip(stats.verdicts, stats.tau_star) if v == DETECTED and tau <= t_bar
    )
    return hits / stats.paths, wilson_interval(hits, stats.paths)


@dataclass
class IdentityCheck:
    times: np.ndarray
    residual: np.ndarray
    stderr: np.ndarray
    bias: np.ndarray
    passed: bool

    @property
    def worst_ratio(self) -> float:
        """max |residual| / (3 SE + bias) over the window (0/0 counts as 0)."""
        tol = 3.0 * self.stderr + self.bias
        with np.errstate(invalid="ignore", divide="ignore"):
            r = np.where(tol > 0, np.abs(self.residual) / tol, np.where(self.residual == 0, 0.0, np.inf))
        return float(np.max(r)) if r.size else 0.0


def _judge(times, per_path: np.ndarray, ref_residual: np.ndarray) -> IdentityCheck:
    res = per_path.mean(axis=0)
    n = per_path.shape[0]
    se = per_path.std(axis=0, ddof=1) / math.sqrt(n)
    bias = 2.0 * np.abs(ref_residual)
    ok = bool(np.all(np.abs(res) <= 3.0 * se + bias + 1e-14))
    return IdentityCheck(times, res, se, bias, ok)


def check_energy_identity(stats: EnsembleStats, op: Optional[CovarianceOperator]) -> IdentityCheck:
    """E H(t) = H(u0) + (1/2) c1 M(u0) t for a homogeneous kernel with f_phi1 = c1."""
    c1 = 0.0
    if op is not None:
        if np.ptp(op.f1) > 1e-12 * max(1.0, abs(op.f1.max())):
            raise ValueError("energy drift closed form needs a constant f_phi1")
        c1 = float(op.f1.flat[0])
    w = stats.identity_window()
    t = stats.times[w]
    H0, M0 = stats.initial["H"], stats.initial["M"]
    per_path = stats.resolved_series("H")[:, w] - H0 - 0.5 * c1 * M0 * t
    ref = stats.reference["H"][w] - H0
    return _judge(t, per_path, ref)


def momentum_residual(G, H, lp, t, sigma, d, G0):
    coef = (2.0 - sigma * d) / (sigma + 1.0)
    return G - G0 - 4.0 * trapezoid_cumulative(H, t) - coef * trapezoid_cumulative(lp, t)


def check_momentum_identity(stats: EnsembleStats, sigma: Optional[float] = None) -> IdentityCheck:
    sigma = stats.sigma if sigma is None else sigma
    w = stats.identity_window()
    t = stats.times[w]
    G0 = stats.initial["G"]
    s = {q: stats.resolved_series(q)[:, w] for q in ("G", "H", "lp")}
    per_path = momentum_residual(s["G"], s["H"], s["lp"], t, sigma, stats.d, G0)
    r = {q: stats.reference[q][w] for q in ("G", "H", "lp")}
    ref = momentum_residual(r["G"], r["H"], r["lp"], t, sigma, stats.d, G0)
    return _judge(t, per_path, ref)


def variance_residual(traj: Trajectory) -> float:
    """V(T) - V(0) - 4 int_0^T G ds, trapezoid over the recorded samples."""
    t = traj.times
    if t.size < 2:
        return 0.0
    V, G = traj.series("V"), traj.series("G")
    return float(V[-1] - V[0] - 4.0 * trapezoid_cumulative(G, t)[-1])


@dataclass
class VarianceCheck:
    residual: float
    residual_half: float = math.nan

    @property
    def ratio(self) -> float:
        return self.residual_half / self.residual if self.residual else math.nan


def check_variance_identity(traj: Trajectory, refined: Optional[Trajectory] = None) -> VarianceCheck:
    if traj.verdict != "none":
        raise ValueError("variance identity needs a trajectory without blow-up")
    r = variance_residual(traj)
    return VarianceCheck(r, math.nan if refined is None else variance_residual(refined))


@dataclass
class Theorem41Check:
    criterion: float
    estimate: float
    interval: tuple[float, float]
    verdict: str  # "pass", "fail" or "not applicable"


def check_theorem41(stats: EnsembleStats, op: Optional[CovarianceOperator], t_bar: float) -> Theorem41Check:
    i = stats.initial
    m = 0.0 if op is None else op.m
    value = blowup_functional(i["M"], i["H"], i["G"], i["V"], m, t_bar)
    p, ci = estimate_blowup_probability(stats, t_bar)
    if value >= 0:
        return Theorem41Check(value, p, ci, "not applicable")
    return Theorem41Check(value, p, ci, "pass" if ci[0] > 0 else "fail")
