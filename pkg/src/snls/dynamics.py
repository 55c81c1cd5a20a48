"""Split-step integration of the stochastic NLS  i du = (Delta u + |u|^{2 sigma} u) dt + u o dW.

Every substep is solved exactly:

* the linear flow multiplies mode k by exp(i |k|^2 dt);
* the nonlinear, auxiliary, potential and noise parts are real potentials,
  so over a step they only rotate the phase of u pointwise.

Because the noise enters as a real potential, the phase rotation
exp(-i dW) is the exact Stratonovich solution of du = -i u o dW and no Ito
correction appears in the main integrator. The Ito drift -(1/2) F_phi u is used
only by :func:`ito_reference_step`, an explicit Euler-Maruyama cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from . import diagnostics as diag
from .grid import ComplexField, Grid, _spectral_norm2, fft, ifft
from .noise import CovarianceOperator, NoisePath, colour, white_noise

Potential = Callable[[float], np.ndarray]

NONE = "none"
DETECTED = "detected"
UNDER_RESOLVED = "under_resolved"


class UnderResolvedError(RuntimeError):
    """Raised when a run loses spatial resolution before reaching its goal."""


@dataclass(frozen=True)
class TruncationParams:
    R: float
    s0: float = 1.75

    def __post_init__(self) -> None:
        if self.R < 1:
            raise ValueError("cutoff level R must be >= 1")
        if not 1.5 < self.s0 < 2:
            raise ValueError("s0 must lie in (3/2, 2)")


@dataclass(frozen=True)
class ModelSpec:
    """Coefficients of i u_t = Delta u + c |u|^{2 sigma} u + lam |u|^{2 sigma_aux} u + f u + noise.

    ``nonlinearity`` is the coefficient c (1 for the physical model, 0 turns the
    primary nonlinearity off, as in the auxiliary equation).
    """

    sigma: float
    nonlinearity: float = 1.0
    sigma_aux: Optional[float] = None
    lam: float = 0.0
    potential: Optional[Potential] = None
    noise: Optional[CovarianceOperator] = None
    truncation: Optional[TruncationParams] = None

    def __post_init__(self) -> None:
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.sigma_aux is not None and not 0 < self.sigma_aux < self.sigma:
            raise ValueError("auxiliary exponent must lie in (0, sigma)")

    def check_grid(self, g: Grid) -> None:
        if self.sigma_aux is not None and self.sigma_aux <= 2.0 / g.d:
            raise ValueError(f"auxiliary exponent must exceed 2/d = {2.0 / g.d}")
        if self.noise is not None and self.noise.grid != g:
            raise ValueError("noise operator lives on a different grid")

    @property
    def noisy(self) -> bool:
        return self.noise is not None and self.noise.spec.amplitude > 0

    def without_noise(self) -> ModelSpec:
        return replace(self, noise=None)


@dataclass(frozen=True)
class BlowupDetectorParams:
    K_blow: float = 100.0
    tail_threshold: float = 0.1
    confirm: bool = True
    confirm_tolerance: float = 0.05


@dataclass
class Trajectory:
    records: list[diag.DiagnosticsRecord]
    final: ComplexField
    verdict: str = NONE
    tau_star: float = math.inf
    dt: float = 0.0
    seed: Optional[int] = None
    lp: list[float] = field(default_factory=list)  # int |u|^{2 sigma + 2} per record
    tau_confirm: float = math.nan

    @property
    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.records])

    def series(self, name: str) -> np.ndarray:
        if name == "lp":
            return np.asarray(self.lp)
        return np.array([getattr(r, name) for r in self.records])


# -- exact substeps ---------------------------------------------------------------


def linear_step(u: ComplexField, dt: float) -> ComplexField:
    """Exact flow of i u_t = Delta u: mode k picks up exp(i |k|^2 dt)."""
    g = u.grid
    return u.with_values(ifft(np.exp(1j * g.k2 * dt) * fft(u.values, g), g))


def _power(x: np.ndarray, p: float) -> np.ndarray:
    """x**p, by repeated multiplication when p is a small integer (much faster)."""
    if p == int(p) and 1 <= p <= 4:
        out = x
        for _ in range(int(p) - 1):
            out = out * x
        return out
    return x**p


def phase_factor(phase: np.ndarray) -> np.ndarray:
    """exp(-i phase) for real ``phase``, via cos and sin."""
    out = np.empty(np.shape(phase), dtype=complex)
    np.cos(phase, out=out.real)
    np.sin(phase, out=out.imag)
    np.negative(out.imag, out=out.imag)
    return out


def _local_potential(u: np.ndarray, spec: ModelSpec, t_mid: float) -> np.ndarray:
    rho = u.real**2 + u.imag**2
    pot = np.zeros(rho.shape)
    if spec.nonlinearity:
        pot = pot + spec.nonlinearity * _power(rho, spec.sigma)
    if spec.sigma_aux is not None and spec.lam:
        pot = pot + spec.lam * _power(rho, spec.sigma_aux)
    if spec.potential is not None:
        pot = pot + spec.potential(t_mid)
    return pot


def local_step(u: ComplexField, dt: float, spec: ModelSpec, t: float = 0.0) -> ComplexField:
    """Exact pointwise phase rotation for the nonlinear and potential terms.

    The potential is evaluated at the midpoint ``t + dt/2``.
    """
    pot = _local_potential(u.values, spec, t + 0.5 * dt)
    return u.with_values(u.values * phase_factor(dt * pot))


def noise_step(u: ComplexField, dW: np.ndarray) -> ComplexField:
    dW = np.asarray(dW)
    if np.iscomplexobj(dW):
        if np.any(dW.imag != 0):
            raise ValueError("noise increment must be real")
        dW = dW.real
    return u.with_values(u.values * np.exp(-1j * dW))


def _cutoff(x):
    """Smooth step: 1 on [0, 1], 0 on [2, inf), C-infinity in between."""
    x = np.asarray(x, dtype=float)

    def q(y):
        with np.errstate(divide="ignore", over="ignore"):
            return np.where(y > 0, np.exp(-1.0 / np.where(y > 0, y, 1.0)), 0.0)

    a, b = q(2.0 - x), q(x - 1.0)
    return a / (a + b)


def _hs2(uhat: np.ndarray, g: Grid, s: float):
    return _spectral_norm2(uhat, g, (1.0 + g.k2) ** s)


def truncation_factor(u: ComplexField, p: TruncationParams) -> float:
    ratio = _hs2(fft(u.values, u.grid), u.grid, p.s0) / p.R**2
    return float(_cutoff(ratio))


def strang_step(
    u: ComplexField,
    dt: float,
    spec: ModelSpec,
    t: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> ComplexField:
    """Half linear step, phase step (local + noise), half linear step.

    Negative ``dt`` runs the deterministic flow backwards; it is the exact
    inverse of the forward step.
    """
    g = u.grid
    dW = None
    if spec.noisy:
        if dt <= 0:
            raise ValueError("noisy steps need dt > 0")
        if rng is None:
            raise ValueError("a random stream is required for a noisy model")
        dW = colour(spec.noise, white_noise(g, dt, rng))
    st = _Stepper(g, spec, dt)
    v = st.step(fft(u.values, g), t, dW)
    return u.with_values(ifft(v, g))


def ito_reference_step(
    u: ComplexField,
    dt: float,
    spec: ModelSpec,
    rng: Optional[np.random.Generator] = None,
) -> ComplexField:
    """One explicit Euler-Maruyama step of the Ito form of the equation."""
    g = u.grid
    _check_em_stability(g, dt)
    dW = None
    if spec.noisy:
        dW = colour(spec.noise, white_noise(g, dt, rng))
    return u.with_values(_em_step(u.values, g, spec, dt, 0.0, dW))


def _check_em_stability(g: Grid, dt: float) -> None:
    if dt > g.h**2 / math.pi:
        raise ValueError(f"dt={dt} violates explicit stability bound h^2/pi = {g.h**2 / math.pi:.3g}")


def _em_step(u, g, spec, dt, t, dW):
    lap = ifft(-g.k2 * fft(u, g), g)
    out = u - 1j * dt * (lap + _local_potential(u, spec, t) * u)
    if dW is not None:
        out = out - 1j * u * dW - 0.5 * dt * spec.noise.F * u
    return out


# -- batched engine ---------------------------------------------------------------


class _Stepper:
    """Strang step on spectral states with optional leading batch axis."""

    def __init__(self, g: Grid, spec: ModelSpec, dt: float):
        self.g = g
        self.spec = spec
        self.dt = dt
        self.half = np.exp(0.5j * dt * g.k2)
        self.trunc_w = None
        if spec.truncation is not None:
            self.trunc_w = (1.0 + g.k2) ** spec.truncation.s0

    def theta(self, v: np.ndarray):
        p = self.spec.truncation
        return _cutoff(_spectral_norm2(v, self.g, self.trunc_w) / p.R**2)

    def step(self, v: np.ndarray, t: float, dW: Optional[np.ndarray]) -> np.ndarray:
        g = self.g
        u = ifft(self.half * v, g)
        phase = self.dt * _local_potential(u, self.spec, t + 0.5 * self.dt)
        if dW is not None:
            phase = phase + dW
        if self.trunc_w is not None:
            # linear flow preserves every H^s norm, so theta can be read off v
            th = self.theta(v)
            phase = phase * np.reshape(th, np.shape(th) + (1,) * g.d)
        return self.half * fft(u * phase_factor(phase), g)


class _Track:
    """A batch of paths advanced at one step size, with firing bookkeeping."""

    def __init__(self, v0: np.ndarray, stepper: _Stepper, h1_ref: float, det: BlowupDetectorParams):
        self.v = v0.copy()
        self.st = stepper
        self.active = np.ones(v0.shape[0], dtype=bool)
        self.fired = np.full(v0.shape[0], math.nan)
        self.kind = np.array([NONE] * v0.shape[0], dtype=object)
        self.h1_lim = det.K_blow * h1_ref
        self.tail = det.tail_threshold

    def advance(self, t: float, dW: Optional[np.ndarray]) -> None:
        idx = np.flatnonzero(self.active)
        if idx.size == 0:
            return
        self.v[idx] = self.st.step(self.v[idx], t, None if dW is None else dW[idx])

    def check(self, t: float) -> np.ndarray:
        """Fire the detectors; returns indices that fired at this check."""
        g = self.st.g
        idx = np.flatnonzero(self.active)
        if idx.size == 0:
            return idx
        v = self.v[idx]
        if not np.all(np.isfinite(v)):
            raise FloatingPointError("non-finite state reached without detector firing")
        h1 = np.sqrt(_spectral_norm2(v, g, 1.0 + g.k2))
        tail = diag.spectral_tail_fraction(v, g)
        under = tail >= self.tail
        blow = (h1 >= self.h1_lim) & ~under
        hit = under | blow
        fired = idx[hit]
        self.kind[idx[under]] = UNDER_RESOLVED
        self.kind[idx[blow]] = DETECTED
        self.fired[fired] = t
        self.active[fired] = False
        return fired


def _n_steps(T: float, dt: float) -> int:
    n = int(round(T / dt))
    if abs(n * dt - T) > 1e-9 * max(T, dt):
        raise ValueError(f"dt={dt} does not divide the horizon T={T}")
    return n


def evolve_batch(
    u0: ComplexField,
    spec: ModelSpec,
    T: float,
    dt: float,
    detector: BlowupDetectorParams = BlowupDetectorParams(),
    rngs: Sequence[Optional[np.random.Generator]] = (None,),
    sample_every: int = 1,
    seeds: Optional[Sequence[Optional[int]]] = None,
    h1_ref: Optional[float] = None,
) -> list[Trajectory]:
    """Advance ``len(rngs)`` independent paths from the same u0.

    Each path draws two half-step white-noise fields per step from its own
    stream. The main run uses their sum; the optional confirmation run at dt/2
    uses them one at a time, so both see the same Brownian path. The blow-up
    threshold is ``K_blow * h1_ref``, with ``h1_ref`` defaulting to |u0|_{H^1}.
    """
    if not (T >= 0 and dt > 0):
        raise ValueError("need T >= 0 and dt > 0")
    if sample_every < 1:
        raise ValueError("sample_every must be a positive integer")
    g = u0.grid
    spec.check_grid(g)
    n_steps = _n_steps(T, dt) if T > 0 else 0
    P = len(rngs)
    if spec.noisy and any(r is None for r in rngs):
        raise ValueError("every path needs a random stream for a noisy model")
    seeds = list(seeds) if seeds is not None else [None] * P

    v0 = np.broadcast_to(fft(u0.values, g), (P,) + g.shape)
    if h1_ref is None:
        h1_ref = math.sqrt(float(_spectral_norm2(v0[0], g, 1.0 + g.k2)))
    main = _Track(v0, _Stepper(g, spec, dt), h1_ref, detector)
    fine = _Track(v0, _Stepper(g, spec, 0.5 * dt), h1_ref, detector) if detector.confirm else None

    records: list[list] = [[] for _ in range(P)]
    lps: list[list] = [[] for _ in range(P)]
    finals: list[Optional[np.ndarray]] = [None] * P

    def sample(t: float, idx: np.ndarray) -> None:
        if idx.size == 0:
            return
        v = main.v[idx]
        u = ifft(v, g)
        d = diag._all(u, g, spec.sigma, uhat=v)
        for j, p in enumerate(idx):
            records[p].append(
                diag.DiagnosticsRecord(t, *(float(d[k][j]) for k in diag.CSV_HEADER[1:]))
            )
            lps[p].append(float(d["P"][j]))

    sample(0.0, np.arange(P))

    def fine_needed() -> np.ndarray:
        if fine is None:
            return np.zeros(P, dtype=bool)
        waiting = main.active | (main.kind == DETECTED)
        limit = np.where(main.active, math.inf, main.fired * (1.0 + detector.confirm_tolerance))
        return fine.active & waiting & (t_now <= limit)

    k = 0
    t_now = 0.0
    while True:
        main_go = main.active.any() and k < n_steps
        fine_go = fine is not None and fine_needed().any()
        if not main_go:
            if fine is not None:
                # the dt/2 run is only needed past the horizon to confirm a firing
                fine.active &= main.kind == DETECTED
                fine_go = fine_needed().any()
            if not fine_go:
                break
        t = k * dt
        dW = None
        if spec.noisy:
            need = main.active.copy() if main_go else np.zeros(P, dtype=bool)
            if fine is not None:
                need |= fine_needed()
            dW = np.zeros((P, 2) + g.shape)
            idx = np.flatnonzero(need)
            xi = np.stack([white_noise(g, 0.5 * dt, rngs[p], count=2) for p in idx])
            dW[idx] = colour(spec.noise, xi)
        if main_go:
            main.advance(t, None if dW is None else dW[:, 0] + dW[:, 1])
        if fine is not None:
            for sub in range(2):
                go = fine_needed()
                fine.active, parked = go, fine.active & ~go
                fine.advance(t + 0.5 * dt * sub, None if dW is None else dW[:, sub])
                t_now = t + 0.5 * dt * (sub + 1)
                fine.check(t_now)
                fine.active |= parked
        k += 1
        t_now = k * dt
        if main_go:
            alive = np.flatnonzero(main.active)
            fired = main.check(t_now)
            if fired.size:
                sample(t_now, fired)
                for p in fired:
                    finals[p] = main.v[p].copy()
            if k % sample_every == 0 or k == n_steps:
                sample(t_now, np.setdiff1d(alive, fired))

    out = []
    for p in range(P):
        vfin = finals[p] if finals[p] is not None else main.v[p]
        verdict = main.kind[p]
        tau = main.fired[p] if verdict == DETECTED else math.inf
        tau_c = math.nan if fine is None else fine.fired[p]
        if verdict == DETECTED and fine is not None:
            ok = fine.kind[p] == DETECTED and abs(tau_c - tau) <= detector.confirm_tolerance * tau
            if not ok:
                verdict, tau = UNDER_RESOLVED, math.inf
        out.append(
            Trajectory(
                records=records[p],
                final=ComplexField(g, ifft(vfin, g)),
                verdict=verdict,
                tau_star=tau,
                dt=dt,
                seed=seeds[p],
                lp=lps[p],
                tau_confirm=tau_c,
            )
        )
    return out


def evolve(
    u0: ComplexField,
    spec: ModelSpec,
    T: float,
    dt: float,
    detector: BlowupDetectorParams = BlowupDetectorParams(),
    rng: Optional[np.random.Generator] = None,
    sample_every: int = 1,
    seed: Optional[int] = None,
) -> Trajectory:
    """Single-path :func:`evolve_batch`."""
    if rng is None and seed is not None:
        rng = np.random.default_rng(seed)
    return evolve_batch(u0, spec, T, dt, detector, [rng], sample_every, [seed])[0]


def ito_reference_batch(
    u0: ComplexField,
    spec: ModelSpec,
    T: float,
    dt: float,
    rngs: Sequence[Optional[np.random.Generator]],
    sample_every: int = 1,
) -> dict[str, np.ndarray]:
    """Euler-Maruyama ensemble; returns per-path diagnostic series (paths x samples)."""
    g = u0.grid
    _check_em_stability(g, dt)
    n_steps = _n_steps(T, dt)
    P = len(rngs)
    u = np.broadcast_to(u0.values, (P,) + g.shape).copy()
    times, rows = [], []

    def sample(t):
        times.append(t)
        rows.append(diag._all(u, g, spec.sigma))

    sample(0.0)
    for k in range(n_steps):
        dW = None
        if spec.noisy:
            dW = colour(spec.noise, np.stack([white_noise(g, dt, r) for r in rngs]))
        u = _em_step(u, g, spec, dt, k * dt, dW)
        if (k + 1) % sample_every == 0 or k + 1 == n_steps:
            sample((k + 1) * dt)
    out = {name: np.stack([r[name] for r in rows], axis=1) for name in rows[0]}
    out["t"] = np.array(times)
    return out


def evolve_path(
    u0: ComplexField,
    spec: ModelSpec,
    dt: float,
    path: Optional[NoisePath] = None,
    steps: Optional[int] = None,
    sample_every: int = 1,
) -> Trajectory:
    """Deterministic replay driven by prescribed increments.

    ``path.dt`` must divide ``dt``; each step consumes the sum of
    ``dt / path.dt`` consecutive increments, so runs at dt and dt/2 can share
    one Brownian path. No blow-up detection is performed.
    """
    g = u0.grid
    spec.check_grid(g)
    if path is not None:
        ratio = int(round(dt / path.dt))
        if ratio < 1 or abs(ratio * path.dt - dt) > 1e-9 * dt:
            raise ValueError("noise path step must divide dt")
        n = len(path.increments) // ratio if steps is None else steps
        if n * ratio > len(path.increments):
            raise ValueError("noise path too short")
    else:
        if steps is None:
            raise ValueError("steps required without a noise path")
        ratio, n = 1, steps
    st = _Stepper(g, spec, dt)
    v = fft(u0.values, g)
    records, lps = [], []

    def sample(t):
        u = ifft(v, g)
        d = diag._all(u, g, spec.sigma, uhat=v)
        records.append(diag.DiagnosticsRecord(t, *(float(d[k]) for k in diag.CSV_HEADER[1:])))
        lps.append(float(d["P"]))

    sample(0.0)
    for k in range(n):
        dW = None
        if path is not None:
            dW = sum(path.increments[k * ratio + j] for j in range(ratio))
        v = st.step(v, k * dt, dW)
        if (k + 1) % sample_every == 0 or k + 1 == n:
            sample((k + 1) * dt)
    return Trajectory(records, ComplexField(g, ifft(v, g)), dt=dt, seed=getattr(path, "seed", None), lp=lps)
