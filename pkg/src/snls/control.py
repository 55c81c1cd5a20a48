"""Control-potential construction that drives any nonzero state to very negative energy.

The state is evolved under the auxiliary supercritical equation
i U_t = Delta U + lam |U|^{2 sigma_aux} U, with lam large enough that the
auxiliary energy forces collapse before T1. Along the way U also solves the
physical equation with the real potential f = lam |U|^{2 sigma_aux} - |U|^{2 sigma},
and its physical energy H(U) tends to -infinity, so the first time H(U) < -H_bar
gives the switch time T2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import diagnostics as diag
from .dynamics import (
    BlowupDetectorParams,
    ModelSpec,
    Trajectory,
    UnderResolvedError,
    evolve_batch,
)
from .grid import ComplexField, Grid, _spectral_norm2, fft, ifft
from .noise import CovarianceOperator

LAMBDA_MARGIN = 0.05
PHASE_CAP = 0.002  # max nonlinear phase rotation per step during the collapse
MIN_STEP_RATIO = 1e-7


def default_sigma_aux(sigma: float, d: int) -> float:
    return 0.5 * (2.0 / d + sigma)


def _check_aux(sigma_aux: float, d: int, sigma: Optional[float] = None) -> None:
    upper = math.inf if sigma is None else sigma
    if not 2.0 / d < sigma_aux < upper:
        raise ValueError(f"auxiliary exponent {sigma_aux} outside (2/d, sigma)")


def lambda_threshold(u0: ComplexField, sigma_aux: float, T1: float) -> float:
    """Smallest coupling with H_aux(u0) = -(V + 4 T1 |G|) / (8 T1^2), T1 clamped to 1."""
    T1 = min(T1, 1.0)
    target = 0.5 * diag.kinetic(u0) + (diag.variance(u0) + 4.0 * T1 * abs(diag.momentum(u0))) / (
        8.0 * T1**2
    )
    return (2.0 * sigma_aux + 2.0) * target / diag.lp_integral(u0, sigma_aux)


def choose_lambda(u0: ComplexField, sigma_aux: float, T1: float, sigma: Optional[float] = None) -> float:
    if not T1 > 0:
        raise ValueError("T1 must be positive")
    if not np.any(u0.values):
        raise ValueError("initial datum must be nonzero")
    _check_aux(sigma_aux, u0.grid.d, sigma)
    return (1.0 + LAMBDA_MARGIN) * lambda_threshold(u0, sigma_aux, T1)


def blowup_time_bound(V0: float, G0: float, Haux: float) -> float:
    """Smallest positive root of 8 Haux t^2 + 4 G0 t + V0 = 0."""
    if V0 < 0:
        raise ValueError("variance must be nonnegative")
    a, b, c = 8.0 * Haux, 4.0 * G0, V0
    if a == 0:
        if b < 0:
            return -c / b
        raise ValueError("variance bound has no positive root")
    disc = b * b - 4.0 * a * c
    if disc < 0:
        raise ValueError("variance bound has no positive root")
    sq = math.sqrt(disc)
    roots = [r for r in ((-b - sq) / (2 * a), (-b + sq) / (2 * a)) if r >= 0]
    if not roots:
        raise ValueError("variance bound has no positive root")
    return min(roots)


def _lookup(times: np.ndarray, t: float, at):
    """Value at ``t``: exact at a stored time, linear in between, KeyError outside."""
    if len(times) == 0:
        raise KeyError("empty potential")
    i = int(np.searchsorted(times, t))
    tol = 1e-12 * max(1.0, abs(t))
    if i < len(times) and abs(times[i] - t) <= tol:
        return at(i)
    if i > 0 and abs(times[i - 1] - t) <= tol:
        return at(i - 1)
    if i == 0 or i == len(times):
        raise KeyError(f"no potential sample for t={t}")
    w = (t - times[i - 1]) / (times[i] - times[i - 1])
    return (1.0 - w) * at(i - 1) + w * at(i)


@dataclass(frozen=True, eq=False)
class SampledPotential:
    """f(t) = lam rho^{2 sigma_aux} - rho^{2 sigma}, from stored moduli rho at step midpoints."""

    times: np.ndarray
    moduli: np.ndarray = field(repr=False)
    sigma: float = 3.0
    sigma_aux: float = 2.5
    lam: float = 0.0

    def field_at(self, i: int) -> np.ndarray:
        rho = self.moduli[i]
        return self.lam * rho ** (2.0 * self.sigma_aux) - rho ** (2.0 * self.sigma)

    def __call__(self, t: float) -> np.ndarray:
        return _lookup(self.times, t, self.field_at)

    def __len__(self) -> int:
        return len(self.times)


@dataclass(frozen=True, eq=False)
class TabulatedPotential:
    """f given directly as one real field per step midpoint (as read back from disk)."""

    times: np.ndarray
    fields: list = field(repr=False)

    def field_at(self, i: int) -> np.ndarray:
        return self.fields[i]

    def __call__(self, t: float) -> np.ndarray:
        return _lookup(self.times, t, self.field_at)

    def __len__(self) -> int:
        return len(self.times)


@dataclass(eq=False)
class ControlResult:
    lam: float
    sigma_aux: float
    sigma: float
    T2: float
    potential: SampledPotential
    step_times: np.ndarray  # step boundaries 0 = t_0 < ... < t_n = T2
    U_T2: ComplexField
    certificate: diag.DiagnosticsRecord
    M_bar: float
    H_bar: float
    history: list[tuple[float, float, float]] = field(default_factory=list)  # (t, sup lam-term, H)
    h1_initial: float = 0.0


def _aux_step(v, g: Grid, dt: float, lam: float, sigma_aux: float):
    half = np.exp(0.5j * dt * g.k2)
    u = ifft(half * v, g)
    rho = np.abs(u)
    v = half * fft(u * np.exp(-1j * dt * lam * rho ** (2.0 * sigma_aux)), g)
    return v, rho


def construct_control(
    u0: ComplexField,
    sigma: float,
    sigma_aux: Optional[float],
    T1: float,
    M_bar: Optional[float],
    H_bar: float,
    dt: float,
    detector: BlowupDetectorParams = BlowupDetectorParams(),
    phase_cap: float = PHASE_CAP,
) -> ControlResult:
    """Run the auxiliary equation until H(U) < -H_bar inside the admissible set.

    Steps are Strang steps of size min(dt, phase_cap / max(lam |U|^{2 sigma_aux})),
    so the collapse is followed with a bounded phase rotation per step.
    """
    g = u0.grid
    if not np.any(u0.values):
        raise ValueError("initial datum must be nonzero")
    if sigma_aux is None:
        sigma_aux = default_sigma_aux(sigma, g.d)
    _check_aux(sigma_aux, g.d, sigma)
    if not H_bar > 0:
        raise ValueError("H_bar must be positive")
    M0, V0, G0 = diag.mass(u0), diag.variance(u0), diag.momentum(u0)
    M_min = max(M0 + 1.0, V0 + 4.0 * abs(G0) + 1.0)
    if M_bar is None:
        M_bar = M_min
    if M_bar < M_min:
        raise ValueError(f"M_bar must be at least {M_min}")
    T1 = min(T1, 1.0)
    lam = choose_lambda(u0, sigma_aux, T1, sigma)
    h1_0 = math.sqrt(diag.mass(u0) + diag.kinetic(u0))

    def qualifies(u: ComplexField) -> bool:
        return diag.in_admissible_set(u, sigma, M_bar, H_bar)

    empty = SampledPotential(np.zeros(0), np.zeros((0,) + g.shape), sigma, sigma_aux, lam)
    if qualifies(u0):
        return ControlResult(
            lam, sigma_aux, sigma, 0.0, empty, np.zeros(1), u0,
            diag.record(0.0, u0, sigma), M_bar, H_bar,
            [(0.0, 0.0, diag.energy(u0, sigma))], h1_0,
        )

    v = fft(u0.values, g)
    t = 0.0
    times, mids, moduli = [0.0], [], []
    history = [(0.0, float(lam * np.max(np.abs(u0.values)) ** (2 * sigma_aux)), diag.energy(u0, sigma))]
    while True:
        u = ifft(v, g)
        sup = lam * float(np.max(np.abs(u))) ** (2.0 * sigma_aux)
        step = min(dt, phase_cap / sup if sup > 0 else dt, T1 - t)
        if step < MIN_STEP_RATIO * dt or t >= T1:
            raise UnderResolvedError(
                f"H_bar={H_bar} not reached before T1={T1}; achieved H={history[-1][2]:.4g}"
            )
        v, rho = _aux_step(v, g, step, lam, sigma_aux)
        mids.append(t + 0.5 * step)
        moduli.append(rho)
        t = times[-1] + step
        times.append(t)
        U = ComplexField(g, ifft(v, g))
        H = diag.energy(U, sigma)
        history.append((t, float(lam * np.max(np.abs(U.values)) ** (2 * sigma_aux)), H))
        tail = float(diag.spectral_tail_fraction(v, g))
        if tail >= detector.tail_threshold:
            raise UnderResolvedError(
                f"resolution lost at t={t:.6g} (tail fraction {tail:.3g}); achieved H={H:.4g}"
            )
        if H < -H_bar and qualifies(U):
            break
    pot = SampledPotential(np.array(mids), np.array(moduli), sigma, sigma_aux, lam)
    return ControlResult(
        lam, sigma_aux, sigma, t, pot, np.array(times), U,
        diag.record(t, U, sigma), M_bar, H_bar, history, h1_0,
    )


def replay(ctrl, u0: ComplexField) -> ComplexField:
    """Evolve u0 under the physical equation with the stored potential f.

    ``ctrl`` needs ``sigma``, ``potential`` and ``step_times`` (a ControlResult
    or an archive read back from disk). The stored step boundaries are reused,
    so f is read exactly at each step midpoint.
    """
    g = u0.grid
    spec = ModelSpec(ctrl.sigma, potential=ctrl.potential)
    v = fft(u0.values, g)
    for t0, t1 in zip(ctrl.step_times[:-1], ctrl.step_times[1:]):
        dt = t1 - t0
        half = np.exp(0.5j * dt * g.k2)
        u = ifft(half * v, g)
        rho2 = np.abs(u) ** 2
        pot = rho2**spec.sigma + spec.potential(t0 + 0.5 * dt)
        v = half * fft(u * np.exp(-1j * dt * pot), g)
    return ComplexField(g, ifft(v, g))


def criterion_value(ctrl: ControlResult, op: Optional[CovarianceOperator], t2: float) -> float:
    c = ctrl.certificate
    m = 0.0 if op is None else op.m
    return diag.blowup_functional(c.M, c.H, c.G, c.V, m, t2)


def two_phase_run(
    ctrl: ControlResult,
    op: Optional[CovarianceOperator],
    sigma: float,
    t2: float,
    dt: float,
    rng=None,
    detector: BlowupDetectorParams = BlowupDetectorParams(),
    sample_every: int = 1,
    seed: Optional[int] = None,
) -> Trajectory:
    return two_phase_batch(ctrl, op, sigma, t2, dt, [rng], detector, sample_every, [seed])[0]


def two_phase_batch(
    ctrl: ControlResult,
    op: Optional[CovarianceOperator],
    sigma: float,
    t2: float,
    dt: float,
    rngs,
    detector: BlowupDetectorParams = BlowupDetectorParams(),
    sample_every: int = 1,
    seeds=None,
) -> list[Trajectory]:
    """Switch the control off at T2 and let the noisy model run for t2.

    Blow-up is measured against the H^1 norm of the original datum, and times
    are counted from the switch.
    """
    value = criterion_value(ctrl, op, t2)
    if not value < 0:
        raise ValueError(f"blow-up criterion not met at t2={t2}: value {value:.4g} >= 0")
    if not diag.in_admissible_set(ctrl.U_T2, sigma, ctrl.M_bar, ctrl.H_bar):
        raise ValueError("controlled state is outside the admissible set")
    spec = ModelSpec(sigma, noise=op)
    h1_ref = ctrl.h1_initial if ctrl.h1_initial > 0 else None
    return evolve_batch(
        ctrl.U_T2, spec, t2, dt, detector, rngs, sample_every, seeds, h1_ref=h1_ref
    )
