"""Real Q-Wiener noise defined by a homogeneous Gaussian convolution kernel.

The covariance operator is diagonal in the Fourier basis, so everything is
expressed through the real spectral multipliers ``m_k`` of the periodized
kernel. The intensity fields and the correlation function are computed from
those same multipliers, which keeps them consistent with the sampler.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .grid import Grid, _axes


class ResolutionError(ValueError):
    """Raised when a grid cannot resolve the requested feature."""


@dataclass(frozen=True)
class KernelSpec:
    amplitude: float = 0.0
    width: float = 1.0
    shape: str = "gaussian"

    def __post_init__(self) -> None:
        if self.shape != "gaussian":
            raise ValueError(f"unsupported kernel shape {self.shape!r}")
        if self.amplitude < 0:
            raise ValueError("kernel amplitude must be nonnegative")
        if not self.width > 0:
            raise ValueError("kernel width must be positive")

    def profile(self, r2: np.ndarray) -> np.ndarray:
        return self.amplitude * np.exp(-r2 / (2.0 * self.width**2))


@dataclass(frozen=True, eq=False)
class CovarianceOperator:
    spec: KernelSpec
    grid: Grid
    multipliers: np.ndarray  # full FFT layout, real
    F: np.ndarray = field(repr=False)
    f1: np.ndarray = field(repr=False)
    m: float = 0.0

    @property
    def _rmult(self) -> np.ndarray:
        # multipliers restricted to the rfft half-spectrum
        return self.multipliers[..., : self.grid.N // 2 + 1]

    def _lags(self) -> np.ndarray:
        g = self.grid
        return np.fft.ifftn(self.multipliers**2).real / g.cell


def build_operator(spec: KernelSpec, g: Grid) -> CovarianceOperator:
    if spec.width < 2.0 * g.h:
        raise ResolutionError(
            f"kernel width {spec.width} under-resolved on spacing {g.h:.4g} (need >= 2h)"
        )
    if spec.width > g.L / 5.0:
        warnings.warn(
            f"kernel width {spec.width} exceeds L/5; periodization error may be noticeable",
            stacklevel=2,
        )
    # kernel centered at node 0 in FFT layout, summed over neighbouring images
    offsets = g.h * np.fft.fftfreq(g.N, d=1.0 / g.N)
    prof = np.zeros(g.shape)
    for shift in np.ndindex(*([3] * g.d)):
        axes = np.meshgrid(
            *[offsets + 2.0 * g.L * (s - 1) for s in shift], indexing="ij"
        )
        prof += spec.profile(sum(a**2 for a in axes))
    m = (g.cell * np.fft.fftn(prof)).real
    F = np.full(g.shape, (m**2).sum() / g.volume)
    f1 = np.full(g.shape, (g.dk2 * m**2).sum() / g.volume)
    return CovarianceOperator(spec, g, m, F, f1, float(f1.max()))


def F_phi(op: CovarianceOperator) -> np.ndarray:
    """Pointwise noise intensity sum_k (phi e_k(x))^2."""
    return op.F.copy()


def f_phi1(op: CovarianceOperator) -> np.ndarray:
    """Pointwise intensity of the noise gradient sum_k |grad phi e_k(x)|^2."""
    return op.f1.copy()


def m_phi(op: CovarianceOperator) -> float:
    return op.m


def correlation(op: CovarianceOperator, x, y) -> float:
    """Two-point correlation c(x, y) for node indices ``x`` and ``y``."""
    g = op.grid
    xi = np.atleast_1d(x)
    yi = np.atleast_1d(y)
    if xi.size != g.d or yi.size != g.d:
        raise ValueError("node index must have one entry per dimension")
    lag = tuple(int(a - b) % g.N for a, b in zip(xi, yi))
    return float(op._lags()[lag])


def white_noise(g: Grid, dt: float, rng: np.random.Generator, count: int | None = None) -> np.ndarray:
    """Discrete space-time white noise over one interval, variance dt/h^d per node."""
    shape = g.shape if count is None else (count,) + g.shape
    return rng.standard_normal(shape) * math.sqrt(dt / g.cell)


def colour(op: CovarianceOperator, xi: np.ndarray) -> np.ndarray:
    """Apply phi to white noise; the result is exactly real (half-spectrum transform)."""
    g = op.grid
    axes = _axes(g)
    return np.fft.irfftn(op._rmult * np.fft.rfftn(xi, axes=axes), s=g.shape, axes=axes)


def sample_increment(op: CovarianceOperator, dt: float, rng: np.random.Generator) -> np.ndarray:
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    return colour(op, white_noise(op.grid, dt, rng))


@dataclass(frozen=True)
class NoisePath:
    grid: Grid
    dt: float
    increments: list[np.ndarray]
    seed: int | None = None


def sample_path(op: CovarianceOperator, dt: float, steps: int, seed: int) -> NoisePath:
    rng = np.random.default_rng(seed)
    return NoisePath(op.grid, dt, [sample_increment(op, dt, rng) for _ in range(steps)], seed)


def projector_mask(g: Grid, n: int) -> np.ndarray:
    """Keep modes with |j| < n on every axis; n >= N/2 keeps everything."""
    if n >= g.N // 2:
        return np.ones(g.shape, dtype=bool)
    keep = np.abs(g.mode_index) < n
    return np.logical_and.reduce(np.meshgrid(*([keep] * g.d), indexing="ij"))


def piecewise_rate(path: NoisePath, n: int, k: int) -> np.ndarray:
    """Projected noise rate on interval k, (P_n W(k dt) - P_n W((k-1) dt)) / dt.

    The path starts at W(-dt) = 0, so interval 0 carries no noise.
    """
    grid = path.grid
    if not 0 <= k < len(path.increments):
        raise IndexError(f"interval index {k} out of range")
    if n < 0 or n > grid.N // 2:
        raise ValueError(f"mode cutoff {n} outside [0, N/2]")
    if k == 0 or n == 0:
        return np.zeros(grid.shape)
    inc = path.increments[k - 1]
    if n == grid.N // 2:
        return inc / path.dt
    mask = projector_mask(grid, n)
    return np.fft.ifftn(np.fft.fftn(inc) * mask).real / path.dt
