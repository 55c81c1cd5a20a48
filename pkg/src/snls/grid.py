"""Periodic spectral grid on a centered box [-L, L)^d and the fields living on it.

All array-level helpers (names starting with ``_``) accept arrays whose last
``d`` axes are the spatial axes, so a leading batch axis of independent
fields is handled for free.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class Grid:
    """Centered periodic box with ``N`` nodes per axis and half-width ``L``."""

    d: int
    L: float
    N: int

    def __post_init__(self) -> None:
        if self.d not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.d}")
        if int(self.N) != self.N or self.N % 2:
            raise ValueError(f"N must be an even integer, got {self.N}")
        if self.N < 8:
            raise ValueError(f"N must be at least 8, got {self.N}")
        if not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L}")

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.N

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.d

    @property
    def size(self) -> int:
        return self.N**self.d

    @property
    def cell(self) -> float:
        """Quadrature weight h^d."""
        return self.h**self.d

    @property
    def volume(self) -> float:
        return (2.0 * self.L) ** self.d

    @cached_property
    def nodes(self) -> np.ndarray:
        """1-D node coordinates -L, -L + h, ..., L - h."""
        return -self.L + self.h * np.arange(self.N)

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """1-D wavenumbers pi*j/L in FFT order (Nyquist -N/2 included)."""
        return 2.0 * np.pi * np.fft.fftfreq(self.N, d=self.h)

    @cached_property
    def mode_index(self) -> np.ndarray:
        """Integer mode j for each FFT slot, j in {-N/2, ..., N/2 - 1}."""
        return np.rint(np.fft.fftfreq(self.N) * self.N).astype(int)

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.nodes] * self.d), indexing="ij"))

    @cached_property
    def r2(self) -> np.ndarray:
        """|x|^2 measured from the box center."""
        return sum(c**2 for c in self.coords)

    @cached_property
    def k_axes(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.wavenumbers] * self.d), indexing="ij"))

    @cached_property
    def k2(self) -> np.ndarray:
        """Symbol of -Laplacian, |k|^2 (Nyquist kept)."""
        return sum(k**2 for k in self.k_axes)

    @cached_property
    def dk_axes(self) -> tuple[np.ndarray, ...]:
        """First-derivative wavenumbers with the Nyquist mode zeroed."""
        kd = self.wavenumbers.copy()
        kd[self.N // 2] = 0.0
        return tuple(np.meshgrid(*([kd] * self.d), indexing="ij"))

    @cached_property
    def dk2(self) -> np.ndarray:
        return sum(k**2 for k in self.dk_axes)

    @cached_property
    def tail_mask(self) -> np.ndarray:
        """Modes whose largest |j| over the axes exceeds N/3."""
        top = np.max(np.abs(np.meshgrid(*([self.mode_index] * self.d), indexing="ij")), axis=0)
        return top > self.N // 3

    def node(self, index) -> np.ndarray:
        """Coordinates of the node with integer index (int or tuple)."""
        idx = np.atleast_1d(index)
        return self.nodes[idx]


@dataclass(frozen=True)
class ComplexField:
    """Complex amplitude sampled on a grid. Treated as immutable."""

    grid: Grid
    values: np.ndarray
    post_blowup: bool = False

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=complex)
        if values.shape != self.grid.shape:
            raise ValueError(f"field shape {values.shape} does not match grid {self.grid.shape}")
        if not self.post_blowup and not np.all(np.isfinite(values)):
            raise ValueError("field contains non-finite values")
        object.__setattr__(self, "values", values)

    def with_values(self, values: np.ndarray) -> ComplexField:
        return ComplexField(self.grid, values)

    def __mul__(self, c) -> ComplexField:
        return self.with_values(self.values * c)

    __rmul__ = __mul__

    def conj(self) -> ComplexField:
        return self.with_values(np.conj(self.values))


def make_grid(d: int, L: float, N: int) -> Grid:
    return Grid(int(d), float(L), int(N))


def field_from_function(grid: Grid, fn) -> ComplexField:
    """Sample ``fn(*coords)`` on the grid nodes."""
    return ComplexField(grid, np.broadcast_to(fn(*grid.coords), grid.shape))


def _axes(grid: Grid) -> tuple[int, ...]:
    return tuple(range(-grid.d, 0))


def fft(values: np.ndarray, grid: Grid) -> np.ndarray:
    return np.fft.fftn(values, axes=_axes(grid))


def ifft(values: np.ndarray, grid: Grid) -> np.ndarray:
    return np.fft.ifftn(values, axes=_axes(grid))


def _integrate(values: np.ndarray, grid: Grid):
    return grid.cell * values.sum(axis=_axes(grid))


def _spectral_norm2(uhat: np.ndarray, grid: Grid, weight: np.ndarray | None = None):
    """Sum_k w_k |uhat_k|^2 scaled so that w = 1 gives the L^2 norm squared."""
    p = np.abs(uhat) ** 2
    if weight is not None:
        p = weight * p
    return grid.cell / grid.size * p.sum(axis=_axes(grid))


def integrate(f: ComplexField) -> complex:
    """Rectangle rule h^d * sum(values)."""
    return complex(_integrate(f.values, f.grid))


def gradient(f: ComplexField) -> tuple[ComplexField, ...]:
    g = f.grid
    fh = fft(f.values, g)
    return tuple(ComplexField(g, ifft(1j * k * fh, g)) for k in g.dk_axes)


def h_norm(f: ComplexField, s: float) -> float:
    """Discrete H^s norm, sqrt(sum_k (1 + |k|^2)^s |f_k|^2)."""
    if s < 0:
        raise ValueError("regularity exponent must be nonnegative")
    g = f.grid
    weight = None if s == 0 else (1.0 + g.k2) ** s
    return float(np.sqrt(_spectral_norm2(fft(f.values, g), g, weight)))
