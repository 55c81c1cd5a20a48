"""Mass, energy, momentum and variance functionals plus the blow-up criterion.

The public functions take a :class:`ComplexField`; the ``_``-prefixed
variants work on raw arrays with optional leading batch axes and are what the
integrators call.
"""

from __future__ import annotations

from dataclasses import astuple, dataclass, fields

import numpy as np

from .grid import ComplexField, Grid, _axes, _integrate, _spectral_norm2, fft, h_norm, ifft

CSV_HEADER = ("t", "M", "H", "G", "V", "h1", "boundary_mass_fraction")
BOUNDARY_SHELL = 0.1
BOUNDARY_TOLERANCE = 1e-6


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    M: float
    H: float
    G: float
    V: float
    h1: float
    boundary_mass_fraction: float

    @property
    def reliable(self) -> bool:
        return self.boundary_mass_fraction <= BOUNDARY_TOLERANCE

    def to_row(self) -> tuple[float, ...]:
        return astuple(self)

    @classmethod
    def from_row(cls, row) -> DiagnosticsRecord:
        return cls(*(float(v) for v in row[: len(fields(cls))]))


# -- array level ---------------------------------------------------------------


def _mass(u: np.ndarray, g: Grid):
    return _integrate(np.abs(u) ** 2, g)


def _kinetic(uhat: np.ndarray, g: Grid):
    """Integral of |grad u|^2 from the spectrum."""
    return _spectral_norm2(uhat, g, g.k2)


def _lp(u: np.ndarray, g: Grid, sigma: float):
    """Integral of |u|^(2 sigma + 2)."""
    return _integrate(np.abs(u) ** (2.0 * sigma + 2.0), g)


def _momentum(u: np.ndarray, uhat: np.ndarray, g: Grid):
    grad_conj = [np.conj(ifft(1j * k * uhat, g)) for k in g.dk_axes]
    integrand = u * sum(x * gc for x, gc in zip(g.coords, grad_conj))
    return _integrate(integrand, g).imag


def _variance(u: np.ndarray, g: Grid):
    return _integrate(g.r2 * np.abs(u) ** 2, g)


def boundary_mask(g: Grid) -> np.ndarray:
    """Nodes in the outer shell (last 10% of the half-width) of the box."""
    inner = (1.0 - BOUNDARY_SHELL) * g.L
    return np.logical_or.reduce([np.abs(x) >= inner for x in g.coords])


def _boundary_fraction(u: np.ndarray, g: Grid, mass):
    rho = np.abs(u) ** 2
    edge = _integrate(np.where(boundary_mask(g), rho, 0.0), g)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(mass > 0, edge / np.where(mass > 0, mass, 1.0), 0.0)


def _all(u: np.ndarray, g: Grid, sigma: float, uhat: np.ndarray | None = None) -> dict:
    """Every diagnostic at once, sharing one transform."""
    if uhat is None:
        uhat = fft(u, g)
    M = _mass(u, g)
    K = _kinetic(uhat, g)
    P = _lp(u, g, sigma)
    return {
        "M": M,
        "H": 0.5 * K - P / (2.0 * sigma + 2.0),
        "G": _momentum(u, uhat, g),
        "V": _variance(u, g),
        "h1": np.sqrt(M + K),
        "boundary_mass_fraction": _boundary_fraction(u, g, M),
        "K": K,
        "P": P,
    }


def record(t: float, u: ComplexField, sigma: float) -> DiagnosticsRecord:
    d = _all(u.values, u.grid, sigma)
    return DiagnosticsRecord(t, *(float(d[k]) for k in CSV_HEADER[1:]))


# -- field level ---------------------------------------------------------------


def mass(u: ComplexField) -> float:
    return float(_mass(u.values, u.grid))


def kinetic(u: ComplexField) -> float:
    return float(_kinetic(fft(u.values, u.grid), u.grid))


def lp_integral(u: ComplexField, sigma: float) -> float:
    return float(_lp(u.values, u.grid, sigma))


def energy(u: ComplexField, sigma: float) -> float:
    """H(u) = 1/2 |grad u|^2 - |u|_{2 sigma + 2}^{2 sigma + 2} / (2 sigma + 2)."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    return 0.5 * kinetic(u) - lp_integral(u, sigma) / (2.0 * sigma + 2.0)


def momentum(u: ComplexField) -> float:
    """G(u) = Im int u x . grad(conj u)."""
    return float(_momentum(u.values, fft(u.values, u.grid), u.grid))


def variance(u: ComplexField) -> float:
    return float(_variance(u.values, u.grid))


def truncated_variance(u: ComplexField, eps: float) -> float:
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    g = u.grid
    w = g.r2 * np.exp(-eps * g.r2)
    return float(_integrate(w * np.abs(u.values) ** 2, g))


def aux_energy(u: ComplexField, sigma_aux: float, lam: float) -> float:
    """Energy of the auxiliary equation with coupling ``lam`` on |u|^(2 sigma_aux) u."""
    if not sigma_aux > 0:
        raise ValueError("auxiliary exponent must be positive")
    if lam < 0:
        raise ValueError("coupling must be nonnegative")
    return 0.5 * kinetic(u) - lam * lp_integral(u, sigma_aux) / (2.0 * sigma_aux + 2.0)


def sigma_norm(u: ComplexField) -> float:
    return float(np.sqrt(h_norm(u, 1) ** 2 + variance(u)))


def boundary_mass_fraction(u: ComplexField) -> float:
    M = _mass(u.values, u.grid)
    return float(_boundary_fraction(u.values, u.grid, M))


def spectral_tail_fraction(uhat: np.ndarray, g: Grid):
    """Share of |u_k|^2 carried by the top third of wavenumbers (max-norm over axes)."""
    p = uhat.real**2 + uhat.imag**2
    axes = _axes(g)
    total = p.sum(axis=axes)
    top = np.where(g.tail_mask, p, 0.0).sum(axis=axes)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(total > 0, top / np.where(total > 0, total, 1.0), 0.0)


def blowup_functional(M: float, H: float, G: float, V: float, m_phi: float, t_bar: float) -> float:
    """V + 4 G t + 8 H t^2 + (4/3) t^3 m_phi M; negative means the criterion holds."""
    return V + 4.0 * G * t_bar + 8.0 * H * t_bar**2 + (4.0 / 3.0) * t_bar**3 * m_phi * M


def in_admissible_set(u: ComplexField, sigma: float, M_bar: float, H_bar: float) -> bool:
    """Strict membership test V < M_bar, G < M_bar, M < M_bar, H < -H_bar."""
    if not (M_bar > 0 and H_bar > 0):
        raise ValueError("bounds must be positive")
    return admissible_from_values(
        mass(u), energy(u, sigma), momentum(u), variance(u), M_bar, H_bar
    )


def admissible_from_values(M, H, G, V, M_bar, H_bar) -> bool:
    return bool(V < M_bar and G < M_bar and M < M_bar and H < -H_bar)
