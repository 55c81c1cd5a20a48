import math

import numpy as np
import pytest

from snls.grid import ComplexField, Grid, fft, field_from_function, gradient, h_norm, ifft, integrate, make_grid

from conftest import SQRT_PI


@pytest.mark.parametrize("d, L, N", [(3, 1.0, 16), (1, 1.0, 15), (1, 1.0, 6), (1, 0.0, 16), (1, -2.0, 16)])
def test_grid_rejects_bad_parameters(d, L, N):
    with pytest.raises(ValueError):
        Grid(d, L, N)


def test_nodes_cover_half_open_box():
    g = make_grid(1, 2.0, 8)
    np.testing.assert_allclose(g.nodes, [-2, -1.5, -1, -0.5, 0, 0.5, 1, 1.5])
    assert g.h == 0.5 and g.volume == 4.0 and g.cell == 0.5


def test_wavenumbers_match_fftfreq_and_nyquist_is_zeroed_for_derivatives():
    g = make_grid(1, math.pi, 8)  # box length 2 pi -> integer wavenumbers
    np.testing.assert_allclose(g.wavenumbers, [0, 1, 2, 3, -4, -3, -2, -1])
    np.testing.assert_allclose(g.dk_axes[0], [0, 1, 2, 3, 0, -3, -2, -1])
    np.testing.assert_allclose(g.k2, g.wavenumbers**2)


def test_tail_mask_selects_top_third():
    g = make_grid(1, 1.0, 12)
    assert sorted(g.mode_index[g.tail_mask]) == [-6, -5, 5]


def test_field_shape_and_finiteness_checked(grid1):
    with pytest.raises(ValueError):
        ComplexField(grid1, np.zeros(10))
    bad = np.zeros(grid1.shape, dtype=complex)
    bad[3] = np.nan
    with pytest.raises(ValueError):
        ComplexField(grid1, bad)
    assert ComplexField(grid1, bad, post_blowup=True).post_blowup


def test_integral_of_gaussian(gauss1, gauss2):
    # int e^{-x^2/2} = sqrt(2 pi); the rectangle rule is spectrally accurate here
    assert abs(integrate(gauss1) - math.sqrt(2 * math.pi)) < 1e-12
    assert abs(integrate(gauss2) - 2 * math.pi) < 1e-10


def test_fft_roundtrip_on_batch(grid2):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((3,) + grid2.shape) + 1j * rng.standard_normal((3,) + grid2.shape)
    np.testing.assert_allclose(ifft(fft(x, grid2), grid2), x, atol=1e-13)


def test_gradient_of_plane_wave():
    g = make_grid(1, math.pi, 32)
    u = field_from_function(g, lambda x: np.exp(3j * x))
    (du,) = gradient(u)
    np.testing.assert_allclose(du.values, 3j * u.values, atol=1e-12)


def test_h_norms_of_gaussian(gauss1):
    # |u|_{L2}^2 = sqrt(pi), |u'|^2 = sqrt(pi)/2
    assert abs(h_norm(gauss1, 0) ** 2 - SQRT_PI) < 1e-12
    assert abs(h_norm(gauss1, 1) ** 2 - 1.5 * SQRT_PI) < 1e-12
    with pytest.raises(ValueError):
        h_norm(gauss1, -1)


def test_field_arithmetic(gauss1):
    assert np.allclose((2 * gauss1).values, 2 * gauss1.values)
    assert np.allclose((gauss1 * 1j).conj().values, -1j * gauss1.values)
