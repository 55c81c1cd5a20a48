import math
import warnings

import numpy as np
import pytest

from snls.grid import make_grid
from snls.noise import (
    F_phi,
    KernelSpec,
    NoisePath,
    ResolutionError,
    build_operator,
    colour,
    correlation,
    f_phi1,
    m_phi,
    piecewise_rate,
    projector_mask,
    sample_increment,
    sample_path,
    white_noise,
)

from conftest import SQRT_PI


def closed_form_F(a, ell, d=1):
    # int k(z)^2 dz for k = a exp(-|z|^2 / (2 ell^2))
    return a**2 * (ell * SQRT_PI) ** d


def closed_form_f1(a, ell, d=1):
    # int |grad k|^2 dz = a^2 d (ell sqrt(pi))^d / (2 ell^2)
    return a**2 * d * (ell * SQRT_PI) ** d / (2 * ell**2)


@pytest.mark.parametrize("a, ell", [(1.0, 1.0), (0.5, 1.0), (0.1, 0.5), (1.0, 2.0)])
def test_intensities_match_closed_forms_1d(a, ell):
    op = build_operator(KernelSpec(a, ell), make_grid(1, 20.0, 512))
    F, f1 = F_phi(op), f_phi1(op)
    assert np.ptp(F) == 0 and np.ptp(f1) == 0
    assert abs(F[0] - closed_form_F(a, ell)) < 1e-10
    assert abs(f1[0] - closed_form_f1(a, ell)) < 1e-8
    assert m_phi(op) == pytest.approx(closed_form_f1(a, ell), abs=1e-8)


def test_intensities_match_closed_forms_2d():
    op = build_operator(KernelSpec(0.7, 0.8), make_grid(2, 8.0, 64))
    assert abs(F_phi(op)[0, 0] - closed_form_F(0.7, 0.8, 2)) < 1e-10
    assert abs(f_phi1(op)[0, 0] - closed_form_f1(0.7, 0.8, 2)) < 1e-8


def test_correlation_is_gaussian_in_the_lag():
    g = make_grid(1, 16.0, 512)
    a, ell = 1.0, 1.0
    op = build_operator(KernelSpec(a, ell), g)
    for lag in (0, 16, 32, 64):  # h = 1/16
        r = lag * g.h
        expect = closed_form_F(a, ell) * math.exp(-r**2 / (4 * ell**2))
        assert abs(correlation(op, 100 + lag, 100) - expect) < 1e-10
    assert correlation(op, 3, 40) == pytest.approx(correlation(op, 40, 3))
    with pytest.raises(ValueError):
        correlation(op, (1, 2), 3)


def test_under_resolved_and_wide_kernels():
    g = make_grid(1, 10.0, 64)  # h = 0.3125
    with pytest.raises(ResolutionError):
        build_operator(KernelSpec(1.0, 0.5), g)
    with pytest.warns(UserWarning):
        build_operator(KernelSpec(1.0, 3.0), g)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        build_operator(KernelSpec(1.0, 1.0), g)


@pytest.mark.parametrize("kwargs", [{"amplitude": -1.0}, {"width": 0.0}, {"shape": "matern"}])
def test_kernel_spec_validation(kwargs):
    with pytest.raises(ValueError):
        KernelSpec(**kwargs)


def test_increments_are_real_with_expected_variance():
    g = make_grid(1, 20.0, 256)
    op = build_operator(KernelSpec(1.0, 1.0), g)
    rng = np.random.default_rng(5)
    dW = colour(op, white_noise(g, 0.01, rng, count=4000))
    assert dW.dtype == np.float64
    var = dW.var(axis=0).mean()  # pooled over nodes (homogeneous field)
    assert abs(var - F_phi(op)[0] * 0.01) < 0.05 * F_phi(op)[0] * 0.01
    assert np.all(sample_increment(op, 0.0, rng) == 0)
    with pytest.raises(ValueError):
        sample_increment(op, -1.0, rng)


def test_sample_path_is_reproducible():
    op = build_operator(KernelSpec(0.3, 1.0), make_grid(1, 10.0, 64))
    p1, p2 = sample_path(op, 0.01, 5, 42), sample_path(op, 0.01, 5, 42)
    for a, b in zip(p1.increments, p2.increments):
        np.testing.assert_array_equal(a, b)


def test_projector_mask():
    g = make_grid(2, 1.0, 16)
    m = projector_mask(g, 3)
    assert m.sum() == 5 * 5
    assert projector_mask(g, 8).all()


def test_piecewise_rate():
    g = make_grid(1, 10.0, 64)
    op = build_operator(KernelSpec(0.3, 1.0), g)
    path = sample_path(op, 0.1, 4, 1)
    assert np.all(piecewise_rate(path, 32, 0) == 0)
    assert np.all(piecewise_rate(path, 0, 2) == 0)
    np.testing.assert_allclose(piecewise_rate(path, 32, 2), path.increments[1] / 0.1)
    # projection keeps only the low modes of the increment
    r = piecewise_rate(path, 4, 3)
    spec = np.fft.fft(r)
    assert np.allclose(spec[np.abs(g.mode_index) >= 4], 0, atol=1e-12)
    np.testing.assert_allclose(spec[:4], np.fft.fft(path.increments[2])[:4] / 0.1)
    with pytest.raises(IndexError):
        piecewise_rate(path, 4, 4)
    with pytest.raises(ValueError):
        piecewise_rate(path, 33, 1)
    assert isinstance(path, NoisePath) and path.grid == g
