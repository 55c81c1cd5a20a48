import math

import numpy as np
import pytest

from snls import diagnostics as diag
from snls.dynamics import (
    DETECTED,
    NONE,
    UNDER_RESOLVED,
    BlowupDetectorParams,
    ModelSpec,
    TruncationParams,
    _cutoff,
    evolve,
    evolve_batch,
    evolve_path,
    ito_reference_batch,
    ito_reference_step,
    linear_step,
    local_step,
    noise_step,
    strang_step,
    truncation_factor,
)
from snls.ensemble import path_rng
from snls.grid import field_from_function, make_grid
from snls.noise import KernelSpec, build_operator, sample_path


def free_gaussian(x, t):
    # exact solution of i u_t = Delta u from exp(-x^2/2)
    z = 1.0 - 2.0j * t
    return np.exp(-(x**2) / (2.0 * z)) / np.sqrt(z)


def test_linear_step_is_exact(grid1, gauss1):
    u = linear_step(gauss1, 0.5)
    np.testing.assert_allclose(u.values, free_gaussian(grid1.nodes, 0.5), atol=1e-12)


def test_local_step_rotates_phase_with_midpoint_potential(grid1, gauss1):
    spec = ModelSpec(3.0, nonlinearity=0.0, potential=lambda t: np.full(grid1.shape, t))
    u = local_step(gauss1, 0.2, spec, t=1.0)
    np.testing.assert_allclose(u.values, gauss1.values * np.exp(-1j * 0.2 * 1.1), atol=1e-15)
    spec = ModelSpec(1.0)
    u = local_step(gauss1, 0.3, spec)
    np.testing.assert_allclose(u.values, gauss1.values * np.exp(-0.3j * np.abs(gauss1.values) ** 2))


def test_noise_step(gauss1):
    dW = np.linspace(-1, 1, gauss1.grid.N)
    np.testing.assert_allclose(noise_step(gauss1, dW).values, gauss1.values * np.exp(-1j * dW))
    with pytest.raises(ValueError):
        noise_step(gauss1, dW + 1e-3j)


def test_strang_is_reversible_without_noise(gauss1):
    spec = ModelSpec(3.0)
    u = strang_step(strang_step(2 * gauss1, 1e-3, spec), -1e-3, spec)
    np.testing.assert_allclose(u.values, 2 * gauss1.values, atol=1e-13)


def test_strang_second_order_convergence(gauss1):
    spec = ModelSpec(1.0)
    u0 = 1.5 * gauss1
    T = 0.2
    ref = evolve_path(u0, spec, T / 1600, None, steps=1600).final.values
    errs = []
    for n in (25, 50, 100):
        u = evolve_path(u0, spec, T / n, None, steps=n).final.values
        errs.append(np.sqrt(gauss1.grid.h * np.sum(np.abs(u - ref) ** 2)))
    for e1, e2 in zip(errs, errs[1:]):
        assert 3.6 < e1 / e2 < 4.4


def test_noisy_step_conserves_mass(gauss1):
    op = build_operator(KernelSpec(0.5, 1.0), gauss1.grid)
    spec = ModelSpec(3.0, noise=op)
    rng = np.random.default_rng(1)
    u = gauss1
    for k in range(50):
        u = strang_step(u, 1e-3, spec, k * 1e-3, rng)
    assert abs(diag.mass(u) / diag.mass(gauss1) - 1) < 1e-13
    with pytest.raises(ValueError):
        strang_step(u, 1e-3, spec)
    with pytest.raises(ValueError):
        strang_step(u, -1e-3, spec, rng=rng)


def test_cutoff_function():
    x = np.linspace(0, 3, 301)
    c = _cutoff(x)
    assert np.all(c[x <= 1] == 1) and np.all(c[x >= 2] == 0)
    assert np.all(np.diff(c) <= 0)
    assert _cutoff(1.5) == pytest.approx(0.5)


def test_truncation_factor(gauss1):
    assert truncation_factor(gauss1, TruncationParams(5.0)) == 1.0
    assert truncation_factor(10 * gauss1, TruncationParams(1.0)) == 0.0
    with pytest.raises(ValueError):
        TruncationParams(0.5)
    with pytest.raises(ValueError):
        TruncationParams(2.0, s0=2.0)


def test_truncated_flow_is_linear_beyond_the_cutoff(gauss1):
    # with theta = 0 only the linear group acts
    spec = ModelSpec(3.0, truncation=TruncationParams(1.0))
    u = strang_step(10 * gauss1, 0.1, spec)
    np.testing.assert_allclose(u.values, linear_step(10 * gauss1, 0.1).values, atol=1e-12)


def test_model_spec_validation(grid1):
    with pytest.raises(ValueError):
        ModelSpec(0.0)
    with pytest.raises(ValueError):
        ModelSpec(3.0, lam=-1.0)
    with pytest.raises(ValueError):
        ModelSpec(2.0, sigma_aux=2.5)
    with pytest.raises(ValueError):
        ModelSpec(3.0, sigma_aux=1.5).check_grid(grid1)  # must exceed 2/d = 2
    op = build_operator(KernelSpec(0.1, 1.0), make_grid(1, 10.0, 64))
    with pytest.raises(ValueError):
        ModelSpec(3.0, noise=op).check_grid(grid1)


def test_batch_paths_do_not_depend_on_batch_composition(gauss1):
    op = build_operator(KernelSpec(0.5, 1.0), gauss1.grid)
    spec = ModelSpec(3.0, noise=op)
    batch = evolve_batch(gauss1, spec, 0.02, 1e-3, rngs=[path_rng(9, i) for i in range(3)], sample_every=5)
    alone = evolve(gauss1, spec, 0.02, 1e-3, rng=path_rng(9, 2), sample_every=5)
    np.testing.assert_array_equal(batch[2].final.values, alone.final.values)
    assert [r.t for r in alone.records] == pytest.approx([0, 0.005, 0.01, 0.015, 0.02])
    assert not np.array_equal(batch[0].final.values, batch[1].final.values)


def test_horizon_must_be_a_multiple_of_dt(gauss1):
    with pytest.raises(ValueError):
        evolve(gauss1, ModelSpec(3.0), 0.0105, 1e-3)
    with pytest.raises(ValueError):
        evolve(gauss1, ModelSpec(3.0, noise=build_operator(KernelSpec(0.1, 1.0), gauss1.grid)), 0.01, 1e-3)


def test_detector_fires_and_is_confirmed():
    g = make_grid(1, 3.0, 512)
    u0 = field_from_function(g, lambda x: 3 * np.exp(-x**2 / 2))
    tr = evolve(u0, ModelSpec(3.0), 0.01, 1e-5, BlowupDetectorParams(K_blow=4.0), sample_every=100)
    assert tr.verdict == DETECTED
    assert tr.records[-1].t == pytest.approx(tr.tau_star)
    assert tr.records[-1].h1 >= 4.0 * tr.records[0].h1
    assert abs(tr.tau_confirm - tr.tau_star) <= 0.05 * tr.tau_star
    # before the firing sample the threshold had not been reached
    assert all(r.h1 < 4.0 * tr.records[0].h1 for r in tr.records[:-1])


def test_coarse_grid_reports_under_resolved():
    g = make_grid(1, 3.0, 64)
    u0 = field_from_function(g, lambda x: 3 * np.exp(-x**2 / 2))
    tr = evolve(u0, ModelSpec(3.0), 0.02, 1e-5, sample_every=1000)
    assert tr.verdict == UNDER_RESOLVED and math.isinf(tr.tau_star)


def test_quiet_run_has_no_verdict(gauss1):
    tr = evolve(gauss1, ModelSpec(3.0), 0.05, 1e-3, sample_every=10)
    assert tr.verdict == NONE and math.isinf(tr.tau_star)
    assert len(tr.records) == 6 and len(tr.lp) == 6


def test_evolve_path_shares_brownian_path_across_step_sizes(gauss1):
    op = build_operator(KernelSpec(0.5, 1.0), gauss1.grid)
    spec = ModelSpec(3.0, noise=op)
    path = sample_path(op, 5e-4, 200, 3)
    a = evolve_path(gauss1, spec, 1e-3, path)
    b = evolve_path(gauss1, spec, 5e-4, path)
    assert len(a.records) == 101 and len(b.records) == 201
    assert np.max(np.abs(a.final.values - b.final.values)) < 1e-4
    with pytest.raises(ValueError):
        evolve_path(gauss1, spec, 7.5e-4, path)


def test_ito_reference_matches_strang_without_noise_and_checks_stability():
    g = make_grid(1, 10.0, 128)
    u0 = field_from_function(g, lambda x: np.exp(-x**2 / 2))
    spec = ModelSpec(3.0)
    em = ito_reference_batch(u0, spec, 0.1, 1e-4, [None], sample_every=1000)
    st = evolve(u0, spec, 0.1, 1e-4, sample_every=1000)
    assert em["H"][0, -1] == pytest.approx(st.records[-1].H, abs=1e-3)
    with pytest.raises(ValueError):
        ito_reference_step(u0, 1.0, spec)
