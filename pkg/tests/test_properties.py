"""Property-based checks of the invariants that hold for any admissible input."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from snls import diagnostics as diag
from snls.config import Config, parse_config
from snls.dynamics import ModelSpec, _cutoff, strang_step
from snls.ensemble import wilson_interval
from snls.grid import ComplexField, make_grid
from snls.io import read_field, write_field
from snls.noise import KernelSpec, build_operator, colour, white_noise

G = make_grid(1, 10.0, 64)
OP = build_operator(KernelSpec(0.4, 1.0), G)


def smooth_field(seed, amp):
    rng = np.random.default_rng(seed)
    spec = (rng.standard_normal(G.N) + 1j * rng.standard_normal(G.N)) * np.exp(-G.k2)
    u = np.fft.ifft(spec)
    return ComplexField(G, amp * u / np.max(np.abs(u)))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), amp=st.floats(0.1, 2.0), sigma=st.sampled_from([1.0, 2.0, 3.0]))
def test_noisy_strang_step_conserves_mass(seed, amp, sigma):
    u = smooth_field(seed, amp)
    spec = ModelSpec(sigma, noise=OP)
    rng = np.random.default_rng(seed)
    v = u
    for k in range(5):
        v = strang_step(v, 1e-3, spec, k * 1e-3, rng)
    assert abs(diag.mass(v) - diag.mass(u)) <= 1e-12 * diag.mass(u)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), dt=st.floats(1e-4, 1e-2))
def test_deterministic_step_is_time_reversible(seed, dt):
    u = smooth_field(seed, 1.0)
    spec = ModelSpec(2.0)
    back = strang_step(strang_step(u, dt, spec), -dt, spec)
    assert np.max(np.abs(back.values - u.values)) < 1e-12


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), count=st.integers(1, 4))
def test_coloured_noise_is_real_and_linear(seed, count):
    rng = np.random.default_rng(seed)
    a, b = white_noise(G, 0.01, rng, count), white_noise(G, 0.01, rng, count)
    ca, cb = colour(OP, a), colour(OP, b)
    assert ca.dtype == np.float64 and ca.shape == a.shape
    np.testing.assert_allclose(colour(OP, a + 2 * b), ca + 2 * cb, atol=1e-12)


@given(n=st.integers(1, 500), data=st.data())
def test_wilson_interval_brackets_the_estimate(n, data):
    k = data.draw(st.integers(0, n))
    lo, hi = wilson_interval(k, n)
    assert 0.0 <= lo <= k / n <= hi <= 1.0
    if k > 0:
        assert lo > 0
    if k < n:
        lo2, _ = wilson_interval(k + 1, n)
        assert lo2 >= lo


@given(x=st.floats(-10, 10))
def test_cutoff_range(x):
    c = float(_cutoff(x))
    assert 0.0 <= c <= 1.0
    if x <= 1:
        assert c == 1.0
    if x >= 2:
        assert c == 0.0


@settings(max_examples=30)
@given(
    L=st.floats(0.5, 100),
    N=st.sampled_from([8, 64, 512]),
    a=st.floats(0, 5),
    dt=st.floats(1e-6, 1.0),
    paths=st.integers(1, 10**5),
    confirm=st.booleans(),
    t_bar=st.none() | st.floats(0.01, 1),
)
def test_config_text_roundtrip(L, N, a, dt, paths, confirm, t_bar):
    cfg = Config(L=L, N=N, amplitude=a, dt=dt, paths=paths, confirm=confirm, t_bar=t_bar)
    assert parse_config(cfg.to_text()) == cfg


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), d=st.sampled_from([1, 2]), cplx=st.booleans())
def test_field_dump_roundtrip(tmp_path_factory, seed, d, cplx):
    g = make_grid(d, 1.0 + seed % 7, 8)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(g.shape) + (1j * rng.standard_normal(g.shape) if cplx else 0)
    path = tmp_path_factory.mktemp("dump") / "f.bin"
    write_field(path, g, v)
    g2, v2 = read_field(path)
    assert g2 == g
    np.testing.assert_array_equal(v2, v)
