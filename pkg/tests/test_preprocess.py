import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.signal import hilbert

from gprsparse import preprocess as pp
from gprsparse.data import BScan, RangeProfile
from gprsparse.signal_model import AcquisitionSpec, PulseSpec, ScattererSpec, noise_free_profile, synthesize_bscan


def scan(A):
    return BScan(np.asarray(A, dtype=float), 25e-12, 0.01)


def rand_scan(seed, M=20, L=9):
    return scan(np.random.default_rng(seed).standard_normal((M, L)))


# --- gating and gain ---


def test_time_gate():
    y = RangeProfile(np.arange(1.0, 31.0), 25e-12)
    assert np.array_equal(pp.time_gate(y, 0, 30).samples, y.samples)
    assert np.all(pp.time_gate(y, 7, 7).samples == 0)
    imp = np.zeros(30)
    imp[15] = 1.0
    out = pp.time_gate(RangeProfile(imp, 25e-12), 10, 20).samples
    assert np.array_equal(out, imp)
    with pytest.raises(ValueError):
        pp.time_gate(y, 20, 10)


def test_time_gain_identity_zero_and_inverse():
    y = RangeProfile(np.random.default_rng(0).standard_normal(50), 25e-12)
    assert np.array_equal(pp.time_gain(y, np.ones(50)).samples, y.samples)
    assert np.all(pp.time_gain(y, np.zeros(50)).samples == 0)
    # lossy ground: amplitude decays as exp(-alpha v n T_s); an exponential gain undoes it
    alpha, v, Ts = 3.0, 1.5e8, 25e-12
    rate = alpha * v * Ts
    attenuated = y.samples * np.exp(-rate * np.arange(50))
    restored = pp.time_gain(RangeProfile(attenuated, Ts), pp.GainCurve.exponential(50, rate)).samples
    np.testing.assert_allclose(restored, y.samples, rtol=0, atol=1e-9)
    with pytest.raises(ValueError):
        pp.time_gain(y, np.ones(49))
    with pytest.raises(ValueError):
        pp.GainCurve(np.array([1.0, -1.0]))


# --- background removal ---


def test_identical_profiles_vanish():
    col = np.random.default_rng(1).standard_normal(16)
    b = scan(np.tile(col[:, None], (1, 7)))
    assert np.max(np.abs(pp.dewow(b, 3).data)) < 1e-12
    assert np.max(np.abs(pp.background_subtraction_mean(b).data)) < 1e-12


def test_dewow_whole_window_equals_mean_removal():
    b = rand_scan(2)
    np.testing.assert_allclose(pp.dewow(b, 2 * b.shape[1] + 1).data,
                               pp.background_subtraction_mean(b).data, atol=1e-12)


def test_dewow_against_loop_oracle():
    b = rand_scan(3, L=11)
    w = 5
    ref = np.empty_like(b.data)
    for j in range(11):
        lo, hi = max(j - 2, 0), min(j + 3, 11)
        ref[:, j] = b.data[:, j] - b.data[:, lo:hi].mean(axis=1)
    np.testing.assert_allclose(pp.dewow(b, w).data, ref, atol=1e-12)
    with pytest.raises(ValueError):
        pp.dewow(b, 4)


def test_dc_offset_removed():
    b = scan(np.full((12, 6), 3.7))
    assert np.max(np.abs(pp.dewow(b, 3).data)) < 1e-12


def test_mean_removal_properties():
    b = rand_scan(4)
    out = pp.background_subtraction_mean(b).data
    assert np.max(np.abs(out.mean(axis=1))) < 1e-12
    assert abs(out.sum()) < 1e-10


def test_pca_rank_one_and_last_component():
    rng = np.random.default_rng(5)
    A = np.outer(rng.standard_normal(10), rng.standard_normal(8))
    out = pp.background_subtraction_pca(scan(A), 1).data
    assert np.linalg.norm(out) < 1e-9 * np.linalg.norm(A)

    B = rng.standard_normal((10, 8))
    U, s, Vt = np.linalg.svd(B, full_matrices=False)
    out = pp.background_subtraction_pca(scan(B), 7).data
    np.testing.assert_allclose(out, s[-1] * np.outer(U[:, -1], Vt[-1]), atol=1e-12)

    out = pp.background_subtraction_pca(scan(B), 3).data
    assert np.max(np.abs(U[:, :3].T @ out)) < 1e-9
    with pytest.raises(ValueError):
        pp.background_subtraction_pca(scan(B), 8)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(-3, 3), st.floats(-3, 3))
def test_background_operators_are_linear(seed, a, c):
    X, Y = rand_scan(seed), rand_scan(seed + 1)
    mix = scan(a * X.data + c * Y.data)
    for op in (lambda b: pp.dewow(b, 3), pp.background_subtraction_mean):
        np.testing.assert_allclose(op(mix).data, a * op(X).data + c * op(Y).data, atol=1e-9)


def test_operations_preserve_shape():
    b = rand_scan(6)
    for out in (pp.dewow(b, 3), pp.background_subtraction_mean(b), pp.background_subtraction_pca(b, 2),
                pp.time_gate(b, 2, 9), pp.fk_migrate(b, 1e8)):
        assert out.shape == b.shape


# --- migration ---


def test_migrating_zeros_gives_zeros():
    assert np.all(pp.fk_migrate(scan(np.zeros((32, 16))), 1.5e8).data == 0)
    with pytest.raises(ValueError):
        pp.fk_migrate(rand_scan(0), 0.0)


def hyperbola(x0=0.32, d=0.15, traces=64, M=256):
    acq = AcquisitionSpec(sample_count=M)
    return synthesize_bscan(x0, d, acq, np.arange(traces) * 0.01), acq


def peak_to_energy(A):
    return np.max(np.abs(A)) / np.sqrt(np.sum(A**2))


TAU = PulseSpec().delay


@pytest.mark.parametrize("time_zero", [0.0, TAU])
def test_migration_focuses_hyperbola(time_zero):
    b, acq = hyperbola()
    m = pp.fk_migrate(b, acq.velocity, time_zero=time_zero)
    assert peak_to_energy(m.data) >= 2 * peak_to_energy(b.data)


def apex(A):
    """Pixel of the largest envelope; a raw peak would sit on one of the two wavelet lobes."""
    env = np.abs(hilbert(A, axis=0))
    return np.unravel_index(np.argmax(env), A.shape)


def expected_apex(x0, d, acq):
    """Apex pixel: lateral index x0 / dx and depth row 2d / (v T_s)."""
    return round(x0 / 0.01), 2 * d / (acq.velocity * acq.sampling_interval)


@pytest.mark.parametrize("x0,d", [(0.32, 0.15), (0.20, 0.10), (0.41, 0.20)])
def test_migration_apex_location(x0, d):
    b, acq = hyperbola(x0, d, M=384)
    m = pp.fk_migrate(b, acq.velocity, time_zero=TAU)
    row, col = apex(m.data)
    ex_col, ex_row = expected_apex(x0, d, acq)
    assert abs(col - ex_col) <= 1
    assert abs(row - ex_row) <= 2


def test_flat_layer_keeps_depth():
    acq = AcquisitionSpec(sample_count=200)
    col = noise_free_profile(PulseSpec(), [ScattererSpec(1.0, 0.12, 75e-12)], acq)
    b = scan(np.tile(col[:, None], (1, 32)))
    m = pp.fk_migrate(b, acq.velocity)
    # the echo sits at the zero crossing between its two lobes
    centre = lambda A: 0.5 * (np.argmax(A, axis=0) + np.argmin(A, axis=0))
    assert np.max(np.abs(centre(m.data) - centre(b.data))) <= 1


# --- pipelines ---


def test_pipeline_matches_manual_chain():
    b = rand_scan(7, M=40, L=12)
    got = pp.run_pipeline(b, "dewow:3, bg-pca:2 ,gate:5:30")
    ref = pp.time_gate(pp.background_subtraction_pca(pp.dewow(b, 3), 2), 5, 30)
    assert np.array_equal(got.data, ref.data)
    assert pp.parse_pipeline("bg-mean,migrate:1.5e8") == [("bg-mean", []), ("migrate", ["1.5e8"])]
    h, acq = hyperbola()
    np.testing.assert_array_equal(pp.run_pipeline(h, "migrate:1.5e8:5e-10").data,
                                  pp.fk_migrate(h, 1.5e8, time_zero=5e-10).data)


def test_pipeline_errors():
    b = rand_scan(8)
    with pytest.raises(ValueError, match="unknown"):
        pp.run_pipeline(b, "wiggle:3")
    with pytest.raises(ValueError, match="arguments"):
        pp.run_pipeline(b, "gate:3")
