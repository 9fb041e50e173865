import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from conftest import random_pd, random_psd
from crlbdesign.information import (DegenerateNoise, InvalidMeasurement, NoiseModel, clip_psd,
                                    crlb_measurement_update, crlb_propagate, fisher_info, forecast_crlb_trace,
                                    weighted_norm_sq)
from crlbdesign.systems import LinearSystem, VanDerPol
from conftest import fd_jacobian


def direct_update(sigma, u, noise):
    # independent oracle: explicit inversion of the information matrix
    info = np.linalg.inv(sigma) + np.outer(u, u) / noise.norm_sq(u)
    return np.linalg.inv(info)


def test_fisher_unit_vector():
    np.testing.assert_array_equal(fisher_info([1.0, 0.0], NoiseModel([1.0, 1.0])), [[1, 0], [0, 0]])


def test_fisher_diagonal_ones():
    np.testing.assert_allclose(fisher_info([1.0, 1.0], NoiseModel([2.0, 2.0])), np.full((2, 2), 0.25))


def test_fisher_scale_invariance_example():
    n = NoiseModel([1.0, 1.0])
    np.testing.assert_array_equal(fisher_info([3.0, 0.0], n), fisher_info([1.0, 0.0], n))


def test_fisher_rejects_zero():
    with pytest.raises(InvalidMeasurement):
        fisher_info([0.0, 0.0], NoiseModel([1.0, 1.0]))


def test_noise_model_validation():
    with pytest.raises(DegenerateNoise):
        NoiseModel([1.0, 0.0])
    with pytest.raises(DegenerateNoise):
        NoiseModel([])


finite = st.floats(-10, 10, allow_nan=False).filter(lambda v: abs(v) > 1e-3)


@settings(max_examples=100, deadline=None)
@given(u=arrays(float, 4, elements=finite), var=arrays(float, 4, elements=st.floats(0.1, 10)),
       c=finite)
def test_fisher_rank_one_and_scale_invariant(u, var, c):
    noise = NoiseModel(var)
    f = fisher_info(u, noise)
    w = np.linalg.eigvalsh(f)
    assert np.all(np.abs(w[:-1]) < 1e-12 * w[-1])
    np.testing.assert_allclose(fisher_info(c * u, noise), f, rtol=0, atol=1e-12 * np.max(np.abs(f)))


@pytest.mark.parametrize("u, w, expected", [
    ([1, 0], np.eye(2), 1.0),
    ([1, 1], np.diag([2, 2]), 4.0),
    ([1, -1], np.ones((2, 2)), 0.0),
])
def test_weighted_norm(u, w, expected):
    assert weighted_norm_sq(u, w) == expected


def test_update_examples():
    n = NoiseModel([1.0, 1.0])
    np.testing.assert_allclose(crlb_measurement_update(np.diag([4.0, 4.0]), [1, 0], n), np.diag([0.8, 4.0]))
    np.testing.assert_allclose(direct_update(np.diag([4.0, 4.0]), np.array([1.0, 0.0]), n), np.diag([0.8, 4.0]))
    np.testing.assert_allclose(crlb_measurement_update(np.eye(2), [1, 0], n), np.diag([0.5, 1.0]))
    np.testing.assert_array_equal(crlb_measurement_update(np.zeros((2, 2)), [1, 1], n), np.zeros((2, 2)))


def test_update_matches_direct_inversion(rng):
    for _ in range(100):
        m = rng.integers(2, 9)
        sigma = random_pd(rng, m)
        u = rng.standard_normal(m)
        noise = NoiseModel(rng.uniform(0.2, 3.0, m))
        got = crlb_measurement_update(sigma, u, noise)
        ref = direct_update(sigma, u, noise)
        assert np.linalg.norm(got - ref) / np.linalg.norm(ref) < 1e-8


def test_update_is_monotone(rng):
    for _ in range(100):
        m = rng.integers(2, 7)
        sigma = random_psd(rng, m, rng.integers(1, m + 1))
        u = rng.standard_normal(m)
        noise = NoiseModel(rng.uniform(0.2, 3.0, m))
        new = crlb_measurement_update(sigma, u, noise)
        assert np.all(np.diag(new) <= np.diag(sigma) + 1e-12)
        assert np.trace(new) <= np.trace(sigma) + 1e-12


def test_update_on_singular_matches_pseudoinverse(rng):
    # on a rank-deficient bound the update acts on its range: compare with the
    # range-restricted direct inversion
    m, r = 5, 2
    basis, _ = np.linalg.qr(rng.standard_normal((m, r)))
    core = random_pd(rng, r)
    sigma = basis @ core @ basis.T
    u = rng.standard_normal(m)
    noise = NoiseModel.iid(m, 1.0)
    got = crlb_measurement_update(sigma, u, noise)
    # restricted problem: measurement sees the range component plus noise; for
    # iid noise the effective scalar variance is |u|^2
    ur = basis.T @ u
    ref_core = np.linalg.inv(np.linalg.inv(core) + np.outer(ur, ur) / noise.norm_sq(u))
    np.testing.assert_allclose(got, basis @ ref_core @ basis.T, atol=1e-12)


def test_two_measurement_additivity(rng):
    for _ in range(20):
        m = rng.integers(2, 7)
        sigma = random_pd(rng, m)
        noise = NoiseModel(rng.uniform(0.5, 2.0, m))
        u1, u2 = rng.standard_normal((2, m))
        seq = crlb_measurement_update(crlb_measurement_update(sigma, u1, noise), u2, noise)
        ref = np.linalg.inv(np.linalg.inv(sigma) + fisher_info(u1, noise) + fisher_info(u2, noise))
        assert np.linalg.norm(seq - ref) / np.linalg.norm(ref) < 1e-8


def test_propagate_examples():
    s = np.array([[2.0, 0.3], [0.3, 5.0]])
    np.testing.assert_array_equal(crlb_propagate(s, np.eye(2)), s)
    np.testing.assert_array_equal(crlb_propagate(np.eye(2), 2 * np.eye(2)), 4 * np.eye(2))
    np.testing.assert_array_equal(crlb_propagate(np.diag([1.0, 7.0]), [[0, 1], [1, 0]]), np.diag([7.0, 1.0]))


def test_propagate_keeps_psd_and_symmetry(rng):
    for _ in range(100):
        m = rng.integers(2, 9)
        sigma = random_psd(rng, m, rng.integers(1, m + 1))
        out = crlb_propagate(sigma, rng.standard_normal((m, m)) * 3)
        np.testing.assert_array_equal(out, out.T)
        assert np.linalg.eigvalsh(out)[0] >= -1e-10 * np.linalg.norm(out)


def test_forecast_trace_zero_horizon():
    s = np.diag([2.0, 3.0])
    assert forecast_crlb_trace(VanDerPol(), [1.0, 0.0], s, 0.0) == 5.0


def test_forecast_trace_linear():
    got = forecast_crlb_trace(LinearSystem(np.diag([-10.0, -0.1])), [1.0, 1.0], np.eye(2), 10.0)
    assert got == pytest.approx(np.exp(-200.0) + np.exp(-2.0), rel=1e-13)


def test_forecast_trace_vdp_matches_fd_oracle():
    v = VanDerPol(1.0)
    x = np.array([1.0, 1.0])
    j = fd_jacobian(v, x, 10.0)
    ref = np.trace(j @ j.T)
    assert forecast_crlb_trace(v, x, np.eye(2), 10.0) == pytest.approx(ref, rel=1e-3)


def test_clip_psd():
    bad = np.diag([1.0, -1e-3])
    np.testing.assert_allclose(clip_psd(bad), np.diag([1.0, 0.0]))
    fine = np.diag([1.0, -1e-14])
    np.testing.assert_array_equal(clip_psd(fine), fine)
