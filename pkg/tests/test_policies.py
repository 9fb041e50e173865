import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats
from scipy.linalg import expm

from conftest import random_pd
from crlbdesign.harness import emit_objective_surface, surface_panel
from crlbdesign.information import NoiseModel
from crlbdesign.policies import (AscentConfig, CollapseObjective, CollapsePolicy, RandomPolicy,
                                 closed_form_measurement, geodesic_step, gradient_ascent, informative_subspace,
                                 limiting_right_singular_vectors, objective_gradient_sphere, objective_value,
                                 policy_decide, random_unit_vector)
from crlbdesign.systems import Hopf, LinearSystem, VanDerPol

LIN = LinearSystem(np.diag([-10.0, -0.1]))


def angle_up_to_sign(a, b):
    c = abs(float(a @ b)) / (np.linalg.norm(a) * np.linalg.norm(b))
    return float(np.arccos(min(1.0, c)))


def random_objective(rng, m, sigma2=None):
    sigma = random_pd(rng, m)
    noise = NoiseModel.iid(m, sigma2 if sigma2 else rng.uniform(0.3, 3.0))
    v = random_unit_vector(rng, m)
    return CollapseObjective(sigma, noise, v)


def fd_sphere_gradient(u, obj, h=1e-6):
    # raw ratio (no unit check) so off-sphere probes are allowed
    g, a, d = obj.numerator_rows, obj.weights, obj.denominator

    def f(w):
        return float(np.sum(a * (g @ w) ** 2) / (w @ d @ w))

    grad = np.array([(f(u + h * e) - f(u - h * e)) / (2 * h) for e in np.eye(len(u))])
    return grad - (grad @ u) * u


# limiting directions

def test_linear_limiting_vector():
    vecs, svals = limiting_right_singular_vectors(LIN, [1.0, 1.0], 10.0)
    np.testing.assert_allclose(vecs[0], [0.0, 1.0], atol=1e-12)
    assert svals[0] == pytest.approx(np.exp(-1.0))


def test_short_horizon_gives_orthonormal_basis():
    vecs, svals = limiting_right_singular_vectors(VanDerPol(), [1.0, 0.5], 1e-9, k=2)
    np.testing.assert_allclose(vecs @ vecs.T, np.eye(2), atol=1e-12)
    np.testing.assert_allclose(svals, 1.0, atol=1e-6)


def test_hopf_limiting_vector_is_tangent():
    x = np.array([1.0, 0.0])
    vecs, _ = limiting_right_singular_vectors(Hopf(), x, 30.0)
    assert abs(vecs[0] @ x) < 1e-2
    np.testing.assert_allclose(np.abs(vecs[0]), [0.0, 1.0], atol=1e-2)


def test_linear_singular_vectors_match_analytic(rng):
    for _ in range(5):
        a = rng.standard_normal((3, 3)) - 2 * np.eye(3)
        sys_ = LinearSystem(a)
        vecs, svals = limiting_right_singular_vectors(sys_, np.zeros(3), 2.0, k=3)
        _, s_ref, vt_ref = np.linalg.svd(expm(2.0 * a))
        np.testing.assert_allclose(svals, s_ref, rtol=1e-8)
        for v, r in zip(vecs, vt_ref):
            assert min(np.linalg.norm(v - r), np.linalg.norm(v + r)) < 1e-8


def test_limiting_vector_validation():
    with pytest.raises(ValueError):
        limiting_right_singular_vectors(LIN, [1.0, 1.0], 0.0)
    with pytest.raises(ValueError):
        limiting_right_singular_vectors(LIN, [1.0, 1.0], 1.0, k=3)


# closed form and subspace

def test_closed_form_examples():
    n = NoiseModel.iid(2, 1.0)
    v = np.array([0.6, 0.8])
    np.testing.assert_allclose(closed_form_measurement(np.eye(2), n, v), v)
    np.testing.assert_allclose(closed_form_measurement(np.diag([4.0, 1.0]), n, [1.0, 0.0]), [1.0, 0.0])
    np.testing.assert_array_equal(closed_form_measurement(np.zeros((2, 2)), n, [0.0, 1.0]), [0.0, 1.0])


def test_informative_subspace_examples(rng):
    n = NoiseModel.iid(2, 1.0)
    basis = informative_subspace(np.eye(2), n, np.eye(2))
    np.testing.assert_allclose(basis.T @ basis, np.eye(2), atol=1e-14)
    sigma = random_pd(rng, 4)
    n4 = NoiseModel.iid(4, 0.7)
    v = random_unit_vector(rng, 4)
    b1 = informative_subspace(sigma, n4, v)
    assert b1.shape == (4, 1)
    assert angle_up_to_sign(b1[:, 0], closed_form_measurement(sigma, n4, v)) < 1e-12
    assert informative_subspace(np.diag([1.0, 0.0, 0.0]), NoiseModel.iid(3, 1.0), np.eye(3)[1:]).shape == (3, 0)


def test_closed_form_is_maximiser(rng):
    for _ in range(50):
        m = rng.integers(2, 9)
        obj = random_objective(rng, m)
        best = objective_value(closed_form_measurement(obj.sigma, obj.noise, obj.directions[0]), obj)
        us = rng.standard_normal((1000, m))
        us /= np.linalg.norm(us, axis=1, keepdims=True)
        vals = np.array([objective_value(u, obj) for u in us])
        assert np.all(vals <= best + 1e-9)


# objective and gradient

def test_objective_examples():
    obj = CollapseObjective(np.eye(2), NoiseModel.iid(2, 1.0), [1.0, 0.0])
    assert objective_value([1.0, 0.0], obj) == 0.5
    assert objective_value([0.0, 1.0], obj) == 0.0
    with pytest.raises(ValueError):
        objective_value([2.0, 0.0], obj)
    with pytest.raises(ValueError):
        CollapseObjective(np.eye(2), NoiseModel.iid(2, 1.0), [[1.0, 0.0], [1.0, 0.0]])


def test_objective_scale_invariance_of_argmax(rng):
    obj = random_objective(rng, 4)
    u = closed_form_measurement(obj.sigma, obj.noise, obj.directions[0])
    for c in (-3.0, 0.2, 17.0):
        w = c * u
        assert objective_value(w / np.linalg.norm(w), obj) == pytest.approx(objective_value(u, obj), rel=1e-14)


def test_gradient_vanishes_at_maximiser(rng):
    for _ in range(10):
        obj = random_objective(rng, rng.integers(2, 9))
        u = closed_form_measurement(obj.sigma, obj.noise, obj.directions[0])
        assert np.linalg.norm(objective_gradient_sphere(u, obj)) < 1e-6


def test_gradient_identity_sigma_hand_formula(rng):
    s2 = 0.5
    v = random_unit_vector(rng, 3)
    obj = CollapseObjective(np.eye(3), NoiseModel.iid(3, s2), v)
    u = random_unit_vector(rng, 3)
    ref = 2 * (v @ u) * (v - (v @ u) * u) / (1 + s2)
    np.testing.assert_allclose(objective_gradient_sphere(u, obj), ref, atol=1e-14)


def test_gradient_matches_finite_differences(rng):
    for _ in range(100):
        m = rng.integers(2, 9)
        k = rng.integers(1, m + 1)
        q, _ = np.linalg.qr(rng.standard_normal((m, m)))
        obj = CollapseObjective(random_pd(rng, m), NoiseModel(rng.uniform(0.3, 3.0, m)), q[:k].copy(),
                                rng.uniform(0.1, 1.0, k))
        u = random_unit_vector(rng, m)
        g = objective_gradient_sphere(u, obj)
        assert abs(g @ u) < 1e-10
        np.testing.assert_allclose(g, fd_sphere_gradient(u, obj), atol=1e-5)


unit3 = st.lists(st.floats(-1, 1), min_size=3, max_size=3).map(np.array).filter(lambda a: np.linalg.norm(a) > 1e-3)


@settings(max_examples=200, deadline=None)
@given(a=unit3, b=unit3, step=st.floats(-50, 50))
def test_geodesic_preserves_norm(a, b, step):
    u = a / np.linalg.norm(a)
    s = b - (b @ u) * u
    assert abs(np.linalg.norm(geodesic_step(u, s, step)) - 1.0) < 1e-12


def test_geodesic_examples():
    u = np.array([1.0, 0.0, 0.0])
    s = np.array([0.0, 2.0, 0.0])
    np.testing.assert_array_equal(geodesic_step(u, np.zeros(3), 0.3), u)
    np.testing.assert_allclose(geodesic_step(u, s, np.pi / 4), [0.0, 1.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(geodesic_step(u, s, np.pi / 2), -u, atol=1e-15)


# ascent

def test_ascent_matches_closed_form(rng):
    worst = 0.0
    for _ in range(50):
        m = rng.integers(2, 9)
        obj = random_objective(rng, m, sigma2=rng.uniform(0.3, 3.0))
        u = gradient_ascent(obj, AscentConfig(step_scale="auto"), rng)
        ref = closed_form_measurement(obj.sigma, obj.noise, obj.directions[0])
        worst = max(worst, angle_up_to_sign(u, ref))
    assert worst < 1e-3


def test_ascent_from_maximiser_never_decreases(rng):
    obj = random_objective(rng, 5)
    u0 = closed_form_measurement(obj.sigma, obj.noise, obj.directions[0])
    u, hist = gradient_ascent(obj, AscentConfig(steps=200, initial=u0), rng, return_history=True)
    best = np.maximum.accumulate(hist)
    assert np.all(np.diff(best) >= 0)
    assert objective_value(u, obj) >= objective_value(u0, obj) - 1e-15


def test_ascent_is_deterministic_given_seed():
    obj = surface_panel("B")
    a = gradient_ascent(obj, AscentConfig(steps=50), np.random.default_rng(5))
    b = gradient_ascent(obj, AscentConfig(steps=50), np.random.default_rng(5))
    np.testing.assert_array_equal(a, b)


def test_constant_step_trajectory_reaches_grid_maximum():
    obj = surface_panel("A")
    grid_max = max(r[2] for r in emit_objective_surface(obj, 1.0))
    cfg = AscentConfig(steps=1000, step_scale=0.1, decay=0.0, initial=[1.0, -1.0, 0.2])
    u = gradient_ascent(obj, cfg)
    assert objective_value(u, obj) >= grid_max - 1e-6


def test_panel_grid_max_near_closed_form():
    for panel in ("A", "B"):
        obj = surface_panel(panel)
        rows = emit_objective_surface(obj, 1.0)
        th, ph, _ = max(rows, key=lambda r: r[2])
        u = np.array([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)])
        ref = closed_form_measurement(obj.sigma, obj.noise, obj.directions[0])
        # one grid cell diagonal at 1 degree
        assert angle_up_to_sign(u, ref) < np.deg2rad(1.5)


def test_ascent_config_validation():
    with pytest.raises(ValueError):
        AscentConfig(steps=0)
    with pytest.raises(ValueError):
        AscentConfig(step_scale=-1.0)


# random directions and dispatch

def test_random_unit_vector_properties(rng):
    for m in (1, 2, 7):
        for _ in range(20):
            assert abs(np.linalg.norm(random_unit_vector(rng, m)) - 1.0) < 1e-12
    assert abs(random_unit_vector(rng, 1)[0]) == 1.0


def test_random_unit_vector_angles_uniform():
    rng = np.random.default_rng(99)
    angles = np.array([np.arctan2(*random_unit_vector(rng, 2)[::-1]) for _ in range(100_000)]) % (2 * np.pi)
    assert stats.kstest(angles / (2 * np.pi), "uniform").statistic < 0.01


def test_policy_dispatch(rng):
    n = NoiseModel.iid(2, 1.0)
    u = policy_decide(CollapsePolicy(10.0), LIN, [1.0, 1.0], np.eye(2), n, rng)
    np.testing.assert_allclose(u, [0.0, 1.0], atol=1e-12)
    r1 = policy_decide(RandomPolicy(), LIN, [1.0, 1.0], np.eye(2), n, np.random.default_rng(3))
    np.testing.assert_array_equal(r1, random_unit_vector(np.random.default_rng(3), 2))


def test_collapse_policy_multi_direction(rng):
    n = NoiseModel.iid(3, 1.0)
    sys_ = LinearSystem(np.diag([-0.1, -0.2, -5.0]))
    u = CollapsePolicy(5.0, k=2, ascent=AscentConfig(step_scale="auto")).decide(sys_, np.ones(3), np.eye(3), n, rng)
    assert abs(np.linalg.norm(u) - 1.0) < 1e-12
    # the fast-decaying third axis is never worth measuring
    assert abs(u[2]) < 1e-8
