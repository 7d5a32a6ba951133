import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import multivariate_normal

from swarmstat.rfs import Gaussian, GaussianMixture, gm_eval, kalman_predict, kalman_update
from swarmstat.rfs.gaussian import gm_combine, gm_predict, gm_prune, gm_update_scan


def random_spd(rng, d):
    A = rng.normal(size=(d, d))
    return A @ A.T + d * np.eye(d)


def random_gm(rng, n, d, spread=3.0):
    w = rng.random(n) + 0.1
    return GaussianMixture(w / w.sum(), rng.normal(size=(n, d)) * spread, np.stack([random_spd(rng, d) for _ in range(n)]))


def test_gm_eval_standard_normal():
    assert gm_eval(GaussianMixture.single([0.0], [[1.0]]), [0.0]) == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-15)


def test_duplicate_components_same_value():
    one = GaussianMixture.single([1.0, -2.0], [[2.0, 0.3], [0.3, 1.0]])
    two = GaussianMixture([0.5, 0.5], [[1.0, -2.0]] * 2, [[[2.0, 0.3], [0.3, 1.0]]] * 2)
    for x in ([0.0, 0.0], [1.0, -2.0], [3.0, 1.0]):
        assert gm_eval(two, x) == pytest.approx(gm_eval(one, x), rel=1e-14)


@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
def test_gm_eval_matches_scipy(seed, n):
    rng = np.random.default_rng(seed)
    gm = random_gm(rng, n, 3)
    x = rng.normal(size=3) * 2
    ref = sum(w * multivariate_normal(m, P).pdf(x) for w, m, P in zip(gm.weights, gm.means, gm.covs))
    assert gm_eval(gm, x) == pytest.approx(ref, rel=1e-10)


def test_gm_eval_dimension_mismatch():
    with pytest.raises(ValueError):
        gm_eval(GaussianMixture.single([0.0, 0.0], np.eye(2)), [0.0])


@pytest.mark.parametrize("seed", range(3))
def test_2d_mixture_integrates_to_one(seed):
    rng = np.random.default_rng(seed)
    gm = random_gm(rng, 3, 2, spread=2.0)
    # midpoint rule over a box wide enough to hold all the mass
    h = 0.25
    xs = np.arange(-20, 20 + h / 2, h)
    total = sum(gm_eval(gm, [x, y]) for x in xs for y in xs) * h * h
    assert total == pytest.approx(1.0, abs=1e-3)


def test_mixture_validation():
    with pytest.raises(ValueError):
        GaussianMixture([0.7, 0.7], [[0.0], [1.0]], [[[1.0]], [[1.0]]])
    with pytest.raises(ValueError):
        GaussianMixture([1.0], [[0.0, 0.0]], [[[1.0, 0.5], [0.0, 1.0]]])
    with pytest.raises(ValueError):
        Gaussian([0.0, 0.0], [[1.0, 1e-9], [0.0, 1.0]])


def test_kalman_predict_identity():
    g = Gaussian([1.0, 2.0], [[2.0, 0.1], [0.1, 1.0]])
    p = kalman_predict(g, np.eye(2), np.zeros((2, 2)))
    assert np.array_equal(p.mean, g.mean) and np.allclose(p.cov, g.cov, atol=0, rtol=1e-15)


def test_kalman_scalar_case():
    post, lik = kalman_update(Gaussian([0.0], [[1.0]]), [1.0], [[1.0]], [[1.0]])
    assert post.mean[0] == pytest.approx(0.5, abs=1e-15)
    assert post.cov[0, 0] == pytest.approx(0.5, abs=1e-15)
    assert lik == pytest.approx(multivariate_normal(0.0, 2.0).pdf(1.0), rel=1e-14)


def test_kalman_uninformative_measurement():
    g = Gaussian([3.0, -1.0], [[2.0, 0.3], [0.3, 1.0]])
    post, _ = kalman_update(g, [100.0, 100.0], np.eye(2), 1e9 * np.eye(2))
    assert np.allclose(post.mean, g.mean, atol=1e-6)


def test_kalman_update_rejects_bad_innovation():
    with pytest.raises(ValueError):
        kalman_update(Gaussian([0.0], [[0.0]]), [1.0], [[1.0]], [[0.0]])


@given(st.integers(0, 2**32 - 1))
def test_kalman_update_information_form(seed):
    rng = np.random.default_rng(seed)
    P = random_spd(rng, 4)
    m = rng.normal(size=4)
    H = np.hstack([np.eye(2), np.zeros((2, 2))])
    R = random_spd(rng, 2)
    z = rng.normal(size=2)
    post, lik = kalman_update(Gaussian(m, P), z, H, R)
    info = np.linalg.inv(P) + H.T @ np.linalg.inv(R) @ H
    P_ref = np.linalg.inv(info)
    m_ref = P_ref @ (np.linalg.inv(P) @ m + H.T @ np.linalg.inv(R) @ z)
    assert np.allclose(post.cov, P_ref, rtol=1e-8, atol=1e-10)
    assert np.allclose(post.mean, m_ref, rtol=1e-8, atol=1e-10)
    assert lik == pytest.approx(multivariate_normal(H @ m, H @ P @ H.T + R).pdf(z), rel=1e-9)


@given(st.integers(0, 2**32 - 1), st.integers(1, 3), st.integers(0, 4))
def test_gm_update_scan_matches_componentwise(seed, n, m):
    rng = np.random.default_rng(seed)
    gm = random_gm(rng, n, 4)
    H = np.hstack([np.eye(2), np.zeros((2, 2))])
    R = random_spd(rng, 2)
    Z = rng.normal(size=(m, 2)) * 3
    u = gm_update_scan(gm, Z, H, R)
    for j in range(m):
        parts = [(w, kalman_update(g, Z[j], H, R)) for w, g in gm.components]
        q = sum(w * lik for w, (_, lik) in parts)
        assert math.exp(u.log_q[j]) == pytest.approx(q, rel=1e-9)
        post = u.posterior(j)
        assert post.weights.sum() == pytest.approx(1.0, abs=1e-12)
        for i, (w, (g, lik)) in enumerate(parts):
            assert post.weights[i] == pytest.approx(w * lik / q, rel=1e-8, abs=1e-300)
            assert np.allclose(post.means[i], g.mean, rtol=1e-9, atol=1e-9)


def test_gating_removes_far_measurements():
    gm = GaussianMixture.single([0.0, 0.0], np.eye(2))
    u = gm_update_scan(gm, np.array([[0.1, 0.0], [50.0, 50.0]]), np.eye(2), np.eye(2), gate=16.0)
    assert np.isfinite(u.log_q[0]) and u.log_q[1] == -np.inf


def test_gm_predict_matches_kalman_predict():
    rng = np.random.default_rng(0)
    gm = random_gm(rng, 3, 4)
    F = np.eye(4) + np.diag([1.0, 1.0], 2)
    Q = 0.1 * np.eye(4)
    p = gm_predict(gm, F, Q)
    for (w, g), (w2, g2) in zip(gm.components, p.components):
        ref = kalman_predict(g, F, Q)
        assert w == w2 and np.allclose(g2.mean, ref.mean) and np.allclose(g2.cov, ref.cov)


def test_combine_and_prune_normalized():
    rng = np.random.default_rng(1)
    a, b = random_gm(rng, 2, 2), random_gm(rng, 3, 2)
    c = gm_combine([(0.3, a), (0.9, b)])
    assert len(c) == 5 and c.weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert c.weights[:2].sum() == pytest.approx(0.25)
    p = gm_prune(c, 0.0, 2)
    assert len(p) == 2 and p.weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert gm_prune(c, 2.0, 4).weights.tolist() == [1.0]
