import numpy as np
import pytest

from conftest import random_spd, random_stable, random_sym
from wishart_mle import laplace, matlin
from wishart_mle.exceptions import DomainViolation, NotErgodic, NotTransformable, ValidationError
from wishart_mle.model import WishartSpec
from wishart_mle.pathfun import StatsAccumulator
from wishart_mle.sim import BatchSimulator, RngStream, stationary_sample


def test_v_matrices_zero_drift():
    w = np.array([[1.0, 0.3], [0.3, 2.0]])
    pair = laplace.v_matrices(np.zeros((2, 2)), w, np.zeros((2, 2)), 0.8)
    np.testing.assert_allclose(pair.V, np.eye(2) + 0.8 * w, atol=1e-14)
    np.testing.assert_allclose(pair.Vprime, w, atol=1e-14)


def test_v_matrices_at_time_zero(rng):
    b = random_sym(rng, 3)
    pair = laplace.v_matrices(np.zeros((3, 3)), np.zeros((3, 3)), b, 0.0)
    np.testing.assert_allclose(pair.V, np.eye(3), atol=1e-14)
    np.testing.assert_allclose(pair.Vprime, -b, atol=1e-14)


def test_v_matrices_series_matches_spectral(rng):
    v, w, b = random_sym(rng, 3), random_sym(rng, 3), random_sym(rng, 3)
    s = laplace.v_matrices(v, w, b, 0.7)
    r = laplace.v_matrices(v, w, b, 0.7, method="series")
    np.testing.assert_allclose(s.V, r.V, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(s.Vprime, r.Vprime, rtol=1e-12, atol=1e-12)


def test_joint_laplace_trivial_and_scalar():
    spec = WishartSpec(x=[[1.0]], alpha=2.0, b=[[0.0]])
    assert laplace.joint_laplace(spec, [[0.0]], [[0.0]], 1.0) == pytest.approx(1.0, abs=1e-15)
    val = laplace.joint_laplace(spec, [[0.0]], [[2.0]], 1.0)
    assert val == pytest.approx(np.exp(-1 / 3) / 3, rel=1e-13)
    assert val == pytest.approx(0.2388437701912631, rel=1e-12)
    assert laplace.riccati_oracle(spec, [[0.0]], [[2.0]], 1.0) == pytest.approx(val, rel=1e-8)


def test_joint_laplace_zero_drift_closed_subcase(rng):
    x, w = random_spd(rng, 3), random_spd(rng, 3)
    spec = WishartSpec(x=x, alpha=3.7, b=np.zeros((3, 3)))
    t = 0.6
    K = np.eye(3) + t * w
    expected = np.linalg.det(K) ** (-3.7 / 2) * np.exp(-0.5 * np.trace(w @ np.linalg.solve(K, x)))
    assert laplace.joint_laplace(spec, np.zeros((3, 3)), w, t) == pytest.approx(expected, rel=1e-12)


def test_joint_laplace_in_unit_interval(rng):
    for _ in range(10):
        spec = WishartSpec(x=random_spd(rng, 2), alpha=2.5, b=random_sym(rng, 2))
        val = laplace.joint_laplace(spec, random_spd(rng, 2), random_spd(rng, 2), 1.3)
        assert 0 < val <= 1


@pytest.mark.parametrize("d", [2, 3])
def test_riccati_oracle_matches_closed_form(rng, d):
    spec = WishartSpec(x=random_spd(rng, d), alpha=d + 0.5, b=-random_spd(rng, d, scale=0.5))
    v, w = random_spd(rng, d), random_spd(rng, d)
    exact = laplace.joint_laplace(spec, v, w, 1.1)
    assert laplace.riccati_oracle(spec, v, w, 1.1) == pytest.approx(exact, rel=1e-8)


def test_joint_laplace_monte_carlo():
    spec = WishartSpec(x=np.eye(2), alpha=4.5, b=-np.eye(2))
    v = np.array([[0.6, 0.2], [0.2, 0.4]])
    w = np.array([[0.5, -0.1], [-0.1, 0.3]])
    exact = laplace.joint_laplace(spec, v, w, 1.0)
    B, N = 20000, 20
    sim = BatchSimulator(spec, 1.0, N, [RngStream(5, i) for i in range(B)])
    acc = StatsAccumulator(1.0, N, 2, B, qcov=False, ito=False)
    acc.push(np.stack([X.copy() for X in sim], axis=1))
    stats = acc.finalize()
    XT = np.stack([s.X_T for s in stats])
    R = np.stack([s.R_T for s in stats])
    e = np.exp(-0.5 * np.einsum("ij,nij->n", w, XT) - 0.5 * np.einsum("ij,nij->n", v, R))
    assert abs(e.mean() - exact) < 3 * e.std() / np.sqrt(B)


def test_domain_check_candidates():
    I = np.eye(2)
    assert laplace.domain_check(I, I, -I).kind == "zero"
    # w negative: m = 0 fails, m = -w/2 works when v + bw + wb - w a^T a w is PSD
    w = -0.2 * I
    v = np.eye(2)
    cert = laplace.domain_check(v, w, -I)
    assert cert is not None and cert.kind in ("half_w", "drift", "riccati_root")
    m = cert.m
    assert np.linalg.eigvalsh(0.5 * w + m)[0] >= -1e-12
    assert np.linalg.eigvalsh(0.5 * v + m + m - 2 * m @ m)[0] >= -1e-12


def test_domain_check_riccati_root():
    b = -np.eye(2)
    v = -0.5 * np.eye(2)  # v + b^2 PSD, but v itself is not
    w = np.zeros((2, 2))
    cert = laplace.domain_check(v, w, b)
    assert cert is not None


def test_domain_violation():
    spec = WishartSpec(x=np.eye(2), alpha=3.0, b=np.zeros((2, 2)))
    with pytest.raises(DomainViolation):
        laplace.joint_laplace(spec, -10 * np.eye(2), -10 * np.eye(2), 1.0)


def test_general_reduces_to_canonical(rng):
    spec = WishartSpec(x=random_spd(rng, 2), alpha=3.5, b=random_sym(rng, 2))
    v, w = random_spd(rng, 2), random_spd(rng, 2)
    assert laplace.joint_laplace_general(spec, v, w, 0.9) == pytest.approx(
        laplace.joint_laplace(spec, v, w, 0.9), rel=1e-13)


def test_general_change_of_variables(rng):
    a = np.diag([1.0, 2.0])
    x = random_spd(rng, 2)
    v, w = random_spd(rng, 2), random_spd(rng, 2)
    spec = WishartSpec(x=x, alpha=3.0, b=np.zeros((2, 2)), a=a)
    a_inv = np.linalg.inv(a)
    ys = WishartSpec(x=a_inv.T @ x @ a_inv, alpha=3.0, b=np.zeros((2, 2)))
    expected = laplace.joint_laplace(ys, a @ v @ a.T, a @ w @ a.T, 0.5)
    assert laplace.joint_laplace_general(spec, v, w, 0.5) == pytest.approx(expected, rel=1e-12)
    assert laplace.riccati_oracle(spec, v, w, 0.5) == pytest.approx(expected, rel=1e-8)


def test_table_parameters_transformable():
    spec = WishartSpec(x=[[0.8, 0.5], [0.5, 1.0]], alpha=4.5, b=[[-1.0, 0.2], [2.0, -2.0]], a=[[1.0, 1.0], [0.0, 2.0]])
    assert spec.is_transformable
    a = spec.a
    by = np.linalg.inv(a.T) @ spec.b @ a.T
    np.testing.assert_allclose(by, by.T, atol=1e-12)


def test_not_transformable():
    spec = WishartSpec(x=np.eye(2), alpha=3.0, b=[[-1.0, 0.5], [0.0, -1.0]])
    with pytest.raises(NotTransformable):
        laplace.joint_laplace_general(spec, np.eye(2), np.eye(2), 1.0)
    with pytest.raises(ValidationError):
        laplace.joint_laplace(spec, np.eye(2), np.eye(2), 1.0)


def test_girsanov_examples(rng):
    assert laplace.girsanov_identity_check(WishartSpec(x=np.eye(2), alpha=3.0, b=-np.eye(2)),
                                           np.zeros((2, 2)), 2.0) == pytest.approx(1.0, abs=1e-12)
    spec = WishartSpec(x=np.eye(2), alpha=3.0, b=-np.eye(2))
    u = 0.3 * random_sym(rng, 2)
    assert laplace.girsanov_identity_check(spec, u, 1.5) == pytest.approx(1.0, abs=1e-9)
    spec1 = WishartSpec(x=[[1.0]], alpha=1.5, b=[[-0.5]])
    assert laplace.girsanov_identity_check(spec1, [[0.3]], 2.0) == pytest.approx(1.0, abs=1e-10)


def test_transition_laplace_matches_joint(rng):
    spec = WishartSpec(x=random_spd(rng, 2), alpha=3.5, b=random_sym(rng, 2))
    u = random_spd(rng, 2)
    assert laplace.transition_laplace(spec, u, 0.7) == pytest.approx(
        laplace.joint_laplace(spec, np.zeros((2, 2)), 2 * u, 0.7), rel=1e-12)


def test_stationary_laplace_examples(rng):
    assert laplace.stationary_laplace(4.5, -np.eye(2), np.zeros((2, 2))) == 1.0
    assert laplace.stationary_laplace(2.0, [[-1.0]], [[1.0]]) == pytest.approx(0.5)
    with pytest.raises(NotErgodic):
        laplace.stationary_laplace(2.0, [[0.5]], [[1.0]])


def test_stationary_laplace_general_b_monte_carlo(rng):
    b = random_stable(rng, 2)
    v = 0.3 * random_spd(rng, 2)
    draws = stationary_sample(4.5, b, np.random.default_rng(3), size=100_000)
    e = np.exp(-np.einsum("ij,nij->n", v, draws))
    exact = laplace.stationary_laplace(4.5, b, v)
    assert abs(e.mean() - exact) < 3 * e.std() / np.sqrt(len(e))


def test_stationary_covariance_symmetric_and_lyapunov(rng):
    s = -random_spd(rng, 3)
    np.testing.assert_allclose(laplace.stationary_covariance(s), matlin.lyapunov_solve(s, np.eye(3)), rtol=1e-10)
