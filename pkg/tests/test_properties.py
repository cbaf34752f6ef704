import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import noiseless_stats, random_spd, random_stable, random_sym
from wishart_mle import laplace, matlin
from wishart_mle.asymptotics import ergodic_moments, limit_laplace_joint_sym
from wishart_mle.mle import lan_statistics, loglik_sym, mle_b_gen, mle_b_sym, mle_joint_gen, mle_joint_sym, pipeline_from_stats
from wishart_mle.model import WishartSpec
from wishart_mle.pathfun import path_functionals
from wishart_mle.sim import SamplePath

seeds = st.integers(0, 2**31 - 1)
dims = st.integers(1, 4)
SETTINGS = settings(max_examples=40, deadline=None)


@SETTINGS
@given(seeds, dims, st.floats(-0.5, 0.5))
def test_lop_roundtrip_and_trace(seed, d, a):
    rng = np.random.default_rng(seed)
    X = random_spd(rng, d)
    Y = random_sym(rng, d)
    a = a / np.trace(np.linalg.inv(X))  # keeps |a Tr[X^-1]| <= 1/2
    c = matlin.lop_invert(X, a, Y)
    np.testing.assert_allclose(matlin.lop_apply(X, a, c), Y, rtol=1e-9, atol=1e-10 * np.abs(Y).max())
    trace = np.trace(np.linalg.solve(X, Y)) / (2 * (1 - a * np.trace(np.linalg.inv(X))))
    assert abs(np.trace(c) - trace) <= 1e-10 * max(1.0, abs(trace))


@SETTINGS
@given(seeds, dims)
def test_barlop_self_adjoint_positive(seed, d):
    rng = np.random.default_rng(seed)
    X = random_spd(rng, d)
    K = matlin.barlop_matrix(X)
    np.testing.assert_allclose(K, K.T, atol=1e-10 * np.abs(K).max())
    assert np.linalg.eigvalsh(matlin.sym(K))[0] > -1e-10 * np.abs(K).max()


@SETTINGS
@given(seeds, st.integers(1, 3), st.floats(0.05, 2.0))
def test_transform_bounded_by_one(seed, d, t):
    # exp(-Tr[w X]/2 - Tr[v R]/2) <= 1 for PSD (v, w), and the two integration routes agree
    rng = np.random.default_rng(seed)
    spec = WishartSpec(x=random_spd(rng, d), alpha=d + 1.5, b=-np.eye(d) + 0.3 * random_sym(rng, d))
    v, w = random_spd(rng, d, 0.5), random_spd(rng, d, 0.5)
    val = laplace.joint_laplace(spec, v, w, t)
    assert 0 < val <= 1
    assert abs(val - laplace.riccati_oracle(spec, v, w, t)) <= 1e-8 * val


@SETTINGS
@given(seeds, st.integers(1, 3), st.floats(0.05, 3.0))
def test_integrated_covariance_routes(seed, d, t):
    rng = np.random.default_rng(seed)
    b = random_sym(rng, d)
    direct = matlin.integrated_covariance(b, np.eye(d), t)
    block = 0.5 * matlin.integrated_covariance(b, 2 * np.eye(d), t)
    np.testing.assert_allclose(direct, block, rtol=1e-9, atol=1e-12)


@SETTINGS
@given(seeds, st.integers(1, 3), st.floats(0.5, 4.0))
def test_noiseless_recovery(seed, d, extra):
    rng = np.random.default_rng(seed)
    b = random_stable(rng, d)
    alpha = d + 1 + extra
    s = noiseless_stats(b, alpha, seed=seed)
    est = mle_joint_gen(s)
    np.testing.assert_allclose(est.b_hat, b, atol=1e-8)
    np.testing.assert_allclose(mle_b_gen(s, alpha).b_hat, b, atol=1e-8)
    bs = matlin.sym(b)
    ss = noiseless_stats(bs, alpha, seed=seed, with_ops=False)
    np.testing.assert_allclose(mle_b_sym(ss, alpha).b_hat, bs, atol=1e-9)
    e = mle_joint_sym(ss)
    np.testing.assert_allclose(e.b_hat, bs, atol=1e-9)
    assert abs(e.alpha_hat - alpha) < 1e-9


@SETTINGS
@given(seeds)
def test_pipeline_equivariance(seed):
    rng = np.random.default_rng(seed)
    a = np.triu(rng.standard_normal((2, 2))) + 2 * np.eye(2)
    b_y = -np.eye(2) + 0.3 * random_sym(rng, 2)
    y = noiseless_stats(b_y, 4.5, seed=seed, with_ops=False)
    est = pipeline_from_stats(y.congruence(a.T), a)
    np.testing.assert_allclose(est.b_hat, a.T @ b_y @ np.linalg.inv(a.T), atol=1e-8)


def _random_path(rng, d, n, T):
    states = np.stack([random_spd(rng, d) for _ in range(n + 1)])
    return SamplePath(None, np.linspace(0, T, n + 1), states, {})


@SETTINGS
@given(seeds, dims, st.integers(2, 30))
def test_path_stats_invariants(seed, d, n):
    rng = np.random.default_rng(seed)
    p = _random_path(rng, d, n, 2.0)
    s = path_functionals(p)
    assert np.linalg.eigvalsh(s.R_T)[0] > 0
    assert np.trace(np.linalg.inv(s.R_T / s.T)) < s.Qinv_T / s.T
    q = s.qcov
    np.testing.assert_allclose(q, q.transpose(2, 3, 0, 1))
    np.testing.assert_allclose(q, q.transpose(1, 0, 2, 3))
    np.testing.assert_allclose(s.op_int, s.op_int.T, atol=1e-10 * np.abs(s.op_int).max())


@SETTINGS
@given(seeds, st.floats(-2, 2), st.floats(0.01, 1.0), st.floats(0.01, 1.0))
def test_lan_identity(seed, u1, d1, d2):
    rng = np.random.default_rng(seed)
    s = path_functionals(_random_path(rng, 2, 10, 3.0), qcov=False, ito=False)
    b = -np.eye(2) + 0.2 * random_sym(rng, 2)
    u2 = random_sym(rng, 2)
    lam, gam = lan_statistics(s, b, 4.5, u1, u2, d1, d2)
    lhs = loglik_sym(s, b + d2 * u2, 4.5 + d1 * u1, 4.0) - loglik_sym(s, b, 4.5, 4.0)
    assert abs(lhs - (lam - 0.5 * gam)) <= 1e-8 * max(1.0, abs(lhs))


MOM = ergodic_moments(4.5, -np.diag([1.0, 1.5]), mc_samples=0)


@SETTINGS
@given(seeds)
def test_limit_transform_log_convex_on_rays(seed):
    rng = np.random.default_rng(seed)
    c = 0.3 * random_sym(rng, 2)
    lam = 0.3 * rng.standard_normal()
    f = [np.log(limit_laplace_joint_sym(t * c, t * lam, MOM)) for t in (0.5, 1.0, 1.5)]
    assert f[0] + f[2] - 2 * f[1] >= -1e-12
    assert limit_laplace_joint_sym(0 * c, 0.0, MOM) == 1.0
