import numpy as np
import pytest

from wishart_mle import matlin
from wishart_mle.pathfun import PathStats


def random_spd(rng, d, scale=1.0, floor=0.2):
    A = rng.standard_normal((d, d))
    return scale * (A @ A.T / d + floor * np.eye(d))


def random_sym(rng, d, scale=1.0):
    return scale * matlin.sym(rng.standard_normal((d, d)))


def random_stable(rng, d, margin=0.5):
    """General matrix with b + b^T negative definite."""
    B = rng.standard_normal((d, d))
    w = np.linalg.eigvalsh(B + B.T)
    return B - (0.5 * w[-1] + margin) * np.eye(d)


def noiseless_stats(b, alpha, T=3.0, seed=0, d=None, with_ops=True):
    """Statistics that satisfy the drift identities with zero martingale parts."""
    rng = np.random.default_rng(seed)
    b = np.asarray(b, float)
    d = b.shape[0]
    x = random_spd(rng, d)
    R = T * random_spd(rng, d, scale=1.5)
    qinv = 2.0 * T * T * np.trace(np.linalg.inv(R)) + 1.0
    X_T = x + alpha * T * np.eye(d) + b @ R + R @ b.T
    Z = (alpha - 1 - d) * qinv + 2 * np.trace(b) * T
    Rinv = qinv / np.trace(np.linalg.inv(R)) * np.linalg.inv(R)
    stats = PathStats(T=T, N=10, x0=x, X_T=X_T, R_T=R, Rinv_T=Rinv, Qinv_T=qinv, Z_T=Z)
    if with_ops:
        Xs = np.stack([random_spd(rng, d) for _ in range(5)])
        op = T * matlin.barlop_matrix(Xs).mean(axis=0)
        stats.op_int = matlin.sym(op)
        stats.ito_linv = (op @ b.reshape(-1)).reshape(d, d) + 0.5 * alpha * T * np.eye(d)
    return stats


@pytest.fixture
def rng():
    return np.random.default_rng(20240521)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
