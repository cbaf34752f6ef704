"""Matrix algebra for symmetric positive matrices and the Lyapunov-type
operators used by the estimators.

All functions accept stacked inputs of shape ``(..., d, d)`` where that is
cheap to support, which lets the Monte Carlo code apply one call to a whole
batch of replications.

The operators are

* ``lop_apply(X, a, Y) = XY + YX - 2 a Tr[Y] I``
* ``barlop_apply(X, Y) = L_X^{-1}(YX + XY^T) X`` where ``L_X = lop_apply(X, 0, .)``

and linear maps on d x d matrices are represented by d^2 x d^2 matrices acting
on row-major vectorisations (``Y.reshape(-1)``).
"""

from __future__ import annotations

from typing import Callable

import numpy as np
import scipy.linalg

from .exceptions import (
    NotPositiveDefinite,
    NotPsd,
    NotSymmetric,
    SingularLyapunov,
    SingularOperator,
    ValidationError,
)

PSD_RTOL = 1e-10
SINGULAR_TRACE_TOL = 1e-12
LYAPUNOV_MAX_COND = 1e12


# ---------------------------------------------------------------------------
# checks


def _as_square(X, name: str = "matrix") -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim < 2 or X.shape[-1] != X.shape[-2]:
        raise ValidationError(f"{name} must be square, got shape {X.shape}")
    return X


def sym(X: np.ndarray) -> np.ndarray:
    """Symmetric part of a (stack of) square matrices."""
    return 0.5 * (X + np.swapaxes(X, -1, -2))


def psd_tol(X: np.ndarray) -> np.ndarray:
    """Eigenvalue tolerance ``1e-10 * ||X||_2`` (per matrix for stacks)."""
    return PSD_RTOL * np.linalg.norm(X, ord=2, axis=(-2, -1))


def check_symmetric(X, name: str = "matrix", rtol: float = 1e-10) -> np.ndarray:
    """Return ``X`` exactly symmetrised, or raise if it is visibly asymmetric."""
    X = _as_square(X, name)
    scale = max(1.0, float(np.max(np.abs(X)))) if X.size else 1.0
    if np.max(np.abs(X - np.swapaxes(X, -1, -2)), initial=0.0) > rtol * scale:
        raise NotSymmetric(f"{name} is not symmetric")
    return sym(X)


def is_psd(X, strict: bool = False) -> bool:
    X = sym(_as_square(X))
    w = np.linalg.eigvalsh(X)
    tol = psd_tol(X)
    if strict:
        return bool(np.all(w[..., 0] > tol))
    return bool(np.all(w[..., 0] >= -tol))


def check_psd(X, name: str = "matrix", strict: bool = False) -> np.ndarray:
    X = check_symmetric(X, name)
    if not is_psd(X, strict=strict):
        if strict:
            raise NotPositiveDefinite(f"{name} is not positive definite")
        raise NotPsd(f"{name} is not positive semidefinite")
    return X


def loewner_leq(A, B) -> bool:
    """True when ``B - A`` is positive semidefinite at the default tolerance."""
    return is_psd(np.asarray(B, float) - np.asarray(A, float))


# ---------------------------------------------------------------------------
# spectral matrix functions


def eigh_sym(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return np.linalg.eigh(sym(np.asarray(X, dtype=float)))


def _from_eig(w: np.ndarray, V: np.ndarray) -> np.ndarray:
    return (V * w[..., None, :]) @ np.swapaxes(V, -1, -2)


def sinhc(z):
    """``sinh(z)/z`` with the value 1 at 0."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-4
    zs = np.where(small, 1.0, z)
    z2 = z * z
    return np.where(small, 1.0 + z2 / 6.0 + z2 * z2 / 120.0, np.sinh(zs) / zs)


_MATFUNS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "exp": np.exp,
    "cosh": np.cosh,
    "sinh": np.sinh,
    "sinhc": sinhc,
    "sqrt": lambda w: np.sqrt(np.clip(w, 0.0, None)),
    "log": np.log,
    "inv": lambda w: 1.0 / w,
}


def sym_matfun(X, f) -> np.ndarray:
    """Apply a scalar function to a symmetric matrix through its spectrum.

    ``f`` is either one of the tags ``exp, cosh, sinh, sinhc, sqrt, log, inv``
    or a vectorised callable.
    """
    fun = _MATFUNS[f] if isinstance(f, str) else f
    w, V = eigh_sym(X)
    return _from_eig(fun(w), V)


def spd_sqrt(X) -> np.ndarray:
    """Symmetric positive semidefinite square root."""
    X = check_psd(X, "X")
    w, V = eigh_sym(X)
    return _from_eig(np.sqrt(np.clip(w, 0.0, None)), V)


# ---------------------------------------------------------------------------
# Lyapunov-type operators


def _trace(Y: np.ndarray) -> np.ndarray:
    return np.trace(Y, axis1=-2, axis2=-1)


def _eye_like(Y: np.ndarray) -> np.ndarray:
    return np.broadcast_to(np.eye(Y.shape[-1]), Y.shape)


def lop_apply(X, a, Y) -> np.ndarray:
    """``XY + YX - 2 a Tr[Y] I``."""
    X = np.asarray(X, float)
    Y = np.asarray(Y, float)
    if X.shape[-2:] != Y.shape[-2:]:
        raise ValidationError(f"dimension mismatch {X.shape} vs {Y.shape}")
    a = np.asarray(a, float)[..., None, None]
    return X @ Y + Y @ X - 2.0 * a * _trace(Y)[..., None, None] * _eye_like(Y)


def pd_eigh(X, name: str = "X") -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a positive definite (stack of) matrices."""
    w, V = eigh_sym(X)
    tol = PSD_RTOL * np.abs(w[..., -1])
    if np.any(~(w[..., 0] > tol)):
        raise NotPositiveDefinite(f"{name} is not positive definite")
    return w, V


def linv_eig(w: np.ndarray, V: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """Solve ``XC + CX = Z`` given ``X = V diag(w) V^T``.

    ``Z`` need not be symmetric; the solution is then the unique matrix
    solution, which is symmetric exactly when ``Z`` is.
    """
    Vt = np.swapaxes(V, -1, -2)
    Zh = Vt @ Z @ V
    Ch = Zh / (w[..., :, None] + w[..., None, :])
    return V @ Ch @ Vt


def lop_invert(X, a, Y, *, eig: tuple[np.ndarray, np.ndarray] | None = None) -> np.ndarray:
    """Solve ``lop_apply(X, a, C) = Y`` for ``C``.

    The trace of the solution is found first,
    ``Tr[C] = Tr[X^{-1} Y] / (2 (1 - a Tr[X^{-1}]))``, after which
    ``C = L_X^{-1}(Y + 2 a Tr[C] I)`` is a plain Sylvester solve in the
    eigenbasis of ``X``.
    """
    X = np.asarray(X, float)
    Y = np.asarray(Y, float)
    if X.shape[-2:] != Y.shape[-2:]:
        raise ValidationError(f"dimension mismatch {X.shape} vs {Y.shape}")
    w, V = pd_eigh(X) if eig is None else eig
    a = np.asarray(a, float)
    inv_w = 1.0 / w
    tr_xinv = inv_w.sum(axis=-1)
    denom = 1.0 - a * tr_xinv
    if np.any(np.abs(denom) < SINGULAR_TRACE_TOL):
        raise SingularOperator("1 - a Tr[X^-1] vanishes")
    Vt = np.swapaxes(V, -1, -2)
    # Tr[X^{-1} Y] = sum_i (V^T Y V)_ii / w_i
    Yh = Vt @ Y @ V
    tr_c = (np.diagonal(Yh, axis1=-2, axis2=-1) * inv_w).sum(axis=-1) / (2.0 * denom)
    shift = (2.0 * a * tr_c)[..., None, None] * _eye_like(Yh)
    Ch = (Yh + shift) / (w[..., :, None] + w[..., None, :])
    return V @ Ch @ Vt


def barlop_apply(X, Y, *, eig: tuple[np.ndarray, np.ndarray] | None = None) -> np.ndarray:
    """``L_X^{-1}(YX + XY^T) X`` for a general matrix ``Y``."""
    X = np.asarray(X, float)
    Y = np.asarray(Y, float)
    w, V = pd_eigh(X) if eig is None else eig
    Z = Y @ X + X @ np.swapaxes(Y, -1, -2)
    return linv_eig(w, V, Z) @ X


def barlop_matrix(X, *, eig: tuple[np.ndarray, np.ndarray] | None = None) -> np.ndarray:
    """d^2 x d^2 matrix of ``Y -> barlop_apply(X, Y)`` (stack-aware)."""
    X = np.asarray(X, float)
    d = X.shape[-1]
    w, V = pd_eigh(X) if eig is None else eig
    basis = np.eye(d * d).reshape(d * d, d, d)
    Xb = X[..., None, :, :]
    wb, Vb = w[..., None, :], V[..., None, :, :]
    Z = basis @ Xb + Xb @ np.swapaxes(basis, -1, -2)
    cols = linv_eig(wb, Vb, Z) @ Xb
    cols = cols.reshape(*X.shape[:-2], d * d, d * d)
    return np.swapaxes(cols, -1, -2)


def operator_to_matrix(f: Callable[[np.ndarray], np.ndarray], d: int,
                       check_linear: bool = False, rng=None) -> np.ndarray:
    """Matrix of a linear map on d x d matrices in the row-major basis.

    Column ``k`` holds ``vec(f(E_k))`` where ``E_k`` is the k-th unit matrix.
    With ``check_linear`` the superposition property is verified on a random
    pair of inputs.
    """
    basis = np.eye(d * d).reshape(d * d, d, d)
    M = np.column_stack([np.asarray(f(E), float).reshape(-1) for E in basis])
    if check_linear:
        rng = np.random.default_rng(rng)
        A, B = rng.standard_normal((2, d, d))
        s, t = rng.standard_normal(2)
        lhs = np.asarray(f(s * A + t * B)).reshape(-1)
        rhs = s * M @ A.reshape(-1) + t * M @ B.reshape(-1)
        if not np.allclose(lhs, rhs, rtol=1e-8, atol=1e-10 * max(1.0, np.abs(rhs).max())):
            raise ValidationError("map is not linear")
    return M


def lyapunov_operator(b) -> np.ndarray:
    """Matrix of ``R -> bR + Rb^T`` in the row-major basis."""
    b = np.asarray(b, float)
    eye = np.eye(b.shape[0])
    return np.kron(b, eye) + np.kron(eye, b)


def lyapunov_solve(b, C) -> np.ndarray:
    """Solve ``bR + Rb^T = -C``.

    Raises :class:`SingularLyapunov` when the vectorised operator has
    condition number above 1e12.
    """
    b = _as_square(b, "b")
    C = _as_square(C, "C")
    K = lyapunov_operator(b)
    if np.linalg.cond(K) > LYAPUNOV_MAX_COND:
        raise SingularLyapunov("Lyapunov operator is ill-conditioned")
    R = scipy.linalg.solve_continuous_lyapunov(b, -C)
    if np.allclose(C, C.T):
        R = sym(R)
    return R


def expm(b) -> np.ndarray:
    return scipy.linalg.expm(np.asarray(b, float))


def vec(Y) -> np.ndarray:
    return np.asarray(Y, float).reshape(*np.shape(Y)[:-2], -1)


def unvec(y, d: int) -> np.ndarray:
    return np.asarray(y, float).reshape(*np.shape(y)[:-1], d, d)


def integrated_covariance(b, A, t: float) -> np.ndarray:
    """``q_t = int_0^t e^{sb} A e^{sb^T} ds``.

    Symmetric ``b`` with ``A = I`` uses the scalar ``(e^{2 lam t} - 1)/(2 lam)``
    on the spectrum of ``b``; anything else goes through the block-exponential
    (Van Loan) identity.
    """
    b = np.asarray(b, float)
    A = np.asarray(A, float)
    d = b.shape[0]
    if np.array_equal(b, b.T) and np.allclose(A, np.eye(d), rtol=0, atol=0):
        w, V = np.linalg.eigh(b)
        x = 2.0 * w * t
        small = np.abs(x) < 1e-6
        ratio = np.where(small, t * (1.0 + x / 2.0 + x * x / 6.0),
                         np.expm1(np.where(small, 1.0, x)) / np.where(small, 1.0, 2.0 * w))
        return _from_eig(ratio, V)
    H = np.zeros((2 * d, 2 * d))
    H[:d, :d] = b
    H[:d, d:] = A
    H[d:, d:] = -b.T
    F = scipy.linalg.expm(H * t)
    return sym(F[:d, d:] @ F[:d, :d].T)
