"""Closed-form joint Laplace transform of ``(X_t, R_t)`` with ``R_t = int_0^t X_s ds``.

For a canonical process (``a = I``, ``b`` symmetric)

    E[exp(-Tr[w X_t]/2 - Tr[v R_t]/2)]
        = exp(-alpha Tr[b] t / 2) det(V)^{-alpha/2} exp(-Tr[(V' V^{-1} + b) x]/2)

with ``V = S(t) w~ + C(t)``, ``V' = C(t) w~ + v~ S(t)``, ``v~ = v + b^2``,
``w~ = w - b`` and ``C, S`` the matrix cosh / sinhc functions of ``v~``.
Transformable processes are reduced to the canonical one by the congruence
``Y = (a^T)^{-1} X a^{-1}``.

The module also ships an independent Runge-Kutta integration of the matrix
Riccati system that drives the same expectation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import matlin
from .exceptions import (
    BlowUp,
    DomainViolation,
    NotErgodic,
    NotTransformable,
    NumericalBreakdown,
    ValidationError,
)
from .model import WishartSpec

__all__ = [
    "WishartSpec",
    "VPair",
    "Certificate",
    "v_matrices",
    "joint_laplace",
    "log_joint_laplace",
    "joint_laplace_general",
    "domain_check",
    "riccati_oracle",
    "stationary_laplace",
    "transition_laplace",
    "girsanov_identity_check",
]


@dataclass(frozen=True)
class VPair:
    V: np.ndarray
    Vprime: np.ndarray
    vtilde: np.ndarray
    wtilde: np.ndarray


@dataclass(frozen=True)
class Certificate:
    """A matrix ``m`` certifying finiteness of the transform, and how it was found."""

    m: np.ndarray
    kind: str


def _cosh_sinhc(vt: np.ndarray, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Spectral ``C = cosh(sqrt(vt) t)`` and ``S = sinh(sqrt(vt) t)/sqrt(vt)``."""
    lam, O = matlin.eigh_sym(vt)
    r = np.sqrt(np.abs(lam)) * t
    pos = lam >= 0
    c = np.where(pos, np.cosh(r), np.cos(r))
    rs = np.where(r == 0, 1.0, r)
    s_pos = t * matlin.sinhc(r)
    s_neg = np.where(r == 0, t, t * np.sin(rs) / rs)
    s = np.where(pos, s_pos, s_neg)
    Ot = O.T
    return (O * c) @ Ot, (O * s) @ Ot


def _cosh_sinhc_series(vt: np.ndarray, t: float, max_terms: int = 400):
    d = vt.shape[0]
    C = np.eye(d)
    S = t * np.eye(d)
    termC, termS = np.eye(d), t * np.eye(d)
    for k in range(1, max_terms):
        termC = termC @ vt * (t * t) / ((2 * k - 1) * (2 * k))
        termS = termS @ vt * (t * t) / ((2 * k) * (2 * k + 1))
        C = C + termC
        S = S + termS
        small = np.abs(termC).max() <= 1e-17 * max(1.0, np.abs(C).max())
        if small and np.abs(termS).max() <= 1e-17 * max(1.0, np.abs(S).max()):
            break
    return C, S


def v_matrices(v, w, b, t: float, method: str = "spectral") -> VPair:
    """Return ``V(t)``, ``V'(t)``, ``v~`` and ``w~`` for symmetric ``v, w, b``.

    ``method="series"`` evaluates the power series directly and is kept as a
    cross-check of the spectral route.
    """
    v = matlin.check_symmetric(v, "v")
    w = matlin.check_symmetric(w, "w")
    b = matlin.check_symmetric(b, "b")
    if t < 0:
        raise ValidationError("t must be nonnegative")
    vt = matlin.sym(v + b @ b)
    wt = w - b
    if method == "spectral":
        C, S = _cosh_sinhc(vt, t)
    elif method == "series":
        C, S = _cosh_sinhc_series(vt, t)
    else:
        raise ValidationError(f"unknown method {method!r}")
    return VPair(V=S @ wt + C, Vprime=C @ wt + vt @ S, vtilde=vt, wtilde=wt)


# ---------------------------------------------------------------------------
# finiteness certificates


def _psd_scaled(M: np.ndarray, scale: float) -> bool:
    w = np.linalg.eigvalsh(matlin.sym(M))
    return bool(w[0] >= -matlin.PSD_RTOL * max(scale, np.abs(w).max(initial=0.0)))


def domain_check(v, w, b, a=None) -> Certificate | None:
    """Look for ``m`` with ``w/2 + m`` and ``v/2 - b^T m - m b - 2 m a^T a m`` PSD.

    Only the explicit candidates below are tried; ``None`` means none of them
    works, not that the transform is infinite.
    """
    v = matlin.check_symmetric(v, "v")
    w = matlin.check_symmetric(w, "w")
    b = np.asarray(b, float)
    d = v.shape[0]
    a = np.eye(d) if a is None else np.asarray(a, float)
    A = a.T @ a
    scale = max(1.0, np.abs(v).max(), np.abs(w).max(), np.abs(b).max() ** 2 * np.abs(A).max())

    candidates: list[tuple[str, np.ndarray]] = [("zero", np.zeros((d, d))), ("half_w", -0.5 * w)]
    invertible = abs(np.linalg.det(a)) > 1e-12
    if invertible:
        A_inv = np.linalg.inv(A)
        m_drift = -0.5 * A_inv @ b
        if np.allclose(m_drift, m_drift.T, rtol=1e-9, atol=1e-12 * scale):
            candidates.append(("drift", matlin.sym(m_drift)))
            P = matlin.sym(v + b.T @ A_inv @ b)
            if _psd_scaled(P, scale):
                root = matlin.sym_matfun(matlin.sym(a @ P @ a.T), "sqrt")
                a_inv = np.linalg.inv(a)
                m_root = matlin.sym(m_drift + 0.5 * a_inv @ root @ a_inv.T)
                candidates.append(("riccati_root", m_root))

    for kind, m in candidates:
        first = 0.5 * w + m
        second = 0.5 * v - b.T @ m - m @ b - 2.0 * m @ A @ m
        if _psd_scaled(first, scale) and _psd_scaled(second, scale):
            return Certificate(m=m, kind=kind)
    return None


# ---------------------------------------------------------------------------
# closed form


def _log_laplace_canonical(alpha: float, b: np.ndarray, x: np.ndarray, v, w, t: float) -> float:
    pair = v_matrices(v, w, b, t)
    sign, logdet = np.linalg.slogdet(pair.V)
    if sign <= 0:
        raise NumericalBreakdown("det V(t) <= 0; the transform is not finite here")
    ratio = np.linalg.solve(pair.V.T, pair.Vprime.T).T  # V' V^{-1}
    return float(-0.5 * alpha * np.trace(b) * t - 0.5 * alpha * logdet
                 - 0.5 * np.trace((ratio + b) @ x))


def _require_canonical(spec: WishartSpec):
    if not np.allclose(spec.a, np.eye(spec.d), rtol=0, atol=0):
        raise ValidationError("spec must have a = I; use joint_laplace_general")
    if not np.allclose(spec.b, spec.b.T, rtol=1e-12, atol=1e-14):
        raise ValidationError("canonical spec needs symmetric b")


def log_joint_laplace(spec: WishartSpec, v, w, t: float) -> float:
    """Logarithm of :func:`joint_laplace`."""
    _require_canonical(spec)
    if domain_check(v, w, spec.b) is None:
        raise DomainViolation("no finiteness certificate for (v, w)")
    return _log_laplace_canonical(spec.alpha, matlin.sym(spec.b), spec.x, v, w, t)


def joint_laplace(spec: WishartSpec, v, w, t: float) -> float:
    """``E[exp(-Tr[w X_t]/2 - Tr[v R_t]/2)]`` for a canonical spec."""
    return float(np.exp(log_joint_laplace(spec, v, w, t)))


def _log_laplace_general(spec: WishartSpec, v, w, t: float) -> float:
    if not spec.is_transformable:
        raise NotTransformable("b a^T a != a^T a b^T or a singular")
    v = matlin.check_symmetric(v, "v")
    w = matlin.check_symmetric(w, "w")
    if domain_check(v, w, spec.b, spec.a) is None:
        raise DomainViolation("no finiteness certificate for (v, w)")
    y = spec.canonical()
    a = spec.a
    return _log_laplace_canonical(y.alpha, y.b, y.x, matlin.sym(a @ v @ a.T), matlin.sym(a @ w @ a.T), t)


def joint_laplace_general(spec: WishartSpec, v, w, t: float) -> float:
    """Joint transform for a transformable spec (``b a^T a = a^T a b^T``)."""
    return float(np.exp(_log_laplace_general(spec, v, w, t)))


# ---------------------------------------------------------------------------
# Riccati oracle


def _riccati_rhs(g, b, A, delta):
    return g @ b + b.T @ g + 2.0 * g @ A @ g + delta


def _riccati_log_value(spec: WishartSpec, v, w, t: float, n: int) -> float:
    b, A, alpha = spec.b, spec.ata, spec.alpha
    g = -0.5 * np.asarray(w, float)
    delta = -0.5 * np.asarray(v, float)
    beta = 0.0
    h = t / n
    for _ in range(n):
        k1 = _riccati_rhs(g, b, A, delta)
        g2 = g + 0.5 * h * k1
        k2 = _riccati_rhs(g2, b, A, delta)
        g3 = g + 0.5 * h * k2
        k3 = _riccati_rhs(g3, b, A, delta)
        g4 = g + h * k3
        k4 = _riccati_rhs(g4, b, A, delta)
        beta += alpha * h / 6.0 * (np.trace(g @ A) + 2 * np.trace(g2 @ A) + 2 * np.trace(g3 @ A) + np.trace(g4 @ A))
        g = g + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        g = matlin.sym(g)
        nrm = np.abs(g).max()
        if not np.isfinite(nrm) or nrm > 1e8:
            raise BlowUp("Riccati solution exceeded 1e8")
    return float(beta + np.trace(g @ spec.x))


def riccati_oracle(spec: WishartSpec, v, w, t: float, tol: float = 1e-10,
                   n_start: int = 16, max_doublings: int = 14) -> float:
    """Integrate the Riccati system for the transform with classical RK4.

    The step is halved until two successive refinements of the log-value agree
    to ``tol`` (scaled by the elapsed time); the last two levels are then
    Richardson-combined. Works for any ``(b, a)``, not only canonical specs.
    """
    v = matlin.check_symmetric(v, "v")
    w = matlin.check_symmetric(w, "w")
    if t == 0:
        return float(np.exp(-0.5 * np.trace(w @ spec.x)))
    n = n_start
    prev = _riccati_log_value(spec, v, w, t, n)
    for _ in range(max_doublings):
        n *= 2
        cur = _riccati_log_value(spec, v, w, t, n)
        if abs(cur - prev) <= tol * max(1.0, t):
            return float(np.exp(cur + (cur - prev) / 15.0))
        prev = cur
    raise BlowUp("Riccati integration did not converge")


# ---------------------------------------------------------------------------
# transition and stationary laws


def transition_laplace(spec: WishartSpec, u, t: float) -> float:
    """``E[exp(-Tr[u X_t])]`` from the noncentral Wishart transition law.

    ``q_t = int_0^t e^{sb} a^T a e^{sb^T} ds`` and ``m_t = e^{tb} x e^{tb^T}``.
    Valid for any ``(b, a)`` whenever ``I + 2 q_t u`` has positive determinant.
    """
    u = matlin.check_symmetric(u, "u")
    q = matlin.integrated_covariance(spec.b, spec.ata, t)
    E = matlin.expm(t * spec.b)
    m = E @ spec.x @ E.T
    K = np.eye(spec.d) + 2.0 * q @ u
    sign, logdet = np.linalg.slogdet(K)
    if sign <= 0:
        raise DomainViolation("I + 2 q u is not positive definite")
    expo = np.trace(u @ np.linalg.solve(K, m))
    return float(np.exp(-0.5 * spec.alpha * logdet - expo))


def stationary_covariance(b) -> np.ndarray:
    """``q_inf = int_0^inf e^{sb} e^{sb^T} ds``, the scale of the stationary law."""
    b = np.asarray(b, float)
    if np.linalg.eigvalsh(b + b.T)[-1] >= 0:
        raise NotErgodic("b + b^T must be negative definite")
    if np.array_equal(b, b.T):
        return -0.5 * np.linalg.inv(b)
    return matlin.lyapunov_solve(b, np.eye(b.shape[0]))


def stationary_laplace(alpha: float, b, v) -> float:
    """``E[exp(-Tr[v X_inf])] = det(I + 2 q_inf v)^{-alpha/2}``.

    For symmetric ``b`` this is ``det(I - b^{-1} v)^{-alpha/2}``.
    """
    b = np.asarray(b, float)
    v = matlin.check_symmetric(v, "v")
    q = stationary_covariance(b)
    if np.array_equal(b, b.T):
        K = np.eye(b.shape[0]) - np.linalg.solve(b, v)
    else:
        K = np.eye(b.shape[0]) + 2.0 * q @ v
    sign, logdet = np.linalg.slogdet(K)
    if sign <= 0:
        raise DomainViolation("stationary transform is infinite at v")
    return float(np.exp(-0.5 * alpha * logdet))


def girsanov_identity_check(spec: WishartSpec, u, T: float) -> float:
    """Value of the exponential martingale expectation built from ``u``.

    Evaluates the joint transform at ``w = -u``, ``v = u b + b^T u + u a^T a u``
    and multiplies by ``exp(-Tr[u x]/2 - alpha T Tr[u a^T a]/2)``; the exact
    answer is 1.
    """
    u = matlin.check_symmetric(u, "u")
    A = spec.ata
    v = matlin.sym(u @ spec.b + spec.b.T @ u + u @ A @ u)
    log_val = _log_laplace_general(spec, v, -u, T)
    log_val += -0.5 * np.trace(u @ spec.x) - 0.5 * spec.alpha * T * np.trace(u @ A)
    return float(np.exp(log_val))

