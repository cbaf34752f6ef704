"""Maximum likelihood estimation of the drift ``(b, alpha)``.

Every estimator works on :class:`~wishart_mle.pathfun.PathStats`. The general
(non-symmetric ``b``) estimators additionally need the Ito integral
``sum_i L_{X_i}^{-1}(dX_i) X_i`` and the operator integral of
``Y -> L_X^{-1}(YX + XY^T) X``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import matlin
from .exceptions import (
    DegenerateDiagonal,
    DegenerateDegree,
    NotInvertible,
    SingularOperator,
    SingularSystem,
    ValidationError,
)
from .pathfun import PathStats, estimate_ata, martingale_stats, path_functionals, transform_path
from .sim import SamplePath

SYSTEM_MAX_COND = 1e12


@dataclass
class Estimate:
    variant: str
    b_hat: np.ndarray
    alpha_hat: float | None = None
    a_hat: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"variant": self.variant, "b_hat": np.asarray(self.b_hat).tolist()}
        if self.alpha_hat is not None:
            out["alpha_hat"] = self.alpha_hat
        if self.a_hat is not None:
            out["a_hat"] = np.asarray(self.a_hat).tolist()
        out["diagnostics"] = {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                              for k, v in self.diagnostics.items()}
        return out


def _rel(res: np.ndarray | float, scale: float) -> float:
    return float(np.max(np.abs(res)) / max(scale, 1e-300))


def score_sym(stats: PathStats, b, alpha: float) -> tuple[np.ndarray, float]:
    """Gradient of :func:`loglik_sym` in ``(b, alpha)`` (``b`` symmetric).

    The b-part is returned as the symmetric matrix
    ``(X_T - x - alpha T I - (bR + Rb))/2``.
    """
    b = np.asarray(b, float)
    d, T = stats.d, stats.T
    gb = 0.5 * (stats.X_T - stats.x0 - alpha * T * np.eye(d) - (b @ stats.R_T + stats.R_T @ b))
    ga = 0.25 * stats.Z_T - 0.25 * (alpha - 1 - d) * stats.Qinv_T - 0.5 * T * np.trace(b)
    return gb, float(ga)


def score_gen(stats: PathStats, b, alpha: float) -> tuple[np.ndarray, float]:
    """Gradient of :func:`loglik_gen` in ``(b, alpha)`` for general ``b``."""
    stats.require("ito_linv", "op_int")
    b = np.asarray(b, float)
    d, T = stats.d, stats.T
    opb = (stats.op_int @ b.reshape(-1)).reshape(d, d)
    gb = stats.ito_linv - opb - 0.5 * alpha * T * np.eye(d)
    ga = None
    if stats.Z_T is not None:
        ga = float(0.25 * stats.Z_T - 0.25 * (alpha - 1 - d) * stats.Qinv_T - 0.5 * T * np.trace(b))
    return gb, ga


def _check_joint(stats: PathStats):
    stats.require("Qinv_T", "Z_T")
    T, Q = stats.T, stats.Q_T
    tr_rinv = float(np.trace(np.linalg.inv(stats.R_T)))
    if not T * T * Q * tr_rinv < 1.0:
        raise SingularOperator("Tr[(R_T/T)^-1] < Qinv_T/T fails on these statistics")


def mle_joint_sym(stats: PathStats) -> Estimate:
    """Joint estimator of symmetric ``b`` and ``alpha`` in closed form."""
    _check_joint(stats)
    d, T, Q, Z = stats.d, stats.T, stats.Q_T, stats.Z_T
    I = np.eye(d)
    rhs = stats.X_T - stats.x0 - T * (Q * Z + 1 + d) * I
    b = matlin.sym(matlin.lop_invert(stats.R_T, T * T * Q, rhs))
    alpha = float(1 + d + Q * (Z - 2 * T * np.trace(b)))
    gb, ga = score_sym(stats, b, alpha)
    scale_b = max(np.abs(stats.X_T - stats.x0).max(), alpha * T, 1.0)
    scale_a = max(abs(stats.Z_T), stats.Qinv_T * alpha, 1.0)
    return Estimate("joint_sym", b, alpha, diagnostics={
        "residual_b": _rel(gb, scale_b), "residual_alpha": _rel(ga, scale_a)})


def _system_solve(K: np.ndarray, rhs: np.ndarray, spd: bool):
    cond = float(np.linalg.cond(K))
    if not np.isfinite(cond) or cond > SYSTEM_MAX_COND:
        raise SingularSystem(f"linear system condition number {cond:.3g}")
    if spd:
        try:
            sol = scipy.linalg.cho_solve(scipy.linalg.cho_factor(K), rhs)
        except np.linalg.LinAlgError:
            raise SingularSystem("operator is not positive definite") from None
    else:
        sol = scipy.linalg.lu_solve(scipy.linalg.lu_factor(K), rhs)
    res = _rel(K @ sol - rhs, max(np.abs(rhs).max(), 1e-300))
    return sol, cond, res


def mle_joint_gen(stats: PathStats) -> Estimate:
    """Joint estimator of general ``b`` and ``alpha`` from a (d^2 + 1) linear system."""
    stats.require("Qinv_T", "Z_T", "ito_linv", "op_int")
    _check_joint(stats)
    d, T = stats.d, stats.T
    n = d * d
    eye = np.eye(d).reshape(-1)
    K = np.zeros((n + 1, n + 1))
    K[:n, :n] = stats.op_int
    K[:n, n] = 0.5 * T * eye
    K[n, :n] = 0.5 * T * eye
    K[n, n] = 0.25 * stats.Qinv_T
    rhs = np.empty(n + 1)
    rhs[:n] = stats.ito_linv.reshape(-1)
    rhs[n] = 0.25 * stats.Z_T + 0.25 * (1 + d) * stats.Qinv_T
    sol, cond, res = _system_solve(K, rhs, spd=False)
    return Estimate("joint_gen", sol[:n].reshape(d, d), float(sol[n]),
                    diagnostics={"condition": cond, "residual": res})


def mle_b_sym(stats: PathStats, alpha: float) -> Estimate:
    """``b_hat = L_{R_T}^{-1}(X_T - x - alpha T I)`` for known ``alpha``."""
    d, T = stats.d, stats.T
    rhs = stats.X_T - stats.x0 - alpha * T * np.eye(d)
    b = matlin.sym(matlin.lop_invert(stats.R_T, 0.0, rhs))
    gb, _ = score_sym(stats, b, alpha) if stats.Z_T is not None else (None, None)
    diag = {} if gb is None else {"residual_b": _rel(gb, max(np.abs(rhs).max(), 1.0))}
    return Estimate("b_sym", b, None, diagnostics=diag)


def mle_b_gen(stats: PathStats, alpha: float) -> Estimate:
    """General ``b`` for known ``alpha``: solve ``op_int(b) = ito_linv - alpha T I / 2``."""
    stats.require("ito_linv", "op_int")
    d, T = stats.d, stats.T
    rhs = (stats.ito_linv - 0.5 * alpha * T * np.eye(d)).reshape(-1)
    sol, cond, res = _system_solve(stats.op_int, rhs, spd=True)
    return Estimate("b_gen", sol.reshape(d, d), None, diagnostics={"condition": cond, "residual": res})


def mle_b_diag(stats: PathStats, alpha: float) -> Estimate:
    """Diagonal ``b``: ``b_i = ((X_T)_ii - x_ii - alpha T) / (2 (R_T)_ii)``."""
    R = np.diag(stats.R_T)
    if np.any(R <= 0):
        raise DegenerateDiagonal("diagonal of R_T must be positive")
    b = (np.diag(stats.X_T) - np.diag(stats.x0) - alpha * stats.T) / (2.0 * R)
    return Estimate("b_diag", b, None)


# ---------------------------------------------------------------------------
# likelihoods


def _alpha_terms(stats: PathStats, alpha: float, alpha0: float) -> float:
    if alpha == alpha0:
        return 0.0
    stats.require("Z_T", "Qinv_T")
    d = stats.d
    da = alpha - alpha0
    return 0.25 * da * stats.Z_T - 0.25 * da * (0.5 * (alpha + alpha0) - 1 - d) * stats.Qinv_T


def loglik_sym(stats: PathStats, b, alpha: float, alpha0: float) -> float:
    """Log-likelihood ratio of ``(b, alpha)`` against ``(0, alpha0)``, ``b`` symmetric."""
    b = np.asarray(b, float)
    T = stats.T
    val = _alpha_terms(stats, alpha, alpha0)
    val += 0.5 * (np.trace(b @ stats.X_T) - np.trace(b @ stats.x0))
    val -= 0.5 * np.trace(b @ b @ stats.R_T)
    val -= 0.5 * alpha * T * np.trace(b)
    return float(val)


def loglik_gen(source, b, alpha: float, alpha0: float) -> float:
    """Log-likelihood ratio for general ``b`` against ``(0, alpha0)``.

    ``source`` is a :class:`SamplePath` or :class:`PathStats` carrying the
    Ito and operator integrals. The stochastic integral
    ``1/2 int Tr[L_X^{-1}(bX + Xb^T) dX]`` equals ``<b, ito_linv>`` and the
    time integral ``1/4 int Tr[L_X^{-1}(bX + Xb^T)(bX + Xb^T)] dt`` equals
    ``<b, op_int(b)>/2`` (Frobenius pairing).
    """
    stats = path_functionals(source) if isinstance(source, SamplePath) else source
    stats.require("ito_linv", "op_int")
    b = np.asarray(b, float)
    vb = b.reshape(-1)
    val = _alpha_terms(stats, alpha, alpha0)
    val -= 0.5 * alpha * stats.T * np.trace(b)
    val += float(np.sum(b * stats.ito_linv))
    val -= 0.5 * float(vb @ stats.op_int @ vb)
    return float(val)


def lan_statistics(stats: PathStats, b, alpha: float, u1: float, u2, delta1: float,
                   delta2: float) -> tuple[float, float]:
    """Linear and quadratic parts of the local log-likelihood expansion.

    Returns ``(Lambda, Gamma)`` with
    ``Lambda = (delta1 u1 N_T + Tr[delta2 u2 M_T]) / 2`` and
    ``Gamma = delta2^2 Tr[u2^2 R_T] + T delta1 delta2 u1 Tr[u2] + delta1^2 u1^2 Qinv_T / 4``,
    so that ``loglik_sym(b + delta2 u2, alpha + delta1 u1) - loglik_sym(b, alpha)
    = Lambda - Gamma / 2``.
    """
    u2 = np.asarray(u2, float)
    M, Nt = martingale_stats(stats, b, alpha)
    if Nt is None:
        if u1 != 0:
            stats.require("Z_T", "Qinv_T")
        Nt = 0.0
    qinv = stats.Qinv_T if stats.Qinv_T is not None else 0.0
    lam = 0.5 * (delta1 * u1 * Nt + delta2 * np.trace(u2 @ M))
    gam = (delta2 ** 2 * np.trace(u2 @ u2 @ stats.R_T) + stats.T * delta1 * delta2 * u1 * np.trace(u2)
           + 0.25 * delta1 ** 2 * u1 ** 2 * qinv)
    return float(lam), float(gam)


# ---------------------------------------------------------------------------
# pipeline with unknown diffusion matrix


def map_back(b_y, a_hat) -> np.ndarray:
    """Drift of ``X`` from the drift of ``Y = (a^T)^{-1} X a^{-1}``: ``a^T b_Y (a^T)^{-1}``."""
    a_hat = np.asarray(a_hat, float)
    return a_hat.T @ np.asarray(b_y, float) @ np.linalg.inv(a_hat.T)


def _check_a(a_hat: np.ndarray):
    s = np.linalg.svd(a_hat, compute_uv=False)
    if s[-1] <= 1e-12 * s[0]:
        raise NotInvertible("estimated diffusion factor is singular")


def pipeline_from_stats(stats: PathStats, a=None) -> Estimate:
    """Pipeline on statistics of the raw path ``X``.

    Without ``a`` the diffusion factor is estimated from quadratic
    covariations. The linear statistics of ``Y = (a^T)^{-1} X a^{-1}`` are
    exact congruences of those of ``X``, so no second pass over the path is
    needed.
    """
    info = {}
    if a is None:
        _, a_hat, info = estimate_ata(stats)
        mode = "estimated"
    else:
        a_hat = np.asarray(a, float)
        mode = "known"
    _check_a(a_hat)
    y_stats = stats.congruence(np.linalg.inv(a_hat.T))
    est = mle_joint_sym(y_stats)
    diag = dict(est.diagnostics)
    diag.update(info)
    diag["a_mode"] = mode
    return Estimate("pipeline", map_back(est.b_hat, a_hat), est.alpha_hat, a_hat, diag)


def full_pipeline(path: SamplePath, a=None) -> Estimate:
    """Estimate ``a`` (unless given), whiten the path node by node, then fit ``(b, alpha)``."""
    info = {}
    if a is None:
        _, a_hat, info = estimate_ata(path_functionals(path, ito=False))
        mode = "estimated"
    else:
        a_hat = np.asarray(a, float)
        mode = "known"
    _check_a(a_hat)
    y_stats = path_functionals(transform_path(path, a_hat), qcov=False, ito=False)
    est = mle_joint_sym(y_stats)
    diag = dict(est.diagnostics)
    diag.update(info)
    diag["a_mode"] = mode
    return Estimate("pipeline", map_back(est.b_hat, a_hat), est.alpha_hat, a_hat, diag)


VARIANTS = ("joint_sym", "joint_gen", "b_sym", "b_gen", "b_diag", "pipeline")


def estimate(stats: PathStats, variant: str, alpha: float | None = None, a=None) -> Estimate:
    """Dispatch to the estimator named by ``variant``."""
    if variant == "joint_sym":
        return mle_joint_sym(stats)
    if variant == "joint_gen":
        return mle_joint_gen(stats)
    if variant == "pipeline":
        return pipeline_from_stats(stats, a)
    if variant in ("b_sym", "b_gen", "b_diag"):
        if alpha is None:
            raise ValidationError(f"variant {variant} needs a known alpha")
        fn = {"b_sym": mle_b_sym, "b_gen": mle_b_gen, "b_diag": mle_b_diag}[variant]
        return fn(stats, alpha)
    raise ValidationError(f"unknown variant {variant!r}; expected one of {VARIANTS}")


def joint_regime_ok(alpha: float, d: int) -> bool:
    return alpha >= d + 1


def require_joint_regime(alpha: float, d: int):
    if not joint_regime_ok(alpha, d):
        raise DegenerateDegree("joint estimators need alpha >= d + 1")
