"""Limit laws of the rescaled estimation errors.

Each law is described by a :class:`LimitLaw` exposing a Laplace-transform
evaluator ``E[exp(<c, G> + lam H)]`` (Frobenius pairing ``<c, G> = Tr[c^T G]``)
and a sampler. Laws without a closed-form transform fall back to a Monte Carlo
estimate and say so through :attr:`LimitLaw.closed_form`.

Case tags:

=============  =====================================================  ==================
tag            regime                                                 rates (b, alpha)
=============  =====================================================  ==================
thm2.1         ergodic, symmetric b, alpha > d + 1, joint estimator   sqrt(T), sqrt(T)
thm2.2         ergodic, symmetric b, alpha = d + 1, joint estimator   sqrt(T), T
thm2.3         ergodic, general b, alpha > d + 1, joint estimator     sqrt(T), sqrt(T)
thm2.4-sym     ergodic, symmetric b, alpha known                      sqrt(T)
thm2.4-gen     ergodic, general b, alpha known                        sqrt(T)
thm3.1         b = 0, alpha > d + 1, joint estimator                  T, sqrt(log T)
thm3.2         b = 0, alpha = d + 1, joint estimator                  T, log T
thm3.3         b = 0, alpha known                                     T
thm3.4         b = b0 I with b0 > 0, alpha known                      exp(b0 T)
prop3.1        diagonal b, diagonal estimator, alpha known            per entry
=============  =====================================================  ==================
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import matlin
from .exceptions import CaseParameterMismatch, DegenerateDegree, NotErgodic, ValidationError
from .laplace import stationary_covariance
from .model import WishartSpec
from .sim import (
    TransitionKernel,
    as_generator,
    matrix_gaussian_sample,
    stationary_sample,
    tau_sample,
    wishart0_joint_sample,
)

CASES = ("thm2.1", "thm2.2", "thm2.3", "thm2.4-sym", "thm2.4-gen",
         "thm3.1", "thm3.2", "thm3.3", "thm3.4", "prop3.1")


# ---------------------------------------------------------------------------
# stationary quantities


@dataclass
class ErgodicMoments:
    """Stationary mean ``R_inf``, ``Q_inf = 1/E Tr[X_inf^{-1}]`` and the
    averaged operators ``checkL = E[barL_{X_inf}]`` and
    ``hatL = checkL - Q_inf vec(I) vec(I)^T`` (d^2 x d^2 matrices)."""

    alpha: float
    b: np.ndarray
    R_inf: np.ndarray
    Q_inf: float
    checkL_inf: np.ndarray | None = None
    hatL_inf: np.ndarray | None = None
    draws: np.ndarray | None = None
    mc_meta: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.R_inf.shape[0]

    @property
    def denom(self) -> float:
        """``1 - Q_inf Tr[R_inf^{-1}]``, positive in the ergodic regime."""
        return 1.0 - self.Q_inf * float(np.trace(np.linalg.inv(self.R_inf)))

    def require_operators(self):
        if self.checkL_inf is None:
            raise ValidationError("operator expectations were not estimated (mc_samples=0)")


def _barlop_mean(draws: np.ndarray, chunk: int = 20000) -> tuple[np.ndarray, np.ndarray]:
    n, d = draws.shape[0], draws.shape[-1]
    s1 = np.zeros((d * d, d * d))
    s2 = np.zeros((d * d, d * d))
    for start in range(0, n, chunk):
        ops = matlin.barlop_matrix(draws[start:start + chunk])
        s1 += ops.sum(axis=0)
        s2 += (ops * ops).sum(axis=0)
    mean = s1 / n
    se = np.sqrt(np.maximum(s2 / n - mean * mean, 0.0) / n)
    return matlin.sym(mean), se


def ergodic_moments(alpha: float, b, mc_samples: int = 200_000, rng=None,
                    allow_degenerate: bool = False) -> ErgodicMoments:
    """Stationary quantities for ``b + b^T`` negative definite and ``alpha > d + 1``.

    ``R_inf = alpha q_inf`` and ``Q_inf = (alpha - d - 1) / Tr[q_inf^{-1}]``
    (inverse-Wishart mean), which for symmetric ``b`` reduce to
    ``-alpha b^{-1}/2`` and ``(alpha - d - 1)/(2 Tr[-b])``. With
    ``mc_samples > 0`` the operator expectations are estimated from stationary
    draws, together with an independent Monte Carlo estimate of ``Q_inf``.
    For ``alpha <= d + 1`` the inverse trace has infinite mean; with
    ``allow_degenerate`` this is reported as ``Q_inf = 0``, otherwise it raises.
    """
    b = np.asarray(b, float)
    d = b.shape[0]
    if np.linalg.eigvalsh(b + b.T)[-1] >= 0:
        raise NotErgodic("b + b^T must be negative definite")
    degenerate = alpha <= d + 1
    if degenerate and not allow_degenerate:
        raise DegenerateDegree("Q_inf vanishes unless alpha > d + 1")
    q = stationary_covariance(b)
    R = matlin.sym(alpha * q)
    Q = 0.0 if degenerate else (alpha - d - 1) / float(np.trace(np.linalg.inv(q)))
    mom = ErgodicMoments(alpha=float(alpha), b=b, R_inf=R, Q_inf=Q)
    if mc_samples:
        rng = as_generator(rng)
        draws = stationary_sample(alpha, b, rng, size=int(mc_samples))
        check, se = _barlop_mean(draws)
        tr_inv = np.trace(np.linalg.inv(draws), axis1=-2, axis2=-1)
        mom.checkL_inf = check
        eye = np.eye(d).reshape(-1)
        mom.hatL_inf = check - Q * np.outer(eye, eye)
        mom.draws = draws
        mom.mc_meta = {
            "samples": int(mc_samples),
            "checkL_se_max": float(se.max()),
            "Q_inf_mc": None if degenerate else float(1.0 / tr_inv.mean()),
            "mean_tr_inv_se": float(tr_inv.std(ddof=1) / np.sqrt(len(tr_inv))),
        }
        if np.linalg.eigvalsh(mom.hatL_inf)[0] <= 0:
            raise NotErgodic("estimated hat-L operator is not positive definite")
    return mom


# ---------------------------------------------------------------------------
# Laplace transforms


def matrix_gaussian_laplace(c, C) -> float:
    """``E[exp(-Tr[c G])] = exp(2 Tr[c^2 C])`` for the symmetric Gaussian with tensor C."""
    c = np.asarray(c, float)
    return float(np.exp(2.0 * np.trace(c @ c @ np.asarray(C, float))))


def limit_laplace_joint_sym(c, lam: float, mom: ErgodicMoments) -> float:
    """Transform of the symmetric joint limit ``(G, H)``."""
    c = matlin.check_symmetric(c, "c")
    R, Q, D = mom.R_inf, mom.Q_inf, mom.denom
    tr_cr = float(np.trace(c @ np.linalg.inv(R)))
    quad = float(np.trace(c @ matlin.lop_invert(R, Q, c)))
    return float(np.exp(2 * Q * lam * lam / D - 2 * Q * lam / D * tr_cr + quad))


def _quad_check(mom: ErgodicMoments, m: np.ndarray) -> tuple[float, float]:
    """``E[Tr[L_X^{-1}(mX + Xm^T)(mX + Xm^T)]]/4`` and its Monte Carlo SE.

    The integrand equals ``<m, barL_X(m)>/2``.
    """
    mom.require_operators()
    vm = m.reshape(-1)
    X = mom.draws
    vals = 0.5 * np.einsum("ij,nij->n", m, matlin.barlop_apply(X, np.broadcast_to(m, X.shape)))
    mean = 0.5 * float(vm @ mom.checkL_inf @ vm)
    return mean, float(vals.std(ddof=1) / np.sqrt(len(vals)))


def limit_laplace_joint_gen(c, lam: float, mom: ErgodicMoments, return_se: bool = False):
    """Transform of the general-b joint limit, with the Monte Carlo term evaluated
    on the stationary draws. ``return_se`` also returns the delta-method SE."""
    mom.require_operators()
    c = np.asarray(c, float)
    d = mom.d
    R, Q, D = mom.R_inf, mom.Q_inf, mom.denom
    tr_cr = float(np.trace(c @ np.linalg.inv(R)))
    m = np.linalg.solve(mom.hatL_inf, c.reshape(-1)).reshape(d, d)
    quad, quad_se = _quad_check(mom, m)
    expo = (2 * Q * lam * lam / D - 2 * Q * lam / D * tr_cr + quad
            + tr_cr * Q / D * (0.5 * tr_cr / D - np.trace(m)))
    val = float(np.exp(expo))
    return (val, val * quad_se) if return_se else val


def joint_gen_covariance(mom: ErgodicMoments) -> np.ndarray:
    """Covariance of ``(vec G, H)`` for the general-b joint limit, built from the
    Gaussian pair ``(G^, H^)`` with ``Cov(G^) = checkL``, ``Cov(G^_ij, H^) = d_ij``,
    ``Var(H^) = 1/Q_inf``."""
    mom.require_operators()
    d = mom.d
    n = d * d
    eye = np.eye(d).reshape(-1)
    S = np.zeros((n + 1, n + 1))
    S[:n, :n] = mom.checkL_inf
    S[:n, n] = eye
    S[n, :n] = eye
    S[n, n] = 1.0 / mom.Q_inf
    Hinv = np.linalg.inv(mom.hatL_inf)
    A = np.zeros((n + 1, n + 1))
    A[:n, :n] = Hinv
    A[:n, n] = -mom.Q_inf * Hinv @ eye
    A[n, :] = -2 * mom.Q_inf * eye @ A[:n, :]
    A[n, n] += 2 * mom.Q_inf
    return matlin.sym(A @ S @ A.T)


def limit_laplace_b(c, mom: ErgodicMoments, variant: str = "sym") -> float:
    """Transform of the known-alpha limit of ``sqrt(T)(b_hat - b)``."""
    c = np.asarray(c, float)
    if variant == "sym":
        c = matlin.check_symmetric(c, "c")
        return float(np.exp(np.trace(c @ matlin.lop_invert(mom.R_inf, 0.0, c))))
    if variant == "gen":
        mom.require_operators()
        m = np.linalg.solve(mom.checkL_inf, c.reshape(-1)).reshape(mom.d, mom.d)
        quad, _ = _quad_check(mom, m)
        return float(np.exp(quad))
    raise ValidationError(f"unknown variant {variant!r}")


def wishart0_laplace(alpha: float, lam_x, lam_r) -> float:
    """``E[exp(-Tr[lam_x X_1] - Tr[lam_r R_1])]`` for the process from 0 with ``b = 0``.

    Equals ``det(V)^{-alpha/2}`` with
    ``V = sinhc(sqrt(2 lam_r)) 2 lam_x + cosh(sqrt(2 lam_r))``.
    """
    from .laplace import v_matrices

    lam_x = np.asarray(lam_x, float)
    d = lam_x.shape[0]
    pair = v_matrices(2 * np.asarray(lam_r, float), 2 * lam_x, np.zeros((d, d)), 1.0)
    sign, logdet = np.linalg.slogdet(pair.V)
    if sign <= 0:
        raise ValidationError("transform is infinite at this point")
    return float(np.exp(-0.5 * alpha * logdet))


# ---------------------------------------------------------------------------
# limit laws


@dataclass
class LimitLaw:
    """A limit law: case tag, its parameters, a transform evaluator and a sampler.

    ``sample(n, rng)`` returns ``(G, H)`` with ``G`` of shape ``(n, d, d)`` (or
    ``(n, d)`` for the diagonal case) and ``H`` of shape ``(n,)`` or ``None``.
    """

    case: str
    params: dict
    _laplace: Callable | None
    _sampler: Callable
    closed_form: bool = True

    def sample(self, n: int, rng):
        return self._sampler(int(n), as_generator(rng))

    def laplace(self, c=None, lam: float = 0.0, n_mc: int = 200_000, rng=None) -> float:
        """``E[exp(<c, G> + lam H)]``; Monte Carlo from the sampler if no closed form."""
        if self._laplace is not None:
            return self._laplace(c, lam)
        G, H = self.sample(n_mc, rng if rng is not None else 12345)
        expo = _pairing(c, G) + (0.0 if H is None or lam == 0 else lam * H)
        return float(np.mean(np.exp(expo)))


def _pairing(c, G: np.ndarray) -> np.ndarray:
    if c is None:
        return np.zeros(G.shape[0])
    c = np.asarray(c, float)
    return np.einsum("...ij,ij->...", G, c) if G.ndim == 3 else G @ c


def _mismatch(msg: str):
    raise CaseParameterMismatch(msg)


def _sym_gaussian(C: np.ndarray, n: int, rng) -> np.ndarray:
    return matrix_gaussian_sample("cov", C.shape[0], rng, C=C, size=n)


def _law_thm21(mom: ErgodicMoments) -> LimitLaw:
    R, Q = mom.R_inf, mom.Q_inf
    Rinv = np.linalg.inv(R)
    d = mom.d
    s2 = 1.0 / Q - float(np.trace(Rinv))

    def sampler(n, rng):
        Gt = _sym_gaussian(R, n, rng)
        # Cov(Gt_ij, Ht) = 2 delta_ij through Tr[Rinv Gt]/2; Var(Ht) = 1/Q
        Ht = 0.5 * np.einsum("nij,ij->n", Gt, Rinv) + np.sqrt(s2) * rng.standard_normal(n)
        G = matlin.lop_invert(np.broadcast_to(R, Gt.shape), Q, Gt - 2 * Q * Ht[:, None, None] * np.eye(d))
        H = 2 * Q * (Ht - np.trace(G, axis1=1, axis2=2))
        return G, H

    def lap(c, lam):
        c = np.zeros((d, d)) if c is None else c
        return limit_laplace_joint_sym(c, lam, mom)

    return LimitLaw("thm2.1", {"alpha": mom.alpha, "b": mom.b}, lap, sampler)


def _law_b_sym(mom_R: np.ndarray, case: str, params: dict, h_part=None) -> LimitLaw:
    R = mom_R
    d = R.shape[0]

    def sampler(n, rng):
        G = matlin.lop_invert(np.broadcast_to(R, (n, d, d)), 0.0, _sym_gaussian(R, n, rng))
        H = None if h_part is None else h_part[0](n, rng)
        return G, H

    def lap(c, lam):
        val = 1.0
        if c is not None:
            c = matlin.check_symmetric(c, "c")
            val *= float(np.exp(np.trace(c @ matlin.lop_invert(R, 0.0, c))))
        if h_part is not None and lam:
            val *= h_part[1](lam)
        return val

    return LimitLaw(case, params, lap, sampler)


def _law_gen_gaussian(cov: np.ndarray, d: int, case: str, params: dict, with_h: bool, lap) -> LimitLaw:
    w, V = np.linalg.eigh(cov)
    root = V * np.sqrt(np.clip(w, 0.0, None))

    def sampler(n, rng):
        z = rng.standard_normal((n, cov.shape[0])) @ root.T
        G = z[:, : d * d].reshape(n, d, d)
        return G, (z[:, d * d] if with_h else None)

    return LimitLaw(case, params, lap, sampler)


def _b0_sampler(alpha: float, d: int, n_inner: int):
    def draw(n, rng):
        X, R = wishart0_joint_sample(alpha, d, n_inner, rng, size=n)
        return matlin.lop_invert(R, 0.0, X - alpha * np.eye(d)), (X, R)
    return draw


def check_case(case: str, alpha: float, b, x=None) -> None:
    """Raise :class:`CaseParameterMismatch` unless ``(alpha, b, x)`` fit the regime of ``case``."""
    b = np.asarray(b, float)
    d = b.shape[0]
    if case not in CASES:
        raise ValidationError(f"unknown case {case!r}")
    symmetric = bool(np.allclose(b, b.T, rtol=0, atol=1e-14))
    ergodic = bool(np.linalg.eigvalsh(b + b.T)[-1] < 0)
    zero_b = bool(np.all(b == 0))
    if case.startswith("thm2") and not ergodic:
        _mismatch(f"{case} needs b + b^T negative definite")
    if case in ("thm2.1", "thm2.2", "thm2.4-sym") and not symmetric:
        _mismatch(f"{case} needs symmetric b")
    if case in ("thm2.1", "thm2.3", "thm3.1") and not alpha > d + 1:
        _mismatch(f"{case} needs alpha > d + 1")
    if case in ("thm2.2", "thm3.2") and alpha != d + 1:
        _mismatch(f"{case} needs alpha = d + 1")
    if case in ("thm3.1", "thm3.2", "thm3.3") and not zero_b:
        _mismatch(f"{case} needs b = 0")
    if case == "thm3.4":
        b0 = float(b[0, 0])
        if not (b0 > 0 and np.array_equal(b, b0 * np.eye(d))):
            _mismatch("thm3.4 needs b = b0 I with b0 > 0")
    if case == "prop3.1" and not np.array_equal(b, np.diag(np.diag(b))):
        _mismatch("prop3.1 needs diagonal b")
    if case in ("thm3.4", "prop3.1") and x is None:
        _mismatch(f"{case} needs the initial state x")


def make_limit_law(case: str, alpha: float, b, x=None, mc_samples: int = 200_000,
                   rng=None, n_inner: int = 200, moments: ErgodicMoments | None = None) -> LimitLaw:
    """Build the :class:`LimitLaw` for ``case``, validating its preconditions."""
    b = np.asarray(b, float)
    d = b.shape[0]
    check_case(case, alpha, b, x)
    params = {"alpha": float(alpha), "b": b}

    if case == "thm2.1":
        mom = moments or ergodic_moments(alpha, b, mc_samples=0)
        return _law_thm21(mom)

    if case == "thm2.2":
        R = -0.5 * alpha * np.linalg.inv(b)
        lev = -float(np.trace(b))

        def h_draw(n, rng):
            return 2 * lev / tau_sample(lev, rng, size=n)

        def h_lap(lam):
            if lam >= lev / 4:
                return np.inf
            return float((1 - 4 * lam / lev) ** -0.5)

        return _law_b_sym(R, case, params, (h_draw, h_lap))

    if case == "thm2.4-sym":
        return _law_b_sym(-0.5 * alpha * np.linalg.inv(b), case, params)

    if case in ("thm2.3", "thm2.4-gen"):
        mom = moments if moments is not None and moments.checkL_inf is not None else \
            ergodic_moments(alpha, b, mc_samples=mc_samples, rng=rng,
                            allow_degenerate=case == "thm2.4-gen")
        if case == "thm2.3":
            cov = joint_gen_covariance(mom)

            def lap(c, lam):
                return limit_laplace_joint_gen(np.zeros((d, d)) if c is None else c, lam, mom)

            law = _law_gen_gaussian(cov, d, case, params, True, lap)
        else:
            cov = np.linalg.inv(mom.checkL_inf)

            def lap(c, lam):
                return limit_laplace_b(np.zeros((d, d)) if c is None else c, mom, "gen")

            law = _law_gen_gaussian(matlin.sym(cov), d, case, params, False, lap)
        law.params["moments"] = mom
        return law

    if case in ("thm3.1", "thm3.2", "thm3.3"):
        draw_b = _b0_sampler(alpha, d, n_inner)
        if case == "thm3.1":
            scale = 2.0 * np.sqrt((alpha - d - 1) / d)

            def sampler(n, rng):
                G, _ = draw_b(n, rng)
                return G, scale * rng.standard_normal(n)

            def h_lap(lam):
                return float(np.exp(0.5 * scale * scale * lam * lam))
        elif case == "thm3.2":
            def sampler(n, rng):
                G, _ = draw_b(n, rng)
                return G, 4.0 / (d * tau_sample(1.0, rng, size=n))

            def h_lap(lam):
                # 4 Z^2 / d is a scaled chi-square(1)
                return np.inf if lam >= d / 8 else float((1 - 8 * lam / d) ** -0.5)
        else:
            def sampler(n, rng):
                G, _ = draw_b(n, rng)
                return G, None

            h_lap = None
        law = LimitLaw(case, dict(params, n_inner=n_inner), None, sampler, closed_form=False)
        law.params["h_laplace"] = h_lap
        law.params["pair_sampler"] = draw_b
        return law

    if case == "thm3.4":
        b0 = float(b[0, 0])
        x = matlin.check_psd(x, "x")
        spec0 = WishartSpec(x=x / (2 * b0), alpha=alpha, b=np.zeros((d, d)))
        kern = TransitionKernel(spec0, 1.0 / (4 * b0 * b0))

        def sampler(n, rng):
            X = np.empty((n, d, d))
            if kern.padded:
                X = kern.apply(np.broadcast_to(spec0.x, (n, d, d)), rng.standard_normal((n, kern.n_normals)),
                               rng.standard_gamma(kern.shapes, size=(n, d)))
            else:
                for i in range(n):
                    X[i] = kern.sample_one(spec0.x, rng)
            root = matlin.sym_matfun(X, "sqrt")
            Gt = rng.standard_normal((n, d, d))
            S = root @ Gt
            return matlin.lop_invert(X, 0.0, S + np.swapaxes(S, -1, -2)), None

        return LimitLaw(case, dict(params, x=x, b0=b0), None, sampler, closed_form=False)

    # prop3.1: diagonal b, independent entries
    bd = np.diag(b)
    xd = np.diag(np.asarray(x, float))

    def sampler(n, rng):
        out = np.empty((n, d))
        for i, bi in enumerate(bd):
            if bi < 0:
                out[:, i] = np.sqrt(-2 * bi / alpha) * rng.standard_normal(n)
            elif bi == 0:
                Xs, Rs = wishart0_joint_sample(alpha, 1, n_inner, rng, size=n)
                out[:, i] = (Xs[:, 0, 0] - alpha) / (2 * Rs[:, 0, 0])
            else:
                spec1 = WishartSpec(x=[[xd[i] / (2 * bi)]], alpha=alpha, b=[[0.0]])
                k1 = TransitionKernel(spec1, 1.0 / (4 * bi * bi))
                Xs = k1.apply(np.broadcast_to(spec1.x, (n, 1, 1)), rng.standard_normal((n, k1.n_normals)),
                              rng.standard_gamma(k1.shapes, size=(n, 1)))
                out[:, i] = rng.standard_normal(n) / np.sqrt(Xs[:, 0, 0])
        return out, None

    return LimitLaw(case, dict(params, x=np.asarray(x, float)), None, sampler, closed_form=False)


def limit_sampler(law: LimitLaw, rng, n: int | None = None):
    """One draw (or ``n`` draws) from ``law``."""
    G, H = law.sample(1 if n is None else n, rng)
    if n is None:
        return G[0], (None if H is None else float(H[0]))
    return G, H


def diag_rates(b, t: float) -> np.ndarray:
    """Per-entry scaling of the diagonal estimator error at horizon ``t``:
    ``sqrt(t)`` for ``b_i < 0``, ``t`` for ``b_i = 0`` and ``exp(b_i t)`` for ``b_i > 0``."""
    bd = np.diag(np.asarray(b, float)) if np.ndim(b) == 2 else np.asarray(b, float)
    return np.where(bd < 0, np.sqrt(t), np.where(bd == 0, t, np.exp(bd * t)))
