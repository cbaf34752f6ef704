"""scikit-learn style wrappers around the path estimators."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import matlin
from .exceptions import ValidationError
from .mle import VARIANTS, estimate, map_back
from .pathfun import PathStats, estimate_ata, path_functionals
from .sim import SamplePath


def check_path(X, horizon: float | None = None) -> SamplePath:
    """Coerce ``X`` to a :class:`SamplePath`.

    Accepts a ``SamplePath`` or an array of states of shape ``(N + 1, d, d)``;
    arrays need ``horizon`` to place the uniform grid.
    """
    if isinstance(X, SamplePath):
        return X
    states = np.asarray(X, float)
    if states.ndim != 3 or states.shape[1] != states.shape[2]:
        raise ValidationError("states must have shape (N + 1, d, d)")
    if states.shape[0] < 2:
        raise ValidationError("a path needs at least two nodes")
    if not np.all(np.isfinite(states)):
        raise ValidationError("states contain non-finite values")
    if horizon is None or horizon <= 0:
        raise ValidationError("array input needs a positive horizon")
    times = np.linspace(0.0, float(horizon), states.shape[0])
    return SamplePath(spec=None, times=times, states=matlin.sym(states), meta={})


def _stats_for(X, horizon, variant) -> PathStats:
    if isinstance(X, PathStats):
        return X
    path = check_path(X, horizon)
    need_ito = variant in ("joint_gen", "b_gen")
    return path_functionals(path, qcov=variant == "pipeline", ito=need_ito)


class WishartDriftEstimator(BaseEstimator):
    """Maximum likelihood drift estimator for one observed path.

    ``fit`` takes a :class:`SamplePath`, precomputed :class:`PathStats`, or an
    ``(N + 1, d, d)`` state array (with ``horizon``). Known-``alpha`` variants
    need ``alpha``.
    """

    def __init__(self, variant: str = "joint_sym", alpha: float | None = None,
                 horizon: float | None = None):
        self.variant = variant
        self.alpha = alpha
        self.horizon = horizon

    def fit(self, X, y=None):
        if self.variant not in VARIANTS or self.variant == "pipeline":
            raise ValidationError(f"unknown variant {self.variant!r}")
        stats = _stats_for(X, self.horizon, self.variant)
        est = estimate(stats, self.variant, alpha=self.alpha)
        self.stats_ = stats
        self.estimate_ = est
        self.b_ = est.b_hat
        self.alpha_ = est.alpha_hat if est.alpha_hat is not None else float(self.alpha)
        self.n_features_in_ = stats.d
        return self

    def predict(self, X0, horizon: float):
        """Conditional mean after ``horizon`` from each state in ``X0`` (unit diffusion)."""
        check_is_fitted(self, "b_")
        X0 = np.asarray(X0, float)
        single = X0.ndim == 2
        X0 = X0[None] if single else X0
        d = X0.shape[-1]
        E = matlin.expm(self.b_ * horizon)
        q = matlin.integrated_covariance(self.b_, np.eye(d), horizon)
        out = E @ X0 @ E.T + self.alpha_ * q
        return out[0] if single else out


class DiffusionWhitener(TransformerMixin, BaseEstimator):
    """Estimate ``a^T a`` from quadratic covariation and map ``X -> (a^T)^{-1} X a^{-1}``."""

    def __init__(self, a=None, horizon: float | None = None):
        self.a = a
        self.horizon = horizon

    def fit(self, X, y=None):
        if self.a is not None:
            a_hat = np.asarray(self.a, float)
            self.ata_ = a_hat.T @ a_hat
            self.projected_ = False
        else:
            stats = X if isinstance(X, PathStats) else path_functionals(check_path(X, self.horizon), ito=False)
            self.ata_, a_hat, info = estimate_ata(stats)
            self.projected_ = info["projected"]
        self.a_ = a_hat
        self.a_inv_ = np.linalg.inv(a_hat)
        return self

    def transform(self, X):
        check_is_fitted(self, "a_")
        if isinstance(X, SamplePath):
            states = matlin.sym(self.a_inv_.T @ X.states @ self.a_inv_)
            return SamplePath(spec=X.spec, times=X.times, states=states, meta=dict(X.meta))
        return matlin.sym(self.a_inv_.T @ np.asarray(X, float) @ self.a_inv_)

    def inverse_transform(self, X):
        check_is_fitted(self, "a_")
        if isinstance(X, SamplePath):
            states = matlin.sym(self.a_.T @ X.states @ self.a_)
            return SamplePath(spec=X.spec, times=X.times, states=states, meta=dict(X.meta))
        return matlin.sym(self.a_.T @ np.asarray(X, float) @ self.a_)


class WishartPipeline(BaseEstimator):
    """Whitening followed by the symmetric joint estimator, mapped back to ``X`` coordinates."""

    def __init__(self, a=None, horizon: float | None = None):
        self.a = a
        self.horizon = horizon

    def fit(self, X, y=None):
        path = check_path(X, self.horizon)
        self.whitener_ = DiffusionWhitener(a=self.a).fit(path_functionals(path, ito=False))
        inner = WishartDriftEstimator("joint_sym").fit(self.whitener_.transform(path))
        self.b_ = map_back(inner.b_, self.whitener_.a_)
        self.alpha_ = inner.alpha_
        self.a_ = self.whitener_.a_
        self.inner_ = inner
        return self
