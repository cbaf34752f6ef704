"""Path functionals consumed by the estimators.

Time integrals ``int f(X_s) ds`` use the trapezoid rule on the observation
grid. Stochastic integrals ``int g(X_s) dX_s`` use left-point (Ito) sums.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import matlin
from .exceptions import DegenerateDiagonal, MissingStats, NonPositiveState, ValidationError
from .sim import SamplePath

EIG_FLOOR = 1e-12


@dataclass
class PathStats:
    """Sufficient statistics of one observed path.

    Optional fields are ``None`` when they were not requested or could not be
    computed (``Qinv_T``, ``Z_T`` and ``Rinv_T`` need every state positive
    definite; see ``flags["nonpositive"]``).
    """

    T: float
    N: int
    x0: np.ndarray
    X_T: np.ndarray
    R_T: np.ndarray
    Rinv_T: np.ndarray | None = None
    Qinv_T: float | None = None
    Z_T: float | None = None
    qcov: np.ndarray | None = None
    ito_linv: np.ndarray | None = None
    op_int: np.ndarray | None = None
    flags: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.x0.shape[0]

    @property
    def Q_T(self) -> float:
        self.require("Qinv_T")
        return 1.0 / self.Qinv_T

    def require(self, *names: str):
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise MissingStats(f"path statistics lack {', '.join(missing)}")

    def congruence(self, P) -> "PathStats":
        """Statistics of the path ``P X_t P^T`` for an invertible ``P``.

        Linear statistics map exactly; the Ito and operator integrals do not
        transform by congruence and are dropped.
        """
        P = np.asarray(P, float)
        Pinv = np.linalg.inv(P)

        def cong(M):
            return matlin.sym(P @ M @ P.T)

        Rinv = None if self.Rinv_T is None else matlin.sym(Pinv.T @ self.Rinv_T @ Pinv)
        qcov = None
        if self.qcov is not None:
            qcov = np.einsum("ai,bj,ck,dl,ijkl->abcd", P, P, P, P, self.qcov, optimize=True)
        return replace(
            self,
            x0=cong(self.x0),
            X_T=cong(self.X_T),
            R_T=cong(self.R_T),
            Rinv_T=Rinv,
            Qinv_T=None if Rinv is None else float(np.trace(Rinv)),
            qcov=qcov,
            ito_linv=None,
            op_int=None,
            flags=dict(self.flags),
        )


def _floored_eigh(X: np.ndarray):
    w, V = np.linalg.eigh(X)
    top = np.abs(w[..., -1:])
    nonpos = w[..., 0] <= matlin.PSD_RTOL * top[..., 0]
    w = np.maximum(w, EIG_FLOOR * np.maximum(top, np.finfo(float).tiny))
    return w, V, nonpos


class StatsAccumulator:
    """Incremental computation of :class:`PathStats` for a batch of paths.

    Feed consecutive grid nodes with :meth:`push` as arrays of shape
    ``(B, n, d, d)`` (``B`` replications, ``n`` consecutive nodes), starting
    with the initial state, then call :meth:`finalize`.
    """

    def __init__(self, T: float, N: int, d: int, B: int, qcov: bool = True, ito: bool = True):
        self.T, self.N, self.d, self.B = float(T), int(N), int(d), int(B)
        self.dt = self.T / self.N
        self.want_qcov, self.want_ito = qcov, ito
        self.count = 0
        self.last = None
        self.last_eig = None
        self.x0 = None
        self.sum_X = np.zeros((B, d, d))
        self.sum_inv = np.zeros((B, d, d))
        self.nonpos = np.zeros(B, dtype=bool)
        self.qcov = np.zeros((B, d, d, d, d)) if qcov else None
        self.ito = np.zeros((B, d, d)) if ito else None
        self.op = np.zeros((B, d * d, d * d)) if ito else None
        self.op_ends = np.zeros((B, d * d, d * d)) if ito else None

    def push(self, X: np.ndarray):
        X = matlin.sym(np.asarray(X, float))
        if X.ndim == 3:
            X = X[:, None]
        w, V, nonpos = _floored_eigh(X)
        self.nonpos |= nonpos.any(axis=1)
        inv = (V / w[..., None, :]) @ np.swapaxes(V, -1, -2)
        self.sum_X += X.sum(axis=1)
        self.sum_inv += inv.sum(axis=1)
        if self.want_ito:
            ops = matlin.barlop_matrix(X, eig=(w, V))
            self.op += ops.sum(axis=1)
            if self.count == 0:
                self.op_ends += ops[:, 0]
            self._op_last = ops[:, -1]
        if self.count == 0:
            self.x0 = X[:, 0].copy()
            self._inv0 = inv[:, 0].copy()
        if self.last is not None:
            full = np.concatenate([self.last[:, None], X], axis=1)
            lw = np.concatenate([self.last_eig[0][:, None], w], axis=1)
            lV = np.concatenate([self.last_eig[1][:, None], V], axis=1)
        else:
            full, lw, lV = X, w, V
        dX = np.diff(full, axis=1)
        left = full[:, :-1]
        if dX.shape[1]:
            if self.want_qcov:
                self.qcov += np.einsum("bnij,bnkl->bijkl", dX, dX)
            if self.want_ito:
                self.ito += (matlin.linv_eig(lw[:, :-1], lV[:, :-1], dX) @ left).sum(axis=1)
        self.last = X[:, -1].copy()
        self.last_eig = (w[:, -1].copy(), V[:, -1].copy())
        self._inv_last = inv[:, -1]
        self.count += X.shape[1]

    def finalize(self) -> list[PathStats]:
        if self.count != self.N + 1:
            raise ValidationError(f"expected {self.N + 1} nodes, got {self.count}")
        dt = self.dt
        XT = self.last
        R = dt * (self.sum_X - 0.5 * (self.x0 + XT))
        Rinv = dt * (self.sum_inv - 0.5 * (self._inv0 + self._inv_last))
        op = None
        if self.want_ito:
            op = dt * (self.op - 0.5 * (self.op_ends + self._op_last))
        s0, ld0 = np.linalg.slogdet(self.x0)
        sT, ldT = np.linalg.slogdet(XT)
        out = []
        for r in range(self.B):
            pd = not self.nonpos[r] and s0[r] > 0 and sT[r] > 0
            out.append(PathStats(
                T=self.T, N=self.N, x0=self.x0[r], X_T=XT[r], R_T=matlin.sym(R[r]),
                Rinv_T=matlin.sym(Rinv[r]) if pd else None,
                Qinv_T=float(np.trace(Rinv[r])) if pd else None,
                Z_T=float(ldT[r] - ld0[r]) if pd else None,
                qcov=None if self.qcov is None else self.qcov[r],
                ito_linv=None if self.ito is None else self.ito[r],
                op_int=None if op is None else matlin.sym(op[r]),
                flags={"nonpositive": bool(self.nonpos[r])},
            ))
        return out


def path_functionals(path: SamplePath, qcov: bool = True, ito: bool = True,
                     require_pd: bool = False, chunk: int = 4096) -> PathStats:
    """All statistics of a single observed path.

    With ``require_pd`` a path touching the boundary of the cone raises
    :class:`NonPositiveState` instead of returning flagged, partial stats.
    """
    states = np.asarray(path.states, float)
    times = np.asarray(path.times, float)
    N = len(times) - 1
    if N < 1:
        raise ValidationError("a path needs at least two nodes")
    steps = np.diff(times)
    if not np.allclose(steps, steps[0], rtol=1e-9, atol=0):
        raise ValidationError("grid must be uniform")
    acc = StatsAccumulator(times[-1] - times[0], N, states.shape[-1], 1, qcov=qcov, ito=ito)
    for start in range(0, N + 1, chunk):
        acc.push(states[None, start:start + chunk])
    stats = acc.finalize()[0]
    stats.flags.update(path.meta if hasattr(path, "meta") else {})
    if require_pd and stats.flags["nonpositive"]:
        raise NonPositiveState("path leaves the positive definite cone")
    return stats


def estimate_ata(source) -> tuple[np.ndarray, np.ndarray, dict]:
    """Estimate ``a^T a`` from quadratic covariations and return its upper Cholesky factor.

    Diagonal: ``<X_ii>_T / (4 int X_ii)``. Off-diagonal (i, j) uses the
    covariation of ``X_ij`` with ``X_ii``; the (i, j) and (j, i) results are
    averaged. Returns ``(ata_hat, a_hat, info)``.
    """
    stats = path_functionals(source, ito=False) if isinstance(source, SamplePath) else source
    stats.require("qcov")
    R, qc = stats.R_T, stats.qcov
    d = R.shape[0]
    diagR = np.diag(R)
    if np.any(diagR <= 0):
        raise DegenerateDiagonal("int X_ii ds must be positive")
    A = np.empty((d, d))
    for i in range(d):
        A[i, i] = 0.25 * qc[i, i, i, i] / R[i, i]
    for i in range(d):
        for j in range(d):
            if i != j:
                A[i, j] = (0.5 * qc[i, j, i, i] - A[i, i] * R[i, j]) / R[i, i]
    A = matlin.sym(A)
    w, V = np.linalg.eigh(A)
    projected = bool(w[0] <= matlin.PSD_RTOL * abs(w[-1]))
    if projected:
        w = np.maximum(w, matlin.PSD_RTOL * abs(w[-1]))
        A = matlin.sym((V * w) @ V.T)
    a_hat = np.linalg.cholesky(A).T
    return A, a_hat, {"projected": projected}


def martingale_stats(stats: PathStats, b, alpha: float) -> tuple[np.ndarray, float | None]:
    """Martingale parts ``M_T`` (matrix) and ``N_T`` (scalar) at parameter ``(b, alpha)``.

    ``M_T = X_T - x - alpha T I - (b R_T + R_T b^T)`` and
    ``N_T = (Z_T - (alpha - 1 - d) Qinv_T - 2 Tr[b] T) / 2``; ``N_T`` is ``None``
    when the path statistics lack ``Z_T``.
    """
    b = np.asarray(b, float)
    d, T = stats.d, stats.T
    M = stats.X_T - stats.x0 - alpha * T * np.eye(d) - (b @ stats.R_T + stats.R_T @ b.T)
    if stats.Z_T is None or stats.Qinv_T is None:
        return M, None
    Nt = 0.5 * (stats.Z_T - (alpha - 1 - d) * stats.Qinv_T - 2.0 * np.trace(b) * T)
    return M, float(Nt)


def transform_path(path: SamplePath, a) -> SamplePath:
    """Path of ``(a^T)^{-1} X_t a^{-1}``."""
    a = np.asarray(a, float)
    a_inv = np.linalg.inv(a)
    states = matlin.sym(a_inv.T @ path.states @ a_inv)
    return SamplePath(spec=path.spec, times=path.times, states=states, meta=dict(path.meta))
