"""Exact simulation of Wishart processes and auxiliary samplers.

One transition over a step ``dt`` is a noncentral Wishart draw. With
``q = int_0^dt e^{sb} a^T a e^{sb^T} ds`` and ``m = e^{dt b} x e^{dt b^T}`` we set
``Lambda = q^{-1/2} m q^{-1/2} = M M^T`` and return

    q^{1/2} [(G + M)(G + M)^T + B B^T] q^{1/2}

where ``G`` has iid standard normal entries and ``B B^T`` is a central
Wishart(alpha - p) draw from the Bartlett construction. ``M`` is d x p, so the
construction needs ``alpha >= d - 1 + p``. When ``alpha >= 2d - 1`` we always
take ``p = d`` (zero-padding ``M``), which is exact for every starting point
and lets a whole batch of replications share one vectorised code path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import matlin
from .exceptions import InvalidDegree, RankConditionViolated, ValidationError
from .laplace import stationary_covariance
from .model import WishartSpec


@dataclass(frozen=True)
class RngStream:
    """Reproducible random stream identified by ``(seed, stream_id)``."""

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream_id),))
        return np.random.Generator(np.random.PCG64(ss))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


@dataclass
class SamplePath:
    spec: WishartSpec
    times: np.ndarray
    states: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def N(self) -> int:
        return len(self.times) - 1

    @property
    def d(self) -> int:
        return self.states.shape[-1]


# ---------------------------------------------------------------------------
# transition kernel


def _n_normals(d: int) -> int:
    return d * d + d * (d - 1) // 2


def _bartlett(normals_low: np.ndarray, chi2: np.ndarray, d: int) -> np.ndarray:
    """Lower-triangular Bartlett factors from strict-lower normals and chi^2 diagonals."""
    shape = chi2.shape[:-1]
    L = np.zeros(shape + (d, d))
    rows, cols = np.tril_indices(d, -1)
    L[..., rows, cols] = normals_low
    idx = np.arange(d)
    L[..., idx, idx] = np.sqrt(chi2)
    return L


def bartlett_shapes(dof: float, d: int) -> np.ndarray:
    """Gamma shapes ``(dof - i + 1)/2``, i = 1..d, of the Bartlett diagonals."""
    return np.maximum((dof - np.arange(d)) / 2.0, 0.0)


class TransitionKernel:
    """Exact one-step sampler of ``X_{t+dt}`` given ``X_t`` for a fixed ``(spec, dt)``."""

    def __init__(self, spec: WishartSpec, dt: float):
        if dt <= 0:
            raise ValidationError("dt must be positive")
        self.spec = spec
        self.dt = float(dt)
        d = spec.d
        self.d = d
        self.alpha = spec.alpha
        self.E = matlin.expm(dt * spec.b)
        self.q = matlin.integrated_covariance(spec.b, spec.ata, dt)
        w, V = np.linalg.eigh(self.q)
        if w[0] <= 0:
            raise ValidationError("degenerate diffusion: a must be invertible for exact sampling")
        self.q_half = (V * np.sqrt(w)) @ V.T
        self.q_half_inv = (V / np.sqrt(w)) @ V.T
        # p = d padding is exact for any start when alpha - d >= d - 1
        self.padded = spec.alpha >= 2 * d - 1
        self.shapes = bartlett_shapes(spec.alpha - d, d)
        self.n_normals = _n_normals(d)

    def _noncentrality(self, x0: np.ndarray) -> np.ndarray:
        m = self.E @ x0 @ self.E.T
        return matlin.sym(self.q_half_inv @ m @ self.q_half_inv)

    def apply(self, x0: np.ndarray, normals: np.ndarray, gammas: np.ndarray) -> np.ndarray:
        """Vectorised padded transition for a stack ``x0`` of shape ``(B, d, d)``.

        ``normals`` has shape ``(B, d*d + d(d-1)/2)`` and ``gammas`` holds
        standard gamma draws with shapes :attr:`shapes`.
        """
        d = self.d
        lam = self._noncentrality(x0)
        w, V = np.linalg.eigh(lam)
        M = (V * np.sqrt(np.clip(w, 0.0, None))[..., None, :]) @ np.swapaxes(V, -1, -2)
        G = normals[..., : d * d].reshape(normals.shape[:-1] + (d, d)) + M
        L = _bartlett(normals[..., d * d:], 2.0 * gammas, d)
        Y = G @ np.swapaxes(G, -1, -2) + L @ np.swapaxes(L, -1, -2)
        return matlin.sym(self.q_half @ Y @ self.q_half)

    def sample_one(self, x0: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Single draw honouring the rank condition ``alpha >= d - 1 + rank(x0)``."""
        d = self.d
        if self.padded:
            normals = rng.standard_normal(self.n_normals)
            gammas = rng.standard_gamma(self.shapes)
            return self.apply(x0[None], normals[None], gammas[None])[0]
        lam = self._noncentrality(x0)
        w, V = np.linalg.eigh(lam)
        tol = matlin.PSD_RTOL * max(abs(w[-1]), 0.0)
        keep = w > tol
        p = int(keep.sum())
        if self.alpha < d - 1 + p:
            raise RankConditionViolated(f"alpha={self.alpha} < d-1+rank={d - 1 + p}")
        M = V[:, keep] * np.sqrt(w[keep])
        G = rng.standard_normal((d, p)) + M
        low = rng.standard_normal(d * (d - 1) // 2)
        chi2 = 2.0 * rng.standard_gamma(bartlett_shapes(self.alpha - p, d))
        L = _bartlett(low, chi2, d)
        Y = G @ G.T + L @ L.T
        return matlin.sym(self.q_half @ Y @ self.q_half)


def transition_sample(spec: WishartSpec, x0, dt: float, rng) -> np.ndarray:
    """Exact draw of ``X_dt`` started from ``x0``.

    Raises :class:`RankConditionViolated` when ``alpha < d - 1 + rank(x0)``
    and ``alpha < 2d - 1``; callers then fall back to :func:`euler_step`.
    """
    x0 = matlin.check_psd(x0, "x0")
    return TransitionKernel(spec, dt).sample_one(x0, as_generator(rng))


def euler_step(spec: WishartSpec, x0, dt: float, rng) -> np.ndarray:
    """One Euler-Maruyama step followed by projection onto the PSD cone."""
    rng = as_generator(rng)
    x0 = matlin.sym(np.asarray(x0, float))
    d = spec.d
    dW = rng.standard_normal((d, d)) * np.sqrt(dt)
    root = matlin.sym_matfun(x0, "sqrt")
    noise = root @ dW @ spec.a
    drift = spec.alpha * spec.ata + spec.b @ x0 + x0 @ spec.b.T
    X = matlin.sym(x0 + drift * dt + noise + noise.T)
    w, V = np.linalg.eigh(X)
    return (V * np.clip(w, 0.0, None)) @ V.T


# ---------------------------------------------------------------------------
# paths


class BatchSimulator:
    """Step a batch of independent replications forward on a uniform grid.

    Each replication draws from its own generator, so a replication's path
    does not depend on which other replications share the batch. Iterating
    yields the ``(B, d, d)`` stack of states at every grid node, starting with
    the initial state.
    """

    def __init__(self, spec: WishartSpec, T: float, N: int, streams, chunk: int = 256,
                 x0: np.ndarray | None = None):
        if N < 1 or T <= 0:
            raise ValidationError("need N >= 1 and T > 0")
        self.spec = spec
        self.T = float(T)
        self.N = int(N)
        self.dt = self.T / self.N
        self.gens = [as_generator(s) for s in streams]
        self.B = len(self.gens)
        self.kernel = TransitionKernel(spec, self.dt)
        self.chunk = int(chunk)
        self.fallbacks = np.zeros(self.B, dtype=int)
        if x0 is None:
            x0 = np.broadcast_to(spec.x, (self.B, spec.d, spec.d))
        self.x0 = np.array(x0, dtype=float)

    def _refill(self, k: int):
        n = min(self.chunk, self.N - k)
        kern = self.kernel
        self._normals = np.stack([g.standard_normal((n, kern.n_normals)) for g in self.gens], axis=1)
        self._gammas = np.stack([g.standard_gamma(kern.shapes, size=(n, self.spec.d)) for g in self.gens], axis=1)
        self._pos = 0

    def _slow_step(self, X: np.ndarray) -> np.ndarray:
        out = np.empty_like(X)
        for r, g in enumerate(self.gens):
            try:
                out[r] = self.kernel.sample_one(X[r], g)
            except RankConditionViolated:
                self.fallbacks[r] += 1
                out[r] = euler_step(self.spec, X[r], self.dt, g)
        return out

    def __iter__(self):
        X = self.x0.copy()
        yield X
        for k in range(self.N):
            if self.kernel.padded:
                if k % self.chunk == 0:
                    self._refill(k)
                X = self.kernel.apply(X, self._normals[self._pos], self._gammas[self._pos])
                self._pos += 1
            else:
                X = self._slow_step(X)
            yield X


def path_sample(spec: WishartSpec, T: float, N: int, rng) -> SamplePath:
    """Exact path on the grid ``t_i = i T / N``.

    Steps whose rank condition fails are taken with :func:`euler_step`; their
    count is stored in ``meta["euler_fallbacks"]``.
    """
    sim = BatchSimulator(spec, T, N, [rng])
    states = np.stack([X[0] for X in sim])
    states[0] = spec.x
    times = np.linspace(0.0, float(T), int(N) + 1)
    return SamplePath(spec=spec, times=times, states=states,
                      meta={"euler_fallbacks": int(sim.fallbacks[0])})


# ---------------------------------------------------------------------------
# stationary and limit-law helpers


def central_wishart_sample(dof: float, Sigma, rng, size: int | None = None) -> np.ndarray:
    """Central Wishart(dof, Sigma) draws by the Bartlett construction (dof > d - 1)."""
    rng = as_generator(rng)
    Sigma = matlin.check_psd(Sigma, "Sigma")
    d = Sigma.shape[0]
    if dof < d - 1:
        raise InvalidDegree(f"degree {dof} < d-1")
    n = 1 if size is None else int(size)
    low = rng.standard_normal((n, d * (d - 1) // 2))
    chi2 = 2.0 * rng.standard_gamma(bartlett_shapes(dof, d), size=(n, d))
    L = matlin.sym_matfun(Sigma, "sqrt") @ _bartlett(low, chi2, d)
    W = matlin.sym(L @ np.swapaxes(L, -1, -2))
    return W[0] if size is None else W


def stationary_sample(alpha: float, b, rng, size: int | None = None) -> np.ndarray:
    """Draws from the stationary law: central Wishart(alpha, q_inf)."""
    return central_wishart_sample(alpha, stationary_covariance(b), rng, size)


def wishart0_joint_sample(alpha: float, d: int, n_inner: int, rng,
                          size: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Sample ``(X_1, int_0^1 X ds)`` for the process started at 0 with ``b = 0``.

    The time integral uses the trapezoid rule over ``n_inner`` exact steps.
    """
    rng = as_generator(rng)
    spec = WishartSpec(x=np.zeros((d, d)), alpha=alpha, b=np.zeros((d, d)))
    n = 1 if size is None else int(size)
    kern = TransitionKernel(spec, 1.0 / n_inner)
    X = np.zeros((n, d, d))
    R = np.zeros((n, d, d))
    for _ in range(int(n_inner)):
        if kern.padded:
            normals = rng.standard_normal((n, kern.n_normals))
            gammas = rng.standard_gamma(kern.shapes, size=(n, d))
            Xn = kern.apply(X, normals, gammas)
        else:
            Xn = np.empty_like(X)
            for r in range(n):
                try:
                    Xn[r] = kern.sample_one(X[r], rng)
                except RankConditionViolated:
                    Xn[r] = euler_step(spec, X[r], kern.dt, rng)
        R += 0.5 * kern.dt * (X + Xn)
        X = Xn
    if size is None:
        return X[0], R[0]
    return X, R


def tau_sample(a: float, rng, size: int | None = None):
    """Brownian first-passage time to level ``a > 0``, drawn as ``a^2 / Z^2``."""
    if not a > 0:
        raise ValidationError("level a must be positive")
    rng = as_generator(rng)
    z = rng.standard_normal(size)
    return a * a / (z * z)


def matrix_gaussian_sample(kind: str, d: int, rng, C=None, size: int | None = None) -> np.ndarray:
    """Gaussian matrices.

    ``kind="iid"`` gives d x d iid standard normals. ``kind="cov"`` gives the
    symmetric Gaussian ``C~ G + G^T C~^T`` with ``C~ C~^T = C``, whose
    covariance tensor is ``d_ik C_jl + d_il C_jk + d_jk C_il + d_jl C_ik``.
    """
    rng = as_generator(rng)
    shape = (d, d) if size is None else (int(size), d, d)
    G = rng.standard_normal(shape)
    if kind == "iid":
        return G
    if kind != "cov":
        raise ValidationError(f"unknown kind {kind!r}")
    C = matlin.check_psd(C, "C")
    Ct = matlin.sym_matfun(C, "sqrt")
    H = Ct @ G
    return H + np.swapaxes(H, -1, -2)
