"""Parameter container for a Wishart process

    dX = [alpha a^T a + b X + X b^T] dt + sqrt(X) dW a + a^T dW^T sqrt(X),  X_0 = x.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import matlin
from .exceptions import InvalidDegree, NotTransformable, ValidationError


@dataclass(frozen=True, eq=False)
class WishartSpec:
    """Parameters ``(x, alpha, b, a)`` of a d-dimensional Wishart process.

    ``a`` defaults to the identity. Arrays are copied and made read-only.
    """

    x: np.ndarray
    alpha: float
    b: np.ndarray
    a: np.ndarray | None = None
    d: int = field(init=False)

    def __post_init__(self):
        x = matlin.check_psd(self.x, "x")
        d = x.shape[0]
        if x.ndim != 2:
            raise ValidationError("x must be a single d x d matrix")
        b = np.array(self.b, dtype=float).reshape(d, d)
        a = np.eye(d) if self.a is None else np.array(self.a, dtype=float).reshape(d, d)
        alpha = float(self.alpha)
        if not np.isfinite(alpha) or alpha < d - 1:
            raise InvalidDegree(f"alpha={alpha} must be >= d-1={d - 1}")
        for name, val in (("x", x), ("b", b), ("a", a)):
            val = np.array(val, dtype=float)
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "d", d)

    # -- derived quantities -------------------------------------------------

    @property
    def ata(self) -> np.ndarray:
        return self.a.T @ self.a

    @property
    def is_canonical(self) -> bool:
        return bool(np.array_equal(self.a, np.eye(self.d)) and np.allclose(self.b, self.b.T, rtol=0, atol=1e-12))

    @property
    def is_transformable(self) -> bool:
        if abs(np.linalg.det(self.a)) < 1e-12 * max(1.0, np.abs(self.a).max()) ** self.d:
            return False
        A = self.ata
        lhs, rhs = self.b @ A, A @ self.b.T
        return bool(np.allclose(lhs, rhs, rtol=1e-9, atol=1e-10 * max(1.0, np.abs(lhs).max())))

    @property
    def is_ergodic(self) -> bool:
        return bool(np.linalg.eigvalsh(self.b + self.b.T)[-1] < 0)

    def canonical(self) -> "WishartSpec":
        """Spec of ``Y = (a^T)^{-1} X a^{-1}``, which has unit diffusion.

        Requires the transformable condition ``b a^T a = a^T a b^T``.
        """
        if not self.is_transformable:
            raise NotTransformable("b a^T a != a^T a b^T or a singular")
        at_inv = np.linalg.inv(self.a.T)
        a_inv = np.linalg.inv(self.a)
        y = matlin.sym(at_inv @ self.x @ a_inv)
        by = matlin.sym(at_inv @ self.b @ self.a.T)
        return WishartSpec(x=y, alpha=self.alpha, b=by)

    def replace(self, **changes) -> "WishartSpec":
        kw = dict(x=self.x, alpha=self.alpha, b=self.b, a=self.a)
        kw.update(changes)
        return WishartSpec(**kw)

    def to_dict(self) -> dict:
        return {"x": self.x.tolist(), "alpha": self.alpha, "b": self.b.tolist(), "a": self.a.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "WishartSpec":
        try:
            x = np.asarray(data["x"], dtype=float)
            d = x.shape[0]
            b = np.asarray(data.get("b", np.zeros((d, d))), dtype=float)
            a = data.get("a")
            return cls(x=x, alpha=float(data["alpha"]), b=b, a=None if a is None else np.asarray(a, float))
        except KeyError as exc:
            raise ValidationError(f"spec is missing field {exc}") from None
