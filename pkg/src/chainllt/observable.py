"""Vector observables b(alpha, x) as per-state polynomials in alpha.

The polynomial representation is exact: centering, differentiation and the
integrals used by the path accumulator all happen at coefficient level, so
the smoothness requirements on the time argument hold by construction.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AlphaOutOfRange, DimensionMismatch

MAX_DEGREE = 16


def _check_alpha(alpha: float) -> float:
    if not 0.0 <= alpha <= 1.0:
        raise AlphaOutOfRange(f"time argument {alpha} outside [0, 1]")
    return float(alpha)


def _horner(coeffs: np.ndarray, alpha) -> np.ndarray:
    """Evaluate polynomials given by trailing coefficient axis at alpha."""
    out = np.array(coeffs[..., -1], dtype=float, copy=True)
    for k in range(coeffs.shape[-1] - 2, -1, -1):
        out = out * alpha + coeffs[..., k]
    return out


@dataclass(frozen=True)
class Observable:
    """Polynomial observable with coefficient array of shape (d, n, deg+1).

    ``coeffs[j, x, k]`` is the coefficient of alpha**k in output coordinate
    j at state x.  ``centered`` records that the nu-average vanishes for
    every alpha (a coefficient-level property).  The degree cap guards
    against accidentally huge tables; raise it explicitly if needed.
    """

    coeffs: np.ndarray
    centered: bool = False
    max_degree: int = MAX_DEGREE

    def __post_init__(self):
        c = np.ascontiguousarray(np.asarray(self.coeffs, dtype=float))
        if c.ndim != 3:
            raise DimensionMismatch(f"coefficients must be (d, n, deg+1), got {c.shape}")
        if c.shape[2] - 1 > self.max_degree:
            raise DimensionMismatch(
                f"polynomial degree {c.shape[2] - 1} exceeds cap {self.max_degree}")
        if not np.all(np.isfinite(c)):
            raise DimensionMismatch("coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def d(self) -> int:
        return self.coeffs.shape[0]

    @property
    def n(self) -> int:
        return self.coeffs.shape[1]

    @property
    def degree(self) -> int:
        return self.coeffs.shape[2] - 1

    def evaluate(self, alpha: float, x: int) -> np.ndarray:
        """Value at (alpha, x), shape (d,)."""
        _check_alpha(alpha)
        return _horner(self.coeffs[:, x, :], alpha)

    def evaluate_all(self, alpha: float) -> np.ndarray:
        """Values at alpha for every state, shape (d, n)."""
        _check_alpha(alpha)
        return _horner(self.coeffs, alpha)

    def derivative(self, alpha: float, x: int, order: int = 1) -> np.ndarray:
        """Exact alpha-derivative of order 1 or 2 at (alpha, x)."""
        if order not in (1, 2):
            raise ValueError(f"order must be 1 or 2, got {order}")
        _check_alpha(alpha)
        c = self.coeffs[:, x, :]
        for _ in range(order):
            if c.shape[-1] == 1:
                return np.zeros(self.d)
            c = c[..., 1:] * np.arange(1, c.shape[-1])
        return _horner(c, alpha)

    def antiderivative_coeffs(self) -> np.ndarray:
        """Coefficients of the alpha-antiderivative, shape (d, n, deg+2)."""
        k = np.arange(1, self.coeffs.shape[2] + 1, dtype=float)
        out = np.zeros(self.coeffs.shape[:2] + (self.coeffs.shape[2] + 1,))
        out[..., 1:] = self.coeffs / k
        return out

    def frozen(self, alpha: float) -> "Observable":
        """Degree-zero observable with the values at a fixed alpha."""
        vals = self.evaluate_all(alpha)
        return Observable(vals[:, :, None], centered=self.centered)

    def scaled(self, factor: float) -> "Observable":
        return Observable(self.coeffs * float(factor), centered=self.centered,
                          max_degree=self.max_degree)


def center(b: Observable, nu: np.ndarray) -> Observable:
    """Subtract the nu-average coefficient-wise; idempotent.

    A constant-in-state observable centers to zero.  An already centered
    observable is returned unchanged, so centering twice is exact.
    """
    nu = np.asarray(nu, dtype=float)
    if nu.shape != (b.n,):
        raise DimensionMismatch(f"measure has shape {nu.shape}, expected ({b.n},)")
    if b.centered:
        return b
    mean = np.einsum("x,jxk->jk", nu, b.coeffs)
    return Observable(b.coeffs - mean[:, None, :], centered=True,
                      max_degree=b.max_degree)


@dataclass(frozen=True)
class SpanReport:
    """Ranks of the d x n value matrix over an alpha grid."""

    alphas: tuple[float, ...]
    ranks: tuple[int, ...]
    d: int

    @property
    def spanning(self) -> bool:
        return all(r == self.d for r in self.ranks)


def span_check(b: Observable, alphas=None) -> SpanReport:
    """Report whether {b(alpha, x)}_x spans R^d on a grid of alpha values."""
    if not b.centered:
        raise DimensionMismatch("span check expects a centered observable")
    if alphas is None:
        alphas = np.linspace(0.0, 1.0, 11)
    ranks = []
    for a in alphas:
        vals = b.evaluate_all(float(a))
        sv = np.linalg.svd(vals, compute_uv=False)
        tol = max(vals.shape) * np.finfo(float).eps * (sv[0] if sv.size else 0.0)
        ranks.append(int(np.sum(sv > max(tol, 1e-12))))
    return SpanReport(alphas=tuple(float(a) for a in alphas),
                      ranks=tuple(ranks), d=b.d)
