"""Diffusion matrix of the time-modulated path integral.

The per-alpha curvature of the dominant eigenvalue at zero frequency is
computed by three independent routes: a deterministic Green-Kubo solve
(the reference), central finite differences of the eigenvalue, and a
Monte Carlo second moment.  The total covariance integrates the curvature
over the unit time-argument interval by Gauss-Legendre quadrature.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NotPositiveDefinite, SingularSystem
from .kernel import DEFAULT_CONFIG, PropagatorConfig, fourier_operator, frozen_operator
from .model import GeneratorModel, transition_matrix
from .observable import Observable
from .spectral import dominant_decomposition
from .util import parallel_map

POISSON_RESIDUAL_TOL = 1e-8


@dataclass(frozen=True)
class Corrector:
    """Solution of the one-step Poisson equation at a fixed time argument.

    g holds the expected unit-interval integral of the frozen observable
    started from each state; u solves (I - P(1)) u = g on the mean-zero
    subspace.  Both are (d, n) arrays.
    """

    alpha: float
    u: np.ndarray
    g: np.ndarray


@dataclass(frozen=True)
class McEstimate:
    """Monte Carlo matrix estimate with componentwise standard errors."""

    value: np.ndarray
    stderr: np.ndarray
    T: float
    reps: int
    seed: int


@dataclass(frozen=True)
class SigmaMatrix:
    """Covariance of the scaled path integral with its Cholesky factor.

    cov is the positive-definite d x d limit covariance, factor the lower
    triangular square root, per_alpha the quadrature nodes with the
    curvature matrices that were integrated, route the producing method.
    """

    cov: np.ndarray
    factor: np.ndarray
    per_alpha: tuple[tuple[float, np.ndarray], ...]
    route: str
    alpha_range: tuple[float, float] = (0.0, 1.0)

    @property
    def det(self) -> float:
        return float(np.prod(np.diag(self.factor)))

    @property
    def inv(self) -> np.ndarray:
        return np.linalg.inv(self.cov)


def _require_centered(b: Observable):
    if not b.centered:
        raise ValueError("variance routines expect a centered observable")


def lambda_gradient_check(model: GeneratorModel, b: Observable, alpha: float,
                          beta: float, h: float = 1e-3,
                          cfg: PropagatorConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Magnitude of the central FD gradient of the dominant eigenvalue at t = 0.

    The gradient vanishes for centered observables, so the returned values
    are pure finite-difference bias of size O(h^2).
    """
    _require_centered(b)
    if not 1e-4 <= h <= 1e-2:
        raise ValueError(f"step must be in [1e-4, 1e-2], got {h}")
    out = np.empty(b.d)
    for j in range(b.d):
        t = np.zeros(b.d)
        t[j] = h
        lam_plus = dominant_decomposition(fourier_operator(model, b, t, alpha, beta, cfg)).lam
        lam_minus = dominant_decomposition(fourier_operator(model, b, -t, alpha, beta, cfg)).lam
        out[j] = abs((lam_plus - lam_minus) / (2.0 * h))
    return out


def _bordered_solve(A: np.ndarray, nu: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve A u = rhs on the nu-mean-zero subspace.

    A annihilates constants and rhs is nu-centered; adding the rank-one
    term ones x nu makes the system nonsingular and pins nu . u = 0.
    """
    n = A.shape[0]
    bordered = A + np.outer(np.ones(n), nu)
    try:
        sol = np.linalg.solve(bordered, rhs.T).T
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"Poisson solve failed: {exc}") from exc
    residual = float(np.abs(rhs - sol @ A.T).max())
    scale = max(1.0, float(np.abs(rhs).max()))
    if residual > POISSON_RESIDUAL_TOL * scale:
        raise SingularSystem(f"Poisson residual {residual:.3e} above tolerance")
    return sol


def corrector_solve(model: GeneratorModel, b: Observable, alpha: float) -> Corrector:
    """Expected unit-interval integral g and its one-step corrector u.

    g is computed in closed form from the integrated semigroup (a block
    matrix exponential, no quadrature); u solves (I - P(1)) u = g with
    zero nu-mean.
    """
    _require_centered(b)
    nu = model.require_nu()
    n = model.n
    B = b.evaluate_all(alpha)
    block = np.zeros((2 * n, 2 * n))
    block[:n, :n] = model.G
    block[:n, n:] = np.eye(n)
    Z = scipy.linalg.expm(block)[:n, n:]  # integral of exp(sG) over one unit
    g = B @ Z.T
    P1 = transition_matrix(model, 1.0).P
    u = _bordered_solve(np.eye(n) - P1, nu, g)
    return Corrector(alpha=float(alpha), u=u, g=g)


def hessian_fd(model: GeneratorModel, b: Observable, alpha: float,
               h: float = 1e-3) -> np.ndarray:
    """Central second differences of Re lambda(t, alpha, alpha) at t = 0.

    Uses the frozen (constant-weight) kernel, so each eigenvalue is exact
    up to the dense eigensolve; the O(h^2) difference bias dominates.
    """
    _require_centered(b)
    d = b.d

    def lam(t):
        return dominant_decomposition(frozen_operator(model, b, t, alpha)).lam.real

    lam0 = lam(np.zeros(d))
    H = np.empty((d, d))
    for j in range(d):
        ej = np.zeros(d)
        ej[j] = h
        H[j, j] = (lam(ej) - 2.0 * lam0 + lam(-ej)) / h ** 2
    for i in range(d):
        for j in range(i + 1, d):
            e = np.zeros(d)
            e[i] = h
            e[j] = h
            m = np.zeros(d)
            m[i] = h
            m[j] = -h
            H[i, j] = (lam(e) - lam(m) - lam(-m) + lam(-e)) / (4.0 * h ** 2)
            H[j, i] = H[i, j]
    return H


def hessian_green_kubo(model: GeneratorModel, b: Observable, alpha: float) -> np.ndarray:
    """Exact curvature via the continuous-time Poisson equation.

    Solves G phi = -b(alpha, .) per output coordinate on the mean-zero
    subspace and returns the negated symmetrized stationary cross moment
    of b and phi.  Negative semi-definite always; definite iff the values
    span all output directions.
    """
    _require_centered(b)
    nu = model.require_nu()
    B = b.evaluate_all(alpha)
    phi = _bordered_solve(model.G, nu, -B)
    M = (B * nu[None, :]) @ phi.T
    return -(M + M.T)


def hessian_mc(model: GeneratorModel, b: Observable, alpha: float, T: float,
               reps: int, seed: int) -> McEstimate:
    """Monte Carlo curvature: minus the scaled second moment of the frozen integral.

    Paths start from the invariant measure, which removes the transient
    bias; what remains is the O(1/T) boundary effect and sampling noise.
    """
    from .simulate import PolynomialAccumulator, sample_ensemble, stream_key
    _require_centered(b)
    if T < 50 or reps < 10_000:
        raise ValueError("Monte Carlo curvature needs T >= 50 and reps >= 1e4")
    nu = model.require_nu()
    frozen = b.frozen(alpha)
    acc = PolynomialAccumulator(frozen, T)
    S, _ = sample_ensemble(model, acc, T, nu, reps, seed,
                           stream_key("hessian-mc", float(alpha), float(T)))
    outer = np.einsum("rj,rk->rjk", S, S)
    mean = outer.mean(axis=0)
    spread = outer.std(axis=0, ddof=1) / np.sqrt(reps)
    return McEstimate(value=-mean / T, stderr=spread / T, T=float(T),
                      reps=int(reps), seed=int(seed))


def gauss_legendre_nodes(points: int, lo: float, hi: float):
    x, w = np.polynomial.legendre.leggauss(points)
    half = 0.5 * (hi - lo)
    return lo + half * (x + 1.0), half * w


def sigma_total(model: GeneratorModel, b: Observable, points: int = 17,
                alpha_range: tuple[float, float] = (0.0, 1.0),
                threads: int = 1, route: str = "green-kubo") -> SigmaMatrix:
    """Integrated covariance over the time-argument window.

    Gauss-Legendre quadrature of the negated per-alpha curvature; exact
    for polynomial observables up to the configured degree cap.  Raises
    NotPositiveDefinite when the result is numerically singular, which
    signals a non-spanning observable.
    """
    lo, hi = alpha_range
    if not 0.0 <= lo < hi <= 1.0:
        raise ValueError(f"alpha range must be within [0, 1], got {alpha_range}")
    nodes, weights = gauss_legendre_nodes(points, lo, hi)
    hessians = parallel_map(lambda a: hessian_green_kubo(model, b, a), nodes, threads)
    cov = np.zeros((b.d, b.d))
    for w, H in zip(weights, hessians):
        cov -= w * H
    cov = 0.5 * (cov + cov.T)
    eigs = np.linalg.eigvalsh(cov)
    if eigs.min() < 1e-10:
        raise NotPositiveDefinite(
            f"integrated covariance has eigenvalue {eigs.min():.3e}")
    factor = np.linalg.cholesky(cov)
    return SigmaMatrix(cov=cov, factor=factor,
                       per_alpha=tuple((float(a), H) for a, H in zip(nodes, hessians)),
                       route=route, alpha_range=(float(lo), float(hi)))
