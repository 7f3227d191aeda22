"""Dominant eigenstructure of the twisted operators.

Realizes the rank-one-plus-remainder decomposition M = lambda (v x phi) + N
by direct dense eigensolving, the spectral-radius scan that operationalizes
the non-arithmetic condition, and the residual bookkeeping for ordered
operator products.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GapTooSmall, NonConvergence
from .kernel import (DEFAULT_CONFIG, FourierOperator, PropagatorConfig,
                     frozen_operator, unit_interval_operators)
from .model import GeneratorModel, ergodicity_certificate
from .observable import Observable
from .util import parallel_map

GAP_TOL = 1e-3
EIG_MATCH_TOL = 1e-8


@dataclass(frozen=True)
class SpectralDecomposition:
    """Dominant eigentriple and remainder of a twisted operator.

    lam is the strictly largest-modulus eigenvalue, v the right eigenvector
    with sup-norm one, phi the left eigenvector normalized so <phi, v> = 1
    (bilinear pairing, no conjugation), and N = M (I - v x phi) the
    remainder whose spectral radius sits strictly below |lam|.
    """

    lam: complex
    v: np.ndarray
    phi: np.ndarray
    N: np.ndarray
    gap: float
    residual: float

    def projector_complement(self) -> np.ndarray:
        return np.eye(self.v.shape[0], dtype=complex) - np.outer(self.v, self.phi)


def _as_matrix(M) -> np.ndarray:
    if isinstance(M, FourierOperator):
        return M.M
    return np.asarray(M, dtype=complex)


def spectral_radius(M) -> float:
    """Largest eigenvalue modulus of a square matrix."""
    A = _as_matrix(M)
    try:
        w = np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:
        raise NonConvergence(f"eigenvalue solve failed: {exc}") from exc
    return float(np.abs(w).max()) if w.size else 0.0


def dominant_decomposition(M) -> SpectralDecomposition:
    """Split M into its dominant rank-one part and the remainder.

    Raises GapTooSmall when the two largest eigenvalue moduli are within
    relative 1e-3 of each other, which signals a frequency outside the
    perturbative neighborhood.
    """
    A = _as_matrix(M)
    n = A.shape[0]
    try:
        w, V = np.linalg.eig(A)
    except np.linalg.LinAlgError as exc:
        raise NonConvergence(f"eigenvalue solve failed: {exc}") from exc
    order = np.argsort(-np.abs(w))
    lam = w[order[0]]
    if n > 1:
        gap_rel = (np.abs(lam) - np.abs(w[order[1]])) / max(np.abs(lam), 1e-300)
        if gap_rel < GAP_TOL:
            raise GapTooSmall(
                f"relative eigenvalue gap {gap_rel:.2e} below {GAP_TOL:.0e}")
    v = V[:, order[0]]
    v = v / v[np.argmax(np.abs(v))]

    wl, Vl = np.linalg.eig(A.T)
    j = int(np.argmin(np.abs(wl - lam)))
    if np.abs(wl[j] - lam) > EIG_MATCH_TOL * max(1.0, np.abs(lam)):
        raise NonConvergence("left and right eigenvalues could not be paired")
    phi = Vl[:, j]
    pairing = phi @ v
    if np.abs(pairing) < 1e-12:
        raise NonConvergence("defective dominant eigenvalue: <phi, v> ~ 0")
    phi = phi / pairing

    N = A @ (np.eye(n, dtype=complex) - np.outer(v, phi))
    return SpectralDecomposition(
        lam=complex(lam), v=v, phi=phi, N=N,
        gap=float(np.abs(lam) - spectral_radius(N)),
        residual=float(np.abs(A @ v - lam * v).max()))


def dominant_eigenvalues(ops: np.ndarray) -> np.ndarray:
    """Dominant eigenvalue of each matrix in a (K, n, n) stack.

    Gap-checked like ``dominant_decomposition``; used for eigenvalue
    products where the eigenvectors are not needed.
    """
    w = np.linalg.eigvals(ops)
    mods = np.abs(w)
    order = np.argsort(-mods, axis=1)
    top = np.take_along_axis(w, order[:, :1], axis=1)[:, 0]
    if ops.shape[1] > 1:
        second = np.take_along_axis(mods, order[:, 1:2], axis=1)[:, 0]
        rel = (np.abs(top) - second) / np.maximum(np.abs(top), 1e-300)
        if np.any(rel < GAP_TOL):
            k = int(np.argmin(rel))
            raise GapTooSmall(f"factor {k}: relative gap {rel[k]:.2e} below {GAP_TOL:.0e}")
    return top


def rebase_sampling(model: GeneratorModel, target_norm: float) -> int:
    """Smallest step multiple m with remainder norm 2 TV(m) <= target_norm.

    The sup-operator norm of the centered m-step kernel equals twice the
    worst-case total variation distance to the invariant measure, and is
    nonincreasing in m, so a doubling sweep plus bisection is exact.
    """
    if not 0.0 < target_norm < 1.0:
        raise ValueError(f"target norm must be in (0, 1), got {target_norm}")

    def norm_at(m: int) -> float:
        return 2.0 * ergodicity_certificate(model, float(m))

    if norm_at(1) <= target_norm:
        return 1
    hi = 2
    while norm_at(hi) > target_norm:
        hi *= 2
        if hi > 2 ** 30:
            raise NonConvergence("mixing too slow for any practical step multiple")
    lo = hi // 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if norm_at(mid) <= target_norm:
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True)
class ScanRow:
    t: tuple[float, ...]
    alpha: float
    radius: float


@dataclass(frozen=True)
class ScanReport:
    """Spectral radii of the frozen kernels over a (t, alpha) grid."""

    rows: tuple[ScanRow, ...]
    tol: float
    verdict: str
    sanity_ok: bool

    @property
    def passed(self) -> bool:
        return self.verdict == "PASS"

    def max_radius_nonzero(self) -> float:
        vals = [r.radius for r in self.rows if any(c != 0.0 for c in r.t)]
        return max(vals) if vals else float("nan")


def nonarithmetic_scan(model: GeneratorModel, b: Observable, t_grid,
                       alpha_grid=None, tol: float = 1e-6,
                       threads: int = 1) -> ScanReport:
    """Scan r(Q(t, alpha, alpha)) over nonzero frequencies.

    PASS means every nonzero-frequency radius stays below 1 - tol; the
    t = 0 rows are sanity entries where the radius must equal one.  A
    finite grid is evidence on the scanned compact set, not a proof for
    all frequencies.
    """
    if not b.centered:
        raise ValueError("scan expects a centered observable")
    if alpha_grid is None:
        alpha_grid = np.linspace(0.0, 1.0, 33)
    t_list = [np.zeros(b.d)] + [np.atleast_1d(np.asarray(t, dtype=float))
                                for t in t_grid]

    def radius(cell):
        t, a = cell
        return spectral_radius(frozen_operator(model, b, t, a))

    cells = [(t, float(a)) for t in t_list for a in alpha_grid]
    radii = parallel_map(radius, cells, threads)
    rows = tuple(ScanRow(t=tuple(t.tolist()), alpha=a, radius=float(r))
                 for (t, a), r in zip(cells, radii))
    zero_rows = [r for r in rows if all(c == 0.0 for c in r.t)]
    nonzero = [r for r in rows if any(c != 0.0 for c in r.t)]
    sanity_ok = all(abs(r.radius - 1.0) <= 1e-8 for r in zero_rows)
    passed = bool(nonzero) and all(r.radius < 1.0 - tol for r in nonzero)
    return ScanReport(rows=rows, tol=tol,
                      verdict="PASS" if (passed and sanity_ok) else "FAIL",
                      sanity_ok=sanity_ok)


@dataclass(frozen=True)
class ResidualRecord:
    """Deviation of an ordered product from its rank-one leading term.

    p is the size of the deviation component along the first window's
    dominant eigenvector, q the size of the complement, both relative to
    the sup-norm of the test vector and normalized by the eigenvalue
    product.
    """

    p: float
    q: float
    T: float
    t: tuple[float, ...]


def product_residual(model: GeneratorModel, b: Observable, t, T: float, f,
                     cfg: PropagatorConfig = DEFAULT_CONFIG) -> ResidualRecord:
    """Compare the full window product applied to f with the leading term.

    The leading term multiplies the per-window dominant eigenvalues, the
    chained <phi_k, v_{k+1}> overlaps, the opening pairing <phi_last, f>
    and the closing eigenvector v_first.  Both residual magnitudes decay
    like 1/T in the perturbative regime.
    """
    f = np.asarray(f, dtype=complex)
    fnorm = float(np.abs(f).max())
    if fnorm == 0.0:
        raise ValueError("test vector must be nonzero")
    ops = unit_interval_operators(model, b, t, T, cfg)
    K = ops.shape[0]
    decs = [dominant_decomposition(ops[k]) for k in range(K)]

    w = f.copy()
    for k in range(K - 1, -1, -1):
        w = ops[k] @ w

    lam_prod = complex(1.0)
    for d in decs:
        lam_prod *= d.lam
    overlap = complex(1.0)
    for k in range(K - 1):
        overlap *= decs[k].phi @ decs[k + 1].v
    lead = lam_prod * overlap * (decs[-1].phi @ f) * decs[0].v

    dev = (w - lead) / lam_prod
    along = decs[0].phi @ dev
    perp = dev - along * decs[0].v
    return ResidualRecord(p=float(np.abs(along)) / fnorm,
                          q=float(np.abs(perp).max()) / fnorm,
                          T=float(T),
                          t=tuple(np.atleast_1d(np.asarray(t, float)).tolist()))
