"""Finite-state continuous-time Markov chains.

Generator validation, invariant measure, transition semigroup and the
total-variation mixing certificate.  All returned objects are immutable
(arrays are frozen) and safe to share across threads.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from .errors import NegativeRate, NonConservative, Reducible

ROW_SUM_TOL = 1e-12
STATIONARITY_TOL = 1e-10


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class GeneratorModel:
    """Validated chain generator with optional invariant measure.

    Attributes
    ----------
    labels : tuple of str
        State names, one per state.
    G : ndarray, shape (n, n)
        Rate matrix (1/time units); nonnegative off-diagonal, zero row sums.
    nu : ndarray or None
        Invariant probability vector; None until attached.
    mixing_time : float
        Time at which the total-variation contraction is certified.
    """

    labels: tuple[str, ...]
    G: np.ndarray
    nu: np.ndarray | None = None
    mixing_time: float = 1.0

    @property
    def n(self) -> int:
        return self.G.shape[0]

    def require_nu(self) -> np.ndarray:
        if self.nu is None:
            raise Reducible("model has no invariant measure attached; "
                            "call invariant_measure first")
        return self.nu

    @property
    def holding_rates(self) -> np.ndarray:
        """Exit rate per state (nonnegative)."""
        return _frozen(-np.diag(self.G))


@dataclass(frozen=True)
class TransitionMatrix:
    """Transition probabilities P(s) = exp(sG), rows are laws P(s, x, .)."""

    s: float
    P: np.ndarray


def _strongly_connected(adjacency: np.ndarray) -> bool:
    # Transitive closure by repeated boolean squaring; n is small.
    n = adjacency.shape[0]
    reach = adjacency | np.eye(n, dtype=bool)
    for _ in range(int(np.ceil(np.log2(n))) + 1 if n > 1 else 0):
        reach = reach | (reach @ reach)
    return bool(reach.all())


def validate_generator(G, labels: tuple[str, ...] | None = None) -> GeneratorModel:
    """Check that G is a conservative, irreducible rate matrix.

    Returns a model with the invariant measure left unset.  Irreducibility
    is decided on the positive-rate graph (strong connectivity), not on
    numerical rank, so tiny but genuinely positive rates still count.

    Raises
    ------
    NonConservative, NegativeRate, Reducible
    """
    G = np.asarray(G, dtype=float)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise NonConservative(f"generator must be square, got shape {G.shape}")
    n = G.shape[0]
    off = G.copy()
    np.fill_diagonal(off, 0.0)
    if np.any(off < 0.0):
        i, j = np.argwhere(off < 0.0)[0]
        raise NegativeRate(f"negative rate G[{i},{j}] = {G[i, j]}")
    row_sums = G.sum(axis=1)
    if np.any(np.abs(row_sums) > ROW_SUM_TOL * max(1.0, np.abs(G).max())):
        i = int(np.argmax(np.abs(row_sums)))
        raise NonConservative(f"row {i} of generator sums to {row_sums[i]}")
    if n > 1 and not _strongly_connected(off > 0.0):
        raise Reducible("positive-rate graph is not strongly connected")
    if labels is None:
        labels = tuple(f"s{i}" for i in range(n))
    if len(labels) != n:
        raise NonConservative(f"{len(labels)} labels for {n} states")
    return GeneratorModel(labels=tuple(labels), G=_frozen(G))


def invariant_measure(model: GeneratorModel) -> np.ndarray:
    """Solve nu G = 0, sum(nu) = 1 by a null-space solve of G^T.

    Raises ``Reducible`` if the null space is not one-dimensional or the
    solution is not strictly positive.
    """
    n = model.n
    if n == 1:
        return np.array([1.0])
    _, s, vh = np.linalg.svd(model.G.T)
    scale = max(s[0], 1.0)
    null_dim = int(np.sum(s <= 1e-10 * scale))
    if null_dim != 1:
        raise Reducible(f"null space of G^T has dimension {null_dim}")
    nu = vh[-1].real
    nu = nu / nu.sum()
    if np.any(nu <= 0.0):
        raise Reducible("invariant measure is not strictly positive")
    if np.max(np.abs(nu @ model.G)) > STATIONARITY_TOL * scale:
        raise Reducible("stationarity residual above tolerance")
    return nu


def make_model(G, labels=None, mixing_time: float = 1.0) -> GeneratorModel:
    """Validate G and attach its invariant measure in one step."""
    skeleton = validate_generator(G, labels)
    nu = invariant_measure(skeleton)
    return replace(skeleton, nu=_frozen(nu), mixing_time=float(mixing_time))


def transition_matrix(model: GeneratorModel, s: float) -> TransitionMatrix:
    """Transition matrix P(s) = exp(sG) for s >= 0."""
    if s < 0.0:
        raise ValueError(f"time must be nonnegative, got {s}")
    P = scipy.linalg.expm(s * model.G)
    return TransitionMatrix(s=float(s), P=_frozen(P))


def ergodicity_certificate(model: GeneratorModel, horizon: float) -> float:
    """Worst-case total variation distance of P(horizon, x, .) to nu.

    Returns max over starting states x of TV(P(horizon)[x, :], nu).
    A value < 1 certifies the uniform mixing assumption at this horizon.
    """
    nu = model.require_nu()
    if horizon < 0.0:
        raise ValueError(f"horizon must be nonnegative, got {horizon}")
    P = transition_matrix(model, horizon).P
    return float(0.5 * np.abs(P - nu[None, :]).sum(axis=1).max())


def dyadic_mixing_time(model: GeneratorModel, target: float = 0.5,
                       resolution: float = 2.0 ** -8,
                       max_horizon: float = 2.0 ** 20) -> float:
    """Smallest horizon on the dyadic grid with certificate <= target.

    The certificate is nonincreasing in the horizon, so a doubling sweep
    followed by bisection down to ``resolution`` is exact on the grid.
    """
    hi = resolution
    while ergodicity_certificate(model, hi) > target:
        hi *= 2.0
        if hi > max_horizon:
            raise Reducible(f"no mixing below horizon {max_horizon}")
    lo = hi / 2.0  # certificate above target here (or hi == resolution)
    if hi == resolution:
        return hi
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if ergodicity_certificate(model, mid) <= target:
            hi = mid
        else:
            lo = mid
    return hi


def rescale_generator(model: GeneratorModel, factor: int) -> GeneratorModel:
    """Rebase the unit time step: G <- factor * G.

    Used after ``rebase_sampling`` decided that ``factor`` base steps are
    needed for the one-step remainder to contract.  The invariant measure
    is unchanged.
    """
    if factor < 1 or factor != int(factor):
        raise ValueError(f"factor must be a positive integer, got {factor}")
    return replace(model, G=_frozen(model.G * float(factor)),
                   mixing_time=model.mixing_time / float(factor))
