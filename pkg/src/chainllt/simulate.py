"""Exact-path Monte Carlo for the chain and its time-modulated integrals.

Single paths are built by Gillespie sampling with inverse-CDF exponentials
from a counter-based generator, so every output is a deterministic function
of the seed.  Path integrals of polynomial observables are accumulated from
closed-form antiderivatives over the holding intervals, with no quadrature
error.  Large ensembles run through a chunked lockstep engine whose random
streams are keyed by (seed, purpose, chunk), which keeps results byte-stable
regardless of thread schedule.
"""
from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (AbsorbingState, DimensionMismatch, HorizonMismatch,
                     OdeToleranceFailure)
from .model import GeneratorModel
from .observable import Observable

ENSEMBLE_CHUNK = 32768
_MASK64 = (1 << 64) - 1


def stream_key(*parts) -> int:
    """Deterministic 64-bit subkey from strings, ints and floats."""
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        if isinstance(part, str):
            h.update(b"s" + part.encode("utf-8") + b"\x00")
        elif isinstance(part, (bool, np.bool_)):
            h.update(b"b" + bytes([int(part)]))
        elif isinstance(part, (int, np.integer)):
            h.update(b"i" + struct.pack("<q", int(part)))
        elif isinstance(part, (float, np.floating)):
            h.update(b"f" + struct.pack("<d", float(part)))
        elif isinstance(part, np.ndarray):
            h.update(b"a" + np.ascontiguousarray(part, dtype=float).tobytes())
        else:
            raise TypeError(f"cannot key stream on {type(part)!r}")
    return int.from_bytes(h.digest(), "little")


def make_stream(seed: int, subkey: int, counter_block: int = 0) -> np.random.Generator:
    """Counter-based generator for one (seed, purpose, chunk) cell."""
    key = np.array([seed & _MASK64, subkey & _MASK64], dtype=np.uint64)
    counter = np.array([0, 0, 0, counter_block & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(counter=counter, key=key))


@dataclass(frozen=True)
class PathSample:
    """Piecewise-constant chain path on [0, T].

    ``times`` holds the jump epochs (strictly increasing, all < T) and
    ``states`` the visited sequence starting at x0, one entry longer than
    ``times``.
    """

    times: np.ndarray
    states: np.ndarray
    x0: int
    T: float
    seed: int

    def pieces(self):
        """Iterate (start, end, state) over the holding intervals."""
        starts = np.concatenate(([0.0], self.times))
        ends = np.concatenate((self.times, [self.T]))
        return zip(starts, ends, self.states)


def _jump_cumulative(model: GeneratorModel) -> np.ndarray:
    """Row-wise cumulative jump distribution; absorbing rows are inert."""
    G = model.G
    n = model.n
    off = G.copy()
    np.fill_diagonal(off, 0.0)
    hold = -np.diag(G)
    cum = np.ones((n, n))
    alive = hold > 0.0
    if alive.any():
        probs = off[alive] / hold[alive, None]
        cum[alive] = np.cumsum(probs, axis=1)
        cum[alive, -1] = 1.0
    return cum


def sample_path(model: GeneratorModel, T: float, x0: int, seed: int) -> PathSample:
    """Gillespie path: exponential holding times, rate-proportional jumps."""
    if T <= 0.0:
        raise ValueError(f"horizon must be positive, got {T}")
    n = model.n
    if not 0 <= x0 < n:
        raise DimensionMismatch(f"initial state {x0} outside 0..{n - 1}")
    gen = make_stream(seed, stream_key("single-path"))
    hold = -np.diag(model.G)
    cum = _jump_cumulative(model)
    times: list[float] = []
    states: list[int] = [x0]
    t, x = 0.0, x0
    while True:
        rate = hold[x]
        if rate <= 0.0:
            if n > 1:
                raise AbsorbingState(f"state {x} has no outgoing rate")
            break
        u = gen.random()
        dt = -math.log1p(-u) / rate
        if t + dt >= T:
            break
        t += dt
        x = int(np.searchsorted(cum[x], gen.random(), side="right"))
        times.append(t)
        states.append(x)
    return PathSample(times=np.asarray(times), states=np.asarray(states, dtype=np.int64),
                      x0=int(x0), T=float(T), seed=int(seed))


def _horner_states(coeffs: np.ndarray, states: np.ndarray, arg: np.ndarray) -> np.ndarray:
    """Evaluate (d, n, K) per-state polynomials at per-entry arguments.

    states and arg share a trailing shape (R,); the result is (d, R).
    """
    table = coeffs[:, states, :]
    out = table[..., -1].copy()
    for k in range(coeffs.shape[-1] - 2, -1, -1):
        out = out * arg + table[..., k]
    return out


def integrate_S_rho(path: PathSample, b: Observable, rho: float, T: float) -> np.ndarray:
    """Shifted path integral over [0, (1 - rho) T] with argument rho + s/T.

    Exact: each holding interval contributes the antiderivative of the
    state's polynomial between its rescaled endpoints; summation is exact
    (math.fsum).  rho = 0 reproduces the plain integral bit for bit.
    """
    if not 0.0 <= rho < 1.0:
        raise ValueError(f"shift must be in [0, 1), got {rho}")
    L = (1.0 - rho) * T
    if path.T < L - 1e-9:
        raise HorizonMismatch(f"path horizon {path.T} shorter than {L}")
    keep = int(np.searchsorted(path.times, L, side="left"))
    starts = np.concatenate(([0.0], path.times[:keep]))
    ends = np.concatenate((path.times[:keep], [L]))
    states = path.states[:keep + 1]
    anti = b.antiderivative_coeffs()
    hi = _horner_states(anti, states, rho + ends / T)
    lo = _horner_states(anti, states, rho + starts / T)
    pieces = T * (hi - lo)
    return np.array([math.fsum(pieces[j]) for j in range(b.d)])


def integrate_S(path: PathSample, b: Observable, T: float) -> np.ndarray:
    """Path integral of b(s/T, X_s) over [0, T], exact per holding interval."""
    if abs(path.T - T) > 1e-9:
        raise HorizonMismatch(f"path horizon {path.T} does not match T = {T}")
    return integrate_S_rho(path, b, 0.0, T)


class PolynomialAccumulator:
    """Closed-form interval contributions for a polynomial observable."""

    def __init__(self, b: Observable, T: float, rho: float = 0.0):
        self.anti = b.antiderivative_coeffs()
        self.T = float(T)
        self.rho = float(rho)
        self.d = b.d

    def __call__(self, lo: np.ndarray, hi: np.ndarray, states: np.ndarray) -> np.ndarray:
        a_hi = self.rho + hi / self.T
        a_lo = self.rho + lo / self.T
        return self.T * (_horner_states(self.anti, states, a_hi)
                         - _horner_states(self.anti, states, a_lo))


class QuadratureAccumulator:
    """Per-interval Gauss-Legendre contributions for a smooth observable.

    Used when the effective observable is not polynomial (averaged-flow
    weights); the integrand is smooth within each holding interval, so a
    fixed low-order rule is exact to rounding at the interval lengths the
    chain produces.
    """

    def __init__(self, beff, T: float, rho: float = 0.0, order: int = 8):
        nodes, weights = np.polynomial.legendre.leggauss(order)
        self.nodes = 0.5 * (nodes + 1.0)
        self.weights = 0.5 * weights
        self.beff = beff
        self.T = float(T)
        self.rho = float(rho)
        self.d = beff.d

    def __call__(self, lo: np.ndarray, hi: np.ndarray, states: np.ndarray) -> np.ndarray:
        dt = hi - lo
        out = np.zeros((self.d, lo.shape[0]))
        for xi, w in zip(self.nodes, self.weights):
            alphas = self.rho + (lo + xi * dt) / self.T
            out += w * self.beff.batch(alphas, states)
        return out * dt[None, :]


def sample_ensemble(model: GeneratorModel, accumulator, horizon: float,
                    mu: np.ndarray, reps: int, seed: int, subkey: int,
                    chunk: int = ENSEMBLE_CHUNK):
    """Vectorized ensemble of paths with accumulated integrals.

    Returns (S, X): the (reps, d) integral samples and the (reps,) terminal
    states at the horizon.  Replicas advance in chunked lockstep; chunk c
    draws from the stream (seed, subkey, c), with a fixed chunk size, so
    outputs are reproducible and independent of scheduling.
    """
    n = model.n
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (n,):
        raise DimensionMismatch(f"initial law has shape {mu.shape}, expected ({n},)")
    hold = -np.diag(model.G)
    cum_jump = _jump_cumulative(model)
    cum_mu = np.cumsum(mu)
    cum_mu[-1] = 1.0
    d = accumulator.d
    S_out = np.empty((reps, d))
    X_out = np.empty(reps, dtype=np.int64)

    for ci, start in enumerate(range(0, reps, chunk)):
        R = min(chunk, reps - start)
        gen = make_stream(seed, subkey, ci)
        x = np.searchsorted(cum_mu, gen.random(R), side="right").clip(0, n - 1)
        clock = np.zeros(R)
        S = np.zeros((d, R))
        comp = np.zeros((d, R))
        active = np.ones(R, dtype=bool)
        while active.any():
            u1 = gen.random(R)
            u2 = gen.random(R)
            rates = hold[x]
            with np.errstate(divide="ignore"):
                dt = -np.log1p(-u1) / rates
            t_next = clock + dt
            end = np.where(active, np.minimum(t_next, horizon), clock)
            contrib = accumulator(clock, end, x)
            # Kahan-compensated accumulation keeps long horizons exact.
            y = contrib - comp
            tot = S + y
            comp = (tot - S) - y
            S = tot
            jump = active & (t_next < horizon)
            rows = cum_jump[x]
            landed = (rows <= u2[:, None]).sum(axis=1).clip(0, n - 1)
            x = np.where(jump, landed, x)
            clock = np.where(jump, t_next, np.where(active, horizon, clock))
            active = jump
        S_out[start:start + R] = S.T
        X_out[start:start + R] = x
    return S_out, X_out


@dataclass(frozen=True)
class CharFnEstimate:
    value: complex
    stderr: float
    reps: int


def char_function_mc(model: GeneratorModel, b: Observable, t, T: float, f,
                     mu, reps: int, seed: int) -> CharFnEstimate:
    """Monte Carlo estimate of E_mu[exp(i t . S_T) f(X_T)].

    Paths depend on (seed, T, mu) only, so estimates at t and -t use the
    same sample and are exact complex conjugates for real f.
    """
    if reps < 100:
        raise ValueError(f"need at least 100 replicas, got {reps}")
    t = np.atleast_1d(np.asarray(t, dtype=float))
    f = np.asarray(f, dtype=float)
    mu = np.asarray(mu, dtype=float)
    acc = PolynomialAccumulator(b, T)
    S, X = sample_ensemble(model, acc, T, mu, reps, seed,
                           stream_key("charfn", float(T), mu))
    vals = np.exp(1j * (S @ t)) * f[X]
    value = complex(vals.mean())
    var = (np.abs(vals - value) ** 2).sum() / max(reps - 1, 1)
    return CharFnEstimate(value=value, stderr=float(np.sqrt(var / reps)), reps=reps)


# ---------------------------------------------------------------------------
# Fast-slow linear dynamics
# ---------------------------------------------------------------------------

def _poly_matrix(A, d: int) -> np.ndarray:
    """Normalize a matrix polynomial to shape (deg+1, d, d)."""
    A = np.asarray(A, dtype=float)
    if A.ndim == 2:
        A = A[None, :, :]
    if A.ndim != 3 or A.shape[1:] != (d, d):
        raise DimensionMismatch(f"matrix polynomial must be (deg+1, {d}, {d})")
    return A


def _eval_poly_matrix(A: np.ndarray, s) -> np.ndarray:
    out = np.array(A[-1], copy=True)
    for k in range(A.shape[0] - 2, -1, -1):
        out = out * s + A[k]
    return out


def _eval_poly_vec(coeffs: np.ndarray, s) -> np.ndarray:
    out = np.array(coeffs[..., -1], copy=True)
    for k in range(coeffs.shape[-1] - 2, -1, -1):
        out = out * s + coeffs[..., k]
    return out


def _rk4(rhs, y0, s0: float, s1: float, max_h: float):
    """Classical fixed-step RK4 from s0 to s1 with substep cap max_h."""
    nsub = max(1, int(math.ceil(abs(s1 - s0) / max_h))) if s1 != s0 else 0
    y = y0
    if nsub == 0:
        return y
    h = (s1 - s0) / nsub
    s = s0
    for _ in range(nsub):
        k1 = rhs(s, y)
        k2 = rhs(s + 0.5 * h, y + 0.5 * h * k1)
        k3 = rhs(s + 0.5 * h, y + 0.5 * h * k2)
        k4 = rhs(s + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        s += h
    return y


class FlowWeight:
    """Fundamental-matrix weight W(alpha) = U(t) U(alpha t)^{-1}.

    Solved once on a dense alpha grid from the backward equation
    W'(alpha) = -t W A(alpha t), W(1) = I.  ``at`` refines from the nearest
    grid node with one integrator step (exact to rounding); ``batch``
    interpolates linearly for bulk ensemble use.
    """

    def __init__(self, A: np.ndarray, t_final: float, grid: int = 4096):
        self.A = A
        self.t_final = float(t_final)
        self.grid = int(grid)
        d = A.shape[1]
        h = 1.0 / self.grid
        W = np.empty((self.grid + 1, d, d))
        W[self.grid] = np.eye(d)
        rhs = lambda a, w: -self.t_final * (w @ _eval_poly_matrix(self.A, a * self.t_final))
        cur = np.eye(d)
        for i in range(self.grid, 0, -1):
            cur = _rk4(rhs, cur, i * h, (i - 1) * h, h / 4.0)
            W[i - 1] = cur
        self.W = W

    def at(self, alpha: float) -> np.ndarray:
        a = min(max(float(alpha), 0.0), 1.0)
        i = min(int(a * self.grid), self.grid)
        base = i / self.grid
        rhs = lambda s, w: -self.t_final * (w @ _eval_poly_matrix(self.A, s * self.t_final))
        return _rk4(rhs, self.W[i], base, a, 1.0 / self.grid)

    def batch(self, alphas: np.ndarray) -> np.ndarray:
        a = np.clip(alphas, 0.0, 1.0) * self.grid
        i = np.minimum(a.astype(np.int64), self.grid - 1)
        frac = (a - i)[:, None, None]
        return (1.0 - frac) * self.W[i] + frac * self.W[i + 1]


class DuhamelObservable:
    """Effective observable W(alpha) (v(alpha, x) - vbar(alpha)).

    This is the time-modulated integrand whose path integral equals the
    rescaled deviation of the randomly forced flow from the averaged flow.
    Centered by construction; exposes the same evaluation surface as
    ``Observable`` plus a vectorized ``batch`` for the ensemble engine.
    """

    def __init__(self, model: GeneratorModel, A, v: Observable, t_final: float,
                 vbar_coeffs=None, grid: int = 4096):
        nu = model.require_nu()
        if v.n != model.n:
            raise DimensionMismatch(f"forcing has {v.n} states, model has {model.n}")
        self.d = v.d
        self.n = v.n
        self.centered = True
        self.A = _poly_matrix(A, v.d)
        self.v = v
        if vbar_coeffs is None:
            vbar_coeffs = np.einsum("x,jxk->jk", nu, v.coeffs)
        self.vbar_coeffs = np.asarray(vbar_coeffs, dtype=float)
        self.t_final = float(t_final)
        self.flow = FlowWeight(self.A, t_final, grid)

    def centered_forcing(self, alpha: float) -> np.ndarray:
        return self.v.evaluate_all(alpha) - _eval_poly_vec(self.vbar_coeffs, alpha)[:, None]

    def evaluate_all(self, alpha: float) -> np.ndarray:
        return self.flow.at(alpha) @ self.centered_forcing(alpha)

    def batch(self, alphas: np.ndarray, states: np.ndarray) -> np.ndarray:
        w = self.flow.batch(alphas)
        vv = _horner_states(self.v.coeffs, states, alphas)
        vv = vv - _eval_poly_vec(self.vbar_coeffs[:, None, :], alphas)
        return np.einsum("rjk,kr->jr", w, vv)


@dataclass(frozen=True)
class FastSlowRun:
    """One realization of the randomly forced linear flow and its averaging.

    rescaled_error is (Y(t_final) - y(t_final)) / eps; duhamel is the same
    quantity recomputed through the variation-of-constants integral along
    the identical path, and duhamel_residual their sup-distance.
    """

    eps: float
    t_final: float
    A: np.ndarray
    v: Observable
    Y_eps: np.ndarray
    y_bar: np.ndarray
    rescaled_error: np.ndarray
    U: np.ndarray
    duhamel: np.ndarray
    duhamel_residual: float
    path: PathSample


def fastslow_run(model: GeneratorModel, A, v: Observable, eps: float,
                 t_final: float, y0, seed: int, vbar_coeffs=None,
                 x0: int | None = None, steps: int = 256,
                 duhamel_tol: float = 1e-6) -> FastSlowRun:
    """Integrate dY = [A(s) Y + v(s, X_{s/eps})] ds against its average.

    The forcing observable v is polynomial in the normalized slow time
    s / t_final.  Substeps are aligned to the path's jump epochs, so the
    piecewise-smooth forcing is never integrated across a discontinuity;
    the substep length is capped at max(piece/steps, 1e-4 t_final).

    Raises OdeToleranceFailure if the variation-of-constants identity is
    violated beyond duhamel_tol.
    """
    if eps <= 0.0 or t_final <= 0.0:
        raise ValueError("eps and t_final must be positive")
    d = v.d
    Apoly = _poly_matrix(A, d)
    y0 = np.asarray(y0, dtype=float).reshape(d)
    nu = model.require_nu()
    if vbar_coeffs is None:
        vbar_coeffs = np.einsum("x,jxk->jk", nu, v.coeffs)
    vbar_coeffs = np.asarray(vbar_coeffs, dtype=float)

    T_fast = t_final / eps
    if x0 is None:
        pick = make_stream(seed, stream_key("fastslow-x0")).random()
        x0 = int(np.searchsorted(np.cumsum(nu), pick, side="right").clip(0, model.n - 1))
    path = sample_path(model, T_fast, x0, seed)

    h_cap_global = 1e-4 * t_final

    def a_mat(s):
        return _eval_poly_matrix(Apoly, s)

    def vbar(s):
        return _eval_poly_vec(vbar_coeffs, s / t_final)

    # Forced flow along the path, piece by piece in slow time.
    Y = y0.copy()
    for lo_f, hi_f, x in path.pieces():
        lo, hi = lo_f * eps, hi_f * eps
        if hi <= lo:
            continue
        vx = v.coeffs[:, x, :]
        rhs = lambda s, yy: a_mat(s) @ yy + _eval_poly_vec(vx, s / t_final)
        h_cap = max((hi - lo) / steps, h_cap_global)
        Y = _rk4(rhs, Y, lo, hi, h_cap)

    # Averaged flow and fundamental matrix on the same fine resolution.
    ybar = _rk4(lambda s, yy: a_mat(s) @ yy + vbar(s), y0, 0.0, t_final, h_cap_global)
    U = _rk4(lambda s, uu: a_mat(s) @ uu, np.eye(d), 0.0, t_final, h_cap_global)
    if abs(np.linalg.det(U)) < 1e-300:
        raise OdeToleranceFailure("fundamental matrix numerically singular")

    # Variation-of-constants integral along the identical path.
    flow = FlowWeight(Apoly, t_final)
    nodes, weights = np.polynomial.legendre.leggauss(8)
    nodes = 0.5 * (nodes + 1.0)
    weights = 0.5 * weights
    total = np.zeros(d)
    seg_cap = T_fast / 64.0
    for lo_f, hi_f, x in path.pieces():
        if hi_f <= lo_f:
            continue
        nseg = max(1, int(math.ceil((hi_f - lo_f) / seg_cap)))
        bounds = np.linspace(lo_f, hi_f, nseg + 1)
        for a0, a1 in zip(bounds[:-1], bounds[1:]):
            ds = a1 - a0
            for xi, w in zip(nodes, weights):
                alpha = (a0 + xi * ds) / T_fast
                vv = _eval_poly_vec(v.coeffs[:, x, :], alpha) - _eval_poly_vec(vbar_coeffs, alpha)
                total += w * ds * (flow.at(alpha) @ vv)

    rescaled = (Y - ybar) / eps
    residual = float(np.abs(rescaled - total).max())
    if residual > duhamel_tol:
        raise OdeToleranceFailure(
            f"variation-of-constants residual {residual:.3e} above {duhamel_tol:.1e}")
    return FastSlowRun(eps=float(eps), t_final=float(t_final), A=Apoly, v=v,
                       Y_eps=Y, y_bar=ybar, rescaled_error=rescaled, U=U,
                       duhamel=total, duhamel_residual=residual, path=path)
