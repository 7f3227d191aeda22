import math

import numpy as np
import pytest

from chainllt import (DuhamelObservable, Observable, center, char_function_mc,
                      fastslow_run, integrate_S, integrate_S_rho, make_model,
                      nagaev_value, sample_ensemble, sample_path, sigma_total)
from chainllt.errors import HorizonMismatch
from chainllt.simulate import PolynomialAccumulator, stream_key


def std_normal_cdf(z):
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


def riemann_oracle(path, b, rho, T, points=1_000_000):
    """Brute-force midpoint quadrature of b(rho + s/T, X_s) on [0, (1-rho)T].

    Subdivides within each holding interval so the integrand is smooth on
    every cell; the state assignment is then exact and the midpoint error
    is O(1/points^2) per unit horizon.
    """
    L = (1.0 - rho) * T
    total = np.zeros(b.d)
    for lo, hi, x in path.pieces():
        hi = min(hi, L)
        if hi <= lo:
            continue
        n_cells = max(1, int(points * (hi - lo) / L))
        s = lo + (np.arange(n_cells) + 0.5) * ((hi - lo) / n_cells)
        for j in range(b.d):
            vals = np.polynomial.polynomial.polyval(rho + s / T, b.coeffs[j, x])
            total[j] += vals.sum() * ((hi - lo) / n_cells)
    return total


class TestSamplePath:
    def test_single_state_constant_path(self):
        m = make_model([[0.0]])
        p = sample_path(m, 5.0, 0, 1)
        assert len(p.times) == 0
        assert p.states.tolist() == [0]

    def test_path_structure(self, ref_model):
        p = sample_path(ref_model, 50.0, 0, 123)
        assert np.all(np.diff(p.times) > 0)
        assert np.all(p.times < 50.0)
        assert np.all(p.states[:-1] != p.states[1:])
        assert len(p.states) == len(p.times) + 1

    def test_mean_holding_time(self, ref_model):
        p = sample_path(ref_model, 1000.0, 0, 7)
        jumps = len(p.times)
        # holding times are exp(1): mean 1, se 1/sqrt(jumps)
        mean_hold = p.times[-1] / jumps
        assert abs(mean_hold - 1.0) <= 3.0 / math.sqrt(jumps)

    def test_occupation_fraction(self, ref_model, ref_obs):
        T = 10_000.0
        p = sample_path(ref_model, T, 0, 11)
        occupation = 0.5 * (1.0 + integrate_S(p, ref_obs, T)[0] / T)
        # asymptotic sd of the occupation fraction is 1/(2 sqrt(T)) here
        assert abs(occupation - 0.5) <= 3.0 * 0.5 / math.sqrt(T)

    def test_bit_reproducible(self, ref_model):
        p1 = sample_path(ref_model, 100.0, 1, 99)
        p2 = sample_path(ref_model, 100.0, 1, 99)
        np.testing.assert_array_equal(p1.times, p2.times)
        np.testing.assert_array_equal(p1.states, p2.states)
        p3 = sample_path(ref_model, 100.0, 1, 100)
        assert len(p3.times) != len(p1.times) or not np.array_equal(p3.times, p1.times)


class TestIntegrate:
    def test_constant_observable(self, ref_model):
        b = Observable(np.full((1, 2, 1), 0.7), centered=False)
        p = sample_path(ref_model, 31.0, 0, 5)
        assert integrate_S(p, b, 31.0)[0] == pytest.approx(0.7 * 31.0, rel=1e-12)

    def test_single_state_linear_modulation(self):
        m = make_model([[0.0]])
        b = Observable(np.array([[[0.0, 1.0]]]))  # b(alpha) = alpha
        p = sample_path(m, 8.0, 0, 1)
        assert integrate_S(p, b, 8.0)[0] == pytest.approx(4.0, rel=1e-12)

    def test_against_riemann_oracle(self, ref_model, mod_obs):
        p = sample_path(ref_model, 20.0, 0, 42)
        got = integrate_S(p, mod_obs, 20.0)
        want = riemann_oracle(p, mod_obs, 0.0, 20.0)
        assert abs(got[0] - want[0]) <= 1e-9 * max(1.0, abs(want[0]))

    def test_horizon_mismatch(self, ref_model, ref_obs):
        p = sample_path(ref_model, 5.0, 0, 1)
        with pytest.raises(HorizonMismatch):
            integrate_S(p, ref_obs, 6.0)


class TestIntegrateShifted:
    def test_zero_shift_bitwise_equal(self, ref_model, mod_obs):
        p = sample_path(ref_model, 12.0, 0, 9)
        a = integrate_S(p, mod_obs, 12.0)
        b_ = integrate_S_rho(p, mod_obs, 0.0, 12.0)
        assert a[0] == b_[0]

    def test_interval_length_bound(self, ref_model, mod_obs):
        T = 10.0
        p = sample_path(ref_model, T, 0, 3)
        for rho in (0.9, 0.99):
            val = integrate_S_rho(p, mod_obs, rho, T)
            bound = max(abs(mod_obs.evaluate_all(a)).max()
                        for a in np.linspace(0, 1, 33)) * (1 - rho) * T
            assert abs(val[0]) <= bound + 1e-12

    def test_against_riemann_oracle(self, ref_model, mod_obs):
        p = sample_path(ref_model, 20.0, 0, 8)
        got = integrate_S_rho(p, mod_obs, 0.5, 20.0)
        want = riemann_oracle(p, mod_obs, 0.5, 20.0)
        assert abs(got[0] - want[0]) <= 1e-9 * max(1.0, abs(want[0]))


class TestCharFunctionMC:
    def test_zero_frequency_exact(self, ref_model, ref_obs):
        est = char_function_mc(ref_model, ref_obs, [0.0], 6.5, np.ones(2),
                               np.array([1.0, 0.0]), 500, 21)
        assert est.value == 1.0 + 0.0j
        assert est.stderr == 0.0

    def test_matches_operator_product(self, ref_model, ref_obs):
        mu = np.array([1.0, 0.0])
        f = np.ones(2)
        est = char_function_mc(ref_model, ref_obs, [0.7], 6.5, f, mu, 100_000, 42)
        op = nagaev_value(ref_model, ref_obs, [0.7], 6.5, f, mu)
        assert abs(est.value - op) <= 4.0 * est.stderr + 1e-3

    def test_conjugation_with_matched_seeds(self, ref_model, mod_obs):
        mu = np.array([0.0, 1.0])
        f = np.array([1.0, -1.0])
        plus = char_function_mc(ref_model, mod_obs, [1.1], 4.5, f, mu, 2000, 77)
        minus = char_function_mc(ref_model, mod_obs, [-1.1], 4.5, f, mu, 2000, 77)
        assert plus.value == pytest.approx(np.conj(minus.value), abs=0.0)


class TestEnsemble:
    def test_reproducible_and_chunk_invariant_draws(self, ref_model, ref_obs):
        acc = PolynomialAccumulator(ref_obs, 10.0)
        key = stream_key("test")
        S1, X1 = sample_ensemble(ref_model, acc, 10.0, ref_model.nu, 4000, 5, key)
        S2, X2 = sample_ensemble(ref_model, acc, 10.0, ref_model.nu, 4000, 5, key)
        np.testing.assert_array_equal(S1, S2)
        np.testing.assert_array_equal(X1, X2)

    def test_clt_calibration_and_ks(self, ref_model, ref_obs):
        # frozen integral over T = 200, 1e5 replicas from nu
        T, reps = 200.0, 100_000
        acc = PolynomialAccumulator(ref_obs.frozen(0.5), T)
        S, _ = sample_ensemble(ref_model, acc, T, ref_model.nu, reps, 1234,
                               stream_key("calib"))
        cov = sigma_total(ref_model, ref_obs).cov[0, 0]
        sample_var = S[:, 0].var() / T
        assert abs(sample_var - cov) <= 0.02
        z = np.sort(S[:, 0] / math.sqrt(T * cov))
        cdf = np.array([std_normal_cdf(v) for v in z])
        ranks = np.arange(1, reps + 1) / reps
        ks = max(np.abs(cdf - ranks).max(), np.abs(cdf - ranks + 1.0 / reps).max())
        assert ks <= 0.01


class TestFastSlow:
    def test_state_independent_forcing_has_no_error(self, ref_model):
        v = Observable(np.ones((1, 2, 2)))  # v(a, x) = 1 + a for every state
        run = fastslow_run(ref_model, [[-1.0]], v, 1 / 200, 1.0, [0.0], 4)
        assert abs(run.rescaled_error[0]) <= 1e-8

    def test_zero_drift_reduces_to_path_integral(self, ref_model):
        coeffs = np.zeros((1, 2, 1))
        coeffs[0, 0, 0] = 1.0
        coeffs[0, 1, 0] = -1.0
        v = Observable(coeffs)
        vb = center(v, ref_model.nu)
        run = fastslow_run(ref_model, [[0.0]], v, 1 / 200, 1.0, [0.0], 6)
        S = integrate_S(run.path, vb, 200.0)
        assert abs(run.rescaled_error[0] - S[0]) <= 1e-8

    def test_constant_drift_scalar_exponential_oracle(self, ref_model):
        a = -1.0
        coeffs = np.zeros((1, 2, 2))
        coeffs[0, 0] = [1.0, -0.5]
        coeffs[0, 1] = [-1.0, 0.5]
        v = Observable(coeffs)
        run = fastslow_run(ref_model, [[a]], v, 1 / 100, 1.0, [0.0], 15)
        assert run.U[0, 0] == pytest.approx(math.exp(a), rel=1e-10)
        assert run.duhamel_residual <= 1e-6
        # independent fine-Riemann evaluation of the closed-form kernel
        T = 100.0
        total = 0.0
        for lo, hi, x in run.path.pieces():
            s = np.linspace(lo, hi, 201)[:-1] + (hi - lo) / 400.0
            alpha = s / T
            w = np.exp(a * (1.0 - alpha) * 1.0)
            vv = np.polynomial.polynomial.polyval(alpha, v.coeffs[0, x]) \
                - np.polynomial.polynomial.polyval(alpha, v.coeffs[0].mean(axis=0))
            total += (w * vv).sum() * (hi - lo) / 200.0
        assert run.rescaled_error[0] == pytest.approx(total, abs=5e-4)

    def test_duhamel_observable_consistency(self, ref_model):
        coeffs = np.zeros((1, 2, 2))
        coeffs[0, 0] = [1.0, 0.3]
        coeffs[0, 1] = [-1.0, -0.3]
        v = Observable(coeffs)
        beff = DuhamelObservable(ref_model, [[-0.7]], v, 1.0)
        for alpha in (0.0, 0.33, 0.77, 1.0):
            exact = beff.evaluate_all(alpha)
            batch = beff.batch(np.array([alpha, alpha]), np.array([0, 1]))
            assert abs(batch[0, 0] - exact[0, 0]) <= 1e-6
            assert abs(batch[0, 1] - exact[0, 1]) <= 1e-6
        # closed form for constant drift a: weight is exp(a (1 - alpha))
        got = beff.flow.at(0.4)[0, 0]
        assert got == pytest.approx(math.exp(-0.7 * (1.0 - 0.4)), rel=1e-10)
