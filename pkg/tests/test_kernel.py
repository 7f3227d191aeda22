import numpy as np
import pytest
import scipy.linalg

from chainllt import (Observable, PropagatorConfig, fourier_operator,
                      frozen_operator, nagaev_value, operator_product,
                      remainder_operator, transition_matrix,
                      unit_interval_operators)
from chainllt.errors import DimensionMismatch
from chainllt.kernel import expm_batch


def test_expm_batch_matches_scipy():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(5, 3, 3)) + 1j * rng.normal(size=(5, 3, 3))
    got = expm_batch(X)
    for k in range(5):
        np.testing.assert_allclose(got[k], scipy.linalg.expm(X[k]),
                                   rtol=1e-12, atol=1e-12)


class TestFourierOperator:
    def test_zero_frequency_is_semigroup(self, ref_model, ref_obs):
        M = fourier_operator(ref_model, ref_obs, [0.0], 0.2, 0.8).M
        np.testing.assert_allclose(M, scipy.linalg.expm(ref_model.G), atol=1e-9)

    def test_constant_observable_scalar_phase(self, ref_model):
        # uncentered probe: b = 2 for both states commutes with everything
        b = Observable(np.full((1, 2, 1), 2.0))
        M = fourier_operator(ref_model, b, [0.7], 0.1, 0.9).M
        want = np.exp(1j * 0.7 * 2.0) * scipy.linalg.expm(ref_model.G)
        np.testing.assert_allclose(M, want, atol=1e-9)

    def test_step_doubling_reference(self, ref_model, ref_obs):
        coarse = fourier_operator(ref_model, ref_obs, [1.0], 0.0, 0.0).M
        fine = fourier_operator(ref_model, ref_obs, [1.0], 0.0, 0.0,
                                PropagatorConfig(steps=2560)).M
        assert np.abs(coarse - fine).max() <= 1e-8

    def test_resolution_stability_at_large_t(self, ref_model, mod_obs):
        base = fourier_operator(ref_model, mod_obs, [5.0], 0.0, 1.0).M
        double = fourier_operator(ref_model, mod_obs, [5.0], 0.0, 1.0,
                                  PropagatorConfig(steps=512)).M
        assert np.abs(base - double).max() <= 1e-8

    def test_refine_check_passes(self, ref_model, mod_obs):
        cfg = PropagatorConfig(refine_check=True)
        fourier_operator(ref_model, mod_obs, [2.0], 0.0, 1.0, cfg)

    def test_conjugation_symmetry(self, ref_model, mod_obs):
        plus = fourier_operator(ref_model, mod_obs, [1.3], 0.1, 0.8).M
        minus = fourier_operator(ref_model, mod_obs, [-1.3], 0.1, 0.8).M
        assert np.abs(plus - np.conj(minus)).max() <= 1e-10

    def test_contraction_and_domination(self, ref_model, mod_obs):
        M = fourier_operator(ref_model, mod_obs, [2.0], 0.0, 1.0).M
        P1 = transition_matrix(ref_model, 1.0).P
        assert np.abs(M).sum(axis=1).max() <= 1.0 + 1e-9
        assert (np.abs(M) <= P1 + 1e-9).all()

    def test_frozen_matches_propagator_at_equal_window(self, ref_model, mod_obs):
        prop = fourier_operator(ref_model, mod_obs, [0.9], 0.4, 0.4).M
        froz = frozen_operator(ref_model, mod_obs, [0.9], 0.4).M
        assert np.abs(prop - froz).max() <= 1e-10

    def test_rk4_agrees_with_cf4(self, ref_model, mod_obs):
        cf4 = fourier_operator(ref_model, mod_obs, [1.0], 0.0, 1.0).M
        rk4 = fourier_operator(ref_model, mod_obs, [1.0], 0.0, 1.0,
                               PropagatorConfig(method="rk4")).M
        assert np.abs(cf4 - rk4).max() <= 1e-8


class TestRemainderOperator:
    def test_integer_horizon_is_identity(self, ref_model, ref_obs):
        M = remainder_operator(ref_model, ref_obs, [1.0], 10.0).M
        np.testing.assert_allclose(M, np.eye(2), atol=1e-14)

    def test_zero_frequency_fractional(self, ref_model, ref_obs):
        M = remainder_operator(ref_model, ref_obs, [0.0], 10.5).M
        np.testing.assert_allclose(M, scipy.linalg.expm(0.5 * ref_model.G), atol=1e-9)

    def test_against_high_resolution(self, ref_model, mod_obs):
        coarse = remainder_operator(ref_model, mod_obs, [1.0], 10.5).M
        fine = remainder_operator(ref_model, mod_obs, [1.0], 10.5,
                                  PropagatorConfig(steps=2560)).M
        assert np.abs(coarse - fine).max() <= 1e-8


class TestOperatorProduct:
    def test_empty_is_identity(self):
        np.testing.assert_array_equal(operator_product([], dim=3), np.eye(3))

    def test_empty_needs_dimension(self):
        with pytest.raises(DimensionMismatch):
            operator_product([])

    def test_single_factor(self, ref_model, ref_obs):
        op = fourier_operator(ref_model, ref_obs, [0.4], 0.0, 1.0)
        np.testing.assert_array_equal(operator_product([op]), op.M)

    def test_product_of_contractions_contracts(self, ref_model, mod_obs):
        ops = unit_interval_operators(ref_model, mod_obs, [0.8], 5.0)
        prod = operator_product(list(ops))
        direct = ops[0] @ ops[1] @ ops[2] @ ops[3] @ ops[4]
        np.testing.assert_allclose(prod, direct, atol=1e-14)
        assert np.abs(prod).sum(axis=1).max() <= 1.0 + 1e-9


class TestNagaevValue:
    def test_zero_frequency_constant_f(self, ref_model, ref_obs):
        for T in (5.5, 10.25, 20.0):
            for mu in (np.array([1.0, 0.0]), ref_model.nu):
                val = nagaev_value(ref_model, ref_obs, [0.0], T, np.ones(2), mu)
                assert val == pytest.approx(1.0, abs=1e-9)

    def test_zero_frequency_semigroup_oracle(self, asym_model, asym_obs):
        f = np.array([0.4, -1.0])
        mu = np.array([1.0, 0.0])
        T = 7.25
        val = nagaev_value(asym_model, asym_obs, [0.0], T, f, mu)
        want = mu @ scipy.linalg.expm(T * asym_model.G) @ f
        assert val == pytest.approx(want, abs=1e-9)

    def test_modulus_bounded_by_sup_norm(self, ref_model, mod_obs):
        mu = np.array([1.0, 0.0])
        for t in (0.5, 1.7, 3.0):
            for T in (3.5, 9.25):
                val = nagaev_value(ref_model, mod_obs, [t], T, np.ones(2), mu)
                assert abs(val) <= 1.0 + 1e-9

    def test_unit_interval_factor_count(self, ref_model, ref_obs):
        assert unit_interval_operators(ref_model, ref_obs, [0.3], 6.5).shape == (6, 2, 2)
        with pytest.raises(DimensionMismatch):
            unit_interval_operators(ref_model, ref_obs, [0.3], 0.5)


def test_matrix_csv_export(ref_model, ref_obs, tmp_path):
    op = fourier_operator(ref_model, ref_obs, [0.4], 0.0, 1.0)
    path = tmp_path / "op.csv"
    op.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[1] == "re_0,im_0,re_1,im_1"
    vals = [float(x) for x in lines[2].split(",")]
    assert vals[0] == op.M[0, 0].real and vals[1] == op.M[0, 0].imag
