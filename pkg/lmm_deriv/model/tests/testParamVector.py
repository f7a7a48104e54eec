from unittest import TestCase, main

import numpy as np

from lmm_deriv.data.Dataset import load_sleepstudy
from lmm_deriv.data.DesignMatrices import build_design
from lmm_deriv.derivatives.tests.finite_differences import central_jacobian
from lmm_deriv.exceptions import NegativeVarianceError
from lmm_deriv.model.ParamVector import (
    ParamVector,
    ThetaMap,
    design_parameter_names,
    internal_jacobian,
    sigma2_to_theta,
    theta_to_sigma2,
)

A, B, C = 1.3, -0.4, 0.7
SLEEPSTUDY_NAMES = (
    "(Intercept)",
    "Days",
    "cov_Subject.(Intercept)",
    "cov_Subject.Days.(Intercept)",
    "cov_Subject.Days",
    "residual",
)
# Variance components of the maximum-likelihood sleepstudy fit (intercept/slope SDs 23.780 and 5.717, correlation
# 0.081, residual SD 25.592).
SLEEPSTUDY_ML_SIGMA2 = np.array([565.48, 11.01, 32.68, 654.94])


class testThetaToSigma2(TestCase):
    def test_identity_factor(self):
        np.testing.assert_array_equal([2.0, 0.0, 2.0, 2.0], theta_to_sigma2(ThetaMap.identity(2), 2.0))

    def test_cholesky_algebra(self):
        theta = ThetaMap.from_lambda(np.array([[A, 0.0], [B, C]]))
        np.testing.assert_allclose([A**2, A * B, B**2 + C**2, 1.0], theta_to_sigma2(theta, 1.0), rtol=1e-15)

    def test_theta_sits_where_sigma2_sits(self):
        theta = ThetaMap(np.array([A, B, C]), 2)
        np.testing.assert_array_equal([[A, 0.0], [B, C]], theta.Lambda)
        self.assertEqual([0, 2], theta.diagonal_indices)

    def test_accepts_plain_arrays(self):
        np.testing.assert_allclose([4.5, 2.0], theta_to_sigma2(np.array([1.5]), 2.0))


class testSigma2ToTheta(TestCase):
    def test_round_trip(self):
        theta, resid_var = sigma2_to_theta(SLEEPSTUDY_ML_SIGMA2)
        self.assertEqual(SLEEPSTUDY_ML_SIGMA2[-1], resid_var)
        self.assertTrue(np.all(theta.theta[theta.diagonal_indices] >= 0))
        np.testing.assert_allclose(SLEEPSTUDY_ML_SIGMA2, theta_to_sigma2(theta, resid_var), rtol=1e-12)

    def test_singular_block_gives_zero_column(self):
        sigma2 = np.array([2.0, 2.0, 2.0, 1.0])
        theta, resid_var = sigma2_to_theta(sigma2)
        self.assertEqual(0.0, theta.Lambda[1, 1])
        np.testing.assert_allclose(sigma2, theta_to_sigma2(theta, resid_var), rtol=1e-12)

    def test_zero_block(self):
        theta, _ = sigma2_to_theta(np.array([0.0, 3.0]))
        np.testing.assert_array_equal([0.0], theta.theta)

    def test_indefinite_block_is_rejected(self):
        with self.assertRaises(NegativeVarianceError):
            sigma2_to_theta(np.array([1.0, 2.0, 1.0, 1.0]))
        with self.assertRaises(NegativeVarianceError):
            sigma2_to_theta(np.array([1.0, 0.0]))


class testInternalJacobian(TestCase):
    def test_matches_finite_differences(self):
        for omega in [np.array([1.1, -0.3, 0.6, np.log(2.0)]), np.array([0.4, 0.2]), np.array([0.0, 0.5, 1.0, 0.0])]:
            numeric = central_jacobian(lambda w: theta_to_sigma2(w[:-1], np.exp(w[-1])), omega)
            np.testing.assert_allclose(internal_jacobian(omega), numeric, rtol=1e-7, atol=1e-9)


class testParamVector(TestCase):
    def setUp(self):
        dataset, spec = load_sleepstudy()
        self.design = build_design(dataset, spec)

    def test_sleepstudy_names(self):
        self.assertEqual(SLEEPSTUDY_NAMES, design_parameter_names(self.design))

    def test_from_values(self):
        params = ParamVector.from_values(np.r_[251.4, 10.47, SLEEPSTUDY_ML_SIGMA2], self.design)
        self.assertEqual(2, params.p)
        self.assertEqual(4, params.K)
        self.assertEqual(2, params.q_c)
        self.assertEqual([0, 2], params.variance_indices)
        np.testing.assert_array_equal([[565.48, 11.01], [11.01, 32.68]], params.covariance_block())
        self.assertTrue(params.is_valid())

    def test_indefinite_block_is_invalid(self):
        params = ParamVector.from_values(np.array([0.0, 0.0, 1.0, 2.0, 1.0, 1.0]), self.design)
        self.assertFalse(params.is_valid())

    def test_wrong_length(self):
        with self.assertRaises(AssertionError):
            ParamVector(beta=np.zeros(2), sigma2=np.ones(3), names=SLEEPSTUDY_NAMES[:5])


if __name__ == "__main__":
    main()
