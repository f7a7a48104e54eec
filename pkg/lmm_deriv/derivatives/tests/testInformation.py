import time
import warnings
from unittest import TestCase, main

import numpy as np

from lmm_deriv.data.Dataset import load_sleepstudy
from lmm_deriv.data.DesignMatrices import build_design
from lmm_deriv.derivatives.information import expected_info, hessian, information_matrix, vcov_full
from lmm_deriv.derivatives.scores import gradient
from lmm_deriv.derivatives.tests.finite_differences import central_jacobian
from lmm_deriv.estimation.estimator import fit, fitted_at
from lmm_deriv.exceptions import InformationInversionError
from lmm_deriv.model.ParamVector import ParamVector
from lmm_deriv.model.likelihoods import RemlLogLikelihood
from lmm_deriv.simulation.simulate import average_observed_information, random_small_problem, simulate_dataset

# Published to two decimals, hence the absolute slack on top of the relative tolerance.
GOLDEN_RTOL = 1e-3
GOLDEN_ATOL = 0.006
SLEEPSTUDY_ML_EXPECTED_VCOV = np.array(
    [
        [43.99, -1.37, 0.0, 0.0, 0.0, 0.0],
        [-1.37, 2.26, 0.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 70366.08, -2282.47, 92.56, -2058.08],
        [0.0, 0.0, -2282.47, 1838.33, -115.28, 324.96],
        [0.0, 0.0, 92.56, -115.28, 184.21, -72.21],
        [0.0, 0.0, -2058.08, 324.96, -72.21, 5957.61],
    ]
)
SLEEPSTUDY_REML_INTERCEPT_VARIANCE = 46.57
N_RANDOM_INSTANCES = 20
MONTE_CARLO_REPLICATIONS = 200
MONTE_CARLO_CLUSTERS = 200
MONTE_CARLO_CLUSTER_SIZE = 5
MONTE_CARLO_TOLERANCE = 0.05
TIME_LIMIT_SECONDS = 5.0


def _finite_difference_hessian(model) -> np.ndarray:
    design, method = model.design, model.method

    def full_gradient(x):
        return gradient(fitted_at(design, ParamVector.from_values(x, design), method))

    numeric = central_jacobian(full_gradient, model.params.values)
    return 0.5 * (numeric + numeric.T)


class testSleepstudyInformation(TestCase):
    @classmethod
    def setUpClass(cls):
        dataset, spec = load_sleepstudy()
        cls.design = build_design(dataset, spec)
        started = time.perf_counter()
        cls.ml = fit(cls.design, "ML")
        cls.ml_vcov = vcov_full(cls.ml, full=True, information="expected")
        cls.elapsed = time.perf_counter() - started
        cls.reml = fit(cls.design, "REML")

    def test_runs_within_time_limit(self):
        self.assertLess(self.elapsed, TIME_LIMIT_SECONDS)
        self.assertTrue(self.ml.converged, self.ml.message)

    def test_expected_vcov_matches_published_values(self):
        vcov = self.ml_vcov
        self.assertEqual(self.ml.names, vcov.labels)
        np.testing.assert_allclose(vcov.values, SLEEPSTUDY_ML_EXPECTED_VCOV, rtol=GOLDEN_RTOL, atol=GOLDEN_ATOL)

    def test_fixed_block_only(self):
        full = vcov_full(self.ml, full=True)
        fixed = vcov_full(self.ml, full=False)
        self.assertEqual(("(Intercept)", "Days"), fixed.labels)
        np.testing.assert_array_equal(full.values[:2, :2], fixed.values)

    def test_reml_fixed_intercept_variance(self):
        vcov = vcov_full(self.reml, full=True, information="expected")
        self.assertAlmostEqual(1.0, vcov.values[0, 0] / SLEEPSTUDY_REML_INTERCEPT_VARIANCE, delta=GOLDEN_RTOL)
        self.assertAlmostEqual(1.0, vcov_full(self.ml).values[0, 0] / 43.99, delta=GOLDEN_RTOL)

    def test_fixed_block_of_the_hessian(self):
        values = hessian(self.ml).values
        np.testing.assert_array_equal(-self.ml.terms.information_beta, values[:2, :2])
        np.testing.assert_allclose(values, values.T, rtol=0, atol=1e-10 * np.abs(values).max())

    def test_hessian_matches_finite_differences(self):
        analytic = hessian(self.ml).values
        numeric = _finite_difference_hessian(self.ml)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-7 * np.abs(analytic).max())

    def test_expected_information_structure(self):
        info = expected_info(self.ml)
        self.assertEqual("expected", info.kind)
        np.testing.assert_array_equal(np.zeros((2, 4)), info.values[:2, 2:])
        np.testing.assert_array_equal(np.zeros((4, 2)), info.values[2:, :2])
        self.assertTrue(np.linalg.eigvalsh(info.values[2:, 2:]).min() > 0)
        self.assertAlmostEqual(5957.61, np.linalg.inv(info.values[2:, 2:])[3, 3], delta=GOLDEN_RTOL * 5957.61)

    def test_observed_fixed_variances_are_not_below_expected(self):
        observed = vcov_full(self.ml, information="observed")
        self.assertEqual("observed", observed.kind)
        np.testing.assert_allclose(observed.values, observed.values.T, rtol=1e-12, atol=0)
        expected_diagonal = np.diag(vcov_full(self.ml).values)[:2]
        self.assertTrue(np.all(np.diag(observed.values)[:2] >= expected_diagonal * (1 - 1e-9)))

    def test_unknown_information_kind(self):
        with self.assertRaises(ValueError):
            information_matrix(self.ml, "sandwich")


class testInformationOracles(TestCase):
    def test_hessian_matches_finite_differences(self):
        for seed in range(N_RANDOM_INSTANCES):
            design, params = random_small_problem(seed)
            model = fitted_at(design, params)
            analytic = hessian(model).values
            numeric = _finite_difference_hessian(model)
            np.testing.assert_allclose(
                analytic, numeric, rtol=1e-4, atol=1e-7 * np.abs(analytic).max(), err_msg=f"seed {seed}"
            )

    def test_reml_variance_block_matches_finite_differences(self):
        for seed in range(N_RANDOM_INSTANCES):
            design, params = random_small_problem(seed)
            likelihood = RemlLogLikelihood(design)
            analytic = hessian(fitted_at(design, params, "REML")).values[design.p :, design.p :]
            numeric = central_jacobian(likelihood.gradient_sigma2, params.sigma2)
            np.testing.assert_allclose(
                analytic, 0.5 * (numeric + numeric.T), rtol=1e-4, atol=1e-7 * np.abs(analytic).max()
            )

    def test_expected_information_is_block_diagonal_and_positive_definite(self):
        for seed in range(N_RANDOM_INSTANCES):
            design, params = random_small_problem(seed)
            for method in ("ML", "REML"):
                info = expected_info(fitted_at(design, params, method)).values
                self.assertTrue(np.all(info[: design.p, design.p :] == 0.0))
                self.assertTrue(np.all(info[design.p :, : design.p] == 0.0))
                np.testing.assert_array_equal(info, info.T)
                self.assertTrue(np.linalg.eigvalsh(info).min() > 0)

    def test_indefinite_observed_information_is_reported(self):
        design, params = random_small_problem(4)
        exact = design.with_response(design.X @ params.beta)
        model = fitted_at(exact, params)
        with self.assertRaises(InformationInversionError) as context:
            vcov_full(model, information="observed")
        self.assertIn("expected", str(context.exception))
        vcov_full(model, information="expected")

    def test_boundary_warning(self):
        design, params = random_small_problem(6)
        sigma2 = params.sigma2.copy()
        sigma2[:-1] = 0.0
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            hessian(fitted_at(design, params.with_values(sigma2=sigma2)))
        self.assertTrue(any("boundary" in str(warning.message) for warning in caught))


class testMonteCarloInformation(TestCase):
    def test_average_observed_information_approaches_expected(self):
        dataset, spec = simulate_dataset(
            MONTE_CARLO_CLUSTERS, MONTE_CARLO_CLUSTER_SIZE, [2.0, 0.5], [[1.0]], 1.0, seed=2024
        )
        design = build_design(dataset, spec)
        params = ParamVector.from_values(np.array([2.0, 0.5, 1.0, 1.0]), design)
        expected = expected_info(fitted_at(design, params)).values
        average = average_observed_information(design, params, MONTE_CARLO_REPLICATIONS, seed=99)
        scale = np.sqrt(np.outer(np.diag(expected), np.diag(expected)))
        self.assertTrue(np.all(np.abs(average - expected) <= MONTE_CARLO_TOLERANCE * scale))


if __name__ == "__main__":
    main()
