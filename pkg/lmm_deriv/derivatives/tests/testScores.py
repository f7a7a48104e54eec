from unittest import TestCase, main

import numpy as np

from lmm_deriv.data.Dataset import load_sleepstudy
from lmm_deriv.data.DesignMatrices import build_design
from lmm_deriv.derivatives.scores import gradient, score_matrix
from lmm_deriv.derivatives.tests.finite_differences import central_gradient
from lmm_deriv.estimation.estimator import fit, fitted_at
from lmm_deriv.model.ParamVector import ParamVector
from lmm_deriv.model.likelihoods import RemlLogLikelihood, cluster_loglik, gls_beta, loglik_ml
from lmm_deriv.simulation.simulate import random_small_problem

N_RANDOM_INSTANCES = 20
OPTIMUM_COLUMN_SUM_TOLERANCE = 1e-4
LEVEL_SUM_TOLERANCE = 1e-10


class testSleepstudyScores(TestCase):
    @classmethod
    def setUpClass(cls):
        dataset, spec = load_sleepstudy()
        cls.model = fit(build_design(dataset, spec), "ML")

    def test_casewise_shape_and_column_sums(self):
        casewise = score_matrix(self.model, level=1)
        self.assertEqual((180, 6), casewise.values.shape)
        self.assertEqual(self.model.names, casewise.column_labels)
        self.assertEqual(1, casewise.row_labels[0])
        self.assertTrue(np.all(np.abs(casewise.column_sums) <= OPTIMUM_COLUMN_SUM_TOLERANCE))

    def test_clusterwise_rows_are_subjects(self):
        clusterwise = score_matrix(self.model)
        self.assertEqual((18, 6), clusterwise.values.shape)
        self.assertEqual(2, clusterwise.level)
        self.assertEqual(self.model.design.cluster_labels, clusterwise.row_labels)
        self.assertEqual(["308", "309", "310"], list(clusterwise.to_frame().index[:3]))

    def test_levels_share_column_sums(self):
        np.testing.assert_allclose(
            score_matrix(self.model, 1).column_sums,
            score_matrix(self.model, 2).column_sums,
            rtol=0,
            atol=LEVEL_SUM_TOLERANCE,
        )

    def test_gradient_is_small_at_the_optimum(self):
        self.assertTrue(np.max(np.abs(gradient(self.model))) < OPTIMUM_COLUMN_SUM_TOLERANCE)

    def test_invalid_level(self):
        with self.assertRaises(ValueError):
            score_matrix(self.model, level=3)


class testScoreOracles(TestCase):
    def test_clusterwise_rows_match_cluster_likelihood_gradients(self):
        for seed in range(N_RANDOM_INSTANCES):
            design, params = random_small_problem(seed)
            scores = score_matrix(fitted_at(design, params), level=2)
            for j in range(design.J):
                numeric = central_gradient(
                    lambda x: cluster_loglik(ParamVector.from_values(x, design), design, j), params.values
                )
                np.testing.assert_allclose(scores.values[j], numeric, rtol=1e-6, atol=1e-8, err_msg=f"seed {seed}")

    def test_gradient_at_a_perturbed_point(self):
        for seed in range(5):
            design, params = random_small_problem(seed)
            sigma2 = params.sigma2.copy()
            sigma2[-1] += 1.0
            point = params.with_values(sigma2=sigma2)
            numeric = central_gradient(lambda x: loglik_ml(ParamVector.from_values(x, design), design), point.values)
            np.testing.assert_allclose(gradient(fitted_at(design, point)), numeric, rtol=1e-6, atol=1e-8)

    def test_fixed_effect_scores_vanish_at_gls(self):
        for seed in range(5):
            design, params = random_small_problem(seed)
            point = params.with_values(beta=gls_beta(params, design))
            model = fitted_at(design, point)
            scale = np.linalg.norm(sum(W_j.T @ y_j for W_j, y_j in zip(model.terms.W, model.terms.y)))
            self.assertTrue(np.max(np.abs(gradient(model)[: design.p])) <= 1e-8 * scale)

    def test_level_sums_agree_on_random_instances(self):
        for seed in range(N_RANDOM_INSTANCES):
            design, params = random_small_problem(seed)
            for method in ("ML", "REML"):
                model = fitted_at(design, params, method)
                np.testing.assert_allclose(
                    score_matrix(model, 1).column_sums, score_matrix(model, 2).column_sums, rtol=0, atol=1e-10
                )

    def test_reml_scores_sum_to_the_restricted_gradient(self):
        for seed in range(5):
            design, params = random_small_problem(seed)
            likelihood = RemlLogLikelihood(design)
            numeric = central_gradient(likelihood.calculate, params.sigma2)
            reml_gradient = gradient(fitted_at(design, params, "REML"))
            np.testing.assert_allclose(reml_gradient[design.p :], numeric, rtol=1e-6, atol=1e-8)
            self.assertTrue(np.max(np.abs(reml_gradient[: design.p])) < 1e-8 * (1 + np.abs(design.y).max()))


if __name__ == "__main__":
    main()
