import unittest

import numpy as np

import clumping_utils as cu
import oracle_utils as ou
from clumping_utils import Discipline, DiscreteQueueSpec, ParameterDomainError, UnsupportedModelError

GEO1 = DiscreteQueueSpec(p=1 / 3, r=1 / 2, servers=1)
GEO2 = DiscreteQueueSpec(p=1 / 3, r=1 / 4, servers=2)
EAS = DiscreteQueueSpec(p=1 / 3, r=1 / 2, servers=1, discipline=Discipline.EAS)


class TestStationarySolve(unittest.TestCase):
    def test_gth_two_state(self):
        pi = ou.gth_solve(np.array([[0.9, 0.1], [0.5, 0.5]]))
        np.testing.assert_allclose(pi, [5 / 6, 1 / 6], atol=1e-15)

    def test_rows_are_stochastic(self):
        for spec in (GEO1, GEO2, EAS):
            with self.subTest(spec=spec):
                chain = ou.build_truncated_chain(spec, 40)
                self.assertEqual(chain.rows.shape, (41, 41))
                np.testing.assert_allclose(chain.rows.sum(axis=1), 1.0, atol=ou.ROW_SUM_TOL)
                self.assertGreaterEqual(chain.rows.min(), 0.0)

    def test_worked_examples_match_closed_form(self):
        for spec in (GEO1, GEO2, EAS):
            with self.subTest(spec=spec):
                profile = cu.stationary_profile(spec)
                pi = ou.truncated_stationary(spec)
                closed = np.array([profile.probability(j) for j in range(pi.size)])
                self.assertLess(np.max(np.abs(pi - closed)), ou.STATIONARY_TOL)

    def test_pi2_printed_value(self):
        pi = ou.truncated_stationary(GEO2)
        self.assertAlmostEqual(pi[2], 0.2270554252, delta=1e-9)

    def test_deep_truncation_stays_finite(self):
        # ω ≈ 0.048, so ω^240 is far below the smallest double
        spec = DiscreteQueueSpec(p=0.16, r=0.8)
        pi_k = ou.truncated_stationary(spec, 120)
        pi_2k = ou.truncated_stationary(spec, 240)
        self.assertTrue(np.all(np.isfinite(pi_2k)))
        self.assertAlmostEqual(pi_2k.sum(), 1.0, delta=1e-12)
        self.assertLess(np.max(np.abs(pi_k - pi_2k[:121])), ou.STABILITY_TOL)

    def test_small_truncation_rejected(self):
        with self.assertRaises(ParameterDomainError):
            ou.truncated_stationary(GEO1, K=5)


class TestHittingSystem(unittest.TestCase):
    def test_matches_closed_form(self):
        hp = cu.hitting_profile(GEO2)
        nu0, nu1, nu_minus1 = ou.hitting_system(GEO2)
        self.assertAlmostEqual(nu0, hp.nu0, delta=ou.HITTING_TOL)
        self.assertAlmostEqual(nu1, hp.nu1, delta=ou.HITTING_TOL)
        self.assertAlmostEqual(nu_minus1, hp.nu_minus1, delta=ou.HITTING_TOL)

    def test_one_server_rejected(self):
        with self.assertRaises(UnsupportedModelError):
            ou.hitting_system(GEO1)

    def test_small_half_width_rejected(self):
        with self.assertRaises(ParameterDomainError):
            ou.hitting_system(GEO2, J=10)

    def test_increment_law(self):
        for spec in ou.default_grid("geo2-lasda"):
            with self.subTest(spec=spec):
                self.assertAlmostEqual(sum(ou.increment_law(spec).values()), 1.0, delta=ou.ROW_SUM_TOL)
                self.assertLess(ou.increment_drift(spec), 0.0)

    def test_return_probability_monte_carlo(self):
        est = ou.return_prob_mc(GEO2, reps=20000, horizon=5000, seed=7)
        self.assertEqual(est.reps, 20000)
        self.assertGreater(est.stderr, 0.0)
        self.assertTrue(est.brackets(cu.hitting_profile(GEO2).nu0, sigmas=4.0))


class TestVerificationGrid(unittest.TestCase):
    def test_grid_sizes(self):
        for model in ou.GRID_MODELS:
            grid = ou.default_grid(model)
            with self.subTest(model=model):
                self.assertGreaterEqual(len(grid), 20)
                self.assertTrue(all(cu.decay_ratio(spec) <= 0.75 for spec in grid))

    def test_report_passes(self):
        report = ou.verification_report()
        failed = report[~report["passed"]]
        self.assertTrue(failed.empty, msg=failed.to_string())
        self.assertEqual(set(report["model"]), set(ou.GRID_MODELS))

    def test_report_is_job_independent(self):
        serial = ou.verification_report(models=("geo1-lasda",), jobs=1)
        parallel = ou.verification_report(models=("geo1-lasda",), jobs=2)
        self.assertTrue(serial.equals(parallel))

    def test_printed_constants(self):
        checks = ou.worked_example_checks()
        failed = checks[~checks["passed"]]
        self.assertTrue(failed.empty, msg=failed.to_string())


if __name__ == '__main__':
    unittest.main()
