import math
import unittest

import numpy as np

import clumping_utils as cu
from clumping_utils import (
    ContinuousQueueSpec,
    Discipline,
    DiscreteQueueSpec,
    ParameterDomainError,
    UnsupportedModelError,
)

GEO1 = DiscreteQueueSpec(p=1 / 3, r=1 / 2, servers=1)
GEO2 = DiscreteQueueSpec(p=1 / 3, r=1 / 4, servers=2)
EAS = DiscreteQueueSpec(p=1 / 3, r=1 / 2, servers=1, discipline=Discipline.EAS)
MM1 = ContinuousQueueSpec(lam=1 / 3, mu=1 / 2, c=1)
MM2 = ContinuousQueueSpec(lam=1 / 3, mu=1 / 4, c=2)

SMALL_GRID = [
    DiscreteQueueSpec(p=f * c * r, r=r, servers=c, discipline=d)
    for c, d, rates in (
        (1, Discipline.LAS_DA, (0.2, 0.5, 0.8)),
        (2, Discipline.LAS_DA, (0.1, 0.3, 0.45)),
        (1, Discipline.EAS, (0.2, 0.5, 0.8)),
    )
    for r in rates
    for f in (0.2, 0.5, 0.75)
]


class TestPrintedConstants(unittest.TestCase):
    def test_worked_examples(self):
        for name, ex in cu.WORKED_EXAMPLES.items():
            spec = ex["spec"]
            asym = cu.asymptotics_for(spec)
            with self.subTest(example=name):
                self.assertAlmostEqual(asym.slope, ex["slope"], delta=1e-9)
                self.assertAlmostEqual(asym.intercept, ex["intercept"], delta=1e-9)
                self.assertAlmostEqual(cu.mean_queue_length(spec), ex["mean"], delta=1e-5)
                if "omega" in ex:
                    self.assertAlmostEqual(asym.omega, ex["omega"], delta=1e-9)
                if "a" in ex:
                    self.assertAlmostEqual(asym.a, ex["a"], delta=1e-9)

    def test_two_server_profile(self):
        profile = cu.stationary_profile(GEO2)
        hp = cu.hitting_profile(GEO2)
        self.assertAlmostEqual(profile.head[2], 0.2270554252, delta=1e-9)
        self.assertAlmostEqual(hp.nu0, 0.8414579643, delta=1e-9)
        self.assertAlmostEqual(hp.nu_minus1, 0.945203, delta=1e-6)
        self.assertAlmostEqual(hp.nu1, cu.decay_ratio(GEO2), delta=1e-12)
        self.assertAlmostEqual(hp.ec, 1.0 / (1.0 - hp.nu0), delta=1e-12)

    def test_one_server_constants(self):
        self.assertAlmostEqual(cu.decay_ratio(GEO1), 0.5, delta=1e-15)
        self.assertAlmostEqual(cu.extreme_asymptotics(GEO1).a, 1 / 18, delta=1e-15)
        self.assertAlmostEqual(cu.extreme_asymptotics(EAS).a, 1 / 24, delta=1e-15)
        self.assertAlmostEqual(cu.clump_mean(GEO1), 6.0, delta=1e-12)

    def test_continuous_slopes_match(self):
        one = cu.continuous_asymptotics(MM1)
        two = cu.continuous_asymptotics(MM2)
        self.assertAlmostEqual(one.slope, two.slope, delta=1e-12)
        self.assertLess(one.intercept, two.intercept)


class TestClosedFormIdentities(unittest.TestCase):
    def test_root_residuals(self):
        for spec in SMALL_GRID:
            with self.subTest(spec=spec):
                omega = cu.decay_ratio(spec)
                self.assertLess(cu.root_residual(spec, omega), cu.RESIDUAL_TOL)
                self.assertTrue(0.0 < omega < 1.0)

    def test_profiles_normalise(self):
        for spec in SMALL_GRID:
            with self.subTest(spec=spec):
                self.assertAlmostEqual(cu.stationary_profile(spec).total(), 1.0, delta=cu.NORMALIZATION_TOL)

    def test_z3_residual(self):
        for spec in SMALL_GRID:
            if spec.servers != 2:
                continue
            with self.subTest(spec=spec):
                self.assertLess(cu.z3_residual(spec, cu.hitting_profile(spec).nu1), 1e-10)

    def test_profile_tail(self):
        profile = cu.stationary_profile(GEO2)
        for k in range(6):
            expected = 1.0 - sum(profile.probability(j) for j in range(k))
            self.assertAlmostEqual(profile.tail(k), expected, delta=1e-12)

    def test_mean_matches_profile(self):
        for spec in SMALL_GRID:
            with self.subTest(spec=spec):
                profile = cu.stationary_profile(spec)
                self.assertAlmostEqual(cu.mean_queue_length(spec), profile.mean(), delta=1e-10)

    def test_integer_cdf_is_clumping_form(self):
        # exp(−A n ω^m) == exp(−π_{m+1} n / E(C)) at every integer level m ≥ 1
        n = 1e6
        for spec in (GEO1, GEO2):
            asym = cu.extreme_asymptotics(spec)
            profile = cu.stationary_profile(spec)
            ec = cu.clump_mean(spec)
            for m in range(1, 30):
                with self.subTest(spec=spec, m=m):
                    expected = math.exp(-profile.probability(m + 1) * n / ec)
                    self.assertAlmostEqual(cu.max_cdf(asym, n, m), expected, delta=1e-12)


class TestMaxDistribution(unittest.TestCase):
    def test_cdf_monotone_and_bounded(self):
        asym = cu.extreme_asymptotics(GEO2)
        values = cu.max_cdf(asym, 1e6, np.arange(0, 80))
        self.assertTrue(np.all(np.diff(values) >= 0))
        self.assertGreaterEqual(values.min(), 0.0)
        self.assertLessEqual(values.max(), 1.0)
        self.assertAlmostEqual(values[-1], 1.0, delta=1e-9)
        self.assertLess(values[0], 1e-12)

    def test_scalar_in_scalar_out(self):
        self.assertIsInstance(cu.max_cdf(cu.extreme_asymptotics(GEO1), 1e4, 10), float)

    def test_quantile_inverts_cdf(self):
        asym = cu.continuous_asymptotics(MM2)
        for prob in (0.05, 0.5, 0.95):
            k = cu.max_quantile(asym, 1e6, prob)
            self.assertAlmostEqual(cu.max_cdf(asym, 1e6, k), prob, delta=1e-12)

    def test_doctor_expected_maxima(self):
        self.assertAlmostEqual(cu.expected_max(cu.extreme_asymptotics(GEO1), 1e6), 17.0944, delta=1e-3)
        self.assertAlmostEqual(cu.expected_max(cu.extreme_asymptotics(GEO2), 1e6), 20.4971, delta=1e-3)

    def test_horizon_must_be_positive(self):
        asym = cu.extreme_asymptotics(GEO1)
        with self.assertRaises(ParameterDomainError):
            cu.max_cdf(asym, 0, 3)
        with self.assertRaises(ParameterDomainError):
            cu.expected_max(asym, -1)


class TestValidation(unittest.TestCase):
    def test_unstable_discrete(self):
        with self.assertRaises(ParameterDomainError) as cm:
            DiscreteQueueSpec(p=0.5, r=0.25, servers=2)
        self.assertIn("stability violated", str(cm.exception))

    def test_unstable_continuous(self):
        with self.assertRaises(ParameterDomainError) as cm:
            ContinuousQueueSpec(lam=0.5, mu=0.4)
        self.assertIn("stability violated: lambda < c*mu", str(cm.exception))

    def test_out_of_range(self):
        for p, r in ((0.0, 0.5), (0.3, 1.0), (-0.1, 0.5)):
            with self.subTest(p=p, r=r):
                with self.assertRaises(ParameterDomainError):
                    DiscreteQueueSpec(p=p, r=r)

    def test_unsupported_models(self):
        with self.assertRaises(UnsupportedModelError):
            DiscreteQueueSpec(p=0.1, r=0.2, servers=3)
        with self.assertRaises(UnsupportedModelError):
            DiscreteQueueSpec(p=0.1, r=0.2, servers=2, discipline=Discipline.EAS)
        with self.assertRaises(UnsupportedModelError):
            cu.continuous_asymptotics(ContinuousQueueSpec(lam=1.0, mu=0.5, c=3))
        with self.assertRaises(UnsupportedModelError):
            cu.hitting_profile(GEO1)

    def test_errors_are_value_errors(self):
        self.assertTrue(issubclass(ParameterDomainError, ValueError))
        self.assertTrue(issubclass(UnsupportedModelError, ValueError))

    def test_degenerate_specs_are_simulation_only(self):
        spec = DiscreteQueueSpec(p=0.0, r=0.5, test_mode=True)
        with self.assertRaises(ParameterDomainError):
            cu.decay_ratio(spec)


class TestContinuumLimit(unittest.TestCase):
    def test_discretize(self):
        spec = cu.discretize(MM2, 1e-3)
        self.assertEqual(spec.servers, 2)
        self.assertAlmostEqual(spec.p, 1 / 3000, delta=1e-18)
        self.assertAlmostEqual(spec.r, 1 / 4000, delta=1e-18)
        with self.assertRaises(ParameterDomainError):
            cu.discretize(MM1, 3.0)
        with self.assertRaises(ParameterDomainError):
            cu.discretize(MM1, 0.0)

    def test_one_server_rate_is_exact(self):
        for delta in (1e-2, 1e-3, 1e-4):
            rate = cu.clump_rate(cu.discretize(MM1, delta), delta)
            self.assertAlmostEqual(rate, MM1.mu - MM1.lam, delta=1e-12)

    def test_one_server_tail_coefficient(self):
        target = cu.continuous_asymptotics(MM1).a
        lam, mu = MM1.lam, MM1.mu
        for delta in (1e-2, 1e-3, 1e-4):
            tail = cu.continuum_tail_coefficient(cu.discretize(MM1, delta), delta)
            factor = (1 - mu * delta) / (1 - lam * delta) ** 2
            self.assertAlmostEqual(tail / target, factor, delta=1e-9)

    def test_two_server_limits(self):
        delta = 1e-5
        spec = cu.discretize(MM2, delta)
        self.assertAlmostEqual(cu.clump_rate(spec, delta), 2 * MM2.mu - MM2.lam, delta=1e-4)
        self.assertAlmostEqual(
            cu.continuum_tail_coefficient(spec, delta) / cu.continuous_asymptotics(MM2).a, 1.0, delta=1e-3
        )
        self.assertAlmostEqual(cu.mean_queue_length(spec), 2.4, delta=1e-3)


class TestLazyWalk(unittest.TestCase):
    def test_offset_identity(self):
        for p, r in ((1 / 3, 1 / 2), (0.1, 0.4), (0.3, 0.35)):
            spec = DiscreteQueueSpec(p=p, r=r, discipline=Discipline.EAS)
            offset = math.log(spec.p * spec.s + spec.q * spec.r) / math.log(spec.q * spec.r / (spec.p * spec.s))
            for n in (1e3, 1e6, 1e9):
                with self.subTest(p=p, r=r, n=n):
                    gap = cu.eas_lazy_walk_expected_max(p, r, n) - cu.expected_max(cu.extreme_asymptotics(spec), n)
                    self.assertAlmostEqual(gap, offset, delta=1e-12)

    def test_example_offset_is_minus_one(self):
        gap = cu.eas_lazy_walk_expected_max(1 / 3, 1 / 2, 1e6) - cu.expected_max(cu.extreme_asymptotics(EAS), 1e6)
        self.assertAlmostEqual(gap, -1.0, delta=1e-12)


if __name__ == '__main__':
    unittest.main()
