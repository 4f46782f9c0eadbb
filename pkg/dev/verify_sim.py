import unittest

import numpy as np

import sim_utils
from clumping_utils import (
    ContinuousQueueSpec,
    Discipline,
    DiscreteQueueSpec,
    ParameterDomainError,
    UnsupportedModelError,
)

GEO1 = DiscreteQueueSpec(p=1 / 3, r=1 / 2, servers=1)
GEO2 = DiscreteQueueSpec(p=1 / 3, r=1 / 4, servers=2)
MM1 = ContinuousQueueSpec(lam=1 / 3, mu=1 / 2, c=1)
MM2 = ContinuousQueueSpec(lam=1 / 3, mu=1 / 4, c=2)
CHUNK_CROSSING = sim_utils.CHUNK_STEPS + 1234


class TestDiscreteSimulators(unittest.TestCase):
    def test_no_arrivals(self):
        spec = DiscreteQueueSpec(p=0.0, r=0.5, test_mode=True)
        for n in (1, 10, 5000):
            self.assertEqual(sim_utils.sim_geo_lasda(spec, n, seed=1).max_level, 0)
            self.assertEqual(sim_utils.sim_geo_eas(0.0, 0.5, n, seed=1, test_mode=True).max_level, 0)

    def test_certain_departure_caps_one_server(self):
        spec = DiscreteQueueSpec(p=0.5, r=1.0, test_mode=True)
        for seed in range(5):
            record = sim_utils.sim_geo_lasda(spec, 20000, seed=seed)
            self.assertLessEqual(record.max_level, 1)
            self.assertEqual(record.steps, 20000)

    def test_record_invariants(self):
        for spec in (GEO1, GEO2):
            record = sim_utils.sim_geo_lasda(spec, 10000, seed=3)
            with self.subTest(spec=spec):
                self.assertGreaterEqual(record.final_level, 0)
                self.assertGreaterEqual(record.max_level, record.final_level)

    def test_seeded_runs_repeat(self):
        a = sim_utils.sim_geo_lasda(GEO2, 50000, seed=11, replication=4)
        b = sim_utils.sim_geo_lasda(GEO2, 50000, seed=11, replication=4)
        self.assertEqual(a, b)

    def test_max_grows_with_horizon(self):
        previous = 0
        for n in (1000, 10000, 70000, 140000):
            record = sim_utils.sim_geo_lasda(GEO2, n, seed=5)
            self.assertGreaterEqual(record.max_level, previous)
            previous = record.max_level

    def test_trace_is_prefix_stable(self):
        short = sim_utils.trace_path(GEO1, 1000, seed=2)
        long = sim_utils.trace_path(GEO1, CHUNK_CROSSING, seed=2)
        np.testing.assert_array_equal(short["u"].to_numpy(), long["u"].to_numpy()[:1000])

    def test_trace_matches_simulator(self):
        n = CHUNK_CROSSING
        trace = sim_utils.trace_path(GEO2, n, seed=9)
        record = sim_utils.sim_geo_lasda(GEO2, n, seed=9)
        self.assertEqual(int(trace["u"].max()), record.max_level)
        self.assertEqual(int(trace["u"].iloc[-1]), record.final_level)
        self.assertEqual(list(trace.columns), ["step", "u"])

    def test_path_climbs_at_most_one_per_step(self):
        for spec in (GEO1, GEO2):
            u = sim_utils.trace_path(spec, 20000, seed=4)["u"].to_numpy()
            with self.subTest(spec=spec):
                self.assertLessEqual(u[0], 1)
                self.assertLessEqual(int(np.diff(u).max()), 1)

    def test_discipline_checked(self):
        eas = DiscreteQueueSpec(p=0.2, r=0.4, discipline=Discipline.EAS)
        with self.assertRaises(UnsupportedModelError):
            sim_utils.sim_geo_lasda(eas, 10, seed=0)
        with self.assertRaises(ParameterDomainError):
            sim_utils.sim_geo_lasda(GEO1, 0, seed=0)
        with self.assertRaises(ParameterDomainError):
            sim_utils.sim_geo_eas(0.5, 0.4, 10, seed=0)


class TestCouplings(unittest.TestCase):
    def test_lasda_never_below_eas(self):
        for seed in range(3):
            lasda, eas = sim_utils.coupled_lasda_eas(1 / 3, 1 / 2, 20000, seed)
            self.assertTrue(np.all(lasda >= eas))
            self.assertGreaterEqual(lasda.max(), eas.max())

    def test_second_server_never_raises_the_path(self):
        for seed in range(3):
            one, two = sim_utils.coupled_one_two_servers(0.2, 0.3, 20000, seed)
            self.assertTrue(np.all(two <= one))


class TestMmc(unittest.TestCase):
    def test_server_assignment(self):
        arrivals = np.array([0.0, 0.5, 1.0])
        starts, departs = sim_utils._assign_servers(arrivals, np.array([3.0, 3.0, 3.0]), 2)
        np.testing.assert_allclose(starts, [0.0, 0.5, 3.0])
        np.testing.assert_allclose(departs, [3.0, 3.5, 6.0])

    def test_arrival_epoch_lengths(self):
        arrivals = np.array([0.0, 1.0, 1.5])
        starts, departs = sim_utils._assign_servers(arrivals, np.array([2.0, 2.0, 2.0]), 1)
        l_sys, l_que = sim_utils.arrival_epoch_lengths(arrivals, starts, departs)
        np.testing.assert_array_equal(l_sys, [0, 1, 2])
        np.testing.assert_array_equal(l_que, [0, 0, 1])

    def test_empty_horizon(self):
        run = sim_utils.sim_mmc(ContinuousQueueSpec(lam=1e-9, mu=1.0), 1.0, seed=0)
        self.assertEqual((run.max_sys, run.max_que, run.k), (0, 0, 0))

    def test_run_invariants(self):
        for seed in range(5):
            run = sim_utils.sim_mmc(MM2, 5000.0, seed=seed)
            with self.subTest(seed=seed):
                self.assertGreaterEqual(run.max_sys, run.max_que)
                self.assertGreaterEqual(run.max_que, 0)
                self.assertGreater(run.k, 0)

    def test_horizon_must_be_positive(self):
        with self.assertRaises(ParameterDomainError):
            sim_utils.sim_mmc(MM1, 0.0, seed=0)


class TestTimeAverages(unittest.TestCase):
    RUNS = 20

    def assert_within_band(self, values, expected, sigmas=3.0):
        values = np.asarray(values)
        stderr = values.std(ddof=1) / np.sqrt(values.size)
        self.assertGreater(stderr, 0.0)
        self.assertLessEqual(abs(values.mean() - expected), sigmas * stderr,
                             msg=f"mean {values.mean():.5f} vs {expected:.5f}, stderr {stderr:.5f}")

    def test_discrete_mean_length(self):
        for spec, expected in ((GEO1, 4 / 3), (GEO2, 1.98358)):
            runs = [sim_utils.sim_time_average(spec, 10**5, seed=1, replication=i) for i in range(self.RUNS)]
            with self.subTest(spec=spec):
                self.assert_within_band(runs, expected)

    def test_continuous_mean_length(self):
        for spec, expected in ((MM1, 2.0), (MM2, 2.4)):
            runs = [sim_utils.sim_time_average(spec, 5e4, seed=1, replication=i) for i in range(self.RUNS)]
            with self.subTest(c=spec.c):
                self.assert_within_band(runs, expected)


if __name__ == '__main__':
    unittest.main()
