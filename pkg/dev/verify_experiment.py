import json
import os
import tempfile
import unittest

import pandas as pd

import clumping_utils as cu
import experiment_utils as eu
from clumping_utils import ContinuousQueueSpec, Discipline, DiscreteQueueSpec, ParameterDomainError

GEO1 = DiscreteQueueSpec(p=1 / 3, r=1 / 2, servers=1)
GEO2 = DiscreteQueueSpec(p=1 / 3, r=1 / 4, servers=2)
EAS = DiscreteQueueSpec(p=1 / 3, r=1 / 2, servers=1, discipline=Discipline.EAS)
MM1 = ContinuousQueueSpec(lam=1 / 3, mu=1 / 2, c=1)
MM2 = ContinuousQueueSpec(lam=1 / 3, mu=1 / 4, c=2)


class TestSummaries(unittest.TestCase):
    def test_summarize(self):
        summary = eu.summarize([0, 1, 1, 3], n=100, seed=4)
        self.assertEqual(summary.reps, 4)
        self.assertAlmostEqual(summary.mean, 1.25)
        self.assertAlmostEqual(summary.variance, 4.75 / 3)
        self.assertEqual(summary.cdf, {0: 0.25, 1: 0.75, 2: 0.75, 3: 1.0})
        self.assertEqual(summary.cdf_at(-1), 0.0)
        self.assertEqual(summary.cdf_at(9), 1.0)

    def test_cdf_is_monotone(self):
        summary = eu.replicate_max("geo2-lasda", GEO2, 3000, 50, seed=1)
        values = list(summary.cdf.values())
        self.assertTrue(all(b >= a for a, b in zip(values, values[1:])))
        self.assertEqual(values[-1], 1.0)
        self.assertGreater(summary.stderr, 0.0)

    def test_model_spec_mismatch(self):
        with self.assertRaises(ParameterDomainError):
            eu.replicate_max("geo2-lasda", GEO1, 100, 10, seed=0)
        with self.assertRaises(ParameterDomainError):
            eu.replicate_max("mm1", MM2, 100, 10, seed=0)
        with self.assertRaises(ParameterDomainError):
            eu.replicate_max("geo1-lasda", MM1, 100, 10, seed=0)
        with self.assertRaises(ParameterDomainError):
            eu.replicate_max("geo1-lasda", GEO1, 100, 1, seed=0)

    def test_jobs_do_not_change_results(self):
        serial = eu.replicate_max("geo1-eas", EAS, 2000, 24, seed=3, jobs=1)
        parallel = eu.replicate_max("geo1-eas", EAS, 2000, 24, seed=3, jobs=3)
        self.assertEqual(eu.dumps_json(serial.payload()), eu.dumps_json(parallel.payload()))

    def test_continuous_models_use_system_maximum(self):
        summary = eu.replicate_max("mm1", MM1, 1000.0, 10, seed=2)
        self.assertGreater(summary.mean, 0.0)


class TestPredictionAgreement(unittest.TestCase):
    # Reduced-scale versions of the acceptance runs: the mean is judged with
    # the 3-stderr band, the CDF with a tolerance sized for 1000 replications.
    N = 10**5
    REPS = 1000
    SUP_TOL = 0.06

    def check_model(self, model, spec, seed):
        summary = eu.replicate_max(model, spec, self.N, self.REPS, seed=seed)
        report = eu.compare_prediction(summary, cu.extreme_asymptotics(spec), sup_tol=self.SUP_TOL)
        self.assertEqual(report.tolerances["sigmas"], eu.SIGMA_BAND)
        self.assertTrue(report.passes["mean_within_band"], msg=report.payload())
        self.assertTrue(report.passes["cdf_within_tolerance"], msg=report.payload())

    def test_one_server(self):
        self.check_model("geo1-lasda", GEO1, seed=21)

    def test_two_servers(self):
        self.check_model("geo2-lasda", GEO2, seed=22)

    def test_early_arrival(self):
        self.check_model("geo1-eas", EAS, seed=23)

    def test_band_rejects_shifted_prediction(self):
        summary = eu.replicate_max("geo1-lasda", GEO1, self.N, self.REPS, seed=21)
        asym = cu.extreme_asymptotics(GEO1)
        shifted = cu.ExtremeAsymptotics.from_tail(asym.omega, asym.a / 4)
        report = eu.compare_prediction(summary, shifted)
        self.assertFalse(report.passes["mean_within_band"])

    def test_report_payload(self):
        summary = eu.summarize([3, 4, 4, 5, 6], n=10**4, seed=0)
        report = eu.compare_prediction(summary, cu.extreme_asymptotics(GEO1))
        payload = report.payload()
        self.assertEqual(payload["schema"], "comparison-report/1")
        self.assertEqual(set(payload["passes"]), {"mean_within_band", "cdf_within_tolerance"})
        self.assertEqual(payload["tolerances"]["sup_cdf_distance"], eu.SUP_DISTANCE_TOL)
        self.assertGreaterEqual(report.sup_cdf_distance, 0.0)
        self.assertLessEqual(report.sup_cdf_distance, 1.0)


class TestScenarios(unittest.TestCase):
    def test_doctor_table(self):
        report = eu.doctor_scenario()
        self.assertTrue(report.passed)
        table = report.table.set_index("queue")
        self.assertAlmostEqual(table.loc["Geo/Geo/1 fast", "expected_max"], 17.0944, delta=1e-3)
        self.assertAlmostEqual(table.loc["Geo/Geo/2 slow", "expected_max"], 20.4971, delta=1e-3)
        self.assertAlmostEqual(table.loc["M/M/1 fast", "mean_length"], 2.0, delta=1e-12)
        self.assertAlmostEqual(table.loc["M/M/2 slow", "mean_length"], 2.4, delta=1e-12)
        self.assertAlmostEqual(table.loc["M/M/1 fast", "slope"], table.loc["M/M/2 slow", "slope"], delta=1e-12)

    def test_delta_sweep(self):
        for spec in (MM1, MM2):
            report = eu.delta_sweep(spec)
            with self.subTest(c=spec.c):
                self.assertTrue(report.passed, msg=eu.format_table(report.table))
                self.assertEqual(list(report.table["delta"]), [1e-2, 1e-3, 1e-4])

    def test_delta_sweep_one_server_rate_is_exact(self):
        report = eu.delta_sweep(MM1)
        self.assertTrue((report.table["clump_rate_rel_error"] < 1e-12).all())

    def test_system_queue_identity(self):
        for spec in (MM1, MM2):
            report = eu.system_queue_identity(spec, 2e4, 40, seed=5)
            with self.subTest(c=spec.c):
                # every run reaches c customers, so the offset is exact
                self.assertEqual(report.identity_rate, 1.0)
                self.assertTrue(report.passes["identity_holds"])
                self.assertEqual(report.summary.reps, 40)
                self.assertTrue(0.0 <= report.sup_cdf_distance <= 1.0)
                self.assertIn("matches_continuous_law", report.passes)

    def test_identity_without_closed_form(self):
        report = eu.system_queue_identity(ContinuousQueueSpec(lam=1.0, mu=0.5, c=3), 2e3, 5, seed=5)
        self.assertIsNone(report.sup_cdf_distance)
        self.assertEqual(set(report.passes), {"identity_holds"})
        self.assertTrue(report.passes["identity_holds"])
        payload = json.loads(eu.write_report(report, fmt="json"))
        self.assertIsNone(payload["sup_cdf_distance"])
        self.assertNotIn("sup_cdf_distance", payload["tolerances"])

    def test_lazy_walk(self):
        report = eu.lazy_walk_comparison(1 / 3, 1 / 2, 10**5, 1000, seed=8)
        self.assertTrue(report.passes["offset_identity"])
        self.assertTrue(report.passes["matches_clumping"], msg=eu.format_table(report.table))
        self.assertTrue(report.passes["rejects_lazy_walk"])
        values = report.table.set_index("formula")["value"]
        simulated = values["simulated mean"]
        self.assertLess(abs(simulated - values["clumping E(M_n)"]), abs(simulated - values["lazy walk E'(M_n)"]))
        self.assertIn(cu.LAZY_WALK_FLAG, list(report.table["flag"]))


class TestSerialisation(unittest.TestCase):
    def test_json_is_stable(self):
        report = eu.doctor_scenario()
        first = eu.write_report(report, fmt="json")
        second = eu.write_report(eu.doctor_scenario(), fmt="json")
        self.assertEqual(first, second)
        payload = json.loads(first)
        self.assertEqual(payload["schema"], "doctor-scenario/1")
        self.assertEqual(len(payload["rows"]), 4)
        self.assertNotIn("timestamp", first)

    def test_text_and_csv(self):
        report = eu.delta_sweep(MM2)
        text = eu.write_report(report, fmt="text")
        self.assertIn("== delta-sweep ==", text)
        self.assertIn("PASS", text)
        csv = eu.write_report(report, fmt="csv")
        self.assertTrue(csv.startswith("delta,p,r,omega"))

    def test_xlsx(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "doctors.xlsx")
            eu.write_report(eu.doctor_scenario(), path, "xlsx")
            sheets = pd.read_excel(path, sheet_name=None)
            self.assertIn("doctor-scenario", sheets)
            self.assertEqual(len(sheets["doctor-scenario"]), 4)

    def test_xlsx_needs_a_path(self):
        with self.assertRaises(ParameterDomainError):
            eu.write_report(eu.doctor_scenario(), None, "xlsx")

    def test_unknown_format(self):
        with self.assertRaises(ParameterDomainError):
            eu.write_report(eu.doctor_scenario(), None, "yaml")


if __name__ == '__main__':
    unittest.main()
