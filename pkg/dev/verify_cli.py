import io
import json
import os
import tempfile
import unittest
from contextlib import redirect_stderr, redirect_stdout

import pandas as pd

import cli


def run_cli(*argv):
    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        status = cli.main(list(argv))
    return status, out.getvalue(), err.getvalue()


class TestNumberParsing(unittest.TestCase):
    def test_accepted_forms(self):
        self.assertEqual(cli.parse_number("0.25"), 0.25)
        self.assertEqual(cli.parse_number("1/3"), 1 / 3)
        self.assertEqual(cli.parse_number(" 1 / 4 "), 0.25)
        self.assertEqual(cli.parse_number("1e6"), 1e6)
        self.assertEqual(cli.parse_count("1e4"), 10000)

    def test_rejected_forms(self):
        for bad in ("", "abc", "1/", "1/0", "1/2/3"):
            with self.subTest(value=bad):
                with self.assertRaises(ValueError):
                    cli.parse_number(bad)
        for bad in ("inf", "-inf", "nan", "1e400"):
            with self.subTest(value=bad):
                with self.assertRaises(ValueError):
                    cli.parse_number(bad)
                with self.assertRaises(ValueError):
                    cli.parse_count(bad)
        for bad in ("2.5", "0", "-3"):
            with self.subTest(value=bad):
                with self.assertRaises(ValueError):
                    cli.parse_count(bad)

    def test_bad_flag_value_exits_two(self):
        with redirect_stderr(io.StringIO()):
            with self.assertRaises(SystemExit) as cm:
                cli.main(["predict", "--model", "geo1-lasda", "--p", "one third", "--r", "0.5"])
        self.assertEqual(cm.exception.code, 2)

    def test_non_finite_flag_values_exit_two(self):
        for argv in (["simulate", "--model", "geo1-lasda", "--p", "1/3", "--r", "1/2", "--reps", "inf"],
                     ["predict", "--model", "mm1", "--lambda", "1/3", "--mu", "1/2", "--n", "nan"]):
            with self.subTest(argv=argv):
                with redirect_stderr(io.StringIO()) as err:
                    with self.assertRaises(SystemExit) as cm:
                        cli.main(argv)
                self.assertEqual(cm.exception.code, 2)
                self.assertIn("must be finite", err.getvalue())


class TestPredict(unittest.TestCase):
    def test_two_server_example(self):
        status, out, _ = run_cli("predict", "--model", "geo2-lasda", "--p", "1/3", "--r", "1/4",
                                 "--n", "1e6", "--format", "json")
        self.assertEqual(status, 0)
        payload = json.loads(out)
        self.assertEqual(payload["schema"], "prediction/1")
        self.assertAlmostEqual(payload["omega"], 0.5584219849, delta=1e-9)
        self.assertAlmostEqual(payload["a"], 0.0644634887, delta=1e-9)
        self.assertAlmostEqual(payload["mean_queue_length"], 1.98358, delta=1e-5)

    def test_json_round_trip(self):
        _, out, _ = run_cli("predict", "--model", "mm2", "--lambda", "1/3", "--mu", "1/4", "--format", "json")
        payload = json.loads(out)
        params = payload["parameters"]
        _, again, _ = run_cli("predict", "--model", "mm2", "--lambda", repr(params["lambda"]),
                              "--mu", repr(params["mu"]), "--format", "json")
        self.assertEqual(out, again)

    def test_text_output(self):
        status, out, _ = run_cli("predict", "--model", "mm1", "--lambda", "1/3", "--mu", "1/2")
        self.assertEqual(status, 0)
        self.assertIn("== prediction ==", out)
        self.assertIn("intercept", out)
        self.assertIn("2.466303462", out)

    def test_unstable_exits_two(self):
        status, out, err = run_cli("predict", "--model", "mm1", "--lambda", "0.5", "--mu", "0.4")
        self.assertEqual(status, 2)
        self.assertEqual(out, "")
        self.assertIn("stability violated: lambda < c*mu", err)

    def test_wrong_parameter_family_exits_two(self):
        status, _, err = run_cli("predict", "--model", "geo1-lasda", "--lambda", "0.1", "--mu", "0.2")
        self.assertEqual(status, 2)
        self.assertIn("needs --p and --r", err)

    def test_server_count_only_for_mmc(self):
        for argv in (("--model", "mm1", "--lambda", "1/3", "--mu", "1/2", "--c", "3"),
                     ("--model", "mm2", "--lambda", "1/3", "--mu", "1/4", "--c", "1"),
                     ("--model", "geo1-lasda", "--p", "1/3", "--r", "1/2", "--c", "2")):
            with self.subTest(argv=argv):
                status, out, err = run_cli("predict", *argv)
                self.assertEqual(status, 2)
                self.assertEqual(out, "")
                self.assertIn("--c is for mmc only", err)

    def test_no_closed_form_exits_two(self):
        status, _, err = run_cli("predict", "--model", "mmc", "--lambda", "1", "--mu", "0.5", "--c", "3")
        self.assertEqual(status, 2)
        self.assertIn("c=3", err)


class TestSimulate(unittest.TestCase):
    ARGS = ("simulate", "--model", "geo1-lasda", "--p", "1/3", "--r", "1/2",
            "--n", "5e3", "--reps", "30", "--seed", "17", "--format", "json")

    def test_seed_determines_output(self):
        status, first, _ = run_cli(*self.ARGS)
        _, second, _ = run_cli(*self.ARGS, "--jobs", "2")
        self.assertEqual(status, 0)
        self.assertEqual(first, second)
        self.assertEqual(json.loads(first)["summary"]["reps"], 30)

    def test_trace_and_output(self):
        with tempfile.TemporaryDirectory() as tmp:
            trace = os.path.join(tmp, "trace.csv")
            report = os.path.join(tmp, "report.json")
            status, out, _ = run_cli(*self.ARGS, "--trace", trace, "--output", report)
            self.assertEqual(status, 0)
            self.assertEqual(out, "")
            frame = pd.read_csv(trace)
            self.assertEqual(list(frame.columns), ["step", "u"])
            self.assertEqual(len(frame), 5000)
            with open(report, encoding="utf-8") as fh:
                self.assertEqual(json.load(fh)["schema"], "simulation-report/1")

    def test_trace_needs_discrete_model(self):
        status, _, err = run_cli("simulate", "--model", "mm1", "--lambda", "1/3", "--mu", "1/2",
                                 "--x", "100", "--reps", "3", "--trace", "unused.csv")
        self.assertEqual(status, 2)
        self.assertIn("discrete models only", err)


class TestTables(unittest.TestCase):
    def test_compare_doctors(self):
        status, out, _ = run_cli("compare-doctors")
        self.assertEqual(status, 0)
        self.assertIn("Geo/Geo/2 slow", out)
        self.assertIn("discrete_fast_wins: PASS", out)

    def test_delta_sweep(self):
        status, out, _ = run_cli("delta-sweep", "--format", "json")
        self.assertEqual(status, 0)
        rows = json.loads(out)["rows"]
        self.assertEqual([row["delta"] for row in rows], [1e-2, 1e-3, 1e-4])

    def test_delta_too_large_exits_two(self):
        status, _, err = run_cli("delta-sweep", "--deltas", "5")
        self.assertEqual(status, 2)
        self.assertIn("delta too large", err)

    def test_identity_without_closed_form(self):
        status, out, _ = run_cli("identity", "--lambda", "1", "--mu", "1/2", "--c", "3",
                                 "--x", "2e3", "--reps", "5", "--format", "json")
        self.assertEqual(status, 0)
        payload = json.loads(out)
        self.assertIsNone(payload["sup_cdf_distance"])
        self.assertEqual(payload["passes"], {"identity_holds": True})

    def test_validate_default_grid(self):
        status, out, _ = run_cli("validate", "--grid", "default", "--format", "json")
        self.assertEqual(status, 0)
        payload = json.loads(out)
        self.assertTrue(all(payload["passes"].values()))
        self.assertNotIn("acceptance", payload)


if __name__ == '__main__':
    unittest.main()
