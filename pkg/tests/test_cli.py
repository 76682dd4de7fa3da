import io
import json
import tempfile
import unittest
from pathlib import Path
from unittest import mock

from typer.testing import CliRunner

import cli

H = '{"P": "zw", "Q": "z^2"}'


class CliTest(unittest.TestCase):
    """Commands, exit codes and the JSON output"""

    def setUp(self):
        self.runner = CliRunner()

    def invoke(self, *args):
        return self.runner.invoke(cli.app, ["--log-level", "ERROR", *args])

    def test_tau2_on_a_line(self):
        result = self.invoke("tau2", "--family", "line", "--a", "0", "--b", "1")
        self.assertEqual(result.exit_code, 0, result.output)
        data = json.loads(result.stdout)
        self.assertEqual(data["tau2"], [1.0, 0.0])
        self.assertEqual(data["q"], 2)
        self.assertEqual(data["exact"], "1")

    def test_classify(self):
        result = self.invoke("classify", "--map", H)
        self.assertEqual(result.exit_code, 0, result.output)
        data = json.loads(result.stdout)
        self.assertEqual(data["class"], "Stable")
        self.assertIsNone(data["witness_hole"])

    def test_measure_of_a_point(self):
        result = self.invoke("measure", "--map", H, "--point", "0")
        self.assertEqual(result.exit_code, 0, result.output)
        data = json.loads(result.stdout)
        self.assertEqual(data["mass"], "2/3")
        self.assertTrue(data["exact"])

    def test_indeterminacy(self):
        result = self.invoke("indeterminacy", "--n", "4")
        self.assertEqual(result.exit_code, 0, result.output)
        self.assertEqual(len(json.loads(result.stdout)["points"]), 3)

    def test_malformed_map_exits_one(self):
        self.assertEqual(self.invoke("normalize", "--map", '{"P": "zw"}').exit_code, 1)
        self.assertEqual(self.invoke("normalize", "--map", '{"P": "z w +", "Q": "z^2"}').exit_code, 1)

    def test_indeterminate_map_exits_two(self):
        result = self.invoke("iterate", "--map", '{"P": "zw", "Q": "0"}', "--n", "2")
        self.assertEqual(result.exit_code, 2)


LAMBDA_TWO_PATH = json.dumps({
    "family": {"kind": "coeff_path", "P": "2z^2 - 2zw + t w^2", "Q": "zw - w^2 + t z^2"},
    "t_grid": [0.05, 0.1],
    "n_samples": 300,
    "seed": 3,
})


class CommandSmokeTest(unittest.TestCase):
    """Every command runs on a small input and emits its documented keys"""

    def setUp(self):
        self.runner = CliRunner()

    def run_json(self, *args):
        result = self.runner.invoke(cli.app, ["--log-level", "ERROR", *args])
        self.assertEqual(result.exit_code, 0, result.output)
        return json.loads(result.stdout)

    def test_milnor(self):
        data = self.run_json("milnor", "--map", '{"P": "z^2", "Q": "w^2"}')
        self.assertEqual(set(data), {"multipliers", "sigma1", "sigma2", "point"})
        self.assertEqual(len(data["multipliers"]), 3)

    def test_lambda(self):
        data = self.run_json("lambda", "--a", "2", "--n", "2")
        self.assertEqual(data["degree"], 4)
        self.assertTrue(data["holes"])

    def test_family(self):
        data = self.run_json("family", "--kind", "P", "--q", "2", "--n", "2")
        self.assertEqual(data["degree"], 4)
        data = self.run_json("family", "--kind", "F", "--q", "2", "--n", "2", "--tau", "1")
        self.assertEqual(data["degree"], 4)

    def test_family_needs_tau(self):
        result = self.runner.invoke(cli.app, ["--log-level", "ERROR", "family", "--kind", "F", "--q", "2", "--n", "2"])
        self.assertEqual(result.exit_code, 1)

    def test_limit(self):
        data = self.run_json("limit", "--n", "2", "--family", "line", "--a", "0", "--b", "1")
        self.assertEqual(data["kind"], "F")
        self.assertEqual(data["q"], 2)
        self.assertEqual(data["map"]["degree"], 4)

    def test_mhat(self):
        data = self.run_json("mhat", "--N", "3", "--family", "line", "--a", "0", "--b", "1")
        self.assertEqual(data["q"], 2)
        self.assertEqual([c["kind"] for c in data["classes"]], ["lambda", "F", "F"])

    def test_barycenter(self):
        octahedron = [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]]
        data = self.run_json("barycenter", "--measure", json.dumps({"points": octahedron}))
        self.assertEqual(data["status"], "Centered")
        self.assertEqual(len(data["pushforward"]), 6)

    def test_sample(self):
        data = self.run_json("sample", "--map", '{"P": "z^2 - w^2", "Q": "w^2"}', "--n-samples", "50", "--json")
        self.assertEqual(data["seed"], 0)
        self.assertEqual(len(data["points"]), 50)

    def test_experiment(self):
        data = self.run_json("experiment", "--config", LAMBDA_TWO_PATH, "--json")
        self.assertEqual([row["t"] for row in data["rows"]], [0.1, 0.05])
        self.assertFalse(data["stopped_early"])
        result = self.runner.invoke(cli.app, ["--log-level", "ERROR", "experiment", "--config", LAMBDA_TWO_PATH])
        self.assertEqual(result.exit_code, 0, result.output)
        self.assertEqual(result.stdout.splitlines()[0], "t,distance,barycenter_status")

    def test_counterexample(self):
        data = self.run_json("counterexample", "--d", "2", "--a", "1")
        self.assertEqual(set(data), {"d", "g", "g_limit", "f_a"})
        data = self.run_json("counterexample", "--d", "5", "--a", "1")
        self.assertIn("h", data)
        self.assertIn("h_a", data)


class ReplayTest(unittest.TestCase):
    """--out writes an invocation record that replays to the same bytes"""

    def test_round_trip(self):
        with tempfile.TemporaryDirectory() as tmp:
            first = Path(tmp) / "first.json"
            second = Path(tmp) / "second.json"
            with mock.patch("sys.stderr", new_callable=io.StringIO):
                code = cli.run(
                    ["--log-level", "ERROR", "--out", str(first), "tau2", "--family", "line", "--a", "1", "--b", "2"]
                )
                self.assertEqual(code, 0)
                record = Path(f"{first}.invocation.json")
                self.assertEqual(json.loads(record.read_text())["command"], "tau2")
                code = cli.run(["--log-level", "ERROR", "--out", str(second), "replay", str(record)])
            self.assertEqual(code, 0)
            self.assertEqual(first.read_bytes(), second.read_bytes())

    def test_bad_record(self):
        with tempfile.TemporaryDirectory() as tmp:
            record = Path(tmp) / "bad.json"
            record.write_text("{not json")
            with mock.patch("sys.stderr", new_callable=io.StringIO):
                self.assertEqual(cli.run(["--log-level", "ERROR", "replay", str(record)]), 1)
