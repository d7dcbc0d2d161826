"""Method registry, Monte Carlo runner and CLI tests"""
import asyncio
import csv
import json
import unittest
import sys
import tempfile
from pathlib import Path

# Add project root to Python path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from experiments.experiment_runner import (
    CSV_COLUMNS,
    ExperimentRunner,
    TrialOutcome,
    aggregate,
    run_experiment,
    write_csv,
)
from experiments.method_registry import (
    MethodProvider,
    MethodRegistry,
    MethodRegistryError,
    UnknownMethodError,
    baselines,
)
from main import EXIT_CONFIG, EXIT_OK, EXIT_PARTIAL, main
from metrics import MetricsReport
from tests.helpers import tiny_config
from utils.config_utils import apply_overrides, config_from_dict

TINY_DOC = {
    "scenario": "fixed-site",
    "geometry": {"M": 4, "N_y": 3, "N_z": 3, "L": 2},
    "frame": {"T1": 32, "T2": 16, "reference_pilot_slots": 4},
    "grids": {"G1": 4, "G2": 4, "G3": 4, "G4": 3, "G5": 3},
    "solver": {"j_max": 4, "j_max_multi": 2, "u_max": 100},
    "sweep": {"snr_db": [10, 20], "trials": 2, "seed": 11},
    "on_grid": True,
}


def report_runner(value):
    def run(drop, trace):
        return MetricsReport(ber=value)
    return run


def failing_runner(drop, trace):
    raise RuntimeError("diverged")


class TestMethodRegistry(unittest.TestCase):
    """Registration, selection and statistics"""

    def setUp(self):
        self.registry = MethodRegistry()
        self.registry.register(MethodProvider("b", "fixed-site", report_runner(0.1), priority=2))
        self.registry.register(MethodProvider("a", "fixed-site", report_runner(0.2), priority=1))
        self.registry.register(MethodProvider("m", "multi-ue", report_runner(0.3)))

    def test_duplicate_registration(self):
        with self.assertRaises(MethodRegistryError):
            self.registry.register(MethodProvider("a", "multi-ue", report_runner(0.0)))

    def test_selection(self):
        self.assertEqual([p.name for p in self.registry.select("fixed-site")], ["a", "b"])
        self.assertEqual([p.name for p in self.registry.select("fixed-site", ["b", "a"])], ["a", "b"])
        with self.assertRaises(UnknownMethodError):
            self.registry.select("fixed-site", ["nope"])
        with self.assertRaises(MethodRegistryError):
            self.registry.select("fixed-site", ["m"])

    def test_disable_method(self):
        self.registry.set_method_enabled("b", False)
        self.assertEqual(self.registry.names("fixed-site"), ["a"])

    def test_statistics(self):
        provider = MethodProvider("flaky", "fixed-site", failing_runner)
        self.registry.register(provider)
        with self.assertRaises(RuntimeError):
            provider.run(None)
        self.registry.get("a").run(None)
        stats = {s['name']: s for s in self.registry.get_method_stats()}
        self.assertEqual(stats['flaky']['failure_count'], 1)
        self.assertEqual(stats['flaky']['last_error'], "diverged")
        self.assertEqual(stats['a']['success_rate'], 1.0)
        self.registry.reset_method_stats()
        self.assertEqual(self.registry.get("flaky").failure_count, 0)

    def test_baselines(self):
        registry = baselines(tiny_config())
        self.assertEqual(registry.names("fixed-site"),
                         ["algorithm1", "sbl-ongrid", "omp-ongrid", "omp-offgrid", "pure-pilot",
                          "perfect-csi", "orthogonal-pilot", "single-ris"])
        self.assertEqual(registry.names("multi-ue"), ["algorithm3", "pilot-ls", "algorithm3-genie"])


class TestAggregation(unittest.TestCase):
    """Reduction of trial outcomes into CSV rows"""

    def test_mean_and_standard_error(self):
        outcomes = [
            TrialOutcome("fixed-site", "x", 10.0, 32, 16, 1, MetricsReport(ber=0.3, se=1.0)),
            TrialOutcome("fixed-site", "x", 10.0, 32, 16, 0, MetricsReport(ber=0.1, se=1.0)),
            TrialOutcome("fixed-site", "x", 10.0, 32, 16, 2, error="boom"),
        ]
        rows = aggregate(outcomes, seed0=5)
        self.assertEqual([r["metric"] for r in rows], ["ber", "se"])
        ber = rows[0]
        self.assertAlmostEqual(float(ber["mean"]), 0.2)
        self.assertAlmostEqual(float(ber["stderr"]), 0.1)
        self.assertEqual(ber["trials"], 2)
        self.assertEqual(ber["seed0"], 5)
        self.assertEqual(float(rows[1]["stderr"]), 0.0)

    def test_single_trial_has_zero_stderr(self):
        rows = aggregate([TrialOutcome("multi-ue", "y", 0.0, 32, 16, 0, MetricsReport(ber=0.5))], 1)
        self.assertEqual(rows[0]["stderr"], "0")

    def test_write_csv_columns(self):
        rows = aggregate([TrialOutcome("fixed-site", "x", 10.0, 32, 16, 0, MetricsReport(ber=0.25))], 3)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "out.csv"
            write_csv(rows, path)
            with open(path, newline="", encoding="utf-8") as f:
                reader = csv.DictReader(f)
                self.assertEqual(reader.fieldnames, CSV_COLUMNS)
                self.assertEqual(next(reader)["mean"], "0.25")


class TestExperimentRunner(unittest.TestCase):
    """Seeded sweeps over desk-scale drops"""

    def test_csv_is_reproducible(self):
        config = apply_overrides(
            tiny_config(), methods=["algorithm1", "omp-ongrid", "perfect-csi", "orthogonal-pilot"], snr_db=[5, 15])
        with tempfile.TemporaryDirectory() as tmp:
            first, second = Path(tmp) / "a.csv", Path(tmp) / "b.csv"
            run_experiment(config, first, threads=2, progress=False)
            run_experiment(config, second, threads=1, progress=False)
            self.assertEqual(first.read_bytes(), second.read_bytes())
            with open(first, newline="", encoding="utf-8") as f:
                rows = list(csv.DictReader(f))
        methods = {r["method"] for r in rows}
        self.assertEqual(methods, {"algorithm1", "omp-ongrid", "perfect-csi", "orthogonal-pilot"})
        ber = [r for r in rows if r["method"] == "perfect-csi" and r["metric"] == "ber"]
        self.assertEqual(len(ber), 2)
        self.assertTrue(all(r["trials"] == "2" for r in ber))

    def test_failures_are_partial(self):
        registry = MethodRegistry()
        registry.register(MethodProvider("ok", "fixed-site", report_runner(0.0)))
        registry.register(MethodProvider("broken", "fixed-site", failing_runner))
        runner = ExperimentRunner(tiny_config(), registry=registry, threads=2, progress=False)
        result = runner.run()
        self.assertTrue(result.partial)
        self.assertEqual(result.failed_trials, 2)
        self.assertEqual({r["method"] for r in result.rows}, {"ok"})
        self.assertEqual(registry.get("broken").failure_count, 2)

    def test_multi_ue_sweep(self):
        doc = dict(TINY_DOC, scenario="multi-ue")
        config = apply_overrides(config_from_dict(doc), methods=["algorithm3-genie"],
                                 snr_db=[30], trials=1)
        with tempfile.TemporaryDirectory() as tmp:
            trace = Path(tmp) / "trace.jsonl"
            result = ExperimentRunner(config, threads=1, trace_path=trace, progress=False).run()
            lines = trace.read_text(encoding="utf-8").splitlines()
        self.assertFalse(result.partial)
        self.assertIn("ber", {r["metric"] for r in result.rows})
        self.assertGreater(len(lines), 0)
        self.assertEqual(json.loads(lines[0])["method"], "algorithm3-genie")


class TestCommandLine(unittest.TestCase):
    """Exit codes of the isac entry point"""

    def write_config(self, tmp, doc=None):
        path = Path(tmp) / "config.json"
        path.write_text(json.dumps(doc or TINY_DOC), encoding="utf-8")
        return str(path)

    def test_validate_config(self):
        code = asyncio.run(main(["validate-config", "--config", str(project_root / "config.desk.json")]))
        self.assertEqual(code, EXIT_OK)

    def test_bad_config(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = self.write_config(tmp, dict(TINY_DOC, frame={"T1": 0}))
            self.assertEqual(asyncio.run(main(["validate-config", "--config", path])), EXIT_CONFIG)
        self.assertEqual(asyncio.run(main(["validate-config", "--config", "/nonexistent.json"])),
                         EXIT_CONFIG)

    def test_no_command(self):
        self.assertEqual(asyncio.run(main([])), EXIT_CONFIG)

    def test_unknown_method(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = self.write_config(tmp)
            code = asyncio.run(main(["-q", "run", "--config", path, "--methods", "magic",
                                     "--out", str(Path(tmp) / "out.csv")]))
        self.assertEqual(code, EXIT_CONFIG)

    def test_run_writes_csv(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = self.write_config(tmp)
            out = Path(tmp) / "out.csv"
            code = asyncio.run(main(["-q", "run", "--config", path, "--methods", "perfect-csi",
                                     "--trials", "1", "--snr-db", "10", "--out", str(out)]))
            header = out.read_text(encoding="utf-8").splitlines()[0]
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(header, ",".join(CSV_COLUMNS))

    def test_partial_failure_exit_code(self):
        with tempfile.TemporaryDirectory() as tmp:
            doc = dict(TINY_DOC, geometry={"M": 4, "N_y": 3, "N_z": 3, "L": 2,
                                           "ris_positions": [[-30, 28, 21]]})
            path = self.write_config(tmp, doc)
            code = asyncio.run(main(["-q", "run", "--config", path, "--methods", "single-ris",
                                     "--trials", "1", "--snr-db", "10",
                                     "--out", str(Path(tmp) / "out.csv")]))
        self.assertEqual(code, EXIT_PARTIAL)


if __name__ == '__main__':
    unittest.main()
