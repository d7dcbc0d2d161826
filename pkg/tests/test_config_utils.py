"""Simulation configuration loading and validation tests"""
import json
import os
import unittest
import sys
import tempfile
from pathlib import Path
from unittest.mock import patch

# Add project root to Python path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from utils.config_utils import (
    ConfigurationError,
    apply_overrides,
    config_from_dict,
    load_config,
    thread_limit,
)


class TestConfigFromDict(unittest.TestCase):
    """Parsing and validation of JSON documents"""

    def test_defaults(self):
        config = config_from_dict({})
        self.assertEqual(config.scenario, "fixed-site")
        self.assertEqual(config.geometry.N_y, (12, 12))
        self.assertEqual(config.t1_values, (256,))

    def test_per_ris_integers_expand(self):
        config = config_from_dict({"geometry": {"N_y": 4, "N_z": 5, "L": 2}})
        self.assertEqual(config.geometry.N_y, (4, 4))
        self.assertEqual(config.geometry.N_z, (5, 5))
        self.assertEqual(config.geometry.L, (2, 2))

    def test_ue_box_as_mapping(self):
        config = config_from_dict({"geometry": {"ue_box": {"x": [1, 2], "y": [3, 4], "z": [5, 6]}}})
        self.assertEqual(config.geometry.ue_box, ((1.0, 2.0), (3.0, 4.0), (5.0, 6.0)))

    def test_unknown_keys_name_the_offender(self):
        cases = [
            ({"solver": {"j_maxx": 3}}, "j_maxx"),
            ({"geometry": {"antennas": 3}}, "antennas"),
            ({"verbose": True}, "verbose"),
        ]
        for doc, key in cases:
            with self.subTest(key=key):
                with self.assertRaises(ConfigurationError) as ctx:
                    config_from_dict(doc)
                self.assertIn(key, str(ctx.exception))

    def test_invalid_values_name_the_field(self):
        cases = [
            ({"frame": {"T1": 0}}, "frame.T1"),
            ({"frame": {"xi0": 1.0}}, "frame.xi0"),
            ({"solver": {"d": 1.5}}, "solver.d"),
            ({"solver": {"delta_chi": 0}}, "solver.delta_chi"),
            ({"grids": {"G4": 0}}, "grids.G4"),
            ({"geometry": {"N_y": [4, 4, 4]}}, "geometry.N_y"),
            ({"scenario": "broadcast"}, "scenario"),
            ({"frame": {"T1": 8, "reference_pilot_slots": 8}}, "reference_pilot_slots"),
            ({"geometry": {"ue_box": [[5, 1], [0, 1], [0, 1]]}}, "ue_box"),
            ({"frame": {"pilot_design": "chirp"}}, "frame.pilot_design"),
            ({"scenario": "multi-ue", "frame": {"T2": 4}}, "frame.T2"),
        ]
        for doc, field_name in cases:
            with self.subTest(field=field_name):
                with self.assertRaises(ConfigurationError) as ctx:
                    config_from_dict(doc)
                self.assertIn(field_name, str(ctx.exception))

    def test_multi_ue_needs_two_ris(self):
        doc = {"scenario": "multi-ue",
               "geometry": {"ris_positions": [[-30, 28, 21]], "N_y": 4, "N_z": 4, "L": 2}}
        with self.assertRaises(ConfigurationError):
            config_from_dict(doc)

    def test_description_is_ignored(self):
        config = config_from_dict({"description": "desk run", "on_grid": True})
        self.assertTrue(config.on_grid)


class TestLoadConfig(unittest.TestCase):
    """Files and environment variables"""

    def test_shipped_configs_validate(self):
        for name in ("config.example.json", "config.desk.json"):
            with self.subTest(config=name):
                config = load_config(project_root / name)
                self.assertIn(config.scenario, ("fixed-site", "multi-ue"))

    def test_env_path(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "run.json"
            path.write_text(json.dumps({"scenario": "multi-ue", "sweep": {"trials": 3}}), encoding="utf-8")
            with patch.dict(os.environ, {'ISAC_CONFIG': str(path)}):
                config = load_config()
        self.assertEqual(config.scenario, "multi-ue")
        self.assertEqual(config.sweep.trials, 3)

    def test_missing_and_malformed_files(self):
        with self.assertRaises(ConfigurationError):
            load_config("/nonexistent/config.json")
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "broken.json"
            path.write_text("{not json", encoding="utf-8")
            with self.assertRaises(ConfigurationError):
                load_config(path)


class TestOverrides(unittest.TestCase):
    """CLI overrides and thread limits"""

    def test_apply_overrides(self):
        base = config_from_dict({})
        updated = apply_overrides(base, scenario="multi-ue", methods=["algorithm3"],
                                  snr_db=[0, 5], t1=[32], trials=2, seed=9, trace=True)
        self.assertEqual(updated.scenario, "multi-ue")
        self.assertEqual(updated.methods, ("algorithm3",))
        self.assertEqual(updated.sweep.snr_db, (0.0, 5.0))
        self.assertEqual(updated.t1_values, (32,))
        self.assertEqual((updated.sweep.trials, updated.sweep.seed), (2, 9))
        self.assertTrue(updated.trace)
        self.assertEqual(base.sweep.trials, 10)

    def test_invalid_override(self):
        with self.assertRaises(ConfigurationError):
            apply_overrides(config_from_dict({}), trials=0)
        with self.assertRaises(ConfigurationError):
            apply_overrides(config_from_dict({}), snr_db=[])

    def test_thread_limit(self):
        with patch.dict(os.environ, {'ISAC_THREADS': '3'}):
            self.assertEqual(thread_limit(), 3)
        for bad in ('zero', '0'):
            with self.subTest(value=bad):
                with patch.dict(os.environ, {'ISAC_THREADS': bad}):
                    with self.assertRaises(ConfigurationError):
                        thread_limit()
        with patch.dict(os.environ, {}, clear=True):
            self.assertEqual(thread_limit(2), 2)


if __name__ == '__main__':
    unittest.main()
