"""
Tests for the layered run configuration.

Copyright (c) 2025 Ohrner IT GmbH
Licensed under the MIT License
"""

import json
import logging
import shutil
import tempfile
import unittest
from io import StringIO
from pathlib import Path

import config
from error_handler import ConfigError, config_error_handler


class TestDefaults(unittest.TestCase):

    def test_default_sections(self):
        cfg = config.default_config()
        self.assertEqual(cfg["seed"], config.DEFAULT_SEED)
        self.assertEqual(cfg["workers"], 1)
        self.assertFalse(cfg["strict"])
        self.assertEqual(cfg["validation"]["mc_samples"], 100_000)
        self.assertEqual(cfg["simulation"]["true_rates"], [0.05, 0.06, 0.07, 0.08, 0.09])
        self.assertEqual(cfg["simulation"]["insertion_batch"], 5)

    def test_default_policies(self):
        kinds = [policy["kind"] for policy in config.default_policies()]
        self.assertEqual(kinds.count("dynamic_prior"), 8)
        self.assertEqual(kinds.count("forced_exploration"), 8)
        self.assertEqual(kinds.count("uniform_prior"), 1)
        self.assertEqual(kinds.count("hard_reset"), 1)

    def test_defaults_are_fresh_copies(self):
        first = config.default_config()
        first["validation"]["p_values"].append(0.5)
        self.assertNotIn(0.5, config.default_config()["validation"]["p_values"])


class TestParseOverride(unittest.TestCase):

    def test_json_values(self):
        test_cases = [
            ("validation.mc_samples=1000", {"validation": {"mc_samples": 1000}}),
            ("simulation.insertion_batch=null", {"simulation": {"insertion_batch": None}}),
            ("strict=true", {"strict": True}),
            ("validation.p_values=[0.01, 0.02]", {"validation": {"p_values": [0.01, 0.02]}}),
        ]
        for override, expected in test_cases:
            with self.subTest(override=override):
                self.assertEqual(config.parse_override(override), expected)

    def test_plain_string_value(self):
        self.assertEqual(config.parse_override("name=abc"), {"name": "abc"})

    def test_value_may_contain_equals(self):
        self.assertEqual(config.parse_override('a.b="x=y"'), {"a": {"b": "x=y"}})

    def test_malformed(self):
        for override in ["validation.mc_samples", "=5", " =5"]:
            with self.subTest(override=override):
                with self.assertRaises(ConfigError):
                    config.parse_override(override)


class TestLoadConfig(unittest.TestCase):
    """Test precedence and validation of load_config."""

    def setUp(self):
        self.temp_dir = Path(tempfile.mkdtemp())

    def tearDown(self):
        shutil.rmtree(self.temp_dir)

    def _write(self, payload) -> str:
        path = self.temp_dir / "config.json"
        path.write_text(payload if isinstance(payload, str) else json.dumps(payload))
        return str(path)

    def test_defaults_without_inputs(self):
        self.assertEqual(config.load_config(), config.default_config())

    def test_precedence(self):
        path = self._write({"seed": 11, "workers": 3, "validation": {"mc_samples": 5000}})
        cfg = config.load_config(path, ["validation.mc_samples=2000", "seed=12"], seed=13)
        self.assertEqual(cfg["seed"], 13)
        self.assertEqual(cfg["workers"], 3)
        self.assertEqual(cfg["validation"]["mc_samples"], 2000)
        self.assertEqual(cfg["validation"]["p_values"], config.VALIDATION_P_VALUES)

        cfg = config.load_config(path, ["seed=12"])
        self.assertEqual(cfg["seed"], 12)
        self.assertEqual(config.load_config(path)["seed"], 11)

    def test_file_replaces_lists(self):
        path = self._write({"simulation": {"policies": [{"kind": "uniform_prior"}]}})
        self.assertEqual(config.load_config(path)["simulation"]["policies"], [{"kind": "uniform_prior"}])

    def test_unknown_keys(self):
        for bad in [{"validation": {"samples": 1}}, {"verbose": True}]:
            with self.subTest(bad=bad):
                with self.assertRaises(ConfigError) as ctx:
                    config.load_config(self._write(bad))
                self.assertIn("Unknown configuration key", str(ctx.exception))
        with self.assertRaises(ConfigError):
            config.load_config(overrides=["simulation.batches=3"])

    def test_missing_file(self):
        with self.assertRaises(ConfigError) as ctx:
            config.load_config(str(self.temp_dir / "absent.json"))
        self.assertIn("Cannot read config file", str(ctx.exception))

    def test_invalid_json(self):
        with self.assertRaises(ConfigError) as ctx:
            config.load_config(self._write("{seed: 1"))
        self.assertIn("not valid JSON", str(ctx.exception))

    def test_non_object_json(self):
        with self.assertRaises(ConfigError):
            config.load_config(self._write("[1, 2]"))

    def test_invalid_seed(self):
        for override in ["seed=-1", "seed=1.5", "seed=true", f"seed={2 ** 64}"]:
            with self.subTest(override=override):
                with self.assertRaises(ConfigError):
                    config.load_config(overrides=[override])
        self.assertEqual(config.load_config(seed=2 ** 64 - 1)["seed"], 2 ** 64 - 1)

    def test_invalid_workers(self):
        for override in ["workers=0", "workers=2.0", "workers=false"]:
            with self.subTest(override=override):
                with self.assertRaises(ConfigError):
                    config.load_config(overrides=[override])

    def test_rejected_value_is_logged(self):
        log_capture_string = StringIO()
        handler = logging.StreamHandler(log_capture_string)
        previous_level = config_error_handler.logger.level
        config_error_handler.logger.addHandler(handler)
        config_error_handler.logger.setLevel(logging.INFO)
        try:
            with self.assertRaises(ConfigError):
                config.load_config(overrides=["workers=0"])
        finally:
            config_error_handler.logger.removeHandler(handler)
            config_error_handler.logger.setLevel(previous_level)
        logged = log_capture_string.getvalue()
        self.assertIn("[CONFIGURATION] validate_workers", logged)
        self.assertIn("must be a positive integer", logged)


class TestValueChecks(unittest.TestCase):

    def test_require_real(self):
        self.assertEqual(config.require_real("x", 3), 3.0)
        self.assertEqual(config.require_real("x", 0.25), 0.25)
        for value in ["0.05", None, True, float("nan"), float("inf"), [0.1]]:
            with self.subTest(value=value):
                with self.assertRaises(ConfigError):
                    config.require_real("x", value)

    def test_require_count(self):
        self.assertEqual(config.require_count("n", 1e4), 10_000)
        self.assertEqual(config.require_count("n", 0, minimum=0), 0)
        for value in ["abc", 0, 2.5, None, False, float("inf")]:
            with self.subTest(value=value):
                with self.assertRaises(ConfigError):
                    config.require_count("n", value)

    def test_require_list(self):
        self.assertEqual(config.require_list("p", [0.01, 1]), (0.01, 1.0))
        for values in [[], "0.01", None, [0.01, "x"], [None]]:
            with self.subTest(values=values):
                with self.assertRaises(ConfigError):
                    config.require_list("p", values)

    def test_error_names_the_entry(self):
        with self.assertRaises(ConfigError) as raised:
            config.require_list("validation.n_values", [10, "abc"], item=config.require_count)
        self.assertIn("validation.n_values[1]", str(raised.exception))


if __name__ == '__main__':
    unittest.main()
