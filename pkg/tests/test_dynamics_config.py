import io
import json
import logging
import os
import tempfile
import unittest
from pathlib import Path
from unittest import mock

from pythonjsonlogger import jsonlogger

from dynamics_config import Settings, get_settings, override_settings, set_settings
from dynamics_errors import (
    DynamicsError,
    IndeterminatePointError,
    InvalidInputError,
    ParseError,
    TauConvergenceError,
    ZeroPolynomialError,
)
from logging_setup import configure_logging


class SettingsTest(unittest.TestCase):
    """Defaults, environment and scoped overrides"""

    def test_defaults(self):
        s = Settings()
        self.assertEqual(s.tol_root, 1e-8)
        self.assertEqual(s.degree_budget, 4096)
        self.assertEqual(s.n_walks, 8)
        self.assertEqual(s.workers, 1)

    def test_from_env_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            env = Path(tmp) / ".env"
            env.write_text("BD_TOL_ROOT=1e-6\nBD_WORKERS=3\n")
            with mock.patch.dict(os.environ, {}, clear=False):
                os.environ.pop("BD_TOL_ROOT", None)
                os.environ.pop("BD_WORKERS", None)
                s = Settings.from_env(env)
        self.assertEqual(s.tol_root, 1e-6)
        self.assertEqual(s.workers, 3)

    def test_bad_environment_value(self):
        with mock.patch.dict(os.environ, {"BD_WORKERS": "0"}):
            with self.assertRaises(InvalidInputError) as ctx:
                Settings.from_env(Path("/nonexistent/.env"))
        self.assertEqual(ctx.exception.field, "BD_WORKERS")

    def test_override_is_scoped(self):
        with override_settings(tol_root=1e-4) as s:
            self.assertEqual(s.tol_root, 1e-4)
            self.assertEqual(get_settings().tol_root, 1e-4)
            with override_settings(depth_n=3):
                self.assertEqual(get_settings().tol_root, 1e-4)
                self.assertEqual(get_settings().depth_n, 3)
        self.assertEqual(get_settings().tol_root, 1e-8)

    def test_override_validates(self):
        with self.assertRaises(InvalidInputError) as ctx:
            with override_settings(tol_bc=-1):
                pass
        self.assertEqual(ctx.exception.field, "tol_bc")

    def test_set_settings(self):
        set_settings(Settings(max_atoms=10))
        self.assertEqual(get_settings().max_atoms, 10)


class LoggingTest(unittest.TestCase):
    """The single tagged stderr handler"""

    def _tagged(self):
        return [h for h in logging.getLogger().handlers if getattr(h, "_boundary_dynamics", False)]

    def test_idempotent(self):
        configure_logging("DEBUG")
        configure_logging("DEBUG")
        self.assertEqual(len(self._tagged()), 1)
        self.assertEqual(logging.getLogger().level, logging.DEBUG)

    def test_json_output(self):
        with mock.patch("sys.stderr", new_callable=io.StringIO) as buf:
            configure_logging("INFO", json_output=True)
            self.assertIsInstance(self._tagged()[0].formatter, jsonlogger.JsonFormatter)
            logging.getLogger("boundary.test").info("hello")
        record = json.loads(buf.getvalue().strip().splitlines()[-1])
        self.assertEqual(record["message"], "hello")
        self.assertEqual(record["name"], "boundary.test")


class ErrorTest(unittest.TestCase):
    """Exit codes and the JSON error shape"""

    def test_exit_codes(self):
        self.assertEqual(InvalidInputError("P", "bad").exit_code, 1)
        self.assertEqual(ParseError("P", "bad").exit_code, 1)
        self.assertEqual(ZeroPolynomialError().exit_code, 1)
        self.assertEqual(IndeterminatePointError("f in I(d)").exit_code, 2)
        self.assertEqual(TauConvergenceError("no limit").exit_code, 3)
        self.assertTrue(issubclass(TauConvergenceError, DynamicsError))

    def test_to_dict(self):
        self.assertEqual(
            InvalidInputError("Q", "not a polynomial").to_dict(),
            {"error": "InvalidInputError", "field": "Q", "detail": "not a polynomial"},
        )
