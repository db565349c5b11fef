# tests/test_utils.py
"""Tests for utility functions."""

import logging
from pathlib import Path

import numpy as np
import pytest

import ccrec
from ccrec.exceptions import CcrecValidationError
from ccrec.utils import make_rng, setup_logging, validate_index, validate_indices


class TestSetupLogging:
    """Test logger configuration for entry points."""

    def test_explicit_level(self):
        level = setup_logging("debug")

        assert level == logging.DEBUG
        assert logging.getLogger("ccrec").level == logging.DEBUG

    def test_env_fallback(self, monkeypatch):
        monkeypatch.setenv("CCREC_LOG", "INFO")
        assert setup_logging() == logging.INFO

    def test_default_is_warning(self, monkeypatch):
        monkeypatch.delenv("CCREC_LOG", raising=False)
        assert setup_logging() == logging.WARNING

    def test_unknown_level(self):
        with pytest.raises(CcrecValidationError):
            setup_logging("chatty")

    def test_log_file_receives_records(self, tmp_path):
        log_file = tmp_path / "logs" / "run.log"
        setup_logging("INFO", log_file)

        logging.getLogger("ccrec.test").info("hello from the test")
        for handler in logging.getLogger("ccrec").handlers:
            handler.flush()

        assert "hello from the test" in log_file.read_text(encoding="utf-8")

    def test_handlers_are_replaced_not_stacked(self):
        setup_logging("INFO")
        setup_logging("INFO")
        assert len(logging.getLogger("ccrec").handlers) == 1


class TestValidateIndex:
    """Test id bound checks."""

    def test_valid_index(self):
        assert validate_index(3, 10, "user") == 3
        assert validate_index(np.int64(0), 1, "item") == 0

    @pytest.mark.parametrize("value", [-1, 10, 100])
    def test_out_of_range(self, value):
        with pytest.raises(CcrecValidationError) as exc_info:
            validate_index(value, 10, "user")
        assert "user" in exc_info.value.field_errors

    @pytest.mark.parametrize("value", ["3", 3.0, True, None])
    def test_wrong_type(self, value):
        with pytest.raises(CcrecValidationError):
            validate_index(value, 10, "item")

    def test_array_version(self):
        np.testing.assert_array_equal(validate_indices([0, 4, 2], 5, "item"), [0, 4, 2])
        with pytest.raises(CcrecValidationError):
            validate_indices(np.array([0, 5]), 5, "item")


class TestMakeRng:
    """Seeded generators and their streams."""

    def test_same_seed_same_stream(self):
        assert make_rng(7, 1).random() == make_rng(7, 1).random()

    def test_streams_differ(self):
        assert make_rng(7, 1).random() != make_rng(7, 2).random()
        assert make_rng(7).random() != make_rng(7, 1).random()

    def test_seeds_differ(self):
        assert make_rng(1).random() != make_rng(2).random()


class TestPackaging:

    def test_ships_type_marker(self):
        assert (Path(ccrec.__file__).parent / "py.typed").is_file()

    def test_version_is_set(self):
        assert ccrec.__version__
