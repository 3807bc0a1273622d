"""
Unit tests for redvit.cli: dispatch, exit codes and logging setup.
"""
import json
import logging

import pytest
from typer.testing import CliRunner

from redvit.cli import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, app, cli_dispatch, configure_logging


@pytest.fixture
def runner():
    """Provides a CliRunner instance for invoking commands."""
    return CliRunner()


class TestExitCodes:
    """Tests for mapping outcomes to exit codes."""

    def test_unknown_command(self, capsys):
        assert cli_dispatch(["fly"]) == EXIT_USAGE

    def test_unknown_flag(self):
        assert cli_dispatch(["gradcheck", "--bogus"]) == EXIT_USAGE

    def test_bad_output_format(self):
        assert cli_dispatch(["gradcheck", "--primitives-only", "--points", "1", "--output", "xml"]) == EXIT_USAGE

    def test_bad_method(self, config_file):
        assert cli_dispatch(["attack", "--config", str(config_file), "--method", "pgd"]) == EXIT_USAGE

    def test_missing_config_is_runtime_error(self, tmp_path, capsys):
        code = cli_dispatch(["gen-data", "--config", str(tmp_path / "absent.json"), "--output", "json"])
        assert code == EXIT_RUNTIME
        assert json.loads(capsys.readouterr().out)["error"] == "ConfigError"

    def test_invalid_config_is_runtime_error(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"attack": {"epsilon": 2.0}}), encoding="utf-8")
        assert cli_dispatch(["gen-data", "--config", str(path)]) == EXIT_RUNTIME

    def test_missing_zoo_is_runtime_error(self, config_file):
        assert cli_dispatch(["attack", "--config", str(config_file)]) == EXIT_RUNTIME

    def test_unexpected_exception_is_runtime_error(self, monkeypatch, capsys):
        def broken(*args, **kwargs):
            raise RuntimeError("matmul exploded")

        monkeypatch.setattr("redvit.commands.gradcheck.check_primitives", broken)
        monkeypatch.setenv("REDVIT_OUTPUT", "json")
        code = cli_dispatch(["gradcheck", "--primitives-only"])
        assert code == EXIT_RUNTIME
        payload = json.loads(capsys.readouterr().out)
        assert (payload["error"], payload["message"]) == ("RuntimeError", "matmul exploded")

    def test_success(self):
        assert cli_dispatch(["gradcheck", "--primitives-only", "--points", "1"]) == EXIT_OK


class TestRoot:
    """Tests for the top-level callback."""

    def test_help_lists_commands(self, runner):
        result = runner.invoke(app, ["--help"])
        assert result.exit_code == 0
        for command in ("gen-data", "train-zoo", "attack", "evaluate", "probe", "robustify", "gradcheck", "sweep"):
            assert command in result.stdout

    def test_log_level_flag(self, runner):
        result = runner.invoke(app, ["--log-level", "debug", "gradcheck", "--primitives-only", "--points", "1"])
        assert result.exit_code == 0
        assert logging.getLogger("redvit").level == logging.DEBUG

    def test_log_level_from_environment(self, monkeypatch):
        monkeypatch.setenv("REDVIT_LOG_LEVEL", "INFO")
        configure_logging()
        logger = logging.getLogger("redvit")
        assert logger.level == logging.INFO
        assert len(logger.handlers) == 1

    def test_reconfiguring_replaces_handler(self):
        configure_logging("warning")
        configure_logging("error")
        logger = logging.getLogger("redvit")
        assert len(logger.handlers) == 1
        assert logger.level == logging.ERROR
