"""Command line interface tests using click's test runner."""
import json
import os

import pytest
from click.testing import CliRunner

from aasfed.cli import main

CONFIG = os.path.join(os.path.dirname(__file__), "..", "configs", "demo.yaml")


@pytest.fixture
def runner():
    return CliRunner()


class TestUsage:
    def test_help(self, runner):
        result = runner.invoke(main, ["--help"])
        assert result.exit_code == 0
        assert "clone" in result.output and "snapshot" in result.output

    def test_unknown_verb_exits_2(self, runner):
        result = runner.invoke(main, ["frobnicate"])
        assert result.exit_code == 2

    def test_missing_required_option_exits_2(self, runner):
        result = runner.invoke(main, ["-c", CONFIG, "consolidated"])
        assert result.exit_code == 2

    def test_bad_config_path_exits_1(self, runner):
        result = runner.invoke(main, ["-c", "/no/such.yaml", "demo", "copy-on-write"])
        assert result.exit_code == 1
        assert "error" in result.output


class TestDemos:
    def test_copy_on_write_demo(self, runner):
        result = runner.invoke(main, ["-c", CONFIG, "demo", "copy-on-write"])
        assert result.exit_code == 0, result.output
        payload = json.loads(result.output)
        assert payload["sourceShellVersion"] == 1
        orgs = [c["orgId"] for c in payload["view"]["contributions"]]
        assert orgs == ["org-o", "org-oprime"]

    def test_service_request_demo(self, runner):
        result = runner.invoke(main, ["-c", CONFIG, "demo", "service-request"])
        assert result.exit_code == 0, result.output
        payload = json.loads(result.output)
        assert payload["statuses"] == ["draft", "submitted", "acknowledged"]
        assert payload["instanceStates"] == ["completed"]

    def test_service_request_demo_declined(self, runner):
        result = runner.invoke(main,
                               ["-c", CONFIG, "demo", "service-request", "--decline"])
        assert result.exit_code == 0, result.output
        payload = json.loads(result.output)
        assert payload["finalStatus"] == "draft"
        assert payload["instanceStates"] == ["terminated"]
