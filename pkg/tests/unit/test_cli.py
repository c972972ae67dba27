"""Tests for the main CLI interface.

These are smoke tests to ensure the CLI structure is correct, commands
are wired up and errors map onto their exit codes.
"""

import json
import logging
import subprocess
import sys

import pytest
import yaml

from rilab import events
from rilab.cli import configure_logging, main
from rilab.harness import read_jsonl


def rilab(*args, cwd=None):
    return subprocess.run(
        [sys.executable, "-m", "rilab.cli", *args],
        capture_output=True,
        text=True,
        cwd=cwd,
    )


class TestCLIStructure:
    """Test basic CLI structure and help text."""

    def test_cli_shows_help_with_no_args(self):
        """CLI shows help and exits 1 when run with no arguments."""
        result = rilab()

        assert result.returncode == 1
        assert "usage:" in result.stdout.lower()

    @pytest.mark.parametrize("command", [
        "init", "cap", "sample-vacant", "events", "couple", "coarsen", "interfaces",
        "explore", "observable", "run", "verify", "plotdata",
    ])
    def test_cli_has_command(self, command):
        """Every subcommand has help."""
        result = rilab(command, "--help")

        assert result.returncode == 0
        assert command in result.stdout.lower()


class TestInitCommand:
    """Test init command integration."""

    def test_init_creates_rilab_yaml(self, temp_dir):
        """Running 'rilab init' creates rilab.yaml."""
        result = rilab("init", "-d", str(temp_dir))

        assert result.returncode == 0
        assert (temp_dir / "rilab.yaml").exists()

    def test_init_twice_is_a_config_error(self, temp_dir):
        """Running 'rilab init' twice exits 2."""
        rilab("init", "-d", str(temp_dir))
        result = rilab("init", "-d", str(temp_dir))

        assert result.returncode == 2
        assert "already exists" in result.stderr


class TestCapCommand:
    """Test the capacity command."""

    def test_box_capacity(self, temp_dir):
        """cap of B_0 is the capacity of a point."""
        result = rilab("cap", "--box", "0", cwd=temp_dir)

        assert result.returncode == 0
        report = json.loads(result.stdout)
        assert report["sites"] == 1
        assert report["cap"] == pytest.approx(1 / 1.516386015, rel=1e-5)

    def test_missing_set_file(self, temp_dir):
        """A missing site-set file exits 2."""
        result = rilab("cap", "--set", str(temp_dir / "none.txt"), cwd=temp_dir)

        assert result.returncode == 2


class TestRunCommand:
    """Test batch runs from the command line."""

    def test_run_and_plot(self, temp_dir, config_file):
        """Records written by run feed plotdata."""
        records = temp_dir / "records.jsonl"
        result = rilab("run", "--config", str(config_file), "--trials", "5",
                       "--workers", "1", "--out", str(records), cwd=temp_dir)

        assert result.returncode == 0
        assert [r.params for r in read_jsonl(records)] == [{"u": 0.5}, {"u": 1.0}]

        plot = rilab("plotdata", "--records", str(records), "--kind", "decay", cwd=temp_dir)
        assert plot.returncode == 0
        assert plot.stdout.splitlines()[0] == "N,u,p_hat,lo,hi,trials"
        assert len(plot.stdout.splitlines()) == 3

    def test_invalid_config(self, temp_dir, sample_config):
        """Violated preconditions exit 2."""
        sample_config["walks"]["kappa"] = 1.0
        path = temp_dir / "bad.yaml"
        path.write_text(yaml.dump(sample_config))
        result = rilab("run", "--config", str(path), cwd=temp_dir)

        assert result.returncode == 2
        assert "kappa" in result.stderr


class TestEventsCommand:
    """Test the events command."""

    def test_frame_side_comes_from_config(self, mocker, capsys, temp_dir, sample_config):
        """geometry.L0_minus sets the frame side of w_minus."""
        sample_config["geometry"]["L0_minus"] = 7
        path = temp_dir / "frames.yaml"
        path.write_text(yaml.dump(sample_config))
        mocker.patch.object(events, "box_measure")
        trial = mocker.patch.object(events, "event_trial",
                                    return_value=events.EventResult("w_minus", True))
        mocker.patch.object(sys, "argv", ["rilab", "events", "--event", "w_minus",
                                          "--config", str(path), "--trials", "2"])

        main()

        assert trial.call_count == 2
        assert trial.call_args.args[0].L0_minus == 7
        row = json.loads(capsys.readouterr().out)
        assert row["params"]["L0_minus"] == 7
        assert row["hits"] == 2

    def test_small_frame_side_is_a_config_error(self, temp_dir):
        """--L0-minus below 6 exits 2."""
        result = rilab("events", "--event", "w_minus", "--L0-minus", "4", cwd=temp_dir)

        assert result.returncode == 2
        assert "L0_minus" in result.stderr


class TestVerifyCommand:
    """Test the acceptance suite entry point."""

    def test_fixture_criterion(self, temp_dir):
        """The packaged constants pass criterion 0."""
        result = rilab("verify", "--only", "0", cwd=temp_dir)

        assert result.returncode == 0
        assert "All criteria passed" in result.stdout

    def test_failing_criterion_exits_3(self, temp_dir):
        """A drifted fixture file fails with exit code 3."""
        path = temp_dir / "fixtures.yaml"
        path.write_text("green_origin: 1.6\ncap_origin: 0.659462\ngamma_c: 1.0\n"
                        "admissible_a: 0.05\nc73: 1.4577259475218659e-06\n")
        result = rilab("verify", "--only", "0", "--fixtures", str(path), cwd=temp_dir)

        assert result.returncode == 3
        assert "green_origin" in result.stdout + result.stderr


class TestInProcess:
    """Test the entry point and logging setup without a subprocess."""

    def test_main_without_command(self, mocker, capsys):
        """main() prints help and exits 1."""
        mocker.patch.object(sys, "argv", ["rilab"])

        with pytest.raises(SystemExit) as exc:
            main()

        assert exc.value.code == 1
        assert "usage:" in capsys.readouterr().out.lower()

    def test_verbose_selects_debug(self, mocker, monkeypatch):
        """-v turns on DEBUG."""
        monkeypatch.delenv("RILAB_LOG_LEVEL", raising=False)
        basic = mocker.patch("rilab.cli.logging.basicConfig")

        configure_logging(verbose=True)

        assert basic.call_args.kwargs["level"] == logging.DEBUG

    def test_env_overrides_verbose(self, mocker, monkeypatch):
        """RILAB_LOG_LEVEL wins over -v."""
        monkeypatch.setenv("RILAB_LOG_LEVEL", "warning")
        basic = mocker.patch("rilab.cli.logging.basicConfig")

        configure_logging(verbose=True)

        assert basic.call_args.kwargs["level"] == logging.WARNING
