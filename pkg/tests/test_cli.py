"""Test the sphere-waves command line: outputs, overrides and exit codes."""

import json
from pathlib import Path

import pytest

from sphere_waves import cli
from sphere_waves.cli import EXIT_BLOW_UP, EXIT_CONFIG, EXIT_INVARIANT, EXIT_OK, cli_main
from sphere_waves.verify import SuiteResult


CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def run_dir(out: Path, command: str) -> Path:
    matches = sorted(out.glob(f"{command}-*"))
    assert len(matches) == 1, matches
    return matches[0]


def read_json(path: Path) -> dict:
    return json.loads(path.read_text())


class TestSimulate:
    """Test the single-path subcommands."""

    def test_simulate_wave(self, tmp_path: Path, config_file: Path) -> None:
        """Test a wave run echoes its config and writes trajectory, metadata and timing."""
        out = tmp_path / "out"

        code = cli_main(["simulate-wave", "--config", str(config_file), "--out", str(out)], environ={})

        assert code == EXIT_OK
        directory = run_dir(out, "simulate-wave")
        for name in ("config.cfg", "config.json", "run.json", "trajectory.csv", "timing.json"):
            assert (directory / name).exists(), name
        meta = read_json(directory / "run.json")
        assert meta["seed"] == 11
        assert meta["replica"] == 0
        assert meta["n_steps"] == 25
        assert meta["config_sha256"] == read_json(directory / "config.json")["sha256"]
        assert meta["config_sha256"].startswith(directory.name.split("-")[-1])
        assert meta["energy_equality_residual"] >= 0.0

    def test_simulate_limit(self, tmp_path: Path, config_file: Path) -> None:
        """Test the limit run honours --drift and --replica."""
        out = tmp_path / "out"

        code = cli_main(
            [
                "simulate-limit", "--config", str(config_file), "--out", str(out),
                "--drift", "stratonovich", "--replica", "3",
            ],
            environ={},
        )

        assert code == EXIT_OK
        meta = read_json(run_dir(out, "simulate-limit") / "run.json")
        assert meta["drift_kind"] == "stratonovich"
        assert meta["replica"] == 3

    def test_projection_flag(self, tmp_path: Path, config_file: Path) -> None:
        """Test runs stay on the sphere by default and --project never reports the scheme's drift."""
        projected, free = tmp_path / "projected", tmp_path / "free"

        cli_main(["simulate-wave", "--config", str(config_file), "--out", str(projected)], environ={})
        code = cli_main(
            ["simulate-wave", "--config", str(config_file), "--out", str(free), "--project", "never"],
            environ={},
        )

        assert code == EXIT_OK
        assert read_json(run_dir(projected, "simulate-wave") / "run.json")["constraint_drift"] <= 1e-12
        drift = read_json(run_dir(free, "simulate-wave") / "run.json")["constraint_drift"]
        assert 0.0 < drift <= 1e-2

    def test_rerun_is_reproducible(self, tmp_path: Path, config_file: Path) -> None:
        """Test two runs with the same config export identical trajectories."""
        hashes = []
        for name in ("a", "b"):
            out = tmp_path / name
            cli_main(["simulate-wave", "--config", str(config_file), "--out", str(out)], environ={})
            hashes.append(read_json(run_dir(out, "simulate-wave") / "run.json")["trajectory_sha256"])

        assert hashes[0] == hashes[1]


class TestOverrides:
    """Test flags and environment variables on top of the config file."""

    def test_seed_flag(self, tmp_path: Path, config_file: Path) -> None:
        """Test --seed replaces the configured seed and changes the run directory."""
        out = tmp_path / "out"

        cli_main(["simulate-limit", "--config", str(config_file), "--out", str(out), "--seed", "5"], environ={})

        assert read_json(run_dir(out, "simulate-limit") / "run.json")["seed"] == 5

    def test_seed_environment(self, tmp_path: Path, config_file: Path) -> None:
        """Test SPHERE_WAVES_SEED is applied."""
        out = tmp_path / "out"

        cli_main(["simulate-limit", "--out", str(out)], environ={
            "SPHERE_WAVES_CONFIG": str(config_file),
            "SPHERE_WAVES_SEED": "21",
        })

        assert read_json(run_dir(out, "simulate-limit") / "run.json")["seed"] == 21

    def test_out_environment(self, tmp_path: Path, config_file: Path) -> None:
        """Test SPHERE_WAVES_OUT chooses the output root."""
        out = tmp_path / "env-out"

        code = cli_main(
            ["simulate-limit", "--config", str(config_file)], environ={"SPHERE_WAVES_OUT": str(out)}
        )

        assert code == EXIT_OK
        assert run_dir(out, "simulate-limit").is_dir()

    def test_bad_jobs_environment(self, tmp_path: Path, config_file: Path) -> None:
        """Test a non-integer SPHERE_WAVES_JOBS is a configuration error."""
        code = cli_main(
            ["sweep-mu", "--config", str(config_file), "--out", str(tmp_path)],
            environ={"SPHERE_WAVES_JOBS": "many"},
        )

        assert code == EXIT_CONFIG


class TestExitCodes:
    """Test the mapping of failures to exit codes."""

    def test_missing_config(self, tmp_path: Path) -> None:
        """Test commands other than verify need a config."""
        assert cli_main(["simulate-wave", "--out", str(tmp_path)], environ={}) == EXIT_CONFIG

    def test_unreadable_config(self, tmp_path: Path) -> None:
        """Test a config path that does not exist."""
        code = cli_main(["simulate-wave", "--config", str(tmp_path / "absent.cfg")], environ={})

        assert code == EXIT_CONFIG

    def test_unknown_command(self) -> None:
        """Test argparse failures map to the configuration exit code."""
        assert cli_main(["plot"], environ={}) == EXIT_CONFIG

    def test_help(self) -> None:
        """Test --help exits cleanly."""
        assert cli_main(["--help"], environ={}) == EXIT_OK

    def test_exclusion_budget(self, tmp_path: Path) -> None:
        """Test a sweep whose replicas all blow up exits with 3."""
        config = tmp_path / "explode.cfg"
        config.write_text(
            "[basis]\nn_modes = 8\n\n"
            "[noise]\nseed = 1\nkind = diagonal\n\n"
            "[diffusion]\nkind = diagonal\nprofile = constant\n"
            f"amplitudes = {', '.join(['1e12'] * 8)}\n\n"
            "[wave]\ndt = 0.002\nt_end = 0.04\n\n"
            "[sweep]\nmu_list = 0.2, 0.1\nreplicas = 2\n"
        )

        code = cli_main(["sweep-mu", "--config", str(config), "--out", str(tmp_path), "--jobs", "1"], environ={})

        assert code == EXIT_BLOW_UP

    def test_failed_suite(self, tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
        """Test a failing invariant suite exits with 4 and still writes verify.json."""
        def failing(name: str, ctx: object) -> SuiteResult:
            result = SuiteResult(name)
            result.check("always fails", 1.0, 0.0, False)
            return result

        monkeypatch.setattr(cli, "run_suite", failing)

        code = cli_main(["verify", "--suite", "geometry", "--out", str(tmp_path)], environ={})

        assert code == EXIT_INVARIANT
        assert read_json(run_dir(tmp_path, "verify") / "verify.json")["passed"] is False


class TestExperiments:
    """Test the sweep, discriminator, verify and report subcommands."""

    def test_sweep(self, tmp_path: Path, config_file: Path, capsys: pytest.CaptureFixture[str]) -> None:
        """Test the sweep writes its JSON report and both CSV tables."""
        code = cli_main(["sweep-mu", "--config", str(config_file), "--out", str(tmp_path), "--jobs", "1"], environ={})

        assert code == EXIT_OK
        directory = run_dir(tmp_path, "sweep-mu")
        report = read_json(directory / "convergence.json")
        assert [s["mu"] for s in report["summaries"]] == [0.2, 0.1]
        assert len(report["rows"]) == 6
        assert len((directory / "sweep.csv").read_text().splitlines()) == 7
        assert len((directory / "convergence.csv").read_text().splitlines()) == 3
        summary = json.loads(capsys.readouterr().out)
        assert set(summary["mean_error"]) == {"0.2", "0.1"}

    def test_discriminate(self, tmp_path: Path, config_file: Path) -> None:
        """Test the discriminator writes checkpoints at the configured count."""
        code = cli_main(
            ["discriminate", "--config", str(config_file), "--out", str(tmp_path), "--jobs", "1"], environ={}
        )

        assert code == EXIT_OK
        directory = run_dir(tmp_path, "discriminate")
        report = read_json(directory / "discriminator.json")
        assert len(report["t"]) == 3
        assert report["replicas"] == 4
        assert len((directory / "checkpoints.csv").read_text().splitlines()) == 4

    def test_report(self, tmp_path: Path, config_file: Path) -> None:
        """Test a saved convergence report is re-rendered to CSV."""
        cli_main(["sweep-mu", "--config", str(config_file), "--out", str(tmp_path / "runs"), "--jobs", "1"], environ={})
        source = run_dir(tmp_path / "runs", "sweep-mu") / "convergence.json"
        rendered = tmp_path / "rendered"

        code = cli_main(["report", "--input", str(source), "--out", str(rendered)], environ={})

        assert code == EXIT_OK
        assert (rendered / "sweep.csv").exists()
        assert (rendered / "convergence.csv").exists()

    def test_report_rejects_other_json(self, tmp_path: Path) -> None:
        """Test a JSON file that is not a report is a configuration error."""
        source = tmp_path / "other.json"
        source.write_text(json.dumps({"hello": "world"}))

        assert cli_main(["report", "--input", str(source), "--out", str(tmp_path)], environ={}) == EXIT_CONFIG

    def test_verify_without_config(self, tmp_path: Path) -> None:
        """Test verify runs on its built-in config."""
        code = cli_main(["verify", "--suite", "geometry", "--out", str(tmp_path)], environ={})

        assert code == EXIT_OK
        summary = read_json(run_dir(tmp_path, "verify") / "verify.json")
        assert summary["passed"] is True
        assert [s["name"] for s in summary["suites"]] == ["geometry"]


class TestShippedConfigs:
    """Test the recipes under configs/ run to completion with fewer replicas."""

    def test_sweep_recipe(self, tmp_path: Path) -> None:
        """Test configs/sweep.cfg finishes with no exclusions and decreasing errors."""
        environ = {"SPHERE_WAVES_SWEEP__REPLICAS": "3"}

        code = cli_main(
            ["sweep-mu", "--config", str(CONFIGS / "sweep.cfg"), "--out", str(tmp_path), "--jobs", "1"],
            environ=environ,
        )

        assert code == EXIT_OK
        report = read_json(run_dir(tmp_path, "sweep-mu") / "convergence.json")
        assert [s["mu"] for s in report["summaries"]] == [0.2, 0.1, 0.05, 0.025]
        assert all(s["n_excluded"] == 0 for s in report["summaries"])
        assert report["error_decreasing"] is True
        assert report["remainder_decreasing"] is True

    def test_discriminator_recipe(self, tmp_path: Path) -> None:
        """Test configs/section5.cfg separates the two drifts."""
        environ = {"SPHERE_WAVES_LIMIT__REPLICAS": "16"}

        code = cli_main(
            ["discriminate", "--config", str(CONFIGS / "section5.cfg"), "--out", str(tmp_path), "--jobs", "1"],
            environ=environ,
        )

        assert code == EXIT_OK
        report = read_json(run_dir(tmp_path, "discriminate") / "discriminator.json")
        assert report["replicas"] == 16
        assert report["distinguished"] is True
