"""Command-line front end.

    sphere-waves simulate-wave  --config PATH [--seed N] [--out DIR] [--project MODE]
    sphere-waves simulate-limit --config PATH [--drift KIND]
    sphere-waves sweep-mu       --config PATH [--jobs N]
    sphere-waves discriminate   --config PATH [--jobs N]
    sphere-waves verify         [--config PATH] [--suite NAME ...]
    sphere-waves report         --input REPORT.json [--out DIR]

Exit codes: 0 success, 2 configuration error, 3 numerical blow-up or exclusion budget exceeded,
4 invariant failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from collections.abc import Mapping
from pathlib import Path
from typing import Any

from sphere_waves.config import (
    SimConfig,
    build_basis,
    build_diffusion,
    build_initial_state,
    build_limit_params,
    build_noise,
    build_sweep_config,
    build_wave_params,
    config_hash,
    env_overrides,
    load_config,
    parse_config,
    with_overrides,
    write_config,
)
from sphere_waves.errors import (
    BlowUpError,
    ConfigError,
    ExclusionBudgetError,
    InvalidArgumentError,
    InvariantError,
)
from sphere_waves.harness import ConvergenceReport, small_mass_sweep
from sphere_waves.limit import DiscriminatorReport, discriminator_experiment, simulate_limit
from sphere_waves.profiling import TimingReport, measure_operation
from sphere_waves.store import RunStore, write_run_metadata
from sphere_waves.trajectory import Trajectory, constraint_drift, tangency_drift
from sphere_waves.verify import SUITES, SuiteSettings, VerifyContext, run_suite
from sphere_waves.wave import energy_equality_residual, simulate_wave

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BLOW_UP = 3
EXIT_INVARIANT = 4

ENV_PREFIX = "SPHERE_WAVES_"
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

# Used by `verify` when no config file is given.
DEFAULT_VERIFY_CONFIG = {"basis": {"n_modes": 16}, "noise": {"seed": 20240917}}


def configure_logging(level: str) -> None:
    logging.basicConfig(level=level.upper(), format=LOG_FORMAT, stream=sys.stderr)
    logging.getLogger().setLevel(level.upper())
    logging.captureWarnings(True)


def _drift_kind(value: str) -> str:
    kind = value.replace("-", "_")
    if kind not in ("noise_induced", "stratonovich"):
        raise argparse.ArgumentTypeError(f"drift must be noise-induced or stratonovich: {value}")
    return kind


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="INI config file")
    common.add_argument("--seed", type=int, help="64-bit noise seed (overrides [noise] seed)")
    common.add_argument("--jobs", type=int, help="worker processes (default: all cores)")
    common.add_argument("--out", type=Path, help="output directory (overrides [output] directory)")
    common.add_argument("--project", choices=("each-step", "never"), help="renormalize each step")
    common.add_argument("--drift", type=_drift_kind, help="noise-induced or stratonovich")
    common.add_argument(
        "--log-level", choices=("DEBUG", "INFO", "WARNING", "ERROR"), type=str.upper
    )

    parser = argparse.ArgumentParser(
        prog="sphere-waves",
        description="Constrained stochastic waves on the L2 sphere and their small-mass limit",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    wave = sub.add_parser("simulate-wave", parents=[common], help="integrate the wave system")
    wave.add_argument("--replica", type=int, default=0)
    limit = sub.add_parser("simulate-limit", parents=[common], help="integrate the limit equation")
    limit.add_argument("--replica", type=int, default=0)
    sub.add_parser("sweep-mu", parents=[common], help="small-mass convergence sweep")
    sub.add_parser("discriminate", parents=[common], help="noise-induced vs Stratonovich limit")
    verify = sub.add_parser("verify", parents=[common], help="run the invariant suites")
    verify.add_argument(
        "--suite", action="append", choices=SUITES, help="suite to run (repeatable, default all)"
    )
    report = sub.add_parser("report", parents=[common], help="re-render a JSON report as CSV")
    report.add_argument("--input", type=Path, required=True, help="report JSON to render")
    return parser


def resolve_config(args: argparse.Namespace, environ: Mapping[str, str]) -> SimConfig:
    """Config file (flag, then SPHERE_WAVES_CONFIG) with CLI flags applied on top of env."""
    path = args.config or environ.get(f"{ENV_PREFIX}CONFIG")
    if path is None:
        if args.command != "verify":
            raise ConfigError(f"{args.command} needs --config (or {ENV_PREFIX}CONFIG)")
        data: dict[str, dict[str, Any]] = {k: dict(v) for k, v in DEFAULT_VERIFY_CONFIG.items()}
        for section, values in env_overrides(environ).items():
            data.setdefault(section, {}).update(values)
        config = parse_config(data)
    else:
        config = load_config(path, environ)

    updates: dict[str, dict[str, Any]] = {}
    if args.seed is not None:
        updates["noise"] = {"seed": args.seed}
    if args.project is not None:
        updates["wave"] = {"project": args.project}
        updates["limit"] = {"project": args.project}
    if args.drift is not None:
        updates.setdefault("limit", {})["drift_kind"] = args.drift
    return with_overrides(config, updates) if updates else config


def _jobs(args: argparse.Namespace, environ: Mapping[str, str]) -> int | None:
    if args.jobs is not None:
        return args.jobs
    value = environ.get(f"{ENV_PREFIX}JOBS")
    if value is None:
        return None
    try:
        return int(value)
    except ValueError as exc:
        raise ConfigError(f"{ENV_PREFIX}JOBS must be an integer, got {value!r}") from exc


def _run_directory(
    args: argparse.Namespace, config: SimConfig, environ: Mapping[str, str]
) -> Path:
    base = args.out or environ.get(f"{ENV_PREFIX}OUT") or config.output.directory
    return Path(base) / f"{args.command}-{config_hash(config)[:12]}"


def echo_config(config: SimConfig, directory: Path) -> str:
    """Write config.cfg and config.json (with the content hash) into directory."""
    digest = config_hash(config)
    write_config(config, directory / "config.cfg")
    with open(directory / "config.json", "w") as f:
        json.dump({"config": config.model_dump(mode="json"), "sha256": digest}, f, indent=2)
    return digest


def _trajectory_outputs(
    tr: Trajectory, config: SimConfig, directory: Path, digest: str, extra: dict[str, Any]
) -> dict[str, Any]:
    metadata: dict[str, Any] = {
        "config_sha256": digest,
        "seed": tr.noise_ref[0],
        "replica": tr.noise_ref[1],
        "scheme": tr.scheme,
        "n_steps": tr.n_steps,
        "constraint_drift": constraint_drift(tr),
        "tangency_drift": tangency_drift(tr),
        **extra,
    }
    if "csv" in config.output.formats:
        with RunStore() as store:
            metadata["trajectory_sha256"] = store.write_trajectory_csv(
                tr, directory / "trajectory.csv"
            )
    write_run_metadata(directory, metadata)
    return metadata


def cmd_simulate_wave(
    args: argparse.Namespace, config: SimConfig, directory: Path
) -> dict[str, Any]:
    digest = echo_config(config, directory)
    basis = build_basis(config)
    nm = build_noise(config)
    dm = build_diffusion(config, basis, nm)
    p = build_wave_params(config)
    tr = simulate_wave(build_initial_state(config, basis), p, dm, nm, args.replica)
    residual = energy_equality_residual(tr, p, dm, nm)
    return _trajectory_outputs(
        tr, config, directory, digest, {"mu": p.mu, "energy_equality_residual": residual}
    )


def cmd_simulate_limit(
    args: argparse.Namespace, config: SimConfig, directory: Path
) -> dict[str, Any]:
    digest = echo_config(config, directory)
    basis = build_basis(config)
    nm = build_noise(config)
    dm = build_diffusion(config, basis, nm)
    p = build_limit_params(config)
    tr = simulate_limit(build_initial_state(config, basis).u, p, dm, nm, args.replica)
    return _trajectory_outputs(tr, config, directory, digest, {"drift_kind": p.drift_kind})


def write_sweep_outputs(report: ConvergenceReport, config: SimConfig, directory: Path) -> None:
    run_id = directory.name
    if "json" in config.output.formats:
        report.save_json(directory / "convergence.json")
    if "csv" in config.output.formats:
        with RunStore() as store:
            store.insert_sweep(run_id, report)
            store.export_sweep_csv(run_id, directory / "sweep.csv", directory / "convergence.csv")


def write_discriminator_outputs(
    report: DiscriminatorReport, config: SimConfig, directory: Path
) -> None:
    run_id = directory.name
    if "json" in config.output.formats:
        report.save_json(directory / "discriminator.json")
    if "csv" in config.output.formats:
        with RunStore() as store:
            store.insert_checkpoints(run_id, report)
            store.export_checkpoints_csv(run_id, directory / "checkpoints.csv")


def cmd_sweep(
    args: argparse.Namespace, config: SimConfig, directory: Path, jobs: int | None
) -> dict[str, Any]:
    digest = echo_config(config, directory)
    report = small_mass_sweep(build_sweep_config(config), jobs)
    report.metadata["config_sha256"] = digest
    write_sweep_outputs(report, config, directory)
    return {
        "config_sha256": digest,
        "error_decreasing": report.error_decreasing,
        "remainder_decreasing": report.remainder_decreasing,
        "monitors_bounded": report.monitors_bounded,
        "mean_error": {str(s.mu): s.mean_error for s in report.summaries},
    }


def cmd_discriminate(
    args: argparse.Namespace, config: SimConfig, directory: Path, jobs: int | None
) -> dict[str, Any]:
    digest = echo_config(config, directory)
    basis = build_basis(config)
    nm = build_noise(config)
    dm = build_diffusion(config, basis, nm)
    report = discriminator_experiment(
        build_initial_state(config, basis).u,
        build_limit_params(config),
        dm,
        nm,
        config.limit.replicas,
        config.limit.checkpoints,
        jobs=jobs,
    )
    report.metadata["config_sha256"] = digest
    write_discriminator_outputs(report, config, directory)
    return {
        "t": report.t,
        "mean_gap": report.mean_gap,
        "stderr": report.stderr,
        "predicted_first_order_gap": report.predicted_first_order_gap,
        "distinguished": report.distinguished,
    }


def cmd_verify(
    args: argparse.Namespace, config: SimConfig, directory: Path, jobs: int | None
) -> dict[str, Any]:
    echo_config(config, directory)
    ctx = VerifyContext(config, SuiteSettings(jobs=jobs))
    results = [run_suite(name, ctx) for name in (args.suite or list(SUITES))]
    summary = {"passed": all(r.passed for r in results), "suites": [r.to_dict() for r in results]}
    with open(directory / "verify.json", "w") as f:
        json.dump(summary, f, indent=2)
    if not summary["passed"]:
        failed = [r.name for r in results if not r.passed]
        raise InvariantError(f"failed suites: {', '.join(failed)}")
    return {"passed": True, "suites": [r.name for r in results]}


def cmd_report(args: argparse.Namespace, out: Path) -> dict[str, Any]:
    """Render a saved convergence or discriminator JSON into CSV plot data."""
    try:
        with open(args.input) as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read report {args.input}: {exc}") from exc
    run_id = args.input.stem
    out.mkdir(parents=True, exist_ok=True)
    with RunStore() as store:
        if "summaries" in data:
            report = ConvergenceReport.load_json(args.input)
            store.insert_sweep(run_id, report)
            store.export_sweep_csv(run_id, out / "sweep.csv", out / "convergence.csv")
            written = ["sweep.csv", "convergence.csv"]
        elif "mean_gap" in data:
            store.insert_checkpoints(run_id, DiscriminatorReport.load_json(args.input))
            store.export_checkpoints_csv(run_id, out / "checkpoints.csv")
            written = ["checkpoints.csv"]
        else:
            raise ConfigError(f"{args.input} is neither a convergence nor a discriminator report")
    return {"input": str(args.input), "written": [str(out / name) for name in written]}


def _dispatch(
    args: argparse.Namespace, config: SimConfig, directory: Path, jobs: int | None
) -> dict[str, Any]:
    if args.command == "simulate-wave":
        return cmd_simulate_wave(args, config, directory)
    if args.command == "simulate-limit":
        return cmd_simulate_limit(args, config, directory)
    if args.command == "sweep-mu":
        return cmd_sweep(args, config, directory, jobs)
    if args.command == "discriminate":
        return cmd_discriminate(args, config, directory, jobs)
    return cmd_verify(args, config, directory, jobs)


def cli_main(argv: list[str] | None = None, environ: Mapping[str, str] | None = None) -> int:
    """Parse arguments, run one subcommand and return its exit code."""
    env = os.environ if environ is None else environ
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG

    configure_logging(args.log_level or env.get(f"{ENV_PREFIX}LOG_LEVEL", "INFO"))
    try:
        if args.command == "report":
            out = args.out or Path(env.get(f"{ENV_PREFIX}OUT", "."))
            summary = cmd_report(args, out)
        else:
            config = resolve_config(args, env)
            jobs = _jobs(args, env)
            directory = _run_directory(args, config, env)
            directory.mkdir(parents=True, exist_ok=True)
            logger.info("%s: writing to %s", args.command, directory)
            timing = TimingReport(args.command)
            with measure_operation(args.command) as timer:
                summary = _dispatch(args, config, directory, jobs)
            timing.add_operation(timer.get_metrics())
            timing.save_json(directory / "timing.json")
            logger.info("%s finished in %.2fs", args.command, timer.duration)
    except (ConfigError, InvalidArgumentError) as exc:
        logger.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except (BlowUpError, ExclusionBudgetError) as exc:
        logger.error("%s", exc)
        return EXIT_BLOW_UP
    except InvariantError as exc:
        logger.error("invariant failure: %s", exc)
        return EXIT_INVARIANT

    print(json.dumps(summary, indent=2, default=str))
    return EXIT_OK


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
