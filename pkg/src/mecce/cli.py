"""
mecce command-line interface.

Subcommands:
    run <config>                                   solve an experiment for each seed
    verify                                         run the built-in acceptance suite
    sweep <config> --param NAME --values V1,V2     one run per parameter value

Exit status is 0 on success, 2 for an invalid config, and 1 for a solver
failure or a failed verification check.
"""

import argparse
import logging
import sys
from pathlib import Path

from mecce.backend.experiment_backend import SWEEP_PARAMETERS, ExperimentBackend
from mecce.backend.verification import CHECK_NAMES, VerificationSuite
from mecce.config.experiment import ExperimentConfig, config_hash, load_config
from mecce.config.settings import MECCE_MAX_WORKERS
from mecce.engine.cce import ClusterEvaluationError, extract_t2

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INVALID_CONFIG = 2


def parse_arguments(argv: list[str] | None = None) -> argparse.Namespace:
    """Parse and validate command-line arguments."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--threads",
        type=int,
        default=MECCE_MAX_WORKERS,
        help=f"Worker processes for cluster evaluation (default: {MECCE_MAX_WORKERS})",
    )
    common.add_argument("--out", type=Path, help="Output directory (overrides the config)")
    common.add_argument("--seed", type=int, help="Run a single seed instead of the config list")
    common.add_argument("--verbose", "-v", action="store_true", help="Enable debug logging")

    parser = argparse.ArgumentParser(
        prog="mecce",
        description="Central spin decoherence with the master-equation cluster expansion",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  mecce run configs/chain_fid.yaml --out results/chain_fid
  mecce sweep configs/lattice_echo.yaml --param gamma --values 0.1,1,6.28,30
  mecce sweep configs/nv_surface.yaml --param depth --values 2,5,10,20,50
  mecce verify --quick
        """,
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    run = subparsers.add_parser("run", parents=[common], help="Run an experiment config")
    run.add_argument("config", type=Path, help="Experiment YAML file")

    verify = subparsers.add_parser("verify", parents=[common], help="Run the acceptance suite")
    verify.add_argument("--quick", action="store_true", help="Fewer seeds per check")
    verify.add_argument(
        "--check",
        action="append",
        choices=CHECK_NAMES,
        help="Run only this check (repeatable)",
    )
    verify.add_argument(
        "--tolerance",
        action="append",
        default=[],
        metavar="NAME=VALUE",
        help="Override a check tolerance (repeatable)",
    )

    sweep = subparsers.add_parser("sweep", parents=[common], help="Sweep one parameter")
    sweep.add_argument("config", type=Path, help="Experiment YAML file")
    sweep.add_argument("--param", required=True, help=f"One of {', '.join(SWEEP_PARAMETERS)}")
    sweep.add_argument("--values", required=True, help="Comma-separated parameter values")

    args = parser.parse_args(argv)
    if args.threads < 1:
        parser.error("--threads must be at least 1")
    return args


def parse_values(text: str) -> list[float]:
    try:
        values = [float(item) for item in text.split(",") if item.strip()]
    except ValueError as exc:
        raise ValueError(f"invalid --values list '{text}'") from exc
    if not values:
        raise ValueError("--values must name at least one value")
    return values


def parse_tolerances(items: list[str]) -> dict[str, float]:
    tolerances = {}
    for item in items:
        name, _, value = item.partition("=")
        if not value:
            raise ValueError(f"tolerance override '{item}' must look like NAME=VALUE")
        tolerances[name.strip()] = float(value)
    return tolerances


def load_experiment(path: Path, seed: int | None) -> ExperimentConfig:
    """Load a config and build its first SystemSpec so model errors surface early."""
    config = load_config(path)
    config.to_system_spec(seed)
    return config


def print_run_summary(records) -> None:
    print("\n📊 Run Summary:")
    for record in records:
        for label, curve in record.curves.items():
            t2 = extract_t2(curve)
            t2_text = f"{t2:.6g}" if t2 is not None else "no 1/e crossing"
            print(f"   • seed {record.seed} {label}: T2 = {t2_text}")


def cmd_run(args: argparse.Namespace) -> int:
    try:
        config = load_experiment(args.config, args.seed)
    except (OSError, ValueError) as e:
        print(f"❌ Invalid config {args.config}: {e}")
        return EXIT_INVALID_CONFIG

    print(f"📄 Config: {args.config} ({config_hash(config)[:12]})")
    backend = ExperimentBackend(args.out, args.threads, "DEBUG" if args.verbose else "INFO")
    seeds = [args.seed] if args.seed is not None else None
    try:
        records = backend.run(config, seeds)
    except ClusterEvaluationError as e:
        print(f"❌ Solver failure: {e}")
        return EXIT_FAILURE
    except Exception as e:
        print(f"❌ Run failed: {e}")
        if args.verbose:
            import traceback

            traceback.print_exc()
        return EXIT_FAILURE

    print_run_summary(records)
    print(f"✅ Results saved to: {backend.output_directory(config)}")
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    try:
        tolerances = parse_tolerances(args.tolerance)
        suite = VerificationSuite(args.quick, tolerances, args.threads)
    except ValueError as e:
        print(f"❌ {e}")
        return EXIT_INVALID_CONFIG

    results = suite.run(args.check)
    print("\n🧪 Verification:")
    for result in results:
        print(f"   {result.line()}")
    failed = [result.name for result in results if not result.passed]
    if failed:
        print(f"❌ {len(failed)} check(s) failed: {', '.join(failed)}")
        return EXIT_FAILURE
    print(f"✅ All {len(results)} checks passed")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    try:
        config = load_experiment(args.config, args.seed)
        values = parse_values(args.values)
        backend = ExperimentBackend(args.out, args.threads, "DEBUG" if args.verbose else "INFO")
        for value in values:
            backend.sweep_config(config, args.param, value)
    except (OSError, ValueError) as e:
        print(f"❌ Invalid sweep: {e}")
        return EXIT_INVALID_CONFIG

    seeds = [args.seed] if args.seed is not None else None
    try:
        table = backend.sweep(config, args.param, values, seeds)
    except ClusterEvaluationError as e:
        print(f"❌ Solver failure: {e}")
        return EXIT_FAILURE
    except Exception as e:
        print(f"❌ Sweep failed: {e}")
        return EXIT_FAILURE

    print(f"\n📈 {args.param} sweep:")
    print(table.to_string(index=False))
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    """Execute main CLI functionality."""
    args = parse_arguments(argv)

    log_level = logging.DEBUG if args.verbose else logging.INFO
    logging.basicConfig(
        level=log_level, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    )

    commands = {"run": cmd_run, "verify": cmd_verify, "sweep": cmd_sweep}
    try:
        return commands[args.command](args)
    except KeyboardInterrupt:
        print("\n🛑 Interrupted by user")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
