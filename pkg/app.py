"""
cohevo: quasistatic cohesive crack growth along a prescribed path
Command-line entry point with the run, verify and study commands
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from config.run_config import ConfigError, RunConfig, StudyConfig
from config.settings import (
    BALANCE_RELATIVE_TOLERANCE,
    COHEVO_LOG_LEVEL,
    DEFAULT_OUTPUT_DIR,
    EXIT_CONFIG_ERROR,
    EXIT_INVARIANT_FAILED,
    EXIT_NOT_CONVERGED,
    EXIT_OK,
    LOG_FORMAT,
    STUDY_FILE,
    TRACE_FILE,
    validate_config,
)
from src.evolution.balance import energy_balance_report
from src.evolution.driver import StepNotConvergedError
from src.evolution.invariants import (
    InvariantResult,
    check_admissibility,
    check_dissipation,
    check_esssup_identity,
    check_irreversibility,
)
from src.harness.oracles import OracleMismatchError
from src.harness.runner import run_case
from src.harness.study import StudyError, convergence_study
from src.utils.export import ArtifactError, load_run, write_frame, write_run


def configure_logging(level: str = COHEVO_LOG_LEVEL):
    """Root logger on standard error"""
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format=LOG_FORMAT, stream=sys.stderr)


def _error(message: str):
    print(f"error: {message}", file=sys.stderr)


def parse_times(value: Optional[str]) -> Optional[List[float]]:
    """'0.25,0.5,1' -> [0.25, 0.5, 1.0]"""
    if value is None:
        return None
    try:
        return [float(item) for item in value.split(",") if item.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"--snapshots expects comma-separated times, got {value!r}") from exc


def cmd_run(args) -> int:
    """
    Run one configured evolution and write its artifacts

    Returns:
        0 on success, 1 on a configuration error, 2 on a non-converged step in strict mode
    """
    try:
        cfg = RunConfig.load(args.config)
    except ConfigError as exc:
        _error(str(exc))
        return EXIT_CONFIG_ERROR
    out = Path(args.out or cfg.output_dir or Path(DEFAULT_OUTPUT_DIR) / cfg.name)
    snapshots = args.snapshots if args.snapshots is not None else cfg.verification.snapshots

    try:
        result = run_case(cfg, strict=args.strict, seed=args.seed, root=Path(args.config).parent)
    except ConfigError as exc:
        _error(str(exc))
        return EXIT_CONFIG_ERROR
    except StepNotConvergedError as exc:
        out.mkdir(parents=True, exist_ok=True)
        write_frame(exc.trace.to_frame(), out / TRACE_FILE)
        _error(f"{exc} (partial trace of {len(exc.trace)} knots in {out / TRACE_FILE})")
        return EXIT_NOT_CONVERGED

    write_run(result, out, snapshots)
    summary = result.summary()
    print(f"run {cfg.name}: {summary['steps']} steps -> {out}")
    print(f"  max balance residual {result.balance.max_residual:.3e} (peak energy {result.balance.peak_energy:.3e})")
    print(f"  worst Euler residual {summary['euler_worst']:.3e}, worst stability violation "
          f"{summary['stability_worst']:.3e}")
    if result.trace.poisoned:
        print("  warning: some steps did not converge; the trace is marked poisoned", file=sys.stderr)
    return EXIT_OK


def verify_run(run_dir) -> List[InvariantResult]:
    """
    Re-check a stored run

    Raises:
        ArtifactError: If the run directory is incomplete
    """
    art = load_run(run_dir)
    gammas, phis = art.history["gamma"], art.history["phi"]
    results = [
        check_irreversibility(gammas),
        check_esssup_identity(gammas, phis),
        check_admissibility(gammas, phis),
        check_dissipation(art.trace["dissipation_increment"].to_numpy()),
    ]

    balance = energy_balance_report(art.trace)
    results.append(InvariantResult(name="lower_energy_inequality", passed=balance.lower_ok,
                                   worst=float(-balance.frame["residual"].min())))
    results.append(InvariantResult(name="energy_balance", passed=balance.passed(BALANCE_RELATIVE_TOLERANCE),
                                   worst=balance.relative_residual))

    if "poisoned" in art.trace.columns and bool(art.trace["poisoned"].any()):
        results.append(InvariantResult(name="solver_convergence", passed=False, worst=float("nan"),
                                       knot=int(art.trace["converged"].eq(False).idxmax())))

    for index, report in enumerate(art.euler):
        if not report.get("passed", True):
            measured = ", ".join(f"{k} {v:.3e}" for k, v in report.get("residuals", {}).items() if v)
            results.append(InvariantResult(name=f"euler_conditions at t={report.get('time')} ({measured})",
                                           passed=False, worst=float(report.get("worst") or 0.0), knot=index))
    if art.euler and all(r.get("passed", True) for r in art.euler):
        results.append(InvariantResult(name="euler_conditions", passed=True,
                                       worst=max(float(r.get("worst") or 0.0) for r in art.euler)))
    return results


def cmd_verify(args) -> int:
    """
    Returns:
        0 when every invariant holds, 1 for missing artifacts, 3 otherwise
    """
    try:
        results = verify_run(args.run_dir)
    except ArtifactError as exc:
        _error(str(exc))
        return EXIT_CONFIG_ERROR
    failed = [r for r in results if not r.passed]
    for result in results:
        print(result.message, file=sys.stderr if not result.passed else sys.stdout)
    return EXIT_OK if not failed else EXIT_INVARIANT_FAILED


def cmd_study(args) -> int:
    """
    Returns:
        0 when every threshold is met, 1 for an unusable study, 3 for missed thresholds
    """
    try:
        spec = StudyConfig.load(args.config)
        result = convergence_study(spec)
    except (ConfigError, StudyError, OracleMismatchError) as exc:
        _error(str(exc))
        return EXIT_CONFIG_ERROR
    except StepNotConvergedError as exc:
        _error(str(exc))
        return EXIT_NOT_CONVERGED
    out = Path(args.out or Path(DEFAULT_OUTPUT_DIR) / "study")
    out.mkdir(parents=True, exist_ok=True)
    write_frame(result.table, out / STUDY_FILE)
    print(f"study over levels {spec.levels}: {'passed' if result.passed else 'failed'} -> {out / STUDY_FILE}")
    for failure in result.failures:
        print(f"  {failure}", file=sys.stderr)
    return EXIT_OK if result.passed else EXIT_INVARIANT_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cohevo", description="Quasistatic cohesive crack growth")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="run one evolution")
    run.add_argument("--config", required=True, help="run configuration (JSON)")
    run.add_argument("--out", help="output directory")
    run.add_argument("--strict", action=argparse.BooleanOptionalAction, default=None,
                     help="abort on the first non-converged step (default from the configuration)")
    run.add_argument("--seed", type=int, help="seed of the stability competitors")
    run.add_argument("--snapshots", type=parse_times, help="comma-separated snapshot times")
    run.set_defaults(handler=cmd_run)

    verify = commands.add_parser("verify", help="re-check the invariants of a stored run")
    verify.add_argument("run_dir", help="run directory written by 'run'")
    verify.set_defaults(handler=cmd_verify)

    study = commands.add_parser("study", help="time-refinement study")
    study.add_argument("--config", required=True, help="study configuration (JSON)")
    study.add_argument("--out", help="output directory")
    study.set_defaults(handler=cmd_study)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    try:
        validate_config()
    except ValueError as exc:
        _error(str(exc))
        return EXIT_CONFIG_ERROR
    configure_logging()
    args = build_parser().parse_args(argv)
    return args.handler(args)


if __name__ == "__main__":
    sys.exit(main())
