"""
Dynamic Prior toolkit - command-line interface
Subcommands: prior, validate, simulate, report

Log records go to standard error; JSON results go to standard output.
Exit codes: 0 success, 1 calibration threshold failure under --strict,
2 usage, configuration or missing-input error.

Copyright (c) 2025 Ohrner IT GmbH
Licensed under the MIT License
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

import config
from bandit_core import ArmStats, RngStream
from batched_sim import (
    METHOD_NAMES, PolicyKind, PolicySpec, SimConfig, SimEnvironment, mean_allocation_table, read_trace_csv, regretted_impressions,
    reward_trajectory, run_experiment, table_row, winner_by_observed_rate, winner_by_true_rate, write_summary_table,
    write_trace_csv
)
from error_handler import (
    BanditToolkitError, ConfigError, ErrorCategory, ErrorContext, ErrorSeverity, MissingInputError,
    cli_error_handler
)
from mc_validation import (
    ValidationConfig, exploration_probability_exact, exploration_probability_mc, run_validation_grid,
    summarize_validation, write_summary_json, write_validation_csv
)
from prior_solver import PriorPolicyConfig, incumbent_posterior_with_prior, solve_prior_mean

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_THRESHOLD = 1
EXIT_USAGE = 2

# First stream-id component for the `prior` sanity check
PRIOR_STREAM = 4

DEFAULT_OUTPUT_DIR = "results"


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", dest="config_path", help="JSON configuration file")
    common.add_argument("--out", dest="output_dir", help=f"Output directory (default: {DEFAULT_OUTPUT_DIR})")
    common.add_argument("--seed", type=int, help=f"Master seed (default: {config.DEFAULT_SEED})")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="Override a configuration value, e.g. validation.mc_samples=1000 (repeatable)")
    common.add_argument("--workers", type=int, help="Worker processes for grid rows and replications")
    common.add_argument("--strict", action="store_true", help="Treat missed calibration thresholds as failure")
    common.add_argument("--verbose", "-v", action="store_true", help="Enable debug logging")

    parser = argparse.ArgumentParser(
        prog="dynamic-prior",
        description="Dynamic Prior Thompson Sampling: prior solver, Monte Carlo validation and batched simulation")
    subparsers = parser.add_subparsers(dest="command", required=True)

    prior = subparsers.add_parser("prior", parents=[common],
                                  help="Solve the new-arm prior for one incumbent")
    prior.add_argument("--n-k", dest="n_k", type=int, required=True, help="Incumbent observation count")
    prior.add_argument("--successes", type=int, required=True, help="Incumbent success count")
    prior.add_argument("--epsilon", type=float, default=config.DEFAULT_EPSILON,
                       help=f"Target exploration probability (default: {config.DEFAULT_EPSILON})")
    prior.add_argument("--r", type=float, default=config.DEFAULT_PRIOR_STRENGTH,
                       help=f"Prior strength (default: {config.DEFAULT_PRIOR_STRENGTH})")

    subparsers.add_parser("validate", parents=[common], help="Run the Monte Carlo validation grid")
    subparsers.add_parser("simulate", parents=[common], help="Run the batched insertion simulation")

    report = subparsers.add_parser("report", parents=[common], help="Consolidate validation and simulation outputs")
    report.add_argument("input_dir", nargs="?", help="Directory holding harness outputs (default: --out)")
    return parser


def configure_logging(verbose: bool = False) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format=config.LOG_FORMAT,
        stream=sys.stderr,
        force=True,
    )


def _emit(payload: Dict[str, Any]) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True))


def _output_dir(args: argparse.Namespace) -> Path:
    path = Path(args.output_dir or DEFAULT_OUTPUT_DIR)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _workers(args: argparse.Namespace, cfg: Dict[str, Any]) -> int:
    workers = args.workers if args.workers is not None else cfg["workers"]
    if workers < 1:
        raise ConfigError(f"--workers must be at least 1, got {workers}")
    return workers


def cmd_prior(args: argparse.Namespace, cfg: Dict[str, Any]) -> int:
    """
    Solve the prior for a single incumbent and print it with a sanity check.

    The sanity check draws 100,000 pairs from the new prior and the
    incumbent's prior-augmented posterior and reports how often the new arm
    wins, next to the same probability by numerical integration.
    """
    stats = ArmStats(n=args.n_k, successes=args.successes)
    policy = PriorPolicyConfig(epsilon=args.epsilon, r=args.r)
    solution = solve_prior_mean(stats.n, stats.p_hat, policy)
    incumbent = incumbent_posterior_with_prior(stats.n, stats.p_hat, solution.prior)

    rng = RngStream(cfg["seed"], (PRIOR_STREAM,))
    probability, std_error = exploration_probability_mc(solution.prior, incumbent, config.PRIOR_SANITY_SAMPLES, rng)

    payload = solution.to_dict()
    payload.update({
        "n_k": stats.n,
        "successes": stats.successes,
        "p_hat": stats.p_hat,
        "epsilon": policy.epsilon,
        "r": policy.r,
        "incumbent_posterior": incumbent.to_list(),
        "mc_samples": config.PRIOR_SANITY_SAMPLES,
        "mc_probability": probability,
        "mc_std_error": std_error,
        "exact_probability": exploration_probability_exact(solution.prior, incumbent),
    })
    _emit(payload)
    return EXIT_OK


def cmd_validate(args: argparse.Namespace, cfg: Dict[str, Any]) -> int:
    """Run the validation grid, write validation.csv and summary.json, and check the thresholds."""
    section = cfg["validation"]
    validation_cfg = ValidationConfig.from_dict(section, cfg["seed"])
    limits = {name: config.require_real(f"validation.{name}", section[name])
              for name in ("max_mean_deviation", "max_deviation", "min_within_two_se")}
    out_dir = _output_dir(args)

    rows = run_validation_grid(validation_cfg, workers=_workers(args, cfg))
    summary = summarize_validation(rows, expected_rows=validation_cfg.grid_size, **limits)

    write_validation_csv(rows, out_dir / config.VALIDATION_CSV)
    write_summary_json(summary, out_dir / config.VALIDATION_SUMMARY_JSON)
    _emit(summary)

    if summary["passed"]:
        logger.info(f"Calibration passed: mean deviation {summary['mean_deviation']:.5f}")
        return EXIT_OK

    strict = bool(args.strict or cfg["strict"])
    thresholds = summary["thresholds"]
    limits = {"mean_deviation": thresholds["max_mean_deviation"],
              "max_deviation": thresholds["max_deviation"],
              "within_two_se": thresholds["min_within_two_se"]}
    for metric, ok in summary["checks"].items():
        if not ok:
            cli_error_handler.log_threshold_miss(metric, summary[metric], limits[metric], strict)
    if summary["errors"]:
        logger.warning(f"{summary['errors']} validation rows failed in the solver")
    return EXIT_THRESHOLD if strict else EXIT_OK


def _policies(section: Dict[str, Any]) -> List[PolicySpec]:
    entries = section["policies"]
    if not isinstance(entries, list) or len(entries) == 0:
        raise ConfigError("simulation.policies must be a non-empty list")
    policies = [PolicySpec.from_dict(entry) for entry in entries]
    labels = [policy.label for policy in policies]
    duplicates = sorted({label for label in labels if labels.count(label) > 1})
    if duplicates:
        raise ConfigError(f"Duplicate simulation policies: {', '.join(duplicates)}")
    return policies


def cmd_simulate(args: argparse.Namespace, cfg: Dict[str, Any]) -> int:
    """Simulate every configured policy and write traces, the results table and per-run details."""
    section = cfg["simulation"]
    policies = _policies(section)
    sim_configs = [SimConfig.from_dict(section, policy, cfg["seed"]) for policy in policies]
    workers = _workers(args, cfg)

    out_dir = _output_dir(args)
    traces_dir = out_dir / config.TRACES_DIR
    traces_dir.mkdir(parents=True, exist_ok=True)

    table_rows = []
    runs = []
    trajectories = []
    allocations = []
    for sim_cfg in sim_configs:
        policy = sim_cfg.policy
        traces_by_rep, summary = run_experiment(sim_cfg, workers=workers)

        for rep_index, traces in enumerate(traces_by_rep):
            write_trace_csv(traces, rep_index, traces_dir / f"{policy.label}_rep{rep_index:02d}.csv")

        table_rows.append(table_row(policy, summary))
        param1, param2 = policy.parameters
        run = summary.to_dict()
        run.update({"method": policy.method_name, "kind": policy.kind.value, "param1": param1, "param2": param2})
        runs.append(run)

        trajectory = reward_trajectory(traces_by_rep)
        trajectory.insert(0, "label", policy.label)
        trajectories.append(trajectory)

        table = mean_allocation_table(traces_by_rep)
        batches, arms = np.indices(table.shape)
        allocations.append(pd.DataFrame({
            "label": policy.label,
            "batch": batches.ravel(),
            "arm": arms.ravel(),
            "fraction": table.ravel(),
        }))

    frame = write_summary_table(table_rows, out_dir / config.SIMULATION_SUMMARY_CSV)
    pd.concat(trajectories, ignore_index=True).to_csv(out_dir / config.TRAJECTORIES_CSV, index=False)
    pd.concat(allocations, ignore_index=True).to_csv(out_dir / config.ALLOCATION_CSV, index=False)

    environment = sim_configs[0].environment
    details = {
        "seed": cfg["seed"],
        "true_rates": list(environment.true_rates),
        "insertion_batch": environment.insertion_batch,
        "inserted_rate": environment.inserted_rate,
        "num_batches": sim_configs[0].num_batches,
        "pulls_per_batch": sim_configs[0].pulls_per_batch,
        "replications": sim_configs[0].replications,
        "runs": runs,
    }
    (out_dir / config.SIMULATION_RUNS_JSON).write_text(json.dumps(details, indent=2, sort_keys=True) + "\n",
                                                        encoding="utf-8")
    _emit({"rows": frame.to_dict(orient="records")})
    return EXIT_OK


def _relative_improvement(table: pd.DataFrame) -> Dict[str, Any]:
    dynamic = table[table["method"] == METHOD_NAMES[PolicyKind.DYNAMIC_PRIOR]]
    uniform = table[table["method"] == METHOD_NAMES[PolicyKind.UNIFORM_PRIOR]]
    if dynamic.empty or uniform.empty:
        logger.warning("Simulation summary lacks a Dynamic Prior or Uniform Prior row; no improvement computed")
        return {"relative_improvement": None}

    best = dynamic.loc[dynamic["final_reward"].idxmax()]
    baseline = float(uniform["final_reward"].iloc[0])
    return {
        "dynamic_param1": best["param1"],
        "dynamic_param2": best["param2"],
        "dynamic_final_reward": float(best["final_reward"]),
        "uniform_final_reward": baseline,
        "relative_improvement": (float(best["final_reward"]) - baseline) / baseline if baseline else None,
    }


def _load_traces(traces_dir: Path, label: str) -> List[list]:
    return [read_trace_csv(path) for path in sorted(traces_dir.glob(f"{label}_rep*.csv"))]


def _regretted_comparison(input_dir: Path) -> Optional[Dict[str, Any]]:
    """
    Compare regretted impressions of the best Dynamic Prior run against the Uniform Prior run.

    The winner is the arm with the highest true rate recorded in the run
    details, the same arm the simulation summary uses. Details written
    without true rates fall back to the highest observed success rate over
    both runs' traces. Returns None when run details or traces are unavailable.
    """
    runs_path = input_dir / config.SIMULATION_RUNS_JSON
    traces_dir = input_dir / config.TRACES_DIR
    if not runs_path.is_file() or not traces_dir.is_dir():
        logger.info("No run details or traces found; skipping regretted impressions")
        return None

    details = json.loads(runs_path.read_text(encoding="utf-8"))
    runs = details["runs"]
    dynamic_runs = [run for run in runs if run["kind"] == PolicyKind.DYNAMIC_PRIOR.value]
    uniform_runs = [run for run in runs if run["kind"] == PolicyKind.UNIFORM_PRIOR.value]
    if not dynamic_runs or not uniform_runs:
        return None
    dynamic_label = max(dynamic_runs, key=lambda run: run["final_reward_mean"])["label"]
    uniform_label = uniform_runs[0]["label"]

    dynamic_traces = _load_traces(traces_dir, dynamic_label)
    uniform_traces = _load_traces(traces_dir, uniform_label)
    if not dynamic_traces or not uniform_traces:
        return None

    if "true_rates" in details:
        winner = winner_by_true_rate(SimEnvironment(true_rates=details["true_rates"],
                                                    insertion_batch=details.get("insertion_batch"),
                                                    inserted_rate=details.get("inserted_rate", 0.0)))
    else:
        winner = winner_by_observed_rate(
            [trace for traces in dynamic_traces + uniform_traces for trace in traces])
    dynamic = [regretted_impressions(traces, winner) for traces in dynamic_traces]
    uniform = [regretted_impressions(traces, winner) for traces in uniform_traces]
    paired = list(zip(dynamic, uniform))
    return {
        "winner": winner,
        "dynamic_label": dynamic_label,
        "uniform_label": uniform_label,
        "dynamic_mean": float(np.mean(dynamic)),
        "uniform_mean": float(np.mean(uniform)),
        "difference": float(np.mean(dynamic) - np.mean(uniform)),
        "paired_replications": len(paired),
        "dynamic_paired_wins": sum(1 for d, u in paired if d < u),
    }


def cmd_report(args: argparse.Namespace, cfg: Dict[str, Any]) -> int:
    """
    Merge the validation summary and the simulation results table into report.json.

    Raises:
        MissingInputError: If summary.json or simulation_summary.csv is absent
    """
    input_dir = Path(args.input_dir or args.output_dir or DEFAULT_OUTPUT_DIR)
    required = [config.VALIDATION_SUMMARY_JSON, config.SIMULATION_SUMMARY_CSV]
    missing = [name for name in required if not (input_dir / name).is_file()]
    if missing:
        raise MissingInputError(f"Missing inputs in {input_dir}: {', '.join(missing)}", missing=missing)

    validation = json.loads((input_dir / config.VALIDATION_SUMMARY_JSON).read_text(encoding="utf-8"))
    table = pd.read_csv(input_dir / config.SIMULATION_SUMMARY_CSV,
                        dtype={"method": str, "param1": str, "param2": str}, keep_default_na=False)

    report = {
        "validation": validation,
        "simulation": table.to_dict(orient="records"),
        "comparison": _relative_improvement(table),
        "regretted_impressions": _regretted_comparison(input_dir),
    }

    out_dir = Path(args.output_dir) if args.output_dir else input_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / config.REPORT_JSON).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _emit(report)
    return EXIT_OK


COMMANDS = {
    "prior": cmd_prior,
    "validate": cmd_validate,
    "simulate": cmd_simulate,
    "report": cmd_report,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Parse arguments, load the layered configuration and dispatch the subcommand.

    Returns:
        int: Process exit code
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose)

    try:
        cfg = config.load_config(args.config_path, args.overrides, args.seed)
        return COMMANDS[args.command](args, cfg)
    except BanditToolkitError as e:
        context = ErrorContext(category=e.category, severity=ErrorSeverity.MEDIUM,
                               operation=f"cmd_{args.command}", parameters=e.parameters)
        message = cli_error_handler.log_error(e, context, include_stacktrace=False)
        print(f"error: {message}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        context = ErrorContext(category=ErrorCategory.SYSTEM, severity=ErrorSeverity.HIGH,
                               operation=f"cmd_{args.command}")
        cli_error_handler.log_error(e, context)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
