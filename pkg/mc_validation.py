"""
Dynamic Prior toolkit - Monte Carlo validation harness
Sweeps the (p, n, epsilon, r) grid, measures how often the new arm's draw
beats the incumbent's draw, and summarizes calibration against epsilon

Copyright (c) 2025 Ohrner IT GmbH
Licensed under the MIT License
"""

import itertools
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import integrate, stats

import config
from bandit_core import BetaParams, RngStream
from error_handler import (
    BanditToolkitError, ConfigError, EmptyInputError, InvalidParameterError, harness_error_handler
)
from prior_solver import (
    PriorPolicyConfig, incumbent_posterior_with_prior, solve_prior_mean
)

logger = logging.getLogger(__name__)

CSV_COLUMNS = ["p", "n", "epsilon", "r", "q_j", "empirical_prob", "std_error", "deviation", "source"]

# First stream-id component for validation rows
VALIDATION_STREAM = 1

ERROR_SOURCE = "Error"


@dataclass(frozen=True)
class ValidationConfig:
    """Parameter grid and Monte Carlo settings for a validation run."""
    p_values: Tuple[float, ...]
    n_values: Tuple[int, ...]
    epsilon_values: Tuple[float, ...]
    r_values: Tuple[float, ...]
    mc_samples: int = config.VALIDATION_MC_SAMPLES
    master_seed: int = config.DEFAULT_SEED

    def __post_init__(self):
        for name in ("p_values", "epsilon_values", "r_values"):
            object.__setattr__(self, name, config.require_list(f"validation.{name}", getattr(self, name)))
        object.__setattr__(self, "n_values",
                           config.require_list("validation.n_values", self.n_values, item=config.require_count))
        if isinstance(self.mc_samples, bool) or not isinstance(self.mc_samples, int) \
                or self.mc_samples < config.MIN_MC_SAMPLES:
            raise ConfigError(
                f"validation.mc_samples must be an integer >= {config.MIN_MC_SAMPLES}, got {self.mc_samples!r}")

    @classmethod
    def from_dict(cls, section: Dict[str, Any], master_seed: int) -> "ValidationConfig":
        """Build from the `validation` section of a loaded configuration."""
        return cls(
            p_values=section["p_values"],
            n_values=section["n_values"],
            epsilon_values=section["epsilon_values"],
            r_values=section["r_values"],
            mc_samples=section["mc_samples"],
            master_seed=master_seed,
        )

    @property
    def grid_size(self) -> int:
        return len(self.p_values) * len(self.n_values) * len(self.epsilon_values) * len(self.r_values)

    def grid(self) -> List[Tuple[float, int, float, float]]:
        """Grid points in lexicographic (p, n, epsilon, r) order."""
        return list(itertools.product(sorted(self.p_values), sorted(self.n_values),
                                      sorted(self.epsilon_values), sorted(self.r_values)))


@dataclass(frozen=True)
class ValidationRow:
    """One grid point: solved prior mean and the measured exploration probability."""
    p: float
    n: int
    epsilon: float
    r: float
    q_j: float
    empirical_prob: float
    std_error: float
    deviation: float
    source: str

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def exploration_probability_mc(new_prior: BetaParams, incumbent: BetaParams,
                               samples: int, rng: RngStream) -> Tuple[float, float]:
    """
    Monte Carlo estimate of P(X > Y) for independent X ~ new_prior, Y ~ incumbent.

    Ties count as failures.

    Args:
        new_prior (BetaParams): Distribution of the new arm's draw
        incumbent (BetaParams): Distribution of the incumbent's draw
        samples (int): Number of independent (x, y) pairs
        rng (RngStream): Stream to draw from

    Returns:
        tuple: (empirical probability, binomial standard error)
    """
    if isinstance(samples, bool) or not isinstance(samples, (int, np.integer)) or samples < 1:
        raise InvalidParameterError(f"samples must be a positive integer, got {samples!r}")
    x = rng.beta(new_prior.alpha, new_prior.beta, size=samples)
    y = rng.beta(incumbent.alpha, incumbent.beta, size=samples)
    prob = float(np.count_nonzero(x > y)) / samples
    return prob, math.sqrt(prob * (1.0 - prob) / samples)


def exploration_probability_exact(new_prior: BetaParams, incumbent: BetaParams) -> float:
    """
    P(X > Y) over the true Beta distributions, by numerical integration.

    Integrates f_X(x) F_Y(x) across the incumbent's bulk, where F_Y moves
    from 0 to 1, and adds the new arm's mass above that bulk.
    """
    x_dist = stats.beta(new_prior.alpha, new_prior.beta)
    y_dist = stats.beta(incumbent.alpha, incumbent.beta)
    low, median, high = y_dist.ppf([1e-12, 0.5, 1.0 - 1e-12])

    body, _ = integrate.quad(lambda x: x_dist.pdf(x) * y_dist.cdf(x), low, high,
                             points=[median], limit=200)
    return float(min(1.0, max(0.0, body + x_dist.sf(high))))


def validation_row(p: float, n: int, epsilon: float, r: float,
                   samples: int, rng: RngStream) -> ValidationRow:
    """Solve the prior for one grid point and measure its exploration probability."""
    cfg = PriorPolicyConfig(epsilon=epsilon, r=r)
    solution = solve_prior_mean(n, p, cfg)
    incumbent = incumbent_posterior_with_prior(n, p, solution.prior)
    prob, std_error = exploration_probability_mc(solution.prior, incumbent, samples, rng)
    return ValidationRow(p=p, n=n, epsilon=epsilon, r=r, q_j=solution.q_j,
                         empirical_prob=prob, std_error=std_error,
                         deviation=abs(prob - epsilon), source=solution.source.value)


def _run_row(task: Tuple[int, float, int, float, float, int, int]) -> ValidationRow:
    index, p, n, epsilon, r, samples, master_seed = task
    rng = RngStream(master_seed, (VALIDATION_STREAM, index))
    try:
        row = validation_row(p, n, epsilon, r, samples, rng)
    except BanditToolkitError as e:
        harness_error_handler.log_row_failure(
            e, "validation_row", {"p": p, "n": n, "epsilon": epsilon, "r": r}, row_index=index)
        nan = float("nan")
        return ValidationRow(p=p, n=n, epsilon=epsilon, r=r, q_j=nan, empirical_prob=nan,
                             std_error=nan, deviation=nan, source=ERROR_SOURCE)
    logger.debug(f"Row {index}: p={p} n={n} eps={epsilon} r={r} -> {row.empirical_prob:.5f} ({row.source})")
    return row


def run_validation_grid(cfg: ValidationConfig, workers: int = 1) -> List[ValidationRow]:
    """
    Validate the solver over every grid point.

    Each row draws from its own stream derived from (master_seed, row index),
    so results do not depend on the worker count or completion order. Solver
    errors are recorded in the row's source column instead of aborting.

    Args:
        cfg (ValidationConfig): Grid and Monte Carlo settings
        workers (int): Worker processes; 1 runs in-process

    Returns:
        list: ValidationRow per grid point in lexicographic (p, n, epsilon, r) order
    """
    tasks = [(index, p, n, epsilon, r, cfg.mc_samples, cfg.master_seed)
             for index, (p, n, epsilon, r) in enumerate(cfg.grid())]
    logger.info(f"Validating {len(tasks)} configurations at {cfg.mc_samples} samples each")

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            return list(executor.map(_run_row, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    return [_run_row(task) for task in tasks]


def _group_means(frame: pd.DataFrame, column: str) -> Dict[str, float]:
    grouped = frame.groupby(column, sort=True)["deviation"].mean()
    return {_key(value): float(mean) for value, mean in grouped.items()}


def _key(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def summarize_validation(rows: Sequence[ValidationRow],
                         max_mean_deviation: float = config.MAX_MEAN_DEVIATION,
                         max_deviation: float = config.MAX_DEVIATION,
                         min_within_two_se: float = config.MIN_WITHIN_TWO_SE,
                         expected_rows: Optional[int] = None) -> Dict[str, Any]:
    """
    Aggregate calibration metrics over validation rows.

    Args:
        rows: Validation rows; rows with a solver error are counted but not aggregated
        max_mean_deviation: Threshold on mean |empirical - epsilon|
        max_deviation: Threshold on max |empirical - epsilon|
        min_within_two_se: Threshold on the fraction of rows within two standard errors
        expected_rows: Grid size the rows should cover, reported alongside the count

    Returns:
        dict: Summary with overall metrics, breakdowns by epsilon, n, p and r, and pass flags

    Raises:
        EmptyInputError: If rows is empty
    """
    if len(rows) == 0:
        raise EmptyInputError("Cannot summarize an empty validation run")

    frame = pd.DataFrame([row.to_dict() for row in rows], columns=CSV_COLUMNS)
    valid = frame[frame["source"] != ERROR_SOURCE]

    summary: Dict[str, Any] = {
        "rows": int(len(frame)),
        "expected_rows": int(expected_rows) if expected_rows is not None else int(len(frame)),
        "errors": int(len(frame) - len(valid)),
        "sources": {str(source): int(count) for source, count in frame["source"].value_counts().sort_index().items()},
        "thresholds": {
            "max_mean_deviation": max_mean_deviation,
            "max_deviation": max_deviation,
            "min_within_two_se": min_within_two_se,
        },
    }

    if len(valid) == 0:
        summary.update({"mean_deviation": None, "max_deviation": None, "within_two_se": None,
                        "by_epsilon": {}, "by_n": {}, "by_p": {}, "by_r": {},
                        "checks": {}, "passed": False})
        return summary

    within = valid["deviation"] <= 2.0 * valid["std_error"]
    mean_dev = float(valid["deviation"].mean())
    max_dev = float(valid["deviation"].max())
    within_fraction = float(within.mean())

    checks = {
        "mean_deviation": mean_dev < max_mean_deviation,
        "max_deviation": max_dev <= max_deviation,
        "within_two_se": within_fraction >= min_within_two_se,
    }
    summary.update({
        "mean_deviation": mean_dev,
        "max_deviation": max_dev,
        "within_two_se": within_fraction,
        "by_epsilon": _group_means(valid, "epsilon"),
        "by_n": _group_means(valid, "n"),
        "by_p": _group_means(valid, "p"),
        "by_r": _group_means(valid, "r"),
        "checks": checks,
        "passed": all(checks.values()) and summary["errors"] == 0,
    })
    return summary


def write_validation_csv(rows: Sequence[ValidationRow], path: Path) -> None:
    """Write one row per grid point with the fixed header."""
    frame = pd.DataFrame([row.to_dict() for row in rows], columns=CSV_COLUMNS)
    frame.to_csv(path, index=False)
    logger.info(f"Wrote {len(frame)} validation rows to {path}")


def write_summary_json(summary: Dict[str, Any], path: Path) -> None:
    path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
