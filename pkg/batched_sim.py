"""
Dynamic Prior toolkit - batched simulation harness
Runs Thompson Sampling under batched updates with one mid-flight arm insertion
and compares how different cold-start policies treat the new arm

Copyright (c) 2025 Ohrner IT GmbH
Licensed under the MIT License
"""

import hashlib
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

import config
from bandit_core import (
    ArmPosterior, BetaParams, RngStream, UNIFORM_PRIOR, batch_apply, select_arms
)
from error_handler import (
    BanditToolkitError, ConfigError, EmptyInputError, InvalidParameterError, harness_error_handler
)
from prior_solver import PriorPolicyConfig, dynamic_prior_for_arms

logger = logging.getLogger(__name__)

# First stream-id components; pre-insertion batches share randomness across policies
SHARED_STREAM = 2
POLICY_STREAM = 3

CI_Z = 1.96

TRACE_COLUMNS = ["replication", "batch", "arm", "pulls", "successes", "batch_reward", "cumulative_reward"]
TABLE_COLUMNS = ["method", "param1", "param2", "final_reward", "std_error", "ci_lower", "ci_upper"]


class PolicyKind(Enum):
    """Cold-start policies for the inserted arm."""
    DYNAMIC_PRIOR = "dynamic_prior"
    UNIFORM_PRIOR = "uniform_prior"
    FORCED_EXPLORATION = "forced_exploration"
    HARD_RESET = "hard_reset"


METHOD_NAMES = {
    PolicyKind.DYNAMIC_PRIOR: "Dynamic Prior",
    PolicyKind.UNIFORM_PRIOR: "Uniform Prior",
    PolicyKind.FORCED_EXPLORATION: "Fixed Horizon Forced Exploration",
    PolicyKind.HARD_RESET: "Hard Reset",
}


@dataclass(frozen=True)
class PolicySpec:
    """
    How the inserted arm is introduced.

    DYNAMIC_PRIOR solves a prior against the best observed arm; UNIFORM_PRIOR
    starts it at Beta(1,1); FORCED_EXPLORATION also starts it at `base_prior`
    and routes each pull to it with probability `alpha` for `k_batches`
    batches; HARD_RESET discards all history and restarts every arm at Beta(1,1).
    """
    kind: PolicyKind
    prior_config: Optional[PriorPolicyConfig] = None
    alpha: Optional[float] = None
    k_batches: Optional[int] = None
    base_prior: BetaParams = UNIFORM_PRIOR

    def __post_init__(self):
        if self.kind == PolicyKind.DYNAMIC_PRIOR and self.prior_config is None:
            raise ConfigError("dynamic_prior policy needs epsilon and r")
        if self.kind == PolicyKind.FORCED_EXPLORATION:
            if self.alpha is None or not 0.0 < float(self.alpha) < 1.0:
                raise ConfigError(f"forced_exploration alpha must lie in (0, 1), got {self.alpha!r}")
            if isinstance(self.k_batches, bool) or not isinstance(self.k_batches, int) or self.k_batches < 1:
                raise ConfigError(f"forced_exploration k_batches must be an integer >= 1, got {self.k_batches!r}")

    @classmethod
    def dynamic_prior(cls, epsilon: float, r: float) -> "PolicySpec":
        return cls(PolicyKind.DYNAMIC_PRIOR, prior_config=PriorPolicyConfig(epsilon=epsilon, r=r))

    @classmethod
    def uniform_prior(cls) -> "PolicySpec":
        return cls(PolicyKind.UNIFORM_PRIOR)

    @classmethod
    def forced_exploration(cls, alpha: float, k_batches: int,
                           base_prior: BetaParams = UNIFORM_PRIOR) -> "PolicySpec":
        return cls(PolicyKind.FORCED_EXPLORATION, alpha=float(alpha), k_batches=k_batches, base_prior=base_prior)

    @classmethod
    def hard_reset(cls) -> "PolicySpec":
        return cls(PolicyKind.HARD_RESET)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PolicySpec":
        """
        Create a PolicySpec from a config entry such as {"kind": "dynamic_prior", "epsilon": 0.01, "r": 0.001}.

        Raises:
            ConfigError: If the entry is not an object, the kind is unknown, or parameters are missing or invalid
        """
        if not isinstance(data, dict):
            raise config.invalid_value("simulation.policies[]", data, "must be an object with a 'kind' key")
        try:
            kind = PolicyKind(data.get("kind"))
        except ValueError as e:
            raise ConfigError(f"Unknown policy kind: {data.get('kind')!r}") from e
        field_name = f"simulation.policies[{kind.value}]"
        try:
            if kind == PolicyKind.DYNAMIC_PRIOR:
                return cls.dynamic_prior(config.require_real(f"{field_name}.epsilon", data["epsilon"]),
                                         config.require_real(f"{field_name}.r", data["r"]))
            if kind == PolicyKind.FORCED_EXPLORATION:
                base = config.require_list(f"{field_name}.base_prior", data.get("base_prior", [1.0, 1.0]))
                if len(base) != 2:
                    raise config.invalid_value(f"{field_name}.base_prior", list(base), "must be [alpha, beta]")
                return cls.forced_exploration(config.require_real(f"{field_name}.alpha", data["alpha"]),
                                              data["k_batches"], BetaParams(*base))
        except KeyError as e:
            raise ConfigError(f"Policy {kind.value} is missing parameter {e.args[0]!r}") from e
        except InvalidParameterError as e:
            raise ConfigError(f"Policy {kind.value}: {e.get_user_message()}") from e
        return cls(kind)

    @property
    def label(self) -> str:
        """Stable identifier used for file names and stream derivation."""
        if self.kind == PolicyKind.DYNAMIC_PRIOR:
            return f"dynamic_prior_eps{self.prior_config.epsilon:g}_r{self.prior_config.r:g}"
        if self.kind == PolicyKind.FORCED_EXPLORATION:
            return f"forced_exploration_alpha{self.alpha:g}_k{self.k_batches}"
        return self.kind.value

    @property
    def policy_id(self) -> int:
        return int.from_bytes(hashlib.sha256(self.label.encode("utf-8")).digest()[:4], "big")

    @property
    def method_name(self) -> str:
        return METHOD_NAMES[self.kind]

    @property
    def parameters(self) -> Tuple[str, str]:
        """Human-readable (param1, param2) for the results table."""
        if self.kind == PolicyKind.DYNAMIC_PRIOR:
            return f"epsilon={self.prior_config.epsilon:g}", f"r={self.prior_config.r:g}"
        if self.kind == PolicyKind.FORCED_EXPLORATION:
            return f"alpha={self.alpha:g}", f"K={self.k_batches}"
        return "Parameter-Independent", ""


@dataclass(frozen=True)
class SimEnvironment:
    """True success rates of the initial arms and the arm inserted mid-run."""
    true_rates: Tuple[float, ...]
    insertion_batch: Optional[int] = None
    inserted_rate: float = config.SIM_INSERTED_RATE

    def __post_init__(self):
        rates = config.require_list("simulation.true_rates", self.true_rates)
        inserted = config.require_real("simulation.inserted_rate", self.inserted_rate)
        if any(not 0.0 <= rate <= 1.0 for rate in rates + (inserted,)):
            raise ConfigError("success rates must lie in [0, 1]")
        object.__setattr__(self, "true_rates", rates)
        object.__setattr__(self, "inserted_rate", inserted)

    @property
    def num_arms(self) -> int:
        """Arm count at the end of a run, including the inserted arm."""
        return len(self.true_rates) + (1 if self.insertion_batch is not None else 0)

    def all_rates(self) -> np.ndarray:
        rates = list(self.true_rates)
        if self.insertion_batch is not None:
            rates.append(self.inserted_rate)
        return np.array(rates)


@dataclass(frozen=True)
class SimConfig:
    """Batch structure, replication count, seed and policy for one simulated setting."""
    environment: SimEnvironment
    num_batches: int = config.SIM_NUM_BATCHES
    pulls_per_batch: int = config.SIM_PULLS_PER_BATCH
    replications: int = config.SIM_REPLICATIONS
    master_seed: int = config.DEFAULT_SEED
    policy: PolicySpec = field(default_factory=PolicySpec.uniform_prior)

    def __post_init__(self):
        for name in ("num_batches", "pulls_per_batch", "replications"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise ConfigError(f"{name} must be an integer >= 1, got {value!r}")
        insertion = self.environment.insertion_batch
        if insertion is not None:
            if isinstance(insertion, bool) or not isinstance(insertion, int) \
                    or not 0 <= insertion < self.num_batches:
                raise ConfigError(
                    f"insertion_batch must lie in [0, {self.num_batches - 1}], got {insertion!r}")

    @classmethod
    def from_dict(cls, section: Dict[str, Any], policy: PolicySpec, master_seed: int) -> "SimConfig":
        """Build from the `simulation` section of a loaded configuration."""
        environment = SimEnvironment(
            true_rates=section["true_rates"],
            insertion_batch=section["insertion_batch"],
            inserted_rate=section["inserted_rate"],
        )
        return cls(environment=environment,
                   num_batches=section["num_batches"],
                   pulls_per_batch=section["pulls_per_batch"],
                   replications=section["replications"],
                   master_seed=master_seed,
                   policy=policy)


@dataclass(frozen=True)
class BatchTrace:
    """Per-arm pulls and successes of one batch, plus the running reward."""
    batch_index: int
    per_arm_pulls: Tuple[int, ...]
    per_arm_successes: Tuple[int, ...]
    batch_reward: int
    cumulative_reward: int


@dataclass
class RunSummary:
    """Final-reward statistics over the replications of one policy."""
    final_reward_mean: float
    final_reward_se: float
    ci_lower: float
    ci_upper: float
    regretted_fraction_mean: float
    label: str = ""
    replications: int = 0
    final_rewards: List[int] = field(default_factory=list)
    post_insertion_reward_mean: Optional[float] = None
    regretted_fractions: List[float] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "label": self.label,
            "replications": self.replications,
            "final_reward_mean": self.final_reward_mean,
            "final_reward_se": self.final_reward_se,
            "ci_lower": self.ci_lower,
            "ci_upper": self.ci_upper,
            "regretted_fraction_mean": self.regretted_fraction_mean,
            "post_insertion_reward_mean": self.post_insertion_reward_mean,
            "final_rewards": list(self.final_rewards),
            "regretted_fractions": list(self.regretted_fractions),
        }


def _insert_arm(policy: PolicySpec, posteriors: List[ArmPosterior]) -> List[ArmPosterior]:
    """Add the new arm according to the policy; HARD_RESET also wipes the existing arms."""
    if policy.kind == PolicyKind.HARD_RESET:
        logger.debug("Hard reset: all arms restart at Beta(1,1)")
        return [ArmPosterior() for _ in range(len(posteriors) + 1)]

    if policy.kind == PolicyKind.DYNAMIC_PRIOR:
        incumbent, solution = dynamic_prior_for_arms([posterior.stats for posterior in posteriors],
                                                     policy.prior_config)
        logger.debug(f"Dynamic prior against arm {incumbent}: q_j={solution.q_j:.6g} "
                     f"prior={solution.prior.to_list()} ({solution.source.value})")
        prior = solution.prior
    else:
        prior = policy.base_prior
    return list(posteriors) + [ArmPosterior.from_prior(prior)]


def _forced_routes(rng: RngStream, pulls: int, alpha: float) -> np.ndarray:
    """Mask of pulls routed to the new arm regardless of the Thompson draw."""
    return rng.random(pulls) < alpha


def _in_forced_window(policy: PolicySpec, batch: int, insertion_batch: Optional[int]) -> bool:
    if policy.kind != PolicyKind.FORCED_EXPLORATION or insertion_batch is None:
        return False
    return insertion_batch <= batch < insertion_batch + policy.k_batches


def run_replication(cfg: SimConfig, rep_index: int) -> List[BatchTrace]:
    """
    Simulate one replication of a batched Thompson Sampling run.

    Within a batch the posteriors are frozen: every pull draws from the same
    posteriors, Bernoulli rewards are tallied, and the tallies are folded in
    only at the batch boundary. At the start of the insertion batch the new
    arm is added as the policy prescribes.

    Args:
        cfg (SimConfig): Simulation setting
        rep_index (int): Replication index, part of every stream id

    Returns:
        list: One BatchTrace per batch; per-arm lists always cover every arm
              of the run, with zeros for the new arm before insertion
    """
    env = cfg.environment
    policy = cfg.policy
    insertion = env.insertion_batch
    rates = env.all_rates()
    num_arms = env.num_arms

    shared = RngStream(cfg.master_seed, (SHARED_STREAM, rep_index))
    own = RngStream(cfg.master_seed, (POLICY_STREAM, policy.policy_id, rep_index))

    posteriors = [ArmPosterior() for _ in env.true_rates]
    cumulative = 0
    traces: List[BatchTrace] = []

    for batch in range(cfg.num_batches):
        if insertion is not None and batch == insertion:
            posteriors = _insert_arm(policy, posteriors)
        pre_insertion = insertion is None or batch < insertion
        rng = shared.child(batch) if pre_insertion else own.child(batch)

        frozen = tuple(posteriors)
        choices = select_arms(frozen, rng, cfg.pulls_per_batch)
        if _in_forced_window(policy, batch, insertion):
            choices = np.where(_forced_routes(rng, cfg.pulls_per_batch, policy.alpha), len(frozen) - 1, choices)
        rewards = rng.random(cfg.pulls_per_batch) < rates[choices]

        pulls = np.bincount(choices, minlength=num_arms)
        successes = np.bincount(choices, weights=rewards, minlength=num_arms).astype(np.int64)
        posteriors = [batch_apply(posterior, int(successes[arm]), int(pulls[arm] - successes[arm]))
                      for arm, posterior in enumerate(frozen)]

        batch_reward = int(successes.sum())
        cumulative += batch_reward
        traces.append(BatchTrace(batch_index=batch,
                                 per_arm_pulls=tuple(int(count) for count in pulls),
                                 per_arm_successes=tuple(int(count) for count in successes),
                                 batch_reward=batch_reward,
                                 cumulative_reward=cumulative))

    logger.debug(f"{policy.label} replication {rep_index}: final reward {cumulative}")
    return traces


def regretted_impressions(traces: Sequence[BatchTrace], winner: int) -> float:
    """
    Fraction of all pulls that went to arms other than the winner.

    Raises:
        EmptyInputError: If there are no traces
        InvalidParameterError: If winner is not a valid arm index
    """
    if len(traces) == 0:
        raise EmptyInputError("Cannot compute regretted impressions without traces")
    num_arms = len(traces[0].per_arm_pulls)
    if isinstance(winner, bool) or not 0 <= winner < num_arms:
        raise InvalidParameterError(f"winner must be an arm index in [0, {num_arms - 1}], got {winner!r}")
    total = sum(sum(trace.per_arm_pulls) for trace in traces)
    to_winner = sum(trace.per_arm_pulls[winner] for trace in traces)
    return 1.0 - to_winner / total


def winner_by_true_rate(environment: SimEnvironment) -> int:
    """Arm with the highest true rate (lowest index on ties)."""
    return int(np.argmax(environment.all_rates()))


def winner_by_observed_rate(traces: Sequence[BatchTrace]) -> int:
    """Arm with the highest observed success rate over the whole run, for when true rates are unknown."""
    if len(traces) == 0:
        raise EmptyInputError("Cannot pick a winner without traces")
    pulls = np.sum([trace.per_arm_pulls for trace in traces], axis=0)
    successes = np.sum([trace.per_arm_successes for trace in traces], axis=0)
    rates = np.where(pulls > 0, successes / np.maximum(pulls, 1), -1.0)
    return int(np.argmax(rates))


def allocation_table(traces: Sequence[BatchTrace]) -> np.ndarray:
    """
    Per-batch share of pulls for each arm.

    Returns:
        np.ndarray: (batches, arms) fractions; each row sums to 1
    """
    if len(traces) == 0:
        raise EmptyInputError("Cannot build an allocation table without traces")
    pulls = np.array([trace.per_arm_pulls for trace in traces], dtype=float)
    return pulls / pulls.sum(axis=1, keepdims=True)


def mean_allocation_table(traces_by_rep: Sequence[Sequence[BatchTrace]]) -> np.ndarray:
    """Allocation fractions averaged over replications."""
    if len(traces_by_rep) == 0:
        raise EmptyInputError("Cannot average allocation tables without replications")
    return np.mean([allocation_table(traces) for traces in traces_by_rep], axis=0)


def reward_trajectory(traces_by_rep: Sequence[Sequence[BatchTrace]]) -> pd.DataFrame:
    """Mean cumulative reward per batch across replications, with 95% normal-approximation bands."""
    if len(traces_by_rep) == 0:
        raise EmptyInputError("Cannot build a trajectory without replications")
    cumulative = np.array([[trace.cumulative_reward for trace in traces] for traces in traces_by_rep], dtype=float)
    mean = cumulative.mean(axis=0)
    se = _standard_error(cumulative)
    return pd.DataFrame({
        "batch": np.arange(cumulative.shape[1]),
        "mean_cumulative_reward": mean,
        "ci_lower": mean - CI_Z * se,
        "ci_upper": mean + CI_Z * se,
    })


def _standard_error(values: np.ndarray) -> np.ndarray:
    """Standard error of the mean along axis 0; zero with a single replication."""
    count = values.shape[0]
    if count < 2:
        return np.zeros(values.shape[1:]) if values.ndim > 1 else np.float64(0.0)
    return values.std(axis=0, ddof=1) / math.sqrt(count)


def _run_replication_task(task: Tuple[SimConfig, int]) -> List[BatchTrace]:
    cfg, rep_index = task
    try:
        return run_replication(cfg, rep_index)
    except BanditToolkitError as e:
        harness_error_handler.log_row_failure(e, "run_replication", {"label": cfg.policy.label},
                                              replication=rep_index)
        raise


def summarize_runs(cfg: SimConfig, traces_by_rep: Sequence[Sequence[BatchTrace]]) -> RunSummary:
    """Aggregate replications into final-reward statistics and regretted impressions."""
    finals = np.array([traces[-1].cumulative_reward for traces in traces_by_rep], dtype=float)
    mean = float(finals.mean())
    se = float(_standard_error(finals))

    winner = winner_by_true_rate(cfg.environment)
    regretted = [regretted_impressions(traces, winner) for traces in traces_by_rep]

    insertion = cfg.environment.insertion_batch
    post_insertion = None
    if insertion is not None:
        before = [traces[insertion - 1].cumulative_reward if insertion > 0 else 0 for traces in traces_by_rep]
        post_insertion = float(np.mean(finals - np.array(before, dtype=float)))

    return RunSummary(final_reward_mean=mean,
                      final_reward_se=se,
                      ci_lower=mean - CI_Z * se,
                      ci_upper=mean + CI_Z * se,
                      regretted_fraction_mean=float(np.mean(regretted)),
                      label=cfg.policy.label,
                      replications=len(traces_by_rep),
                      final_rewards=[int(value) for value in finals],
                      post_insertion_reward_mean=post_insertion,
                      regretted_fractions=[float(value) for value in regretted])


def run_experiment(cfg: SimConfig, workers: int = 1) -> Tuple[List[List[BatchTrace]], RunSummary]:
    """
    Run every replication of one policy setting and summarize the final rewards.

    Args:
        cfg (SimConfig): Simulation setting
        workers (int): Worker processes; results do not depend on it

    Returns:
        tuple: (traces per replication, RunSummary)
    """
    logger.info(f"Simulating {cfg.policy.label}: {cfg.replications} replications of "
                f"{cfg.num_batches} x {cfg.pulls_per_batch} pulls")
    tasks = [(cfg, rep_index) for rep_index in range(cfg.replications)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            traces_by_rep = list(executor.map(_run_replication_task, tasks))
    else:
        traces_by_rep = [_run_replication_task(task) for task in tasks]

    summary = summarize_runs(cfg, traces_by_rep)
    logger.info(f"{cfg.policy.label}: final reward {summary.final_reward_mean:.2f} "
                f"+/- {summary.final_reward_se:.2f}")
    return traces_by_rep, summary


def table_row(policy: PolicySpec, summary: RunSummary) -> Dict[str, Any]:
    param1, param2 = policy.parameters
    return {
        "method": policy.method_name,
        "param1": param1,
        "param2": param2,
        "final_reward": summary.final_reward_mean,
        "std_error": summary.final_reward_se,
        "ci_lower": summary.ci_lower,
        "ci_upper": summary.ci_upper,
    }


def write_summary_table(rows: Sequence[Dict[str, Any]], path: Path) -> pd.DataFrame:
    """Write the results table sorted by final reward, best first."""
    frame = pd.DataFrame(list(rows), columns=TABLE_COLUMNS)
    frame = frame.sort_values("final_reward", ascending=False, kind="mergesort").reset_index(drop=True)
    frame.to_csv(path, index=False)
    logger.info(f"Wrote {len(frame)} summary rows to {path}")
    return frame


def trace_frame(traces: Sequence[BatchTrace], rep_index: int) -> pd.DataFrame:
    """One row per (batch, arm)."""
    records = []
    for trace in traces:
        for arm, (pulls, successes) in enumerate(zip(trace.per_arm_pulls, trace.per_arm_successes)):
            records.append({
                "replication": rep_index,
                "batch": trace.batch_index,
                "arm": arm,
                "pulls": pulls,
                "successes": successes,
                "batch_reward": trace.batch_reward,
                "cumulative_reward": trace.cumulative_reward,
            })
    return pd.DataFrame(records, columns=TRACE_COLUMNS)


def write_trace_csv(traces: Sequence[BatchTrace], rep_index: int, path: Path) -> None:
    trace_frame(traces, rep_index).to_csv(path, index=False)


def read_trace_csv(path: Path) -> List[BatchTrace]:
    """Rebuild BatchTraces from a file written by write_trace_csv."""
    frame = pd.read_csv(path).sort_values(["batch", "arm"], kind="mergesort")
    traces = []
    for batch, group in frame.groupby("batch", sort=True):
        traces.append(BatchTrace(batch_index=int(batch),
                                 per_arm_pulls=tuple(int(value) for value in group["pulls"]),
                                 per_arm_successes=tuple(int(value) for value in group["successes"]),
                                 batch_reward=int(group["batch_reward"].iloc[0]),
                                 cumulative_reward=int(group["cumulative_reward"].iloc[0])))
    return traces
