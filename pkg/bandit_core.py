"""
Dynamic Prior toolkit - Beta-Bernoulli bandit core
Posterior bookkeeping, reproducible Beta sampling and the Thompson Sampling
selection rule

Copyright (c) 2025 Ohrner IT GmbH
Licensed under the MIT License
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from error_handler import EmptyInputError, InvalidParameterError

logger = logging.getLogger(__name__)


def _check_shape(name: str, value: float) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float, np.integer, np.floating)):
        raise InvalidParameterError(f"Beta shape {name} must be a real number, got {value!r}",
                                    parameters={name: value})
    value = float(value)
    if not math.isfinite(value) or value <= 0.0:
        raise InvalidParameterError(f"Beta shape {name} must be finite and positive, got {value!r}",
                                    parameters={name: value})
    return value


@dataclass(frozen=True)
class BetaParams:
    """
    Shape parameters of a Beta distribution over a success rate.

    `alpha` is the pseudo-success mass and `beta` the pseudo-failure mass;
    both are strictly positive at all times.
    """
    alpha: float
    beta: float

    def __post_init__(self):
        object.__setattr__(self, "alpha", _check_shape("alpha", self.alpha))
        object.__setattr__(self, "beta", _check_shape("beta", self.beta))

    def mean(self) -> float:
        return self.alpha / (self.alpha + self.beta)

    def variance(self) -> float:
        total = self.alpha + self.beta
        return self.alpha * self.beta / (total * total * (total + 1.0))

    @property
    def total(self) -> float:
        """Effective sample size alpha + beta."""
        return self.alpha + self.beta

    def to_list(self) -> list:
        return [self.alpha, self.beta]


UNIFORM_PRIOR = BetaParams(1.0, 1.0)


@dataclass(frozen=True)
class ArmStats:
    """Raw observed counts for one arm; prior pseudo-counts are never included."""
    n: int = 0
    successes: int = 0

    def __post_init__(self):
        for name in ("n", "successes"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 0:
                raise InvalidParameterError(f"{name} must be a non-negative integer, got {value!r}",
                                            parameters={name: value})
            object.__setattr__(self, name, int(value))
        if self.successes > self.n:
            raise InvalidParameterError(
                f"successes ({self.successes}) cannot exceed observations ({self.n})",
                parameters={"n": self.n, "successes": self.successes})

    @property
    def failures(self) -> int:
        return self.n - self.successes

    @property
    def p_hat(self) -> Optional[float]:
        """Observed success rate, or None while the arm has no observations."""
        if self.n == 0:
            return None
        return self.successes / self.n


@dataclass(frozen=True)
class ArmPosterior:
    """Per-arm state: the Beta posterior and the observed counts feeding it."""
    params: BetaParams = UNIFORM_PRIOR
    stats: ArmStats = field(default_factory=ArmStats)

    @classmethod
    def from_prior(cls, prior: BetaParams) -> "ArmPosterior":
        """Create an arm with the given prior and no observations."""
        return cls(params=prior, stats=ArmStats())


class RngStream:
    """
    Reproducible random stream identified by (seed, stream_id).

    The stream id is a tuple of non-negative integers, typically
    (experiment, configuration, replication). Identical identifiers yield
    identical sample sequences regardless of run order or worker count, so
    each concurrent task must own its stream.
    """

    def __init__(self, seed: int, stream_id: Sequence[int] = ()):
        if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)) or not 0 <= int(seed) < 2**64:
            raise InvalidParameterError(f"seed must be an unsigned 64-bit integer, got {seed!r}",
                                        parameters={"seed": seed})
        stream_id = tuple(int(part) for part in stream_id)
        if any(part < 0 for part in stream_id):
            raise InvalidParameterError(f"stream id parts must be non-negative, got {stream_id!r}",
                                        parameters={"stream_id": stream_id})
        self.seed = int(seed)
        self.stream_id: Tuple[int, ...] = stream_id
        self.generator = np.random.default_rng(
            np.random.SeedSequence(entropy=self.seed, spawn_key=self.stream_id))

    def child(self, *ids: int) -> "RngStream":
        """Derive an independent stream whose id extends this one."""
        return RngStream(self.seed, self.stream_id + tuple(ids))

    def beta(self, alpha, beta, size=None):
        return self.generator.beta(alpha, beta, size=size)

    def random(self, size=None):
        return self.generator.random(size=size)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


def beta_sample(params: BetaParams, rng: RngStream) -> float:
    """
    Draw one exact sample from Beta(alpha, beta).

    Args:
        params (BetaParams): Distribution to sample
        rng (RngStream): Stream to advance

    Returns:
        float: A draw in (0, 1)

    Raises:
        InvalidParameterError: If the shapes are not finite and positive
    """
    if not isinstance(params, BetaParams):
        raise InvalidParameterError(f"Expected BetaParams, got {type(params).__name__}")
    return float(rng.beta(params.alpha, params.beta))


def select_arm(posteriors: Sequence[ArmPosterior], rng: RngStream) -> int:
    """
    Thompson Sampling: draw once from every posterior and play the argmax.

    Ties go to the lowest index.

    Raises:
        EmptyInputError: If there are no arms
    """
    if len(posteriors) == 0:
        raise EmptyInputError("Cannot select an arm from an empty collection")

    best_index = 0
    best_draw = -math.inf
    for index, posterior in enumerate(posteriors):
        draw = beta_sample(posterior.params, rng)
        if draw > best_draw:
            best_draw = draw
            best_index = index
    return best_index


def select_arms(posteriors: Sequence[ArmPosterior], rng: RngStream, size: int) -> np.ndarray:
    """
    Run `size` independent Thompson selections against the same frozen posteriors.

    Distributionally identical to calling select_arm `size` times; one
    (size, arms) block of draws is taken at once.

    Returns:
        np.ndarray: Selected arm index per pull
    """
    if len(posteriors) == 0:
        raise EmptyInputError("Cannot select an arm from an empty collection")
    alphas = np.array([posterior.params.alpha for posterior in posteriors])
    betas = np.array([posterior.params.beta for posterior in posteriors])
    draws = rng.beta(alphas, betas, size=(size, len(posteriors)))
    # np.argmax returns the first maximum, i.e. the lowest index on ties
    return np.argmax(draws, axis=1)


def update(posterior: ArmPosterior, reward: int) -> ArmPosterior:
    """
    Fold one binary reward into an arm: alpha += reward, beta += 1 - reward.

    Raises:
        InvalidParameterError: If reward is not 0 or 1
    """
    if isinstance(reward, bool):
        reward = int(reward)
    if reward not in (0, 1):
        raise InvalidParameterError(f"reward must be 0 or 1, got {reward!r}", parameters={"reward": reward})
    return batch_apply(posterior, reward, 1 - reward)


def batch_apply(posterior: ArmPosterior, successes: int, failures: int) -> ArmPosterior:
    """
    Fold a batch tally into an arm in one step.

    Equivalent to successes + failures single updates; used at batch boundaries.

    Raises:
        InvalidParameterError: If either count is negative
    """
    for name, value in (("successes", successes), ("failures", failures)):
        if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 0:
            raise InvalidParameterError(f"{name} must be a non-negative integer, got {value!r}",
                                        parameters={name: value})
    successes = int(successes)
    failures = int(failures)
    if successes == 0 and failures == 0:
        return posterior

    params = BetaParams(posterior.params.alpha + successes, posterior.params.beta + failures)
    stats = ArmStats(n=posterior.stats.n + successes + failures,
                     successes=posterior.stats.successes + successes)
    return ArmPosterior(params=params, stats=stats)
