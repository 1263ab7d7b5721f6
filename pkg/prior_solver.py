"""
Dynamic Prior toolkit - prior solver
Closed-form dynamic prior for a new arm, so that its Thompson draw beats the
incumbent's draw with a target probability epsilon

Copyright (c) 2025 Ohrner IT GmbH
Licensed under the MIT License
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import erfc

from bandit_core import ArmStats, BetaParams, UNIFORM_PRIOR
from error_handler import (
    DomainError, InsufficientDataError, InvalidParameterError, solver_error_handler
)

logger = logging.getLogger(__name__)

# Accepted roots must satisfy the un-squared constraint to this tolerance
RESIDUAL_TOLERANCE = 1e-6

# Negative discriminants this close to zero (relative to b^2) are rounding noise
DISCRIMINANT_RELATIVE_FLOOR = 1e-12

# Rational approximation coefficients for the inverse normal CDF
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)
_P_LOW = 0.02425
_SQRT_2PI = math.sqrt(2.0 * math.pi)


class PriorSource(Enum):
    """Provenance of a solved prior."""
    CLOSED_FORM = "ClosedForm"
    FALLBACK = "Fallback"
    DEFAULT = "Default"


@dataclass(frozen=True)
class PriorPolicyConfig:
    """
    Dynamic prior policy parameters.

    epsilon is the target probability that the new arm's draw beats the
    incumbent's draw; r scales the prior's effective sample size to n_k * r.
    The conservative guarantee (prior mean below the incumbent's rate) holds
    for epsilon < 0.5 only.
    """
    epsilon: float
    r: float

    def __post_init__(self):
        epsilon = float(self.epsilon)
        r = float(self.r)
        if not math.isfinite(epsilon) or not 0.0 < epsilon < 1.0:
            raise InvalidParameterError(f"epsilon must lie in (0, 1), got {self.epsilon!r}",
                                        parameters={"epsilon": self.epsilon})
        if not math.isfinite(r) or r <= 0.0:
            raise InvalidParameterError(f"prior strength r must be positive, got {self.r!r}",
                                        parameters={"r": self.r})
        object.__setattr__(self, "epsilon", epsilon)
        object.__setattr__(self, "r", r)

    @property
    def conservative(self) -> bool:
        return self.epsilon < 0.5


@dataclass(frozen=True)
class QuadraticCoefficients:
    """Coefficients of a_q * q^2 + b_q * q + c_q = 0 together with the quantities they are built from."""
    a_q: float
    b_q: float
    c_q: float
    t_z_eps: float
    c_nk: float
    z_eps: float

    def discriminant(self) -> float:
        return self.b_q * self.b_q - 4.0 * self.a_q * self.c_q


@dataclass(frozen=True)
class ApproxMoments:
    """Normal-approximation moments of the new arm's prior and the incumbent's prior-augmented posterior."""
    mu_new: float
    var_new: float
    mu_win: float
    var_win: float


@dataclass(frozen=True)
class PriorSolution:
    """Solved prior mean, the resulting Beta prior and where it came from."""
    q_j: float
    prior: BetaParams
    source: PriorSource

    def to_dict(self) -> Dict[str, Any]:
        return {
            "q_j": self.q_j,
            "prior": self.prior.to_list(),
            "source": self.source.value,
        }


def normal_cdf(x: float) -> float:
    """Standard normal CDF via the complementary error function."""
    return float(0.5 * erfc(-x / math.sqrt(2.0)))


def _rational_quantile(p: float) -> float:
    """Initial quantile estimate for 0 < p <= 0.5 (relative error about 1e-9)."""
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        return ((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) /
                ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    q = p - 0.5
    r = q * q
    return ((((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q /
            (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0))


def normal_quantile(p: float) -> float:
    """
    Standard normal quantile, accurate to 1e-9 absolute on [1e-6, 1 - 1e-6].

    A rational approximation refined by one Newton step against the
    erfc-based CDF. Upper-half probabilities are mirrored so that
    normal_quantile(p) == -normal_quantile(1 - p).

    Args:
        p (float): Probability in (0, 1)

    Returns:
        float: z such that normal_cdf(z) == p

    Raises:
        DomainError: If p is not inside (0, 1)
    """
    if isinstance(p, bool) or not isinstance(p, (int, float, np.integer, np.floating)):
        raise DomainError(f"normal_quantile expects a real probability, got {p!r}")
    p = float(p)
    if not math.isfinite(p) or not 0.0 < p < 1.0:
        raise DomainError(f"normal_quantile is defined on (0, 1), got {p!r}", parameters={"p": p})

    if p > 0.5:
        # 1 - p is exact for p in (0.5, 1)
        return -normal_quantile(1.0 - p)
    if p == 0.5:
        return 0.0

    x = _rational_quantile(p)
    error = normal_cdf(x) - p
    x -= error * _SQRT_2PI * math.exp(0.5 * x * x)
    return x


def _check_incumbent(n_k: int, p_hat_k: float) -> Tuple[int, float]:
    if isinstance(n_k, bool) or not isinstance(n_k, (int, np.integer)):
        raise InvalidParameterError(f"n_k must be an integer count, got {n_k!r}", parameters={"n_k": n_k})
    if n_k == 0:
        raise InsufficientDataError(
            "Incumbent arm has no observations; use the default Beta(1,1) prior",
            parameters={"n_k": n_k})
    if n_k < 0:
        raise InvalidParameterError(f"n_k must be non-negative, got {n_k}", parameters={"n_k": n_k})
    p_hat_k = float(p_hat_k)
    if not math.isfinite(p_hat_k) or not 0.0 <= p_hat_k <= 1.0:
        raise DomainError(f"p_hat_k must lie in [0, 1], got {p_hat_k!r}", parameters={"p_hat_k": p_hat_k})
    return int(n_k), p_hat_k


def quadratic_coefficients(n_k: int, p_hat_k: float, cfg: PriorPolicyConfig) -> QuadraticCoefficients:
    """
    Coefficients of the squared exploration constraint as a quadratic in the prior mean q.

    With T = z_eps^2 and C_nk = n_k r (n_k + n_k r):
        a_q = C_nk + T (1+r)^2 (n_k + n_k r) + T n_k r r^2
        b_q = -2 C_nk p - T (1+r)^2 (n_k + n_k r) - T n_k r r (1 + r - 2p)
        c_q = C_nk p^2 - T n_k r p (1 + r - p)

    Raises:
        InsufficientDataError: If n_k is 0
    """
    n_k, p = _check_incumbent(n_k, p_hat_k)
    z_eps = normal_quantile(cfg.epsilon)
    t_z_eps = z_eps * z_eps
    n = float(n_k)
    r = cfg.r

    c_nk = n * r * (n + n * r)
    spread = t_z_eps * (1.0 + r) ** 2 * (n + n * r)
    a_q = c_nk + spread + t_z_eps * n * r * r * r
    b_q = -2.0 * c_nk * p - spread - t_z_eps * n * r * r * (1.0 + r - 2.0 * p)
    c_q = c_nk * p * p - t_z_eps * n * r * p * (1.0 + r - p)

    return QuadraticCoefficients(a_q=a_q, b_q=b_q, c_q=c_q, t_z_eps=t_z_eps, c_nk=c_nk, z_eps=z_eps)


def approx_moments(n_k: int, p_hat_k: float, r: float, q: float) -> ApproxMoments:
    """
    Normal-approximation moments for the new arm's prior and the incumbent with prior influence.

    Raises:
        DomainError: If q is not inside (0, 1), where a variance degenerates
    """
    n_k, p = _check_incumbent(n_k, p_hat_k)
    q = float(q)
    if not math.isfinite(q) or not 0.0 < q < 1.0:
        raise DomainError(f"prior mean q must lie in (0, 1), got {q!r}", parameters={"q": q})
    n = float(n_k)
    mu_win = (p + r * q) / (1.0 + r)
    return ApproxMoments(
        mu_new=q,
        var_new=q * (1.0 - q) / (n * r),
        mu_win=mu_win,
        var_win=mu_win * (1.0 - mu_win) / (n * (1.0 + r)),
    )


def constraint_residual(n_k: int, p_hat_k: float, cfg: PriorPolicyConfig, q: float) -> float:
    """
    Signed residual of the un-squared exploration constraint at prior mean q.

    g(q) = (mu_new - mu_win) / sqrt(var_new + var_win) - z_eps, zero at a true root.

    Raises:
        DomainError: If q is not inside (0, 1)
    """
    moments = approx_moments(n_k, p_hat_k, cfg.r, q)
    # mu_new - mu_win simplifies to (q - p) / (1 + r); this form avoids cancellation
    gap = (float(q) - float(p_hat_k)) / (1.0 + cfg.r)
    return gap / math.sqrt(moments.var_new + moments.var_win) - normal_quantile(cfg.epsilon)


def _quadratic_roots(coeffs: QuadraticCoefficients) -> Optional[Tuple[float, float]]:
    """Real roots (smaller, larger) of the quadratic, or None if they are complex."""
    a, b, c = coeffs.a_q, coeffs.b_q, coeffs.c_q
    discriminant = coeffs.discriminant()
    if discriminant < 0.0:
        if discriminant < -DISCRIMINANT_RELATIVE_FLOOR * b * b:
            return None
        discriminant = 0.0

    sqrt_d = math.sqrt(discriminant)
    # Cancellation-free pairing: qq / a and c / qq
    qq = -0.5 * (b + math.copysign(sqrt_d, b))
    if qq == 0.0:
        return 0.0, 0.0
    first, second = qq / a, c / qq
    return min(first, second), max(first, second)


def prior_params(n_k: int, r: float, q_j: float) -> BetaParams:
    """
    Beta prior with mean q_j and effective sample size n_k * r.

    Raises:
        InvalidParameterError: If either resulting shape is not positive
    """
    alpha = n_k * r * q_j
    beta = n_k * r * (1.0 - q_j)
    if not (alpha > 0.0 and beta > 0.0):
        raise InvalidParameterError(
            f"Prior shapes must be positive, got alpha={alpha!r}, beta={beta!r}",
            parameters={"n_k": n_k, "r": r, "q_j": q_j})
    return BetaParams(alpha, beta)


def incumbent_posterior_with_prior(n_k: int, p_hat_k: float, prior: BetaParams) -> BetaParams:
    """
    The incumbent's posterior with the new arm's prior mass added, for a like-for-like comparison.

    Raises:
        InsufficientDataError: If n_k is 0
        InvalidParameterError: If a resulting shape is not positive
    """
    n_k, p = _check_incumbent(n_k, p_hat_k)
    return BetaParams(n_k * p + prior.alpha, n_k * (1.0 - p) + prior.beta)


def _default_solution() -> PriorSolution:
    return PriorSolution(q_j=UNIFORM_PRIOR.mean(), prior=UNIFORM_PRIOR, source=PriorSource.DEFAULT)


def _reject_reason(q: Optional[float], n_k: int, p: float, cfg: PriorPolicyConfig) -> Optional[str]:
    """Why a candidate root is unusable, or None when it is accepted."""
    if q is None:
        return "discriminant is negative"
    if not 0.0 < q < 1.0:
        return f"root {q!r} outside (0, 1)"
    if cfg.conservative and q >= p:
        return f"root {q!r} not below p_hat_k={p!r}"
    residual = constraint_residual(n_k, p, cfg, q)
    if abs(residual) >= RESIDUAL_TOLERANCE:
        return f"root {q!r} fails residual check ({residual:.3g})"
    return None


def solve_prior_mean(n_k: int, p_hat_k: float, cfg: PriorPolicyConfig) -> PriorSolution:
    """
    Solve for the new arm's prior mean and build its Beta prior.

    The closed-form conservative root (-b - sqrt(b^2 - 4ac)) / 2a is accepted
    when it lies in (0, p_hat_k) and satisfies the un-squared constraint.
    Otherwise the prior mean falls back to epsilon * p_hat_k. An incumbent
    with no successes yields the Default Beta(1,1) prior.

    For epsilon > 0.5 the larger root is used; the result then exceeds
    p_hat_k and the conservative guarantee does not apply.

    Args:
        n_k (int): Incumbent observation count
        p_hat_k (float): Incumbent observed success rate
        cfg (PriorPolicyConfig): Target probability and prior strength

    Returns:
        PriorSolution: prior mean, Beta prior and provenance

    Raises:
        InsufficientDataError: If n_k is 0
    """
    n_k, p = _check_incumbent(n_k, p_hat_k)

    if p == 0.0:
        solver_error_handler.log_solver_fallback(
            "incumbent has no successes", n_k, p, cfg.epsilon, cfg.r, PriorSource.DEFAULT.value)
        return _default_solution()

    if cfg.epsilon > 0.5:
        logger.warning(f"epsilon={cfg.epsilon} > 0.5: prior mean will exceed the incumbent rate")

    coeffs = quadratic_coefficients(n_k, p, cfg)
    if coeffs.t_z_eps == 0.0:
        # z = 0 collapses the quadratic to C_nk (q - p)^2 = 0
        candidate = p
    else:
        roots = _quadratic_roots(coeffs)
        if roots is None:
            candidate = None
        else:
            candidate = roots[1] if cfg.epsilon > 0.5 else roots[0]

    reason = _reject_reason(candidate, n_k, p, cfg)
    if reason is None:
        logger.debug(f"Closed-form prior mean {candidate} for n_k={n_k}, p_hat_k={p}")
        return PriorSolution(q_j=candidate, prior=prior_params(n_k, cfg.r, candidate),
                             source=PriorSource.CLOSED_FORM)

    q_j = cfg.epsilon * p
    if q_j <= 0.0 or q_j >= 1.0:
        solver_error_handler.log_solver_fallback(
            f"{reason}; fallback mean {q_j!r} invalid", n_k, p, cfg.epsilon, cfg.r, PriorSource.DEFAULT.value)
        return _default_solution()

    solver_error_handler.log_solver_fallback(reason, n_k, p, cfg.epsilon, cfg.r, PriorSource.FALLBACK.value)
    return PriorSolution(q_j=q_j, prior=prior_params(n_k, cfg.r, q_j), source=PriorSource.FALLBACK)


def best_observed_arm(arms: Sequence[ArmStats]) -> Optional[int]:
    """Index of the arm with the highest observed success rate (lowest index on ties), or None if no arm has data."""
    best_index = None
    best_rate = -1.0
    for index, stats in enumerate(arms):
        rate = stats.p_hat
        if rate is not None and rate > best_rate:
            best_rate = rate
            best_index = index
    return best_index


def dynamic_prior_for_arms(arms: Sequence[Union[ArmStats, Tuple[int, int]]],
                           cfg: PriorPolicyConfig) -> Tuple[Optional[int], PriorSolution]:
    """
    Compute a new arm's prior from the existing arms' history.

    The incumbent is the arm with the highest observed success rate.

    Args:
        arms: Per-arm ArmStats, or (observations, successes) pairs
        cfg: Target probability and prior strength

    Returns:
        tuple: (incumbent index or None, PriorSolution); without any observed
               arm the Default prior is returned
    """
    stats = [arm if isinstance(arm, ArmStats) else ArmStats(n=arm[0], successes=arm[1]) for arm in arms]
    incumbent = best_observed_arm(stats)
    if incumbent is None:
        logger.info("No arm has observations yet; using the default prior")
        return None, _default_solution()
    best = stats[incumbent]
    return incumbent, solve_prior_mean(best.n, best.p_hat, cfg)
