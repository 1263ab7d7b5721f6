"""
Independent numerical oracles used to check the prior solver.

None of these share code with prior_solver: the normal CDF comes from
math.erf, quantiles and roots from plain bisection, and coefficients are
re-evaluated in exact rational arithmetic.
"""

import math
from fractions import Fraction

from scipy.optimize import bisect


def erf_normal_cdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def bisection_quantile(p: float) -> float:
    """Standard normal quantile by bisection on the erf-based CDF."""
    return bisect(lambda x: erf_normal_cdf(x) - p, -40.0, 40.0, xtol=1e-15, rtol=1e-15, maxiter=500)


def extended_precision_coefficients(n_k: int, p_hat_k: float, r: float, z_eps: float):
    """
    Quadratic coefficients (a_q, b_q, c_q) evaluated exactly from the given float inputs.

    Returns:
        tuple: Three Fractions
    """
    n = Fraction(n_k)
    p = Fraction(p_hat_k)
    r = Fraction(r)
    t = Fraction(z_eps) ** 2
    c_nk = n * r * (n + n * r)
    a_q = c_nk + t * (1 + r) ** 2 * (n + n * r) + t * n * r * r ** 2
    b_q = -2 * c_nk * p - t * (1 + r) ** 2 * (n + n * r) - t * n * r * r * (1 + r - 2 * p)
    c_q = c_nk * p ** 2 - t * n * r * p * (1 + r - p)
    return a_q, b_q, c_q


def _constraint(n_k: int, p: float, r: float, z_eps: float, q: float) -> float:
    mu_new = q
    var_new = q * (1.0 - q) / (n_k * r)
    alpha_win = n_k * p + n_k * r * q
    beta_win = n_k * (1.0 - p) + n_k * r * (1.0 - q)
    mu_win = alpha_win / (alpha_win + beta_win)
    var_win = mu_win * (1.0 - mu_win) / (n_k + n_k * r)
    return (mu_new - mu_win) / math.sqrt(var_new + var_win) - z_eps


def bisection_prior_mean(n_k: int, p_hat_k: float, epsilon: float, r: float) -> float:
    """Root of the un-squared exploration constraint on (0, p_hat_k), by bisection."""
    z_eps = bisection_quantile(epsilon)
    return bisect(lambda q: _constraint(n_k, p_hat_k, r, z_eps, q), 1e-12, p_hat_k,
                  xtol=1e-17, rtol=1e-14, maxiter=500)
