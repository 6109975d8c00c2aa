"""Closed-form fidelity laws for independent and effective spins.

Three related models of majority-vote bit retrieval from N spins that each
flip as an independent Poisson process with rate lambda:

* binomial law: probability that at most floor(N/2) spins have flipped an
  odd number of times (for even N this includes the exactly-half term, so
  a split vote counts as a survival);
* its N = 1 exponential specialization F = (1 + exp(-2*lambda*t)) / 2;
* a Gaussian (error-function) approximation of the binomial sum, which
  permits a continuous effective spin count and resolves split votes as a
  fair coin flip.

Interacting lattices are modelled by the Gaussian form with the spin count
replaced by an effective number of independently flipping spin regions,
`effective_spin_fidelity`; its majority threshold sits at half the
effective count, so it decays to 1/2 at long times like the data it is
fitted to.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf, gammaln, logsumexp

__all__ = [
    "ModelParams",
    "odd_flip_probability",
    "exponential_fidelity",
    "binomial_fidelity",
    "binomial_tie_probability",
    "gaussian_fidelity",
    "effective_spin_fidelity",
    "binomial_vs_gaussian_gap",
]


@dataclass(frozen=True)
class ModelParams:
    """Effective-spin model parameters: region count n_eff and flip rate lam."""

    n_eff: float
    lam: float

    def __post_init__(self):
        if not self.n_eff > 0:
            raise ValueError(f"n_eff must be positive, got {self.n_eff}")
        if not self.lam > 0:
            raise ValueError(f"lam must be positive, got {self.lam}")


def odd_flip_probability(lam: float, t) -> float | np.ndarray:
    """Probability that a rate-lam Poisson flip count is odd: (1 - exp(-2*lam*t))/2."""
    if lam < 0:
        raise ValueError(f"lam must be nonnegative, got {lam}")
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0):
        raise ValueError("t must be nonnegative")
    out = -0.5 * np.expm1(-2.0 * lam * t)
    return float(out) if out.ndim == 0 else out


def exponential_fidelity(lam: float, t) -> float | np.ndarray:
    """Single-spin (or single-domain) fidelity (1 + exp(-2*lam*t)) / 2."""
    t = np.asarray(t, dtype=np.float64)
    out = 0.5 * (1.0 + np.exp(-2.0 * lam * t))
    return float(out) if out.ndim == 0 else out


def _binomial_tail_log_terms(n: int, q: float, k_max: int) -> np.ndarray:
    """log of C(n, k) q^k (1-q)^(n-k) for k = 0..k_max, in log space."""
    ks = np.arange(k_max + 1, dtype=np.float64)
    log_comb = gammaln(n + 1) - gammaln(ks + 1) - gammaln(n - ks + 1)
    return log_comb + ks * math.log(q) + (n - ks) * math.log1p(-q)


def binomial_fidelity(n: int, lam: float, t: float) -> float:
    """Majority-vote survival of n independent spins after time t.

    Sum over k = 0..floor(n/2) of C(n,k) q^k (1-q)^(n-k) with q the
    odd-flip probability; evaluated with log-space terms and compensated
    (logsumexp) summation so it is exact to double precision up to at
    least n = 10^4.  For even n the k = n/2 term is included.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    q = odd_flip_probability(lam, float(t))
    if q <= 0.0:
        return 1.0
    log_terms = _binomial_tail_log_terms(n, q, n // 2)
    return float(min(1.0, math.exp(logsumexp(log_terms))))


def binomial_tie_probability(n: int, lam: float, t: float) -> float:
    """Probability of an exactly split vote, C(n, n/2) q^(n/2) (1-q)^(n/2); 0 for odd n."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if n % 2 == 1:
        return 0.0
    q = odd_flip_probability(lam, float(t))
    if q <= 0.0:
        return 0.0
    k = n // 2
    log_p = gammaln(n + 1) - 2.0 * gammaln(k + 1) + k * (math.log(q) + math.log1p(-q))
    return float(math.exp(log_p))


def gaussian_fidelity(n: float, params: ModelParams, t) -> float | np.ndarray:
    """Error-function fidelity: (1 + erf((n/2 - mu) / (sqrt(2) sigma))) / 2.

    mu and sigma are the mean and standard deviation of the number of
    odd-flipped spins among params.n_eff effective spins:
    mu = n_eff (1 - exp(-2 lam t)) / 2,
    sigma = sqrt(n_eff (1 - exp(-2 lam t)) (1 + exp(-2 lam t))) / 2.
    At t = 0 sigma vanishes and the defined limit value is 1.
    """
    t_arr = np.asarray(t, dtype=np.float64)
    lam = params.lam
    n_eff = params.n_eff
    x = np.exp(-2.0 * lam * t_arr)
    mu = 0.5 * n_eff * -np.expm1(-2.0 * lam * t_arr)
    var = n_eff * -np.expm1(-4.0 * lam * t_arr)  # n_eff (1 - x^2)
    sigma = 0.5 * np.sqrt(np.maximum(var, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = (0.5 * n - mu) / (math.sqrt(2.0) * sigma)
        out = 0.5 * (1.0 + erf(z))
    # sigma == 0 only at t = 0 (x = 1): the limit is 1 since mu = 0 < n/2
    out = np.where(sigma > 0.0, out, 1.0)
    return float(out) if out.ndim == 0 else out


def effective_spin_fidelity(params: ModelParams, t) -> float | np.ndarray:
    """Gaussian-model fidelity of a lattice of n_eff effective spin regions.

    Equals gaussian_fidelity with the majority threshold at half the
    effective count, computed in the cancellation-free form
    z = sqrt(n_eff/2) x / sqrt(1 - x^2) with x = exp(-2 lam t).
    Decays from 1 at t = 0 to the coin-flip value 1/2 as t -> infinity.
    """
    t_arr = np.asarray(t, dtype=np.float64)
    x = np.exp(-2.0 * params.lam * t_arr)
    one_minus_x2 = -np.expm1(-4.0 * params.lam * t_arr)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = math.sqrt(0.5 * params.n_eff) * x / np.sqrt(one_minus_x2)
        out = 0.5 * (1.0 + erf(z))
    out = np.where(one_minus_x2 > 0.0, out, 1.0)
    return float(out) if out.ndim == 0 else out


def binomial_vs_gaussian_gap(n: int, lam: float, t: float) -> float:
    """|binomial - Gaussian| fidelity difference at matched parameters (n_eff = n).

    The two forms resolve a split vote differently (the binomial sum
    includes the tie term for even n; the Gaussian splits it evenly), so
    the gap is small but nonzero even for large n.
    """
    params = ModelParams(n_eff=float(n), lam=lam)
    return abs(binomial_fidelity(n, lam, t) - float(gaussian_fidelity(n, params, t)))
