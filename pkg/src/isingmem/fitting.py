"""Weighted nonlinear least squares for fidelity curves, with 90% intervals.

Curves are fitted by chi^2 = sum (F_data - F_model)^2 / sigma_F^2 using a
damped Gauss-Newton (Levenberg-Marquardt) iteration on the logarithms of
the parameters, which enforces positivity without explicit constraints.
Four heuristic multi-starts guard against poor initialisation.

90% confidence intervals come from the profile-likelihood criterion
delta chi^2 = 2.706 per parameter, with a linearised-covariance fallback
when profiling cannot bracket the target; the method used is recorded on
the fit result.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import erfinv

from .fidelity import FidelityCurve
from .models import ModelParams, effective_spin_fidelity, exponential_fidelity

__all__ = [
    "ModelKind",
    "ModelFit",
    "LinearFit",
    "ScalingVerdict",
    "ScalingClassification",
    "NoDecayError",
    "chi_squared",
    "fit_gaussian_model",
    "fit_exponential_model",
    "fit_linear",
    "classify_lambda_scaling",
    "Z90",
    "DELTA_CHI2_90",
]

Z90 = 1.6448536269514722  # two-sided 90% normal quantile
DELTA_CHI2_90 = 2.706  # per-parameter profile-likelihood threshold

_LOG_LAM_BOUNDS = (math.log(1e-15), math.log(1e6))
_LOG_NEFF_BOUNDS = (math.log(1e-6), math.log(1e12))


class NoDecayError(ValueError):
    """The curve shows no usable decay region within its time range."""


class ModelKind(enum.Enum):
    GAUSSIAN_TWO_PARAM = "gaussian_two_param"
    EXPONENTIAL_ONE_PARAM = "exponential_one_param"


@dataclass
class ModelFit:
    """Fit result: parameters, 90% half-widths, goodness of fit, diagnostics."""

    model_kind: ModelKind
    params: ModelParams
    lambda_ci90: float
    n_eff_ci90: float | None
    chi2: float
    dof: int
    converged: bool
    ci_method: str
    warnings: tuple[str, ...] = ()
    n_points: int = 0
    lambda_interval: tuple[float, float] | None = None
    n_eff_interval: tuple[float, float] | None = None

    @property
    def reduced_chi2(self) -> float:
        return self.chi2 / self.dof if self.dof > 0 else math.inf


def chi_squared(curve: FidelityCurve, model, n_params: int) -> tuple[float, int]:
    """Weighted residual sum against a model, and the degrees of freedom.

    `model` is either a callable evaluated at curve.times or a precomputed
    array of model fidelities.  Each point is weighted by 1/sigma_F^2.
    """
    if curve.n_points == 0:
        raise ValueError("curve has no points")
    sigma = curve.sigma
    if sigma.size == 0 or np.any(sigma <= 0) or np.any(~np.isfinite(sigma)):
        raise ValueError("chi_squared requires positive sigma_F at every point")
    f_model = model(curve.times) if callable(model) else np.asarray(model, dtype=np.float64)
    if f_model.shape != curve.fidelity.shape:
        raise ValueError("model values must match the curve's shape")
    chi2 = float(np.sum(((curve.fidelity - f_model) / sigma) ** 2))
    return chi2, curve.n_points - n_params


# ---------------------------------------------------------------------------
# Levenberg-Marquardt core (log-parameter space)


def _jacobian(resid_fn, theta: np.ndarray, r0: np.ndarray, step: float = 1e-6) -> np.ndarray:
    jac = np.empty((r0.size, theta.size))
    for k in range(theta.size):
        probe = theta.copy()
        probe[k] += step
        jac[:, k] = (resid_fn(probe) - r0) / step
    return jac


def _lm_minimize(
    resid_fn,
    theta0: np.ndarray,
    bounds: list[tuple[float, float]],
    max_iter: int = 200,
) -> tuple[np.ndarray, float, bool]:
    """Damped Gauss-Newton descent of sum(resid^2); returns (theta, chi2, converged)."""
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    theta = np.clip(theta0, lo, hi)
    r = resid_fn(theta)
    chi2 = float(r @ r)
    mu = 1e-3
    converged = False
    for _ in range(max_iter):
        jac = _jacobian(resid_fn, theta, r)
        a = jac.T @ jac
        g = jac.T @ r
        d = np.diag(np.maximum(np.diag(a), 1e-12))
        accepted = False
        for _ in range(40):
            try:
                delta = np.linalg.solve(a + mu * d, -g)
            except np.linalg.LinAlgError:
                mu *= 10.0
                continue
            theta_new = np.clip(theta + delta, lo, hi)
            r_new = resid_fn(theta_new)
            chi2_new = float(r_new @ r_new)
            if chi2_new <= chi2:
                accepted = True
                break
            mu *= 10.0
        if not accepted:
            converged = True  # damping exhausted: we are at a (numerical) minimum
            break
        step_size = float(np.abs(theta_new - theta).max())
        gain = chi2 - chi2_new
        theta, r, chi2 = theta_new, r_new, chi2_new
        mu = max(mu / 3.0, 1e-14)
        if gain < 1e-12 * (1.0 + chi2) and step_size < 1e-9:
            converged = True
            break
    at_bound = bool(np.any(theta <= lo + 1e-12) or np.any(theta >= hi - 1e-12))
    return theta, chi2, converged and not at_bound


def _linearized_sigma(resid_fn, theta: np.ndarray) -> np.ndarray:
    """Per-parameter standard errors from the Gauss-Newton covariance (log space)."""
    r = resid_fn(theta)
    jac = _jacobian(resid_fn, theta, r)
    a = jac.T @ jac
    try:
        cov = np.linalg.inv(a)
        sig = np.sqrt(np.maximum(np.diag(cov), 0.0))
    except np.linalg.LinAlgError:
        sig = np.full(theta.size, np.nan)
    return sig


def _profile_interval(
    resid_fn,
    theta_hat: np.ndarray,
    chi2_min: float,
    k: int,
    sigma_log: float,
    bounds: list[tuple[float, float]],
) -> tuple[float, float, bool]:
    """Profile-likelihood interval for log-parameter k; returns (lo, hi, profiled)."""
    target = chi2_min + DELTA_CHI2_90
    others = [i for i in range(theta_hat.size) if i != k]

    def profile_chi2(v: float) -> float:
        if not others:
            r = resid_fn(np.array([v]))
            return float(r @ r)
        warm = theta_hat[others].copy()

        def inner(sub: np.ndarray) -> np.ndarray:
            full = theta_hat.copy()
            full[k] = v
            full[others] = sub
            return resid_fn(full)

        _, chi2, _ = _lm_minimize(inner, warm, [bounds[i] for i in others], max_iter=60)
        return chi2

    step0 = sigma_log if np.isfinite(sigma_log) and sigma_log > 0 else 0.1
    result = []
    ok = True
    for sign in (-1.0, 1.0):
        inner_v = theta_hat[k]
        inner_g = chi2_min - target  # negative
        found = False
        step = 0.8 * Z90 * step0
        for _ in range(40):
            v = inner_v + sign * step
            v = min(max(v, bounds[k][0]), bounds[k][1])
            g = profile_chi2(v) - target
            if g > 0.0:
                a, b = (v, inner_v) if sign < 0 else (inner_v, v)
                ga, gb = (g, inner_g) if sign < 0 else (inner_g, g)
                root = brentq(lambda u: profile_chi2(u) - target, a, b, xtol=1e-4 * step0)
                result.append(root)
                found = True
                break
            inner_v, inner_g = v, g
            if v in (bounds[k][0], bounds[k][1]):
                break
            step *= 2.0
        if not found:
            result.append(theta_hat[k] + sign * Z90 * step0)
            ok = False
    return result[0], result[1], ok


def _decay_point_count(curve: FidelityCurve) -> int:
    f = curve.fidelity
    return int(np.count_nonzero((f > 0.55) & (f < 0.98)))


def _crossing_time(curve: FidelityCurve) -> tuple[float, float]:
    """Time and fidelity level of the curve's first drop through ~0.9."""
    f_min = float(curve.fidelity.min())
    level = 0.9 if f_min < 0.88 else 0.5 * (1.0 + f_min)
    below = np.nonzero(curve.fidelity < level)[0]
    if below.size == 0:
        raise NoDecayError("curve never drops below its decay threshold")
    j = int(below[0])
    if j == 0:
        return float(curve.times[0]), level
    t0, t1 = curve.times[j - 1], curve.times[j]
    f0, f1 = curve.fidelity[j - 1], curve.fidelity[j]
    frac = (f0 - level) / max(f0 - f1, 1e-30)
    return float(t0 + frac * (t1 - t0)), level


def _require_decay(curve: FidelityCurve) -> None:
    if _decay_point_count(curve) < 3:
        raise NoDecayError(
            "need at least 3 points with fidelity strictly inside the decay band "
            "(0.55, 0.98); extend t_max or refine the grid"
        )


def fit_gaussian_model(curve: FidelityCurve, n_sites: int | None = None) -> ModelFit:
    """Fit the two-parameter effective-spin model (n_eff, lambda) to a curve.

    Multi-start Levenberg-Marquardt on (log n_eff, log lambda); the flip
    rate start is read off the time at which the curve crosses F = 0.9 and
    the region-count starts span {1, N/10, N/2, N} for lattice size N.
    """
    _require_decay(curve)
    if n_sites is None:
        n_sites = curve.geometry.n_sites
    times, f_data, sigma = curve.times, curve.fidelity, curve.sigma
    if np.any(sigma <= 0):
        raise ValueError("fit requires positive sigma_F at every point")

    def resid(theta: np.ndarray) -> np.ndarray:
        params = ModelParams(n_eff=math.exp(theta[0]), lam=math.exp(theta[1]))
        return (f_data - effective_spin_fidelity(params, times)) / sigma

    t_cross, level = _crossing_time(curve)
    z_level = float(erfinv(2.0 * level - 1.0))
    starts = []
    for n_eff0 in {1.0, n_sites / 10.0, n_sites / 2.0, float(n_sites)}:
        r = z_level / math.sqrt(0.5 * n_eff0)
        x0 = r / math.sqrt(1.0 + r * r)
        lam0 = -math.log(x0) / (2.0 * max(t_cross, 1e-12))
        starts.append(np.array([math.log(n_eff0), math.log(lam0)]))
    bounds = [_LOG_NEFF_BOUNDS, _LOG_LAM_BOUNDS]

    best = None
    for theta0 in sorted(starts, key=lambda th: (th[0], th[1])):
        theta, chi2, conv = _lm_minimize(resid, theta0, bounds)
        if best is None or chi2 < best[1] - 1e-12:
            best = (theta, chi2, conv)
    theta_hat, chi2_min, converged = best

    sig_log = _linearized_sigma(resid, theta_hat)
    intervals = []
    ci_ok = True
    for k in range(2):
        lo, hi, ok = _profile_interval(resid, theta_hat, chi2_min, k, sig_log[k], bounds)
        intervals.append((math.exp(lo), math.exp(hi)))
        ci_ok = ci_ok and ok

    params = ModelParams(n_eff=math.exp(theta_hat[0]), lam=math.exp(theta_hat[1]))
    warnings = []
    if params.n_eff < 1.0:
        warnings.append("n_eff_below_one")
    if params.n_eff > n_sites:
        warnings.append("n_eff_above_n")
    if not ci_ok:
        warnings.append("profile_ci_fallback")
    return ModelFit(
        model_kind=ModelKind.GAUSSIAN_TWO_PARAM,
        params=params,
        lambda_ci90=0.5 * (intervals[1][1] - intervals[1][0]),
        n_eff_ci90=0.5 * (intervals[0][1] - intervals[0][0]),
        chi2=chi2_min,
        dof=curve.n_points - 2,
        converged=converged,
        ci_method="profile" if ci_ok else "profile+linearized",
        warnings=tuple(warnings),
        n_points=curve.n_points,
        lambda_interval=intervals[1],
        n_eff_interval=intervals[0],
    )


def fit_exponential_model(curve: FidelityCurve) -> ModelFit:
    """Fit the one-parameter exponential law F = (1 + exp(-2 lam t)) / 2."""
    _require_decay(curve)
    times, f_data, sigma = curve.times, curve.fidelity, curve.sigma
    if np.any(sigma <= 0):
        raise ValueError("fit requires positive sigma_F at every point")

    def resid(theta: np.ndarray) -> np.ndarray:
        return (f_data - exponential_fidelity(math.exp(theta[0]), times)) / sigma

    t_cross, level = _crossing_time(curve)
    lam0 = -math.log(max(2.0 * level - 1.0, 1e-12)) / (2.0 * max(t_cross, 1e-12))
    bounds = [_LOG_LAM_BOUNDS]
    theta_hat, chi2_min, converged = _lm_minimize(resid, np.array([math.log(lam0)]), bounds)
    sig_log = _linearized_sigma(resid, theta_hat)
    lo, hi, ok = _profile_interval(resid, theta_hat, chi2_min, 0, sig_log[0], bounds)
    lam = math.exp(theta_hat[0])
    return ModelFit(
        model_kind=ModelKind.EXPONENTIAL_ONE_PARAM,
        params=ModelParams(n_eff=1.0, lam=lam),
        lambda_ci90=0.5 * (math.exp(hi) - math.exp(lo)),
        n_eff_ci90=None,
        chi2=chi2_min,
        dof=curve.n_points - 1,
        converged=converged,
        ci_method="profile" if ok else "profile+linearized",
        n_points=curve.n_points,
        lambda_interval=(math.exp(lo), math.exp(hi)),
    )


# ---------------------------------------------------------------------------
# linear scaling fits


@dataclass
class LinearFit:
    """Weighted least-squares line y = slope * x + intercept."""

    slope: float
    intercept: float
    slope_ci90: float
    intercept_ci90: float
    chi2: float
    dof: int
    through_origin: bool = False


def fit_linear(xs, ys, y_errors, through_origin: bool = False) -> LinearFit:
    """Weighted linear fit with 90% slope interval (normal quantile).

    With through_origin=True the intercept is pinned at zero (the
    proportional-scaling fit used for region count versus lattice size).
    """
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    err = np.asarray(y_errors, dtype=np.float64)
    if x.size < 2:
        raise ValueError("fit_linear requires at least 2 points")
    if x.shape != y.shape or x.shape != err.shape:
        raise ValueError("xs, ys, y_errors must have equal shapes")
    if np.any(err <= 0):
        raise ValueError("y_errors must be positive")
    w = 1.0 / err**2
    if through_origin:
        sxx = float(np.sum(w * x * x))
        sxy = float(np.sum(w * x * y))
        slope = sxy / sxx
        var_slope = 1.0 / sxx
        chi2 = float(np.sum(w * (y - slope * x) ** 2))
        return LinearFit(slope, 0.0, Z90 * math.sqrt(var_slope), 0.0, chi2,
                         x.size - 1, through_origin=True)
    s = float(np.sum(w))
    sx = float(np.sum(w * x))
    sy = float(np.sum(w * y))
    sxx = float(np.sum(w * x * x))
    sxy = float(np.sum(w * x * y))
    det = s * sxx - sx * sx
    if det <= 0:
        raise ValueError("degenerate abscissae: cannot fit a line")
    slope = (s * sxy - sx * sy) / det
    intercept = (sxx * sy - sx * sxy) / det
    chi2 = float(np.sum(w * (y - slope * x - intercept) ** 2))
    return LinearFit(
        slope,
        intercept,
        Z90 * math.sqrt(s / det),
        Z90 * math.sqrt(sxx / det),
        chi2,
        x.size - 2,
    )


class ScalingVerdict(enum.Enum):
    EXPONENTIAL = "exponential"
    SUBEXPONENTIAL = "subexponential"
    INCONCLUSIVE = "inconclusive"


@dataclass
class ScalingClassification:
    """Outcome of comparing exponential vs power-law decay of lambda with N."""

    verdict: ScalingVerdict
    exponential_fit: LinearFit  # log(lambda) vs N
    power_fit: LinearFit  # log(lambda) vs log(N)
    delta_chi2: float  # chi2(exponential) - chi2(power)


def classify_lambda_scaling(
    ns,
    lambdas,
    lambda_errors,
    threshold: float = 2.0,
) -> ScalingClassification:
    """Decide whether lambda(N) falls exponentially or subexponentially.

    Fits log(lambda) against N (exponential hypothesis) and against log(N)
    (power-law hypothesis), both weighted by the propagated errors of
    log(lambda); the hypothesis with the lower chi2 wins unless the
    difference is below `threshold`, in which case the verdict is
    INCONCLUSIVE.  `lambda_errors` are one-standard-error uncertainties.
    """
    n_arr = np.asarray(ns, dtype=np.float64)
    lam = np.asarray(lambdas, dtype=np.float64)
    err = np.asarray(lambda_errors, dtype=np.float64)
    if n_arr.size < 4:
        raise ValueError("classification requires at least 4 (N, lambda) points")
    if np.any(lam <= 0):
        raise ValueError("lambda values must be positive")
    if np.any(err <= 0):
        raise ValueError("lambda_errors must be positive")
    log_lam = np.log(lam)
    log_err = err / lam
    exp_fit = fit_linear(n_arr, log_lam, log_err)
    pow_fit = fit_linear(np.log(n_arr), log_lam, log_err)
    delta = exp_fit.chi2 - pow_fit.chi2
    if abs(delta) < threshold:
        verdict = ScalingVerdict.INCONCLUSIVE
    elif delta < 0:
        verdict = ScalingVerdict.EXPONENTIAL
    else:
        verdict = ScalingVerdict.SUBEXPONENTIAL
    return ScalingClassification(verdict, exp_fit, pow_fit, delta)
