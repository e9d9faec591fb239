"""Residuals, leverage, influence, simulated envelopes, information criteria,
goodness of fit, and marginal covariate impacts."""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import model, specfun
from .errors import DomainError, NonConvergenceError, SingularMatrixError
from .estimator import fit, fit_null
from .simulate import sample_beta

__all__ = [
    "DiagnosticsReport",
    "EnvelopeBand",
    "residual_ordinary",
    "residual_weighted2",
    "hat_matrix_diag",
    "cook_distance",
    "simulated_envelope",
    "information_criteria",
    "r2_generalized",
    "marginal_impact",
    "mse_fit",
    "compute_report",
]

# leverage this close to 1 makes the weighted residual undefined
_HAT_LIMIT = 1.0 - 1e-10


@dataclass(frozen=True)
class EnvelopeBand:
    """Half-normal plot data: ordered absolute residuals of the original
    sample with Monte Carlo envelope bands and their normal scores."""

    scores: np.ndarray
    lower: np.ndarray
    mean: np.ndarray
    upper: np.ndarray
    observed: np.ndarray
    k: int
    alpha: float
    outside_fraction: float


@dataclass(frozen=True)
class DiagnosticsReport:
    r_ordinary: np.ndarray
    r_weighted2: np.ndarray
    hat_diag: np.ndarray
    cook: np.ndarray
    aic: float
    sic: float
    r2_g: float
    mse_fit: float
    flagged: tuple


def residual_ordinary(fitted, y):
    """(y - mu) standardized by the model standard deviation."""
    y = np.asarray(y, dtype=float)
    mu = fitted.surfaces.mu
    sigma = fitted.surfaces.sigma
    return (y - mu) / np.sqrt(mu * (1.0 - mu) * sigma * sigma)


def _ystar_quantities(fitted, y):
    oq = model.observed_quantities(fitted.spec, fitted.theta, y)
    pf = oq.surfaces.precision_factor
    mu = np.clip(oq.surfaces.mu, 1e-12, 1.0 - 1e-12)
    var_ystar = specfun.trigamma(mu * pf) + specfun.trigamma((1.0 - mu) * pf)
    return oq, var_ystar


def residual_weighted2(fitted, y):
    """Log-odds-scale residual standardized by its variance and leverage.

    Observations with leverage numerically equal to 1 get a nan sentinel.
    """
    oq, var_ystar = _ystar_quantities(fitted, y)
    h = hat_matrix_diag(fitted)
    out = np.full(h.shape, np.nan)
    ok = h < _HAT_LIMIT
    out[ok] = (oq.ystar[ok] - oq.mustar[ok]) / np.sqrt(
        var_ystar[ok] * (1.0 - h[ok]))
    return out


def hat_matrix_diag(fitted):
    """Diagonal of the weighted mean-submodel projection matrix."""
    quantities = model.weight_quantities(fitted.spec, fitted.theta)
    wpf = quantities.w * quantities.surfaces.precision_factor
    X = fitted.spec.X
    A = X * np.sqrt(wpf)[:, None]
    C = A.T @ A
    try:
        cf = scipy.linalg.cho_factor(C)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError):
        raise SingularMatrixError("X'WX is singular; leverage undefined")
    sol = scipy.linalg.cho_solve(cf, A.T)
    return np.einsum("ti,it->t", A, sol)


def cook_distance(fitted, y):
    """Leverage-weighted squared residual; inf sentinel at leverage 1."""
    h = hat_matrix_diag(fitted)
    rpp = residual_weighted2(fitted, y)
    out = np.full(h.shape, np.inf)
    ok = h < _HAT_LIMIT
    out[ok] = h[ok] / (1.0 - h[ok]) * rpp[ok] ** 2
    return out


def _envelope_scores(n):
    t = np.arange(1, n + 1)
    return specfun.std_normal_quantile((t + n + 0.5) / (2.0 * n + 10.0 / 8.0))


def simulated_envelope(spec, y, fitted, k=100, alpha=0.05, seed=0,
                       options=None):
    """Half-normal plot envelope built by refitting simulated samples.

    Simulates k samples from the fitted model, refits each, sorts the
    absolute weighted residuals, and aggregates the per-rank order
    statistics into (alpha/2, mean, 1-alpha/2) bands (quantiles rounded
    outward).  Non-convergent refits are redrawn, at most 5 times each.
    """
    if k < 19:
        raise DomainError("envelope needs k >= 19 replications")
    if not fitted.converged:
        raise DomainError("envelope requires a converged fit")
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    options = options or fitted.options
    mu, sigma = fitted.surfaces.mu, fitted.surfaces.sigma
    sims = np.empty((k, n))
    for j in range(k):
        for attempt in range(5):
            rng = np.random.default_rng((seed, j, attempt))
            y_sim = sample_beta(mu, sigma, rng)
            try:
                refit = fit(spec, y_sim, options)
            except NonConvergenceError:
                continue
            sims[j] = np.sort(np.abs(residual_weighted2(refit, y_sim)))
            break
        else:
            raise NonConvergenceError(
                f"envelope replication {j} failed to refit after 5 draws")
    lower = np.quantile(sims, alpha / 2.0, axis=0, method="lower")
    upper = np.quantile(sims, 1.0 - alpha / 2.0, axis=0, method="higher")
    mean = sims.mean(axis=0)
    observed = np.sort(np.abs(residual_weighted2(fitted, y)))
    outside = float(np.mean((observed < lower) | (observed > upper)))
    return EnvelopeBand(_envelope_scores(n), lower, mean, upper, observed,
                        k, alpha, outside)


def information_criteria(fitted, penalty=2.0):
    """Generalized information criterion -2*loglik + penalty*q.

    penalty may be numeric, "AIC" (2) or "SIC" (log n); q counts free
    parameters including free shape parameters.
    """
    if isinstance(penalty, str):
        key = penalty.upper()
        if key == "AIC":
            penalty = 2.0
        elif key == "SIC":
            penalty = float(np.log(fitted.n))
        else:
            raise DomainError(f"unknown criterion {penalty!r}")
    return -2.0 * fitted.loglik + float(penalty) * fitted.q


def r2_generalized(fitted, null_fitted):
    """Likelihood-ratio coefficient of determination against the
    constant-mean, constant-dispersion null fit."""
    gap = fitted.loglik - null_fitted.loglik
    if gap < -1e-8:
        raise DomainError("null model log-likelihood exceeds the fitted model's; "
                          "the models are not nested")
    value = -np.expm1(-2.0 / fitted.n * max(gap, 0.0))
    return float(min(max(value, 0.0), 1.0))


def marginal_impact(fitted, covariate, square=None, interactions=()):
    """Per-observation derivative of the fitted mean in a covariate.

    covariate is a mean-submodel column index; square optionally names the
    column holding its square; interactions is a sequence of
    (column_index, other_values) pairs for declared interaction columns.
    """
    spec = fitted.spec
    r = spec.r
    if not 0 <= covariate < r:
        raise DomainError("covariate index outside the mean design")
    beta = fitted.theta.beta
    deta = np.full(spec.n, beta[covariate])
    if square is not None:
        if not 0 <= square < r:
            raise DomainError("square column index outside the mean design")
        deta = deta + 2.0 * beta[square] * spec.X[:, covariate]
    for col, other in interactions:
        if not 0 <= col < r:
            raise DomainError("interaction column index outside the mean design")
        deta = deta + beta[col] * np.asarray(other, dtype=float)
    dmu = spec.mean_link.inverse_deriv(fitted.surfaces.eta1, fitted.theta.lambda1)
    return dmu * deta


def mse_fit(fitted, y):
    """Mean squared error between observed and fitted means."""
    y = np.asarray(y, dtype=float)
    return float(np.mean((y - fitted.surfaces.mu) ** 2))


def compute_report(fitted, y, cook_threshold=0.5, null_fitted=None):
    """Bundle the standard per-fit diagnostics."""
    y = np.asarray(y, dtype=float)
    if null_fitted is None:
        null_fitted = fit_null(y)
    r = residual_ordinary(fitted, y)
    rpp = residual_weighted2(fitted, y)
    h = hat_matrix_diag(fitted)
    cook = cook_distance(fitted, y)
    with np.errstate(invalid="ignore"):
        flagged = np.flatnonzero((np.abs(rpp) > 2.0) | (cook > cook_threshold))
    return DiagnosticsReport(
        r_ordinary=r, r_weighted2=rpp, hat_diag=h, cook=cook,
        aic=information_criteria(fitted, "AIC"),
        sic=information_criteria(fitted, "SIC"),
        r2_g=r2_generalized(fitted, null_fitted),
        mse_fit=mse_fit(fitted, y),
        flagged=tuple(int(i) for i in flagged),
    )
