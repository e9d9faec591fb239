"""Large-sample inference: Wald intervals, z tests, and the four asymptotic
tests (likelihood ratio, Wald, score, gradient), plus the two specification
tests (RESET-type and link adequacy)."""

from dataclasses import dataclass, replace

import numpy as np

from . import model, specfun
from .errors import DomainError, NonConvergenceError
from .estimator import fit
from .model import LambdaMode, ParamVector

__all__ = [
    "WaldInterval",
    "TestResult",
    "SurfaceIntervals",
    "wald_ci_params",
    "wald_ci_surfaces",
    "z_test",
    "joint_test",
    "reset_test",
    "link_adequacy_test",
]

JOINT_TEST_KINDS = ("LR", "Wald", "score", "gradient")


@dataclass(frozen=True)
class WaldInterval:
    name: str
    estimate: float
    std_error: float
    lower: float
    upper: float
    level: float
    scale: str = "identity"   # "log" when built on the optimizer's log scale


@dataclass(frozen=True)
class TestResult:
    kind: str
    statistic: float
    dof: int | None
    p_value: float


@dataclass(frozen=True)
class SurfaceIntervals:
    mu_lower: np.ndarray
    mu_upper: np.ndarray
    sigma_lower: np.ndarray
    sigma_upper: np.ndarray
    level: float
    clipped: np.ndarray        # bool flags: an endpoint left the link domain


def _check_cov(fitted):
    cov = fitted.cov
    d = np.diag(cov)
    if np.any(d < -1e-8 * max(np.max(np.abs(d)), 1.0)):
        raise DomainError("covariance matrix is not positive semidefinite")
    return cov


def _log_scale_indices(fitted):
    spec = fitted.spec
    out = set()
    if spec.lambda1.is_free and spec.mean_link.shape_transform == "log":
        out.add(fitted.layout.lambda1_index)
    if spec.lambda2.is_free and spec.disp_link.shape_transform == "log":
        out.add(fitted.layout.lambda2_index)
    return out


def wald_ci_params(fitted, level=0.95):
    """Per-parameter Wald intervals.  Shape parameters estimated on the log
    scale get intervals built there and mapped back (delta method), which
    keeps them inside the admissible region."""
    if not fitted.converged:
        raise DomainError("Wald intervals require a converged fit")
    cov = _check_cov(fitted)
    z = specfun.std_normal_quantile(1.0 - (1.0 - level) / 2.0)
    estimates = fitted.params()
    ses = np.sqrt(np.maximum(np.diag(cov), 0.0))
    log_idx = _log_scale_indices(fitted)
    out = []
    for i, name in enumerate(fitted.layout.names):
        est, se = float(estimates[i]), float(ses[i])
        if i in log_idx and est > 0.0 and se > 0.0:
            half = z * se / est
            out.append(WaldInterval(name, est, se, est * np.exp(-half),
                                    est * np.exp(half), level, "log"))
        else:
            out.append(WaldInterval(name, est, se, est - z * se,
                                    est + z * se, level))
    return out


def wald_ci_surfaces(fitted, level=0.95):
    """Pointwise intervals for mu_t and sigma_t: the predictor interval
    endpoints mapped through the inverse link at the estimated shape."""
    if not fitted.converged:
        raise DomainError("Wald intervals require a converged fit")
    cov = _check_cov(fitted)
    spec, layout, theta = fitted.spec, fitted.layout, fitted.theta
    z = specfun.std_normal_quantile(1.0 - (1.0 - level) / 2.0)

    def one(design, eta, link, lam, block):
        cb = cov[block, block]
        se = np.sqrt(np.maximum(np.einsum("ti,ij,tj->t", design, cb, design), 0.0))
        lower = np.empty_like(eta)
        upper = np.empty_like(eta)
        clipped = np.zeros(eta.shape, dtype=bool)
        for t in range(eta.size):
            for dst, e in ((lower, eta[t] - z * se[t]), (upper, eta[t] + z * se[t])):
                try:
                    dst[t] = link.inverse(e, lam)
                except DomainError:
                    # endpoint left the link domain; clip to the range limit
                    dst[t] = 1.0 if e > eta[t] else 0.0
                    clipped[t] = True
        return lower, upper, clipped

    mu_lo, mu_hi, c1 = one(spec.X, fitted.surfaces.eta1, spec.mean_link,
                           theta.lambda1, layout.beta_slice)
    sg_lo, sg_hi, c2 = one(spec.Z, fitted.surfaces.eta2, spec.disp_link,
                           theta.lambda2, layout.gamma_slice)
    return SurfaceIntervals(mu_lo, mu_hi, sg_lo, sg_hi, level, c1 | c2)


def _param_index(fitted, index):
    if isinstance(index, str):
        return fitted.layout.index_of(index)
    index = int(index)
    if not 0 <= index < fitted.layout.q:
        raise DomainError(f"parameter index {index} out of range")
    return index


def z_test(fitted, index, null_value=0.0):
    """Single-parameter asymptotic normal test."""
    i = _param_index(fitted, index)
    est = float(fitted.params()[i])
    se = float(np.sqrt(max(fitted.cov[i, i], 0.0)))
    if se == 0.0:
        raise DomainError("standard error is zero; z statistic undefined")
    z = (est - null_value) / se
    p = 2.0 * specfun.std_normal_cdf(-abs(z))
    return TestResult("z", z, None, min(p, 1.0))


def _apply_restriction(spec, restriction, layout):
    """Build the restricted spec (columns dropped into offsets, lambdas
    pinned) plus the map back into the full layout."""
    idx = {}
    for key, value in restriction.items():
        idx[_param_index_layout(layout, key)] = float(value)
    if not idx:
        return None
    beta_fix = {i: v for i, v in idx.items() if i < layout.r}
    gamma_fix = {i - layout.r: v for i, v in idx.items()
                 if layout.r <= i < layout.r + layout.s}
    lam1 = idx.get(layout.lambda1_index) if layout.free1 else None
    lam2 = idx.get(layout.lambda2_index) if layout.free2 else None

    keep_x = [j for j in range(layout.r) if j not in beta_fix]
    keep_z = [j for j in range(layout.s) if j not in gamma_fix]
    offset1 = spec.offset1.copy() if spec.offset1 is not None else np.zeros(spec.n)
    offset2 = spec.offset2.copy() if spec.offset2 is not None else np.zeros(spec.n)
    for j, v in beta_fix.items():
        offset1 += v * spec.X[:, j]
    for j, v in gamma_fix.items():
        offset2 += v * spec.Z[:, j]

    x_names = spec.x_names or tuple(f"beta{i}" for i in range(spec.r))
    z_names = spec.z_names or tuple(f"gamma{j}" for j in range(spec.s))
    restricted = replace(
        spec,
        X=spec.X[:, keep_x],
        Z=spec.Z[:, keep_z],
        offset1=offset1,
        offset2=offset2,
        lambda1=LambdaMode.fixed(lam1) if lam1 is not None else spec.lambda1,
        lambda2=LambdaMode.fixed(lam2) if lam2 is not None else spec.lambda2,
        x_names=tuple(x_names[j] for j in keep_x),
        z_names=tuple(z_names[j] for j in keep_z),
    )

    def embed(theta_r):
        beta = np.empty(layout.r)
        gamma = np.empty(layout.s)
        beta[keep_x] = theta_r.beta
        gamma[keep_z] = theta_r.gamma
        for j, v in beta_fix.items():
            beta[j] = v
        for j, v in gamma_fix.items():
            gamma[j] = v
        return ParamVector(
            beta, gamma,
            lam1 if lam1 is not None else theta_r.lambda1,
            lam2 if lam2 is not None else theta_r.lambda2)

    return restricted, embed, sorted(idx), [idx[i] for i in sorted(idx)]


def _param_index_layout(layout, key):
    if isinstance(key, str):
        return layout.index_of(key)
    key = int(key)
    if not 0 <= key < layout.q:
        raise DomainError(f"parameter index {key} out of range")
    return key


def joint_test(spec, y, fitted, restriction, kind="LR"):
    """Test H0: theta_I = theta_I^0 for an index->value restriction map.

    kind is one of LR, Wald, score, gradient; all four are asymptotically
    chi-squared with one degree of freedom per restricted parameter.
    """
    if kind not in JOINT_TEST_KINDS:
        raise DomainError(f"unknown test kind {kind!r}; expected {JOINT_TEST_KINDS}")
    layout = fitted.layout
    applied = _apply_restriction(spec, dict(restriction), layout)
    if applied is None:
        return TestResult(kind, 0.0, 0, 1.0)
    restricted_spec, embed, idx, null_values = applied
    idx = np.asarray(idx, dtype=int)
    null_values = np.asarray(null_values, dtype=float)
    dof = idx.size
    d = fitted.params()[idx] - null_values

    if kind == "Wald":
        cb = fitted.cov[np.ix_(idx, idx)]
        stat = float(d @ np.linalg.solve(cb, d))
        return TestResult(kind, max(stat, 0.0), dof,
                          specfun.chi2_sf(max(stat, 0.0), dof))

    try:
        restricted_fit = fit(restricted_spec, y, fitted.options)
    except NonConvergenceError as exc:
        raise NonConvergenceError(
            f"restricted fit for {dict(restriction)!r} did not converge",
            best_attempt=exc.best_attempt) from exc
    theta_tilde = embed(restricted_fit.theta)

    if kind == "LR":
        stat = 2.0 * (fitted.loglik - restricted_fit.loglik)
    elif kind == "score":
        u = model.score(spec, theta_tilde, y)
        k = model.fisher_information(spec, theta_tilde)
        kinv_block = np.linalg.inv(k)[np.ix_(idx, idx)]
        stat = float(u[idx] @ kinv_block @ u[idx])
    else:  # gradient
        u = model.score(spec, theta_tilde, y)
        stat = float(u[idx] @ d)
    stat = max(float(stat), 0.0)
    return TestResult(kind, stat, dof, specfun.chi2_sf(stat, dof))


def reset_test(spec, y, fitted, kind="LR"):
    """Misspecification check: add the squared mean predictor to both
    submodels (shape parameters pinned at their estimates) and test that
    the two artificial coefficients are zero."""
    if not fitted.converged:
        raise DomainError("RESET test requires a converged fit")
    eta1sq = fitted.surfaces.eta1 ** 2
    x_names = spec.x_names or tuple(f"beta{i}" for i in range(spec.r))
    z_names = spec.z_names or tuple(f"gamma{j}" for j in range(spec.s))
    aug = replace(
        spec,
        X=np.column_stack([spec.X, eta1sq]),
        Z=np.column_stack([spec.Z, eta1sq]),
        lambda1=(LambdaMode.fixed(fitted.theta.lambda1)
                 if spec.mean_link.has_shape else spec.lambda1),
        lambda2=(LambdaMode.fixed(fitted.theta.lambda2)
                 if spec.disp_link.has_shape else spec.lambda2),
        x_names=tuple(x_names) + ("eta1_sq",),
        z_names=tuple(z_names) + ("eta1_sq",),
    )
    try:
        aug_fit = fit(aug, y, fitted.options)
    except NonConvergenceError as exc:
        raise NonConvergenceError("augmented RESET fit did not converge",
                                  best_attempt=exc.best_attempt) from exc
    restriction = {spec.r: 0.0, spec.r + 1 + spec.s: 0.0}
    return joint_test(aug, y, aug_fit, restriction, kind)


def link_adequacy_test(spec, y, fitted, lambda_null=(1.0, 1.0), kind="LR"):
    """Joint test of the shape-parameter pair against a fixed-link null,
    e.g. (1, 1) under the asymmetric family tests the logit links."""
    if not (spec.lambda1.is_free and spec.lambda2.is_free):
        raise DomainError("link adequacy test requires both shape parameters free")
    restriction = {"lambda1": float(lambda_null[0]),
                   "lambda2": float(lambda_null[1])}
    return joint_test(spec, y, fitted, restriction, kind)
