"""Joint maximum-likelihood fitting of (beta, gamma, lambda1, lambda2).

Quasi-Newton (BFGS) ascent with the analytic score and a backtracking
Armijo line search.  Inadmissible points (shape constraint or link-domain
violations) evaluate to -inf and are rejected by the line search, which
keeps the accepted log-likelihood sequence monotone.  Shape parameters of
the asymmetric family are optimized on the log scale.
"""

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from . import model
from .errors import DomainError, NonConvergenceError, SingularMatrixError
from .model import LambdaMode, ModelSpec, ParamVector

__all__ = ["FitOptions", "FittedModel", "ProfileCell",
           "initial_values", "fit", "fit_null", "profile_lambda"]


@dataclass(frozen=True)
class FitOptions:
    """Optimizer controls.

    gradient_tolerance is applied to max|score|/n on the original
    parameter scale.  When the default start fails to converge, the fit is
    retried from every shape-parameter value in the multistart grid
    (family defaults unless overridden here).
    """

    max_iterations: int = 500
    gradient_tolerance: float = 1e-6
    lambda1_start: float | None = None
    lambda2_start: float | None = None
    multistart: bool = True
    multistart_grid1: tuple = None
    multistart_grid2: tuple = None

    def __post_init__(self):
        if self.max_iterations <= 0 or self.gradient_tolerance <= 0:
            raise DomainError("max_iterations and gradient_tolerance must be positive")


@dataclass
class FittedModel:
    spec: ModelSpec
    theta: ParamVector
    loglik: float
    fisher: np.ndarray
    cov: np.ndarray
    surfaces: model.FittedSurfaces
    converged: bool
    iterations: int
    start_used: dict
    options: FitOptions
    layout: model.ParamLayout
    singular_fisher: bool = False
    convergence_reason: str = "score"
    trace: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def q(self):
        return self.layout.q

    @property
    def n(self):
        return self.spec.n

    def std_errors(self):
        return np.sqrt(np.maximum(np.diag(self.cov), 0.0))

    def params(self):
        return self.layout.pack(self.theta)


@dataclass(frozen=True)
class ProfileCell:
    lambda1: float
    lambda2: float
    loglik: float
    converged: bool


@dataclass
class _Attempt:
    start: dict
    x: np.ndarray
    loglik: float
    iterations: int
    status: str
    trace: np.ndarray

    @property
    def converged(self):
        return self.status in ("converged", "decrement", "boundary")

    @property
    def interior(self):
        return self.status in ("converged", "decrement")


def _resolve_start(mode, link, requested):
    if not link.has_shape:
        return link.default_shape
    if mode.kind == "fixed":
        return mode.value
    value = link.default_shape if requested is None else float(requested)
    link.check_shape(value)
    return value


def initial_values(spec, y, options=None, lambda1=None, lambda2=None):
    """Starting point: least squares on the linked (squeezed) response for
    beta, a moment-matched constant for gamma, family defaults for lambdas."""
    options = options or FitOptions()
    y = np.asarray(y, dtype=float)
    l1 = _resolve_start(spec.lambda1, spec.mean_link,
                        lambda1 if lambda1 is not None else options.lambda1_start)
    l2 = _resolve_start(spec.lambda2, spec.disp_link,
                        lambda2 if lambda2 is not None else options.lambda2_start)

    y_sq = np.clip(y, 0.005, 0.995)
    target = spec.mean_link.link(y_sq, l1)
    if spec.offset1 is not None:
        target = target - spec.offset1
    beta0, _, rank, _ = np.linalg.lstsq(spec.X, target, rcond=None)
    if rank < spec.r:
        raise DomainError("X is rank deficient")

    ybar = float(np.mean(y))
    s_hat = float(np.sqrt(np.var(y) / max(ybar * (1.0 - ybar), 1e-12)))
    s_hat = min(0.9, max(s_hat, 1e-3))
    gamma0 = np.zeros(spec.s)
    g2 = spec.disp_link.link(s_hat, l2)
    if spec.offset2 is not None:
        g2 = g2 - float(np.mean(spec.offset2))
    gamma0[0] = g2

    theta0 = ParamVector(beta0, gamma0, l1, l2)
    if np.isfinite(model.log_likelihood(spec, theta0, y)):
        return theta0
    # least-squares predictor can overshoot a bounded link's range; fall
    # back to the always-feasible intercept-only start
    beta_fallback = np.zeros(spec.r)
    off = 0.0 if spec.offset1 is None else float(np.mean(spec.offset1))
    beta_fallback[0] = spec.mean_link.link(float(np.mean(y_sq)), l1) - off
    return ParamVector(beta_fallback, gamma0, l1, l2)


class _Working:
    """Mapping between the estimation layout and the optimizer scale
    (log-lambda for families with a positive-shape constraint)."""

    def __init__(self, spec):
        self.spec = spec
        self.layout = spec.layout()
        self.log_idx = []
        if spec.lambda1.is_free and spec.mean_link.shape_transform == "log":
            self.log_idx.append(self.layout.lambda1_index)
        if spec.lambda2.is_free and spec.disp_link.shape_transform == "log":
            self.log_idx.append(self.layout.lambda2_index)

    def to_working(self, theta):
        x = self.layout.pack(theta)
        for i in self.log_idx:
            x[i] = np.log(x[i])
        return x

    def to_theta(self, x):
        v = x.copy()
        for i in self.log_idx:
            v[i] = np.exp(v[i])
        return self.layout.unpack(v, self.spec)

    def score_to_working(self, u, x):
        g = u.copy()
        for i in self.log_idx:
            g[i] = u[i] * np.exp(x[i])
        return g


def _bfgs_maximize(f, g, x0, *, max_iter, is_converged, metric=None,
                   flat_floor=0.0, armijo=1e-4, min_step=1e-14):
    """BFGS ascent with backtracking Armijo line search.

    The inverse-Hessian approximation is seeded from metric(x) (inverse
    Fisher information when available) and refreshed from it whenever the
    search direction degenerates or the line search has to back off hard.

    Stopping states:
      converged           gradient criterion met
      decrement           the (metric-confirmed) expected remaining ascent
                          g'Hg/2 fell below the float resolution of f; the
                          iterate is the representable optimum even though
                          ill-scaled blocks keep raw score entries large
      flat                gradient numerically zero on the optimizer scale
                          while the gradient criterion still fails (shape
                          parameter drifting along a boundary plateau)
    """
    x = np.asarray(x0, dtype=float).copy()
    fx = f(x)
    if not np.isfinite(fx):
        raise DomainError("infeasible starting point")
    gx = g(x)
    d = x.size

    def fresh_metric(at):
        if metric is not None:
            m = metric(at)
            if m is not None:
                return m
        return np.eye(d)

    hinv = fresh_metric(x)
    fresh = True
    trace = [fx]
    status = "max_iterations"
    iterations = 0
    crawl = 0
    for _ in range(max_iter):
        if not np.all(np.isfinite(gx)):
            status = "stalled"
            break
        if is_converged(x, gx):
            status = "converged"
            break
        if float(np.max(np.abs(gx))) <= flat_floor:
            status = "flat"
            break
        p = hinv @ gx
        slope = float(p @ gx)
        if (slope <= 0.0 or not np.isfinite(slope)) and not fresh:
            hinv = fresh_metric(x)
            fresh = True
            p = hinv @ gx
            slope = float(p @ gx)
        if slope <= 0.0 or not np.isfinite(slope):
            p = gx.copy()
            slope = float(p @ gx)
            if slope <= 0.0:
                status = "stalled"
                break
        dtol = 1e-10 * (1.0 + abs(fx))
        if 0.5 * slope <= dtol:
            if fresh:
                status = "decrement"
                break
            # confirm against the analytic curvature without discarding
            # the learned plateau metric
            m = fresh_metric(x)
            slope2 = float(gx @ (m @ gx))
            if 0.5 * min(slope, slope2) <= dtol:
                status = "decrement"
                break
        pnorm = float(np.linalg.norm(p))
        step = min(1.0, 100.0 / pnorm) if pnorm > 100.0 else 1.0
        accepted = False
        while step >= min_step:
            xn = x + step * p
            fn = f(xn)
            if np.isfinite(fn) and fn >= fx + armijo * step * slope:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            if not fresh:
                hinv = fresh_metric(x)
                fresh = True
                continue
            if 0.5 * slope <= 1e-6 * (1.0 + abs(fx)):
                # no representable step improves and the modeled remaining
                # ascent is negligible: the float-limit optimum
                status = "decrement"
            else:
                status = "line_search_failed"
            break
        # repeated micro-steps mean the iterate is pinned against a link
        # domain wall (a constrained supremum the gradient criterion can
        # never certify); stop instead of crawling along it
        if fn - fx <= 1e-11 * (1.0 + abs(fx)):
            crawl += 1
            if crawl >= 3:
                x, fx = xn, fn
                status = "crawl"
                break
        else:
            crawl = 0
        gn = g(xn)
        if step < 0.25:
            # metric mismatch; re-precondition at the new iterate
            hinv = fresh_metric(xn)
            fresh = True
        elif np.all(np.isfinite(gn)):
            s = xn - x
            yv = gx - gn
            sy = float(s @ yv)
            if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(yv):
                hy = hinv @ yv
                rho = 1.0 / sy
                hinv -= rho * (np.outer(s, hy) + np.outer(hy, s))
                hinv += (rho * rho * float(yv @ hy) + rho) * np.outer(s, s)
                fresh = False
        x, fx, gx = xn, fn, gn
        iterations += 1
        trace.append(fx)
    if status not in ("converged", "decrement") and np.all(np.isfinite(gx)) \
            and is_converged(x, gx):
        status = "converged"
    return x, fx, gx, iterations, status, np.asarray(trace)


# log-scale shape parameters are confined to this box during optimization;
# exp(+-30) is far outside any statistically meaningful shape value and the
# box keeps the arithmetic well inside floating-point range
_LOG_SHAPE_BOX = 30.0


def _guarded_inverse(k):
    """Inverse of a symmetric PSD matrix for preconditioning.

    Directions with (near-)zero information would get explosive Newton
    steps; their inverse eigenvalues are capped so the optimizer moves
    cautiously along them instead.
    """
    try:
        cf = scipy.linalg.cho_factor(k)
        h = scipy.linalg.cho_solve(cf, np.eye(k.shape[0]))
        if np.all(np.isfinite(h)):
            return h
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError):
        pass
    try:
        evals, vecs = np.linalg.eigh(k)
    except np.linalg.LinAlgError:
        return None
    top = float(evals[-1])
    if not (np.isfinite(top) and top > 0.0):
        return None
    inv = np.where(evals > 1e-10 * top, 1.0 / np.maximum(evals, 1e-300),
                   1e2 / top)
    return (vecs * inv) @ vecs.T


def _warm_regression_start(spec, y, options, theta0):
    """Polish (beta, gamma) with the shape parameters pinned at their start
    values.  A constant-dispersion start makes the free-lambda information
    singular (the lambda and intercept directions coincide); releasing the
    lambdas from this interior point avoids that degeneracy."""
    pinned = replace(
        spec,
        lambda1=(LambdaMode.fixed(theta0.lambda1) if spec.lambda1.is_free
                 else spec.lambda1),
        lambda2=(LambdaMode.fixed(theta0.lambda2) if spec.lambda2.is_free
                 else spec.lambda2),
    )
    warm_opts = replace(options, max_iterations=min(options.max_iterations, 100))
    try:
        attempt, working = _run_single(pinned, y, warm_opts, theta0)
    except DomainError:
        return theta0
    warm = working.to_theta(attempt.x)
    return ParamVector(warm.beta, warm.gamma, theta0.lambda1, theta0.lambda2)


def _wall_pinned(spec, theta, tol=1e-3):
    """True when a symmetric-family submodel sits against its predictor
    domain wall |lam*eta/2| = 1 (a constrained supremum of the likelihood)."""
    for link, lam, eta in ((spec.mean_link, theta.lambda1, spec.eta1(theta.beta)),
                           (spec.disp_link, theta.lambda2, spec.eta2(theta.gamma))):
        if link.name == "ao-symmetric" and abs(lam) >= 1e-4:
            if np.max(np.abs(lam * eta / 2.0)) >= 1.0 - tol:
                return True
    return False


def _run_attempt(spec, y, options, l1, l2, from_grid):
    theta0 = initial_values(spec, y, options, lambda1=l1, lambda2=l2)
    if spec.lambda1.is_free or spec.lambda2.is_free:
        theta0 = _warm_regression_start(spec, y, options, theta0)
    attempt, working = _run_single(spec, y, options, theta0)
    if attempt.status in ("crawl", "line_search_failed", "max_iterations", "stalled") \
            and np.isfinite(attempt.loglik) \
            and _wall_pinned(spec, working.to_theta(attempt.x)):
        attempt.status = "boundary"
    attempt.start = {"lambda1": theta0.lambda1, "lambda2": theta0.lambda2,
                     "from_grid": from_grid}
    return attempt, working


def _run_single(spec, y, options, theta0):
    working = _Working(spec)
    x0 = working.to_working(theta0)
    gtol = options.gradient_tolerance * spec.n
    log_idx = np.asarray(working.log_idx, dtype=int)

    def fun(x):
        if log_idx.size and np.max(np.abs(x[log_idx])) > _LOG_SHAPE_BOX:
            return -np.inf
        return model.log_likelihood(spec, working.to_theta(x), y)

    def grad(x):
        u = model.score(spec, working.to_theta(x), y)
        return working.score_to_working(u, x)

    def is_converged(x, g_work):
        u = g_work.copy()
        for i in working.log_idx:
            u[i] = g_work[i] / np.exp(x[i])
        return float(np.max(np.abs(u))) <= gtol

    def metric(x):
        try:
            k = model.fisher_information(spec, working.to_theta(x))
        except DomainError:
            return None
        if not np.all(np.isfinite(k)):
            return None
        for i in working.log_idx:
            lam = np.exp(x[i])
            k[i, :] *= lam
            k[:, i] *= lam
        return _guarded_inverse(k)

    x, fx, _, iters, status, trace = _bfgs_maximize(
        fun, grad, x0, max_iter=options.max_iterations,
        is_converged=is_converged, metric=metric, flat_floor=1e-10 * spec.n)
    start = {"lambda1": theta0.lambda1, "lambda2": theta0.lambda2,
             "from_grid": False}
    return _Attempt(start, x, fx, iters, status, trace), working


def _grid_pairs(spec, options):
    """One retry per grid value, applied to every free shape parameter
    (grids cycle when the two submodels' grids have different lengths)."""
    def grid_for(mode, link, override):
        if not (link.has_shape and mode.is_free):
            return None
        return tuple(override) if override else link.start_grid

    g1 = grid_for(spec.lambda1, spec.mean_link, options.multistart_grid1)
    g2 = grid_for(spec.lambda2, spec.disp_link, options.multistart_grid2)
    k = max(len(g) for g in (g1, g2) if g is not None) if (g1 or g2) else 0
    return [(g1[i % len(g1)] if g1 else None,
             g2[i % len(g2)] if g2 else None) for i in range(k)]


def _finalize(spec, y, attempt, working, options):
    theta = working.to_theta(attempt.x)
    if spec.disp_link.name == "ao-symmetric" and spec.lambda2.is_free:
        theta = ParamVector(theta.beta, theta.gamma, theta.lambda1, abs(theta.lambda2))
    if spec.mean_link.name == "ao-symmetric" and spec.lambda1.is_free:
        theta = ParamVector(theta.beta, theta.gamma, abs(theta.lambda1), theta.lambda2)
    surf = model.surfaces(spec, theta)
    fisher = model.fisher_information(spec, theta)
    singular = False
    try:
        cf = scipy.linalg.cho_factor(fisher)
        cov = scipy.linalg.cho_solve(cf, np.eye(fisher.shape[0]))
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError):
        warnings.warn("information matrix is singular at the optimum; "
                      "covariance computed by pseudo-inverse", RuntimeWarning)
        cov = np.linalg.pinv(fisher, hermitian=True)
        singular = True
    cov = 0.5 * (cov + cov.T)
    reason = {"converged": "score", "decrement": "float-limit",
              "boundary": "boundary"}.get(attempt.status, attempt.status)
    return FittedModel(
        spec=spec, theta=theta, loglik=attempt.loglik, fisher=fisher, cov=cov,
        surfaces=surf, converged=attempt.converged, iterations=attempt.iterations,
        start_used=attempt.start, options=options,
        layout=working.layout, singular_fisher=singular,
        convergence_reason=reason, trace=attempt.trace)


def fit(spec, y, options=None):
    """Maximize the log-likelihood.

    The multistart grid is tried when the default start does not reach an
    interior optimum; interior convergence from any start is preferred
    over domain-wall (boundary) solutions, which are returned, flagged,
    only when no start converges in the interior.
    """
    options = options or FitOptions()
    y = np.asarray(y, dtype=float)

    tried = []
    working = None

    def run(l1, l2, from_grid):
        nonlocal working
        a, working = _run_attempt(spec, y, options, l1, l2, from_grid)
        tried.append(a)
        return a

    try:
        a0 = run(options.lambda1_start, options.lambda2_start, False)
    except DomainError:
        a0 = None

    best_interior = a0 if (a0 is not None and a0.interior) else None
    if best_interior is None and options.multistart:
        for (l1, l2) in _grid_pairs(spec, options):
            try:
                cand = run(l1, l2, True)
            except DomainError:
                continue
            if cand.interior and (best_interior is None
                                  or cand.loglik > best_interior.loglik):
                best_interior = cand
    chosen = best_interior
    if chosen is None:
        chosen = max((a for a in tried if a.converged),
                     key=lambda a: a.loglik, default=None)
    if chosen is None:
        best_failed = max(tried, key=lambda a: a.loglik, default=None)
        raise NonConvergenceError(
            "no start converged "
            f"({len(tried)} attempts; best status "
            f"{best_failed.status if best_failed else 'none'})",
            best_attempt=best_failed)
    return _finalize(spec, y, chosen, working, options)


def fit_null(y, options=None):
    """Constant-mean, constant-dispersion fit (no shape parameters); the
    reference point of the generalized coefficient of determination."""
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    ones = np.ones((n, 1))
    spec = ModelSpec(ones, ones, "logit", "logit",
                     LambdaMode.unused(), LambdaMode.unused())
    return fit(spec, y, options)


def profile_lambda(spec, y, options, lambda_grid):
    """Fixed-(lambda1, lambda2) fits over a grid; cells sorted by loglik.

    Grid entries may be scalars (used for both submodels) or pairs.
    """
    options = options or FitOptions()
    cells = []
    for entry in lambda_grid:
        pair = (entry, entry) if np.isscalar(entry) else tuple(entry)
        l1, l2 = float(pair[0]), float(pair[1])
        mode1 = LambdaMode.fixed(l1) if spec.mean_link.has_shape else LambdaMode.unused()
        mode2 = LambdaMode.fixed(l2) if spec.disp_link.has_shape else LambdaMode.unused()
        cell_spec = replace(spec, lambda1=mode1, lambda2=mode2)
        try:
            res = fit(cell_spec, y, options)
            cells.append(ProfileCell(l1, l2, res.loglik, True))
        except NonConvergenceError as exc:
            ll = exc.best_attempt.loglik if exc.best_attempt else -np.inf
            cells.append(ProfileCell(l1, l2, ll, False))
    return sorted(cells, key=lambda c: (not c.converged, -c.loglik))


def covariance_or_raise(fitted):
    """Covariance matrix for Wald inference; refuses a singular information."""
    if fitted.singular_fisher:
        raise SingularMatrixError("information matrix singular; no Wald inference")
    return fitted.cov
