"""Model specification, reparameterized beta likelihood, score and information.

The response is beta distributed with mean mu and dispersion sigma, both in
(0,1).  Writing pf = (1 - sigma^2)/sigma^2, the density shape pair is
(mu*pf, (1-mu)*pf), so E(Y) = mu and Var(Y) = mu(1-mu) sigma^2.  Submodels:

    g1(mu_t, lambda1)    = x_t' beta  = eta1_t
    g2(sigma_t, lambda2) = z_t' gamma = eta2_t

The full parameter vector is theta = (beta, gamma, lambda1, lambda2) with
fixed-mode lambdas removed from the estimation layout.
"""

from dataclasses import dataclass, field

import numpy as np

from . import specfun
from .errors import DomainError
from .links import LinkFamily, get_family

__all__ = [
    "LambdaMode",
    "ModelSpec",
    "ParamVector",
    "ParamLayout",
    "FittedSurfaces",
    "ObsQuantities",
    "log_density",
    "log_likelihood",
    "score",
    "fisher_information",
    "observed_quantities",
]

# psi/psi' arguments are clipped into this interval for numeric safety only
_CLIP = 1e-12


@dataclass(frozen=True)
class LambdaMode:
    """Handling of a link shape parameter: estimated, pinned, or absent."""

    kind: str                  # "free" | "fixed" | "unused"
    value: float | None = None

    @classmethod
    def free(cls):
        return cls("free")

    @classmethod
    def fixed(cls, value):
        return cls("fixed", float(value))

    @classmethod
    def unused(cls):
        return cls("unused")

    @property
    def is_free(self):
        return self.kind == "free"


def _as_matrix(M, name):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise DomainError(f"{name} must be a 2-d design matrix")
    return M


def _resolve_link(link):
    return get_family(link) if isinstance(link, str) else link


@dataclass(frozen=True)
class ModelSpec:
    """Design matrices, link choices and shape-parameter modes.

    X and Z are expected to carry an all-ones first column (intercept) by
    convention; offsets allow fitting restricted models where some
    coefficients are pinned to known values.
    """

    X: np.ndarray
    Z: np.ndarray
    mean_link: LinkFamily
    disp_link: LinkFamily
    lambda1: LambdaMode = field(default_factory=LambdaMode.free)
    lambda2: LambdaMode = field(default_factory=LambdaMode.free)
    offset1: np.ndarray | None = None
    offset2: np.ndarray | None = None
    x_names: tuple | None = None
    z_names: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "X", _as_matrix(self.X, "X"))
        object.__setattr__(self, "Z", _as_matrix(self.Z, "Z"))
        object.__setattr__(self, "mean_link", _resolve_link(self.mean_link))
        object.__setattr__(self, "disp_link", _resolve_link(self.disp_link))
        if self.X.shape[0] != self.Z.shape[0]:
            raise DomainError("X and Z must have the same number of rows")
        for (M, name) in ((self.X, "X"), (self.Z, "Z")):
            if np.linalg.matrix_rank(M) < M.shape[1]:
                raise DomainError(f"{name} is rank deficient")
        for link, mode, name in ((self.mean_link, self.lambda1, "lambda1"),
                                 (self.disp_link, self.lambda2, "lambda2")):
            if not link.has_shape:
                if mode.kind == "free":
                    raise DomainError(
                        f"{name} cannot be free: link {link.name!r} has no shape parameter")
                object.__setattr__(self, name, LambdaMode.unused())
            else:
                if mode.kind == "unused":
                    raise DomainError(
                        f"{name} required: link {link.name!r} has a shape parameter")
                if mode.kind == "fixed":
                    link.check_shape(mode.value)
        if self.n <= self.layout().q:
            raise DomainError("need more observations than free parameters")

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def r(self):
        return self.X.shape[1]

    @property
    def s(self):
        return self.Z.shape[1]

    def layout(self):
        return ParamLayout.for_spec(self)

    def eta1(self, beta):
        eta = self.X @ beta
        return eta if self.offset1 is None else eta + self.offset1

    def eta2(self, gamma):
        eta = self.Z @ gamma
        return eta if self.offset2 is None else eta + self.offset2


@dataclass(frozen=True)
class ParamVector:
    """theta = (beta, gamma, lambda1, lambda2); lambdas carry the fixed or
    unused placeholder value when not estimated."""

    beta: np.ndarray
    gamma: np.ndarray
    lambda1: float
    lambda2: float

    def __post_init__(self):
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float))
        object.__setattr__(self, "gamma", np.asarray(self.gamma, dtype=float))


@dataclass(frozen=True)
class ParamLayout:
    """Index bookkeeping for the free-parameter vector (beta, gamma, lambdas)."""

    r: int
    s: int
    free1: bool
    free2: bool
    names: tuple

    @classmethod
    def for_spec(cls, spec):
        x_names = spec.x_names or tuple(f"beta{i}" for i in range(spec.r))
        z_names = spec.z_names or tuple(f"gamma{j}" for j in range(spec.s))
        names = list(x_names) + list(z_names)
        if spec.lambda1.is_free:
            names.append("lambda1")
        if spec.lambda2.is_free:
            names.append("lambda2")
        return cls(spec.r, spec.s, spec.lambda1.is_free, spec.lambda2.is_free,
                   tuple(names))

    @property
    def q(self):
        return self.r + self.s + self.free1 + self.free2

    @property
    def beta_slice(self):
        return slice(0, self.r)

    @property
    def gamma_slice(self):
        return slice(self.r, self.r + self.s)

    @property
    def lambda1_index(self):
        return self.r + self.s if self.free1 else None

    @property
    def lambda2_index(self):
        return self.r + self.s + self.free1 if self.free2 else None

    def index_of(self, name):
        try:
            return self.names.index(name)
        except ValueError:
            raise DomainError(f"unknown parameter {name!r}") from None

    def pack(self, theta):
        out = np.concatenate([theta.beta, theta.gamma])
        extra = []
        if self.free1:
            extra.append(theta.lambda1)
        if self.free2:
            extra.append(theta.lambda2)
        return np.concatenate([out, extra]) if extra else out

    def unpack(self, vec, spec):
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (self.q,):
            raise DomainError(f"parameter vector must have length {self.q}")
        beta = vec[self.beta_slice]
        gamma = vec[self.gamma_slice]
        lam1 = vec[self.lambda1_index] if self.free1 else _pinned(spec.lambda1, spec.mean_link)
        lam2 = vec[self.lambda2_index] if self.free2 else _pinned(spec.lambda2, spec.disp_link)
        return ParamVector(beta, gamma, float(lam1), float(lam2))


def _pinned(mode, link):
    if mode.kind == "fixed":
        return mode.value
    return link.default_shape


@dataclass(frozen=True)
class FittedSurfaces:
    """Per-observation linear predictors and unit-interval parameters."""

    eta1: np.ndarray
    eta2: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    precision_factor: np.ndarray


@dataclass(frozen=True)
class ObsQuantities:
    """Everything the score, information and diagnostics consume."""

    surfaces: FittedSurfaces
    t1: np.ndarray        # dmu/deta1
    h2: np.ndarray        # dsigma/deta2
    rho: np.ndarray       # dmu/dlambda1
    varrho: np.ndarray    # dsigma/dlambda2
    ystar: np.ndarray | None
    mustar: np.ndarray
    a: np.ndarray | None
    w: np.ndarray
    c: np.ndarray
    nu: np.ndarray
    dstar: np.ndarray


def _check_y(y, n):
    y = np.asarray(y, dtype=float)
    if y.shape != (n,):
        raise DomainError(f"response must have length {n}")
    if np.any(~((y > 0.0) & (y < 1.0))):
        raise DomainError("response values must lie strictly inside (0, 1)")
    return y


def surfaces(spec, theta):
    """Linear predictors and (mu, sigma, pf); raises DomainError when theta
    leaves an admissible region (shape constraint or link domain)."""
    if theta.beta.shape != (spec.r,) or theta.gamma.shape != (spec.s,):
        raise DomainError("theta has wrong block sizes for this spec")
    spec.mean_link.check_shape(theta.lambda1)
    spec.disp_link.check_shape(theta.lambda2)
    eta1 = spec.eta1(theta.beta)
    eta2 = spec.eta2(theta.gamma)
    if not spec.mean_link.eta_admissible(eta1, theta.lambda1):
        raise DomainError("mean predictor outside link domain")
    if not spec.disp_link.eta_admissible(eta2, theta.lambda2):
        raise DomainError("dispersion predictor outside link domain")
    mu = spec.mean_link.inverse(eta1, theta.lambda1)
    sigma = spec.disp_link.inverse(eta2, theta.lambda2)
    pf = 1.0 / (sigma * sigma) - 1.0
    return FittedSurfaces(eta1, eta2, mu, sigma, pf)


def _shapes(mu, pf):
    mu_c = np.clip(mu, _CLIP, 1.0 - _CLIP)
    return mu_c * pf, (1.0 - mu_c) * pf


def log_density(y, mu, sigma):
    """Log of the (mu, sigma)-parameterized beta density."""
    y = np.asarray(y, dtype=float)
    scalar = y.ndim == 0 and np.ndim(mu) == 0 and np.ndim(sigma) == 0
    for val, name in ((y, "y"), (np.asarray(mu), "mu"), (np.asarray(sigma), "sigma")):
        if np.any(~((val > 0.0) & (val < 1.0))):
            raise DomainError(f"{name} must lie strictly inside (0, 1)")
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    pf = 1.0 / (sigma * sigma) - 1.0
    p, q = _shapes(mu, pf)
    out = (specfun.log_gamma(pf) - specfun.log_gamma(p) - specfun.log_gamma(q)
           + (p - 1.0) * np.log(y) + (q - 1.0) * np.log1p(-y))
    return float(out) if scalar else out


def log_likelihood(spec, theta, y):
    """Total log-likelihood; -inf when theta is inadmissible for the spec."""
    y = _check_y(y, spec.n)
    try:
        surf = surfaces(spec, theta)
    except DomainError:
        return -np.inf
    p, q = _shapes(surf.mu, surf.precision_factor)
    ll = np.sum(specfun.log_gamma(surf.precision_factor)
                - specfun.log_gamma(p) - specfun.log_gamma(q)
                + (p - 1.0) * np.log(y) + (q - 1.0) * np.log1p(-y))
    return float(ll) if np.isfinite(ll) else -np.inf


def _weight_quantities(spec, theta, y=None):
    surf = surfaces(spec, theta)
    mu, sigma, pf = surf.mu, surf.sigma, surf.precision_factor
    p, q = _shapes(mu, pf)
    psi1_p = specfun.trigamma(p)
    psi1_q = specfun.trigamma(q)
    psi1_pf = specfun.trigamma(pf)
    t1 = spec.mean_link.inverse_deriv(surf.eta1, theta.lambda1)
    h2 = spec.disp_link.inverse_deriv(surf.eta2, theta.lambda2)
    rho = spec.mean_link.shape_deriv(surf.eta1, theta.lambda1)
    varrho = spec.disp_link.shape_deriv(surf.eta2, theta.lambda2)
    t1 = np.broadcast_to(np.asarray(t1, dtype=float), mu.shape)
    h2 = np.broadcast_to(np.asarray(h2, dtype=float), mu.shape)
    rho = np.broadcast_to(np.asarray(rho, dtype=float), mu.shape)
    varrho = np.broadcast_to(np.asarray(varrho, dtype=float), mu.shape)

    two_over_s3 = 2.0 / sigma ** 3
    psi_sum = psi1_p + psi1_q
    w = pf * psi_sum * t1 * t1
    c = pf * two_over_s3 * ((1.0 - mu) * psi1_q - mu * psi1_p)
    nu = pf * pf * psi_sum
    dstar = (two_over_s3 ** 2) * (-psi1_pf + mu ** 2 * psi1_p
                                  + (1.0 - mu) ** 2 * psi1_q)
    mustar = specfun.digamma(p) - specfun.digamma(q)

    ystar = a = None
    if y is not None:
        y = _check_y(y, spec.n)
        ystar = np.log(y) - np.log1p(-y)
        a = -two_over_s3 * (mu * (ystar - mustar)
                            + specfun.digamma(pf) - specfun.digamma(q)
                            + np.log1p(-y))
    return ObsQuantities(surf, t1, h2, rho, varrho, ystar, mustar, a,
                         w, c, nu, dstar)


def observed_quantities(spec, theta, y):
    """All per-observation intermediates at (theta, y); raises DomainError
    when theta is inadmissible."""
    return _weight_quantities(spec, theta, y)


def weight_quantities(spec, theta):
    """The response-free intermediates (weights, link slopes, surfaces)."""
    return _weight_quantities(spec, theta)


def score(spec, theta, y):
    """Analytic score vector, ordered per the spec layout."""
    oq = _weight_quantities(spec, theta, y)
    return _score_from_quantities(spec, oq)


def _score_from_quantities(spec, oq):
    pf = oq.surfaces.precision_factor
    resid = oq.ystar - oq.mustar
    u_beta = spec.X.T @ (pf * oq.t1 * resid)
    u_gamma = spec.Z.T @ (oq.h2 * oq.a)
    parts = [u_beta, u_gamma]
    if spec.lambda1.is_free:
        parts.append([np.sum(pf * resid * oq.rho)])
    if spec.lambda2.is_free:
        parts.append([np.sum(oq.a * oq.varrho)])
    return np.concatenate(parts)


def fisher_information(spec, theta):
    """Expected information matrix at theta, rows/columns for free
    parameters only (fixed lambda modes are omitted, not zeroed)."""
    oq = _weight_quantities(spec, theta)
    X, Z = spec.X, spec.Z
    pf = oq.surfaces.precision_factor
    layout = spec.layout()
    K = np.empty((layout.q, layout.q))

    kbb = X.T @ (X * (pf * oq.w)[:, None])
    kbg = X.T @ (Z * (oq.c * oq.t1 * oq.h2)[:, None])
    kgg = Z.T @ (Z * (oq.dstar * oq.h2 * oq.h2)[:, None])

    bs, gs = layout.beta_slice, layout.gamma_slice
    K[bs, bs] = kbb
    K[bs, gs] = kbg
    K[gs, bs] = kbg.T
    K[gs, gs] = kgg
    if spec.lambda1.is_free:
        i1 = layout.lambda1_index
        kb1 = X.T @ (oq.nu * oq.t1 * oq.rho)
        kg1 = Z.T @ (oq.c * oq.h2 * oq.rho)
        K[bs, i1] = kb1
        K[i1, bs] = kb1
        K[gs, i1] = kg1
        K[i1, gs] = kg1
        K[i1, i1] = np.sum(oq.nu * oq.rho * oq.rho)
    if spec.lambda2.is_free:
        i2 = layout.lambda2_index
        kb2 = X.T @ (oq.c * oq.t1 * oq.varrho)
        kg2 = Z.T @ (oq.dstar * oq.h2 * oq.varrho)
        K[bs, i2] = kb2
        K[i2, bs] = kb2
        K[gs, i2] = kg2
        K[i2, gs] = kg2
        K[i2, i2] = np.sum(oq.dstar * oq.varrho * oq.varrho)
        if spec.lambda1.is_free:
            i1 = layout.lambda1_index
            k12 = np.sum(oq.c * oq.rho * oq.varrho)
            K[i1, i2] = k12
            K[i2, i1] = k12
    return K
