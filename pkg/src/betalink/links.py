"""Link families for the mean and dispersion submodels.

Each family maps a parameter in (0,1) to the real line and provides the
five quantities the score vector and information matrix need:

    link(mu, lam)           eta = g(mu, lam)
    inverse(eta, lam)       mu  = g^{-1}(eta, lam)
    deriv(mu, lam)          dg/dmu
    inverse_deriv(eta, lam) dmu/deta  (reciprocal of deriv at mu = g^{-1}(eta))
    shape_deriv(eta, lam)   dmu/dlam  (identically 0 for fixed families)

The parametric families are the symmetric and asymmetric Aranda-Ordaz
links; logit, cloglog and probit are fixed special cases kept for
comparison fits.
"""

import numpy as np
from scipy.special import expit, ndtr, ndtri

from .errors import DomainError

__all__ = [
    "LinkFamily",
    "AsymmetricArandaOrdaz",
    "SymmetricArandaOrdaz",
    "Logit",
    "Cloglog",
    "Probit",
    "get_family",
    "FAMILY_NAMES",
]

# interior clipping applied by inverse() when the exact value under/overflows
EPS = 1e-12

# below this magnitude the symmetric family is evaluated at its logit limit
SYM_LAMBDA_MIN = 1e-4


def _check_unit_interval(mu, what="mu"):
    mu = np.asarray(mu, dtype=float)
    if np.any(~((mu > 0.0) & (mu < 1.0))):
        raise DomainError(f"{what} must lie strictly inside (0, 1)")
    return mu


def _ret(x, scalar):
    return float(x) if scalar else x


class LinkFamily:
    """Base class; concrete families fill in the formulas."""

    name = None
    has_shape = False
    shape_constraint = "unused"   # "positive" | "any" | "unused"
    shape_transform = None        # optimizer scale: "log" | "identity" | None
    default_shape = 0.0
    start_grid = ()

    def check_shape(self, lam):
        """Validate a shape-parameter value for this family."""
        if not self.has_shape:
            return
        if not np.isfinite(lam):
            raise DomainError(f"{self.name}: shape parameter must be finite")
        if self.shape_constraint == "positive" and lam <= 0.0:
            raise DomainError(f"{self.name}: shape parameter must be > 0")

    def eta_admissible(self, eta, lam):
        """True when every predictor value is inside the link's domain."""
        return bool(np.all(np.isfinite(eta)))

    def link(self, mu, lam=None):
        raise NotImplementedError

    def inverse(self, eta, lam=None):
        raise NotImplementedError

    def deriv(self, mu, lam=None):
        raise NotImplementedError

    def inverse_deriv(self, eta, lam=None):
        raise NotImplementedError

    def shape_deriv(self, eta, lam=None):
        """dmu/dlam; zero for families without a shape parameter."""
        eta = np.asarray(eta, dtype=float)
        return 0.0 if eta.ndim == 0 else np.zeros_like(eta)


class AsymmetricArandaOrdaz(LinkFamily):
    """One-parameter asymmetric family; logit at lam=1, cloglog as lam -> 0.

    The shape parameter is restricted to lam > 0, which keeps the inverse
    defined for every real predictor value.
    """

    name = "ao-asymmetric"
    has_shape = True
    shape_constraint = "positive"
    shape_transform = "log"
    default_shape = 1.0
    start_grid = (0.25, 0.5, 1.0, 2.0, 5.0)

    def link(self, mu, lam):
        self.check_shape(lam)
        mu = _check_unit_interval(mu)
        scalar = mu.ndim == 0
        t = -np.log1p(-mu)          # -log(1-mu) > 0
        lt = lam * t
        # log((exp(lt) - 1)/lam) evaluated without overflow
        eta = lt + np.log(-np.expm1(-lt)) - np.log(lam)
        return _ret(eta, scalar)

    def _parts(self, eta, lam):
        # u = log(1 + lam*exp(eta)) and u/lam, stable over the whole range
        # of lam*exp(eta) including values near float underflow
        s = np.log(lam) + eta
        u = np.logaddexp(0.0, s)
        small = s < -30.0
        if np.any(small):
            with np.errstate(over="ignore", invalid="ignore"):
                # u ~= exp(s): divide symbolically to avoid 0/lam underflow
                v = np.exp(np.where(small, s, -np.inf))
                u_over_lam = np.where(small, np.exp(eta) * (1.0 - 0.5 * v),
                                      u / lam)
        else:
            u_over_lam = u / lam
        return u, u_over_lam

    def inverse(self, eta, lam):
        self.check_shape(lam)
        eta = np.asarray(eta, dtype=float)
        scalar = eta.ndim == 0
        _, u_over_lam = self._parts(eta, lam)
        mu = -np.expm1(-u_over_lam)
        mu = np.clip(mu, EPS, 1.0 - EPS)
        return _ret(mu, scalar)

    def deriv(self, mu, lam):
        self.check_shape(lam)
        mu = _check_unit_interval(mu)
        scalar = mu.ndim == 0
        t = -np.log1p(-mu)
        out = lam * np.exp(t) / (-np.expm1(-lam * t))
        return _ret(out, scalar)

    def inverse_deriv(self, eta, lam):
        self.check_shape(lam)
        eta = np.asarray(eta, dtype=float)
        scalar = eta.ndim == 0
        u, u_over_lam = self._parts(eta, lam)
        out = np.exp(eta - u - u_over_lam)
        return _ret(out, scalar)

    def shape_deriv(self, eta, lam):
        self.check_shape(lam)
        eta = np.asarray(eta, dtype=float)
        scalar = eta.ndim == 0
        u, u_over_lam = self._parts(eta, lam)
        with np.errstate(over="ignore", invalid="ignore"):
            v = lam * np.exp(eta)
            small = v < 1e-5
            # (1/lam) [ exp(eta-u) - u/lam ] (1+lam*exp(eta))^{-1/lam}
            general = (np.exp(eta - u) - u_over_lam) / lam * np.exp(-u_over_lam)
            # leading expansion in v; the exact form cancels catastrophically
            series = (2.0 * v / 3.0 - 0.5) * np.exp(2.0 * eta - u_over_lam)
            out = np.where(small, series, general)
        return _ret(out, scalar)


class SymmetricArandaOrdaz(LinkFamily):
    """One-parameter symmetric family; even in lam, logit as lam -> 0.

    The inverse is only defined while |lam*eta/2| < 1, so the predictor
    range is bounded for lam != 0.  Values of |lam| below SYM_LAMBDA_MIN
    are evaluated at the logit limit.
    """

    name = "ao-symmetric"
    has_shape = True
    shape_constraint = "any"
    shape_transform = "identity"
    default_shape = 0.5
    start_grid = (0.1, 0.39, 0.67, 1.0)

    def eta_admissible(self, eta, lam):
        if abs(lam) < SYM_LAMBDA_MIN:
            return bool(np.all(np.isfinite(eta)))
        eta = np.asarray(eta, dtype=float)
        return bool(np.all(np.abs(lam * eta / 2.0) < 1.0))

    def link(self, mu, lam):
        self.check_shape(lam)
        mu = _check_unit_interval(mu)
        scalar = mu.ndim == 0
        logit_mu = np.log(mu) - np.log1p(-mu)
        if abs(lam) < SYM_LAMBDA_MIN:
            return _ret(logit_mu, scalar)
        # (2/lam) (mu^lam - (1-mu)^lam)/(mu^lam + (1-mu)^lam)
        eta = 2.0 / lam * np.tanh(0.5 * lam * logit_mu)
        return _ret(eta, scalar)

    def _checked_x(self, eta, lam):
        eta = np.asarray(eta, dtype=float)
        x = 0.5 * lam * eta
        if np.any(np.abs(x) >= 1.0):
            raise DomainError(
                "ao-symmetric: predictor outside link domain (|lam*eta/2| >= 1)")
        return eta, x

    def inverse(self, eta, lam):
        self.check_shape(lam)
        eta = np.asarray(eta, dtype=float)
        scalar = eta.ndim == 0
        if abs(lam) < SYM_LAMBDA_MIN:
            u = eta * (1.0 + (lam * eta) ** 2 / 12.0)
        else:
            eta, x = self._checked_x(eta, lam)
            u = 2.0 / lam * np.arctanh(x)
        mu = np.clip(expit(u), EPS, 1.0 - EPS)
        return _ret(mu, scalar)

    def deriv(self, mu, lam):
        self.check_shape(lam)
        mu = _check_unit_interval(mu)
        scalar = mu.ndim == 0
        if abs(lam) < SYM_LAMBDA_MIN:
            return _ret(1.0 / (mu * (1.0 - mu)), scalar)
        out = 4.0 * (mu * (1.0 - mu)) ** (lam - 1.0) \
            / (mu ** lam + (1.0 - mu) ** lam) ** 2
        return _ret(out, scalar)

    def inverse_deriv(self, eta, lam):
        self.check_shape(lam)
        eta = np.asarray(eta, dtype=float)
        scalar = eta.ndim == 0
        mu = self.inverse(eta, lam)
        if abs(lam) < SYM_LAMBDA_MIN:
            return _ret(mu * (1.0 - mu), scalar)
        eta, x = self._checked_x(eta, lam)
        out = mu * (1.0 - mu) / (1.0 - x * x)
        return _ret(out, scalar)

    def shape_deriv(self, eta, lam):
        self.check_shape(lam)
        eta = np.asarray(eta, dtype=float)
        scalar = eta.ndim == 0
        mu = self.inverse(eta, lam)
        if abs(lam) < SYM_LAMBDA_MIN:
            # leading Taylor term; exact form cancels catastrophically here
            out = mu * (1.0 - mu) * lam * eta ** 3 / 6.0
            return _ret(out, scalar)
        eta, x = self._checked_x(eta, lam)
        du_dlam = eta / (lam * (1.0 - x * x)) - 2.0 / lam ** 2 * np.arctanh(x)
        out = mu * (1.0 - mu) * du_dlam
        return _ret(out, scalar)


class Logit(LinkFamily):
    name = "logit"

    def link(self, mu, lam=None):
        mu = _check_unit_interval(mu)
        scalar = mu.ndim == 0
        return _ret(np.log(mu) - np.log1p(-mu), scalar)

    def inverse(self, eta, lam=None):
        eta = np.asarray(eta, dtype=float)
        scalar = eta.ndim == 0
        return _ret(np.clip(expit(eta), EPS, 1.0 - EPS), scalar)

    def deriv(self, mu, lam=None):
        mu = _check_unit_interval(mu)
        scalar = mu.ndim == 0
        return _ret(1.0 / (mu * (1.0 - mu)), scalar)

    def inverse_deriv(self, eta, lam=None):
        eta = np.asarray(eta, dtype=float)
        scalar = eta.ndim == 0
        mu = expit(eta)
        return _ret(mu * (1.0 - mu), scalar)


class Cloglog(LinkFamily):
    name = "cloglog"

    def link(self, mu, lam=None):
        mu = _check_unit_interval(mu)
        scalar = mu.ndim == 0
        return _ret(np.log(-np.log1p(-mu)), scalar)

    def inverse(self, eta, lam=None):
        eta = np.asarray(eta, dtype=float)
        scalar = eta.ndim == 0
        mu = -np.expm1(-np.exp(eta))
        return _ret(np.clip(mu, EPS, 1.0 - EPS), scalar)

    def deriv(self, mu, lam=None):
        mu = _check_unit_interval(mu)
        scalar = mu.ndim == 0
        return _ret(-1.0 / ((1.0 - mu) * np.log1p(-mu)), scalar)

    def inverse_deriv(self, eta, lam=None):
        eta = np.asarray(eta, dtype=float)
        scalar = eta.ndim == 0
        return _ret(np.exp(eta - np.exp(eta)), scalar)


class Probit(LinkFamily):
    name = "probit"

    _NORM_C = 1.0 / np.sqrt(2.0 * np.pi)

    def link(self, mu, lam=None):
        mu = _check_unit_interval(mu)
        scalar = mu.ndim == 0
        return _ret(ndtri(mu), scalar)

    def inverse(self, eta, lam=None):
        eta = np.asarray(eta, dtype=float)
        scalar = eta.ndim == 0
        return _ret(np.clip(ndtr(eta), EPS, 1.0 - EPS), scalar)

    def deriv(self, mu, lam=None):
        mu = _check_unit_interval(mu)
        scalar = mu.ndim == 0
        z = ndtri(mu)
        return _ret(1.0 / (self._NORM_C * np.exp(-0.5 * z * z)), scalar)

    def inverse_deriv(self, eta, lam=None):
        eta = np.asarray(eta, dtype=float)
        scalar = eta.ndim == 0
        return _ret(self._NORM_C * np.exp(-0.5 * eta * eta), scalar)


_FAMILIES = {
    f.name: f
    for f in (AsymmetricArandaOrdaz(), SymmetricArandaOrdaz(),
              Logit(), Cloglog(), Probit())
}

FAMILY_NAMES = tuple(_FAMILIES)


def get_family(name):
    """Look up a link family by its configuration string."""
    try:
        return _FAMILIES[name]
    except KeyError:
        raise DomainError(
            f"unknown link family {name!r}; expected one of {FAMILY_NAMES}"
        ) from None
