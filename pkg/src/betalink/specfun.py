"""Scalar special functions used throughout the likelihood machinery.

Thin validating wrappers around scipy.special.  Every function accepts
scalars or arrays and enforces the documented domain instead of silently
returning nan.
"""

import numpy as np
import scipy.special as sp

from .errors import DomainError

__all__ = [
    "log_gamma",
    "digamma",
    "trigamma",
    "std_normal_quantile",
    "std_normal_cdf",
    "chi2_sf",
]


def _require_positive(u, name):
    u = np.asarray(u, dtype=float)
    if np.any(~(u > 0.0)):
        raise DomainError(f"{name} requires a strictly positive argument")
    return u


def log_gamma(u):
    """log of the gamma function for u > 0."""
    u = _require_positive(u, "log_gamma")
    return sp.gammaln(u) if u.ndim else float(sp.gammaln(u))


def digamma(u):
    """First logarithmic derivative of the gamma function, u > 0."""
    u = _require_positive(u, "digamma")
    return sp.psi(u) if u.ndim else float(sp.psi(u))


def trigamma(u):
    """Second logarithmic derivative of the gamma function, u > 0."""
    u = _require_positive(u, "trigamma")
    out = sp.polygamma(1, u)
    return out if u.ndim else float(out)


def std_normal_quantile(p):
    """Quantile function of the standard normal distribution, 0 < p < 1."""
    p = np.asarray(p, dtype=float)
    if np.any(~((p > 0.0) & (p < 1.0))):
        raise DomainError("std_normal_quantile requires p in (0, 1)")
    return sp.ndtri(p) if p.ndim else float(sp.ndtri(p))


def std_normal_cdf(x):
    """Standard normal distribution function."""
    x = np.asarray(x, dtype=float)
    return sp.ndtr(x) if x.ndim else float(sp.ndtr(x))


def chi2_sf(x, dof):
    """Upper tail probability of the chi-squared distribution."""
    x = np.asarray(x, dtype=float)
    if dof <= 0:
        raise DomainError("chi2_sf requires dof > 0")
    out = sp.chdtrc(dof, np.maximum(x, 0.0))
    return out if x.ndim else float(out)
