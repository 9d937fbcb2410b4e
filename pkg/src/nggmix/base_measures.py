"""Base measure of the mixing process: location and scale priors.

The base measure factorizes as P0(d mu, d sigma) = f1(mu | phi) f2(sigma).
The location part f1 is one of three families; for the default normal
family phi = (phi1, phi2) are mean and *precision*, and a hyperprior
N(phi1 | psi1, psi2) ga(phi2 | psi3, psi4) (again mean/precision for the
normal factor, shape/rate for the gamma factor) admits conjugate updates
against the distinct atom locations.  The scale part f2 doubles as the
prior on the common scale in the semiparametric model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

__all__ = [
    "ScalePrior",
    "BaseMeasureSpec",
    "DEFAULT_PSI",
    "scale_prior_logpdf",
    "scale_prior_sample",
    "scale_prior_median",
    "location_logpdf",
    "location_sample",
    "sample_hyperparameters",
]

_SCALE_FAMILIES = (
    "gamma",
    "lognormal",
    "half_cauchy",
    "half_normal",
    "half_student_t",
    "uniform",
    "truncated_normal",
)

_LOCATION_FAMILIES = ("normal", "gamma", "beta")

# Weakly informative defaults for the location hyperprior: phi1 ~ N(0, prec
# 0.01) i.e. sd 10, phi2 ~ ga(1, 1).
DEFAULT_PSI = (0.0, 0.01, 1.0, 1.0)

_PARAM_COUNT = {
    "gamma": 2,
    "lognormal": 2,
    "half_cauchy": 1,
    "half_normal": 1,
    "half_student_t": 2,
    "uniform": 2,
    "truncated_normal": 4,
}


@dataclass(frozen=True)
class ScalePrior:
    """Prior on a positive scale parameter.

    Parameter conventions: gamma(shape, rate); lognormal(meanlog, sdlog);
    half_cauchy(scale); half_normal(scale); half_student_t(df, scale);
    uniform(lo, hi); truncated_normal(loc, scale, lo, hi).  Uniform and
    truncated-normal bounds satisfy 0 <= lo < hi.
    """

    family: str
    params: tuple

    def __post_init__(self) -> None:
        if self.family not in _SCALE_FAMILIES:
            raise ValueError(
                f"unknown scale prior family {self.family!r}; choose from {_SCALE_FAMILIES}"
            )
        params = tuple(float(p) for p in self.params)
        object.__setattr__(self, "params", params)
        if len(params) != _PARAM_COUNT[self.family]:
            raise ValueError(
                f"{self.family} scale prior takes {_PARAM_COUNT[self.family]} parameters"
            )
        if any(not math.isfinite(p) for p in params):
            raise ValueError("scale prior parameters must be finite")
        if self.family == "gamma" and not (params[0] > 0 and params[1] > 0):
            raise ValueError("gamma prior needs positive shape and rate")
        if self.family == "lognormal" and not params[1] > 0:
            raise ValueError("lognormal prior needs positive sdlog")
        if self.family in ("half_cauchy", "half_normal") and not params[0] > 0:
            raise ValueError(f"{self.family} prior needs a positive scale")
        if self.family == "half_student_t" and not (params[0] > 0 and params[1] > 0):
            raise ValueError("half_student_t prior needs positive df and scale")
        if self.family in ("uniform", "truncated_normal"):
            lo, hi = params[-2], params[-1]
            if not (0 <= lo < hi):
                raise ValueError(f"bounds must satisfy 0 <= lo < hi, got [{lo}, {hi}]")
            if self.family == "truncated_normal" and not params[1] > 0:
                raise ValueError("truncated_normal prior needs a positive scale")

    @property
    def support(self) -> tuple[float, float]:
        if self.family in ("uniform", "truncated_normal"):
            return self.params[-2], self.params[-1]
        return 0.0, math.inf


def scale_prior_logpdf(sigma, prior: ScalePrior):
    """Log density of the scale prior; -inf outside its support."""
    x = np.asarray(sigma, dtype=float)
    f = prior.family
    p = prior.params
    with np.errstate(divide="ignore", invalid="ignore"):
        if f == "gamma":
            shape, rate = p
            out = (
                shape * math.log(rate)
                - special.gammaln(shape)
                + (shape - 1.0) * np.log(x)
                - rate * x
            )
            out = np.where(x > 0, out, -np.inf)
        elif f == "lognormal":
            meanlog, sdlog = p
            z = (np.log(np.maximum(x, 1e-320)) - meanlog) / sdlog
            out = -0.5 * z * z - math.log(sdlog) - 0.5 * math.log(2 * math.pi) - np.log(x)
            out = np.where(x > 0, out, -np.inf)
        elif f == "half_cauchy":
            s = p[0]
            out = math.log(2.0 / math.pi) - math.log(s) - np.log1p((x / s) ** 2)
            out = np.where(x >= 0, out, -np.inf)
        elif f == "half_normal":
            s = p[0]
            out = (
                math.log(2.0)
                - 0.5 * math.log(2 * math.pi)
                - math.log(s)
                - 0.5 * (x / s) ** 2
            )
            out = np.where(x >= 0, out, -np.inf)
        elif f == "half_student_t":
            df, s = p
            z = x / s
            out = (
                math.log(2.0)
                + special.gammaln((df + 1) / 2)
                - special.gammaln(df / 2)
                - 0.5 * math.log(df * math.pi)
                - math.log(s)
                - (df + 1) / 2 * np.log1p(z * z / df)
            )
            out = np.where(x >= 0, out, -np.inf)
        elif f == "uniform":
            lo, hi = p
            out = np.where((x >= lo) & (x <= hi), -math.log(hi - lo), -np.inf)
        else:  # truncated_normal
            loc, s, lo, hi = p
            zlo = (lo - loc) / s
            zhi = (hi - loc) / s
            norm = special.ndtr(zhi) - special.ndtr(zlo)
            z = (x - loc) / s
            out = -0.5 * z * z - math.log(s) - 0.5 * math.log(2 * math.pi) - math.log(norm)
            out = np.where((x >= lo) & (x <= hi), out, -np.inf)
    return float(out) if np.ndim(sigma) == 0 else out


def scale_prior_sample(prior: ScalePrior, rng: np.random.Generator, size=None):
    """Draw from the scale prior using only the supplied generator."""
    f = prior.family
    p = prior.params
    if f == "gamma":
        return rng.gamma(p[0], 1.0 / p[1], size=size)
    if f == "lognormal":
        return rng.lognormal(p[0], p[1], size=size)
    if f == "half_cauchy":
        return p[0] * np.abs(rng.standard_cauchy(size=size))
    if f == "half_normal":
        return p[0] * np.abs(rng.standard_normal(size=size))
    if f == "half_student_t":
        return p[1] * np.abs(rng.standard_t(p[0], size=size))
    if f == "uniform":
        return rng.uniform(p[0], p[1], size=size)
    # truncated_normal by inverse-cdf, exact and generator-deterministic
    loc, s, lo, hi = p
    a = special.ndtr((lo - loc) / s)
    b = special.ndtr((hi - loc) / s)
    quantile = a + rng.uniform(size=size) * (b - a)
    return loc + s * special.ndtri(quantile)


def scale_prior_median(prior: ScalePrior) -> float:
    """Median of the scale prior, used for initialization."""
    f = prior.family
    p = prior.params
    if f == "gamma":
        return float(special.gammaincinv(p[0], 0.5) / p[1])
    if f == "lognormal":
        return math.exp(p[0])
    if f == "half_cauchy":
        return p[0]  # tan(pi/4) = 1
    if f == "half_normal":
        return float(p[0] * special.ndtri(0.75))
    if f == "half_student_t":
        from scipy import stats

        return float(p[1] * stats.t.ppf(0.75, p[0]))
    if f == "uniform":
        return 0.5 * (p[0] + p[1])
    loc, s, lo, hi = p
    a = special.ndtr((lo - loc) / s)
    b = special.ndtr((hi - loc) / s)
    return float(loc + s * special.ndtri(0.5 * (a + b)))


@dataclass(frozen=True)
class BaseMeasureSpec:
    """Location family with hyperparameters plus a scale prior.

    location_params holds the current phi = (phi1, phi2): mean/precision
    for the normal family, shape/rate for gamma, shapes for beta.  When
    ``hyper_psi`` is set (normal location family only) phi is resampled by
    conjugate conditional draws each sweep; otherwise phi stays fixed.
    """

    location_family: str = "normal"
    location_params: tuple = (0.0, 1.0)
    scale_prior: ScalePrior = ScalePrior("gamma", (2.0, 2.0))
    hyper_psi: tuple | None = DEFAULT_PSI

    def __post_init__(self) -> None:
        if self.location_family not in _LOCATION_FAMILIES:
            raise ValueError(
                f"unknown location family {self.location_family!r}; "
                f"choose from {_LOCATION_FAMILIES}"
            )
        params = tuple(float(p) for p in self.location_params)
        object.__setattr__(self, "location_params", params)
        if len(params) != 2 or any(not math.isfinite(p) for p in params):
            raise ValueError("location_params must be two finite numbers")
        if self.location_family == "normal":
            if not params[1] > 0:
                raise ValueError("normal location family needs positive precision")
        elif not (params[0] > 0 and params[1] > 0):
            raise ValueError(f"{self.location_family} location parameters must be positive")
        if self.hyper_psi is not None:
            if self.location_family != "normal":
                raise ValueError(
                    "hyperparameter updating is only available for the normal "
                    "location family"
                )
            psi = tuple(float(p) for p in self.hyper_psi)
            object.__setattr__(self, "hyper_psi", psi)
            if len(psi) != 4 or any(not math.isfinite(p) for p in psi):
                raise ValueError("hyper_psi must be four finite numbers")
            if not (psi[1] > 0 and psi[2] > 0 and psi[3] > 0):
                raise ValueError("hyper_psi needs psi2, psi3, psi4 > 0")

    @property
    def location_support(self) -> tuple[float, float]:
        if self.location_family == "normal":
            return (-math.inf, math.inf)
        if self.location_family == "gamma":
            return (0.0, math.inf)
        return (0.0, 1.0)


def location_logpdf(mu, spec: BaseMeasureSpec, phi: tuple) -> np.ndarray:
    """Log density of the location base measure f1(mu | phi)."""
    x = np.asarray(mu, dtype=float)
    f = spec.location_family
    with np.errstate(divide="ignore", invalid="ignore"):
        if f == "normal":
            mean, prec = phi
            out = 0.5 * np.log(prec) - 0.5 * math.log(2 * math.pi) - 0.5 * prec * (x - mean) ** 2
        elif f == "gamma":
            shape, rate = phi
            out = (
                shape * math.log(rate)
                - special.gammaln(shape)
                + (shape - 1.0) * np.log(x)
                - rate * x
            )
            out = np.where(x > 0, out, -np.inf)
        else:  # beta
            a, b = phi
            out = (
                (a - 1.0) * np.log(x)
                + (b - 1.0) * np.log1p(-x)
                - special.betaln(a, b)
            )
            out = np.where((x > 0) & (x < 1), out, -np.inf)
    return float(out) if np.ndim(mu) == 0 else out


def location_sample(
    spec: BaseMeasureSpec, phi: tuple, rng: np.random.Generator, size=None
):
    """Draw locations from f1(. | phi)."""
    f = spec.location_family
    if f == "normal":
        mean, prec = phi
        return mean + rng.standard_normal(size=size) / math.sqrt(prec)
    if f == "gamma":
        shape, rate = phi
        return rng.gamma(shape, 1.0 / rate, size=size)
    a, b = phi
    return rng.beta(a, b, size=size)


def sample_hyperparameters(
    locations: np.ndarray,
    phi: tuple,
    psi: tuple,
    rng: np.random.Generator,
) -> tuple[float, float]:
    """One conjugate sweep over phi = (mean, precision) of the normal base.

    Given distinct locations mu*_1..mu*_R and independent priors
    N(phi1 | psi1, psi2) and ga(phi2 | psi3, psi4), both full conditionals
    are available in closed form: phi1 | phi2 is normal with precision
    psi2 + R phi2, phi2 | phi1 is gamma with shape psi3 + R/2 and rate
    psi4 + sum (mu*_j - phi1)^2 / 2.
    """
    mu = np.asarray(locations, dtype=float)
    r = mu.size
    psi1, psi2, psi3, psi4 = psi
    _, phi2 = phi
    prec = psi2 + r * phi2
    mean = (psi2 * psi1 + phi2 * mu.sum()) / prec
    phi1_new = mean + rng.standard_normal() / math.sqrt(prec)
    shape = psi3 + 0.5 * r
    rate = psi4 + 0.5 * float(np.sum((mu - phi1_new) ** 2))
    phi2_new = rng.gamma(shape, 1.0 / rate)
    return float(phi1_new), float(phi2_new)
