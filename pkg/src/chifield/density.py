"""Joint densities of the chi-square, Weibull and log-Gaussian fields.

All evaluation is in log space.  Pair densities accept vectors, so a
composite likelihood over many pairs is a single call.  Zero or
negative observations are rejected everywhere: the margins place no
mass at zero, so a data set containing exact zeros (e.g. calm spells in
wind records) must be shifted by a small positive offset at load time —
the data loading layer exposes a ``zero_offset`` option for exactly
this purpose.

The ordered-chain density exploits that with an exponential parent
correlation on the line the field is Markov: the joint density of ``n``
ordered sites needs only the ``n - 1`` nearest-neighbour correlations.
Its closed form is implemented directly (not as a product of
conditionals), which makes the pair-times-conditional factorization a
genuine cross-check carried out in the tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special as sp

from .correlation import Exponential
from .exceptions import DomainError
from .process import Site, WeibullFieldModel, mean_function
from .specialfn import log_bessel_i

__all__ = [
    "PairObservation",
    "kibble_log_density",
    "weibull_pair_log_density",
    "weibull_pair_log_density_arrays",
    "chi2_chain_log_density",
    "markov_chain_log_density",
    "loggaussian_pair_log_density",
    "loggaussian_pair_log_density_arrays",
    "WeibullMarginal",
    "weibull_marginal",
]


@dataclass(frozen=True)
class PairObservation:
    """Two positive observations, their means, and the parent correlation
    linking their sites."""

    value_i: float
    value_j: float
    rho: float
    mu_i: float = 1.0
    mu_j: float = 1.0

    def __post_init__(self) -> None:
        for name in ("value_i", "value_j"):
            v = float(getattr(self, name))
            if not (v > 0.0) or math.isinf(v):
                raise DomainError(
                    f"{name} must be positive and finite, got {v}; zero "
                    "observations need a positive offset applied at load time"
                )
            object.__setattr__(self, name, v)
        for name in ("mu_i", "mu_j"):
            v = float(getattr(self, name))
            if not (v > 0.0) or math.isinf(v):
                raise DomainError(f"{name} must be positive and finite, got {v}")
            object.__setattr__(self, name, v)
        r = float(self.rho)
        if not (-1.0 < r < 1.0):
            raise DomainError(f"rho must lie in (-1, 1), got {r}")
        object.__setattr__(self, "rho", r)


def _check_positive_values(x: np.ndarray, what: str) -> None:
    if np.any(~(x > 0.0)) or np.any(np.isinf(x)):
        raise DomainError(
            f"{what} must be positive and finite; zero observations need "
            "a positive offset applied at load time"
        )


def kibble_log_density(x1, x2, rho: float, m: int):
    """Log density of the bivariate scaled chi-square pair.

    Parameters
    ----------
    x1, x2 : float or ndarray
        Positive observations of the m-copy field at two sites.
    rho : float
        Parent Gaussian correlation between the sites, |rho| < 1.  The
        density depends on it only through ``rho**2``; at ``rho == 0``
        it factorizes exactly into the two Gamma(m/2, m/2) margins and
        that branch is taken explicitly (the general expression is a
        0 * inf limit there).
    m : int
        Number of summed squared copies, a positive integer.
    """
    if not isinstance(m, (int, np.integer)) or isinstance(m, bool) or m < 1:
        raise DomainError(f"m must be a positive integer, got {m!r}")
    rho = float(rho)
    if not (-1.0 < rho < 1.0):
        raise DomainError(f"rho must lie in (-1, 1), got {rho}")
    x1a = np.asarray(x1, dtype=float)
    x2a = np.asarray(x2, dtype=float)
    _check_positive_values(x1a, "x1")
    _check_positive_values(x2a, "x2")

    half = 0.5 * m
    if rho == 0.0:
        out = (
            2.0 * (half * math.log(half) - sp.gammaln(half))
            + (half - 1.0) * (np.log(x1a) + np.log(x2a))
            - half * (x1a + x2a)
        )
    else:
        r2 = rho * rho
        om = 1.0 - r2
        lx = np.log(x1a) + np.log(x2a)
        z = m * abs(rho) * np.sqrt(x1a * x2a) / om
        out = (
            m * (math.log(m) - math.log(2.0))
            - sp.gammaln(half)
            - half * math.log(om)
            + (half - 1.0) * lx
            + (1.0 - half)
            * (math.log(m * abs(rho) / (2.0 * om)) + 0.5 * lx)
            - half * (x1a + x2a) / om
            + log_bessel_i(half - 1.0, z)
        )
    if np.ndim(x1) == 0 and np.ndim(x2) == 0:
        return float(out)
    return out


def weibull_pair_log_density_arrays(y1, y2, mu1, mu2, rho, kappa: float):
    """Vectorized log pair density of the Weibull field.

    ``rho`` may be a scalar or an array aligned with the observations;
    entries with ``rho == 0`` use the exact independent factorization.
    """
    if not (kappa > 0.0):
        raise DomainError(f"kappa must be > 0, got {kappa}")
    y1a = np.asarray(y1, dtype=float)
    y2a = np.asarray(y2, dtype=float)
    _check_positive_values(y1a, "y1")
    _check_positive_values(y2a, "y2")
    mu1a = np.asarray(mu1, dtype=float)
    mu2a = np.asarray(mu2, dtype=float)
    if np.any(~(mu1a > 0.0)) or np.any(~(mu2a > 0.0)):
        raise DomainError("means must be positive")
    rhoa = np.asarray(rho, dtype=float)
    if np.any(np.abs(rhoa) >= 1.0):
        raise DomainError("rho must lie in (-1, 1)")

    log_nu = -float(sp.gammaln(1.0 + 1.0 / kappa))
    lw1 = np.log(y1a) - np.log(mu1a)
    lw2 = np.log(y2a) - np.log(mu2a)
    # (w/nu)^kappa for each margin, in log space first for stability
    t1 = np.exp(kappa * (lw1 - log_nu))
    t2 = np.exp(kappa * (lw2 - log_nu))

    r2 = rhoa * rhoa
    om = 1.0 - r2
    with np.errstate(divide="ignore", invalid="ignore"):
        z = 2.0 * np.abs(rhoa) * np.sqrt(t1 * t2) / om
        dep = -np.log(om) - (t1 + t2) / om + log_bessel_i(0.0, np.where(om > 0, z, 1.0))
    indep = -(t1 + t2)
    core = np.where(r2 == 0.0, indep, dep)
    out = (
        2.0 * math.log(kappa)
        + (kappa - 1.0) * (lw1 + lw2)
        - 2.0 * kappa * log_nu
        + core
        - np.log(mu1a)
        - np.log(mu2a)
    )
    if all(np.ndim(v) == 0 for v in (y1, y2, mu1, mu2, rho)):
        return float(out)
    return out


def weibull_pair_log_density(obs: PairObservation, kappa: float) -> float:
    """Log pair density of the Weibull field for one observation pair."""
    return weibull_pair_log_density_arrays(
        obs.value_i, obs.value_j, obs.mu_i, obs.mu_j, obs.rho, kappa
    )


def chi2_chain_log_density(x, positions, phi: float, m: int) -> float:
    """Log joint density of the m-copy field at ordered sites on the line.

    With exponential parent correlation the field is Markov, so only
    nearest-neighbour correlations ``rho_i = exp(-(s_{i+1} - s_i)/phi)``
    enter.  Interior sites couple to both neighbours through the
    combined exponent coefficient ``(1 - rho_{i-1}^2 rho_i^2) /
    ((1 - rho_{i-1}^2)(1 - rho_i^2))``.
    """
    if not (phi > 0.0):
        raise DomainError(f"phi must be > 0, got {phi}")
    if not isinstance(m, (int, np.integer)) or isinstance(m, bool) or m < 1:
        raise DomainError(f"m must be a positive integer, got {m!r}")
    xa = np.asarray(x, dtype=float)
    pos = np.asarray(positions, dtype=float)
    if xa.ndim != 1 or pos.shape != xa.shape:
        raise DomainError("x and positions must be 1-D arrays of equal length")
    _check_positive_values(xa, "x")
    n = xa.size
    if n == 0:
        raise DomainError("at least one site is required")
    gaps = np.diff(pos)
    if np.any(gaps <= 0.0):
        raise DomainError("positions must be strictly increasing")

    half = 0.5 * m
    a = half - 1.0
    if n == 1:
        return float(
            half * math.log(half) - sp.gammaln(half) + a * math.log(xa[0]) - half * xa[0]
        )

    r = np.exp(-gaps / phi)
    r2 = r * r
    om = 1.0 - r2

    logf = (
        (half - 1.0 + n) * math.log(m)
        + (-half + 1.0 - n) * math.log(2.0)
        + (0.5 * half - 0.5) * (math.log(xa[0]) + math.log(xa[-1]))
        - sp.gammaln(half)
        - float(np.sum(np.log(om)))
        - half * xa[0] / om[0]
        - half * xa[-1] / om[-1]
    )
    if n > 2:
        mid = xa[1:-1]
        coef = (1.0 - r2[:-1] * r2[1:]) / (om[:-1] * om[1:])
        logf -= float(half * np.sum(coef * mid))

    geo = np.sqrt(xa[:-1] * xa[1:])
    z = m * r * geo / om
    if a == 0.0:
        logf += float(np.sum(log_bessel_i(0.0, z)))
    else:
        # the 1/|rho|^a prefactor and I_a(z ~ rho) combine to a finite
        # limit as rho -> 0; take it explicitly if rho underflowed
        live = r > 0.0
        if np.any(live):
            logf += float(
                np.sum(-a * np.log(r[live]) + log_bessel_i(a, z[live]))
            )
        if np.any(~live):
            dead = ~live
            logf += float(
                np.sum(
                    a * np.log(m * geo[dead] / (2.0 * om[dead]))
                    - sp.gammaln(a + 1.0)
                )
            )
    return float(logf)


def markov_chain_log_density(
    values, sites: Sequence[Site], model: WeibullFieldModel
) -> float:
    """Log joint density of the Weibull field at ordered 1-D sites.

    Requires an exponential correlation model (the Markov closed form
    is specific to it) and strictly increasing scalar site coordinates.
    """
    if not isinstance(model.corr, Exponential):
        raise DomainError(
            "markov_chain_log_density requires an Exponential correlation model"
        )
    ya = np.asarray(values, dtype=float)
    if ya.ndim != 1 or len(sites) != ya.size:
        raise DomainError("values and sites must have equal length")
    _check_positive_values(ya, "values")
    if any(len(s.coords) != 1 for s in sites):
        raise DomainError("chain sites must have scalar coordinates")
    pos = np.asarray([s.coords[0] for s in sites], dtype=float)

    mu = np.asarray([mean_function(model.beta, s) for s in sites])
    kappa = model.kappa
    nu = model.nu
    x = (ya / (nu * mu)) ** kappa
    chain = chi2_chain_log_density(x, pos, model.corr.phi, 2)
    jac = float(np.sum(math.log(kappa) + np.log(x) - np.log(ya)))
    return chain + jac


def loggaussian_pair_log_density_arrays(y1, y2, mu1, mu2, rho, sigma2: float):
    """Vectorized log pair density of the unit-mean log-Gaussian field.

    On the log scale the pair is bivariate normal with common variance
    ``sigma2``, correlation ``rho`` and means ``log mu - sigma2/2``.
    """
    if not (sigma2 > 0.0):
        raise DomainError(f"sigma2 must be > 0, got {sigma2}")
    y1a = np.asarray(y1, dtype=float)
    y2a = np.asarray(y2, dtype=float)
    _check_positive_values(y1a, "y1")
    _check_positive_values(y2a, "y2")
    mu1a = np.asarray(mu1, dtype=float)
    mu2a = np.asarray(mu2, dtype=float)
    if np.any(~(mu1a > 0.0)) or np.any(~(mu2a > 0.0)):
        raise DomainError("means must be positive")
    rhoa = np.asarray(rho, dtype=float)
    if np.any(np.abs(rhoa) >= 1.0):
        raise DomainError("rho must lie in (-1, 1)")

    sigma = math.sqrt(sigma2)
    z1 = (np.log(y1a) - (np.log(mu1a) - 0.5 * sigma2)) / sigma
    z2 = (np.log(y2a) - (np.log(mu2a) - 0.5 * sigma2)) / sigma
    om = 1.0 - rhoa * rhoa
    quad = (z1 * z1 - 2.0 * rhoa * z1 * z2 + z2 * z2) / om
    out = (
        -math.log(2.0 * math.pi)
        - math.log(sigma2)
        - 0.5 * np.log(om)
        - 0.5 * quad
        - np.log(y1a)
        - np.log(y2a)
    )
    if all(np.ndim(v) == 0 for v in (y1, y2, mu1, mu2, rho)):
        return float(out)
    return out


def loggaussian_pair_log_density(obs: PairObservation, sigma2: float) -> float:
    """Log pair density of the log-Gaussian field for one observation pair."""
    return loggaussian_pair_log_density_arrays(
        obs.value_i, obs.value_j, obs.mu_i, obs.mu_j, obs.rho, sigma2
    )


@dataclass(frozen=True)
class WeibullMarginal:
    """Weibull distribution with shape ``kappa`` and scale ``scale``."""

    kappa: float
    scale: float

    def __post_init__(self) -> None:
        if not (self.kappa > 0.0):
            raise DomainError(f"kappa must be > 0, got {self.kappa}")
        if not (self.scale > 0.0):
            raise DomainError(f"scale must be > 0, got {self.scale}")

    def pdf(self, y):
        ya = np.asarray(y, dtype=float)
        if np.any(ya < 0.0):
            raise DomainError("pdf argument must be >= 0")
        t = ya / self.scale
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            out = (
                (self.kappa / self.scale)
                * t ** (self.kappa - 1.0)
                * np.exp(-(t**self.kappa))
            )
        out = np.where(np.isnan(out), np.inf, out)
        return float(out) if np.ndim(y) == 0 else out

    def cdf(self, y):
        ya = np.asarray(y, dtype=float)
        if np.any(ya < 0.0):
            raise DomainError("cdf argument must be >= 0")
        out = -np.expm1(-((ya / self.scale) ** self.kappa))
        return float(out) if np.ndim(y) == 0 else out

    def quantile(self, p):
        pa = np.asarray(p, dtype=float)
        if np.any(pa < 0.0) or np.any(pa >= 1.0):
            raise DomainError("quantile argument must lie in [0, 1)")
        out = self.scale * (-np.log1p(-pa)) ** (1.0 / self.kappa)
        return float(out) if np.ndim(p) == 0 else out


def weibull_marginal(kappa: float, scale: float) -> WeibullMarginal:
    """Weibull margin accessor used by predictive scoring."""
    return WeibullMarginal(kappa=kappa, scale=scale)
