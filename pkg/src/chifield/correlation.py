"""Correlation models and the correlation structure they induce.

Three parametric families are provided: exponential and Matern models
for purely spatial problems, and a nonseparable space-time model that
couples a power-law spatial profile with a compactly supported temporal
profile through an interaction parameter.

The same parent correlation ``rho`` drives three related scales:

* the Gaussian copies themselves (``corr``),
* the scaled chi-square process built from them, whose correlation is
  ``rho**2`` (``chi2_corr``),
* the unit-mean Weibull transform of the two-copy process, whose
  correlation follows from its cross moments and involves a Gauss
  hypergeometric factor (``weibull_corr``).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence, Union

import numpy as np
from scipy import special as sp
from scipy.linalg import lapack

from .exceptions import DomainError, NotPositiveDefiniteError
from .specialfn import (
    GAUSS_ENDPOINT_MARGIN,
    bessel_k,
    gauss_2f1_at_one,
    hypergeom_pfq,
)

if TYPE_CHECKING:  # pragma: no cover
    from .process import Site

__all__ = [
    "Exponential",
    "Matern",
    "SpaceTimeGW",
    "CorrelationModel",
    "Lag",
    "corr",
    "corr_array",
    "chi2_corr",
    "weibull_corr",
    "weibull_nu",
    "weibull_sigma2",
    "copula_density_normal_scale",
    "pairwise_lags",
    "corr_matrix",
    "EARTH_RADIUS_KM",
]

EARTH_RADIUS_KM = 6371.0088

# fixed shape exponents of the space-time family
_SPATIAL_EXPONENT = 2.5
_TEMPORAL_EXPONENT = 3.5


@dataclass(frozen=True)
class Exponential:
    """Exponential spatial correlation exp(-d/phi); phi > 0."""

    phi: float

    def __post_init__(self) -> None:
        if not (self.phi > 0.0):
            raise DomainError(f"Exponential requires phi > 0, got {self.phi}")


@dataclass(frozen=True)
class Matern:
    """Matern spatial correlation with range phi > 0 and smoothness nu_m > 0."""

    phi: float
    nu_m: float

    def __post_init__(self) -> None:
        if not (self.phi > 0.0):
            raise DomainError(f"Matern requires phi > 0, got {self.phi}")
        if not (self.nu_m > 0.0):
            raise DomainError(f"Matern requires nu_m > 0, got {self.nu_m}")


@dataclass(frozen=True)
class SpaceTimeGW:
    """Nonseparable space-time correlation.

    ``rho(d, u) = (1 + d/phi_s)**-2.5
    * max(0, 1 - (u/phi_t) * (1 + d/phi_s)**phi_st)**3.5``

    ``phi_st`` in [0, 1] controls space-time interaction; at 0 the model
    is separable.  The shape exponents are fixed: the spatial profile
    stays positive definite in any dimension and the temporal profile is
    a valid compactly supported correlation on the line.
    """

    phi_s: float
    phi_t: float
    phi_st: float = 0.0

    def __post_init__(self) -> None:
        if not (self.phi_s > 0.0):
            raise DomainError(f"SpaceTimeGW requires phi_s > 0, got {self.phi_s}")
        if not (self.phi_t > 0.0):
            raise DomainError(f"SpaceTimeGW requires phi_t > 0, got {self.phi_t}")
        if not (0.0 <= self.phi_st <= 1.0):
            raise DomainError(
                f"SpaceTimeGW requires phi_st in [0, 1], got {self.phi_st}"
            )


CorrelationModel = Union[Exponential, Matern, SpaceTimeGW]


@dataclass(frozen=True)
class Lag:
    """Separation between two observation points."""

    spatial_distance: float
    temporal_distance: float = 0.0

    def __post_init__(self) -> None:
        if not (self.spatial_distance >= 0.0) or math.isinf(self.spatial_distance):
            raise DomainError(
                f"spatial_distance must be finite and >= 0, got {self.spatial_distance}"
            )
        if not (self.temporal_distance >= 0.0) or math.isinf(self.temporal_distance):
            raise DomainError(
                f"temporal_distance must be finite and >= 0, got {self.temporal_distance}"
            )


def corr_array(model: CorrelationModel, spatial, temporal=None) -> np.ndarray:
    """Parent Gaussian correlation for arrays of lags.

    Spatial-only families (Exponential, Matern) ignore the temporal
    component; the space-time family requires it (defaults to zero).
    """
    d = np.asarray(spatial, dtype=float)
    if np.any(d < 0.0):
        raise DomainError("spatial lags must be >= 0")
    if isinstance(model, Exponential):
        return np.exp(-d / model.phi)
    if isinstance(model, Matern):
        nu = model.nu_m
        s = d / model.phi
        out = np.ones_like(s)
        pos = s > 0.0
        if np.any(pos):
            sp_pos = s[pos]
            out[pos] = (
                math.exp((1.0 - nu) * math.log(2.0) - sp.gammaln(nu))
                * sp_pos**nu
                * bessel_k(nu, sp_pos)
            )
        return out
    if isinstance(model, SpaceTimeGW):
        u = np.zeros_like(d) if temporal is None else np.asarray(temporal, dtype=float)
        if np.any(u < 0.0):
            raise DomainError("temporal lags must be >= 0")
        spatial_part = (1.0 + d / model.phi_s) ** (-_SPATIAL_EXPONENT)
        stretch = (1.0 + d / model.phi_s) ** model.phi_st
        base = 1.0 - (u / model.phi_t) * stretch
        temporal_part = np.where(base > 0.0, base, 0.0) ** _TEMPORAL_EXPONENT
        return spatial_part * temporal_part
    raise DomainError(f"unknown correlation model: {model!r}")


def corr(model: CorrelationModel, lag: Lag) -> float:
    """Parent Gaussian correlation at a single lag; equals 1 at lag zero."""
    return float(
        corr_array(
            model,
            np.asarray(lag.spatial_distance),
            np.asarray(lag.temporal_distance),
        )
    )


def chi2_corr(model: CorrelationModel, lag: Lag) -> float:
    """Correlation of the scaled chi-square process: the squared parent
    correlation, independent of the number of copies."""
    r = corr(model, lag)
    return r * r


def weibull_nu(kappa: float) -> float:
    """Scale 1/Gamma(1 + 1/kappa) that gives the Weibull transform unit mean."""
    if not (kappa > 0.0):
        raise DomainError(f"kappa must be > 0, got {kappa}")
    return float(math.exp(-sp.gammaln(1.0 + 1.0 / kappa)))


def weibull_sigma2(kappa: float) -> float:
    """Variance of the unit-mean Weibull margin,
    Gamma(1 + 2/kappa) / Gamma(1 + 1/kappa)**2 - 1."""
    if not (kappa > 0.0):
        raise DomainError(f"kappa must be > 0, got {kappa}")
    delta = sp.gammaln(1.0 + 2.0 / kappa) - 2.0 * sp.gammaln(1.0 + 1.0 / kappa)
    return float(math.expm1(delta))


def weibull_corr(model: CorrelationModel, lag: Lag, kappa: float) -> float:
    """Correlation of the unit-mean Weibull field at the given lag.

    With ``r`` the parent correlation, equals
    ``(2F1(-1/kappa, -1/kappa; 1; r^2) - 1) / sigma2`` where ``sigma2``
    is the Weibull margin's variance.  Arguments within 1e-8 of the
    series boundary ``r^2 = 1`` are routed to the closed-form endpoint;
    ``r^2 == 1`` returns exactly 1.0 so that coincident points are
    perfectly correlated in floating point as well as in theory.
    """
    if not (kappa > 0.0):
        raise DomainError(f"kappa must be > 0, got {kappa}")
    r = corr(model, lag)
    r2 = r * r
    if r2 == 0.0:
        return 0.0
    if r2 == 1.0:
        return 1.0
    if r2 > 1.0 - GAUSS_ENDPOINT_MARGIN:
        f = gauss_2f1_at_one(-1.0 / kappa, -1.0 / kappa, 1.0)
    else:
        f = hypergeom_pfq([-1.0 / kappa, -1.0 / kappa], [1.0], r2)
    return float((f - 1.0) / weibull_sigma2(kappa))


def copula_density_normal_scale(z_pairs, rho: float, m: int) -> np.ndarray:
    """Density of the scaled chi-square copula mapped to normal margins.

    For each row ``(z1, z2)`` the pair is pushed through the standard
    normal CDF, back through the chi-square margin's quantile function,
    and the joint pair density is reweighted by the ratio of normal to
    chi-square marginal densities.  Deviations of the result from the
    bivariate normal density with correlation ``rho**2`` visualize how
    the dependence differs from Gaussian dependence at matched
    correlation, including its asymmetry between the two tails.

    Grid points whose quantile inversion leaves the representable range
    come back as NaN (counted in a warning) rather than poisoning the
    rest of the grid.
    """
    from .density import kibble_log_density  # deferred: avoids import cycle

    z = np.atleast_2d(np.asarray(z_pairs, dtype=float))
    if z.ndim != 2 or z.shape[1] != 2:
        raise DomainError("z_pairs must have shape (n, 2)")
    if not isinstance(m, (int, np.integer)) or m < 1:
        raise DomainError(f"m must be a positive integer, got {m}")
    if not (-1.0 < rho < 1.0):
        raise DomainError(f"rho must lie in (-1, 1), got {rho}")

    half = 0.5 * m
    u = sp.ndtr(z)
    with np.errstate(over="ignore", invalid="ignore"):
        x = sp.gammaincinv(half, u) / half
    ok = np.isfinite(x).all(axis=1) & (x > 0.0).all(axis=1)

    out = np.full(z.shape[0], np.nan)
    if np.any(ok):
        x1, x2 = x[ok, 0], x[ok, 1]
        z1, z2 = z[ok, 0], z[ok, 1]
        log_marg = (
            half * math.log(half)
            - sp.gammaln(half)
            + (half - 1.0) * np.log(x1)
            - half * x1
            + half * math.log(half)
            - sp.gammaln(half)
            + (half - 1.0) * np.log(x2)
            - half * x2
        )
        log_norm = -0.5 * (z1**2 + z2**2) - math.log(2.0 * math.pi)
        log_c = kibble_log_density(x1, x2, rho, m) - log_marg + log_norm
        out[ok] = np.exp(log_c)
    n_bad = int(np.sum(~ok))
    if n_bad:
        warnings.warn(
            f"quantile inversion failed at {n_bad} grid point(s); returned NaN",
            RuntimeWarning,
            stacklevel=2,
        )
    return out


def _coords_matrix(sites: Sequence["Site"]) -> np.ndarray:
    coords = np.asarray([np.atleast_1d(s.coords) for s in sites], dtype=float)
    if coords.ndim != 2:
        raise DomainError("sites must share a common coordinate dimension")
    return coords


def _distance_matrix(coords: np.ndarray, metric: str) -> np.ndarray:
    if metric == "euclidean":
        diff = coords[:, None, :] - coords[None, :, :]
        return np.sqrt(np.sum(diff * diff, axis=-1))
    if metric == "haversine":
        if coords.shape[1] != 2:
            raise DomainError("haversine metric requires (lon, lat) coordinates")
        lon = np.radians(coords[:, 0])
        lat = np.radians(coords[:, 1])
        dlat = lat[:, None] - lat[None, :]
        dlon = lon[:, None] - lon[None, :]
        h = (
            np.sin(0.5 * dlat) ** 2
            + np.cos(lat)[:, None] * np.cos(lat)[None, :] * np.sin(0.5 * dlon) ** 2
        )
        return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))
    raise DomainError(f"unknown distance metric: {metric!r}")


def pairwise_lags(sites: Sequence["Site"], metric: str = "euclidean"):
    """Full matrices of spatial distances and absolute time lags.

    Sites without a time stamp contribute zero temporal lag.  With
    ``metric='haversine'`` coordinates are interpreted as (lon, lat) in
    degrees and distances are great-circle kilometres.
    """
    coords = _coords_matrix(sites)
    dist = _distance_matrix(coords, metric)
    times = [s.time for s in sites]
    if any(t is not None for t in times):
        t = np.asarray([0.0 if v is None else float(v) for v in times])
        tlag = np.abs(t[:, None] - t[None, :])
    else:
        tlag = np.zeros_like(dist)
    return dist, tlag


def corr_matrix(
    model: CorrelationModel,
    sites: Sequence["Site"],
    metric: str = "euclidean",
    check_pd: bool = True,
) -> np.ndarray:
    """Correlation matrix of the parent Gaussian process over ``sites``.

    Exact duplicates (zero spatial and temporal lag between distinct
    entries) are rejected: they make the matrix singular by
    construction.  With ``check_pd`` the Cholesky factorization is
    attempted and failure raises
    :class:`~chifield.exceptions.NotPositiveDefiniteError` carrying the
    offending pivot; nothing is silently repaired.
    """
    if len(sites) == 0:
        raise DomainError("corr_matrix requires at least one site")
    dist, tlag = pairwise_lags(sites, metric=metric)
    dup = (dist == 0.0) & (tlag == 0.0)
    np.fill_diagonal(dup, False)
    if np.any(dup):
        i, j = np.argwhere(dup)[0]
        raise DomainError(
            f"duplicate sites at indices {int(i)} and {int(j)}: "
            "identical coordinates and time make the correlation matrix singular"
        )
    r = corr_array(model, dist, tlag)
    np.fill_diagonal(r, 1.0)
    r = 0.5 * (r + r.T)
    if check_pd:
        _, info = lapack.dpotrf(r, lower=1)
        if info != 0:
            raise NotPositiveDefiniteError(
                f"correlation matrix is not positive definite "
                f"(leading minor of order {int(info)})",
                pivot=int(info),
            )
    return r
