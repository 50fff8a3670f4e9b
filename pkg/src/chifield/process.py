"""Field models and exact simulation of the processes they describe.

The central object is a positive random field built by summing the
squares of ``m`` independent copies of a standard Gaussian process and
dividing by ``m``.  Its margins are Gamma(m/2, m/2) — unit mean,
variance 2/m — and its correlation is the squared parent correlation.
Raising the two-copy version to a power and rescaling yields a field
with unit-mean Weibull margins; exponentiating a single Gaussian copy
yields the log-Gaussian competitor.  Mean surfaces enter
multiplicatively through a log-linear regression on site covariates.

Simulation is exact: a dense Cholesky factor of the correlation matrix
transforms independent draws.  Each replicate consumes its own child of
the master seed, so any subset of replicates can be reproduced (or
generated concurrently) without drawing the others.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import lapack

from .correlation import CorrelationModel, corr_matrix, weibull_nu
from .exceptions import DomainError, NotPositiveDefiniteError

__all__ = [
    "Site",
    "WeibullFieldModel",
    "LogGaussianFieldModel",
    "mean_function",
    "mean_values",
    "simulate_gaussian",
    "simulate_chi2",
    "simulate_weibull",
    "simulate_loggaussian",
]

SeedLike = Union[int, np.random.SeedSequence]


@dataclass(frozen=True)
class Site:
    """A single observation location.

    ``coords`` are free-form spatial coordinates (1-D positions, planar
    (x, y), or (lon, lat) when a great-circle metric is in use);
    ``time`` is an optional time stamp and ``covariates`` feed the
    log-linear mean.
    """

    coords: Tuple[float, ...]
    time: Optional[float] = None
    covariates: Tuple[float, ...] = ()

    def __post_init__(self) -> None:
        coords = tuple(float(c) for c in np.atleast_1d(self.coords))
        if len(coords) == 0 or not all(math.isfinite(c) for c in coords):
            raise DomainError(f"coords must be finite and non-empty, got {coords}")
        object.__setattr__(self, "coords", coords)
        if self.time is not None:
            t = float(self.time)
            if not math.isfinite(t):
                raise DomainError(f"time must be finite, got {t}")
            object.__setattr__(self, "time", t)
        cov = tuple(float(v) for v in np.atleast_1d(self.covariates)) if len(
            np.atleast_1d(self.covariates)
        ) else ()
        if not all(math.isfinite(v) for v in cov):
            raise DomainError("covariates must be finite")
        object.__setattr__(self, "covariates", cov)


def _check_beta(beta) -> Tuple[float, ...]:
    b = tuple(float(v) for v in np.atleast_1d(beta))
    if len(b) == 0 or not all(math.isfinite(v) for v in b):
        raise DomainError(f"beta must be finite and non-empty, got {beta}")
    return b


@dataclass(frozen=True)
class WeibullFieldModel:
    """Unit-mean Weibull field with a log-linear mean surface.

    The field is ``Y(s) = mu(s) * nu(kappa) * X2(s)**(1/kappa)`` where
    ``X2`` is the two-copy scaled chi-square process driven by ``corr``
    and ``mu(s) = exp(beta . [1, covariates])``.
    """

    kappa: float
    beta: Tuple[float, ...]
    corr: CorrelationModel

    def __post_init__(self) -> None:
        if not (self.kappa > 0.0):
            raise DomainError(f"kappa must be > 0, got {self.kappa}")
        object.__setattr__(self, "beta", _check_beta(self.beta))

    @property
    def nu(self) -> float:
        return weibull_nu(self.kappa)


@dataclass(frozen=True)
class LogGaussianFieldModel:
    """Unit-mean log-Gaussian field with a log-linear mean surface.

    ``Y(s) = mu(s) * exp(sigma Z(s) - sigma^2/2)`` with ``Z`` the parent
    Gaussian process; the correction term keeps E[Y] = mu.
    """

    sigma2: float
    beta: Tuple[float, ...]
    corr: CorrelationModel

    def __post_init__(self) -> None:
        if not (self.sigma2 > 0.0):
            raise DomainError(f"sigma2 must be > 0, got {self.sigma2}")
        object.__setattr__(self, "beta", _check_beta(self.beta))


def mean_function(beta, site: Site) -> float:
    """Log-linear mean exp(beta0 + beta1 v1 + ...) at one site."""
    b = _check_beta(beta)
    if len(b) != 1 + len(site.covariates):
        raise DomainError(
            f"beta has {len(b)} coefficients but the site carries "
            f"{len(site.covariates)} covariates"
        )
    return float(math.exp(b[0] + sum(bi * vi for bi, vi in zip(b[1:], site.covariates))))


def mean_values(beta, covariates: np.ndarray) -> np.ndarray:
    """Vectorized log-linear mean for an (n, p) covariate matrix."""
    b = np.asarray(_check_beta(beta))
    v = np.asarray(covariates, dtype=float)
    if v.ndim != 2 or v.shape[1] != len(b) - 1:
        raise DomainError(
            f"covariate matrix of shape {v.shape} does not match "
            f"{len(b)} regression coefficients"
        )
    return np.exp(b[0] + v @ b[1:])


def _covariates_of(sites: Sequence[Site]) -> np.ndarray:
    p = len(sites[0].covariates)
    if any(len(s.covariates) != p for s in sites):
        raise DomainError("all sites must carry the same number of covariates")
    return np.asarray([s.covariates for s in sites], dtype=float).reshape(len(sites), p)


def _cholesky_lower(matrix: np.ndarray) -> np.ndarray:
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DomainError(f"correlation matrix must be square, got shape {a.shape}")
    if not np.allclose(a, a.T, atol=1e-12):
        raise DomainError("correlation matrix must be symmetric")
    c, info = lapack.dpotrf(a, lower=1)
    if info != 0:
        raise NotPositiveDefiniteError(
            f"correlation matrix is not positive definite "
            f"(leading minor of order {int(info)})",
            pivot=int(info),
        )
    return np.tril(c)

def _seed_children(seed: SeedLike, n: int):
    if isinstance(seed, np.random.SeedSequence):
        ss = seed
    else:
        ss = np.random.SeedSequence(int(seed))
    return ss.spawn(n)


def simulate_gaussian(corr_mat: np.ndarray, n_copies: int, seed: SeedLike) -> np.ndarray:
    """Draw ``n_copies`` independent copies of the parent Gaussian field.

    Returns an (n_sites, n_copies) array; copy ``j`` depends only on the
    master seed and ``j``, never on ``n_copies``.
    """
    if n_copies < 1:
        raise DomainError(f"n_copies must be >= 1, got {n_copies}")
    chol = _cholesky_lower(corr_mat)
    n = chol.shape[0]
    out = np.empty((n, n_copies))
    for j, child in enumerate(_seed_children(seed, n_copies)):
        rng = np.random.default_rng(child)
        out[:, j] = chol @ rng.standard_normal(n)
    return out


def _chi2_replicate(chol: np.ndarray, m: int, child) -> np.ndarray:
    rng = np.random.default_rng(child)
    z = chol @ rng.standard_normal((chol.shape[0], m))
    return np.sum(z * z, axis=1) / m


def simulate_chi2(
    corr_mat: np.ndarray, m: int, n_reps: int, seed: SeedLike
) -> np.ndarray:
    """Draw replicates of the m-copy scaled chi-square field.

    Each replicate sums the squares of ``m`` fresh Gaussian copies drawn
    from its own seed stream and divides by ``m``; the result has
    Gamma(m/2, m/2) margins.  Returns (n_sites, n_reps).
    """
    if not isinstance(m, (int, np.integer)) or isinstance(m, bool) or m < 1:
        raise DomainError(f"m must be a positive integer, got {m!r}")
    if n_reps < 1:
        raise DomainError(f"n_reps must be >= 1, got {n_reps}")
    chol = _cholesky_lower(corr_mat)
    out = np.empty((chol.shape[0], n_reps))
    for j, child in enumerate(_seed_children(seed, n_reps)):
        out[:, j] = _chi2_replicate(chol, int(m), child)
    return out


def simulate_weibull(
    model: WeibullFieldModel,
    sites: Sequence[Site],
    n_reps: int,
    seed: SeedLike,
    metric: str = "euclidean",
) -> np.ndarray:
    """Draw replicates of the Weibull field at the given sites.

    The two-copy chi-square replicate is transformed in place, so for a
    common seed the Weibull draw is the deterministic monotone image of
    the corresponding ``simulate_chi2(..., m=2, ...)`` draw.
    Returns (n_sites, n_reps).
    """
    if n_reps < 1:
        raise DomainError(f"n_reps must be >= 1, got {n_reps}")
    r = corr_matrix(model.corr, sites, metric=metric, check_pd=False)
    chol = _cholesky_lower(r)
    mu = mean_values(model.beta, _covariates_of(sites))
    nu = model.nu
    out = np.empty((len(sites), n_reps))
    for j, child in enumerate(_seed_children(seed, n_reps)):
        x2 = _chi2_replicate(chol, 2, child)
        out[:, j] = mu * nu * x2 ** (1.0 / model.kappa)
    return out


def simulate_loggaussian(
    model: LogGaussianFieldModel,
    sites: Sequence[Site],
    n_reps: int,
    seed: SeedLike,
    metric: str = "euclidean",
) -> np.ndarray:
    """Draw replicates of the unit-mean log-Gaussian field at the sites.

    Returns (n_sites, n_reps).
    """
    if n_reps < 1:
        raise DomainError(f"n_reps must be >= 1, got {n_reps}")
    r = corr_matrix(model.corr, sites, metric=metric, check_pd=False)
    chol = _cholesky_lower(r)
    mu = mean_values(model.beta, _covariates_of(sites))
    sigma = math.sqrt(model.sigma2)
    out = np.empty((len(sites), n_reps))
    for j, child in enumerate(_seed_children(seed, n_reps)):
        rng = np.random.default_rng(child)
        z = chol @ rng.standard_normal(len(sites))
        out[:, j] = mu * np.exp(sigma * z - 0.5 * model.sigma2)
    return out
