"""Prediction and probabilistic scoring.

Point prediction for the Weibull field uses simple kriging on the
standardized scale: observations are divided by their means, weights
come from the field's own correlation function (not the parent's), and
the predictor is ``mu0 * (1 + sum_i lambda_i (W_i - 1))``.  For ordered
1-D chains an exact conditional-moment predictor is available: by the
Markov property it depends on the past only through the most recent
observation, and its closed form involves a confluent hypergeometric
factor.  Scoring offers closed-form continuous ranked probability
scores for Weibull and log-Gaussian predictive margins, plus a
persistence benchmark.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import special as sp
from scipy.linalg import cho_factor, cho_solve

from .correlation import (
    Exponential,
    corr_array,
    pairwise_lags,
    weibull_nu,
    weibull_sigma2,
)
from .exceptions import DomainError, SingularSystemError
from .process import (
    LogGaussianFieldModel,
    Site,
    WeibullFieldModel,
    mean_function,
)
from .specialfn import (
    GAUSS_ENDPOINT_MARGIN,
    gauss_2f1_at_one,
    hypergeom_pfq,
)

__all__ = [
    "KrigingSystem",
    "PredictionResult",
    "build_kriging_system",
    "simple_krige",
    "loggaussian_krige",
    "product_moment",
    "optimal_predictor_chain",
    "crps_weibull",
    "crps_loggaussian",
    "naive_predict",
    "score",
]


@dataclass(frozen=True)
class PredictionResult:
    """Point prediction with its mean squared prediction error."""

    point: float
    mspe: float


@dataclass(frozen=True)
class KrigingSystem:
    """Precomputed simple-kriging system for one target.

    Holds the field-scale correlation matrix among the observation
    sites, the target correlation vector, the solved weights and the
    pieces of the error variance, so repeated prediction with fresh
    values (e.g. across simulation replicates) costs a dot product.
    ``exact_index`` is set when the target coincides with an
    observation site, in which case that observation is returned
    unchanged with zero error.
    """

    weights: np.ndarray
    corr_mat: np.ndarray
    corr_vec: np.ndarray
    mu_observed: np.ndarray
    mu_target: float
    sigma2_w: float
    exact_index: Optional[int] = None

    def predict(self, values: np.ndarray) -> PredictionResult:
        y = np.asarray(values, dtype=float)
        if y.shape != self.mu_observed.shape:
            raise DomainError(
                f"expected {self.mu_observed.shape[0]} values, got {y.shape}"
            )
        if self.exact_index is not None:
            return PredictionResult(point=float(y[self.exact_index]), mspe=0.0)
        w = y / self.mu_observed
        point = self.mu_target * (1.0 + float(self.weights @ (w - 1.0)))
        mspe = (
            self.mu_target**2
            * self.sigma2_w
            * (1.0 - float(self.corr_vec @ self.weights))
        )
        return PredictionResult(point=point, mspe=max(0.0, mspe))


def _weibull_corr_from_parent(r: np.ndarray, kappa: float) -> np.ndarray:
    """Field-scale correlation from parent correlation values, vectorized
    over the distinct entries (lag grids repeat heavily in practice)."""
    r2 = np.asarray(r, dtype=float) ** 2
    flat = r2.ravel()
    uniq, inv = np.unique(flat, return_inverse=True)
    sigma2 = weibull_sigma2(kappa)
    out_u = np.empty_like(uniq)
    for idx, v in enumerate(uniq):
        if v == 0.0:
            out_u[idx] = 0.0
        elif v == 1.0:
            out_u[idx] = 1.0
        elif v > 1.0 - GAUSS_ENDPOINT_MARGIN:
            out_u[idx] = (
                gauss_2f1_at_one(-1.0 / kappa, -1.0 / kappa, 1.0) - 1.0
            ) / sigma2
        else:
            out_u[idx] = (
                hypergeom_pfq([-1.0 / kappa, -1.0 / kappa], [1.0], float(v)) - 1.0
            ) / sigma2
    return out_u[inv].reshape(r2.shape)


def build_kriging_system(
    model: WeibullFieldModel,
    sites: Sequence[Site],
    target: Site,
    metric: str = "euclidean",
) -> KrigingSystem:
    """Assemble and solve the simple-kriging system for one target site."""
    if len(sites) == 0:
        raise DomainError("kriging requires at least one observation site")
    mu_obs = np.asarray([mean_function(model.beta, s) for s in sites])
    mu0 = mean_function(model.beta, target)
    sigma2 = weibull_sigma2(model.kappa)

    all_sites = list(sites) + [target]
    dist, tlag = pairwise_lags(all_sites, metric=metric)
    r_parent = corr_array(model.corr, dist, tlag)
    np.fill_diagonal(r_parent, 1.0)
    rw = _weibull_corr_from_parent(r_parent, model.kappa)
    c_mat = rw[:-1, :-1]
    c_vec = rw[:-1, -1]

    exact = np.nonzero(c_vec == 1.0)[0]
    if exact.size:
        n = len(sites)
        return KrigingSystem(
            weights=np.zeros(n),
            corr_mat=c_mat,
            corr_vec=c_vec,
            mu_observed=mu_obs,
            mu_target=mu0,
            sigma2_w=sigma2,
            exact_index=int(exact[0]),
        )
    try:
        lam = cho_solve(cho_factor(c_mat), c_vec)
    except np.linalg.LinAlgError as err:
        raise SingularSystemError(f"kriging system is singular: {err}") from err
    return KrigingSystem(
        weights=lam,
        corr_mat=c_mat,
        corr_vec=c_vec,
        mu_observed=mu_obs,
        mu_target=mu0,
        sigma2_w=sigma2,
        exact_index=None,
    )


def simple_krige(
    model: WeibullFieldModel,
    sites: Sequence[Site],
    values,
    target: Site,
    metric: str = "euclidean",
) -> PredictionResult:
    """Simple kriging of the Weibull field at a target site.

    Returns the linear predictor on the standardized scale and its mean
    squared prediction error ``mu0^2 sigma_w^2 (1 - c' C^{-1} c)``.  A
    target coinciding with an observation site reproduces that
    observation exactly with ``mspe == 0.0``.
    """
    system = build_kriging_system(model, sites, target, metric=metric)
    return system.predict(np.asarray(values, dtype=float))


def loggaussian_krige(
    model: LogGaussianFieldModel,
    sites: Sequence[Site],
    values,
    target: Site,
    metric: str = "euclidean",
) -> PredictionResult:
    """Conditional-expectation predictor for the log-Gaussian field.

    Works on the log scale, where the field is Gaussian with known mean
    ``log mu - sigma2/2``: the predictor is ``exp(m0 + v0/2)`` with
    ``m0, v0`` the conditional mean and variance of the target's log
    value.  The reported mspe is the conditional variance of the target
    around this predictor.
    """
    y = np.asarray(values, dtype=float)
    if len(sites) == 0 or y.shape != (len(sites),):
        raise DomainError("values must align with the observation sites")
    if np.any(~(y > 0.0)):
        raise DomainError("log-Gaussian kriging requires positive values")
    mu_obs = np.asarray([mean_function(model.beta, s) for s in sites])
    mu0 = mean_function(model.beta, target)
    s2 = model.sigma2

    all_sites = list(sites) + [target]
    dist, tlag = pairwise_lags(all_sites, metric=metric)
    r = corr_array(model.corr, dist, tlag)
    np.fill_diagonal(r, 1.0)
    r_mat = r[:-1, :-1]
    r_vec = r[:-1, -1]

    exact = np.nonzero(r_vec == 1.0)[0]
    if exact.size:
        return PredictionResult(point=float(y[exact[0]]), mspe=0.0)
    try:
        alpha = cho_solve(cho_factor(r_mat), r_vec)
    except np.linalg.LinAlgError as err:
        raise SingularSystemError(f"kriging system is singular: {err}") from err
    resid = np.log(y) - (np.log(mu_obs) - 0.5 * s2)
    m0 = math.log(mu0) - 0.5 * s2 + float(alpha @ resid)
    v0 = max(0.0, s2 * (1.0 - float(alpha @ r_vec)))
    point = math.exp(m0 + 0.5 * v0)
    mspe = math.expm1(v0) * math.exp(2.0 * m0 + v0)
    return PredictionResult(point=point, mspe=mspe)


def product_moment(a: float, b: float, rho: float, kappa: float) -> float:
    """Cross moment E[W1^a W2^b] of the unit-mean Weibull pair.

    Equals ``Gamma(1 + a/kappa) Gamma(1 + b/kappa) / Gamma(1 + 1/kappa)^{a+b}
    * 2F1(-a/kappa, -b/kappa; 1; rho^2)``; the hypergeometric factor is
    evaluated at its closed-form endpoint when ``rho^2`` reaches 1.
    """
    if not (kappa > 0.0):
        raise DomainError(f"kappa must be > 0, got {kappa}")
    if a < 0.0 or b < 0.0:
        raise DomainError("moment orders must be nonnegative")
    if not (abs(rho) <= 1.0):
        raise DomainError(f"rho must lie in [-1, 1], got {rho}")
    r2 = rho * rho
    if r2 >= 1.0 - GAUSS_ENDPOINT_MARGIN:
        f = gauss_2f1_at_one(-a / kappa, -b / kappa, 1.0)
    else:
        f = hypergeom_pfq([-a / kappa, -b / kappa], [1.0], r2)
    logpre = (
        sp.gammaln(1.0 + a / kappa)
        + sp.gammaln(1.0 + b / kappa)
        - (a + b) * sp.gammaln(1.0 + 1.0 / kappa)
    )
    return float(math.exp(logpre) * f)


def _log_kummer_regular(b: float, z: float) -> float:
    """log 1F1(b; 1; z) for z >= 0.

    All series terms are positive, so direct summation is stable; far
    into the exponential regime the standard asymptotic expansion takes
    over before the series overflows.
    """
    if z < 600.0:
        return math.log(hypergeom_pfq([b], [1.0], z))
    # 1F1(b;1;z) ~ e^z z^{b-1}/Gamma(b) * sum_s [(1-b)_s]^2 / (s! z^s)
    corr_sum = 1.0
    term = 1.0
    poch = 1.0 - b
    for s in range(1, 12):
        term *= poch * poch / (s * z)
        corr_sum += term
        poch += 1.0
        if abs(term) < 1e-16 * corr_sum:
            break
    return z + (b - 1.0) * math.log(z) - float(sp.gammaln(b)) + math.log(corr_sum)


def optimal_predictor_chain(
    model: WeibullFieldModel,
    sites: Sequence[Site],
    values,
    target: Site,
    exponent: float = 1.0,
) -> float:
    """Exact conditional moment E[Y(target)^a | chain observations].

    For the Weibull field on an ordered 1-D chain with exponential
    correlation, the conditional law of the next value given the whole
    past depends only on the most recent observation.  With
    ``x_n = (y_n / (nu mu_n))^kappa`` and ``rho`` the parent correlation
    across the final gap, the moment is

    ``Gamma(a/kappa + 1) (1 - rho^2)^{a/kappa} (nu mu_0)^a
    * exp(-rho^2 x_n / (1 - rho^2))
    * 1F1(a/kappa + 1; 1; rho^2 x_n / (1 - rho^2))``.

    As ``rho -> 0`` this collapses to the unconditional moment — for
    ``a = 1`` exactly the target's mean.  A single observation site is
    allowed: the same formula applies with ``n = 1``.
    """
    if not isinstance(model.corr, Exponential):
        raise DomainError(
            "optimal_predictor_chain requires an Exponential correlation model"
        )
    a = float(exponent)
    if not (a >= 0.0):
        raise DomainError(f"exponent must be >= 0, got {a}")
    y = np.asarray(values, dtype=float)
    if len(sites) == 0 or y.shape != (len(sites),):
        raise DomainError("values must align with the observation sites")
    if np.any(~(y > 0.0)):
        raise DomainError("chain values must be positive")
    if any(len(s.coords) != 1 for s in sites) or len(target.coords) != 1:
        raise DomainError("chain sites must have scalar coordinates")
    pos = np.asarray([s.coords[0] for s in sites])
    if np.any(np.diff(pos) <= 0.0):
        raise DomainError("chain positions must be strictly increasing")
    t0 = target.coords[0]
    if not (t0 > pos[-1]):
        raise DomainError("target must lie strictly beyond the last chain site")

    kappa = model.kappa
    nu = model.nu
    mu0 = mean_function(model.beta, target)
    mu_n = mean_function(model.beta, sites[-1])
    b = a / kappa + 1.0
    rho = math.exp(-(t0 - pos[-1]) / model.corr.phi)

    log_gamma_ratio = float(sp.gammaln(b)) - a * float(
        sp.gammaln(1.0 + 1.0 / kappa)
    )
    if rho == 0.0:
        # Unconditional moment; for a == 1 the gamma terms cancel to an
        # exact zero and the result is exactly the target's mean.
        return float(math.exp(log_gamma_ratio) * mu0**a)
    om = 1.0 - rho * rho
    x_n = (y[-1] / (nu * mu_n)) ** kappa
    z = rho * rho * x_n / om
    logv = (
        log_gamma_ratio
        + a * math.log(mu0)
        + (a / kappa) * math.log(om)
        - z
        + _log_kummer_regular(b, z)
    )
    return float(math.exp(logv))


def crps_weibull(kappa: float, scale: float, y: float) -> float:
    """Continuous ranked probability score of a Weibull forecast.

    ``CRPS = y (2F(y) - 1) - 2 scale * gamma_inc(1 + 1/kappa, (y/scale)^kappa)
    + 2^{-1/kappa} scale Gamma(1 + 1/kappa)``
    with ``F`` the forecast CDF and ``gamma_inc`` the unnormalized lower
    incomplete gamma function.
    """
    if not (kappa > 0.0) or not (scale > 0.0):
        raise DomainError("kappa and scale must be > 0")
    y = float(y)
    if y < 0.0 or math.isnan(y):
        raise DomainError(f"observation must be >= 0, got {y}")
    g1 = math.exp(sp.gammaln(1.0 + 1.0 / kappa))
    t = (y / scale) ** kappa
    cdf = -math.expm1(-t)
    partial = sp.gammainc(1.0 + 1.0 / kappa, t) * g1
    return float(
        y * (2.0 * cdf - 1.0)
        - 2.0 * scale * partial
        + 2.0 ** (-1.0 / kappa) * scale * g1
    )


def crps_loggaussian(log_mean: float, sigma2: float, y: float) -> float:
    """Continuous ranked probability score of a log-Gaussian forecast.

    The forecast is parameterized by the log of its mean and the log
    scale variance: log of the forecast variable is normal with mean
    ``log_mean - sigma2/2`` and variance ``sigma2``.  With
    ``l = (log y - (log_mean - sigma2/2)) / sigma``:

    ``CRPS = y (2 Phi(l) - 1)
    + 2 exp(log_mean) (1 - Phi(sigma/sqrt 2) - Phi(l - sigma))``
    """
    if not (sigma2 > 0.0):
        raise DomainError(f"sigma2 must be > 0, got {sigma2}")
    y = float(y)
    if not (y > 0.0):
        raise DomainError(f"observation must be > 0, got {y}")
    sigma = math.sqrt(sigma2)
    l_val = (math.log(y) - (log_mean - 0.5 * sigma2)) / sigma
    return float(
        y * (2.0 * sp.ndtr(l_val) - 1.0)
        + 2.0
        * math.exp(log_mean)
        * (1.0 - sp.ndtr(sigma / math.sqrt(2.0)) - sp.ndtr(l_val - sigma))
    )


def naive_predict(times, stations, values, targets=None):
    """Persistence forecast: predict each value by the same station's
    value one time unit earlier.

    Parameters
    ----------
    times, stations, values : array-like
        Aligned records.  For every record whose station has a value at
        exactly ``time - 1`` a forecast is produced.
    targets : array of int, optional
        Indices that must be forecast; a target without a predecessor
        raises :class:`~chifield.exceptions.MissingPredecessorError`.

    Returns
    -------
    (ndarray, ndarray)
        Indices of forecast records and the forecasts themselves, in
        input order.
    """
    from .exceptions import MissingPredecessorError

    t = np.asarray(times, dtype=float)
    s = np.asarray(stations)
    y = np.asarray(values, dtype=float)
    if not (t.shape == s.shape == y.shape) or t.ndim != 1:
        raise DomainError("times, stations and values must be aligned 1-D arrays")
    lookup = {(str(si), float(ti)): float(yi) for si, ti, yi in zip(s, t, y)}
    idx = []
    preds = []
    for k in range(t.size):
        prev = lookup.get((str(s[k]), float(t[k]) - 1.0))
        if prev is not None:
            idx.append(k)
            preds.append(prev)
    idx_arr = np.asarray(idx, dtype=int)
    pred_arr = np.asarray(preds, dtype=float)
    if targets is not None:
        want = np.asarray(targets, dtype=int)
        missing = np.setdiff1d(want, idx_arr)
        if missing.size:
            raise MissingPredecessorError(
                f"no value one time unit before record(s) {missing.tolist()}"
            )
        keep = np.isin(idx_arr, want)
        return idx_arr[keep], pred_arr[keep]
    return idx_arr, pred_arr


def score(
    predictions,
    observations,
    marginal: Optional[Tuple[str, float]] = None,
) -> dict:
    """Root mean squared error, mean absolute error and (optionally)
    mean CRPS of a forecast series.

    ``marginal`` attaches a predictive distribution around each point
    forecast for the CRPS: ``("weibull", kappa)`` treats the forecast as
    the mean of a Weibull with shape ``kappa``; ``("loggaussian",
    sigma2)`` as the mean of a log-Gaussian with log-scale variance
    ``sigma2``.
    """
    p = np.asarray(predictions, dtype=float)
    o = np.asarray(observations, dtype=float)
    if p.shape != o.shape or p.ndim != 1 or p.size == 0:
        raise DomainError("predictions and observations must be aligned, nonempty")
    err = p - o
    out = {
        "rmse": float(np.sqrt(np.mean(err * err))),
        "mae": float(np.mean(np.abs(err))),
    }
    if marginal is not None:
        family, param = marginal
        if family == "weibull":
            if np.any(~(p > 0.0)):
                raise DomainError("Weibull CRPS requires positive forecasts")
            nu = weibull_nu(param)
            vals = [crps_weibull(param, nu * pi, oi) for pi, oi in zip(p, o)]
        elif family == "loggaussian":
            if np.any(~(p > 0.0)):
                raise DomainError("log-Gaussian CRPS requires positive forecasts")
            vals = [crps_loggaussian(math.log(pi), param, oi) for pi, oi in zip(p, o)]
        else:
            raise DomainError(f"unknown marginal family: {family!r}")
        out["mean_crps"] = float(np.mean(vals))
    return out
