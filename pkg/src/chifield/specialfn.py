"""Scalar special functions used by the correlation, density and
prediction layers.

Everything here is deterministic: series are summed in a fixed order with
an explicit term budget, so results are bit-reproducible across runs.
Wrappers around :mod:`scipy.special` add the domain checks and the
log-space evaluation paths that the statistical layers rely on (Bessel
ratios inside pair densities are needed far into their exponential
tails, where the direct functions under- or overflow).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special as sp

from .exceptions import DomainError, SeriesConvergenceError

__all__ = [
    "SeriesControl",
    "DEFAULT_SERIES_CONTROL",
    "GAUSS_ENDPOINT_MARGIN",
    "log_gamma",
    "lower_incomplete_gamma",
    "log_bessel_i",
    "bessel_k",
    "hypergeom_pfq",
    "gauss_2f1_at_one",
]

# Arguments this close to 1 are routed to the closed-form endpoint value
# of the Gauss series by callers (the series itself degrades there).
GAUSS_ENDPOINT_MARGIN = 1e-8

# Below this argument the ascending series for log I_a is used directly;
# above it scipy's exponentially scaled Bessel is accurate and safe.
_BESSEL_SMALL_X = 1e-4


@dataclass(frozen=True)
class SeriesControl:
    """Termination policy for power-series evaluation.

    Parameters
    ----------
    rel_tol : float
        Stop once the next term contributes less than ``rel_tol`` in
        relative magnitude to the running sum.  Must be positive.
    max_terms : int
        Hard budget on the number of terms; exceeding it raises
        :class:`~chifield.exceptions.SeriesConvergenceError` rather than
        returning a silently truncated value.
    """

    rel_tol: float = 1e-13
    max_terms: int = 100_000

    def __post_init__(self) -> None:
        if not (self.rel_tol > 0.0):
            raise DomainError(f"rel_tol must be positive, got {self.rel_tol}")
        if self.max_terms < 1:
            raise DomainError(f"max_terms must be >= 1, got {self.max_terms}")


DEFAULT_SERIES_CONTROL = SeriesControl()


def log_gamma(x: float) -> float:
    """Natural log of the gamma function for positive real ``x``."""
    x = float(x)
    if not (x > 0.0) or math.isnan(x):
        raise DomainError(f"log_gamma requires x > 0, got {x}")
    return float(sp.gammaln(x))


def lower_incomplete_gamma(s: float, x: float) -> float:
    """Unnormalized lower incomplete gamma integral on [0, x].

    Computed as ``Gamma(s) * P(s, x)`` with ``P`` the regularized form,
    which is monotone in ``x`` and tends to ``Gamma(s)`` as ``x`` grows.
    """
    s = float(s)
    x = float(x)
    if not (s > 0.0):
        raise DomainError(f"lower_incomplete_gamma requires s > 0, got {s}")
    if x < 0.0 or math.isnan(x):
        raise DomainError(f"lower_incomplete_gamma requires x >= 0, got {x}")
    if x == 0.0:
        return 0.0
    return float(math.exp(sp.gammaln(s)) * sp.gammainc(s, x))


def _log_bessel_i_series(a: float, x: np.ndarray) -> np.ndarray:
    """Ascending series for log I_a(x), accurate when x^2/4 << a+1.

    Sums S = sum_k t^k / (k! (a+1)_k) with t = x^2/4 term by term; the
    ratio between consecutive terms is t/((k+1)(a+1+k)), so convergence
    is immediate in the regime where this branch is selected.
    """
    t = 0.25 * x * x
    term = np.ones_like(t)
    s = np.ones_like(t)
    for k in range(200):
        term = term * t / ((k + 1.0) * (a + 1.0 + k))
        s = s + term
        if np.all(term <= 1e-18 * s):
            break
    # log(0.5 * x) would hit -inf when 0.5 * x underflows for subnormal
    # x, and 0 * -inf then poisons the a == 0 order with a nan; keeping
    # the logs separate stays finite for every positive x.
    with np.errstate(divide="ignore"):
        return a * (np.log(x) - math.log(2.0)) - sp.gammaln(a + 1.0) + np.log(s)


def log_bessel_i(a: float, x):
    """Log of the modified Bessel function of the first kind, I_a(x).

    Parameters
    ----------
    a : float
        Order; any real value greater than -1 is accepted (half-integer
        negative orders arise from the one-copy chi-square margin).
    x : float or ndarray
        Nonnegative argument(s).

    Returns
    -------
    float or ndarray
        ``log I_a(x)``, evaluated in log space throughout so that large
        arguments never overflow.  At ``x == 0`` the limit is returned:
        0 for ``a == 0``, ``-inf`` for ``a > 0`` and ``+inf`` for
        ``-1 < a < 0``.
    """
    a = float(a)
    if not (a > -1.0):
        raise DomainError(f"log_bessel_i requires order > -1, got {a}")
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr < 0.0) or np.any(np.isnan(x_arr)):
        raise DomainError("log_bessel_i requires x >= 0")

    out = np.empty_like(x_arr)
    zero = x_arr == 0.0
    small = (x_arr < _BESSEL_SMALL_X) & ~zero
    large = ~zero & ~small

    if np.any(zero):
        out[zero] = 0.0 if a == 0.0 else (-np.inf if a > 0.0 else np.inf)
    if np.any(small):
        out[small] = _log_bessel_i_series(a, x_arr[small])
    if np.any(large):
        xl = x_arr[large]
        with np.errstate(divide="ignore"):
            v = sp.ive(a, xl)
            res = np.where(v > 0.0, np.log(np.where(v > 0.0, v, 1.0)) + xl, -np.inf)
        # scaled Bessel can underflow for orders much larger than the
        # argument; in that regime the ascending series is exact.
        uf = v <= 0.0
        if np.any(uf):
            res[uf] = _log_bessel_i_series(a, xl[uf])
        out[large] = res

    if np.isscalar(x) or np.ndim(x) == 0:
        return float(out)
    return out


def bessel_k(a: float, x):
    """Modified Bessel function of the second kind, K_a(x), for x > 0.

    Half-integer orders (2a an odd integer) use the closed form built by
    upward recurrence from K_{1/2}(x) = sqrt(pi/(2x)) e^{-x}; other
    orders defer to scipy's general routine.
    """
    a = float(a)
    if not (a > 0.0):
        raise DomainError(f"bessel_k requires order > 0, got {a}")
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr <= 0.0) or np.any(np.isnan(x_arr)):
        raise DomainError("bessel_k requires x > 0")

    two_a = 2.0 * a
    if two_a == round(two_a) and int(round(two_a)) % 2 == 1:
        # K_{n+1/2} via K_{a+1} = K_{a-1} + (2a/x) K_a, seeded with
        # K_{-1/2} = K_{1/2}.
        n = int(round(a - 0.5))
        base = np.sqrt(np.pi / (2.0 * x_arr)) * np.exp(-x_arr)
        k_prev = base  # K_{-1/2}
        k_curr = base  # K_{1/2}
        for j in range(n):
            k_next = k_prev + ((2.0 * j + 1.0) / x_arr) * k_curr
            k_prev, k_curr = k_curr, k_next
        out = k_curr
    else:
        out = sp.kv(a, x_arr)

    if np.isscalar(x) or np.ndim(x) == 0:
        return float(out)
    return out


def _is_nonpositive_integer(v: float) -> bool:
    return v <= 0.0 and v == math.floor(v)


def hypergeom_pfq(
    a_params: Sequence[float],
    b_params: Sequence[float],
    x: float,
    control: SeriesControl = DEFAULT_SERIES_CONTROL,
) -> float:
    """Generalized hypergeometric series pFq evaluated by direct summation.

    Terms follow the ratio recurrence
    ``term_{k+1} = term_k * prod(a_i + k) / prod(b_j + k) * x / (k + 1)``
    and the sum stops once a term's relative contribution drops below
    ``control.rel_tol``.  A nonpositive-integer numerator parameter
    truncates the series to a polynomial, which is accepted for any
    ``x``; otherwise arguments outside the series' convergence region
    raise a :class:`~chifield.exceptions.DomainError`.
    """
    a_list = [float(v) for v in a_params]
    b_list = [float(v) for v in b_params]
    x = float(x)
    if math.isnan(x):
        raise DomainError("hypergeom_pfq requires a finite argument")
    for b in b_list:
        if _is_nonpositive_integer(b):
            raise DomainError(
                f"hypergeom_pfq denominator parameter {b} hits a pole"
            )
    terminating = any(_is_nonpositive_integer(a) for a in a_list)
    p, q = len(a_list), len(b_list)
    if not terminating and x != 0.0:
        if p == q + 1 and abs(x) >= 1.0:
            raise DomainError(
                f"series for {p}F{q} diverges at |x| >= 1, got x = {x}"
            )
        if p > q + 1:
            raise DomainError(f"series for {p}F{q} diverges for x != 0")

    term = 1.0
    total = 1.0
    for k in range(control.max_terms):
        num = 1.0
        for a in a_list:
            num *= a + k
        den = 1.0
        for b in b_list:
            den *= b + k
        term = term * num / den * x / (k + 1.0)
        total += term
        if term == 0.0 or abs(term) <= control.rel_tol * abs(total):
            return total
    raise SeriesConvergenceError(
        f"hypergeometric series did not converge within {control.max_terms} terms",
        terms_used=control.max_terms,
    )


def gauss_2f1_at_one(a: float, b: float, c: float) -> float:
    """Closed-form value of the Gauss series 2F1(a, b; c; 1).

    Valid when ``c - a - b > 0``; equals
    ``Gamma(c) Gamma(c-a-b) / (Gamma(c-a) Gamma(c-b))``.  Evaluated via
    log-gamma with explicit sign tracking so that negative non-integer
    parameters are handled; denominator poles yield an exact zero.
    """
    a, b, c = float(a), float(b), float(c)
    s = c - a - b
    if not (s > 0.0):
        raise DomainError(
            f"gauss_2f1_at_one requires c - a - b > 0, got {s}"
        )
    if _is_nonpositive_integer(c):
        raise DomainError(f"gauss_2f1_at_one: numerator pole at c = {c}")
    signs = (
        sp.gammasgn(c) * sp.gammasgn(s) * sp.gammasgn(c - a) * sp.gammasgn(c - b)
    )
    if signs == 0.0:
        # pole of a denominator gamma: the ratio vanishes
        return 0.0
    logv = (
        sp.gammaln(c) + sp.gammaln(s) - sp.gammaln(c - a) - sp.gammaln(c - b)
    )
    return float(signs * math.exp(logv))
