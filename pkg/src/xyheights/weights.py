"""Edge weights of the integer height model dual to the XY model.

The weight of a height difference k across an edge with coupling J is the
two-sided Poisson coefficient

    w_J(k) = sum_{i-j=k, i,j>=0} (J/2)^i / i! * (J/2)^j / j!

which coincides with the modified Bessel function I_k(J).  The functions
here evaluate the series directly; Bessel routines are only used as an
independent cross-check in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_TOL = 1e-14

# Beyond these sizes the factorials in the series overflow float range,
# so the evaluation switches to log space.
_LOG_DOMAIN_J = 10.0
_LOG_DOMAIN_K = 30


def weight(J: float, k: int, tol: float = DEFAULT_TOL) -> float:
    """Height-difference weight w_J(k), truncated so the relative tail < tol.

    J = 0 is handled exactly: w_0(k) = 1 if k == 0 else 0.
    """
    if J < 0:
        raise ValueError(f"coupling must be nonnegative, got {J}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if J == 0.0:
        return 1.0 if k == 0 else 0.0
    if J > _LOG_DOMAIN_J or abs(k) > _LOG_DOMAIN_K:
        return math.exp(log_weight(J, k, tol))
    k = abs(k)
    x = J / 2.0
    # First term: i = k, j = 0.
    term = x**k / math.factorial(k)
    total = term
    j = 0
    while True:
        j += 1
        term *= x * x / (j * (j + k))
        total += term
        # Remaining tail is bounded by a geometric series with this ratio.
        ratio = x * x / ((j + 1) * (j + 1 + k))
        if term * ratio / (1.0 - min(ratio, 0.5)) < tol * total:
            break
        if j > 10_000:  # pragma: no cover - series converges long before
            raise RuntimeError("weight series failed to converge")
    return total


def log_weight(J: float, k: int, tol: float = DEFAULT_TOL) -> float:
    """log w_J(k), stable for large J or |k| where the plain series overflows."""
    if J < 0:
        raise ValueError(f"coupling must be nonnegative, got {J}")
    if J == 0.0:
        return 0.0 if k == 0 else -math.inf
    k = abs(k)
    logx = math.log(J / 2.0)
    # Peak of the summand is near j* where the term ratio crosses 1.
    x2 = (J / 2.0) ** 2 if J / 2.0 < 1e150 else math.inf
    jstar = int((-(k + 1) + math.sqrt((k + 1) ** 2 + 4.0 * (J / 2.0) ** 2)) / 2.0) if x2 != math.inf else 0
    log_peak = (2 * jstar + k) * logx - math.lgamma(jstar + 1) - math.lgamma(jstar + k + 1)
    total = 0.0
    j = 0
    while True:
        log_term = (2 * j + k) * logx - math.lgamma(j + 1) - math.lgamma(j + k + 1)
        total += math.exp(log_term - log_peak)
        if j > jstar and math.exp(log_term - log_peak) < tol * total:
            break
        j += 1
        if j > 1_000_000:  # pragma: no cover
            raise RuntimeError("log weight series failed to converge")
    return log_peak + math.log(total)


@dataclass(frozen=True)
class WeightTable:
    """Symmetric table of w_J(k) for |k| <= kmax with a recorded tail bound."""

    J: float
    kmax: int
    values: np.ndarray  # index k + kmax, length 2*kmax + 1
    tol: float
    tail: float  # bound on w_J(kmax + 1), quantifies what the table truncates

    def __getitem__(self, k: int) -> float:
        if abs(k) > self.kmax:
            return 0.0
        return float(self.values[k + self.kmax])

    def log(self) -> np.ndarray:
        """Log values with -inf where the weight vanishes."""
        with np.errstate(divide="ignore"):
            return np.log(self.values)


def weight_table(J: float, kmax: int, tol: float = DEFAULT_TOL) -> WeightTable:
    """Tabulate w_J(k) for |k| <= kmax."""
    if kmax < 0:
        raise ValueError("kmax must be nonnegative")
    half = np.array([weight(J, k, tol) for k in range(kmax + 1)])
    values = np.concatenate([half[:0:-1], half])
    tail = weight(J, kmax + 1, tol) if J > 0 else 0.0
    return WeightTable(J=J, kmax=kmax, values=values, tol=tol, tail=tail)


def window_halfwidth(J: float, tail: float = 1e-12) -> int:
    """Smallest W with w_J(W+1)/w_J(0) below the requested tail."""
    if J == 0.0:
        return 0
    w0 = weight(J, 0)
    W = 0
    while weight(J, W + 1) / w0 >= tail:
        W += 1
        if W > 500:  # pragma: no cover
            raise RuntimeError("window search diverged")
    return W
