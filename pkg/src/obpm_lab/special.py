"""Log-domain special functions for jump statistics and Hermite coefficients."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special as sp


@dataclass(frozen=True)
class LogReal:
    """A real number stored as (sign, log|value|)."""

    log_magnitude: float
    sign: int = 1

    def __post_init__(self):
        if self.sign not in (-1, 0, 1):
            raise ValueError("sign must be -1, 0 or +1")

    @classmethod
    def from_float(cls, value: float) -> "LogReal":
        if value == 0:
            return cls(-math.inf, 0)
        return cls(math.log(abs(value)), 1 if value > 0 else -1)

    def __float__(self) -> float:
        if self.sign == 0:
            return 0.0
        return self.sign * math.exp(self.log_magnitude)

    def __mul__(self, other: "LogReal") -> "LogReal":
        sign = self.sign * other.sign
        if sign == 0:
            return LogReal(-math.inf, 0)
        return LogReal(self.log_magnitude + other.log_magnitude, sign)

    def __truediv__(self, other: "LogReal") -> "LogReal":
        if other.sign == 0:
            raise ZeroDivisionError("division by LogReal zero")
        if self.sign == 0:
            return self
        return LogReal(self.log_magnitude - other.log_magnitude, self.sign * other.sign)


def _positive(name: str, *values: float) -> None:
    for v in values:
        if not v > 0:
            raise ValueError(f"{name}: arguments must be positive, got {v}")


def log_gamma(x):
    """ln Gamma(x) for x > 0."""
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise ValueError("log_gamma: domain is x > 0")
    out = sp.gammaln(x)
    return float(out) if out.ndim == 0 else out


def log_beta(a, b):
    """ln B(a, b) for positive arguments."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(~(a > 0)) or np.any(~(b > 0)):
        raise ValueError("log_beta: arguments must be positive")
    out = sp.betaln(a, b)
    return float(out) if out.ndim == 0 else out


def log_binom(n, k):
    """ln C(n, k) for integers 0 <= k <= n."""
    n = np.asarray(n, dtype=float)
    k = np.asarray(k, dtype=float)
    out = sp.gammaln(n + 1) - sp.gammaln(k + 1) - sp.gammaln(n - k + 1)
    return float(out) if out.ndim == 0 else out


def logsumexp(values) -> float:
    """Stable log(sum(exp(values))) with a fixed summation order."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        return -math.inf
    top = float(v.max())
    if not math.isfinite(top):
        return top
    return top + math.log(float(np.sum(np.exp(v - top))))


def scaled_hermite_coeffs(x: float, n_max: int) -> np.ndarray:
    """c_n = H_n(x/sqrt 2) / sqrt(2^n n!) for n = 0..n_max.

    Uses c_{n+1} = (x c_n - sqrt(n) c_{n-1}) / sqrt(n + 1), which stays in
    range where the raw Hermite values would overflow.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    c = np.empty(n_max + 1)
    c[0] = 1.0
    c[1] = x
    for n in range(1, n_max):
        c[n + 1] = (x * c[n] - math.sqrt(n) * c[n - 1]) / math.sqrt(n + 1)
    return c


_CHUNK = 256


def log_kummer_1f1(a: float, b: float, z: float) -> float:
    """ln 1F1(a; b; z) for a, b > 0 and z >= 0.

    Every series term is positive, so the sum is streamed through a running
    log-sum-exp. Stops once the terms are decreasing and have fallen 1e-18
    below the largest one seen.
    """
    _positive("log_kummer_1f1", a, b)
    if z < 0:
        raise ValueError("log_kummer_1f1: z must be nonnegative")
    if z == 0:
        return 0.0
    logz = math.log(z)
    stop = math.log(1e-18)
    acc_max = 0.0  # term k = 0 is 1
    acc_sum = 1.0  # sum of exp(term - acc_max)
    lga, lgb = math.lgamma(a), math.lgamma(b)
    k0 = 1
    while True:
        k = np.arange(k0, k0 + _CHUNK, dtype=float)
        logt = (sp.gammaln(a + k) - lga) - (sp.gammaln(b + k) - lgb) + k * logz - sp.gammaln(k + 1)
        cmax = float(logt.max())
        if cmax > acc_max:
            acc_sum *= math.exp(acc_max - cmax)
            acc_max = cmax
        acc_sum += float(np.sum(np.exp(logt - acc_max)))
        last = k[-1]
        ratio = (a + last) * z / ((b + last) * (last + 1))
        if ratio < 1.0 and logt[-1] - acc_max < stop:
            break
        k0 += _CHUNK
    return acc_max + math.log(acc_sum)


def log_poisson_pmf(m, mean):
    """ln(e^-mean mean^m / m!)."""
    m = np.asarray(m, dtype=float)
    mean = float(mean)
    if mean == 0.0:
        out = np.where(m == 0, 0.0, -np.inf)
    else:
        out = sp.xlogy(m, mean) - mean - sp.gammaln(m + 1)
    return float(out) if np.ndim(out) == 0 else out
