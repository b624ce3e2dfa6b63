"""Variance-weighted Kolmogorov-Smirnov test.

The statistic weights the empirical-cdf discrepancy by 1/sqrt(u(1-u)) over
the quantile window [1/(N+1), N/(N+1)]. After the time change that turns the
weighted Brownian bridge into an Ornstein-Uhlenbeck process, its law is the
survival probability of that process between walls at +-k over the horizon
ln N. For large N this is dominated by the ground state of a harmonic
oscillator confined to [-k, k]:

    S(N; k) = A~(k) N^(-theta0(k))
"""

import functools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import DegenerateSample, DomainError, NonConvergence
from .special import bisect, erf, kummer_1f1, y_minus_shifted, y_plus

K_MIN = 0.05
K_MAX = 10.0
SQRT_2PI = math.sqrt(2.0 * math.pi)


def ks_classical_cdf(k):
    """Kolmogorov limit law 1 - 2 sum_{n>=1} (-1)^{n-1} exp(-2 n^2 k^2)."""
    k = float(k)
    if k <= 0:
        raise DomainError(f"k must be > 0, got {k}")
    n_max = math.ceil(math.sqrt(math.log(1e14) / 2.0) / k) + 1
    if n_max > 100_000:
        # true value is below exp(-pi^2/(8k^2)), far under double resolution
        return 0.0
    n = np.arange(1, n_max + 1, dtype=float)
    terms = np.exp(-2.0 * n * n * k * k)
    signs = np.where(n % 2 == 1, 1.0, -1.0)
    # sum smallest terms first
    value = 1.0 - 2.0 * float(np.sum((signs * terms)[::-1]))
    return min(1.0, max(0.0, value))


def ks_classical_cdf_spectral(k):
    """Same law from the spectral expansion (sqrt(2 pi)/k) sum_{n>=1} exp(-(2n-1)^2 pi^2/(8k^2))."""
    k = float(k)
    if k <= 0:
        raise DomainError(f"k must be > 0, got {k}")
    scale = SQRT_2PI / k
    total = 0.0
    j = 1
    while True:
        term = scale * math.exp(-j * j * math.pi**2 / (8.0 * k * k))
        total += term
        if term < 1e-14 * max(total, 1e-300) or term == 0.0:
            break
        j += 2
    return min(1.0, max(0.0, total))


def ks_classical_critical_value(confidence=0.95):
    """Root of ks_classical_cdf(k) = confidence."""
    lo, hi = bisect(lambda k: ks_classical_cdf(k) - confidence, 0.1, 5.0)
    return 0.5 * (lo + hi)


def _scan_step(k):
    return min(0.1, math.pi**2 / (8.0 * k * k))


def _find_first_root(fn, start, step):
    """Walk upward from `start` until fn changes sign, then bisect to full precision."""
    lo = start
    f_lo = fn(lo)
    if f_lo == 0.0:
        return lo
    sign = f_lo > 0
    for _ in range(10_000_000):
        hi = lo + step
        f_hi = fn(hi)
        if f_hi == 0.0:
            return hi
        if (f_hi > 0) != sign:
            a, b = bisect(fn, lo, hi, width=0.0)
            return 0.5 * (a + b)
        lo = hi
    raise NonConvergence(f"no sign change while scanning from {start}")


def _theta0_exact(k):
    return _find_first_root(lambda t: y_plus(t, k), 0.0, _scan_step(k))


def _theta1_minus_one_exact(k, theta0_value):
    # odd branch in the variable u = theta - 1; 1F1((1-theta)/2, ...) loses theta1 - 1 to
    # rounding once it drops below ~1e-16, which happens for k above ~8
    return _find_first_root(lambda u: y_minus_shifted(u, k), theta0_value - 1.0, _scan_step(k))


def theta0(k):
    """Smallest theta > 0 with y_plus(theta, k) = 0 (limit formulas outside [0.05, 10])."""
    return eigen_solution(k).theta0


def theta1(k):
    """Smallest root above theta0 of the odd branch y_minus(theta, k)."""
    return eigen_solution(k).theta1


@dataclass(frozen=True)
class EigenSolution:
    k: float
    theta0: float
    theta1: float
    a_prefactor: float
    a_tilde: float
    theta1_minus_one: float
    asymptotic: bool = False

    @property
    def gap(self):
        return self.theta1 - self.theta0

    @property
    def gap_excess(self):
        """theta1 - theta0 - 1, computed without cancelling against 1."""
        return self.theta1_minus_one - self.theta0


def _asymptotic_solution(k):
    if k < K_MIN:
        t0 = math.pi**2 / (4.0 * k * k) - 0.5
        t1 = math.pi**2 / (k * k) - 0.5
        a_tilde = 16.0 * k / (math.pi**2 * SQRT_2PI)
        return EigenSolution(k, t0, t1, math.sqrt(a_tilde / SQRT_2PI), a_tilde, t1 - 1.0, True)
    decay = math.sqrt(2.0 / math.pi) * math.exp(-k * k / 2.0)
    t0 = decay * k
    t1m1 = decay * (k**3 - 2.0 * k)
    a_tilde = float(erf(k / math.sqrt(2.0))) ** 2
    return EigenSolution(k, t0, 1.0 + t1m1, math.sqrt(a_tilde / SQRT_2PI), a_tilde, t1m1, True)


@functools.lru_cache(maxsize=4096)
def eigen_solution(k):
    """Ground state of the caged oscillator and the prefactor of the test law.

    A(k) is the overlap of the normalized ground state with the stationary
    (unit-variance Gaussian) start; A~ = sqrt(2 pi) A^2. Both integrands are
    even, so quadratures run over [0, k] and are doubled.
    """
    k = float(k)
    if not k > 0 or not math.isfinite(k):
        raise DomainError(f"k must be finite and > 0, got {k}")
    if k < K_MIN or k > K_MAX:
        return _asymptotic_solution(k)
    t0 = _theta0_exact(k)
    t1m1 = _theta1_minus_one_exact(k, t0)
    opts = dict(epsabs=1e-11, epsrel=1e-12, limit=200)
    norm_sq = 2.0 * integrate.quad(lambda z: y_plus(t0, z) ** 2, 0.0, k, **opts)[0]
    # e^{z^2/4} y_plus(z) times the N(0,1) density
    overlap = 2.0 * integrate.quad(
        lambda z: kummer_1f1(-t0 / 2.0, 0.5, z * z / 2.0) * math.exp(-z * z / 2.0) / SQRT_2PI,
        0.0,
        k,
        **opts,
    )[0]
    a_prefactor = overlap / math.sqrt(norm_sq)
    a_tilde = SQRT_2PI * a_prefactor**2
    return EigenSolution(k, t0, 1.0 + t1m1, a_prefactor, a_tilde, t1m1)


def _check_n(n):
    if int(n) != n or n < 10:
        raise DomainError(f"N must be an integer >= 10, got {n}")


def test_law_S(n, k):
    """Asymptotic probability that the weighted statistic of N draws stays below k."""
    _check_n(n)
    k = float(k)
    if k <= 0:
        return 0.0
    sol = eigen_solution(k)
    return min(1.0, max(0.0, sol.a_tilde * math.exp(-sol.theta0 * math.log(n))))


test_law_S.__test__ = False  # keep pytest from collecting the name


def test_law_S_small_k(n, k):
    """Free-well limit of the law: theta0 ~ pi^2/(4k^2) - 1/2, A~ ~ 16k/(pi^2 sqrt(2 pi))."""
    _check_n(n)
    t0 = math.pi**2 / (4.0 * k * k) - 0.5
    a_tilde = 16.0 * k / (math.pi**2 * SQRT_2PI)
    return min(1.0, a_tilde * math.exp(-t0 * math.log(n)))


test_law_S_small_k.__test__ = False


def test_law_S_large_k(n, k):
    """Wide-cage limit: theta0 ~ sqrt(2/pi) k e^{-k^2/2}, A~ ~ erf(k/sqrt 2)^2."""
    _check_n(n)
    t0 = math.sqrt(2.0 / math.pi) * k * math.exp(-k * k / 2.0)
    a_tilde = float(erf(k / math.sqrt(2.0))) ** 2
    return min(1.0, a_tilde * math.exp(-t0 * math.log(n)))


test_law_S_large_k.__test__ = False

_LAWS = {"exact": test_law_S, "large_k": test_law_S_large_k}


@functools.lru_cache(maxsize=256)
def critical_value(n, confidence=0.95, law="exact"):
    """k* with S(N; k*) = confidence.

    law="large_k" solves the wide-cage limit instead of the exact eigen solution.
    """
    _check_n(n)
    if not 0.5 < confidence < 1.0:
        raise DomainError(f"confidence must lie in (0.5, 1), got {confidence}")
    fn = _LAWS[law]
    lo, hi = bisect(lambda k: fn(n, k) - confidence, K_MIN, K_MAX, width=1e-10)
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class QuantileWindow:
    a: float
    b: float

    def __post_init__(self):
        if not 0.0 < self.a <= self.b < 1.0:
            raise DomainError(f"need 0 < a <= b < 1, got a={self.a}, b={self.b}")

    @classmethod
    def for_sample_size(cls, n):
        return cls(1.0 / (n + 1), n / (n + 1))

    @property
    def T_horizon(self):
        return horizon_T(self.a, self.b)


def horizon_T(a, b):
    """Ornstein-Uhlenbeck horizon ln sqrt(b(1-a)/(a(1-b))) of the window [a, b]."""
    if not 0.0 < a <= b < 1.0:
        raise DomainError(f"need 0 < a <= b < 1, got a={a}, b={b}")
    return 0.5 * (math.log(b) - math.log(a) + math.log1p(-a) - math.log1p(-b))


@dataclass(frozen=True, eq=False)
class SampleSeries:
    """Observations (stored sorted) and a vectorized null cdf."""

    values: np.ndarray
    null_cdf: Callable = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "values", np.sort(np.asarray(self.values, dtype=float)))

    @property
    def n(self):
        return self.values.size


def _probabilities(sample):
    values = sample.values
    if values.size < 2:
        raise DomainError("need at least 2 observations")
    if not np.all(np.isfinite(values)):
        raise DomainError("observations must be finite")
    if values[0] == values[-1]:
        raise DegenerateSample("all observations are equal")
    u = np.asarray(sample.null_cdf(values), dtype=float)
    if not np.all((u > 0.0) & (u < 1.0)):
        raise DegenerateSample("null cdf maps an observation onto 0 or 1")
    return np.sort(u)


def weighted_statistic(sample):
    """sup over u in [1/(N+1), N/(N+1)] of sqrt(N) |F_N(u) - u| / sqrt(u(1-u)).

    Between jumps F_N is a constant c and (c-u)^2/(u(1-u)) has no interior
    maximum (its critical points are u = c, a minimum, and c/(2c-1), outside
    (0, 1)). The sup is therefore attained at a window edge or at a one-sided
    limit of a jump, and those candidates are enumerated exactly.
    """
    u = _probabilities(sample)
    n = u.size
    a = 1.0 / (n + 1)
    b = n / (n + 1.0)
    inside = u[(u >= a) & (u <= b)]
    at_right = np.searchsorted(u, inside, side="right") / n
    strictly_above_a = inside[inside > a]
    at_left = np.searchsorted(u, strictly_above_a, side="left") / n
    edges = np.array([a, b, b])
    edge_levels = np.array(
        [
            np.searchsorted(u, a, side="right") / n,
            np.searchsorted(u, b, side="right") / n,
            np.searchsorted(u, b, side="left") / n,
        ]
    )
    points = np.concatenate([inside, strictly_above_a, edges])
    levels = np.concatenate([at_right, at_left, edge_levels])
    weighted = np.abs(levels - points) / np.sqrt(points * (1.0 - points))
    return math.sqrt(n) * float(weighted.max())


@dataclass(frozen=True)
class GofResult:
    statistic_k: float
    p_value: float
    n: int
    reject_at_95: bool
    critical_value_95: float

    def to_dict(self):
        return {
            "statistic_k": self.statistic_k,
            "p_value": self.p_value,
            "n": self.n,
            "critical_value_95": self.critical_value_95,
            "reject_at_95": self.reject_at_95,
        }


def gof_test(sample):
    """Weighted KS test of the sample against its null cdf, with the asymptotic law."""
    n = sample.n
    _check_n(n)
    stat = weighted_statistic(sample)
    p_value = min(1.0, max(0.0, 1.0 - test_law_S(n, stat)))
    crit = critical_value(n, 0.95)
    return GofResult(stat, p_value, n, bool(stat > crit), crit)
