"""Scalar special functions used by the closed-form results.

Everything here is pure and thread-safe. Array inputs are accepted where
noted; the hypergeometric routines are scalar.
"""

import math

import numpy as np
from scipy import integrate, special

from .errors import DomainError, IntegralOverflow, NonConvergence

SERIES_CAP = 10_000
SERIES_SWITCH_X = 50.0

# Largest x with e^{x^2} D(x) finite in double precision.
EXP_INTEGRAL_MAX_X = 26.6


def erf(x):
    """Error function, odd, accurate to a few ulp (scipy ufunc)."""
    return special.erf(x)


def erfc(x):
    """Complementary error function computed directly, so the tail keeps relative accuracy."""
    return special.erfc(x)


def kummer_1f1(a, b, x):
    """Confluent hypergeometric function 1F1(a; b; x) for x >= 0.

    Power series with the term-ratio recurrence for x <= 50. Beyond that the
    Kummer ODE is integrated outward from x = 50, seeded by the series.
    """
    a = float(a)
    b = float(b)
    x = float(x)
    if b <= 0 and b == math.floor(b):
        raise DomainError(f"b must not be a nonpositive integer, got {b}")
    if x < 0 or not math.isfinite(x):
        raise DomainError(f"x must be finite and >= 0, got {x}")
    if x <= SERIES_SWITCH_X:
        return _kummer_series(a, b, x)
    return _kummer_ode(a, b, x)


def _kummer_series(a, b, x):
    term = 1.0
    total = 1.0
    n = 0
    abs_a = abs(a)
    while n < SERIES_CAP:
        term *= (a + n) * x / ((b + n) * (n + 1))
        total += term
        n += 1
        if term == 0.0:
            return total
        # A small term is not enough: with a near -theta/2 ~ 0 the first terms are tiny
        # and the x^n/n! growth comes later. `bound` dominates every later term ratio.
        if n + b > 0:
            bound = max(1.0, (n + abs_a) / (n + b)) * x / (n + 1)
            if bound < 0.5 and abs(term) < 1e-16 * abs(total):
                return total
    raise NonConvergence(f"1F1({a}, {b}, {x}) series did not converge in {SERIES_CAP} terms")


def _kummer_ode(a, b, x):
    x0 = SERIES_SWITCH_X
    y0 = _kummer_series(a, b, x0)
    dy0 = a / b * _kummer_series(a + 1.0, b + 1.0, x0)

    # x y'' + (b - x) y' - a y = 0
    def rhs(t, y):
        return [y[1], (a * y[0] - (b - t) * y[1]) / t]

    sol = integrate.solve_ivp(rhs, (x0, x), [y0, dy0], method="DOP853", rtol=1e-13, atol=0.0)
    if not sol.success:
        raise NonConvergence(f"1F1 ODE integration failed: {sol.message}")
    return float(sol.y[0, -1])


def y_plus(theta, z):
    """Even parabolic-cylinder solution exp(-z^2/4) 1F1(-theta/2, 1/2, z^2/2)."""
    z = float(z)
    return math.exp(-z * z / 4.0) * kummer_1f1(-theta / 2.0, 0.5, z * z / 2.0)


def y_minus(theta, z):
    """Odd parabolic-cylinder solution z exp(-z^2/4) 1F1((1-theta)/2, 3/2, z^2/2)."""
    return y_minus_shifted(theta - 1.0, z)


def y_minus_shifted(theta_minus_one, z):
    """y_minus written in terms of theta - 1, which keeps precision when theta is close to 1."""
    z = float(z)
    return z * math.exp(-z * z / 4.0) * kummer_1f1(-theta_minus_one / 2.0, 1.5, z * z / 2.0)


def exp_integral_I(x):
    """I(x) = integral of e^{v^2} over [0, x], as e^{x^2} times the Dawson integral.

    Raises IntegralOverflow above x = 26.6, where the value leaves double range.
    """
    x = float(x)
    if x < 0:
        raise DomainError(f"x must be >= 0, got {x}")
    if x > EXP_INTEGRAL_MAX_X:
        raise IntegralOverflow(f"I({x}) overflows a double")
    return math.exp(x * x) * float(special.dawsn(x))


def exp_integral_ratio(x, y):
    """I(x)/I(y) without forming either factor; I is extended as an odd function, y > 0."""
    x = np.asarray(x, dtype=float)
    y = float(y)
    if y <= 0:
        raise DomainError(f"denominator argument must be > 0, got {y}")
    out = np.exp((x - y) * (x + y)) * special.dawsn(x) / special.dawsn(y)
    return out if out.ndim else float(out)


def _threshold_F_series(x):
    # F(x) = sum_{n>=1} (-1)^{n+1} 2^n x^{2n+1} / (2n+1)!!
    term = x
    total = 0.0
    n = 1
    while True:
        term *= -2.0 * x * x / (2 * n + 1)
        total -= term
        if abs(term) <= 1e-17 * abs(total):
            return total
        n += 1


def threshold_F(x):
    """F(x) = x - I(x)/I'(x) = x - D(x), with D the Dawson integral."""
    x = float(x)
    if x < 0:
        raise DomainError(f"x must be >= 0, got {x}")
    if x == 0.0:
        return 0.0
    if x < 0.2:
        return _threshold_F_series(x)
    return x - float(special.dawsn(x))


def threshold_F_prime(x):
    """F'(x) = 2x D(x)."""
    x = float(x)
    return 2.0 * x * float(special.dawsn(x))


def bisect(fn, lo, hi, width=1e-12, max_iter=400):
    """Bisection on a bracket [lo, hi] with fn(lo), fn(hi) of opposite sign.

    Stops when the bracket is narrower than `width` (absolute) or no longer
    shrinks in floating point. Returns the final bracket.
    """
    flo = fn(lo)
    fhi = fn(hi)
    if flo == 0.0:
        return lo, lo
    if fhi == 0.0:
        return hi, hi
    if (flo > 0) == (fhi > 0):
        raise NonConvergence(f"no sign change on [{lo}, {hi}]")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if hi - lo <= width or mid <= lo or mid >= hi:
            break
        fmid = fn(mid)
        if fmid == 0.0:
            return mid, mid
        if (fmid > 0) == (flo > 0):
            lo, flo = mid, fmid
        else:
            hi = mid
    return lo, hi


def threshold_F_inverse(y):
    """Solve F(x) = y for x >= 0 by bisection followed by Newton polish."""
    y = float(y)
    if y < 0 or not math.isfinite(y):
        raise DomainError(f"y must be finite and >= 0, got {y}")
    if y == 0.0:
        return 0.0
    lo, hi = 0.0, y + 1.0
    lo, hi = bisect(lambda x: threshold_F(x) - y, lo, hi)
    x = 0.5 * (lo + hi)
    for _ in range(5):
        slope = threshold_F_prime(x)
        if slope <= 0:
            break
        step = (threshold_F(x) - y) / slope
        candidate = x - step
        if not lo <= candidate <= hi or step == 0.0:
            break
        x = candidate
    if abs(threshold_F(x) - y) > 1e-10:
        raise NonConvergence(f"F^-1({y}) residual too large")
    return x
