"""When to sell: spread and argmax-time laws of a drifted Brownian log-price.

The log-price is x_t = mu t + sigma B_t on [0, T] with x_0 = 0. Selling at
time tau leaves a spread s = max_{[0,T]} x - x_tau. Its density follows from
splitting the path at tau into two legs that each stay below the running
maximum, which is what the absorbed propagators encode.
"""

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .errors import DomainError

SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class SellModel:
    mu: float
    sigma: float
    T: float

    def __post_init__(self):
        for name in ("mu", "sigma", "T"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise DomainError(f"{name} must be finite")
            object.__setattr__(self, name, value)
        if self.sigma <= 0:
            raise DomainError(f"sigma must be > 0, got {self.sigma}")
        if self.T <= 0:
            raise DomainError(f"T must be > 0, got {self.T}")


def free_propagator(x, t, x0, sigma):
    """Normal density in x with mean x0 and variance sigma^2 t."""
    if t <= 0:
        raise DomainError(f"t must be > 0, got {t}")
    var = sigma * sigma * t
    x = np.asarray(x, dtype=float)
    out = np.exp(-((x - x0) ** 2) / (2.0 * var)) / math.sqrt(2.0 * math.pi * var)
    return out if out.ndim else float(out)


def absorbed_propagator(x, t, m, mu, sigma):
    """Density at x of a path from 0 with drift mu that has stayed below m up to time t.

    Image method for the driftless part, then the Girsanov weight
    exp(mu x/sigma^2 - mu^2 t/(2 sigma^2)). The weight is folded into the
    Gaussian, leaving N(x; mu t, sigma^2 t) (1 - exp(-2 m (m - x)/(sigma^2 t))),
    which stays finite far below the barrier.
    """
    if t <= 0 or m <= 0:
        raise DomainError("need t > 0 and m > 0")
    x = np.asarray(x, dtype=float)
    if np.any(x > m):
        raise DomainError("absorbed propagator needs x <= m")
    var = sigma * sigma * t
    shifted = np.exp(-((x - mu * t) ** 2) / (2.0 * var)) / math.sqrt(2.0 * math.pi * var)
    out = shifted * -np.expm1(-2.0 * m * (m - x) / var)
    return out if out.ndim else float(out)


def _exp_times_erfc(log_factor, y):
    """exp(log_factor) * erfc(y) without overflow when both are extreme."""
    y = np.asarray(y, dtype=float)
    log_factor = np.asarray(log_factor, dtype=float)
    pos = y > 0
    scaled = np.exp(log_factor - np.where(pos, y * y, 0.0)) * special.erfcx(np.where(pos, y, 0.0))
    direct = np.exp(np.where(pos, 0.0, log_factor)) * special.erfc(np.where(pos, 0.0, y))
    return np.where(pos, scaled, direct)


def _squeeze(out):
    return out if np.ndim(out) else float(out)


def a_fn(mu, sigma, s, tau):
    """a_mu(s; tau): density-like factor of the leg that ends on the running maximum."""
    tau = np.asarray(tau, dtype=float)
    if np.any(tau <= 0):
        raise DomainError("tau must be > 0")
    s = np.asarray(s, dtype=float)
    var = sigma * sigma * tau
    y = (s - mu * tau) / np.sqrt(2.0 * var)
    tail = mu / (2.0 * sigma**2) * _exp_times_erfc(-2.0 * s * mu / sigma**2, y)
    gauss = np.exp(-((s + mu * tau) ** 2) / (2.0 * var)) / np.sqrt(2.0 * math.pi * var)
    return _squeeze(tail + gauss)


def b_fn(mu, sigma, s, tau):
    """b_mu(s; tau): probability-like factor, twice the chance the leg's range stays below s."""
    tau = np.asarray(tau, dtype=float)
    if np.any(tau <= 0):
        raise DomainError("tau must be > 0")
    s = np.asarray(s, dtype=float)
    scale = np.sqrt(2.0 * sigma * sigma * tau)
    first = _exp_times_erfc(-2.0 * s * mu / sigma**2, (s - mu * tau) / scale)
    second = special.erfc(-(s + mu * tau) / scale)
    return _squeeze(second - first)


def _spread_density_values(model, tau, s):
    mu, sigma, T = model.mu, model.sigma, model.T
    s = np.asarray(s, dtype=float)
    if tau <= 0.0:
        return 2.0 * np.asarray(a_fn(-mu, sigma, s, T))
    if tau >= T:
        return 2.0 * np.asarray(a_fn(mu, sigma, s, T))
    return np.asarray(a_fn(mu, sigma, s, tau)) * np.asarray(b_fn(-mu, sigma, s, T - tau)) + np.asarray(
        a_fn(-mu, sigma, s, T - tau)
    ) * np.asarray(b_fn(mu, sigma, s, tau))


@dataclass(frozen=True)
class SpreadDensity:
    """Density of s = max x - x_tau. At tau = 0 or T it is the one-leg limit 2 a_{-+mu}(s; T)."""

    model: SellModel
    tau: float

    def evaluator(self, s):
        s = np.asarray(s, dtype=float)
        out = np.where(s >= 0, _spread_density_values(self.model, self.tau, np.maximum(s, 0.0)), 0.0)
        return _squeeze(out)

    __call__ = evaluator

    def truncation(self):
        return abs(self.model.mu) * self.model.T + 10.0 * self.model.sigma * math.sqrt(self.model.T)

    def moment(self, power):
        """Integral of s^power times the density over s >= 0, with an octave tail check."""
        s_max = self.truncation()
        opts = dict(epsabs=1e-10, epsrel=1e-8, limit=400)
        while True:
            body = integrate.quad(lambda s: s**power * self.evaluator(s), 0.0, s_max, **opts)[0]
            tail = integrate.quad(lambda s: s**power * self.evaluator(s), s_max, 2.0 * s_max, **opts)[0]
            if abs(tail) < 1e-8:
                return body + tail
            s_max *= 2.0

    def bin_masses(self, edges):
        """Probability of each bin [edges[i], edges[i+1])."""
        edges = np.asarray(edges, dtype=float)
        return np.array(
            [integrate.quad(self.evaluator, lo, hi, epsabs=1e-13, epsrel=1e-10, limit=200)[0] for lo, hi in zip(edges[:-1], edges[1:])]
        )


def spread_density(model, tau):
    if not 0.0 <= tau <= model.T:
        raise DomainError(f"tau must lie in [0, T], got {tau}")
    return SpreadDensity(model, float(tau))


def expected_spread(model, tau):
    """Mean spread when selling at tau (tau = 0 and tau = T give the one-sided limits)."""
    return spread_density(model, tau).moment(1)


def partial_max_cdf(x, m, tau, model):
    """Density in x of x_tau jointly with max_{[0,T]} x <= m.

    First leg: absorbed at m up to tau. Second leg: restarted at x, must stay
    below the remaining headroom m - x for T - tau.
    """
    if not 0.0 < tau < model.T:
        raise DomainError("tau must lie strictly inside (0, T)")
    if x > m or m <= 0:
        return 0.0
    mu, sigma = model.mu, model.sigma
    first = absorbed_propagator(x, tau, m, mu, sigma)
    headroom = m - x
    if headroom <= 0:
        return 0.0
    rest = model.T - tau
    scale = sigma * math.sqrt(rest)
    survival = integrate.quad(
        lambda y: absorbed_propagator(y, rest, headroom, mu, sigma),
        headroom - 12.0 * scale - abs(mu) * rest,
        headroom,
        epsabs=1e-13,
        epsrel=1e-11,
        limit=200,
    )[0]
    return first * survival


@dataclass(frozen=True)
class SellDecision:
    tau: float
    degenerate: bool
    values: tuple = field(default=(), repr=False)

    def to_dict(self):
        return {"tau": self.tau, "degenerate": self.degenerate}


def optimal_tau(model, grid_size=101):
    """Grid argmin of the expected spread, endpoints included.

    mu = 0 makes both endpoints optimal; the tie goes to 0 and is flagged.
    """
    if grid_size < 11:
        raise DomainError(f"grid_size must be >= 11, got {grid_size}")
    taus = np.linspace(0.0, model.T, int(grid_size))
    values = np.array([expected_spread(model, t) for t in taus])
    if model.mu == 0.0:
        return SellDecision(0.0, True, tuple(values))
    return SellDecision(float(taus[int(np.argmin(values))]), False, tuple(values))


def _occurrence_raw(model, tau):
    tau = np.asarray(tau, dtype=float)
    mu, sigma, T = model.mu, model.sigma, model.T
    return 2.0 * sigma**2 * np.asarray(a_fn(mu, sigma, 0.0, tau)) * np.asarray(a_fn(-mu, sigma, 0.0, T - tau))


@functools.lru_cache(maxsize=1024)
def occurrence_normalization(model):
    """Integral over (0, T) of the unnormalized argmax density.

    The substitution tau = T sin^2(v/2) absorbs both inverse square-root edges.
    """
    T = model.T

    def integrand(v):
        tau = T * math.sin(v / 2.0) ** 2
        if tau <= 0.0 or tau >= T:
            tau = min(max(tau, 1e-300), T * (1.0 - 1e-16))
        return float(_occurrence_raw(model, tau)) * 0.5 * T * math.sin(v)

    return integrate.quad(integrand, 0.0, math.pi, epsabs=1e-14, epsrel=1e-12, limit=400)[0]


def occurrence_density(model, tau):
    """Density of the time at which the maximum over [0, T] is reached; +inf at tau = 0 and T."""
    tau_arr = np.asarray(tau, dtype=float)
    if np.any((tau_arr < 0) | (tau_arr > model.T)):
        raise DomainError("tau must lie in [0, T]")
    edge = (tau_arr <= 0.0) | (tau_arr >= model.T)
    safe = np.where(edge, 0.5 * model.T, tau_arr)
    out = np.where(edge, np.inf, _occurrence_raw(model, safe) / occurrence_normalization(model))
    return _squeeze(out)


def occurrence_argmax(model):
    """Endpoint with the stronger inverse-square-root singularity of the argmax density.

    Near tau = 0 the density behaves like c0/sqrt(tau) with c0 proportional to
    a_{-mu}(0; T); near T like cT/sqrt(T - tau) with cT proportional to a_mu(0; T).
    """
    c0 = float(a_fn(-model.mu, model.sigma, 0.0, model.T))
    c_end = float(a_fn(model.mu, model.sigma, 0.0, model.T))
    if c0 == c_end:
        return SellDecision(0.0, True)
    return SellDecision(model.T if c_end > c0 else 0.0, False)


def occurrence_bin_masses(model, edges):
    """Probability that the argmax time falls in each bin of edges spanning part of [0, T]."""
    edges = np.asarray(edges, dtype=float)
    if np.any(edges < 0) or np.any(edges > model.T) or np.any(np.diff(edges) <= 0):
        raise DomainError("edges must increase inside [0, T]")
    T = model.T
    norm = occurrence_normalization(model)

    def integrand(v):
        tau = T * math.sin(v / 2.0) ** 2
        tau = min(max(tau, 1e-300), T * (1.0 - 1e-16))
        return float(_occurrence_raw(model, tau)) * 0.5 * T * math.sin(v)

    angles = 2.0 * np.arcsin(np.sqrt(edges / T))
    return np.array(
        [integrate.quad(integrand, lo, hi, epsabs=1e-14, epsrel=1e-11, limit=200)[0] / norm for lo, hi in zip(angles[:-1], angles[1:])]
    )
