"""Monte Carlo oracles for every closed form in the toolkit.

Results are pure functions of (n_paths, n_steps, seed): path j draws from
stream j, per-path outputs are stored by index, and reductions run in index
order afterwards.
"""

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import BudgetTooSmall, CapReachedWarning, DomainError
from .gof import SampleSeries, weighted_statistic
from .rng import McEstimate, uniform_stream, worker_threads

MAX_BINS = 512


@dataclass(frozen=True, eq=False)
class Histogram:
    """Fixed uniform bins; density = count / (n * width)."""

    edges: np.ndarray
    counts: np.ndarray
    n: int

    @property
    def widths(self):
        return np.diff(self.edges)

    @property
    def centers(self):
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def density(self):
        return self.counts / (self.n * self.widths)

    @property
    def std_error(self):
        p = self.counts / self.n
        return np.sqrt(p * (1.0 - p) / self.n) / self.widths

    @property
    def mass(self):
        return self.counts / self.n

    @classmethod
    def from_samples(cls, samples, edges):
        counts, _ = np.histogram(samples, bins=edges)
        return cls(np.asarray(edges, dtype=float), counts, int(np.size(samples)))


def default_bins(n_paths):
    return min(MAX_BINS, math.ceil(math.sqrt(n_paths)))


def _map_paths(fn, n_paths, n_workers):
    if n_workers <= 1:
        return [fn(j) for j in range(n_paths)]
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(fn, range(n_paths)))


def weighted_ks_statistics(n, cfg):
    """Weighted statistic of N uniform draws for each path (stream j holds path j's sample)."""

    def one_path(j):
        sample = SampleSeries(uniform_stream(cfg.seed, j, n), _identity_cdf)
        return weighted_statistic(sample)

    return np.array(_map_paths(one_path, cfg.n_paths, cfg.n_workers))


def _identity_cdf(u):
    return u


def mc_weighted_ks_statistic_cdf(n, k_grid, cfg):
    """Empirical P(K <= k) of the weighted statistic for N uniform draws, per k in k_grid.

    Returns a list of (k, probability, std_error).
    """
    if int(n) != n or n < 10:
        raise DomainError(f"N must be an integer >= 10, got {n}")
    k_grid = np.asarray(k_grid, dtype=float)
    if k_grid.size == 0 or np.any(np.diff(k_grid) <= 0):
        raise DomainError("k_grid must be nonempty and increasing")
    if cfg.n_paths < 100:
        raise BudgetTooSmall(f"need at least 100 paths, got {cfg.n_paths}")
    stats = np.sort(weighted_ks_statistics(int(n), cfg))
    rows = []
    for k in k_grid:
        est = McEstimate.from_count(int(np.searchsorted(stats, k, side="right")), stats.size)
        rows.append((float(k), est.mean, est.std_error))
    return rows


def mc_ou_band_survival(k, horizon, cfg, dt=4e-3):
    """Probability that the stationary limit OU process stays inside (-k, k) for `horizon`.

    Oracle for the asymptotic law S(N; k) with horizon = ln N, free of the
    finite-N effects of sampling uniforms.
    """
    if not (k > 0 and horizon >= 0 and dt > 0):
        raise DomainError("need k > 0, horizon >= 0 and dt > 0")
    k0, k1 = cfg.key
    with worker_threads(cfg.n_workers):
        alive = _kernels.ou_band_survival(k0, k1, cfg.n_paths, float(horizon), float(k), float(dt))
    return McEstimate.from_count(int(alive.sum()), cfg.n_paths)


def _bm_paths(model, cfg, record_times=(), exact_max=False):
    record_idx = np.array([int(round(t / model.T * cfg.n_steps)) for t in record_times], dtype=np.int64)
    order = np.argsort(record_idx, kind="stable")
    k0, k1 = cfg.key
    with worker_threads(cfg.n_workers):
        maxima, argmax_t, recorded = _kernels.drifted_bm_paths(
            k0, k1, cfg.n_paths, cfg.n_steps, model.mu, model.sigma, model.T, record_idx[order], bool(exact_max)
        )
    values = np.empty_like(recorded)
    values[:, order] = recorded
    return maxima, argmax_t, values, record_idx * (model.T / cfg.n_steps)


def mc_gbm_spread(model, tau, cfg, bins=None, s_max=None, exact_max=False):
    """Simulate x_t = mu t + sigma B_t and return (histogram of max x - x_tau, mean spread).

    tau is snapped to the nearest grid time. The max is over grid points
    unless exact_max draws the within-step maximum from the bridge law.
    """
    if not 0.0 <= tau <= model.T:
        raise DomainError(f"tau must lie in [0, T], got {tau}")
    maxima, _, recorded, _ = _bm_paths(model, cfg, (tau,), exact_max)
    spread = maxima - recorded[:, 0]
    if s_max is None:
        s_max = float(spread.max()) * (1.0 + 1e-12)
    edges = np.linspace(0.0, s_max, (bins or default_bins(cfg.n_paths)) + 1)
    return Histogram.from_samples(spread, edges), McEstimate.from_samples(spread)


def mc_spread_means(model, taus, cfg, exact_max=False):
    """Mean spread for several selling times on one set of paths."""
    maxima, _, recorded, snapped = _bm_paths(model, cfg, tuple(taus), exact_max)
    return [McEstimate.from_samples(maxima - recorded[:, i]) for i in range(len(taus))], snapped


def mc_argmax_time_density(model, cfg, bins=None, exact_max=False):
    """Histogram over [0, T] of the time at which the simulated path peaks."""
    _, argmax_t, _, _ = _bm_paths(model, cfg, (), exact_max)
    edges = np.linspace(0.0, model.T, (bins or default_bins(cfg.n_paths)) + 1)
    return Histogram.from_samples(argmax_t, edges)


def mc_sell_curves(model, taus, cfg, exact_max=False):
    """Mean spread at each tau and an argmax-time histogram whose bins surround the taus.

    Bin i runs between the midpoints of its neighbours, so the edge bins are half width.
    """
    taus = np.asarray(taus, dtype=float)
    if taus.size < 2 or np.any(np.diff(taus) <= 0) or taus[0] < 0 or taus[-1] > model.T:
        raise DomainError("taus must be at least two increasing points in [0, T]")
    maxima, argmax_t, recorded, snapped = _bm_paths(model, cfg, tuple(taus), exact_max)
    spreads = [McEstimate.from_samples(maxima - recorded[:, i]) for i in range(taus.size)]
    edges = np.concatenate(([taus[0]], 0.5 * (taus[1:] + taus[:-1]), [taus[-1]]))
    return spreads, Histogram.from_samples(argmax_t, edges), snapped


@dataclass(frozen=True)
class PathEnsembleSummary:
    n_paths: int
    n_above: int
    n_below: int
    n_survived: int
    mean_accumulated: float
    accumulated_std_error: float
    cap_reached: bool

    @property
    def survival_fraction(self):
        return self.n_survived / self.n_paths

    @property
    def exit_above_fraction(self):
        return self.n_above / self.n_paths

    @property
    def exit_below_fraction(self):
        return self.n_below / self.n_paths

    @property
    def exit_below(self):
        return McEstimate.from_count(self.n_below, self.n_paths)

    @property
    def exit_above(self):
        return McEstimate.from_count(self.n_above, self.n_paths)

    @property
    def accumulated(self):
        return McEstimate(self.mean_accumulated, self.accumulated_std_error, self.n_paths)

    def to_dict(self):
        return {
            "n_paths": self.n_paths,
            "survival_fraction": self.survival_fraction,
            "exit_above_fraction": self.exit_above_fraction,
            "exit_below_fraction": self.exit_below_fraction,
            "mean_accumulated": self.mean_accumulated,
            "accumulated_std_error": self.accumulated_std_error,
            "cap_reached": self.cap_reached,
        }


def default_exit_steps(model):
    return max(1, math.ceil(100.0 / model.epsilon))


def mc_predictor_exit(model, p0, q, cfg, mode="ar1", kappa=0.5, dt_max=0.0625, d_min=None):
    """Exit statistics of the predictor started at p0 inside [-q, q].

    mode="ar1" runs the literal recursion p_{t+1} = rho p_t + beta xi_t for at
    most cfg.n_steps steps; mean_accumulated estimates E[sum_{i < exit} p_i].
    mode="diffusion" runs its continuum limit over at most cfg.n_steps time
    units, which is what the closed forms describe; d_min defaults to 1e-3 of
    the starting distance to the nearer wall.
    """
    side, acc = _exit_paths(model, p0, q, cfg, mode, kappa, dt_max, d_min)
    return _summarize(side, acc, cfg.n_paths)


def mc_path_integral_ratio(model, p0, q, cfg, **kwargs):
    """Estimate of G(p0) / (2 Gamma P_-(p0)) from one ensemble, delta-method standard error.

    At the optimal threshold and p0 close to q this ratio tends to 1.
    """
    side, acc = _exit_paths(model, p0, q, cfg, **kwargs)
    return _ratio(side, acc, model.gamma)


def mc_exit_statistics(model, p0, q, cfg, **kwargs):
    """Both of the above from a single ensemble: (PathEnsembleSummary, ratio McEstimate)."""
    side, acc = _exit_paths(model, p0, q, cfg, **kwargs)
    return _summarize(side, acc, cfg.n_paths), _ratio(side, acc, model.gamma)


def _summarize(side, acc, n_paths):
    n_above = int(np.count_nonzero(side == 1))
    n_below = int(np.count_nonzero(side == -1))
    n_survived = n_paths - n_above - n_below
    est = McEstimate.from_samples(acc)
    capped = n_survived / n_paths > 0.01
    if capped:
        warnings.warn(f"{n_survived} of {n_paths} paths hit the step cap; estimates are biased", CapReachedWarning, stacklevel=3)
    return PathEnsembleSummary(n_paths, n_above, n_below, n_survived, est.mean, est.std_error, capped)


def _ratio(side, acc, gamma):
    below = (side == -1).astype(float)
    n = acc.size
    mean_acc = acc.mean()
    mean_below = below.mean()
    if mean_below == 0.0 or gamma <= 0:
        raise DomainError("ratio needs gamma > 0 and at least one exit below; increase n_paths")
    ratio = mean_acc / (2.0 * gamma * mean_below)
    cov = np.cov(acc, below)
    rel_var = cov[0, 0] / mean_acc**2 + cov[1, 1] / mean_below**2 - 2.0 * cov[0, 1] / (mean_acc * mean_below)
    return McEstimate(float(ratio), float(abs(ratio) * math.sqrt(max(rel_var, 0.0) / n)), int(n))


def _exit_paths(model, p0, q, cfg, mode="ar1", kappa=0.5, dt_max=0.0625, d_min=None):
    if q <= 0 or abs(p0) > q:
        raise DomainError("need q > 0 and |p0| <= q")
    k0, k1 = cfg.key
    with worker_threads(cfg.n_workers):
        if mode == "ar1":
            side, acc = _kernels.ar1_exit(k0, k1, cfg.n_paths, cfg.n_steps, model.rho, model.beta, float(p0), float(q))
        elif mode == "diffusion":
            if d_min is None:
                d_min = 1e-3 * (q - abs(p0))
            side, acc = _kernels.ou_band_exit(
                k0, k1, cfg.n_paths, float(cfg.n_steps), model.epsilon, model.beta, float(p0), float(q),
                float(kappa), float(dt_max), float(d_min),
            )
        else:
            raise DomainError(f"unknown mode {mode!r}")
    return side, acc
