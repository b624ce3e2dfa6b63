"""Optimal no-trade threshold for a bang-bang strategy under linear costs.

The predictor follows p_{t+1} = rho p_t + beta xi_t and the expected return
at t is p_t. Positions are saturated at +-M and flipped only when |p_t|
reaches the threshold q; each flip of size 2M costs 2 M Gamma. The threshold
solves g(q) = Gamma for the gain-per-lot function g, obtained here from the
finite-horizon Bellman recursion, from its stationary fixed point, or in the
continuum limit from a closed form in the Dawson integral.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from . import _kernels
from .errors import DomainError, GridTooNarrow, NonConvergence, NonMonotone
from .rng import McEstimate, worker_threads
from .special import exp_integral_ratio, threshold_F_inverse


@dataclass(frozen=True)
class PredictorModel:
    rho: float
    beta: float
    gamma: float
    m_cap: float = 1.0

    def __post_init__(self):
        for name in ("rho", "beta", "gamma", "m_cap"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise DomainError(f"{name} must be finite")
            object.__setattr__(self, name, value)
        if not 0.0 <= self.rho < 1.0:
            raise DomainError(f"rho must lie in [0, 1), got {self.rho}")
        if self.beta <= 0 or self.m_cap <= 0:
            raise DomainError("beta and m_cap must be > 0")
        if self.gamma < 0:
            raise DomainError(f"gamma must be >= 0, got {self.gamma}")

    @classmethod
    def from_epsilon(cls, epsilon, beta, gamma, m_cap=1.0):
        return cls(1.0 - epsilon, beta, gamma, m_cap)

    @classmethod
    def from_ema(cls, gain, sigma_r, rho, gamma, m_cap=1.0):
        """Predictor built as an exponential moving average of returns with gain K.

        Maps to an AR(1) predictor with beta = K sigma_r, which holds for K << 1.
        """
        if gain > 0.1:
            warnings.warn(f"EMA gain K={gain} > 0.1: the AR(1) mapping is only valid for K << 1", stacklevel=2)
        return cls(rho, gain * sigma_r, gamma, m_cap)

    @property
    def epsilon(self):
        return 1.0 - self.rho

    @property
    def sigma_p(self):
        """Exact stationary standard deviation beta / sqrt(1 - rho^2)."""
        return self.beta / math.sqrt(1.0 - self.rho**2)

    @property
    def sigma_p_continuum(self):
        """Small-epsilon approximation beta / sqrt(2 epsilon)."""
        return self.beta / math.sqrt(2.0 * self.epsilon)

    @property
    def eta(self):
        return self.gamma * self.epsilon**1.5 / self.beta

    def to_dict(self):
        return {"rho": self.rho, "beta": self.beta, "gamma": self.gamma, "m_cap": self.m_cap}


@dataclass(frozen=True)
class ThresholdSolution:
    q_star: float
    regime: str
    eta: float
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self):
        return {"q_star": self.q_star, "regime": self.regime, "eta": self.eta, "diagnostics": dict(self.diagnostics)}


def integrated_predictability(model, p):
    """Expected total future move p / (1 - rho) given the current predictor."""
    return np.asarray(p, dtype=float) / model.epsilon if np.ndim(p) else float(p) / model.epsilon


def _need_costs(model):
    if model.gamma <= 0:
        raise DomainError("threshold solvers need gamma > 0")


def naive_threshold(model):
    """Trade as soon as the integrated predictability pays the cost: q = Gamma (1 - rho)."""
    _need_costs(model)
    return ThresholdSolution(model.gamma * model.epsilon, "naive", model.eta)


def threshold_discrete(model):
    """Large-jump limit beta >> Gamma, where the optimal threshold is Gamma itself."""
    _need_costs(model)
    if model.beta < 10.0 * model.gamma and model.rho != 0.0:
        warnings.warn(f"beta/gamma = {model.beta / model.gamma:.3g} < 10: outside the discrete regime", stacklevel=2)
    return ThresholdSolution(model.gamma, "discrete", model.eta)


def threshold_continuous(model):
    """Continuum limit q* = beta/sqrt(eps) F^-1(Gamma eps^{3/2}/beta), valid for beta << Gamma."""
    _need_costs(model)
    eps = model.epsilon
    q = model.beta / math.sqrt(eps) * threshold_F_inverse(model.eta)
    return ThresholdSolution(q, "continuous", model.eta)


# ---------------------------------------------------------------- grid solvers


@dataclass(frozen=True)
class GridSpec:
    """Uniform symmetric predictor grid.

    extent: half-width in units of sigma_p (never below 1.25 Gamma, which bounds q).
    spacing: default min(beta/4, q_estimate/50).
    """

    extent_sigmas: float = 8.0
    spacing: float = None
    q_estimate: float = None

    def build(self, model):
        q_est = self.q_estimate
        if q_est is None:
            q_est = model.gamma
            if model.rho > 0:
                q_est = min(model.gamma, threshold_continuous(model).q_star)
        h = self.spacing or min(model.beta / 4.0, q_est / 50.0)
        half_width = max(self.extent_sigmas * model.sigma_p, 1.25 * model.gamma)
        n = int(math.ceil(half_width / h))
        return h * np.arange(-n, n + 1, dtype=float)


def _normal_mass(lo, hi):
    """P(lo < Z < hi) for standard normal Z, computed on the tail side."""
    upper = lo > 0
    return np.where(upper, special.ndtr(-lo) - special.ndtr(-hi), special.ndtr(hi) - special.ndtr(lo))


# Rows whose kernel mean sits further than this many beta from the band get zero weight
# (the normal mass there is below 1e-300).
KERNEL_REACH = 38.0


def _continuation_matrix(grid, q, model):
    """Weights W with (W @ g[j_lo:j_lo+m])[i] = integral over [-q, q] of the linear
    interpolant of g against the Normal(rho x_i, beta^2) density."""
    n = grid.size
    j_lo = max(int(np.searchsorted(grid, -q, side="right")) - 1, 0)
    j_hi = min(int(np.searchsorted(grid, q, side="left")), n - 1)
    left = grid[j_lo:j_hi]
    right = grid[j_lo + 1 : j_hi + 1]
    seg_lo = np.maximum(left, -q)
    seg_hi = np.minimum(right, q)
    beta = model.beta
    rows = np.nonzero(np.abs(model.rho * grid) < q + KERNEL_REACH * beta)[0]
    mean = model.rho * grid[rows, None]
    za = (seg_lo[None, :] - mean) / beta
    zb = (seg_hi[None, :] - mean) / beta
    mass = _normal_mass(za, zb)
    dens_diff = (np.exp(-0.5 * zb * zb) - np.exp(-0.5 * za * za)) / math.sqrt(2.0 * math.pi)
    width = right - left
    # hat-function weights: integrals of (right - x)/width and (x - left)/width
    to_left_node = ((right[None, :] - mean) * mass + beta * dens_diff) / width
    to_right_node = ((mean - left[None, :]) * mass - beta * dens_diff) / width
    weights = np.zeros((rows.size, j_hi - j_lo + 1))
    weights[:, :-1] += to_left_node
    weights[:, 1:] += to_right_node
    return rows, j_lo, weights


class _Recursion:
    """One step of the g recursion; the kernel matrix is reused while q stays put."""

    def __init__(self, grid, model):
        self.grid = grid
        self.model = model
        self._q = None
        self._matrix = None

    def __call__(self, g_next, q):
        grid, model = self.grid, self.model
        if q != self._q:
            self._q = q
            self._matrix = _continuation_matrix(grid, q, model)
        rows, j_lo, weights = self._matrix
        mean = model.rho * grid
        exits = model.gamma * (special.ndtr((mean - q) / model.beta) - special.ndtr((-q - mean) / model.beta))
        g = grid + exits
        g[rows] += weights @ g_next[j_lo : j_lo + weights.shape[1]]
        return 0.5 * (g - g[::-1])


def _extract_threshold(grid, g, gamma):
    if not np.all(np.diff(g) > 0):
        raise NonMonotone("g is not strictly increasing on the grid")
    mid = grid.size // 2
    above = np.nonzero(g[mid:] >= gamma)[0]
    if above.size == 0:
        raise NonMonotone("g never reaches gamma on the grid")
    i = mid + int(above[0])
    if i >= grid.size - 2:
        raise GridTooNarrow(f"threshold within 2 cells of the grid edge {grid[-1]}")
    if i == mid:
        return 0.0
    x0, x1 = grid[i - 1], grid[i]
    g0, g1 = g[i - 1], g[i]
    return float(x0 + (gamma - g0) * (x1 - x0) / (g1 - g0))


@dataclass(frozen=True, eq=False)
class BellmanGrid:
    p_grid: np.ndarray
    horizon: int
    g_values: np.ndarray
    q_thresholds: np.ndarray

    @property
    def converged_q(self):
        return float(self.q_thresholds[0])

    def q_change(self):
        """|q_0 - q_1|: how far the recursion still moved at the first step."""
        return float(abs(self.q_thresholds[0] - self.q_thresholds[1]))


def bellman_solve(model, horizon, grid_spec=None):
    """Backward recursion for g(t, p), t = horizon .. 0, from g(horizon, p) = p/(1 - rho).

    Row t of g_values holds g(t, .); q_thresholds[t] solves g(t, q) = Gamma.
    """
    _need_costs(model)
    if int(horizon) != horizon or horizon < 2:
        raise DomainError(f"horizon must be an integer >= 2, got {horizon}")
    grid = (grid_spec or GridSpec()).build(model)
    g_values = np.empty((horizon + 1, grid.size))
    q_values = np.empty(horizon + 1)
    g_values[horizon] = grid / model.epsilon
    q_values[horizon] = _extract_threshold(grid, g_values[horizon], model.gamma)
    step = _Recursion(grid, model)
    for t in range(horizon - 1, -1, -1):
        g_values[t] = step(g_values[t + 1], q_values[t + 1])
        q_values[t] = _extract_threshold(grid, g_values[t], model.gamma)
    return BellmanGrid(grid, int(horizon), g_values, q_values)


def stationary_g_solve(model, grid_spec=None, tol=1e-9, max_sweeps=100_000):
    """Fixed point of the stationary g equation, with q refreshed after every sweep.

    Returns (grid, g, ThresholdSolution). Converged once the sup-norm change of g
    drops below tol * Gamma.
    """
    _need_costs(model)
    grid = (grid_spec or GridSpec()).build(model)
    g = grid / model.epsilon
    q = _extract_threshold(grid, g, model.gamma)
    change = math.inf
    step = _Recursion(grid, model)
    for sweep in range(1, max_sweeps + 1):
        g_new = step(g, q)
        change = float(np.max(np.abs(g_new - g)))
        g = g_new
        q = _extract_threshold(grid, g, model.gamma)
        if change < tol * model.gamma:
            diagnostics = {"iterations": sweep, "residual": change, "grid_points": int(grid.size)}
            return grid, g, ThresholdSolution(q, "stationary_grid", model.eta, diagnostics)
    raise NonConvergence(f"stationary g did not converge in {max_sweeps} sweeps (last change {change:.3g})")


def solve_threshold(model, method="auto"):
    """Dispatch to a threshold solver; 'auto' picks by regime and records why."""
    if method == "auto":
        if model.rho == 0.0:
            method, reason = "discrete", "rho = 0: white-noise predictor"
        elif model.beta >= 10.0 * model.gamma:
            method, reason = "discrete", "beta >= 10 gamma"
        elif model.beta <= 0.1 * model.gamma:
            method, reason = "continuous", "beta <= gamma/10"
        else:
            method, reason = "grid", "beta comparable to gamma"
    else:
        reason = "requested"
    if method == "discrete":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            sol = threshold_discrete(model)
    elif method == "continuous":
        sol = threshold_continuous(model)
    elif method == "grid":
        sol = stationary_g_solve(model)[2]
    elif method == "naive":
        sol = naive_threshold(model)
    else:
        raise DomainError(f"unknown method {method!r}")
    diagnostics = dict(sol.diagnostics)
    diagnostics.setdefault("iterations", 0)
    diagnostics.setdefault("residual", 0.0)
    diagnostics["method"] = method
    diagnostics["reason"] = reason
    return ThresholdSolution(sol.q_star, sol.regime, sol.eta, diagnostics)


# ---------------------------------------------------------------- continuum closed forms


def _band_ratio(model, q, p):
    if q <= 0:
        raise DomainError(f"q must be > 0, got {q}")
    p = np.asarray(p, dtype=float)
    if np.any(np.abs(p) > q * (1.0 + 1e-12)):
        raise DomainError("p must lie in [-q, q]")
    root_a = math.sqrt(model.epsilon) / model.beta
    return exp_integral_ratio(np.clip(p, -q, q) * root_a, q * root_a)


def closed_form_G(model, q, p):
    """Mean accumulated predictor until |p| leaves [-q, q]: (p - q I(p sqrt a)/I(q sqrt a))/eps."""
    ratio = _band_ratio(model, q, p)
    out = (np.asarray(p, dtype=float) - q * ratio) / model.epsilon
    return out if np.ndim(out) else float(out)


def closed_form_Pminus(model, q, p):
    """Probability of leaving [-q, q] through -q: (1 - I(p sqrt a)/I(q sqrt a))/2."""
    out = 0.5 * (1.0 - _band_ratio(model, q, p))
    return out if np.ndim(out) else float(out)


def path_integral_residual(model, q, delta):
    """G(q - delta) - 2 Gamma P_-(q - delta); its sign says whether q is too wide or too narrow."""
    if not 0 < delta < q / 10.0:
        raise DomainError("delta must lie in (0, q/10)")
    p = q - delta
    return closed_form_G(model, q, p) - 2.0 * model.gamma * closed_form_Pminus(model, q, p)


# ---------------------------------------------------------------- P&L


def pnl_paths(model, q_list, cfg):
    """Per-path average gain per step for every threshold, all on the same predictor paths.

    Gain at t is pi_t p_t - Gamma |pi_t - pi_{t-1}|, with pi_{-1} = 0 and p_0 drawn
    from the stationary law. Using p_t instead of a noisy realized return
    leaves the mean unchanged and only removes variance.
    """
    thresholds = np.asarray(q_list, dtype=float)
    if thresholds.size == 0 or np.any(thresholds <= 0):
        raise DomainError("thresholds must be a nonempty list of positive reals")
    k0, k1 = cfg.key
    with worker_threads(cfg.n_workers):
        return _kernels.pnl_paths(
            k0, k1, cfg.n_paths, cfg.n_steps, model.rho, model.beta, model.sigma_p, model.gamma, model.m_cap, thresholds
        )


def pnl_simulate(model, q, cfg):
    """Average gain per step of the threshold-q strategy."""
    return McEstimate.from_samples(pnl_paths(model, [q], cfg)[:, 0])
