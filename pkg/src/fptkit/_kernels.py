"""Numba path kernels. Path j always draws from stream j, so output is independent of threading."""

import math

import numba as nb
import numpy as np

from .rng import fill_normals, fill_uniforms

BUFFER = 1024


@nb.njit(parallel=True, cache=True)
def pnl_paths(k0, k1, n_paths, n_steps, rho, beta, sigma_p, gamma, m_cap, thresholds):
    n_q = thresholds.size
    out = np.empty((n_paths, n_q))
    for j in nb.prange(n_paths):
        buf = np.empty(BUFFER)
        fill_normals(k0, k1, j, 0, buf)
        used = 1
        drawn = BUFFER
        p = sigma_p * buf[0]
        position = np.zeros(n_q)
        gain = np.zeros(n_q)
        for _ in range(n_steps):
            for i in range(n_q):
                new = position[i]
                if abs(p) >= thresholds[i]:
                    new = m_cap if p > 0 else -m_cap
                gain[i] += new * p - gamma * abs(new - position[i])
                position[i] = new
            if used == BUFFER:
                fill_normals(k0, k1, j, drawn, buf)
                drawn += BUFFER
                used = 0
            p = rho * p + beta * buf[used]
            used += 1
        for i in range(n_q):
            out[j, i] = gain[i] / n_steps
    return out


@nb.njit(parallel=True, cache=True)
def drifted_bm_paths(k0, k1, n_paths, n_steps, mu, sigma, T, record_idx, bridge_max):
    """x_t = mu t + sigma B_t on a grid of n_steps intervals.

    Returns the running max, the argmax time, and x at the requested grid
    indices. With bridge_max the max inside each interval is drawn exactly
    from the Brownian-bridge law; otherwise it is the max over grid points.
    """
    dt = T / n_steps
    drift = mu * dt
    scale = sigma * math.sqrt(dt)
    n_rec = record_idx.size
    maxima = np.empty(n_paths)
    argmax_t = np.empty(n_paths)
    recorded = np.empty((n_paths, n_rec))
    for j in nb.prange(n_paths):
        zbuf = np.empty(BUFFER)
        ubuf = np.empty(BUFFER)
        used = BUFFER
        drawn = 0
        uused = BUFFER
        udrawn = 0
        x = 0.0
        best = 0.0
        best_t = 0.0
        r = 0
        while r < n_rec and record_idx[r] == 0:
            recorded[j, r] = 0.0
            r += 1
        for i in range(n_steps):
            if used == BUFFER:
                fill_normals(k0, k1, j, drawn, zbuf)
                drawn += BUFFER
                used = 0
            x_new = x + drift + scale * zbuf[used]
            used += 1
            if bridge_max:
                if uused == BUFFER:
                    fill_uniforms(k0, k1, j, udrawn, ubuf)
                    udrawn += BUFFER
                    uused = 0
                u = ubuf[uused]
                uused += 1
                d = x_new - x
                peak = 0.5 * (x + x_new + math.sqrt(d * d - 2.0 * sigma * sigma * dt * math.log(u)))
                if peak > best:
                    best = peak
                    best_t = (i + 0.5) * dt
            elif x_new > best:
                best = x_new
                best_t = (i + 1) * dt
            x = x_new
            while r < n_rec and record_idx[r] == i + 1:
                recorded[j, r] = x
                r += 1
        maxima[j] = best
        argmax_t[j] = best_t
    return maxima, argmax_t, recorded


@nb.njit(parallel=True, cache=True)
def ar1_exit(k0, k1, n_paths, max_steps, rho, beta, p0, q):
    """Literal AR(1) steps until |p| >= q. side: +1 above, -1 below, 0 capped."""
    side = np.zeros(n_paths, dtype=np.int8)
    accumulated = np.empty(n_paths)
    for j in nb.prange(n_paths):
        buf = np.empty(BUFFER)
        used = BUFFER
        drawn = 0
        p = p0
        total = 0.0
        s = 0
        for _ in range(max_steps):
            total += p
            if used == BUFFER:
                fill_normals(k0, k1, j, drawn, buf)
                drawn += BUFFER
                used = 0
            p = rho * p + beta * buf[used]
            used += 1
            if p >= q:
                s = 1
                break
            if p <= -q:
                s = -1
                break
        side[j] = s
        accumulated[j] = total
    return side, accumulated


@nb.njit(parallel=True, cache=True)
def ou_band_exit(k0, k1, n_paths, max_time, epsilon, beta, p0, q, kappa, dt_max, d_min):
    """Continuum limit of the AR(1) predictor: dp = -eps p dt + beta dW, time unit = one AR step.

    Exact OU transitions on an adaptive step dt = min(dt_max, (kappa d/beta)^2)
    where d is the distance to the nearer wall, a Brownian-bridge test for
    crossings inside a step, trapezoid accumulation of the integral of p, and
    exit declared once d < d_min.
    """
    side = np.zeros(n_paths, dtype=np.int8)
    accumulated = np.empty(n_paths)
    for j in nb.prange(n_paths):
        zbuf = np.empty(BUFFER)
        ubuf = np.empty(BUFFER)
        used = BUFFER
        drawn = 0
        uused = BUFFER
        udrawn = 0
        p = p0
        t = 0.0
        total = 0.0
        s = 0
        while t < max_time:
            d_up = q - p
            d_down = q + p
            d = min(d_up, d_down)
            if d < d_min:
                s = 1 if d_up <= d_down else -1
                break
            dt = min(dt_max, (kappa * d / beta) ** 2, max_time - t)
            if epsilon > 0.0:
                decay = math.exp(-epsilon * dt)
                sd = beta * math.sqrt(-math.expm1(-2.0 * epsilon * dt) / (2.0 * epsilon))
            else:
                decay = 1.0
                sd = beta * math.sqrt(dt)
            if used == BUFFER:
                fill_normals(k0, k1, j, drawn, zbuf)
                drawn += BUFFER
                used = 0
            if uused == BUFFER:
                fill_uniforms(k0, k1, j, udrawn, ubuf)
                udrawn += BUFFER
                uused = 0
            p_new = decay * p + sd * zbuf[used]
            used += 1
            u = ubuf[uused]
            uused += 1
            if p_new >= q:
                total += 0.5 * p * dt
                s = 1
                break
            if p_new <= -q:
                total += 0.5 * p * dt
                s = -1
                break
            var = beta * beta * dt
            cross_up = math.exp(-2.0 * (q - p) * (q - p_new) / var)
            cross_down = math.exp(-2.0 * (q + p) * (q + p_new) / var)
            if u < cross_up:
                total += 0.5 * p * dt
                s = 1
                break
            if u < cross_up + cross_down:
                total += 0.5 * p * dt
                s = -1
                break
            total += 0.5 * (p + p_new) * dt
            p = p_new
            t += dt
        side[j] = s
        accumulated[j] = total
    return side, accumulated


@nb.njit(parallel=True, cache=True)
def ou_band_survival(k0, k1, n_paths, horizon, k, dt):
    """Stationary OU process dz = -z dt + sqrt(2) dW started from N(0,1): does it stay in (-k, k)?

    Bridge-corrected crossing test between grid points. This is the limit
    process of the weighted empirical bridge in the time variable ln(u/(1-u))/2,
    over which the window [1/(N+1), N/(N+1)] spans a horizon ln N.
    """
    alive = np.zeros(n_paths, dtype=np.int8)
    n_steps = int(math.ceil(horizon / dt))
    step = horizon / max(n_steps, 1)
    decay = math.exp(-step)
    sd = math.sqrt(-math.expm1(-2.0 * step))
    for j in nb.prange(n_paths):
        zbuf = np.empty(BUFFER)
        ubuf = np.empty(BUFFER)
        fill_normals(k0, k1, j, 0, zbuf)
        fill_uniforms(k0, k1, j, 0, ubuf)
        used = 1
        drawn = BUFFER
        uused = 0
        udrawn = BUFFER
        z = zbuf[0]
        ok = abs(z) < k
        for _ in range(n_steps):
            if not ok:
                break
            if used == BUFFER:
                fill_normals(k0, k1, j, drawn, zbuf)
                drawn += BUFFER
                used = 0
            if uused == BUFFER:
                fill_uniforms(k0, k1, j, udrawn, ubuf)
                udrawn += BUFFER
                uused = 0
            z_new = decay * z + sd * zbuf[used]
            used += 1
            u = ubuf[uused]
            uused += 1
            if abs(z_new) >= k:
                ok = False
                break
            cross = math.exp(-(k - z) * (k - z_new) / step) + math.exp(-(k + z) * (k + z_new) / step)
            if u < cross:
                ok = False
                break
            z = z_new
        alive[j] = 1 if ok else 0
    return alive
