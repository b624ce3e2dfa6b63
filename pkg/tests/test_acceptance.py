"""Acceptance criteria 1-15, each at its stated tolerance.

Every test carries a criterion marker; conftest prints one PASS/FAIL line per
criterion at the end of the run. Nothing here is relaxed to make it pass.
"""

import math

import numpy as np
import pytest

from fptkit import cli, gof, sell
from fptkit import simulate as sim
from fptkit import trading as tr
from fptkit.rng import McConfig

SEED = 12345


@pytest.fixture
def note(request):
    def add(text):
        request.node.user_properties.append(("detail", text))

    return add


def zscores(estimate, reference, std_error):
    std_error = np.asarray(std_error, dtype=float)
    return np.abs(np.asarray(estimate) - reference) / np.where(std_error > 0, std_error, np.nan)


@pytest.mark.criterion(1, "classical KS 95% point 1.358 +- 0.001")
def test_classical_ks_point(note):
    k = gof.ks_classical_critical_value(0.95)
    note(f"k*={k:.6f}")
    assert abs(k - 1.358) <= 0.001


@pytest.mark.criterion(2, "classical KS series forms agree to 1e-10 on [0.3, 5]")
def test_classical_series_equivalence(note):
    ks = np.linspace(0.3, 5.0, 100)
    gap = max(abs(gof.ks_classical_cdf(k) - gof.ks_classical_cdf_spectral(k)) for k in ks)
    note(f"max gap {gap:.2e}")
    assert gap < 1e-10


@pytest.mark.criterion(3, "weighted critical values 3.439/3.529/3.597/3.651 +- 0.01")
def test_weighted_critical_values(note):
    expected = {10**3: 3.439, 10**4: 3.529, 10**5: 3.597, 10**6: 3.651}
    got = {n: gof.critical_value(n, 0.95) for n in expected}
    note(", ".join(f"N={n:.0e}: {got[n]:.4f} vs {expected[n]}" for n in expected))
    assert all(abs(got[n] - expected[n]) <= 0.01 for n in expected)


@pytest.mark.criterion(4, "theta0 and A-tilde asymptotes")
def test_asymptotes(note):
    small = gof.theta0(0.1)
    small_ref = math.pi**2 / (4 * 0.1**2) - 0.5
    large = gof.theta0(5.0)
    large_ref = math.sqrt(2 / math.pi) * 5.0 * math.exp(-12.5)
    a_small = gof.eigen_solution(0.05).a_tilde
    a_small_ref = 16 * 0.05 / (math.pi**2 * math.sqrt(2 * math.pi))
    a_large = gof.eigen_solution(6.0).a_tilde
    rel = [abs(small / small_ref - 1), abs(large / large_ref - 1), abs(a_small / a_small_ref - 1)]
    note(f"theta0 rel {rel[0]:.1e}/{rel[1]:.1e}, A rel {rel[2]:.1e}, |A(6)-1| {abs(a_large - 1):.1e}")
    assert rel[0] <= 0.01 and rel[1] <= 0.05 and rel[2] <= 0.02 and abs(a_large - 1) <= 1e-6


@pytest.mark.criterion(5, "gap theta1 - theta0 > 1 on [0.05, 10]")
def test_gap(note):
    # theta1 - theta0 - 1 reaches 1e-20 near k = 10, below the spacing of doubles at 1,
    # so the excess is taken from theta1 - 1 directly
    solutions = [gof.eigen_solution(k) for k in np.linspace(0.05, 10.0, 50)]
    excess = [sol.gap_excess for sol in solutions]
    note(f"min gap {min(sol.gap for sol in solutions):.6f}, min excess over 1 {min(excess):.2e}")
    assert min(excess) > 0.0


@pytest.mark.slow
@pytest.mark.criterion(6, "Monte Carlo law agreement at N=1e4 within 3 std_error")
def test_monte_carlo_law(note):
    n, ks = 10_000, [2.0, 2.5, 3.0, 3.5]
    rows = sim.mc_weighted_ks_statistic_cdf(n, ks, McConfig(10_000, 1, seed=SEED, n_workers=4))
    z = [abs(p - gof.test_law_S(n, k)) / se for k, p, se in rows]
    note(", ".join(f"k={k}: {p:.4f} vs {gof.test_law_S(n, k):.4f} ({zi:.1f} se)" for (k, p, _), zi in zip(rows, z)))
    assert max(z) <= 3.0


@pytest.mark.slow
@pytest.mark.criterion(7, "arcsine law: closed form to 1e-10, Monte Carlo within 3 sigma")
def test_arcsine(note):
    model = sell.SellModel(0.0, 1.0, 1.0)
    taus = np.linspace(0.001, 0.999, 999)
    exact = 1.0 / (math.pi * np.sqrt(taus * (1.0 - taus)))
    worst = float(np.max(np.abs(sell.occurrence_density(model, taus) / exact - 1.0)))
    hist = sim.mc_argmax_time_density(model, McConfig(100_000, 1000, seed=SEED, n_workers=4), bins=20)
    theory = sell.occurrence_bin_masses(model, hist.edges) / hist.widths
    z = zscores(hist.density, theory, hist.std_error)[1:-1]
    note(f"closed form rel {worst:.1e}; interior bins max {np.nanmax(z):.2f} se")
    assert worst <= 1e-10 and np.all(z <= 3.0)


@pytest.mark.criterion(8, "optimal sell time T for mu>0, 0 for mu<0; argmax agrees")
def test_sell_decision(note):
    got = {}
    for sigma in (0.1, 0.5):
        for mu, expected in ((0.1, 1.0), (-0.1, 0.0)):
            model = sell.SellModel(mu, sigma, 1.0)
            got[(mu, sigma)] = (sell.optimal_tau(model).tau, sell.occurrence_argmax(model).tau, expected)
    note(", ".join(f"mu={mu},sigma={s}: tau*={a}, tau_m={b}" for (mu, s), (a, b, _) in got.items()))
    assert all(a == e and b == e for a, b, e in got.values())


@pytest.mark.slow
@pytest.mark.criterion(9, "spread density vs Monte Carlo per bin within 3 std_error")
def test_spread_density(note):
    # the max over [0, T] includes the within-step bridge maximum; bins span the simulated range
    model, tau = sell.SellModel(0.05, 0.3, 1.0), 0.3
    density = sell.spread_density(model, tau)
    hist, _ = sim.mc_gbm_spread(model, tau, McConfig(100_000, 10_000, seed=SEED, n_workers=4), bins=40, exact_max=True)
    theory = density.bin_masses(hist.edges) / hist.widths
    z = zscores(hist.density, theory, hist.std_error)
    filled = hist.counts > 0
    note(f"max {np.nanmax(z):.2f} se over {int(filled.sum())} filled bins, {int((~filled).sum())} empty")
    assert np.all(filled) and np.all(z <= 3.0)


@pytest.mark.criterion(10, "threshold limits at eta=1e2 and 1e-4; white noise gives Gamma")
def test_threshold_limits(note):
    eps, gamma = 0.1, 1.0
    large = tr.PredictorModel.from_epsilon(eps, gamma * eps**1.5 / 1e2, gamma)
    q_large = tr.threshold_continuous(large).q_star
    eps, gamma = 1e-3, 0.1
    small = tr.PredictorModel.from_epsilon(eps, gamma * eps**1.5 / 1e-4, gamma)
    q_small = tr.threshold_continuous(small).q_star
    small_ref = (1.5 * gamma * small.beta**2) ** (1 / 3)
    white = tr.PredictorModel(0.0, 0.3, 1.0)
    grid, _, sol = tr.stationary_g_solve(white)
    h = grid[1] - grid[0]
    rel_large, rel_small = abs(q_large / (large.gamma * large.epsilon) - 1), abs(q_small / small_ref - 1)
    note(f"eta=1e2 rel {rel_large:.1e}, eta=1e-4 rel {rel_small:.1e}, white noise q={sol.q_star:.6f} (h={h:.3g})")
    assert rel_large <= 0.02 and rel_small <= 0.02 and abs(sol.q_star - white.gamma) <= h


@pytest.mark.criterion(11, "stationary grid, Bellman and continuum thresholds within 5% at (0.99, 0.01, 1)")
def test_consistency_triangle(note):
    model = tr.PredictorModel(0.99, 0.01, 1.0)
    stationary = tr.stationary_g_solve(model)[2].q_star
    bellman = tr.bellman_solve(model, int(20 / model.epsilon))
    continuous = tr.threshold_continuous(model).q_star
    values = {"stationary": stationary, "bellman": bellman.converged_q, "continuous": continuous}
    gaps = {(a, b): abs(values[a] / values[b] - 1) for a in values for b in values if a < b}
    note(", ".join(f"{k}={v:.6f}" for k, v in values.items()) + f"; bellman still moving {bellman.q_change():.1e}")
    assert all(g <= 0.05 for g in gaps.values())


@pytest.mark.criterion(12, "backward equations to 1e-4 at 20 interior points; exact boundary values")
def test_backward_equations(note):
    model = tr.PredictorModel(0.99, 0.01, 1.0)
    q = tr.threshold_continuous(model).q_star
    h = 1e-3 * q
    worst = 0.0
    for fn, source in (
        (lambda p: tr.closed_form_G(model, q, p), lambda p: p),
        (lambda p: tr.closed_form_Pminus(model, q, p), lambda p: 0.0),
    ):
        for p in np.linspace(-q, q, 22)[1:-1]:
            second = (fn(p + h) - 2 * fn(p) + fn(p - h)) / h**2
            first = (fn(p + h) - fn(p - h)) / (2 * h)
            terms = (0.5 * model.beta**2 * second, -model.epsilon * p * first, source(p))
            worst = max(worst, abs(sum(terms)) / sum(abs(t) for t in terms))
    edges = (tr.closed_form_G(model, q, q), tr.closed_form_G(model, q, -q), tr.closed_form_Pminus(model, q, q), tr.closed_form_Pminus(model, q, -q))
    note(f"max relative residual {worst:.1e}; boundaries {edges}")
    assert worst <= 1e-4 and edges == (0.0, 0.0, 0.0, 1.0)


@pytest.mark.slow
@pytest.mark.criterion(13, "exit statistics and path-integral ratio at p0 = q* - 1e-3 q*")
def test_exit_oracle(note):
    model = tr.PredictorModel(0.999, 0.01, 1.0)
    q = tr.threshold_continuous(model).q_star
    p0 = q - 1e-3 * q
    cfg = McConfig(400_000, sim.default_exit_steps(model), seed=SEED, n_workers=4)
    summary, ratio = sim.mc_exit_statistics(model, p0, q, cfg, mode="diffusion")
    z_g = abs(summary.mean_accumulated - tr.closed_form_G(model, q, p0)) / summary.accumulated_std_error
    z_p = abs(summary.exit_below_fraction - tr.closed_form_Pminus(model, q, p0)) / summary.exit_below.std_error
    z_r = abs(ratio.mean - 1.0) / ratio.std_error
    note(f"G {z_g:.2f} se, P_- {z_p:.2f} se, ratio {ratio.mean:.3f} +- {ratio.std_error:.3f}")
    assert z_g <= 3 and z_p <= 3 and z_r <= 3


@pytest.mark.slow
@pytest.mark.criterion(14, "P&L of q* beats naive at 3 sigma, 1e3 paths of 1e5 steps")
def test_pnl_dominance(note):
    model = tr.PredictorModel(0.99, 0.01, 1.0)
    thresholds = [tr.threshold_continuous(model).q_star, tr.naive_threshold(model).q_star]
    gains = tr.pnl_paths(model, thresholds, McConfig(1000, 100_000, seed=SEED, n_workers=4))
    diff = gains[:, 0] - gains[:, 1]
    se = diff.std(ddof=1) / math.sqrt(diff.size)
    note(f"difference {diff.mean():.4e} +- {se:.1e} ({diff.mean() / se:.1f} sigma)")
    assert diff.mean() > 3 * se


REPLAY_COMMANDS = [
    ["ks-law", "--n", "1000", "100000", "--points", "5", "--classical"],
    ["sell", "--sigma", "0.3", "--mu", "0.05", "--tau-points", "5", "--grid-size", "11", "--mc", "--paths", "2000", "--steps", "200"],
    ["threshold", "--rho", "0.9", "--beta", "0.5", "--gamma", "0.1", "--method", "grid"],
    ["pnl", "--rho", "0.99", "--beta", "0.01", "--gamma", "1", "--q", "star", "naive", "--paths", "50", "--steps", "2000"],
    ["simulate", "ks-cdf", "--n", "200", "--paths", "500"],
    ["simulate", "ou-survival", "--n", "1000", "--paths", "500"],
    ["simulate", "spread", "--sigma", "0.3", "--tau", "0.3", "--paths", "2000", "--steps", "200", "--exact-max"],
    ["simulate", "argmax", "--mu", "0.05", "--sigma", "0.3", "--paths", "2000", "--steps", "200"],
    ["simulate", "exit", "--rho", "0.999", "--beta", "0.01", "--gamma", "1", "--p0", "0.01", "--paths", "2000"],
    ["simulate", "exit", "--rho", "0.99", "--beta", "0.01", "--gamma", "1", "--p0", "0.01", "--mode", "ar1", "--paths", "2000"],
]


@pytest.mark.criterion(15, "every CLI command replays byte-identically with 1 and 4 workers")
def test_replay_determinism(note, tmp_path, capsys):
    data = tmp_path / "sample.txt"
    data.write_text("\n".join(repr(float(v)) for v in np.random.default_rng(SEED).standard_normal(500)) + "\n")
    commands = REPLAY_COMMANDS + [["ks-test", "--data", str(data), "--null", "normal(mu=0, sigma=1)"]]
    mismatched = []
    for i, argv in enumerate(commands):
        for as_json in (False, True):
            stem = tmp_path / f"run{i}{'j' if as_json else 't'}"
            original = f"{stem}.out"
            extra = ["--json"] if as_json else []
            assert cli.main(argv + extra + ["--seed", str(SEED), "--workers", "1", "--output", original]) == 0, argv
            for workers in ("1", "4"):
                replayed = f"{stem}.w{workers}"
                assert cli.main(["replay", original, "--workers", workers, "--output", replayed]) == 0, argv
                if open(original, "rb").read() != open(replayed, "rb").read():
                    mismatched.append(" ".join(argv[:2]) + f" workers={workers} json={as_json}")
    capsys.readouterr()
    note(f"{len(commands) * 2} outputs replayed twice; mismatches: {mismatched or 'none'}")
    assert not mismatched

