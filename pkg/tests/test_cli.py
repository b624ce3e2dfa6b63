import json
import math

import jsonschema
import numpy as np
import pytest
from scipy import stats

from fptkit import cli, trading
from fptkit.errors import NonConvergence

FAST = {
    "ks-law": ["ks-law", "--n", "1000", "10000", "--points", "4"],
    "sell": ["sell", "--sigma", "0.3", "--mu", "0.1", "--tau-points", "5", "--grid-size", "11", "--mc", "--paths", "500", "--steps", "50"],
    "threshold": ["threshold", "--rho", "0.9", "--beta", "0.5", "--gamma", "0.1"],
    "pnl": ["pnl", "--rho", "0.99", "--beta", "0.01", "--gamma", "1", "--q", "star", "naive", "0.05", "--paths", "20", "--steps", "500"],
    "simulate ks-cdf": ["simulate", "ks-cdf", "--n", "100", "--paths", "200"],
    "simulate ou-survival": ["simulate", "ou-survival", "--n", "100", "--paths", "200"],
    "simulate spread": ["simulate", "spread", "--sigma", "0.3", "--tau", "0.3", "--paths", "500", "--steps", "50", "--bins", "8"],
    "simulate argmax": ["simulate", "argmax", "--sigma", "0.3", "--paths", "500", "--steps", "50", "--bins", "8"],
    "simulate exit": ["simulate", "exit", "--rho", "0.99", "--beta", "0.01", "--gamma", "1", "--p0", "0.02", "--paths", "500"],
}


@pytest.fixture
def uniform_file(tmp_path):
    path = tmp_path / "uniform.txt"
    values = np.random.default_rng(3).uniform(size=200)
    path.write_text("# two hundred uniforms\n" + "\n".join(repr(float(v)) for v in values) + "\n")
    return path


def run(capsys, argv):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def run_json(capsys, argv):
    code, out, err = run(capsys, argv + ["--json"])
    assert code == 0, err
    return json.loads(out)


def parse_tsv(text):
    lines = text.splitlines()
    header = [line for line in lines if line.startswith("# ") and "\t" in line][-1]
    columns = header[2:].split("\t")
    rows = [[float(v) if v not in ("true", "false") else v == "true" for v in line.split("\t")] for line in lines if not line.startswith("#")]
    return columns, np.array(rows, dtype=float)


def summary_of(text):
    for line in text.splitlines():
        if line.startswith("# summary: "):
            return json.loads(line[len("# summary: ") :])
    return {}


class TestSchemas:
    @pytest.mark.parametrize("command", sorted(FAST))
    def test_json_output_validates(self, capsys, command):
        doc = run_json(capsys, FAST[command])
        jsonschema.validate(doc, cli.schema_for(command))
        jsonschema.validate(doc["manifest"], cli.schema_for("manifest"))
        assert doc["manifest"]["command"] == command

    def test_ks_test_validates(self, capsys, uniform_file):
        doc = run_json(capsys, ["ks-test", "--data", str(uniform_file)])
        jsonschema.validate(doc, cli.schema_for("ks-test"))
        assert doc["result"]["n"] == 200

    def test_schemas_are_valid(self):
        for name in ("manifest", "ks-law", "ks-test", "threshold", "simulate exit"):
            jsonschema.Draft202012Validator.check_schema(cli.schema_for(name))


class TestExitCodes:
    def test_empty_file(self, capsys, tmp_path):
        path = tmp_path / "empty.txt"
        path.write_text("")
        code, _, err = run(capsys, ["ks-test", "--data", str(path)])
        assert code == 2 and "error" in err

    def test_missing_file(self, capsys, tmp_path):
        assert run(capsys, ["ks-test", "--data", str(tmp_path / "nope.txt")])[0] == 2

    def test_degenerate_sample(self, capsys, tmp_path):
        path = tmp_path / "constant.txt"
        path.write_text("0.5\n" * 20)
        assert run(capsys, ["ks-test", "--data", str(path)])[0] == 3

    @pytest.mark.parametrize("argv", [["sell", "--sigma", "-1"], ["sell", "--sigma", "0.3", "--T", "0"], ["sell"], ["threshold", "--beta", "0.1", "--gamma", "1"]])
    def test_invalid_parameters(self, capsys, argv):
        code, _, err = run(capsys, argv)
        assert code == 2 and err

    def test_unknown_command_and_bad_choice(self, capsys):
        assert run(capsys, ["frobnicate"])[0] == 2
        assert run(capsys, ["threshold", "--rho", "0.5", "--beta", "0.1", "--gamma", "1", "--method", "magic"])[0] == 2

    def test_non_convergence(self, capsys, monkeypatch):
        def stuck(*args, **kwargs):
            raise NonConvergence("stationary g did not converge")

        monkeypatch.setattr(trading, "stationary_g_solve", stuck)
        code, _, err = run(capsys, ["threshold", "--rho", "0.9", "--beta", "0.5", "--gamma", "0.1", "--method", "grid"])
        assert code == 4 and "converge" in err


class TestReplay:
    @pytest.mark.parametrize("command", sorted(FAST))
    def test_byte_identical_across_workers(self, capsys, tmp_path, command):
        first = tmp_path / "first.tsv"
        assert cli.main(FAST[command] + ["--seed", "7", "--workers", "1", "--output", str(first)]) == 0
        again = tmp_path / "again.tsv"
        assert cli.main(["replay", str(first), "--workers", "4", "--output", str(again)]) == 0
        assert first.read_bytes() == again.read_bytes()
        sidecar = json.loads((tmp_path / "first.tsv.run.json").read_text())
        assert sidecar["wall_time_s"] >= 0 and sidecar["seed"] == 7
        capsys.readouterr()

    def test_json_replay(self, capsys, tmp_path):
        first = tmp_path / "first.json"
        assert cli.main(FAST["simulate spread"] + ["--json", "--output", str(first)]) == 0
        again = tmp_path / "again.json"
        assert cli.main(["replay", str(first), "--workers", "4", "--output", str(again)]) == 0
        assert first.read_bytes() == again.read_bytes()

    def test_replay_without_manifest(self, capsys, tmp_path):
        path = tmp_path / "plain.txt"
        path.write_text("1\n2\n")
        assert run(capsys, ["replay", str(path)])[0] == 2


class TestConfig:
    def test_precedence(self, capsys, tmp_path):
        config = tmp_path / "run.cfg"
        config.write_text("# defaults\nrho = 0.5\nbeta: 0.1\ngamma = 2\nseed = 11\n")
        doc = run_json(capsys, ["threshold", "--config", str(config), "--gamma", "1"])
        assert doc["result"]["model"]["gamma"] == 1.0
        assert doc["result"]["model"]["rho"] == 0.5
        assert doc["manifest"]["seed"] == 11

    def test_unknown_key(self, capsys, tmp_path):
        config = tmp_path / "run.cfg"
        config.write_text("rho = 0.5\ncolour = blue\n")
        assert run(capsys, ["threshold", "--config", str(config), "--beta", "0.1", "--gamma", "1"])[0] == 2

    def test_globals_before_or_after_command(self, capsys):
        before = run_json(capsys, ["--seed", "5"] + FAST["simulate ks-cdf"])
        after = run_json(capsys, FAST["simulate ks-cdf"] + ["--seed", "5"])
        assert before == after


class TestKsLaw:
    def test_single_point(self, capsys):
        code, out, _ = run(capsys, ["ks-law", "--points", "1", "--k-min", "3"])
        columns, rows = parse_tsv(out)
        assert code == 0 and rows.shape[0] == 1 and rows[0, 0] == 3.0

    def test_curves_shift_right_with_n(self, capsys):
        code, out, _ = run(capsys, ["ks-law", "--n", "1000", "10000", "100000", "1000000", "--k-min", "2.5", "--k-max", "4.5", "--points", "9"])
        columns, rows = parse_tsv(out)
        curves = [rows[:, columns.index(f"S_N{n}")] for n in (1000, 10000, 100000, 1000000)]
        for lower, higher in zip(curves, curves[1:]):
            assert np.all(higher <= lower)
        crit = summary_of(out)["critical_value_95"]
        values = [crit[str(n)] for n in (1000, 10000, 100000, 1000000)]
        assert values == sorted(values)

    def test_classical_column(self, capsys):
        code, out, _ = run(capsys, ["ks-law", "--classical", "--points", "3"])
        columns, rows = parse_tsv(out)
        assert "ks_classical" in columns
        assert summary_of(out)["classical_k95"] == pytest.approx(1.358, abs=1e-3)
        np.testing.assert_allclose(rows[:, -1], stats.kstwobign.cdf(rows[:, 0]), rtol=1e-10)

    def test_twelve_significant_digits(self, capsys):
        _, out, _ = run(capsys, ["ks-law", "--points", "2", "--k-min", "1.0", "--k-max", "2.0"])
        for line in out.splitlines():
            if not line.startswith("#"):
                assert all(v == "%.12g" % float(v) for v in line.split("\t"))


class TestKsTest:
    def test_perfect_fit_against_quantile_table(self, capsys, tmp_path):
        # data at the midpoint quantiles (i - 1/2)/N of a table whose nodes are the data;
        # the weight leaves only the edge jump at u = 1.5/N, worth 1/(2 sqrt(1.5 (1 - 1.5/N)))
        n = 50
        u = (np.arange(1, n + 1) - 0.5) / n
        x = stats.norm.ppf(u)
        data = tmp_path / "data.txt"
        data.write_text("\n".join(repr(float(v)) for v in x))
        table = tmp_path / "table.txt"
        table.write_text("\n".join(f"{float(a)!r} {float(b)!r}" for a, b in zip(x, u)))
        doc = run_json(capsys, ["ks-test", "--data", str(data), "--null", f"@{table}"])
        floor = 0.5 / math.sqrt(1.5 * (1 - 1.5 / n))
        assert doc["result"]["statistic_k"] == pytest.approx(floor, rel=1e-9)
        assert doc["result"]["statistic_k"] < 0.2 * doc["result"]["critical_value_95"]
        assert doc["result"]["reject_at_95"] is False

    def test_named_null(self, capsys, uniform_file):
        doc = run_json(capsys, ["ks-test", "--data", str(uniform_file), "--null", "uniform(a=0, b=1)"])
        default = run_json(capsys, ["ks-test", "--data", str(uniform_file)])
        assert doc["result"] == default["result"]

    def test_bad_null_spec(self, capsys, uniform_file):
        assert run(capsys, ["ks-test", "--data", str(uniform_file), "--null", "cauchy(x0=0)"])[0] == 2


class TestSell:
    @pytest.mark.parametrize("mu,expected", [(0.1, 1.0), (-0.1, 0.0)])
    def test_tau_star(self, capsys, mu, expected):
        _, out, _ = run(capsys, ["sell", "--sigma", "0.3", "--mu", str(mu), "--tau-points", "5", "--grid-size", "11"])
        summary = summary_of(out)
        assert summary["tau_star"] == expected and summary["tau_m"] == expected

    def test_driftless_arcsine_column(self, capsys):
        _, out, _ = run(capsys, ["sell", "--sigma", "0.3", "--tau-points", "11", "--grid-size", "11"])
        columns, rows = parse_tsv(out)
        interior = rows[1:-1]
        tau = interior[:, 0]
        np.testing.assert_allclose(interior[:, columns.index("arcsine")], 1 / (math.pi * np.sqrt(tau * (1 - tau))), rtol=1e-11)
        np.testing.assert_allclose(interior[:, columns.index("occurrence_density")], interior[:, columns.index("arcsine")], rtol=1e-6)
        assert summary_of(out)["tau_star_degenerate"] is True


class TestThreshold:
    @pytest.mark.parametrize("method", ["auto", "discrete", "continuous", "grid", "naive"])
    def test_white_noise(self, capsys, method):
        doc = run_json(capsys, ["threshold", "--rho", "0", "--beta", "0.3", "--gamma", "1", "--method", method])
        assert doc["result"]["solution"]["q_star"] == pytest.approx(1.0, abs=0.3 / 4)
        assert "eta" in doc["result"]["solution"] and "eta" in doc["result"]["model"]

    def test_grid_and_continuous_agree_deep_in_continuum(self, capsys):
        base = ["threshold", "--rho", "0.999", "--beta", "0.001", "--gamma", "1", "--method"]
        grid = run_json(capsys, base + ["grid"])["result"]["solution"]["q_star"]
        cont = run_json(capsys, base + ["continuous"])["result"]["solution"]["q_star"]
        assert grid == pytest.approx(cont, rel=0.05)

    def test_epsilon_form(self, capsys):
        by_eps = run_json(capsys, ["threshold", "--epsilon", "0.1", "--beta", "0.5", "--gamma", "0.1"])
        by_rho = run_json(capsys, ["threshold", "--rho", "0.9", "--beta", "0.5", "--gamma", "0.1"])
        assert by_eps["result"]["solution"]["q_star"] == pytest.approx(by_rho["result"]["solution"]["q_star"], rel=1e-9)
        assert run(capsys, ["threshold", "--rho", "0.9", "--epsilon", "0.1", "--beta", "0.5", "--gamma", "0.1"])[0] == 2


class TestPnl:
    def test_duplicates_identical_and_costless_ordering(self, capsys):
        _, out, _ = run(capsys, ["pnl", "--rho", "0.9", "--beta", "0.1", "--gamma", "0", "--q", "0.01", "0.01", "0.2", "0.5", "--paths", "100", "--steps", "2000"])
        columns, rows = parse_tsv(out)
        np.testing.assert_array_equal(rows[0], rows[1])
        gains = rows[:, columns.index("gain_per_step")]
        assert gains[1] > gains[2] > gains[3]

    def test_star_beats_naive(self, capsys):
        _, out, _ = run(capsys, ["pnl", "--rho", "0.99", "--beta", "0.01", "--gamma", "1", "--q", "naive", "star", "--paths", "100", "--steps", "20000"])
        columns, rows = parse_tsv(out)
        diff, se = rows[1, columns.index("paired_diff_vs_first")], rows[1, columns.index("paired_diff_se")]
        assert diff > 3 * se
