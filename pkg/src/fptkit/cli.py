"""Command-line front end: fptkit <command> [options].

Tabular commands print tab-separated text whose '#' header embeds the run
manifest; --json prints the same content as one JSON document. Rerunning a
manifest (``fptkit replay FILE``) reproduces the output byte for byte.

Exit codes: 0 success, 2 input error, 3 degenerate data, 4 non-convergence.
"""

import argparse
import importlib.resources
import json
import math
import sys
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, gof, sell, simulate, trading
from .data import load_sample, parse_null_spec
from .errors import BudgetTooSmall, DegenerateSample, DomainError, GridTooNarrow, IntegralOverflow, NonConvergence, NonMonotone
from .rng import McConfig, McEstimate

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_DEGENERATE = 3
EXIT_NONCONVERGENCE = 4

REQUIRED = object()


@dataclass(frozen=True)
class Param:
    name: str
    kind: str  # int, float, str, bool, ints, floats, thresholds; a trailing ? allows None
    default: object = None
    help: str = ""
    choices: tuple = ()

    @property
    def flag(self):
        return "--" + self.name.replace("_", "-")


GLOBALS = (
    Param("seed", "int", 0, "Monte Carlo seed (64-bit unsigned)"),
    Param("workers", "int", 1, "threads for Monte Carlo kernels; never changes results"),
    Param("json", "bool", False, "emit one JSON document instead of tab-separated text"),
)

_MODEL = (
    Param("rho", "float?", None, "AR(1) coefficient of the predictor"),
    Param("epsilon", "float?", None, "mean-reversion rate 1 - rho (alternative to --rho)"),
    Param("beta", "float", REQUIRED, "predictor innovation scale"),
    Param("gamma", "float", REQUIRED, "linear cost per unit traded"),
    Param("m_cap", "float", 1.0, "position cap M"),
)

_SELL_MODEL = (
    Param("mu", "float", 0.0, "drift of the log-price"),
    Param("sigma", "float", REQUIRED, "volatility of the log-price"),
    Param("T", "float", 1.0, "horizon"),
)

_MC = (
    Param("paths", "int", 10_000, "Monte Carlo paths"),
    Param("steps", "int", 1000, "time steps per path"),
)


def _with(params, **overrides):
    return tuple(Param(p.name, p.kind, overrides.get(p.name, p.default), p.help, p.choices) for p in params)


COMMANDS = {
    "ks-law": (
        "weighted KS test law S(N; k) with its small- and large-k asymptotes",
        (
            Param("n", "ints", [1000], "sample sizes N"),
            Param("k_min", "float", 0.5),
            Param("k_max", "float", 5.0),
            Param("points", "int", 91, "number of k values"),
            Param("classical", "bool", False, "add the classical KS limiting cdf"),
        ),
    ),
    "ks-test": (
        "weighted KS goodness-of-fit test of a sample file",
        (
            Param("data", "str", REQUIRED, "file with one observation per line"),
            Param("null", "str", "uniform", "null spec: uniform(a=,b=), normal(mu=,sigma=), exponential(lam=) or @table"),
        ),
    ),
    "sell": (
        "expected spread and argmax-time density against the selling time",
        _SELL_MODEL
        + (
            Param("tau_points", "int", 21),
            Param("grid_size", "int", 101, "grid for the spread minimizer"),
            Param("mc", "bool", False, "append Monte Carlo columns"),
        )
        + _MC,
    ),
    "threshold": (
        "optimal no-trade threshold q*",
        _MODEL + (Param("method", "str", "auto", choices=("auto", "discrete", "continuous", "grid", "naive")),),
    ),
    "pnl": (
        "simulated gain per step of threshold strategies on common paths",
        _MODEL
        + (Param("q", "thresholds", REQUIRED, "thresholds; 'star' and 'naive' name the solved ones"),)
        + _with(_MC, paths=1000, steps=10_000),
    ),
    "simulate ks-cdf": (
        "empirical cdf of the weighted KS statistic of N uniforms",
        (Param("n", "int", 10_000), Param("k", "floats", [2.0, 2.5, 3.0, 3.5]), Param("paths", "int", 10_000)),
    ),
    "simulate ou-survival": (
        "survival of the limit OU process in (-k, k) over horizon ln N",
        (
            Param("n", "int", 10_000),
            Param("k", "floats", [2.0, 2.5, 3.0, 3.5]),
            Param("paths", "int", 10_000),
            Param("dt", "float", 4e-3),
        ),
    ),
    "simulate spread": (
        "histogram of max x - x_tau against the closed-form density",
        _SELL_MODEL
        + (
            Param("tau", "float", REQUIRED),
            Param("bins", "int", 40),
            Param("s_max", "float?", None, "upper histogram edge; default from the closed form"),
            Param("exact_max", "bool", False, "draw the within-step maximum from the bridge law"),
        )
        + _MC,
    ),
    "simulate argmax": (
        "histogram of the argmax time against the closed-form density",
        _SELL_MODEL + (Param("bins", "int", 40), Param("exact_max", "bool", False)) + _MC,
    ),
    "simulate exit": (
        "exit statistics of the predictor in [-q, q] against the closed forms",
        _MODEL
        + (
            Param("q", "thresholds", ["star"], "threshold; 'star' or 'naive' allowed"),
            Param("p0", "float?", None, "start; default q - 1e-3 q"),
            Param("mode", "str", "diffusion", choices=("ar1", "diffusion")),
            Param("paths", "int", 10_000),
            Param("steps", "int?", None, "step cap; default 100/epsilon"),
        ),
    ),
}


# ---------------------------------------------------------------- parameter plumbing


def _convert(kind, text, name):
    try:
        if kind in ("int", "int?"):
            return int(text)
        if kind in ("float", "float?"):
            return float(text)
        if kind == "bool":
            lowered = str(text).strip().lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind == "ints":
            return [int(v) for v in _split(text)]
        if kind == "floats":
            return [float(v) for v in _split(text)]
        if kind == "thresholds":
            return [_threshold_token(v) for v in _split(text)]
        return str(text)
    except ValueError:
        raise DomainError(f"{name}: cannot read {text!r} as {kind}") from None


def _split(text):
    return [v for v in str(text).replace(",", " ").split() if v]


def _threshold_token(text):
    text = str(text).strip()
    if text in ("star", "naive"):
        return text
    return float(text)


def read_config(path):
    """Flat 'key = value' lines; '#' comments; keys may use '-' or '_'."""
    config = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            key, sep, value = line.partition(":")
        if not sep:
            raise DomainError(f"{path}:{lineno}: expected key = value")
        config[key.strip().replace("-", "_")] = value.strip()
    known = {p.name for p in GLOBALS} | {p.name for _, params in COMMANDS.values() for p in params}
    unknown = sorted(set(config) - known)
    if unknown:
        raise DomainError(f"{path}: unknown keys {', '.join(unknown)}")
    return config


def _argparse_type(kind):
    return {"int": int, "int?": int, "float": float, "float?": float, "ints": int, "floats": float}.get(kind, str)


def _add_param(parser, param):
    kwargs = dict(dest=param.name, default=argparse.SUPPRESS, help=param.help or None)
    if param.kind == "bool":
        parser.add_argument(param.flag, action=argparse.BooleanOptionalAction, **kwargs)
        return
    if param.kind in ("ints", "floats", "thresholds"):
        kwargs["nargs"] = "+"
    if param.kind == "thresholds":
        kwargs["type"] = _threshold_token
    else:
        kwargs["type"] = _argparse_type(param.kind)
    if param.choices:
        kwargs["choices"] = param.choices
    parser.add_argument(param.flag, **kwargs)


def _add_common(parser):
    for param in GLOBALS:
        _add_param(parser, param)
    parser.add_argument("--output", dest="output", default=argparse.SUPPRESS, help="write here instead of stdout")
    parser.add_argument("--config", dest="config", default=argparse.SUPPRESS, help="flat key = value defaults file")


def build_parser():
    parser = argparse.ArgumentParser(prog="fptkit", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"fptkit {__version__}")
    _add_common(parser)
    sub = parser.add_subparsers(dest="command", required=True)
    nested = {}
    for name, (summary, params) in COMMANDS.items():
        head, _, tail = name.partition(" ")
        if tail:
            if head not in nested:
                group = sub.add_parser(head, help="raw Monte Carlo oracles")
                nested[head] = group.add_subparsers(dest="oracle", required=True)
            leaf = nested[head].add_parser(tail, help=summary, description=summary)
        else:
            leaf = sub.add_parser(name, help=summary, description=summary)
        leaf.set_defaults(command_key=name)
        for param in params:
            _add_param(leaf, param)
        _add_common(leaf)
    replay = sub.add_parser("replay", help="rerun the command recorded in an output file")
    replay.add_argument("artifact", help="output file holding a manifest")
    replay.set_defaults(command_key="replay")
    _add_common(replay)
    return parser


def resolve(params, given, config):
    """Flags beat config values, which beat defaults."""
    out = {}
    for param in params:
        if param.name in given:
            value = given[param.name]
        elif param.name in config:
            value = _convert(param.kind, config[param.name], param.name)
        elif param.default is REQUIRED:
            raise DomainError(f"missing required option {param.flag}")
        else:
            value = param.default
        if isinstance(value, list):
            value = list(value)
        out[param.name] = value
    return out


# ---------------------------------------------------------------- output


@dataclass
class Table:
    columns: list
    rows: list
    summary: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)


@dataclass
class Document:
    result: dict


def fmt(value):
    """12 significant digits for floats; everything else as plain text."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.12g}"
    return str(value)


def _clean(obj):
    """JSON-ready copy with floats rounded to 12 significant digits and non-finite values as null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        return float(f"{value:.12g}") if math.isfinite(value) else None
    return obj


def _manifest_line(manifest):
    return json.dumps(manifest, sort_keys=True, separators=(",", ":"))


def render(output, manifest, as_json):
    if isinstance(output, Document):
        return json.dumps({"manifest": manifest, "result": _clean(output.result)}, indent=2) + "\n"
    if as_json:
        doc = {"manifest": manifest, "columns": output.columns, "rows": _clean(output.rows), "summary": _clean(output.summary)}
        if output.notes:
            doc["notes"] = output.notes
        return json.dumps(doc, indent=2) + "\n"
    lines = [f"# fptkit {manifest['command']}", f"# manifest: {_manifest_line(manifest)}"]
    if output.summary:
        lines.append(f"# summary: {json.dumps(_clean(output.summary), sort_keys=True, separators=(',', ':'))}")
    lines += [f"# {note}" for note in output.notes]
    lines.append("# " + "\t".join(output.columns))
    lines += ["\t".join(fmt(v) for v in row) for row in output.rows]
    return "\n".join(lines) + "\n"


_DOCUMENT_SCHEMAS = {"ks-test": "gof_result", "threshold": "threshold_result", "simulate exit": "exit_result"}


def schema_for(command):
    """Published JSON schema of a command's --json output (the manifest has its own, 'manifest')."""
    name = command if command == "manifest" else _DOCUMENT_SCHEMAS.get(command, "table")
    text = importlib.resources.files("fptkit").joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)


def read_manifest(path):
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        return json.loads(text)["manifest"]
    for line in text.splitlines():
        if line.startswith("# manifest: "):
            return json.loads(line[len("# manifest: ") :])
    raise DomainError(f"{path}: no manifest found")


# ---------------------------------------------------------------- commands


@dataclass(frozen=True)
class Context:
    seed: int
    workers: int

    def mc(self, paths, steps=1):
        return McConfig(int(paths), int(steps), self.seed, self.workers)


def _predictor(p):
    if (p["rho"] is None) == (p["epsilon"] is None):
        raise DomainError("give exactly one of --rho and --epsilon")
    if p["rho"] is not None:
        return trading.PredictorModel(p["rho"], p["beta"], p["gamma"], p["m_cap"])
    return trading.PredictorModel.from_epsilon(p["epsilon"], p["beta"], p["gamma"], p["m_cap"])


def _thresholds(model, tokens):
    resolved = []
    for token in tokens:
        if token == "star":
            resolved.append(trading.solve_threshold(model, "auto").q_star)
        elif token == "naive":
            resolved.append(trading.naive_threshold(model).q_star)
        else:
            resolved.append(float(token))
    return resolved


def cmd_ks_law(p, ctx):
    sizes = p["n"]
    if p["k_min"] <= 0 or p["k_max"] < p["k_min"] or p["points"] < 1:
        raise DomainError("need 0 < k_min <= k_max and points >= 1")
    ks = [p["k_min"]] if p["points"] == 1 else list(np.linspace(p["k_min"], p["k_max"], p["points"]))
    columns = ["k"]
    for n in sizes:
        columns += [f"S_N{n}", f"S_small_k_N{n}", f"S_large_k_N{n}"]
    if p["classical"]:
        columns.append("ks_classical")
    rows = []
    for k in ks:
        row = [float(k)]
        for n in sizes:
            row += [gof.test_law_S(n, k), gof.test_law_S_small_k(n, k), gof.test_law_S_large_k(n, k)]
        if p["classical"]:
            row.append(float(gof.ks_classical_cdf(k)))
        rows.append(row)
    summary = {"critical_value_95": {str(n): gof.critical_value(n, 0.95) for n in sizes}}
    if p["classical"]:
        summary["classical_k95"] = gof.ks_classical_critical_value(0.95)
    return Table(columns, rows, summary)


def cmd_ks_test(p, ctx):
    values = load_sample(p["data"])
    sample = gof.SampleSeries(values, parse_null_spec(p["null"]))
    return Document(gof.gof_test(sample).to_dict())


def cmd_sell(p, ctx):
    model = sell.SellModel(p["mu"], p["sigma"], p["T"])
    if p["tau_points"] < 2:
        raise DomainError("tau_points must be >= 2")
    taus = np.linspace(0.0, model.T, p["tau_points"])
    spreads = [sell.expected_spread(model, t) for t in taus]
    density = sell.occurrence_density(model, taus)
    with np.errstate(divide="ignore"):
        arcsine = 1.0 / (math.pi * np.sqrt(taus * (model.T - taus)))
    columns = ["tau", "expected_spread", "occurrence_density", "arcsine"]
    rows = [[t, s, d, a] for t, s, d, a in zip(taus, spreads, density, arcsine)]
    notes = ["arcsine is the driftless reference 1/(pi sqrt(tau (T - tau)))"]
    if p["mc"]:
        mc_spreads, hist, _ = simulate.mc_sell_curves(model, taus, ctx.mc(p["paths"], p["steps"]))
        theory = sell.occurrence_bin_masses(model, hist.edges) / hist.widths
        columns += ["mc_expected_spread", "mc_expected_spread_se", "mc_occurrence_density", "mc_occurrence_density_se", "occurrence_bin_average"]
        for row, est, dens, se, avg in zip(rows, mc_spreads, hist.density, hist.std_error, theory):
            row += [est.mean, est.std_error, dens, se, avg]
        notes.append("mc_occurrence_density bins run between neighbouring tau midpoints; occurrence_bin_average is the closed form over the same bin")
    tau_star = sell.optimal_tau(model, p["grid_size"])
    tau_m = sell.occurrence_argmax(model)
    summary = {
        "tau_star": tau_star.tau,
        "tau_star_degenerate": tau_star.degenerate,
        "tau_m": tau_m.tau,
        "tau_m_degenerate": tau_m.degenerate,
    }
    return Table(columns, rows, summary, notes)


def cmd_threshold(p, ctx):
    model = _predictor(p)
    solution = trading.solve_threshold(model, p["method"])
    described = dict(model.to_dict(), epsilon=model.epsilon, sigma_p=model.sigma_p, eta=model.eta)
    return Document({"model": described, "solution": solution.to_dict()})


def cmd_pnl(p, ctx):
    model = _predictor(p)
    thresholds = _thresholds(model, p["q"])
    gains = trading.pnl_paths(model, thresholds, ctx.mc(p["paths"], p["steps"]))
    rows = []
    for i, q in enumerate(thresholds):
        est = McEstimate.from_samples(gains[:, i])
        diff = McEstimate.from_samples(gains[:, i] - gains[:, 0])
        rows.append([q, est.mean, est.std_error, diff.mean, diff.std_error])
    columns = ["q", "gain_per_step", "std_error", "paired_diff_vs_first", "paired_diff_se"]
    return Table(columns, rows, {"eta": model.eta}, ["all thresholds run on the same predictor paths"])


def cmd_sim_ks_cdf(p, ctx):
    rows = []
    for k, prob, se in simulate.mc_weighted_ks_statistic_cdf(p["n"], p["k"], ctx.mc(p["paths"])):
        rows.append([k, prob, se, gof.test_law_S(p["n"], k)])
    return Table(["k", "empirical_cdf", "std_error", "test_law_S"], rows)


def cmd_sim_ou_survival(p, ctx):
    gof.QuantileWindow.for_sample_size(p["n"])
    horizon = math.log(p["n"])
    rows = []
    for k in p["k"]:
        est = simulate.mc_ou_band_survival(k, horizon, ctx.mc(p["paths"]), p["dt"])
        rows.append([k, est.mean, est.std_error, gof.test_law_S(p["n"], k)])
    return Table(["k", "survival", "std_error", "test_law_S"], rows, {"horizon": horizon})


def cmd_sim_spread(p, ctx):
    model = sell.SellModel(p["mu"], p["sigma"], p["T"])
    density = sell.spread_density(model, p["tau"])
    s_max = p["s_max"] if p["s_max"] is not None else density.truncation()
    hist, mean = simulate.mc_gbm_spread(model, p["tau"], ctx.mc(p["paths"], p["steps"]), p["bins"], s_max, p["exact_max"])
    theory = density.bin_masses(hist.edges) / hist.widths
    rows = [list(r) for r in zip(hist.edges[:-1], hist.edges[1:], hist.density, hist.std_error, theory)]
    summary = {"mc_mean": mean.mean, "mc_mean_se": mean.std_error, "expected_spread": sell.expected_spread(model, p["tau"])}
    return Table(["bin_lo", "bin_hi", "mc_density", "std_error", "theory_bin_average"], rows, summary)


def cmd_sim_argmax(p, ctx):
    model = sell.SellModel(p["mu"], p["sigma"], p["T"])
    hist = simulate.mc_argmax_time_density(model, ctx.mc(p["paths"], p["steps"]), p["bins"], p["exact_max"])
    theory = sell.occurrence_bin_masses(model, hist.edges) / hist.widths
    rows = [list(r) for r in zip(hist.edges[:-1], hist.edges[1:], hist.density, hist.std_error, theory)]
    return Table(["bin_lo", "bin_hi", "mc_density", "std_error", "theory_bin_average"], rows)


def cmd_sim_exit(p, ctx):
    model = _predictor(p)
    if len(p["q"]) != 1:
        raise DomainError("give a single --q")
    q = _thresholds(model, p["q"])[0]
    p0 = p["p0"] if p["p0"] is not None else q - 1e-3 * q
    steps = p["steps"] if p["steps"] is not None else simulate.default_exit_steps(model)
    summary, ratio = simulate.mc_exit_statistics(model, p0, q, ctx.mc(p["paths"], steps), mode=p["mode"])
    result = {
        "q": q,
        "p0": p0,
        "monte_carlo": dict(summary.to_dict(), exit_below_std_error=summary.exit_below.std_error),
        "closed_form": {"G": trading.closed_form_G(model, q, p0), "P_minus": trading.closed_form_Pminus(model, q, p0)},
        "path_integral_ratio": {"mean": ratio.mean, "std_error": ratio.std_error},
    }
    return Document(result)


HANDLERS = {
    "ks-law": cmd_ks_law,
    "ks-test": cmd_ks_test,
    "sell": cmd_sell,
    "threshold": cmd_threshold,
    "pnl": cmd_pnl,
    "simulate ks-cdf": cmd_sim_ks_cdf,
    "simulate ou-survival": cmd_sim_ou_survival,
    "simulate spread": cmd_sim_spread,
    "simulate argmax": cmd_sim_argmax,
    "simulate exit": cmd_sim_exit,
}


# ---------------------------------------------------------------- entry point


def execute(manifest, workers=1):
    """Run a manifest and return the rendered output text."""
    command = manifest["command"]
    if command not in HANDLERS:
        raise DomainError(f"unknown command {command!r}")
    params = dict(manifest["parameters"])
    ctx = Context(int(manifest["seed"]), int(workers))
    McConfig(1, 1, ctx.seed, ctx.workers)  # validates seed and workers
    with warnings.catch_warnings():
        warnings.simplefilter("default")
        output = HANDLERS[command](params, ctx)
    return render(output, manifest, bool(params.get("json", False)))


def _run(args):
    given = vars(args)
    config = read_config(given["config"]) if "config" in given else {}
    settings = resolve(GLOBALS, given, config)
    if args.command_key == "replay":
        manifest = read_manifest(args.artifact)
    else:
        params = resolve(COMMANDS[args.command_key][1], given, config)
        params["json"] = settings["json"]
        manifest = {
            "command": args.command_key,
            "parameters": params,
            "seed": settings["seed"],
            "toolkit_version": __version__,
        }
    started = time.perf_counter()
    text = execute(manifest, settings["workers"])
    wall = time.perf_counter() - started
    if "output" in given:
        Path(given["output"]).write_text(text)
        sidecar = dict(manifest, wall_time_s=wall)
        Path(given["output"] + ".run.json").write_text(json.dumps(sidecar, indent=2) + "\n")
    else:
        sys.stdout.write(text)
    print(f"wall_time_s: {wall:.3f}", file=sys.stderr)


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        _run(args)
    except DegenerateSample as exc:
        print(f"fptkit: degenerate data: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (NonConvergence, NonMonotone, GridTooNarrow) as exc:
        print(f"fptkit: no convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (DomainError, BudgetTooSmall, IntegralOverflow, OSError, ValueError, KeyError) as exc:
        print(f"fptkit: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
