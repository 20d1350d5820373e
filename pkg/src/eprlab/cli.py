"""Command-line reproduction harness.

    eprlab <experiment> [--param value]... [key=value]... --out FILE --format csv|json

Parameters come from built-in defaults, then an optional key=value config
file (--config), then command-line flags and key=value words, later sources
winning. Every artifact starts with the resolved configuration, the seed
and the library version, and contains no timestamps, so identical inputs
give byte-identical files.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import __version__
from .bell import (SiteSettings, balanced_cv_state, bounded_sampler, cv_bell_eval, cv_build,
                   cv_efficiency_threshold, cv_fidelity_threshold, cv_ratio_closed_form,
                   deterministic_sampler, gaussian_sampler, lhv_variance_sampler, mabk_build,
                   mabk_lhv_max, mabk_quantum_max)
from .channels import apply_loss_all
from .epr_steering import (bohm_product_criterion, lossy_bell, parametric_sum_report,
                           reid_criterion, zero_crossing)
from .hilbert import expectation, quadrature, quadrature_density, variance
from .lhv import ensemble_moments, first_moment_model
from .macro_super import (binned_product_criterion, binned_sum_criterion, nonlocatable_size,
                          s_max_sweep)
from .states import cat, recommended_cutoff, squeezed, two_mode_squeezed

DEFAULT_SEED = 20240611
SIG_DIGITS = 9
MAX_AUTO_CUTOFF = 45


class ConfigError(ValueError):
    """Invalid experiment configuration."""


# ------------------------------------------------------------- parameters

def _grid(text: str) -> list[float]:
    """'a,b,c' lists values; 'start:stop:count' is an inclusive linspace."""
    text = str(text).strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"grid {text!r} must be start:stop:count")
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
        if count < 1:
            raise ConfigError(f"grid {text!r} needs a positive count")
        return [float(v) for v in np.linspace(start, stop, count)]
    return [float(v) for v in text.split(",") if v.strip()]


def _int_grid(text: str) -> list[int]:
    out = []
    for v in _grid(text):
        if v != int(v):
            raise ConfigError(f"expected integers, got {v}")
        out.append(int(v))
    return out


@dataclass(frozen=True)
class Param:
    name: str
    default: str
    parse: Callable
    help: str


@dataclass(frozen=True)
class Experiment:
    name: str
    help: str
    params: tuple[Param, ...]
    columns: tuple[str, ...]
    run: Callable
    uses_seed: bool = False


@dataclass
class ExperimentConfig:
    experiment: str
    parameters: dict = field(default_factory=dict)
    output: str | None = None
    format: str = "csv"
    seed: int = DEFAULT_SEED
    threads: int = 1


def _pmap(fn, items, threads):
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _check_unit(values, name, low=0.0, high=1.0, open_low=False):
    for v in values:
        if not (low < v if open_low else low <= v) or v > high:
            raise ConfigError(f"{name} value {v} outside {'(' if open_low else '['}{low}, {high}]")


# ------------------------------------------------------------ experiments

def run_reid(p, cfg):
    rows = []
    for r in p["r"]:
        if r < 0:
            raise ConfigError("r must be >= 0")
        cutoff = p["cutoff"] or recommended_cutoff(r)
        if not p["cutoff"] and cutoff > MAX_AUTO_CUTOFF:
            raise ConfigError(f"r={r} needs cutoff {cutoff}; pass cutoff explicitly to allow it")
        psi = two_mode_squeezed(r, (cutoff, cutoff))
        lay = psi.layout
        xs = (quadrature(lay, 0, 0.0), quadrature(lay, 1, 0.0))
        ps = (quadrature(lay, 0, math.pi / 2), quadrature(lay, 1, math.pi / 2))
        rep = reid_criterion(psi, xs, ps, kind=p["kind"])
        prod = rep.params["product_of_variances"]
        rows.append([r, cutoff, rep.params["var_inf_x"], rep.params["var_inf_p"], prod,
                     1 / math.cosh(2 * r) ** 2, rep.violated])
    return rows, {}


def run_bohm_threshold(p, cfg):
    etas = p["eta"]
    _check_unit(etas, "eta")
    reports = _pmap(lambda e: bohm_product_criterion(lossy_bell(e)), etas, cfg.threads)
    rows = [[e, r.lhs, r.rhs, r.margin, r.params["var_inf_x"], r.params["var_inf_y"],
             r.params["zz_sum"], r.violated] for e, r in zip(etas, reports)]
    crossing = zero_crossing(etas, [r.margin for r in reports])
    return rows, {"zero_crossing": crossing}


def run_bohm_size(p, cfg):
    etas = p["eta"]
    _check_unit(etas, "eta", open_low=True)
    rows = []
    for nb in p["mean_nb"]:
        if nb <= 0:
            raise ConfigError("mean_nb must be positive")
        for e in etas:
            rep = parametric_sum_report(e, mean_nb=nb)
            q = rep.params
            rows.append([nb, e, q["r"], q["var_est"], rep.lhs, rep.rhs, q["size_S"],
                         math.sqrt(e * nb), rep.violated])
    return rows, {}


def run_cv_bell(p, cfg):
    eta = p["eta"]
    _check_unit([eta], "eta", open_low=True)
    rows = []
    for n in p["n"]:
        if n < 2 or n % 2:
            raise ConfigError(f"n must be even and >= 2, got {n}")
        closed = cv_ratio_closed_form(n, eta)
        if n <= p["numeric_max"]:
            psi = balanced_cv_state(n)
            state = psi if eta == 1 else apply_loss_all(psi.density(), eta)
            rep = cv_bell_eval(state, SiteSettings.half_split(n))
            lhs, rhs, ratio = rep.lhs, rep.rhs, rep.params["ratio"]
        else:
            lhs = rhs = ratio = float("nan")
        violated = (ratio if ratio == ratio else closed) > 1
        try:
            eta_min = cv_efficiency_threshold(n)
        except ValueError:
            eta_min = float("nan")
        eps_min = float("nan")
        if p["fidelity"] and n <= p["numeric_max"] and cv_ratio_closed_form(n) > 1:
            eps_min = cv_fidelity_threshold(n).threshold
        rows.append([n, eta, lhs, rhs, ratio, closed, eta_min, eps_min, violated])
    return rows, {}


def run_mabk(p, cfg):
    rows = []
    for n in p["n"]:
        if not 1 <= n <= 6:
            raise ConfigError(f"n must lie in 1..6, got {n}")
        f, _ = mabk_build(n)
        q = mabk_quantum_max(n, seed=cfg.seed) if n <= p["quantum_max_n"] else float("nan")
        rows.append([n, len(f.terms), mabk_lhv_max(n), q, 2 ** ((n - 1) / 2)])
    return rows, {}


def _squeezed_row(sigma, s_grid_points, tol):
    r = math.log(sigma) / 2
    cutoff = recommended_cutoff(r, kind="single") if r > 0 else 2
    psi = squeezed(r, cutoff)
    xdist = quadrature_density(psi, 0, 0.0)
    var_p = variance(psi, quadrature(psi.layout, 0, math.pi / 2))
    grid = np.linspace(0.02, 1.5 * math.sqrt(sigma), s_grid_points)
    prod = s_max_sweep(lambda s: binned_product_criterion(xdist, var_p, s), grid, tol)
    summ = s_max_sweep(lambda s: binned_sum_criterion(xdist, var_p, s), grid, tol)
    return [sigma, r, cutoff, var_p, prod.S_max, summ.S_max, nonlocatable_size(math.sqrt(var_p)),
            0.5 * math.sqrt(sigma), 2 * math.sqrt(sigma)]


def run_macro_scan(p, cfg):
    sigmas = p["sigma"]
    if any(s < 1 for s in sigmas):
        raise ConfigError("sigma must be >= 1 (squeezing of p)")
    rows = _pmap(lambda s: _squeezed_row(s, p["s_points"], p["tol"]), sigmas, cfg.threads)
    return rows, {}


def _cat_row(alpha, s_points, tol):
    cutoff = max(20, math.ceil(alpha ** 2 + 12 * alpha + 12))
    psi = cat(alpha, cutoff)
    var_p = variance(psi, quadrature(psi.layout, 0, math.pi / 2))
    xdist = quadrature_density(psi, 0, 0.0)
    grid = np.linspace(0.02, 4 * alpha + 4, s_points)
    prod = s_max_sweep(lambda s: binned_product_criterion(xdist, var_p, s), grid, tol)
    return [alpha, cutoff, var_p, 1 - 4 * alpha ** 2 * math.exp(-4 * alpha ** 2),
            nonlocatable_size(math.sqrt(var_p)), prod.S_max]


def run_cat_scan(p, cfg):
    alphas = p["alpha"]
    if any(a <= 0 for a in alphas):
        raise ConfigError("alpha must be positive")
    rows = _pmap(lambda a: _cat_row(a, p["s_points"], p["tol"]), alphas, cfg.threads)
    return rows, {}


def run_lhv_demo(p, cfg):
    rows = []
    r = p["r"]
    cutoff = recommended_cutoff(r)
    psi = two_mode_squeezed(r, (cutoff, cutoff))
    lay = psi.layout
    quads = {"x": 0.0, "p": math.pi / 2}
    targets = {}
    for sa, ta in quads.items():
        for sb, tb in quads.items():
            op = quadrature(lay, 0, ta) @ quadrature(lay, 1, tb)
            op = 0.5 * (op + op.dag())
            targets[((0, sa), (1, sb))] = expectation(psi, op)
    ens = first_moment_model(targets, settings=(("x", "p"), ("x", "p")))
    got = ensemble_moments(ens, targets)
    for key in sorted(targets, key=repr):
        name = f"first-moment <{key[0][1]}A {key[1][1]}B>"
        dev = got[key] - targets[key]
        rows.append([name, targets[key], got[key], dev, abs(dev) < 1e-12])
    rng_seed = cfg.seed
    for n in p["n"]:
        f, _ = mabk_build(n)
        for label, sampler in (("deterministic", deterministic_sampler(n, 4)),
                               ("bounded", bounded_sampler(n, 4))):
            worst = lhv_variance_sampler(f, sampler, p["trials"], rng_seed)
            rows.append([f"mabk n={n} {label} max |<F>|^2/sup|F|^2", 1.0, worst, worst - 1.0,
                         worst <= 1 + 1e-9])
        cv = cv_build(n)
        worst = lhv_variance_sampler(cv, gaussian_sampler(n, 4), p["trials"], rng_seed)
        rows.append([f"cv n={n} gaussian max |<C>|^2/<|C|^2>", 1.0, worst, worst - 1.0,
                     worst <= 1 + 1e-9])
    return rows, {"atoms": ens.n_atoms}


EXPERIMENTS = {e.name: e for e in (
    Experiment("reid", "EPR-Reid inference-variance product for two-mode squeezing vs r",
               (Param("r", "0:1:11", _grid, "squeeze parameters"),
                Param("cutoff", "0", int, "per-mode cutoff; 0 picks the recommended value"),
                Param("kind", "linear", str, "inference estimator: linear or conditional")),
               ("r", "cutoff", "var_inf_x", "var_inf_p", "product", "expected", "violated"),
               run_reid),
    Experiment("bohm-threshold", "EPR-Bohm product criterion on the lossy Bell state vs eta",
               (Param("eta", "0.5:1:51", _grid, "transmission grid"),),
               ("eta", "lhs", "rhs", "margin", "var_inf_x", "var_inf_y", "zz_sum", "violated"),
               run_bohm_threshold),
    Experiment("bohm-size", "sum criterion and certified superposition size for the lossy amplifier",
               (Param("eta", "0.5:1:51", _grid, "transmission grid"),
                Param("mean_nb", "2,10,20,100", _grid, "detected <N^B> values")),
               ("mean_NB", "eta", "r", "var_est", "lhs", "rhs", "size_S", "sqrt_eta_NB", "violated"),
               run_bohm_size),
    Experiment("cv-bell", "continuous-variable Bell inequality margin vs number of sites",
               (Param("n", "2:16:8", _int_grid, "even site counts"),
                Param("eta", "1.0", float, "loss applied to every mode"),
                Param("numeric_max", "10", int, "largest n evaluated in Fock space"),
                Param("fidelity", "0", int, "1 to include the white-noise threshold")),
               ("n", "eta", "lhs", "rhs", "ratio", "closed_form_ratio", "eta_min", "eps_min", "violated"),
               run_cv_bell),
    Experiment("mabk", "MABK bounds: hidden-variable enumeration and quantum maximum",
               (Param("n", "1,2,3,4", _int_grid, "site counts"),
                Param("quantum_max_n", "4", int, "largest n to optimize numerically")),
               ("n", "terms", "lhv", "quantum", "quantum_bound"),
               run_mabk, uses_seed=True),
    Experiment("macro-scan", "S_max of the binned and non-locatable criteria for squeezed states",
               (Param("sigma", "1,2,4,8,16", _grid, "squeezing factors sigma = Var(x) = 1/Var(p)"),
                Param("s_points", "61", int, "S grid points"),
                Param("tol", "1e-4", float, "bisection tolerance on S")),
               ("sigma", "r", "cutoff", "var_p", "S_max_binned_product", "S_max_binned_sum",
                "S_nonlocatable", "half_sqrt_sigma", "two_sqrt_sigma"),
               run_macro_scan),
    Experiment("cat-scan", "cat-state p squeezing and certified sizes vs alpha",
               (Param("alpha", "0.1:1.5:15", _grid, "cat amplitudes"),
                Param("s_points", "61", int, "S grid points"),
                Param("tol", "1e-4", float, "bisection tolerance on S")),
               ("alpha", "cutoff", "var_p", "var_p_formula", "S_nonlocatable", "S_max_binned_product"),
               run_cat_scan),
    Experiment("lhv-demo", "first-moment hidden-variable model and a Monte-Carlo inequality audit",
               (Param("r", "0.5", float, "two-mode squeezing of the modeled state"),
                Param("n", "2,3", _int_grid, "site counts for the audit"),
                Param("trials", "20000", int, "sampled ensembles per audit")),
               ("check", "target", "value", "deviation", "satisfied"),
               run_lhv_demo, uses_seed=True),
)}


# ---------------------------------------------------------------- output

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        return f"{v:.{SIG_DIGITS}g}"
    if v is None:
        return ""
    return str(v)


def _json_value(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return None if math.isnan(v) else float(f"{v:.{SIG_DIGITS}g}")
    return v


def render(exp: Experiment, cfg: ExperimentConfig, rows, extras) -> str:
    meta = {"experiment": exp.name, "version": __version__, "seed": cfg.seed,
            "parameters": {k: cfg.parameters[k] for k in sorted(cfg.parameters)}}
    meta.update({k: _json_value(v) for k, v in sorted(extras.items())})
    if cfg.format == "json":
        payload = {"meta": meta, "columns": list(exp.columns),
                   "rows": [{c: _json_value(v) for c, v in zip(exp.columns, row)} for row in rows]}
        return json.dumps(payload, indent=2, sort_keys=False) + "\n"
    lines = [f"# eprlab {__version__} experiment={exp.name} seed={cfg.seed}",
             "# config " + " ".join(f"{k}={v}" for k, v in meta["parameters"].items())]
    for k, v in sorted(extras.items()):
        lines.append(f"# {k}={_fmt(v)}")
    lines.append(",".join(exp.columns))
    for row in rows:
        if len(row) != len(exp.columns):
            raise RuntimeError(f"{exp.name}: row has {len(row)} fields, expected {len(exp.columns)}")
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- config

def read_config_file(path: str) -> dict:
    """key=value lines; blank lines and '#' comments are ignored."""
    out = {}
    with open(path) as fh:
        for num, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{num}: expected key=value")
            k, v = line.split("=", 1)
            out[k.strip().replace("-", "_")] = v.strip()
    return out


def resolve(exp: Experiment, file_values: dict, cli_values: dict) -> tuple[dict, dict]:
    """(raw strings, parsed values) for every parameter of the experiment."""
    known = {p.name for p in exp.params}
    raw = {p.name: p.default for p in exp.params}
    for source in (file_values, cli_values):
        for k, v in source.items():
            if k not in known:
                raise ConfigError(f"unknown parameter {k!r} for {exp.name}; "
                                  f"known: {', '.join(sorted(known))}")
            raw[k] = str(v)
    parsed = {}
    for p in exp.params:
        try:
            parsed[p.name] = p.parse(raw[p.name])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"parameter {p.name}={raw[p.name]!r}: {exc}") from None
    return raw, parsed


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eprlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"eprlab {__version__}")
    sub = parser.add_subparsers(dest="experiment", required=True, metavar="experiment")
    for exp in EXPERIMENTS.values():
        sp = sub.add_parser(exp.name, help=exp.help, description=exp.help)
        for p in exp.params:
            sp.add_argument(f"--{p.name.replace('_', '-')}", dest=f"param_{p.name}", default=None,
                            help=f"{p.help} (default {p.default})")
        sp.add_argument("assignments", nargs="*", metavar="key=value",
                        help="parameter overrides in key=value form")
        sp.add_argument("--out", default=None, help="output file (default stdout)")
        sp.add_argument("--format", choices=("csv", "json"), default=None)
        sp.add_argument("--seed", type=int, default=None, help=f"default {DEFAULT_SEED}")
        sp.add_argument("--threads", type=int, default=None, help="worker threads (default 1)")
        sp.add_argument("--config", default=None, help="key=value parameter file")
    return parser


def config_from_args(args) -> ExperimentConfig:
    exp = EXPERIMENTS[args.experiment]
    file_values = read_config_file(args.config) if args.config else {}
    general = {k: file_values.pop(k) for k in ("out", "format", "seed", "threads") if k in file_values}
    cli_values = {}
    for item in args.assignments:
        if "=" not in item:
            raise ConfigError(f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        cli_values[k.strip().replace("-", "_")] = v.strip()
    for p in exp.params:
        v = getattr(args, f"param_{p.name}")
        if v is not None:
            cli_values[p.name] = v
    raw, _ = resolve(exp, file_values, cli_values)
    fmt = args.format or general.get("format", "csv")
    if fmt not in ("csv", "json"):
        raise ConfigError(f"format must be csv or json, got {fmt!r}")
    try:
        seed = int(args.seed if args.seed is not None else general.get("seed", DEFAULT_SEED))
        threads = int(args.threads if args.threads is not None else general.get("threads", 1))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if threads < 1:
        raise ConfigError("threads must be >= 1")
    return ExperimentConfig(exp.name, raw, args.out or general.get("out"), fmt, seed, threads)


def run(cfg: ExperimentConfig) -> str:
    """Run one experiment and return the rendered artifact text."""
    if cfg.experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {cfg.experiment!r}")
    exp = EXPERIMENTS[cfg.experiment]
    raw, parsed = resolve(exp, {}, cfg.parameters)
    cfg.parameters = raw
    try:
        rows, extras = exp.run(parsed, cfg)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return render(exp, cfg, rows, extras)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
        text = run(cfg)
    except (ConfigError, OSError) as exc:
        print(f"eprlab: error: {exc}", file=sys.stderr)
        return 2
    if cfg.output:
        try:
            with open(cfg.output, "w", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            print(f"eprlab: error: cannot write {cfg.output}: {exc}", file=sys.stderr)
            return 3
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
