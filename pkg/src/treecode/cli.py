"""Command-line experiment driver.

    treecode classify-sim --config configs/classify_snr.ini --out results/classify_snr.csv
    treecode validate --config configs/classify_snr.ini

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
from pathlib import Path

import numpy as np

from .codebook import format_code_matrix
from .config import ExperimentConfig, base_for_estimation, parse_config, validate_text
from .design import AnnealSchedule, design_tree_codes
from .error_analysis import (chained_classification_error, classification_bound, estimation_bound,
                             level_error_profile)
from .exceptions import CapacityError, ConfigError, EncodingOverflowError, NumericalError
from .local_rules import map_init_rules, pbpo_fixed_point, rule_bit_table
from .observation import GaussianShiftModel, make_prior, snr_to_s
from .quantizer import distortion, format_region_tree, quantize_region_tree, read_region_tree
from .treesim import (TreeConfig, design_estimation_rules, estimation_matrices,
                      run_classification, run_estimation, sweep)

log = logging.getLogger("treecode")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

SUBCOMMANDS = {
    "classify-sim": "classify",
    "estimate-sim": "estimate",
    "design": "design",
    "analyze": "analyze",
    "quantize": "quantize",
}


def _versions():
    import scipy

    from . import __version__
    return {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__,
            "treecode": __version__}


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _csv(header, rows) -> str:
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in r) for r in rows]
    return "\n".join(lines) + "\n"


def _write_atomic(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8", newline="\n")
    os.replace(tmp, path)


def _manifest(cfg: ExperimentConfig, chash: str, outputs, overrides) -> str:
    doc = {"config": cfg.source, "config_hash": chash, "task": cfg.task, "seed": cfg.seed,
           "overrides": {k: overrides[k] for k in sorted(overrides)}, "outputs": [str(p) for p in outputs],
           "versions": _versions()}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


# ----------------------------------------------------------------- model setup


def classification_model(cfg: ExperimentConfig, snr: float) -> GaussianShiftModel:
    s = snr_to_s(snr, cfg.snr_base)
    steps = cfg.mean_steps if cfg.mean_steps is not None else range(cfg.M)
    return GaussianShiftModel(tuple(float(v) * s for v in steps), cfg.sigma)


def leaf_rules(cfg: ExperimentConfig, C, model, priors):
    """(rules, bit_probs, converged) for the sensing nodes."""
    if cfg.rule_method == "map":
        rules = map_init_rules(C, priors)
        return rules, rule_bit_table(rules, model), True
    res = pbpo_fixed_point(C, model, priors, max_iters=cfg.pbpo_iters, tol=cfg.pbpo_tol)
    return res.rules, res.bit_probs, res.converged


def _prior_span(cfg: ExperimentConfig, theta_max=None):
    if theta_max is not None:
        return make_prior("uniform", 0.0, theta_max), 0.0, theta_max
    if cfg.prior == "uniform":
        return make_prior("uniform", cfg.prior_lo, cfg.prior_hi), cfg.prior_lo, cfg.prior_hi
    return make_prior("normal", mu=cfg.prior_mu, sd=cfg.prior_sd), -np.inf, np.inf


# ----------------------------------------------------------------------- tasks


def task_classify(cfg: ExperimentConfig, chash: str, threads: int = 1):
    priors = cfg.prior_array
    mats = tuple(cfg.matrices)
    cache, extra, traces = {}, [], []

    def point(snr, beta, seed):
        if snr not in cache:
            model = classification_model(cfg, snr)
            cache[snr] = (model, *leaf_rules(cfg, mats[-1], model, priors))
        model, rules, bp, conv = cache[snr]
        tc = TreeConfig(cfg.K, cfg.N, cfg.M, mats, beta, cfg.trials, seed, tuple(priors))
        res = run_classification(tc, model, rules, trace=cfg.trace is not None, threads=threads)
        exact = chained_classification_error(mats, bp, priors, beta).error
        extra.append((exact, conv))
        if cfg.trace is not None:
            traces.append((snr, beta, res.records))
        return res.p_error, res.ci

    rows = sweep(cfg.snr_axis, point, cfg.betas, cfg.seed)
    header = ["axis", "metric", "ci_low", "ci_high", "beta", "seed", "exact", "rules_converged", "config_hash"]
    body = [(r.axis, r.metric, r.ci_low, r.ci_high, r.beta, r.seed, e, c, chash) for r, (e, c) in zip(rows, extra)]
    files = {"main": _csv(header, body)}
    if traces:
        th = ["snr", "beta", "trial", "truth", "decision"] + [f"level{k}" for k in range(1, cfg.K + 1)] + ["config_hash"]
        tr = []
        for snr, beta, rec in traces:
            for i in range(len(rec.truth)):
                tr.append((snr, beta, i, int(rec.truth[i]), int(rec.decision[i]), *map(int, rec.trace[i][::-1]), chash))
        files["trace"] = _csv(th, tr)
    return files


def task_estimate(cfg: ExperimentConfig, chash: str, threads: int = 1):
    bases = base_for_estimation(cfg)
    mats = estimation_matrices(bases, cfg.N, cfg.K)
    use_theta = bool(cfg.theta_max_axis)
    axis = cfg.theta_max_axis if use_theta else cfg.sigma_axis
    cache, extra, traces = {}, [], []

    def point(v, beta, seed):
        if v not in cache:
            prior, lo, hi = _prior_span(cfg, v if use_theta else None)
            if cfg.region_tree_file and not use_theta:
                tree = read_region_tree(Path(cfg.source or ".").parent / cfg.region_tree_file, prior)
            else:
                tree = quantize_region_tree(prior, lo, hi, cfg.M, cfg.K, cfg.hierarchical)
            sigma = cfg.sigma if use_theta else v
            rules = design_estimation_rules(tree, bases, sigma, cfg.rule_method, cfg.pbpo_iters, cfg.pbpo_tol)
            cache[v] = (tree, sigma, rules, distortion(prior, tree.edges, tree.points))
        tree, sigma, rules, floor = cache[v]
        tc = TreeConfig(cfg.K, cfg.N, cfg.M, mats, beta, cfg.trials, seed)
        res = run_estimation(tc, tree, sigma, rules, trace=cfg.trace is not None,
                             theta_sharing=cfg.theta_sharing,
                             noisy_collaboration=cfg.noisy_collaboration, threads=threads)
        extra.append((res.p_detect, *res.detect_ci, floor))
        if cfg.trace is not None:
            traces.append((v, beta, res.records))
        return res.mse, res.mse_ci

    rows = sweep(axis, point, cfg.betas, cfg.seed)
    header = ["axis", "metric", "ci_low", "ci_high", "beta", "seed", "p_detect", "detect_ci_low",
              "detect_ci_high", "quantizer_floor", "config_hash"]
    body = [(r.axis, r.metric, r.ci_low, r.ci_high, r.beta, r.seed, *e, chash) for r, e in zip(rows, extra)]
    files = {"main": _csv(header, body)}
    if traces:
        th = ["axis", "beta", "trial", "theta", "cell"] + [f"step{s}" for s in range(1, cfg.K + 1)] + ["config_hash"]
        tr = []
        for v, beta, rec in traces:
            for i in range(len(rec.truth)):
                tr.append((v, beta, i, float(rec.truth[i]), int(rec.decision[i]), *map(int, rec.trace[i]), chash))
        files["trace"] = _csv(th, tr)
    return files


def task_design(cfg: ExperimentConfig, chash: str, threads: int = 1):
    model = classification_model(cfg, cfg.snr)
    sched = AnnealSchedule(cfg.T0, cfg.alpha, cfg.steps_per_temp, cfg.T_min, cfg.seed)
    results = design_tree_codes(cfg.K, cfg.N, model, cfg.prior_array, cfg.design_method, sched, cfg.pbpo_iters)
    files = {}
    trace = []
    summary = []
    for k, res in enumerate(results, start=1):
        files[f"level{k}.code"] = f"# config_hash={chash}\n" + format_code_matrix(res.matrix)
        for step, obj in enumerate(res.trace):
            trace.append(json.dumps({"level": k, "step": step, "objective": obj, "config_hash": chash}))
        summary.append((k, res.objective, res.d_min, res.converged, chash))
    files["trace.jsonl"] = "\n".join(trace) + "\n"
    files["design.csv"] = _csv(["level", "objective", "d_min", "converged", "config_hash"], summary)
    return files


def analysis_levels(cfg: ExperimentConfig):
    if cfg.d_min_levels is not None:
        return list(zip(cfg.d_min_levels, cfg.q_max_levels))
    model = classification_model(cfg, cfg.snr)
    priors = cfg.prior_array
    _, bp, _ = leaf_rules(cfg, cfg.matrices[-1], model, priors)
    return level_error_profile(cfg.matrices, bp, priors)


def task_analyze(cfg: ExperimentConfig, chash: str, threads: int = 1):
    levels = analysis_levels(cfg)
    cb = classification_bound(levels, cfg.M, a=cfg.a_levels, strategy=cfg.a_strategy)
    eb = estimation_bound(levels, cfg.M)
    header = ["kind", "level", "d_min", "q_max", "a_k", "factor", "bound", "feasibility", "config_hash"]
    rows = []
    for lb in cb.levels:
        rows.append(("classification", lb.level, lb.d_min, lb.q_max, lb.a, lb.factor,
                     cb.effective_bound, "feasible" if cb.feasible else "infeasible", chash))
    for k, (d, q) in enumerate(levels, start=1):
        f = eb.factors[k - 1] if eb.applicable else None
        rows.append(("estimation", k, d, q, None, f, eb.bound,
                     "applicable" if eb.applicable else "inapplicable", chash))
    return {"main": _csv(header, rows)}


def task_quantize(cfg: ExperimentConfig, chash: str, threads: int = 1):
    prior, lo, hi = _prior_span(cfg)
    tree = quantize_region_tree(prior, lo, hi, cfg.M, cfg.K, cfg.hierarchical,
                                tol=cfg.lm_tol, max_iters=cfg.lm_max_iters, init=cfg.lm_init,
                                **({"rng": cfg.seed} if cfg.lm_init == "random" else {}))
    return {"main": f"# config_hash={chash}\n" + format_region_tree(tree)}


TASKS = {"classify": task_classify, "estimate": task_estimate, "design": task_design,
         "analyze": task_analyze, "quantize": task_quantize}

DEFAULT_SUFFIX = {"classify": ".csv", "estimate": ".csv", "analyze": ".csv", "quantize": ".tree", "design": ""}


def _output_paths(cfg: ExperimentConfig, files: dict, out: Path) -> dict:
    if cfg.task == "design":
        return {name: out / name for name in files}
    paths = {"main": out}
    if "trace" in files:
        paths["trace"] = Path(cfg.trace) if cfg.trace else out.with_suffix(".trace.csv")
    return paths


def execute(cfg: ExperimentConfig, overrides: dict, threads: int = 1) -> list:
    """Run a parsed config and write its outputs; returns the written paths."""
    chash = cfg.config_hash(overrides)
    out = Path(cfg.out) if cfg.out else Path("results") / (Path(cfg.source or "run").stem + "-" + cfg.task
                                                           + DEFAULT_SUFFIX[cfg.task])
    files = TASKS[cfg.task](cfg, chash, threads)
    paths = _output_paths(cfg, files, out)
    manifest = (out / "manifest.json") if cfg.task == "design" else out.with_name(out.name + ".manifest.json")
    # everything is computed before the first byte is written
    for name, text in files.items():
        _write_atomic(paths[name], text)
    written = [paths[n] for n in files]
    _write_atomic(manifest, _manifest(cfg, chash, written, overrides))
    return written + [manifest]


def _parser():
    ap = argparse.ArgumentParser(prog="treecode", description="Code-matrix fusion in tree networks.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ["run", "validate", *SUBCOMMANDS]:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument("--seed", type=int, help="override [run] seed")
        p.add_argument("--out", help="override [run] out")
        p.add_argument("--threads", type=int, help="worker threads for Monte Carlo chunks")
        p.add_argument("--snr-base", type=int, choices=(2, 10), help="override [model] snr_base")
        p.add_argument("-v", "--verbose", action="store_true")
    return ap


def _apply_overrides(cfg: ExperimentConfig, args) -> dict:
    ov = {}
    if args.seed is not None:
        cfg.seed = ov["seed"] = args.seed
    if args.out is not None:
        cfg.out = ov["out"] = args.out
    if args.snr_base is not None:
        cfg.snr_base = ov["snr_base"] = args.snr_base
    return ov


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    path = Path(args.config)
    if not path.exists():
        print(f"error: config file {path} does not exist", file=sys.stderr)
        return EXIT_CONFIG
    text = path.read_text()
    task = SUBCOMMANDS.get(args.command)

    if args.command == "validate":
        diags, cfg = validate_text(text, str(path))
        for d in diags:
            print(d)
        return EXIT_OK if cfg is not None else EXIT_CONFIG

    try:
        cfg = parse_config(text, str(path), task)
        overrides = _apply_overrides(cfg, args)
        threads = args.threads if args.threads is not None else cfg.threads
        if threads < 1:
            raise ConfigError("--threads must be >= 1")
        written = execute(cfg, overrides, threads)
    except (ConfigError, CapacityError, EncodingOverflowError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for p in written:
        print(p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
