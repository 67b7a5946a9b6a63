"""Experiment configuration files.

The format is INI-style ``key = value`` text with sections; lists are
whitespace- or comma-separated.  See ``configs/`` for complete examples and
README.md for the grammar.
"""
from __future__ import annotations

import configparser
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .codebook import CodeMatrix, from_integer_columns, read_code_matrix
from .exceptions import ConfigError

TASKS = ("classify", "estimate", "design", "analyze", "quantize")


def _find_line(text: str, section: str, key: str | None):
    cur = None
    for no, raw in enumerate(text.splitlines(), start=1):
        s = raw.strip()
        if s.startswith("[") and s.endswith("]"):
            cur = s[1:-1].strip()
            if key is None and cur == section:
                return no
            continue
        if cur == section and key is not None and "=" in s:
            if s.split("=", 1)[0].strip().lower() == key.lower():
                return no
    return None


def _floats(s: str):
    toks = s.replace(",", " ").split()
    return [float(t) for t in toks]


def _ints(s: str):
    toks = s.replace(",", " ").split()
    return [int(t) for t in toks]


@dataclass
class ExperimentConfig:
    task: str
    K: int
    N: int
    M: int
    seed: int = 0
    trials: int = 5000
    out: str | None = None
    trace: str | None = None
    threads: int = 1
    priors: list | None = None
    # observation model
    family: str = "gaussian-shift"
    sigma: float = 1.0
    snr_base: int = 2
    snr: float | None = None
    mean_steps: list | None = None
    prior: str = "uniform"
    prior_lo: float = 0.0
    prior_hi: float = 1.0
    prior_mu: float = 0.0
    prior_sd: float = 1.0
    # axes
    snr_axis: list = field(default_factory=list)
    theta_max_axis: list = field(default_factory=list)
    sigma_axis: list = field(default_factory=list)
    betas: list = field(default_factory=lambda: [0.0])
    # codes
    matrices: list = field(default_factory=list)  # level 1..K
    base_matrices: list = field(default_factory=list)  # estimation base blocks, level 1..K
    # rules
    rule_method: str = "pbpo"
    pbpo_iters: int = 100
    pbpo_tol: float = 1e-8
    # estimation
    theta_sharing: str = "common"
    noisy_collaboration: bool = False
    hierarchical: bool = False
    region_tree_file: str | None = None
    # design
    design_method: str = "anneal"
    T0: float = 0.1
    alpha: float = 0.95
    steps_per_temp: int = 200
    T_min: float = 1e-4
    # analysis
    d_min_levels: list | None = None
    q_max_levels: list | None = None
    a_levels: list | None = None
    a_strategy: str = "tightest"
    # quantize
    cells: int | None = None
    lm_tol: float = 1e-12
    lm_max_iters: int = 1000
    lm_init: str = "quantile"
    text: str = ""
    source: str | None = None

    @property
    def n_total(self) -> int:
        return sum(self.N**k for k in range(1, self.K + 1)) + 1

    @property
    def prior_array(self):
        if self.priors is None:
            return np.full(self.M, 1.0 / self.M)
        return np.asarray(self.priors, float)

    def config_hash(self, overrides: dict | None = None) -> str:
        """Digest of the config text and result-affecting overrides (the output path is not one)."""
        h = hashlib.sha256(self.text.encode())
        for k in sorted(k for k in (overrides or {}) if k != "out"):
            h.update(f"\n{k}={overrides[k]}".encode())
        return h.hexdigest()


class _Reader:
    def __init__(self, cp: configparser.ConfigParser, text: str, base: Path):
        self.cp, self.text, self.base = cp, text, base

    def line(self, section, key=None):
        return _find_line(self.text, section, key)

    def get(self, section, key, conv=str, default=None, required=False):
        if not self.cp.has_option(section, key):
            if required:
                raise ConfigError(f"missing required key '{key}' in [{section}]", self.line(section))
            return default
        raw = self.cp.get(section, key)
        try:
            return conv(raw)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"[{section}] {key}: cannot parse {raw!r} ({exc})", self.line(section, key)) from None

    def matrix(self, section, key, M):
        if self.cp.has_option(section, key + "_file"):
            path = self.base / self.cp.get(section, key + "_file")
            if not path.exists():
                raise ConfigError(f"code-matrix file {path} does not exist", self.line(section, key + "_file"))
            try:
                C = read_code_matrix(path)
            except ValueError as exc:
                raise ConfigError(f"{path}: {exc}", self.line(section, key + "_file")) from None
        elif self.cp.has_option(section, key):
            cols = self.get(section, key, _ints)
            try:
                C = from_integer_columns(cols, M)
            except ValueError as exc:
                raise ConfigError(f"[{section}] {key}: {exc}", self.line(section, key)) from None
        else:
            return None
        if C.M != M:
            raise ConfigError(f"[{section}] {key}: matrix has {C.M} rows, expected M={M}", self.line(section, key))
        return C


def _bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def parse_config(text: str, source: str | None = None, task: str | None = None) -> ExperimentConfig:
    """Parse and validate; ``task`` overrides the [run] task key."""
    cfg, r = _parse(text, source, task)
    errors = [d for d in diagnose(cfg, r) if d.severity == "error"]
    if errors:
        raise ConfigError(errors[0].message, errors[0].line)
    return cfg


def _parse(text, source, task):
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text, source=source or "<config>")
    except configparser.Error as exc:
        lineno = getattr(exc, "lineno", None)
        if lineno is None and getattr(exc, "errors", None):
            lineno = exc.errors[0][0]
        raise ConfigError(f"parse error: {exc.message if hasattr(exc, 'message') else exc}", lineno) from None
    base = Path(source).parent if source else Path(".")
    r = _Reader(cp, text, base)
    task = task or r.get("run", "task", required=True)
    if task not in TASKS:
        raise ConfigError(f"unknown task {task!r}; expected one of {', '.join(TASKS)}", r.line("run", "task"))
    cfg = ExperimentConfig(task=task,
                           K=r.get("tree", "K", int, required=True),
                           N=r.get("tree", "N", int, required=True),
                           M=r.get("tree", "M", int, required=True),
                           text=text, source=source)
    cfg.seed = r.get("run", "seed", int, 0)
    cfg.trials = r.get("run", "trials", int, 5000)
    cfg.out = r.get("run", "out", str, None)
    cfg.trace = r.get("run", "trace", str, None)
    cfg.threads = r.get("run", "threads", int, 1)
    cfg.priors = r.get("priors", "values", _floats, None)

    cfg.family = r.get("model", "family", str, "gaussian-shift" if task != "estimate" else "region")
    cfg.sigma = r.get("model", "sigma", float, 1.0)
    cfg.snr_base = r.get("model", "snr_base", int, 2)
    cfg.snr = r.get("model", "snr", float, None)
    cfg.mean_steps = r.get("model", "mean_steps", _floats, None)
    cfg.prior = r.get("model", "prior", str, "uniform")
    cfg.prior_lo = r.get("model", "prior_lo", float, 0.0)
    cfg.prior_hi = r.get("model", "prior_hi", float, 1.0)
    cfg.prior_mu = r.get("model", "prior_mu", float, 0.0)
    cfg.prior_sd = r.get("model", "prior_sd", float, 1.0)

    cfg.snr_axis = r.get("sweep", "snr", _floats, [])
    cfg.theta_max_axis = r.get("sweep", "theta_max", _floats, [])
    cfg.sigma_axis = r.get("sweep", "sigma", _floats, [])
    cfg.betas = r.get("sweep", "beta", _floats, [0.0])

    shape_ok = cfg.M >= 2 and cfg.N >= math.log2(cfg.M)  # otherwise diagnose() reports it
    levels = range(1, cfg.K + 1) if shape_ok else range(0)
    cfg.matrices = [m for m in (r.matrix("codes", f"level{k}", cfg.M) for k in levels) if m is not None]
    shared = r.matrix("codes", "base", cfg.M) if shape_ok else None
    bases = [r.matrix("codes", f"base{k}", cfg.M) for k in levels]
    cfg.base_matrices = [b if b is not None else shared for b in bases]
    if any(b is None for b in cfg.base_matrices):
        cfg.base_matrices = []

    cfg.rule_method = r.get("rules", "method", str, "pbpo")
    cfg.pbpo_iters = r.get("rules", "max_iters", int, 100)
    cfg.pbpo_tol = r.get("rules", "tol", float, 1e-8)

    cfg.theta_sharing = r.get("estimation", "theta_sharing", str, "common")
    cfg.noisy_collaboration = r.get("estimation", "noisy_collaboration", _bool, False)
    cfg.hierarchical = r.get("estimation", "hierarchical", _bool, False)
    cfg.region_tree_file = r.get("estimation", "region_tree", str, None)

    cfg.design_method = r.get("design", "method", str, "anneal")
    cfg.T0 = r.get("design", "T0", float, 0.1)
    cfg.alpha = r.get("design", "alpha", float, 0.95)
    cfg.steps_per_temp = r.get("design", "steps_per_temp", int, 200)
    cfg.T_min = r.get("design", "T_min", float, 1e-4)
    cfg.pbpo_iters = r.get("design", "pbpo_iters", int, cfg.pbpo_iters)

    cfg.d_min_levels = r.get("analysis", "d_min", _ints, None)
    cfg.q_max_levels = r.get("analysis", "q_max", _floats, None)
    cfg.a_levels = r.get("analysis", "a", _floats, None)
    cfg.a_strategy = r.get("analysis", "a_strategy", str, "tightest")

    cfg.cells = r.get("quantize", "cells", int, None)
    cfg.lm_tol = r.get("quantize", "tol", float, 1e-12)
    cfg.lm_max_iters = r.get("quantize", "max_iters", int, 1000)
    cfg.lm_init = r.get("quantize", "init", str, "quantile")
    return cfg, r


@dataclass
class Diagnostic:
    severity: str
    message: str
    line: int | None = None

    def __str__(self):
        where = f"line {self.line}: " if self.line else ""
        return f"{self.severity}: {where}{self.message}"


def diagnose(cfg: ExperimentConfig, r: _Reader | None = None) -> list:
    """Static checks that do not run anything."""
    line = (lambda s, k=None: r.line(s, k)) if r else (lambda s, k=None: None)
    out = []

    def err(msg, sec, key=None):
        out.append(Diagnostic("error", msg, line(sec, key)))

    if cfg.K < 1:
        err("K must be >= 1", "tree", "K")
    if cfg.N < 1:
        err("N must be >= 1", "tree", "N")
    if cfg.M < 2:
        err("M must be >= 2", "tree", "M")
    elif cfg.N >= 1 and cfg.N < math.log2(cfg.M):
        err(f"N={cfg.N} < log2(M)={math.log2(cfg.M):.3g}: nodes cannot separate the hypotheses", "tree", "N")
    if cfg.trials < 1:
        err("trials must be >= 1", "run", "trials")
    if cfg.threads < 1:
        err("threads must be >= 1", "run", "threads")
    for b in cfg.betas:
        if not (np.isfinite(b) and 0 <= b <= 0.5):
            err(f"beta={b} outside [0, 1/2]", "sweep", "beta")
    if cfg.snr_base not in (2, 10):
        err("snr_base must be 2 or 10", "model", "snr_base")
    if not cfg.sigma >= 0:
        err("sigma must be >= 0", "model", "sigma")
    if cfg.priors is not None:
        p = np.asarray(cfg.priors)
        if len(p) != cfg.M or np.any(p < 0) or abs(p.sum() - 1) > 1e-12:
            err("priors must be M nonnegative values summing to 1", "priors", "values")
    for name, axis in (("snr", cfg.snr_axis), ("theta_max", cfg.theta_max_axis), ("sigma", cfg.sigma_axis)):
        if any(not np.isfinite(v) for v in axis):
            err(f"{name} axis has non-finite values", "sweep", name)
    if any(v <= 0 for v in cfg.theta_max_axis):
        err("theta_max values must be > 0", "sweep", "theta_max")

    if cfg.task == "classify":
        if not cfg.snr_axis:
            err("classify needs a non-empty [sweep] snr axis", "sweep", "snr")
        if len(cfg.matrices) != cfg.K:
            err(f"classify needs level1..level{cfg.K} code matrices", "codes")
        for k, C in enumerate(cfg.matrices, 1):
            if C.N != cfg.N:
                err(f"level{k} matrix has {C.N} columns, expected N={cfg.N}", "codes", f"level{k}")
    elif cfg.task == "estimate":
        if not cfg.theta_max_axis and not cfg.sigma_axis:
            err("estimate needs a non-empty [sweep] theta_max or sigma axis", "sweep")
        if cfg.theta_max_axis and cfg.prior != "uniform":
            err("a theta_max axis requires prior = uniform", "model", "prior")
        if not cfg.base_matrices and len(cfg.matrices) != cfg.K:
            err("estimate needs [codes] base (or base1..baseK) matrices", "codes")
        for C in cfg.base_matrices:
            if C.N != cfg.N:
                err(f"base matrix has {C.N} columns, expected N={cfg.N}", "codes")
        if cfg.theta_sharing not in ("common", "per-node"):
            err("theta_sharing must be common or per-node", "estimation", "theta_sharing")
        if cfg.rule_method not in ("pbpo", "map"):
            err("rules method must be pbpo or map", "rules", "method")
    elif cfg.task == "design":
        if cfg.snr is None:
            err("design needs [model] snr", "model", "snr")
        if cfg.design_method not in ("anneal", "ccr", "anneal+ccr"):
            err("design method must be anneal, ccr or anneal+ccr", "design", "method")
        if not cfg.T0 > cfg.T_min > 0 or not 0 < cfg.alpha < 1:
            err("need T0 > T_min > 0 and 0 < alpha < 1", "design")
    elif cfg.task == "analyze":
        explicit = cfg.d_min_levels is not None or cfg.q_max_levels is not None
        if explicit:
            if cfg.d_min_levels is None or cfg.q_max_levels is None or \
                    len(cfg.d_min_levels) != cfg.K or len(cfg.q_max_levels) != cfg.K:
                err(f"[analysis] d_min and q_max need exactly K={cfg.K} values", "analysis")
        else:
            if cfg.snr is None:
                err("analyze needs [model] snr or explicit [analysis] d_min/q_max", "model", "snr")
            if len(cfg.matrices) != cfg.K:
                err(f"analyze needs level1..level{cfg.K} code matrices", "codes")
        if cfg.a_levels is not None and len(cfg.a_levels) != cfg.K:
            err(f"[analysis] a needs K={cfg.K} values", "analysis", "a")
        if cfg.a_strategy not in ("tightest", "midpoint"):
            err("a_strategy must be tightest or midpoint", "analysis", "a_strategy")
    elif cfg.task == "quantize":
        if cfg.prior == "uniform" and not cfg.prior_hi > cfg.prior_lo:
            err("uniform prior needs prior_hi > prior_lo", "model", "prior_hi")
        if cfg.lm_init not in ("quantile", "random"):
            err("quantize init must be quantile or random", "quantize", "init")
    if cfg.prior not in ("uniform", "normal"):
        err(f"unknown prior {cfg.prior!r}", "model", "prior")
    if cfg.family not in ("gaussian-shift", "region"):
        err(f"unknown model family {cfg.family!r}", "model", "family")
    if cfg.mean_steps is not None and len(cfg.mean_steps) != cfg.M:
        err("mean_steps needs M values", "model", "mean_steps")
    return out


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file {p} does not exist")
    return parse_config(p.read_text(), str(p))


def validate_text(text: str, source: str | None = None, task: str | None = None):
    """All diagnostics for a config plus the parsed config (None on errors); never raises."""
    try:
        cfg, r = _parse(text, source, task)
    except ConfigError as exc:
        msg = str(exc).split(": ", 1)[1] if exc.line else str(exc)
        return [Diagnostic("error", msg, exc.line)], None
    diags = diagnose(cfg, r)
    diags.insert(0, Diagnostic("info", f"perfect tree T({cfg.K},{cfg.N}) has N_total = {cfg.n_total} nodes"))
    ok = not any(d.severity == "error" for d in diags)
    return diags, (cfg if ok else None)


def base_for_estimation(cfg: ExperimentConfig) -> list:
    if cfg.base_matrices:
        return list(cfg.base_matrices)
    # fall back to the leading N-column block of full-width level matrices
    return [CodeMatrix(C.bits[:, :cfg.N]) for C in cfg.matrices]
