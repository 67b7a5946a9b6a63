"""Monte Carlo simulation of the tree protocols.

Trials are processed in fixed-size chunks.  Every chunk owns four random
streams spawned from the root seed (truth, observations, tie-breaks, channel
flips), so results depend only on (seed, config) and never on thread count
or on whether a zero-crossover channel stage is present.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .codebook import CodeMatrix, fuse_batch
from .local_rules import ShiftedRule, map_init_rules, pbpo_fixed_point
from .observation import RegionModel, UniformPrior
from .quantizer import RegionTree

CHUNK_BITS = 1 << 21


@dataclass(frozen=True)
class TreeConfig:
    """Perfect tree T(K, N) with M hypotheses; ``matrices[k-1]`` is used by level-k transmitters."""

    K: int
    N: int
    M: int
    matrices: tuple
    beta: float = 0.0
    trials: int = 5000
    seed: int = 0
    priors: tuple | None = None

    def __post_init__(self):
        if self.K < 1 or self.N < 1 or self.M < 2:
            raise ValueError("need K >= 1, N >= 1, M >= 2")
        if not 0 <= self.beta <= 0.5:
            raise ValueError(f"crossover beta={self.beta} outside [0, 1/2]")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if len(self.matrices) != self.K:
            raise ValueError(f"need {self.K} code matrices, got {len(self.matrices)}")
        if any(C.M != self.M for C in self.matrices):
            raise ValueError("every code matrix must have M rows")
        object.__setattr__(self, "matrices", tuple(self.matrices))

    @property
    def n_total(self) -> int:
        return sum(self.N**k for k in range(1, self.K + 1)) + 1

    @property
    def prior_array(self) -> np.ndarray:
        if self.priors is None:
            return np.full(self.M, 1.0 / self.M)
        return np.asarray(self.priors, float)

    def replace(self, **kw):
        d = dict(K=self.K, N=self.N, M=self.M, matrices=self.matrices, beta=self.beta,
                 trials=self.trials, seed=self.seed, priors=self.priors)
        d.update(kw)
        return TreeConfig(**d)


@dataclass
class TrialRecords:
    truth: np.ndarray
    decision: np.ndarray
    trace: np.ndarray | None = None  # (trials, K) per-level decisions
    intervals: np.ndarray | None = None  # (trials, K, 2) zoom intervals, estimation only


@dataclass
class ClassificationResult:
    p_error: float
    ci: tuple
    errors: int
    trials: int
    records: TrialRecords

    @property
    def std_error(self):
        p = self.p_error
        return float(np.sqrt(p * (1 - p) / self.trials))


@dataclass
class EstimationResult:
    mse: float
    mse_ci: tuple
    p_detect: float
    detect_ci: tuple
    trials: int
    records: TrialRecords


def wilson_ci(k: int, n: int, level: float = 0.95):
    ci = stats.binomtest(int(k), int(n)).proportion_ci(confidence_level=level, method="wilson")
    return float(ci.low), float(ci.high)


def apply_bsc(u, beta: float, rng) -> np.ndarray:
    """Flip each bit independently with probability beta (one uniform per bit)."""
    if not 0 <= beta <= 0.5:
        raise ValueError(f"crossover beta={beta} outside [0, 1/2]")
    u = np.asarray(u, dtype=np.uint8)
    flips = rng.random(u.shape) < beta
    return u ^ flips.astype(np.uint8)


def _chunks(seed, trials, width):
    size = max(1, CHUNK_BITS // max(width, 1))
    starts = list(range(0, trials, size))
    children = np.random.SeedSequence(seed).spawn(len(starts))
    for start, ss in zip(starts, children):
        streams = [np.random.default_rng(s) for s in ss.spawn(4)]
        yield start, min(size, trials - start), streams


def _run_chunks(fn, seed, trials, width, threads):
    jobs = list(_chunks(seed, trials, width))
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(lambda j: fn(*j), jobs))
    return [fn(*j) for j in jobs]


def _emit_columns(rules, model, y, out):
    """Column c of y uses rules[c % len(rules)] (concatenated code blocks)."""
    nb = len(rules)
    for j, r in enumerate(rules):
        out[:, j::nb] = r.emit(model, y[:, j::nb])


# -------------------------------------------------------------- classification


def run_classification(cfg: TreeConfig, model, rules, trace: bool = False, threads: int = 1,
                       force_bsc: bool = False) -> ClassificationResult:
    """Simulate leaf sensing, per-level fuse-and-relay, and fusion at the root."""
    K, N, M = cfg.K, cfg.N, cfg.M
    if any(C.N != N for C in cfg.matrices):
        raise ValueError("classification matrices must have N columns")
    if len(rules) != N:
        raise ValueError(f"need {N} leaf rules, got {len(rules)}")
    priors = cfg.prior_array
    leaves = N**K

    def chunk(start, size, streams):
        r_truth, r_obs, r_tie, r_bsc = streams
        truth = r_truth.choice(M, size=size, p=priors)
        y = model.sample_many(truth, r_obs, leaves)
        bits = np.empty((size, leaves), dtype=np.uint8)
        _emit_columns(rules, model, y, bits)
        tr = np.empty((size, K), dtype=np.int64) if trace else None
        for k in range(K, 0, -1):
            if cfg.beta > 0 or force_bsc:
                bits = apply_bsc(bits, cfg.beta, r_bsc)
            C = cfg.matrices[k - 1]
            dec = fuse_batch(C, bits.reshape(size, N ** (k - 1), N), r_tie)
            if trace:
                tr[:, K - k] = dec[:, 0]
            if k > 1:
                pos = np.arange(N ** (k - 1)) % N
                bits = cfg.matrices[k - 2].bits[dec, pos]
        return truth, dec[:, 0], tr

    parts = _run_chunks(chunk, cfg.seed, cfg.trials, leaves, threads)
    truth = np.concatenate([p[0] for p in parts])
    decision = np.concatenate([p[1] for p in parts])
    tr = np.concatenate([p[2] for p in parts]) if trace else None
    errors = int(np.count_nonzero(truth != decision))
    return ClassificationResult(errors / cfg.trials, wilson_ci(errors, cfg.trials), errors, cfg.trials,
                                TrialRecords(truth, decision, tr))


# ------------------------------------------------------------------ estimation


def estimation_matrices(base, N: int, K: int) -> tuple:
    """Per-level matrices of width N**k built by concatenating each level's base block."""
    from .codebook import concatenate

    if isinstance(base, CodeMatrix):
        base = [base] * K
    return tuple(concatenate(b, N ** (k - 1)) for k, b in enumerate(base, start=1))


def _translate_of(tree: RegionTree, edges, base_edges) -> bool:
    """True when a node's partition is an exact shift of another's under a flat prior."""
    if not isinstance(tree.prior, UniformPrior):
        return False
    e, b = np.asarray(edges), np.asarray(base_edges)
    if not (np.all(np.isfinite(e)) and np.all(np.isfinite(b))):
        return False
    return bool(np.allclose(np.diff(e), np.diff(b), rtol=1e-12, atol=0))


def design_estimation_rules(tree: RegionTree, base_matrices, sigma: float, method: str = "pbpo",
                            max_iters: int = 100, tol: float = 1e-8, reuse_translates: bool = True) -> dict:
    """Sensing rules for every zoom node, keyed by (depth, index).

    Rules are optimised for the N-column base block of the transmitting level
    and reused for every concatenated copy.  Under a uniform prior, nodes whose
    partition is a translate of an already designed one reuse its rules shifted.
    """
    K = tree.K
    if isinstance(base_matrices, CodeMatrix):
        base_matrices = [base_matrices] * K
    if method not in ("pbpo", "map"):
        raise ValueError(f"unknown rule method {method!r}")
    rules = {}
    for d in range(K):
        C = base_matrices[K - d - 1]
        designed = []  # (edges, model, rules)
        for p in tree.nodes(d):
            edges = tree.partition(d, p)
            if reuse_translates:
                hit = next((x for x in designed if _translate_of(tree, edges, x[0])), None)
                if hit is not None:
                    off = float(edges[0] - hit[0][0])
                    rules[(d, p)] = [ShiftedRule(r, hit[1], off) for r in hit[2]]
                    continue
            model = RegionModel(tuple(edges), tree.prior, sigma)
            pri = model.priors
            if method == "pbpo":
                rs = pbpo_fixed_point(C, model, pri, max_iters=max_iters, tol=tol).rules
            else:
                rs = map_init_rules(C, pri)
            rules[(d, p)] = rs
            designed.append((edges, model, rs))
    return rules


def run_estimation(cfg: TreeConfig, tree: RegionTree, sigma: float, rules: dict, trace: bool = False,
                   theta_sharing: str = "common", noisy_collaboration: bool = False,
                   threads: int = 1) -> EstimationResult:
    """Simulate the zoom-in estimation protocol.

    ``theta_sharing="common"`` gives every node y = theta + noise for one
    theta per trial.  ``"per-node"`` instead draws an independent theta for
    each node from the prior restricted to the true sub-region, which is the
    conditional-independence model the exact error formulas assume.

    With ``noisy_collaboration`` the bits a deciding node receives from the
    other nodes of its level cross a second channel hop; the decision of the
    first node of the level is used for the zoom.
    """
    K, N, M = cfg.K, cfg.N, cfg.M
    if tree.M != M or tree.K != K:
        raise ValueError("region tree shape does not match the tree config")
    for k, C in enumerate(cfg.matrices, start=1):
        if C.N != N**k:
            raise ValueError(f"level {k} matrix must have N**{k} = {N**k} columns, got {C.N}")
    if theta_sharing not in ("common", "per-node"):
        raise ValueError(f"unknown theta_sharing {theta_sharing!r}")
    prior = tree.prior
    lo, hi = tree.edges[0], tree.edges[-1]
    models = {}

    def model_for(d, p):
        if (d, p) not in models:
            models[(d, p)] = RegionModel(tuple(tree.partition(d, p)), prior, sigma)
        return models[(d, p)]

    def chunk(start, size, streams):
        r_truth, r_obs, r_tie, r_bsc = streams
        theta = prior.sample_in(lo, hi, r_truth, size)
        node = np.zeros(size, dtype=np.int64)
        dec_trace = np.empty((size, K), dtype=np.int64) if trace else None
        iv = np.empty((size, K, 2)) if trace else None
        for s in range(1, K + 1):
            d, t = s - 1, K + 1 - s
            W = N**t
            C = cfg.matrices[t - 1]
            noise = sigma * r_obs.standard_normal((size, W))
            bits = np.empty((size, W), dtype=np.uint8)
            for p in np.unique(node):
                mask = node == p
                model = model_for(d, int(p))
                if theta_sharing == "common":
                    y = theta[mask, None] + noise[mask]
                else:
                    e = np.asarray(model.edges)
                    true_l = np.clip(np.searchsorted(e, theta[mask], side="right") - 1, 0, M - 1)
                    th = np.empty((int(mask.sum()), W))
                    for l in np.unique(true_l):
                        sel = true_l == l
                        th[sel] = prior.sample_in(e[l], e[l + 1], r_truth, (int(sel.sum()), W))
                    y = th + noise[mask]
                sub = np.empty((int(mask.sum()), W), dtype=np.uint8)
                _emit_columns(rules[(d, int(p))], model, y, sub)
                bits[mask] = sub
            if trace:
                a = np.array([tree.interval(d, int(p)) for p in range(M**d)])
                iv[:, s - 1] = a[node]
            if cfg.beta > 0:
                bits = apply_bsc(bits, cfg.beta, r_bsc)
                if noisy_collaboration:
                    hop = apply_bsc(bits[:, N:], cfg.beta, r_bsc)
                    bits = np.concatenate([bits[:, :N], hop], axis=1)
            dec = fuse_batch(C, bits, r_tie)
            if trace:
                dec_trace[:, s - 1] = dec
            node = node * M + dec
        return theta, node, dec_trace, iv

    parts = _run_chunks(chunk, cfg.seed, cfg.trials, N**K, threads)
    theta = np.concatenate([p[0] for p in parts])
    node = np.concatenate([p[1] for p in parts])
    est = tree.points[node]
    sq = (theta - est) ** 2
    mse = float(sq.mean())
    half = 1.959963984540054 * float(sq.std(ddof=1)) / np.sqrt(len(sq)) if len(sq) > 1 else float("inf")
    correct = int(np.count_nonzero(node == tree.leaf_of(theta)))
    recs = TrialRecords(theta, node,
                        np.concatenate([p[2] for p in parts]) if trace else None,
                        np.concatenate([p[3] for p in parts]) if trace else None)
    return EstimationResult(mse, (mse - half, mse + half), correct / cfg.trials,
                            wilson_ci(correct, cfg.trials), cfg.trials, recs)


# ----------------------------------------------------------------------- sweep


@dataclass
class SweepRow:
    axis: float
    metric: float
    ci_low: float
    ci_high: float
    beta: float
    seed: int


def derive_seed(seed: int, index: int) -> int:
    """Seed for sweep point ``index``; stable across reruns and axis lengths."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1, np.uint32)[0])


def sweep(axis, point_fn, betas=(0.0,), seed: int = 0) -> list:
    """Evaluate ``point_fn(value, beta, seed) -> (metric, (lo, hi))`` over an axis.

    All betas at one axis point share the point's seed, so curves for
    different channels are driven by the same observations.
    """
    axis = list(axis)
    if not axis:
        raise ValueError("sweep axis is empty")
    rows = []
    for i, v in enumerate(axis):
        s = derive_seed(seed, i)
        for b in betas:
            metric, (lo, hi) = point_fn(v, b, s)
            rows.append(SweepRow(float(v), float(metric), float(lo), float(hi), float(b), s))
    return rows


SWEEP_HEADER = ("axis", "metric", "ci_low", "ci_high", "beta", "seed")


def format_sweep_csv(rows, extra_columns: dict | None = None) -> str:
    extra_columns = extra_columns or {}
    head = list(SWEEP_HEADER) + list(extra_columns)
    lines = [",".join(head)]
    for r in rows:
        vals = [repr(r.axis), repr(r.metric), repr(r.ci_low), repr(r.ci_high), repr(r.beta), str(r.seed)]
        vals += [str(v) for v in extra_columns.values()]
        lines.append(",".join(vals))
    return "\n".join(lines) + "\n"
