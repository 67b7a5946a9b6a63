"""Offline code-matrix optimisation: annealing, cyclic column replacement,
and the level-by-level design of a whole tree."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .codebook import CodeMatrix
from .error_analysis import (bit_probs_from_confusion, confusion_from_bit_probs,
                             error_from_bit_probs, intermediate_error)
from .local_rules import pbpo_fixed_point

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AnnealSchedule:
    T0: float = 0.1
    alpha: float = 0.95
    steps_per_temp: int = 200
    T_min: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if not self.T0 > self.T_min > 0:
            raise ValueError("need T0 > T_min > 0")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.steps_per_temp < 1:
            raise ValueError("steps_per_temp must be >= 1")


@dataclass
class DesignResult:
    matrix: CodeMatrix
    objective: float
    trace: list = field(default_factory=list)
    converged: bool = True
    extra: dict = field(default_factory=dict)

    @property
    def d_min(self):
        return self.matrix.d_min


class _Cached:
    """Memoise an objective on the matrix bits; annealing revisits states often."""

    def __init__(self, objective):
        self.objective = objective
        self.cache = {}

    def __call__(self, bits: np.ndarray) -> float:
        key = bits.tobytes()
        if key not in self.cache:
            self.cache[key] = float(self.objective(CodeMatrix(bits.copy())))
        return self.cache[key]


def _distinct_rows(bits) -> bool:
    return len({r.tobytes() for r in bits}) == bits.shape[0]


def random_matrix(M: int, N: int, rng) -> np.ndarray:
    while True:
        bits = rng.integers(0, 2, size=(M, N), dtype=np.uint8)
        if _distinct_rows(bits):
            return bits


def anneal(objective, M: int, N: int, schedule: AnnealSchedule = AnnealSchedule(), rng=None,
           start: CodeMatrix | None = None) -> DesignResult:
    """Metropolis annealing over single-bit flips, returning the best matrix seen.

    Candidates with duplicate rows are rejected outright.  The trace holds the
    best-so-far objective at the end of each temperature.
    """
    rng = np.random.default_rng(schedule.seed if rng is None else rng)
    f = _Cached(objective)
    cur = start.bits.copy() if start is not None else random_matrix(M, N, rng)
    cur_obj = f(cur)
    best, best_obj = cur.copy(), cur_obj
    trace = [best_obj]
    T = schedule.T0
    while T >= schedule.T_min:
        for _ in range(schedule.steps_per_temp):
            m, j = rng.integers(M), rng.integers(N)
            cand = cur.copy()
            cand[m, j] ^= 1
            if not _distinct_rows(cand):
                continue
            obj = f(cand)
            delta = obj - cur_obj
            if delta <= 0 or rng.random() < math.exp(-delta / T):
                cur, cur_obj = cand, obj
                if obj < best_obj:
                    best, best_obj = cand.copy(), obj
        trace.append(best_obj)
        T *= schedule.alpha
    return DesignResult(CodeMatrix(best), best_obj, trace, True, {"evaluations": len(f.cache)})


def cyclic_column_replacement(objective, start: CodeMatrix, max_passes: int = 50) -> DesignResult:
    """Greedy sweep: each column in turn is replaced by its best value among all 2**M."""
    f = _Cached(objective)
    cur = start.bits.copy()
    cur_obj = f(cur)
    trace = [cur_obj]
    M, N = cur.shape
    values = ((np.arange(1 << M)[:, None] >> np.arange(M - 1, -1, -1)) & 1).astype(np.uint8)
    converged = False
    for _ in range(max_passes):
        improved = False
        for j in range(N):
            for col in values:
                if np.array_equal(col, cur[:, j]):
                    continue
                cand = cur.copy()
                cand[:, j] = col
                if not _distinct_rows(cand):
                    continue
                obj = f(cand)
                if obj < cur_obj - 1e-15:
                    cur, cur_obj, improved = cand, obj, True
            trace.append(cur_obj)
        if not improved:
            converged = True
            break
    return DesignResult(CodeMatrix(cur), cur_obj, trace, converged, {"evaluations": len(f.cache)})


# ------------------------------------------------------------------ objectives


def leaf_objective(model, priors, pbpo_iters: int = 100, pbpo_tol: float = 1e-8):
    """Leaf-level error with person-by-person rules refreshed for each candidate."""
    priors = np.asarray(priors, float)

    def objective(C: CodeMatrix) -> float:
        res = pbpo_fixed_point(C, model, priors, max_iters=pbpo_iters, tol=pbpo_tol)
        return error_from_bit_probs(C, priors, res.bit_probs)

    return objective


def intermediate_objective(conf_prev, priors):
    def objective(C: CodeMatrix) -> float:
        return intermediate_error(C, conf_prev, priors)

    return objective


def optimise(objective, M, N, method="anneal", schedule=AnnealSchedule(), start=None, max_passes=50):
    if method == "anneal":
        return anneal(objective, M, N, schedule, start=start)
    if method == "ccr":
        if start is None:
            start = CodeMatrix(random_matrix(M, N, np.random.default_rng(schedule.seed)))
        return cyclic_column_replacement(objective, start, max_passes)
    if method == "anneal+ccr":
        a = anneal(objective, M, N, schedule, start=start)
        c = cyclic_column_replacement(objective, a.matrix, max_passes)
        c.trace = a.trace + c.trace
        return c
    raise ValueError(f"unknown design method {method!r}")


def design_tree_codes(K: int, N: int, model, priors, method: str = "anneal",
                      schedule: AnnealSchedule = AnnealSchedule(), pbpo_iters: int = 100) -> list:
    """Design C^K .. C^1 in sequence; returns DesignResults ordered level 1..K.

    Each result's ``extra`` carries the bit probabilities transmitted by that
    level and the confusion matrix of the level above's decisions.
    """
    priors = np.asarray(priors, float)
    M = len(priors)
    results = [None] * K
    leaf = optimise(leaf_objective(model, priors, pbpo_iters), M, N, method, schedule)
    rules = pbpo_fixed_point(leaf.matrix, model, priors, max_iters=pbpo_iters)
    leaf.extra.update(bit_probs=rules.bit_probs, rules=rules.rules,
                      confusion=confusion_from_bit_probs(leaf.matrix, rules.bit_probs))
    results[K - 1] = leaf
    conf = leaf.extra["confusion"]
    for k in range(K - 1, 0, -1):
        sched = AnnealSchedule(schedule.T0, schedule.alpha, schedule.steps_per_temp, schedule.T_min,
                               schedule.seed + K - k)
        res = optimise(intermediate_objective(conf, priors), M, N, method, sched)
        bp = bit_probs_from_confusion(res.matrix, conf)
        res.extra.update(bit_probs=bp, confusion=confusion_from_bit_probs(res.matrix, bp))
        results[k - 1] = res
        conf = res.extra["confusion"]
        log.info("level %d designed: P_e=%.6g d_min=%d", k, res.objective, res.d_min)
    return results
