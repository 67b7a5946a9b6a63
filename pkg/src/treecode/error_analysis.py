"""Exact misclassification probabilities and asymptotic bounds.

Levels are numbered as in the tree: the fusion centre is level 0, leaves
are level K, and ``matrices[k-1]`` is the code matrix that level-k nodes use
to transmit (and that level k-1 uses to fuse).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .codebook import CodeMatrix
from .local_rules import ENUM_CAP, check_capacity, cost_table, rule_bit_table, word_probabilities


# ------------------------------------------------------------- exact errors


def error_from_bit_probs(C: CodeMatrix, priors, bit_probs, cap: int = ENUM_CAP) -> float:
    """sum_{i,l} P_l P(u = i | H_l) psi(i, l) for independent bits with P(u_j = 1 | H_l) = bit_probs[j, l]."""
    check_capacity(C.N, cap)
    psi = cost_table(C, cap)
    wp = word_probabilities(bit_probs)
    return float(np.einsum("l,il,il->", np.asarray(priors, float), wp, psi))


def leaf_error_exact(C: CodeMatrix, model, priors, rules, cap: int = ENUM_CAP) -> float:
    """Misclassification at the parent of the sensing nodes (leaf-level error)."""
    check_capacity(C.N, cap)
    return error_from_bit_probs(C, priors, rule_bit_table(rules, model), cap)


def bit_probs_from_confusion(C: CodeMatrix, conf) -> np.ndarray:
    """P(u_j = 1 | H_l) = sum_m c_mj P_ml for relaying nodes, shape (N, M)."""
    return C.bits.T.astype(float) @ np.asarray(conf, float)


def intermediate_error(C: CodeMatrix, conf_prev, priors, cap: int = ENUM_CAP) -> float:
    """Misclassification one level up from relaying nodes whose decisions have confusion ``conf_prev``.

    Evaluated term by term as
    sum_{i,l} P_l prod_j [(2 i_j - 1) sum_m c_mj P_ml + (1 - i_j)] psi(i, l).
    """
    check_capacity(C.N, cap)
    psi = cost_table(C, cap)
    conf_prev = np.asarray(conf_prev, float)
    priors = np.asarray(priors, float)
    s = C.bits.T.astype(float) @ conf_prev  # (N, M)
    total = 0.0
    n = C.N
    for i in range(1 << n):
        bits = (i >> np.arange(n)) & 1
        factors = (2 * bits - 1)[:, None] * s + (1 - bits)[:, None]
        total += float(np.sum(priors * np.prod(factors, axis=0) * psi[i]))
    return total


def confusion_from_bit_probs(C: CodeMatrix, bit_probs, cap: int = ENUM_CAP) -> np.ndarray:
    """P[m, l] = P(decide m | H_l) = 1 - sum_i P(u = i | H_l) psi(i, m)."""
    check_capacity(C.N, cap)
    psi = cost_table(C, cap)
    wp = word_probabilities(bit_probs)
    return 1.0 - psi.T @ wp


def confusion_from_level(C: CodeMatrix, bit_probs=None, conf_prev=None, cap: int = ENUM_CAP) -> np.ndarray:
    if (bit_probs is None) == (conf_prev is None):
        raise ValueError("give exactly one of bit_probs or conf_prev")
    if conf_prev is not None:
        bit_probs = bit_probs_from_confusion(C, conf_prev)
    return confusion_from_bit_probs(C, bit_probs, cap)


def through_bsc(bit_probs, beta: float) -> np.ndarray:
    """Bit probabilities after a binary symmetric channel with crossover beta."""
    p = np.asarray(bit_probs, float)
    return p * (1 - beta) + (1 - p) * beta


@dataclass
class ChainResult:
    error: float
    confusions: list  # confusions[k] is the confusion of level-k decisions, k = 0..K-1
    bit_probs: list  # bit_probs[k-1] for the bits transmitted by level k


def chained_classification_error(matrices, leaf_bit_probs, priors, beta: float = 0.0,
                                 cap: int = ENUM_CAP) -> ChainResult:
    """End-to-end error at the fusion centre for the classification tree.

    ``leaf_bit_probs`` are the sensing nodes' P(u_j = 1 | H_l) (before any channel).
    """
    K = len(matrices)
    priors = np.asarray(priors, float)
    confusions = [None] * K
    bits = [None] * K
    bits[K - 1] = through_bsc(leaf_bit_probs, beta)
    confusions[K - 1] = confusion_from_bit_probs(matrices[K - 1], bits[K - 1], cap)
    for k in range(K - 1, 0, -1):
        bits[k - 1] = through_bsc(bit_probs_from_confusion(matrices[k - 1], confusions[k]), beta)
        confusions[k - 1] = confusion_from_bit_probs(matrices[k - 1], bits[k - 1], cap)
    err = 1.0 - float(np.sum(priors * np.diag(confusions[0])))
    return ChainResult(err, confusions, bits)


def level_error_profile(matrices, leaf_bit_probs, priors):
    """(d_min^k, q_max^k) for k = 1..K, where q_max^k is the worst bit error of level-k transmissions."""
    chain = chained_classification_error(matrices, leaf_bit_probs, priors)
    out = []
    for k, C in enumerate(matrices, start=1):
        if k == len(matrices):
            q = max_bit_error(C, chain.bit_probs[k - 1])
        else:
            q = float(np.max(1.0 - np.diag(chain.confusions[k])))
        out.append((C.d_min, q))
    return out


def max_bit_error(C: CodeMatrix, bit_probs) -> float:
    """max over (m, j) of P(u_j != c_mj | H_m)."""
    p = np.asarray(bit_probs, float)  # (N, M)
    c = C.bits.T.astype(float)
    err = np.where(c == 1, 1 - p, p)
    return float(err.max())


# ----------------------------------------------------------------- estimation


def level_correct_prob(C: CodeMatrix, bit_probs, priors, cap: int = ENUM_CAP) -> float:
    return 1.0 - error_from_bit_probs(C, priors, bit_probs, cap)


def estimation_error_recursive(matrices, bit_probs, priors, cap: int = ENUM_CAP) -> float:
    """1 - prod_t (1 - P_e^t) with each factor the single-level DCFECC error.

    ``matrices``, ``bit_probs`` and ``priors`` are per level, any consistent order.
    """
    prod = 1.0
    for C, bp, pr in zip(matrices, bit_probs, priors, strict=True):
        prod *= level_correct_prob(C, bp, pr, cap)
    return 1.0 - prod


# --------------------------------------------------------------------- bounds


def a_window(q: float, M: int):
    """Open interval for a_k: (lower bound forced by the a_k condition, upper end of the tightening window)."""
    den = q - 4 * q * q * (1 - q)
    lower = 2 * (1 - q) / den
    upper = (q * (2 * M - 2) + 2 * (1 - q)) / den
    return lower, upper


def dmin_condition_rhs(q: float, a: float, M: int) -> float:
    """Right-hand side of the d_min feasibility condition, inf if its denominator is not positive."""
    den = (1 - 4 * q * (1 - q)) - (1 / a) * (2 / q - 2)
    if den <= 0:
        return math.inf
    return 2 * (M - 2) / den


def tightest_a(q: float, d: int, M: int) -> float | None:
    """Smallest a satisfying both conditions for this (q, d), or None when none exists."""
    lower, _ = a_window(q, M)
    slack = (1 - 4 * q * (1 - q)) - 2 * (M - 2) / d
    if slack <= 0:
        return None
    # a_d makes the d_min condition an equality; step just inside it so rounding cannot flip the check
    a_d = (2 / q - 2) / slack * (1 + 1e-12)
    # the a_k condition is strict
    return max(a_d, math.nextafter(lower, math.inf))


@dataclass
class LevelBound:
    level: int
    d_min: int
    q_max: float
    a: float | None
    factor: float | None
    a_ok: bool
    d_ok: bool


@dataclass
class BoundReport:
    levels: list
    feasible: bool
    bound: float | None
    exponent: float | None = None
    notes: list = field(default_factory=list)

    @property
    def effective_bound(self) -> float:
        """The bound value, or the trivial bound 1 when inapplicable."""
        return self.bound if self.feasible else 1.0


def classification_bound(levels, M: int, a=None, strategy: str = "tightest") -> BoundReport:
    """Fusion-centre error bound  q_K ** prod_k (d_k / a_k).

    ``levels`` is a sequence of (d_min^k, q_max^k) for k = 1..K.  ``a`` may
    supply every a_k explicitly; otherwise ``strategy`` picks them:
    ``"tightest"`` uses the smallest admissible a_k, ``"midpoint"`` the
    centre of the tightening window.
    """
    levels = [(int(d), float(q)) for d, q in levels]
    K = len(levels)
    if a is not None and len(a) != K:
        raise ValueError("need one a_k per level")
    rows = []
    notes = []
    if any(q >= 0.5 for _, q in levels):
        notes.append("q_max >= 1/2 at some level")
        rows = [LevelBound(k, d, q, None, None, False, False) for k, (d, q) in enumerate(levels, 1)]
        return BoundReport(rows, False, None, None, notes)
    if any(q == 0 for _, q in levels):
        notes.append("q_max = 0: conditions hold vacuously")
        rows = [LevelBound(k, d, q, None, None, True, True) for k, (d, q) in enumerate(levels, 1)]
        return BoundReport(rows, True, 0.0, math.inf, notes)

    feasible = True
    exponent = 1.0
    for k, (d, q) in enumerate(levels, start=1):
        lower, upper = a_window(q, M)
        if a is not None:
            ak = float(a[k - 1])
        elif strategy == "midpoint":
            ak = 0.5 * (lower + upper)
        elif strategy == "tightest":
            ak = tightest_a(q, d, M)
        else:
            raise ValueError(f"unknown a_k strategy {strategy!r}")
        if ak is None:
            rows.append(LevelBound(k, d, q, None, None, False, False))
            feasible = False
            continue
        a_ok = ak > lower
        d_ok = a_ok and d >= dmin_condition_rhs(q, ak, M)
        rows.append(LevelBound(k, d, q, ak, d / ak, a_ok, d_ok))
        feasible &= a_ok and d_ok
        exponent *= d / ak
    if not feasible:
        return BoundReport(rows, False, None, None, notes)
    q_leaf = levels[-1][1]
    return BoundReport(rows, True, float(q_leaf**exponent), exponent, notes)


@dataclass
class EstimationBound:
    bound: float | None
    factors: list
    applicable: bool


def estimation_bound(levels, M: int) -> EstimationBound:
    """Zoom-in error bound  1 - prod_k [1 - (M-1) (4 q_k (1 - q_k)) ** (d_k / 2)].

    Each factor is clipped to [0, 1] so a level whose term exceeds one
    contributes the trivial bound.
    """
    levels = [(int(d), float(q)) for d, q in levels]
    if any(q >= 0.5 for _, q in levels):
        return EstimationBound(None, [], False)
    factors = []
    for d, q in levels:
        f = 1.0 - (M - 1) * (4 * q * (1 - q)) ** (d / 2)
        factors.append(min(max(f, 0.0), 1.0))
    return EstimationBound(float(min(max(1.0 - math.prod(factors), 0.0), 1.0)), factors, True)
