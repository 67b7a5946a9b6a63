"""One-bit transmission mappings for sensing and relaying nodes.

A sensing node j emits bit 1 iff ``sum_l p(y|H_l) A[j, l] >= 0`` where A is
the person-by-person weight matrix derived from the fusing code matrix and
the other nodes' bit statistics.  A relaying node simply emits the entry of
its code-matrix column selected by its own decision.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from .codebook import CodeMatrix, all_codewords, row_distances
from .exceptions import CapacityError

log = logging.getLogger(__name__)

ENUM_CAP = 24


def check_capacity(n_bits: int, cap: int = ENUM_CAP):
    if n_bits > cap:
        raise CapacityError(f"exact enumeration over {n_bits} bits exceeds cap {cap}; use Monte Carlo")


def cost(C: CodeMatrix, i, l: int) -> float:
    """Cost of truth ``l`` when word ``i`` is received (0, 1 - 1/tie, or 1)."""
    d = row_distances(C, i)
    tied = d == d.min()
    return 1.0 - 1.0 / tied.sum() if tied[l] else 1.0


@lru_cache(maxsize=256)
def _cost_table_cached(C: CodeMatrix) -> np.ndarray:
    words = all_codewords(C.N)
    d = row_distances(C, words)
    tied = d == d.min(axis=1, keepdims=True)
    rho = tied.sum(axis=1, keepdims=True)
    psi = np.where(tied, 1.0 - 1.0 / rho, 1.0)
    psi.setflags(write=False)
    return psi


def cost_table(C: CodeMatrix, cap: int = ENUM_CAP) -> np.ndarray:
    """psi for every received word, shape (2**N, M); row index encodes bit j as (i >> j) & 1."""
    check_capacity(C.N, cap)
    return _cost_table_cached(C)


def word_probabilities(bit_probs: np.ndarray) -> np.ndarray:
    """P(u = i | H_l) for every word i, shape (2**N, M), from P(u_j = 1 | H_l) of shape (N, M)."""
    bit_probs = np.asarray(bit_probs, float)
    out = np.ones((1, bit_probs.shape[1]))
    # appending node j as the new high half puts its bit at (i >> j) & 1
    for p1 in bit_probs:
        out = np.concatenate([out * (1 - p1), out * p1], axis=0)
    return out


def weight_matrix(C: CodeMatrix, priors, bit_probs, cap: int = ENUM_CAP) -> np.ndarray:
    """Person-by-person weights A, shape (N, M).

    A[j, l] = P_l * E_{u_-j | H_l}[ psi(u_-j, u_j=0; l) - psi(u_-j, u_j=1; l) ]
    """
    check_capacity(C.N - 1, cap)
    psi = cost_table(C, cap=max(cap, C.N))
    priors = np.asarray(priors, float)
    bit_probs = np.asarray(bit_probs, float)
    n = C.N
    idx = np.arange(1 << n)
    A = np.empty((n, C.M))
    for j in range(n):
        others = np.delete(bit_probs, j, axis=0)
        wp = word_probabilities(others) if n > 1 else np.ones((1, C.M))
        zero = idx[(idx >> j) & 1 == 0]
        diff = psi[zero] - psi[zero | (1 << j)]
        # words with bit j removed, in the same order as word_probabilities(others)
        low = zero & ((1 << j) - 1)
        high = zero >> (j + 1)
        rest = low | (high << j)
        A[j] = priors * np.einsum("il,il->l", wp[rest], diff)
    return A


# ---------------------------------------------------------------------- rules


class BitRule:
    """A deterministic map from an observation to one bit (1 iff score >= 0)."""

    def score(self, model, y) -> np.ndarray:
        raise NotImplementedError

    def emit(self, model, y) -> np.ndarray:
        return (self.score(model, y) >= 0).astype(np.uint8)


@dataclass(frozen=True)
class ThresholdRule(BitRule):
    weights: tuple

    def score(self, model, y):
        # scaling every likelihood by a common positive factor leaves the sign intact
        ll = model.loglik(y)
        top = np.max(ll, axis=-1, keepdims=True)
        with np.errstate(invalid="ignore"):
            rel = np.exp(ll - np.where(np.isfinite(top), top, 0.0))
        s = rel @ np.asarray(self.weights)
        return np.where(np.isfinite(top[..., 0]), s, 0.0)


@dataclass(frozen=True)
class MapRelayRule(BitRule):
    """Local MAP decision followed by the node's code-matrix column entry."""

    column: tuple
    priors: tuple

    def score(self, model, y):
        ll = model.loglik(y) + np.log(np.asarray(self.priors))
        col = np.asarray(self.column, bool)
        with np.errstate(invalid="ignore"):
            best1 = np.max(np.where(col, ll, -np.inf), axis=-1) if col.any() else np.full(ll.shape[:-1], -np.inf)
            best0 = np.max(np.where(~col, ll, -np.inf), axis=-1) if (~col).any() else np.full(ll.shape[:-1], -np.inf)
        # ties favour the lower-indexed hypothesis like argmax
        first = np.argmax(ll, axis=-1)
        winner_bit = col[first]
        return np.where(best1 == best0, np.where(winner_bit, 1.0, -1.0), best1 - best0)


@dataclass(frozen=True)
class ShiftedRule(BitRule):
    """``rule`` designed for ``base_model``, applied to observations shifted by ``offset``.

    Used when a model is an exact translate of the one the rule was designed for.
    """

    rule: BitRule
    base_model: object
    offset: float

    def score(self, model, y):
        return self.rule.score(self.base_model, np.asarray(y, float) - self.offset)


def intermediate_map(C: CodeMatrix, y: int, j: int) -> int:
    """Bit relayed by node j after deciding hypothesis y."""
    if not (0 <= y < C.M and 0 <= j < C.N):
        raise IndexError(f"(y={y}, j={j}) outside {C.M}x{C.N} code matrix")
    return int(C.bits[y, j])


# ---------------------------------------------------------- bit probabilities


def _positive_intervals(rule: BitRule, model):
    grid = model.grid()
    s = rule.score(model, grid)
    pos = s >= 0
    cuts = []
    for k in np.flatnonzero(pos[1:] != pos[:-1]):
        a, b = grid[k], grid[k + 1]
        f = lambda t: float(rule.score(model, np.array([t]))[0])  # noqa: E731
        fa, fb = f(a), f(b)
        if (fa >= 0) == (fb >= 0):
            cuts.append(0.5 * (a + b))
            continue
        try:
            cuts.append(brentq(f, a, b, xtol=1e-13, rtol=1e-14))
        except ValueError:
            cuts.append(0.5 * (a + b))
    bounds = [-np.inf, *cuts, np.inf]
    state = bool(pos[0])
    out = []
    for lo, hi in zip(bounds, bounds[1:]):
        if state:
            out.append((lo, hi))
        state = not state
    return out


def bit_probabilities(rule: BitRule, model) -> np.ndarray:
    """P(u = 1 | H_l) for each hypothesis, shape (M,)."""
    if getattr(model, "sigma", 1.0) == 0:
        pts = np.asarray(model.means)
        return rule.emit(model, pts).astype(float)
    p = np.zeros(model.M)
    for lo, hi in _positive_intervals(rule, model):
        p += model.interval_prob(lo, hi)
    return np.clip(p, 0.0, 1.0)


def rule_bit_table(rules, model) -> np.ndarray:
    """Stack of bit probabilities, shape (N, M)."""
    return np.array([bit_probabilities(r, model) for r in rules])


def map_init_rules(C: CodeMatrix, priors):
    pri = tuple(float(p) for p in priors)
    return [MapRelayRule(tuple(int(b) for b in C.bits[:, j]), pri) for j in range(C.N)]


# ---------------------------------------------------------------------- PBPO


@dataclass
class PBPOResult:
    rules: list
    bit_probs: np.ndarray
    converged: bool
    iterations: int
    error_trace: list = field(default_factory=list)


def pbpo_fixed_point(C: CodeMatrix, model, priors, max_iters: int = 100, tol: float = 1e-8,
                     init_rules=None, track_error: bool = False) -> PBPOResult:
    """Cyclic person-by-person optimisation of the sensing nodes' rules.

    Starts from the single-node MAP relay rules unless ``init_rules`` is given.
    Each sweep updates nodes 0..N-1 in order; stops once no bit probability
    moves by more than ``tol`` over a sweep.
    """
    from .error_analysis import error_from_bit_probs

    priors = np.asarray(priors, float)
    rules = list(init_rules) if init_rules is not None else map_init_rules(C, priors)
    bits = rule_bit_table(rules, model)
    trace = [error_from_bit_probs(C, priors, bits)] if track_error else []
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        before = bits.copy()
        for j in range(C.N):
            A = weight_matrix(C, priors, bits)
            rules[j] = ThresholdRule(tuple(float(a) for a in A[j]))
            bits[j] = bit_probabilities(rules[j], model)
        if track_error:
            trace.append(error_from_bit_probs(C, priors, bits))
        if np.max(np.abs(bits - before)) < tol:
            converged = True
            break
    else:
        it = max_iters
    if not converged:
        log.debug("PBPO stopped after %d sweeps without converging", it)
    return PBPOResult(rules, bits, converged, it, trace)
