"""Binary code matrices and minimum Hamming distance fusion.

Rows of a code matrix are codewords (one per hypothesis) and columns are
the one-bit decision rules of the contributing nodes.  Hypothesis and node
indices are 0-based throughout the package.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

import numpy as np

from .exceptions import EncodingOverflowError


@dataclass(frozen=True, eq=False)
class CodeMatrix:
    """An M x N binary matrix; row m is the codeword of hypothesis m."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.array(self.bits, dtype=np.uint8)
        if bits.ndim != 2:
            raise ValueError(f"code matrix must be 2-D, got shape {bits.shape}")
        m, n = bits.shape
        if m < 2:
            raise ValueError("code matrix needs at least two rows")
        if n < math.ceil(math.log2(m)):
            raise ValueError(f"N={n} columns cannot separate M={m} hypotheses")
        if np.any(bits > 1):
            raise ValueError("code matrix entries must be 0 or 1")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @property
    def M(self) -> int:
        return self.bits.shape[0]

    @property
    def N(self) -> int:
        return self.bits.shape[1]

    @property
    def d_min(self) -> int:
        return min_distance(self)

    def row(self, m: int) -> np.ndarray:
        return self.bits[m]

    def has_distinct_rows(self) -> bool:
        return len({r.tobytes() for r in self.bits}) == self.M

    def __eq__(self, other):
        if not isinstance(other, CodeMatrix):
            return NotImplemented
        return self.bits.shape == other.bits.shape and bool(np.all(self.bits == other.bits))

    def __hash__(self):
        return hash((self.bits.shape, self.bits.tobytes()))

    def __repr__(self):
        return f"CodeMatrix(M={self.M}, N={self.N}, columns={to_integer_columns(self)})"


@dataclass(frozen=True)
class FusionOutcome:
    decision: int
    tie_count: int
    tied_set: tuple
    distances: tuple


def decode_column(v: int, M: int) -> tuple:
    """M-bit big-endian expansion of one column value.

    >>> decode_column(9, 4)
    (1, 0, 0, 1)
    """
    v = int(v)
    if v < 0 or v >= 1 << M:
        raise EncodingOverflowError(f"column value {v} does not fit in {M} bits")
    return tuple((v >> (M - 1 - l)) & 1 for l in range(M))


def from_integer_columns(encoded, M: int) -> CodeMatrix:
    """Decode integer-encoded columns; row 0 carries the most significant bit.

    >>> from_integer_columns([9, 0], 4).bits[:, 0].tolist()
    [1, 0, 0, 1]
    """
    encoded = [int(v) for v in encoded]
    cols = [decode_column(v, M) for v in encoded]
    return CodeMatrix(np.array(cols, dtype=np.uint8).T.reshape(M, len(encoded)))


def to_integer_columns(C: CodeMatrix) -> list:
    weights = 1 << np.arange(C.M - 1, -1, -1, dtype=np.int64)
    return [int(v) for v in weights @ C.bits.astype(np.int64)]


def hamming_distance(a, b) -> int:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return int(np.count_nonzero(a != b))


def row_distances(C: CodeMatrix, u) -> np.ndarray:
    """Hamming distance from word(s) ``u`` (..., N) to every row, shape (..., M)."""
    u = np.asarray(u, dtype=np.uint8)
    if u.shape[-1] != C.N:
        raise ValueError(f"codeword length {u.shape[-1]} != N={C.N}")
    # d = #(u=1, c=0) + #(u=0, c=1)
    uf = u.astype(np.int32)
    cf = C.bits.astype(np.int32)
    return uf @ (1 - cf).T + (1 - uf) @ cf.T


def min_hamming_fuse(C: CodeMatrix, u, rng: np.random.Generator) -> FusionOutcome:
    """Nearest-row decoding; ties are broken with one uniform draw."""
    d = row_distances(C, u)
    tied = np.flatnonzero(d == d.min())
    if len(tied) == 1:
        decision = int(tied[0])
    else:
        decision = int(tied[int(rng.random() * len(tied))])
    return FusionOutcome(decision, len(tied), tuple(int(t) for t in tied), tuple(int(x) for x in d))


def fuse_batch(C: CodeMatrix, words: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Vectorised nearest-row decoding of words shaped (..., N).

    Draws one uniform per word regardless of ties, so the draw count depends
    only on the batch shape.
    """
    d = row_distances(C, words)
    tied = d == d.min(axis=-1, keepdims=True)
    counts = tied.sum(axis=-1)
    pick = np.floor(rng.random(counts.shape) * counts).astype(np.int64)
    # index of the pick-th True along the last axis
    rank = np.cumsum(tied, axis=-1) - 1
    hit = tied & (rank == pick[..., None])
    return np.argmax(hit, axis=-1)


def min_distance(C: CodeMatrix) -> int:
    return min(hamming_distance(C.bits[a], C.bits[b]) for a, b in combinations(range(C.M), 2))


def concatenate(C: CodeMatrix, copies: int) -> CodeMatrix:
    if copies < 1:
        raise ValueError("copies must be >= 1")
    return CodeMatrix(np.tile(C.bits, (1, copies)))


def all_codewords(n: int) -> np.ndarray:
    """Every length-n binary word, shape (2**n, n); word i has bit j = (i >> j) & 1."""
    idx = np.arange(1 << n, dtype=np.int64)
    return ((idx[:, None] >> np.arange(n)) & 1).astype(np.uint8)


def format_code_matrix(C: CodeMatrix) -> str:
    return f"{C.M} {C.N}\n" + " ".join(str(v) for v in to_integer_columns(C)) + "\n"


def parse_code_matrix(text: str) -> CodeMatrix:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if len(lines) < 2:
        raise ValueError("code-matrix file needs a 'M N' line and a column line")
    try:
        m, n = (int(t) for t in lines[0].split())
        cols = [int(t) for t in lines[1].split()]
    except ValueError as exc:
        raise ValueError(f"malformed code-matrix file: {exc}") from None
    if len(cols) != n:
        raise ValueError(f"header says N={n} but {len(cols)} columns given")
    return from_integer_columns(cols, m)


def read_code_matrix(path) -> CodeMatrix:
    return parse_code_matrix(Path(path).read_text())


def write_code_matrix(C: CodeMatrix, path) -> None:
    Path(path).write_text(format_code_matrix(C))
