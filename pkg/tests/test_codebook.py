import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from treecode.codebook import (CodeMatrix, concatenate, decode_column, format_code_matrix,
                               from_integer_columns,
                               fuse_batch, hamming_distance, min_distance, min_hamming_fuse,
                               parse_code_matrix, row_distances, to_integer_columns)
from treecode.exceptions import EncodingOverflowError

EXAMPLE = CodeMatrix(np.array([
    [1, 0, 0, 0, 1, 0, 1],
    [0, 0, 1, 0, 0, 0, 0],
    [1, 0, 1, 1, 0, 1, 0],
    [0, 1, 1, 1, 1, 1, 1],
]))
C1 = [11, 8, 9, 9, 3, 9, 12]


def test_worked_example():
    u = [1, 1, 1, 0, 1, 0, 1]
    out = min_hamming_fuse(EXAMPLE, u, np.random.default_rng(0))
    assert out.distances == (2, 4, 5, 3)
    assert out.decision == 0
    assert out.tie_count == 1
    assert hamming_distance(u, EXAMPLE.row(0)) == 2


def test_example_min_distance_by_pairs():
    pairs = [sum(a != b for a, b in zip(EXAMPLE.bits[i], EXAMPLE.bits[j]))
             for i, j in itertools.combinations(range(4), 2)]
    assert min_distance(EXAMPLE) == min(pairs) == 3


def test_integer_encoding():
    assert decode_column(9, 4) == (1, 0, 0, 1)
    assert decode_column(0, 4) == (0, 0, 0, 0)
    assert to_integer_columns(CodeMatrix(np.array([[1, 0], [0, 0], [0, 0], [1, 0]]))) == [9, 0]
    C = from_integer_columns([3, 8, 14, 12, 9, 12, 9], 4)
    assert C.bits[:, 4].tolist() == [1, 0, 0, 1]
    assert to_integer_columns(from_integer_columns(C1, 4)) == C1


def test_encoding_overflow():
    with pytest.raises(EncodingOverflowError):
        from_integer_columns([16, 1], 4)
    with pytest.raises(EncodingOverflowError):
        decode_column(-1, 4)


def test_hamming_edge_cases():
    x = np.array([1, 0, 1, 1, 0])
    assert hamming_distance(x, x) == 0
    assert hamming_distance(x, 1 - x) == 5
    with pytest.raises(ValueError):
        hamming_distance([0, 1], [0, 1, 1])


def test_exact_row_decodes_to_itself():
    rng = np.random.default_rng(1)
    for m in range(4):
        assert min_hamming_fuse(EXAMPLE, EXAMPLE.row(m), rng).decision == m


def test_tie_break_is_uniform():
    C = CodeMatrix(np.array([[0, 0], [1, 1]]))
    rng = np.random.default_rng(5)
    picks = [min_hamming_fuse(C, [0, 1], rng) for _ in range(10_000)]
    assert all(p.tie_count == 2 and p.tied_set == (0, 1) for p in picks)
    freq = np.mean([p.decision for p in picks])
    assert abs(freq - 0.5) < 0.02


def test_fuse_batch_matches_scalar_without_ties():
    rng = np.random.default_rng(2)
    words = rng.integers(0, 2, size=(500, 7)).astype(np.uint8)
    dec = fuse_batch(EXAMPLE, words, np.random.default_rng(0))
    for w, d in zip(words, dec):
        dist = [int(np.sum(w != r)) for r in EXAMPLE.bits]
        assert dist[d] == min(dist)
        if dist.count(min(dist)) == 1:
            assert d == int(np.argmin(dist))


def test_fuse_batch_tie_frequencies():
    C = CodeMatrix(np.array([[0, 0, 0], [1, 1, 0], [0, 1, 1]]))
    # (0,1,0) is at distance 1 from all three rows
    words = np.tile(np.array([0, 1, 0], dtype=np.uint8), (30_000, 1))
    dec = fuse_batch(C, words, np.random.default_rng(3))
    freq = np.bincount(dec, minlength=3) / len(dec)
    assert np.allclose(freq, 1 / 3, atol=0.015)


def test_concatenate():
    C = from_integer_columns([3, 8, 14, 12, 9, 12, 9], 4)
    big = concatenate(C, 49)
    assert (big.M, big.N) == (4, 343)
    assert concatenate(C, 1) == C
    assert min_distance(concatenate(C, 3)) == 3 * min_distance(C)
    with pytest.raises(ValueError):
        concatenate(C, 0)


def test_repetition_dmin():
    assert CodeMatrix(np.array([[0] * 7, [1] * 7])).d_min == 7


def test_invalid_matrices():
    with pytest.raises(ValueError):
        CodeMatrix(np.array([[0, 1]]))
    with pytest.raises(ValueError):
        CodeMatrix(np.array([[0], [1], [0], [1]]))  # 1 column cannot separate 4 rows
    with pytest.raises(ValueError):
        CodeMatrix(np.array([[0, 2], [1, 1]]))


def test_file_round_trip(tmp_path):
    C = from_integer_columns(C1, 4)
    text = format_code_matrix(C)
    assert text == "4 7\n11 8 9 9 3 9 12\n"
    assert parse_code_matrix("# comment\n" + text) == C
    with pytest.raises(ValueError):
        parse_code_matrix("4 3\n1 2\n")


matrices = st.integers(2, 4).flatmap(
    lambda M: st.tuples(st.just(M), st.lists(st.integers(0, 2**M - 1), min_size=M, max_size=8)))


@settings(max_examples=60, deadline=None)
@given(matrices, st.randoms())
def test_fusion_invariant_under_column_permutation(mc, rnd):
    M, cols = mc
    C = from_integer_columns(cols, M)
    u = np.array([rnd.randint(0, 1) for _ in cols], dtype=np.uint8)
    perm = list(range(len(cols)))
    rnd.shuffle(perm)
    Cp = CodeMatrix(C.bits[:, perm])
    d = row_distances(C, u)
    dp = row_distances(Cp, u[perm])
    assert np.array_equal(d, dp)
    a = min_hamming_fuse(C, u, np.random.default_rng(7))
    b = min_hamming_fuse(Cp, u[perm], np.random.default_rng(7))
    assert a.decision == b.decision


@settings(max_examples=60, deadline=None)
@given(matrices)
def test_integer_round_trip(mc):
    M, cols = mc
    assert to_integer_columns(from_integer_columns(cols, M)) == cols


@settings(max_examples=30, deadline=None)
@given(matrices, st.integers(0, 2**32 - 1))
def test_fusion_deterministic_given_seed(mc, seed):
    M, cols = mc
    C = from_integer_columns(cols, M)
    words = np.random.default_rng(seed).integers(0, 2, size=(50, len(cols)))
    a = fuse_batch(C, words, np.random.default_rng(seed))
    b = fuse_batch(C, words, np.random.default_rng(seed))
    assert np.array_equal(a, b)
