import numpy as np
import pytest

import oracles
from treecode.codebook import CodeMatrix, from_integer_columns
from treecode.exceptions import CapacityError
from treecode.local_rules import (ThresholdRule, bit_probabilities, cost, cost_table, intermediate_map,
                                  map_init_rules, pbpo_fixed_point, weight_matrix, word_probabilities)
from treecode.observation import GaussianShiftModel, RegionModel, UniformPrior

EXAMPLE = CodeMatrix(np.array([
    [1, 0, 0, 0, 1, 0, 1],
    [0, 0, 1, 0, 0, 0, 0],
    [1, 0, 1, 1, 0, 1, 0],
    [0, 1, 1, 1, 1, 1, 1],
]))


def test_cost_cases():
    C = CodeMatrix(np.array([[0, 0, 0], [1, 1, 0], [1, 1, 1]]))
    assert cost(C, [0, 0, 0], 0) == 0.0
    assert cost(C, [1, 1, 0], 0) == 1.0
    # (1,0,0) is at distance 1 from rows 0 and 1
    assert cost(C, [1, 0, 0], 0) == 0.5
    assert cost(C, [1, 0, 0], 1) == 0.5
    assert cost(C, [1, 0, 0], 2) == 1.0


def test_cost_table_against_oracle():
    rows = EXAMPLE.bits.tolist()
    psi = cost_table(EXAMPLE)
    for i in range(1 << 7):
        word = [(i >> j) & 1 for j in range(7)]
        for l in range(4):
            assert psi[i, l] == oracles.psi(rows, word, l)


def test_word_probabilities_ordering():
    bp = np.array([[0.1, 0.6], [0.3, 0.2]])
    wp = word_probabilities(bp)
    for i in range(4):
        w = [(i >> j) & 1 for j in range(2)]
        for l in range(2):
            assert wp[i, l] == pytest.approx(oracles.word_prob(w, bp[:, l]))


@pytest.mark.parametrize("seed", range(8))
def test_weight_matrix_against_brute_force(seed):
    rng = np.random.default_rng(seed)
    M = int(rng.integers(2, 5))
    N = int(rng.integers(max(2, int(np.ceil(np.log2(M)))), 7))
    while True:
        bits = rng.integers(0, 2, (M, N))
        if len({tuple(r) for r in bits}) == M:
            break
    C = CodeMatrix(bits)
    priors = rng.dirichlet(np.ones(M))
    bp = rng.random((N, M))
    A = weight_matrix(C, priors, bp)
    ref = oracles.weights(bits.tolist(), priors.tolist(), bp.tolist())
    assert np.allclose(A, ref, atol=1e-12, rtol=0)
    assert np.all(np.abs(A) <= priors + 1e-15)


def test_weight_matrix_single_node_is_map():
    C = CodeMatrix(np.array([[0], [1]]))
    A = weight_matrix(C, [0.3, 0.7], np.array([[0.2, 0.9]]))
    assert np.allclose(A, [[-0.3, 0.7]])


def test_weight_matrix_complementary_columns_antisymmetric():
    C = CodeMatrix(np.array([[0, 1, 1], [1, 0, 0]]))
    A = weight_matrix(C, [0.5, 0.5], np.full((3, 2), 0.5))
    ref = oracles.weights(C.bits.tolist(), [0.5, 0.5], np.full((3, 2), 0.5).tolist())
    assert np.allclose(A, ref, atol=1e-15)
    # swapping the hypotheses negates each row
    assert np.allclose(A[:, 0], -A[:, 1])


def test_capacity_error():
    C = CodeMatrix(np.vstack([np.zeros(26, int), np.ones(26, int)]))
    with pytest.raises(CapacityError):
        weight_matrix(C, [0.5, 0.5], np.full((26, 2), 0.5))


def test_prior_scaling_does_not_change_rules():
    rng = np.random.default_rng(3)
    C = from_integer_columns([3, 8, 14, 12, 9, 12, 9], 4)
    model = GaussianShiftModel.equally_spaced(4, 1.5)
    priors = rng.dirichlet(np.ones(4))
    bp = rng.random((7, 4))
    y = np.linspace(-4, 8, 2001)
    A1 = weight_matrix(C, priors, bp)
    A2 = weight_matrix(C, 3.7 * priors, bp)
    for j in range(7):
        assert np.array_equal(ThresholdRule(tuple(A1[j])).emit(model, y), ThresholdRule(tuple(A2[j])).emit(model, y))


def test_intermediate_map():
    assert intermediate_map(EXAMPLE, 0, 0) == 1
    assert intermediate_map(EXAMPLE, 1, 0) == 0
    for y in range(4):
        assert [intermediate_map(EXAMPLE, y, j) for j in range(7)] == EXAMPLE.bits[y].tolist()
    with pytest.raises(IndexError):
        intermediate_map(EXAMPLE, 4, 0)


def test_bit_probabilities_match_sampling():
    model = GaussianShiftModel((0.0, 1.0, 2.0), 0.8)
    rule = ThresholdRule((0.4, -0.9, 0.5))  # emits 1 on two disjoint tails
    p = bit_probabilities(rule, model)
    rng = np.random.default_rng(0)
    n = 200_000
    for l in range(3):
        est = rule.emit(model, model.sample(l, rng, n)).mean()
        assert abs(est - p[l]) < 4 * np.sqrt(p[l] * (1 - p[l]) / n) + 1e-9


def test_bit_probabilities_region_model():
    model = RegionModel((0.0, 0.3, 1.0), UniformPrior(0.0, 1.0), 0.2)
    rule = ThresholdRule((-0.3, 0.7))
    p = bit_probabilities(rule, model)
    rng = np.random.default_rng(1)
    n = 200_000
    for l in range(2):
        est = rule.emit(model, model.sample(l, rng, n)).mean()
        assert abs(est - p[l]) < 4 * np.sqrt(p[l] * (1 - p[l]) / n) + 1e-9


def test_pbpo_single_node_is_map_for_any_start():
    C = CodeMatrix(np.array([[0], [1]]))
    model = GaussianShiftModel((0.0, 1.0), 1.0)
    priors = np.array([0.35, 0.65])
    y = np.linspace(-5, 6, 1001)
    lik = np.exp(model.loglik(y))
    map_bit = (priors[1] * lik[:, 1] > priors[0] * lik[:, 0]).astype(np.uint8)
    rng = np.random.default_rng(0)
    for _ in range(5):
        init = [ThresholdRule(tuple(rng.normal(size=2)))]
        res = pbpo_fixed_point(C, model, priors, init_rules=init)
        assert res.converged
        assert np.array_equal(res.rules[0].emit(model, y), map_bit)


def test_pbpo_identical_columns_converge_to_identical_rules():
    C = CodeMatrix(np.array([[0, 0, 0], [1, 1, 1]]))
    model = GaussianShiftModel((-1.0, 1.0), 1.0)
    rng = np.random.default_rng(4)
    for _ in range(10):
        init = [ThresholdRule((-abs(rng.normal()), abs(rng.normal()))) for _ in range(3)]
        res = pbpo_fixed_point(C, model, [0.5, 0.5], init_rules=init)
        assert res.converged
        assert np.allclose(res.bit_probs, res.bit_probs[0], atol=1e-7)


def test_pbpo_zero_iterations_returns_initialisation():
    C = from_integer_columns([3, 8, 14, 12, 9, 12, 9], 4)
    model = GaussianShiftModel.equally_spaced(4, 1.0)
    init = map_init_rules(C, np.full(4, 0.25))
    res = pbpo_fixed_point(C, model, np.full(4, 0.25), max_iters=0, init_rules=init)
    assert not res.converged
    assert res.rules == init


def test_pbpo_error_never_increases():
    C = from_integer_columns([3, 8, 14, 12, 9, 12, 9], 4)
    model = GaussianShiftModel.equally_spaced(4, 1.2)
    res = pbpo_fixed_point(C, model, np.full(4, 0.25), track_error=True)
    tr = np.array(res.error_trace)
    assert res.converged
    assert np.all(np.diff(tr) <= 1e-12)
    # the exact error of the final rules agrees with the brute-force evaluator
    assert tr[-1] == pytest.approx(oracles.error(C.bits.tolist(), [0.25] * 4, res.bit_probs.tolist()), abs=1e-12)
