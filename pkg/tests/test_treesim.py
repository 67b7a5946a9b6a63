import math

import numpy as np
import pytest

from treecode.codebook import CodeMatrix
from treecode.error_analysis import estimation_error_recursive
from treecode.local_rules import ShiftedRule, pbpo_fixed_point, rule_bit_table
from treecode.observation import GaussianShiftModel, NormalPrior, RegionModel, UniformPrior
from treecode.quantizer import quantize_region_tree
from treecode.treesim import (TreeConfig, apply_bsc, derive_seed, design_estimation_rules,
                              estimation_matrices, format_sweep_csv, run_classification, run_estimation,
                              sweep, wilson_ci)

REP3 = CodeMatrix(np.array([[0, 0, 0], [1, 1, 1]]))


def small_classification(beta=0.0, trials=20000, seed=5):
    model = GaussianShiftModel((0.0, 1.0), 0.8)
    rules = pbpo_fixed_point(REP3, model, [0.5, 0.5]).rules
    return TreeConfig(2, 3, 2, (REP3, REP3), beta=beta, trials=trials, seed=seed), model, rules


def small_estimation(prior=None, hi=4.0, sigma=0.7, K=2):
    prior = prior or UniformPrior(0.0, hi)
    tree = quantize_region_tree(prior, 0.0 if isinstance(prior, UniformPrior) else -np.inf,
                                hi if isinstance(prior, UniformPrior) else np.inf, 2, K)
    mats = estimation_matrices(REP3, 3, K)
    rules = design_estimation_rules(tree, REP3, sigma)
    return tree, mats, rules


# ------------------------------------------------------------------- channel


def test_bsc_extremes_and_rate():
    rng = np.random.default_rng(0)
    u = rng.integers(0, 2, 1_000_000).astype(np.uint8)
    assert np.array_equal(apply_bsc(u, 0.0, rng), u)
    flips = np.mean(apply_bsc(u, 0.1, rng) != u)
    assert abs(flips - 0.1) < 0.003
    out = apply_bsc(np.zeros(1_000_000, np.uint8), 0.5, rng)
    assert abs(out.mean() - 0.5) < 0.003
    with pytest.raises(ValueError):
        apply_bsc(u, 0.6, rng)


def test_tree_config_validation():
    with pytest.raises(ValueError):
        TreeConfig(2, 3, 2, (REP3, REP3), beta=0.6)
    with pytest.raises(ValueError):
        TreeConfig(2, 3, 2, (REP3,))
    with pytest.raises(ValueError):
        TreeConfig(1, 3, 2, (REP3,), trials=0)
    assert TreeConfig(3, 7, 4, (CodeMatrix(np.eye(4, 7, dtype=int)),) * 3).n_total == 400


# ------------------------------------------------------------ classification


def test_classification_is_deterministic_across_threads():
    cfg, model, rules = small_classification(beta=0.05, trials=300_000)
    a = run_classification(cfg, model, rules, trace=True, threads=1)
    b = run_classification(cfg, model, rules, trace=True, threads=4)
    assert np.array_equal(a.records.truth, b.records.truth)
    assert np.array_equal(a.records.decision, b.records.decision)
    assert np.array_equal(a.records.trace, b.records.trace)


def test_zero_crossover_channel_is_transparent():
    cfg, model, rules = small_classification()
    a = run_classification(cfg, model, rules)
    b = run_classification(cfg, model, rules, force_bsc=True)
    assert np.array_equal(a.records.decision, b.records.decision)


def test_noisy_links_hurt():
    cfg, model, rules = small_classification(trials=100_000)
    clean = run_classification(cfg, model, rules).p_error
    noisy = run_classification(cfg.replace(beta=0.1), model, rules).p_error
    assert noisy > clean


def test_trace_root_matches_decision():
    cfg, model, rules = small_classification(trials=1000)
    res = run_classification(cfg, model, rules, trace=True)
    assert res.records.trace.shape == (1000, 2)
    assert np.array_equal(res.records.trace[:, -1], res.records.decision)
    lo, hi = res.ci
    assert lo <= res.p_error <= hi


def test_rule_count_checked():
    cfg, model, rules = small_classification()
    with pytest.raises(ValueError):
        run_classification(cfg, model, rules[:2])


# ---------------------------------------------------------------- estimation


def test_zoom_intervals_nest_and_estimate_lies_in_final_cell():
    tree, mats, rules = small_estimation()
    cfg = TreeConfig(2, 3, 2, mats, trials=2000, seed=1)
    res = run_estimation(cfg, tree, 0.7, rules, trace=True)
    iv = res.records.intervals
    assert np.all(iv[:, 1, 0] >= iv[:, 0, 0]) and np.all(iv[:, 1, 1] <= iv[:, 0, 1])
    node = res.records.decision
    est = tree.points[node]
    assert np.all((tree.edges[node] <= est) & (est <= tree.edges[node + 1]))
    assert np.all((iv[:, 1, 0] <= est) & (est <= iv[:, 1, 1]))


def test_estimation_floor_at_vanishing_noise():
    tree, mats, rules = small_estimation(sigma=1e-4)
    res = run_estimation(TreeConfig(2, 3, 2, mats, trials=40000, seed=2), tree, 1e-4, rules)
    assert res.p_detect > 0.999
    assert res.mse == pytest.approx(1.0 / 12, rel=0.05)


def test_single_node_single_level_detects_perfectly():
    C = CodeMatrix(np.array([[0], [1]]))
    tree = quantize_region_tree(UniformPrior(0.0, 1.0), 0.0, 1.0, 2, 1)
    rules = design_estimation_rules(tree, C, 1e-6)
    res = run_estimation(TreeConfig(1, 1, 2, (C,), trials=5000, seed=0), tree, 1e-6, rules)
    assert res.p_detect == 1.0


def test_per_node_sharing_matches_exact_detection():
    tree, mats, rules = small_estimation(sigma=0.7)
    cfg = TreeConfig(2, 3, 2, mats, trials=200_000, seed=9)
    res = run_estimation(cfg, tree, 0.7, rules, theta_sharing="per-node")
    bps, pris = [], []
    for s in (1, 2):
        d, t = s - 1, 3 - s
        model = RegionModel(tuple(tree.partition(d, 0)), tree.prior, 0.7)
        bp = rule_bit_table(rules[(d, 0)], model)
        bps.append(np.tile(bp, (3 ** (t - 1), 1)))
        pris.append(model.priors)
    exact = 1 - estimation_error_recursive([mats[1], mats[0]], bps, pris)
    se = math.sqrt(exact * (1 - exact) / cfg.trials)
    assert abs(res.p_detect - exact) < 3 * se


def test_translated_rules_match_direct_design():
    tree = quantize_region_tree(UniformPrior(0.0, 4.0), 0.0, 4.0, 2, 2)
    shared = design_estimation_rules(tree, REP3, 0.7, reuse_translates=True)
    direct = design_estimation_rules(tree, REP3, 0.7, reuse_translates=False)
    assert all(isinstance(r, ShiftedRule) for r in shared[(1, 1)])
    y = np.linspace(-3, 7, 4001)
    for key in direct:
        model = RegionModel(tuple(tree.partition(*key)), tree.prior, 0.7)
        for a, b in zip(shared[key], direct[key]):
            assert np.mean(a.emit(model, y) != b.emit(model, y)) < 1e-3
            assert np.allclose(rule_bit_table([a], model), rule_bit_table([b], model), atol=1e-6)


def test_no_translate_reuse_for_curved_priors():
    tree = quantize_region_tree(NormalPrior(0.0, 1.0), -np.inf, np.inf, 2, 2)
    rules = design_estimation_rules(tree, REP3, 0.5)
    assert not any(isinstance(r, ShiftedRule) for rs in rules.values() for r in rs)
    with pytest.raises(ValueError):
        design_estimation_rules(tree, REP3, 0.5, method="gradient")


def test_estimation_determinism_and_shape_checks():
    tree, mats, rules = small_estimation()
    cfg = TreeConfig(2, 3, 2, mats, beta=0.1, trials=20000, seed=4)
    a = run_estimation(cfg, tree, 0.7, rules, noisy_collaboration=True)
    b = run_estimation(cfg, tree, 0.7, rules, noisy_collaboration=True, threads=3)
    assert a.mse == b.mse and a.p_detect == b.p_detect
    with pytest.raises(ValueError):
        run_estimation(cfg, tree, 0.7, rules, theta_sharing="sometimes")
    with pytest.raises(ValueError):
        run_estimation(TreeConfig(2, 3, 2, (REP3, REP3)), tree, 0.7, rules)


# --------------------------------------------------------------------- sweep


def test_sweep_single_point_and_empty_axis():
    rows = sweep([5.0], lambda v, b, s: (v + b, (v, v + 1)), betas=(0.0, 0.1), seed=3)
    assert len(rows) == 2 and rows[0].seed == rows[1].seed == derive_seed(3, 0)
    assert rows[1].metric == 5.1
    with pytest.raises(ValueError):
        sweep([], lambda v, b, s: (0, (0, 0)))
    text = format_sweep_csv(rows, {"config_hash": "abc"})
    assert text.splitlines()[0] == "axis,metric,ci_low,ci_high,beta,seed,config_hash"
    assert len(text.splitlines()) == 3


def test_derived_seeds_are_stable():
    assert derive_seed(2024, 3) == derive_seed(2024, 3)
    assert len({derive_seed(2024, i) for i in range(100)}) == 100


def test_wilson_interval():
    lo, hi = wilson_ci(0, 100)
    assert lo == 0.0 and 0 < hi < 0.05
    lo, hi = wilson_ci(50, 100)
    assert lo < 0.5 < hi
