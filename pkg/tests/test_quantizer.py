import math

import numpy as np
import pytest
from scipy import integrate, stats

from treecode.observation import DensityPrior, NormalPrior, UniformPrior
from treecode.quantizer import (RegionTree, build_region_tree, distortion, format_region_tree, lloyd_max,
                                parse_region_tree, quantize_region_tree, read_region_tree, write_region_tree)


def test_uniform_four_cells():
    q = lloyd_max(UniformPrior(0.0, 1.0), 0.0, 1.0, 4)
    assert np.allclose(q.edges, [0, 0.25, 0.5, 0.75, 1], atol=1e-12)
    assert np.allclose(q.points, [0.125, 0.375, 0.625, 0.875], atol=1e-12)
    assert q.distortion == pytest.approx(1 / (12 * 16), abs=1e-12)


def test_uniform_many_cells_from_random_start():
    q = lloyd_max(UniformPrior(0.0, 8.0), 0.0, 8.0, 12, init="random", rng=3, max_iters=20000)
    assert q.converged
    assert np.allclose(np.diff(q.edges), 8 / 12, atol=1e-8)
    assert q.distortion == pytest.approx((8 / 12) ** 2 / 12, rel=1e-8)


def test_normal_two_cells_against_quadrature():
    q = lloyd_max(NormalPrior(0.0, 1.0), -np.inf, np.inf, 2)
    half_mean = integrate.quad(lambda t: t * stats.norm.pdf(t), 0, np.inf)[0] / 0.5
    assert q.edges[1] == pytest.approx(0.0, abs=1e-10)
    assert q.points == pytest.approx([-half_mean, half_mean], abs=1e-3)
    assert q.points[1] == pytest.approx(math.sqrt(2 / math.pi), abs=1e-9)


def test_single_cell_is_mean_and_variance():
    tri = DensityPrior(lambda t: t, 0.0, 2.0)  # density t/2 on (0, 2)
    q = lloyd_max(tri, 0.0, 2.0, 1)
    assert q.points[0] == pytest.approx(4 / 3, abs=1e-9)
    assert q.distortion == pytest.approx(2 - (4 / 3) ** 2, abs=1e-9)


@pytest.mark.parametrize("prior,lo,hi", [
    (UniformPrior(0.0, 1.0), 0.0, 1.0),
    (NormalPrior(0.0, 1.0), -np.inf, np.inf),
    (DensityPrior(lambda t: np.exp(-t), 0.0, 6.0), 0.0, 6.0),
    (DensityPrior(lambda t: 1 + np.sin(3 * t) ** 2, -1.0, 2.0), -1.0, 2.0),
])
def test_distortion_never_increases(prior, lo, hi):
    for init in ("quantile", "random"):
        q = lloyd_max(prior, lo, hi, 6, init=init, rng=1)
        tr = np.array(q.distortion_trace)
        assert np.all(np.diff(tr) <= 1e-12)
        assert q.distortion <= tr[0] + 1e-12


def test_distortion_matches_direct_integral():
    prior = NormalPrior(0.3, 1.2)
    q = lloyd_max(prior, -np.inf, np.inf, 5)
    direct = sum(integrate.quad(lambda t, x=x: (t - x) ** 2 * prior.pdf(t), a, b)[0]
                 for a, b, x in zip(q.edges, q.edges[1:], q.points))
    assert q.distortion == pytest.approx(direct, abs=1e-9)
    assert distortion(prior, q.edges, q.points) == pytest.approx(direct, abs=1e-9)


def test_symmetric_prior_gives_symmetric_quantizer():
    q = lloyd_max(NormalPrior(0.0, 1.0), -np.inf, np.inf, 8)
    assert np.allclose(q.points, -q.points[::-1], atol=1e-9)
    # classical 8-level Lloyd-Max table for the unit normal
    assert np.allclose(q.points[4:], [0.2451, 0.7560, 1.3440, 2.1520], atol=1e-4)


def test_bad_arguments():
    with pytest.raises(ValueError):
        lloyd_max(UniformPrior(0.0, 1.0), 0.0, 1.0, 0)
    with pytest.raises(ValueError):
        lloyd_max(UniformPrior(0.0, 1.0), 0.0, 1.0, 2, init="kmeans++")


def test_region_tree_top_split_for_normal():
    tree = quantize_region_tree(NormalPrior(0.0, 1.0), -np.inf, np.inf, 2, 2)
    assert tree.partition(0, 0)[1] == pytest.approx(0.0, abs=1e-10)
    assert np.allclose(tree.priors(0, 0), [0.5, 0.5])
    for p in tree.nodes(1):
        assert tree.priors(1, p).sum() == pytest.approx(1.0)


def test_region_tree_grouping():
    edges = np.linspace(0, 64, 65)
    tree = build_region_tree(edges, edges[:-1] + 0.5, 4, 3, UniformPrior(0.0, 64.0))
    assert np.allclose(tree.partition(0, 0), [0, 16, 32, 48, 64])
    assert np.allclose(tree.partition(1, 2), [32, 36, 40, 44, 48])
    assert np.allclose(tree.partition(2, 15), [60, 61, 62, 63, 64])
    assert tree.interval(1, 2) == (32, 48)
    assert len(tree.level_edges(2)) == 65
    assert tree.leaf_of(np.array([0.0, 33.2, 64.0])).tolist() == [0, 33, 63]
    # siblings partition their parent at every depth
    for d in range(3):
        for p in tree.nodes(d):
            a, b = tree.interval(d, p)
            e = tree.partition(d, p)
            assert (e[0], e[-1]) == (a, b)
    flat = build_region_tree([0, 1, 2, 3], [0.5, 1.5, 2.5], 3, 1)
    assert np.allclose(flat.partition(0, 0), [0, 1, 2, 3])
    with pytest.raises(ValueError):
        RegionTree(2, 2, [0, 1, 2], [0.5, 1.5])


def test_hierarchical_tree_is_nested():
    tree = quantize_region_tree(NormalPrior(0.0, 1.0), -np.inf, np.inf, 2, 3, hierarchical=True)
    assert len(tree.points) == 8
    for k, (a, b) in enumerate(zip(tree.edges, tree.edges[1:])):
        assert a < tree.points[k] < b


def test_region_tree_file_round_trip(tmp_path):
    tree = quantize_region_tree(NormalPrior(0.1, 0.7), -np.inf, np.inf, 4, 2)
    path = tmp_path / "t.tree"
    write_region_tree(tree, path)
    back = read_region_tree(path)
    assert np.array_equal(back.edges, tree.edges)
    assert np.array_equal(back.points, tree.points)
    text = format_region_tree(tree)
    assert text.splitlines()[0] == "region-tree M=4 K=2"
    broken = text.replace("level 0:", "level 0: 99 ")
    with pytest.raises(ValueError):
        parse_region_tree(broken)
