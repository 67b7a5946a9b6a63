"""Lloyd-Max scalar quantisation and the hierarchical zoom-in region tree."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .observation import Prior

log = logging.getLogger(__name__)


@dataclass
class Quantizer:
    edges: np.ndarray  # cells + 1 boundaries, including the outer ends
    points: np.ndarray
    distortion: float
    converged: bool
    iterations: int
    distortion_trace: list = field(default_factory=list)

    @property
    def cells(self):
        return len(self.points)


def _cell_stats(prior: Prior, edges):
    m0 = np.array([prior.mass(a, b) for a, b in zip(edges, edges[1:])])
    m1 = np.array([prior.moment(a, b, 1) for a, b in zip(edges, edges[1:])])
    m2 = np.array([prior.moment(a, b, 2) for a, b in zip(edges, edges[1:])])
    return m0, m1, m2


def distortion(prior: Prior, edges, points) -> float:
    m0, m1, m2 = _cell_stats(prior, edges)
    x = np.asarray(points, float)
    return float(np.sum(m2 - 2 * x * m1 + x * x * m0) / np.sum(m0))


def lloyd_max(prior: Prior, lo: float, hi: float, cells: int, tol: float = 1e-12,
              max_iters: int = 1000, init: str = "quantile", rng=None) -> Quantizer:
    """Alternate Voronoi boundaries and cell centroids until the points stop moving.

    ``init="quantile"`` starts from equal-mass cells; ``init="random"`` draws
    the starting points from the prior with ``rng``.
    """
    if cells < 1:
        raise ValueError("cells must be >= 1")
    total = prior.mass(lo, hi)
    if init == "quantile":
        qs = [prior.quantile((k + 0.5) / cells, lo, hi) for k in range(cells)]
        points = np.array(qs, float)
    elif init == "random":
        rng = np.random.default_rng(rng)
        points = np.sort(prior.sample_in(lo, hi, rng, cells))
    else:
        raise ValueError(f"unknown init {init!r}")

    edges = None
    trace = []
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        edges = np.concatenate([[lo], 0.5 * (points[1:] + points[:-1]), [hi]])
        m0, m1, m2 = _cell_stats(prior, edges)
        empty = m0 <= 1e-300
        if np.any(empty):
            # move each empty point into the heaviest cell and retry
            for k in np.flatnonzero(empty):
                h = int(np.argmax(m0))
                a, b = edges[h], edges[h + 1]
                points[k] = prior.quantile(0.25, a, b) if np.isfinite(a) or np.isfinite(b) else points[h] + 1e-3
                points[h] = prior.quantile(0.75, a, b) if np.isfinite(a) or np.isfinite(b) else points[h] - 1e-3
                points = np.sort(points)
                m0[h] = 0.0
            log.debug("lloyd-max: reinitialised %d empty cells", int(empty.sum()))
            continue
        new = m1 / m0
        trace.append(float(np.sum(m2 - 2 * new * m1 + new * new * m0) / total))
        move = np.max(np.abs(new - points))
        points = new
        if move < tol:
            converged = True
            break
    edges = np.concatenate([[lo], 0.5 * (points[1:] + points[:-1]), [hi]])
    return Quantizer(edges, points, distortion(prior, edges, points), converged, it, trace)


# ----------------------------------------------------------------- region tree


@dataclass
class RegionTree:
    """K-level grouping of M**K contiguous cells.

    The node at ``depth`` d with path index p covers cells
    [p * M**(K-d), (p + 1) * M**(K-d)) and is split into M children.  Level
    k of the tree network tests the split at depth K - k.
    """

    M: int
    K: int
    edges: np.ndarray  # M**K + 1
    points: np.ndarray  # M**K representation points
    prior: Prior | None = None

    def __post_init__(self):
        self.edges = np.asarray(self.edges, float)
        self.points = np.asarray(self.points, float)
        if len(self.points) != self.M**self.K or len(self.edges) != self.M**self.K + 1:
            raise ValueError(f"need exactly M**K = {self.M**self.K} cells")
        if np.any(np.diff(self.edges) <= 0):
            raise ValueError("cell edges must be increasing")

    def partition(self, depth: int, index: int) -> np.ndarray:
        """The M + 1 edges splitting node (depth, index) into its children."""
        span = self.M ** (self.K - depth)
        step = span // self.M
        start = index * span
        return self.edges[start:start + span + 1:step]

    def interval(self, depth: int, index: int):
        span = self.M ** (self.K - depth)
        return self.edges[index * span], self.edges[(index + 1) * span]

    def level_edges(self, depth: int) -> np.ndarray:
        """All boundaries used at a depth, M**(depth+1) + 1 values."""
        step = self.M ** (self.K - depth - 1)
        return self.edges[::step]

    def priors(self, depth: int, index: int) -> np.ndarray:
        e = self.partition(depth, index)
        m = np.array([self.prior.mass(a, b) for a, b in zip(e, e[1:])])
        return m / m.sum()

    def nodes(self, depth: int):
        return range(self.M**depth)

    def leaf_of(self, theta) -> np.ndarray:
        """Index of the cell containing each theta (clipped to the outer cells)."""
        idx = np.searchsorted(self.edges, theta, side="right") - 1
        return np.clip(idx, 0, len(self.points) - 1)


def build_region_tree(edges, points, M: int, K: int, prior: Prior | None = None) -> RegionTree:
    return RegionTree(M, K, edges, points, prior)


def build_region_tree_recursive(prior: Prior, lo: float, hi: float, M: int, K: int, **lm_kwargs) -> RegionTree:
    """Re-quantise each node's interval with an M-cell Lloyd-Max at every depth."""
    edges = [lo, hi]
    for _ in range(K):
        new_edges = [edges[0]]
        for a, b in zip(edges, edges[1:]):
            q = lloyd_max(prior, a, b, M, **lm_kwargs)
            new_edges.extend(q.edges[1:])
        edges = new_edges
    edges = np.asarray(edges)
    _, m1, _ = _cell_stats(prior, edges)
    m0 = np.array([prior.mass(a, b) for a, b in zip(edges, edges[1:])])
    return RegionTree(M, K, edges, m1 / m0, prior)


def quantize_region_tree(prior: Prior, lo: float, hi: float, M: int, K: int,
                         hierarchical: bool = False, **lm_kwargs) -> RegionTree:
    if hierarchical:
        return build_region_tree_recursive(prior, lo, hi, M, K, **lm_kwargs)
    q = lloyd_max(prior, lo, hi, M**K, **lm_kwargs)
    return build_region_tree(q.edges, q.points, M, K, prior)


# ------------------------------------------------------------------ file I/O


def _fmt(x):
    return "%.17g" % x


def format_region_tree(tree: RegionTree) -> str:
    lines = [f"region-tree M={tree.M} K={tree.K}"]
    for d in range(tree.K):
        lines.append(f"level {d}: " + " ".join(_fmt(x) for x in tree.level_edges(d)))
    lines.append("leaves")
    for a, b, x in zip(tree.edges, tree.edges[1:], tree.points):
        lines.append(f"{_fmt(a)} {_fmt(b)} {_fmt(x)}")
    return "\n".join(lines) + "\n"


def parse_region_tree(text: str, prior: Prior | None = None) -> RegionTree:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    head = dict(tok.split("=") for tok in lines[0].split()[1:])
    M, K = int(head["M"]), int(head["K"])
    start = lines.index("leaves")
    triples = [tuple(float(t) for t in ln.split()) for ln in lines[start + 1:]]
    edges = [triples[0][0]] + [t[1] for t in triples]
    points = [t[2] for t in triples]
    tree = RegionTree(M, K, edges, points, prior)
    for ln in lines[1:start]:
        label, vals = ln.split(":", 1)
        d = int(label.split()[1])
        if not np.array_equal(np.array([float(v) for v in vals.split()]), tree.level_edges(d)):
            raise ValueError(f"level {d} boundaries disagree with the leaf section")
    return tree


def write_region_tree(tree: RegionTree, path) -> None:
    Path(path).write_text(format_region_tree(tree))


def read_region_tree(path, prior: Prior | None = None) -> RegionTree:
    return parse_region_tree(Path(path).read_text(), prior)
