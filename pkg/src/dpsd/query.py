"""Range queries over private spatial decompositions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .budget import BudgetPlan, max_contained_nodes
from .geometry import Rect, classify, overlap_fractions
from .tree import FANOUT, PsdTree

COUNT_MODES = ("raw", "ols")


@dataclass(frozen=True)
class QueryAnswer:
    estimate: float
    nodes_used: tuple[int, ...]  # indexed by level, leaves first
    partial: float  # part of the estimate from partially covered leaves

    @property
    def total_nodes(self) -> int:
        return sum(self.nodes_used)


def _area(rects: np.ndarray) -> np.ndarray:
    return (rects[:, 1] - rects[:, 0]) * (rects[:, 3] - rects[:, 2])


def answer(tree: PsdTree, q: Rect, counts: str = "raw") -> QueryAnswer:
    """Estimate the number of points in ``q``.

    Descends from the root through nodes whose region meets ``q``. A node inside ``q``
    adds its count and stops the descent there; a partially covered leaf adds its count
    times the covered fraction of its area. Nodes on levels without counts are descended
    through. A leaf without its own count (only possible when the leaf level released
    nothing) borrows the count of its nearest counted ancestor, scaled by area.

    Hilbert R-tree nodes are tested through their bounding boxes; their counts refer to
    disjoint index ranges, so no point is counted twice.
    """
    values = tree.counts(counts)
    h = tree.height
    used = [0] * (h + 1)
    estimate = 0.0
    partial = 0.0

    frontier = np.zeros(1, dtype=np.int64)
    anc_val = np.full(1, np.nan)
    anc_area = np.full(1, np.nan)
    for i in range(h, -1, -1):
        if frontier.size == 0:
            break
        rects = tree.rects[i][frontier]
        inside, meets = classify(rects, q)
        keep = meets
        frontier, rects, inside = frontier[keep], rects[keep], inside[keep]
        anc_val, anc_area = anc_val[keep], anc_area[keep]
        leaf = tree.is_leaf_at(i)[frontier]
        vals = values[i]

        if vals is not None:
            v = vals[frontier]
            used[i] = int(inside.sum())
            estimate += float(v[inside].sum())
            part = ~inside & leaf
            if part.any():
                contrib = float((v[part] * overlap_fractions(rects[part], q)).sum())
                estimate += contrib
                partial += contrib
            anc_val, anc_area = v, _area(rects)
            go = ~inside & ~leaf
        else:
            # no counts here: leaves fall back on their counted ancestor
            if leaf.any():
                lr = rects[leaf]
                cover = overlap_fractions(lr, q) * _area(lr)
                with np.errstate(invalid="ignore", divide="ignore"):
                    contrib = np.where(np.isnan(anc_val[leaf]), 0.0, anc_val[leaf] * cover / anc_area[leaf])
                estimate += float(contrib.sum())
                partial += float(contrib.sum())
            go = ~leaf

        frontier = (FANOUT * frontier[go, None] + np.arange(FANOUT)).ravel()
        anc_val = np.repeat(anc_val[go], FANOUT)
        anc_area = np.repeat(anc_area[go], FANOUT)

    return QueryAnswer(estimate, tuple(used), partial)


def true_answer(points, q: Rect) -> int:
    """Exact number of points inside ``q`` (half-open on the upper sides)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    x, y = pts[:, 0], pts[:, 1]
    return int(np.count_nonzero((q.x_lo <= x) & (x < q.x_hi) & (q.y_lo <= y) & (y < q.y_hi)))


def relative_error(estimate: float, truth: float) -> float:
    return abs(estimate - truth) / max(1.0, truth)


def predicted_error(tree_kind: str, plan: BudgetPlan, h: int) -> float:
    """Upper bound on the variance of a query answer: ``sum_i 2 n_i / eps_i^2``.

    ``n_i`` is the maximal number of level-``i`` nodes inside a query. Flattened
    kd-trees, hybrids and Hilbert trees have fanout 4 and use the quadtree bound;
    ``"kdtree"`` means a binary kd-tree. Levels without released counts are skipped.
    """
    if plan.height != h:
        raise ValueError(f"plan height {plan.height} differs from h={h}")
    bound_kind = "kdtree" if tree_kind == "kdtree" else "quadtree"
    total = 0.0
    for i, eps in enumerate(plan.count_eps):
        if eps > 0:
            total += 2.0 * max_contained_nodes(bound_kind, h, i) / eps**2
    return total


def node_true_counts(tree: PsdTree, points) -> list[np.ndarray]:
    """Exact per-node counts for ``tree``'s structure, by routing every point from the root.

    Not part of any release: used to measure error and in tests.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    h = tree.height
    out = [None] * (h + 1)
    if tree.kind == "hilbert":
        from .hilbert import HilbertConfig, encode_array

        cfg = HilbertConfig(tree.hilbert_order, tree.domain)
        keys = encode_array(cfg, pts[:, 0], pts[:, 1])
        for i in range(h + 1):
            r = tree.ranges[i]
            edges = np.append(r[:, 0], r[-1, 1])
            out[i] = np.diff(np.searchsorted(np.sort(keys), edges))
        return out
    node = np.zeros(len(pts), dtype=np.int64)
    for i in range(h, -1, -1):
        out[i] = np.bincount(node, minlength=tree.level_size(i))
        if i == 0:
            break
        s = tree.splits[i][node]
        ux = pts[:, 0] >= s[:, 0]
        uy = pts[:, 1] >= np.where(ux, s[:, 2], s[:, 1])
        node = FANOUT * node + ux + 2 * uy
    return out
