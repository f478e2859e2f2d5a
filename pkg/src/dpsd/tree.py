"""Private spatial decomposition trees.

A tree of height ``h`` with fanout 4 is stored level by level: level ``i`` (leaves are
level 0, the root is level ``h``) holds ``4^(h-i)`` nodes, and the children of node
``j`` at level ``i`` are nodes ``4j .. 4j+3`` at level ``i-1``. Child ``c`` covers the
lower/upper half in x when ``c & 1`` is 0/1 and in y when ``c & 2`` is 0/2.

Four constructions are provided:

* quadtree: every node splits at the midpoints of its rectangle;
* flattened kd-tree: a private median split in x, then private median splits in y of
  both halves, so every released level has four children;
* hybrid: kd-style private splits for the top ``switch_level`` levels, midpoints below;
* Hilbert R-tree: a flattened one-dimensional kd-tree over Hilbert indices. Node
  rectangles are bounding boxes of the node's index range and may overlap; the index
  ranges themselves are disjoint.

Each private median is computed on exactly the points that previously released splits
route to its node, so all privacy loss composes along root-to-leaf paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterator

import numpy as np

from . import median as med
from .budget import BudgetPlan, audit_path_sum
from .geometry import Rect
from .hilbert import HilbertConfig, encode_array, range_bounding_boxes
from .noise import RandomSource, noisy_count

FANOUT = 4
TREE_KINDS = ("quadtree", "kd", "hybrid", "hilbert")


class TreeStateError(RuntimeError):
    """An operation needs a tree in a different state (e.g. counts not post-processed)."""


@dataclass(frozen=True)
class PrivacyReport:
    epsilon: float
    delta: float = 0.0

    def describe(self) -> str:
        if self.delta:
            return f"({self.epsilon!r}, {self.delta!r})-differentially private"
        return f"{self.epsilon!r}-differentially private"


@dataclass(frozen=True)
class Node:
    """Read-only view of one node."""

    level: int
    index: int
    region: Rect | None
    noisy: float | None
    beta: float | None
    split: tuple | None
    index_range: tuple[int, int] | None
    children: tuple[int, ...]

    @property
    def is_leaf(self) -> bool:
        return not self.children


@dataclass(frozen=True)
class PsdTree:
    kind: str
    height: int
    domain: Rect
    plan: BudgetPlan
    rects: list
    noisy: list
    beta: list | None = None
    splits: list | None = None
    ranges: list | None = None
    leaf_mask: list | None = None
    mechanism: med.MedianMechanism | None = None
    switch_level: int = 0
    hilbert_order: int | None = None
    privacy: PrivacyReport = field(default_factory=lambda: PrivacyReport(0.0))

    fanout = FANOUT

    def level_size(self, level: int) -> int:
        return FANOUT ** (self.height - level)

    @property
    def is_complete(self) -> bool:
        return self.leaf_mask is None

    @property
    def has_beta(self) -> bool:
        return self.beta is not None

    def counts(self, mode: str = "raw") -> list:
        """Per-level count arrays; ``mode`` is ``raw`` (noisy releases) or ``ols``."""
        if mode == "raw":
            return self.noisy
        if mode == "ols":
            if self.beta is None:
                raise TreeStateError("tree has no post-processed counts; run ols() first")
            return self.beta
        raise ValueError(f"unknown count mode {mode!r}")

    def alive(self) -> list:
        """Per-level masks of nodes that survive pruning."""
        alive = [None] * (self.height + 1)
        alive[self.height] = np.ones(1, dtype=bool)
        for i in range(self.height, 0, -1):
            open_ = alive[i] if self.leaf_mask is None else alive[i] & ~self.leaf_mask[i]
            alive[i - 1] = np.repeat(open_, FANOUT)
        return alive

    def is_leaf_at(self, level: int) -> np.ndarray:
        if level == 0:
            return np.ones(self.level_size(0), dtype=bool)
        if self.leaf_mask is None:
            return np.zeros(self.level_size(level), dtype=bool)
        return self.leaf_mask[level]

    def num_nodes(self) -> int:
        return int(sum(a.sum() for a in self.alive()))

    def node(self, level: int, index: int) -> Node:
        leaf = bool(self.is_leaf_at(level)[index])
        children = () if leaf else tuple(range(FANOUT * index, FANOUT * index + FANOUT))
        rect = self.rects[level][index]
        region = None if np.isnan(rect).any() else Rect(*map(float, rect))
        noisy = None if self.noisy[level] is None else float(self.noisy[level][index])
        beta = None if self.beta is None else float(self.beta[level][index])
        split = None
        if self.splits is not None and level > 0 and self.splits[level] is not None:
            split = tuple(v.item() for v in self.splits[level][index])
        rng = None
        if self.ranges is not None:
            rng = (int(self.ranges[level][index, 0]), int(self.ranges[level][index, 1]))
        return Node(level, index, region, noisy, beta, split, rng, children)

    def iter_nodes(self) -> Iterator[Node]:
        """Surviving nodes in depth-first pre-order."""
        stack = [(self.height, 0)]
        while stack:
            level, index = stack.pop()
            node = self.node(level, index)
            yield node
            stack.extend((level - 1, c) for c in reversed(node.children))

    def with_beta(self, beta: list) -> PsdTree:
        return replace(self, beta=beta)


# --------------------------------------------------------------------------- building


def _as_points(points) -> np.ndarray:
    if isinstance(points, np.ndarray):
        arr = points.astype(float, copy=False)
    else:
        arr = np.array([(p.x, p.y) if hasattr(p, "x") else tuple(p) for p in points], dtype=float)
    arr = arr.reshape(-1, 2)
    if not np.all(np.isfinite(arr)):
        raise ValueError("points must have finite coordinates")
    return arr


def _check_inside(pts: np.ndarray, domain: Rect) -> None:
    if not (domain.width > 0 and domain.height > 0):
        raise ValueError(f"domain must have positive area, got {domain.as_tuple()}")
    x, y = pts[:, 0], pts[:, 1]
    inside = (domain.x_lo <= x) & (x < domain.x_hi) & (domain.y_lo <= y) & (y < domain.y_hi)
    if not inside.all():
        bad = pts[np.flatnonzero(~inside)[0]]
        raise ValueError(f"point ({bad[0]}, {bad[1]}) lies outside the domain {domain.as_tuple()}")


SPLIT_MARGIN = 1e-9


def _interior(s: float, lo: float, hi: float) -> float:
    """Clamp a split a relative ``SPLIT_MARGIN`` inside ``(lo, hi)``.

    Mechanisms with heavy-tailed noise often land on the boundary; without a margin
    repeated boundary splits would shrink child regions to zero width within a few
    levels. Regions too narrow to hold an interior float split at ``hi``.
    """
    pad = SPLIT_MARGIN * (hi - lo)
    a, b = lo + pad, hi - pad
    if not a < b:
        a = float(np.nextafter(lo, hi))
        b = float(np.nextafter(hi, lo))
        if not a <= b:
            return hi
    return float(min(max(s, a), b))


class _Partition:
    """Points grouped by node: ``order[offsets[j]:offsets[j+1]]`` are node j's points."""

    def __init__(self, n: int):
        self.order = np.arange(n)
        self.offsets = np.array([0, n])

    def counts(self) -> np.ndarray:
        return np.diff(self.offsets)

    def members(self, j: int) -> np.ndarray:
        return self.order[self.offsets[j] : self.offsets[j + 1]]

    def refine(self, child_of_point: np.ndarray, n_children: int) -> None:
        """``child_of_point`` is aligned with ``order``."""
        perm = np.argsort(child_of_point, kind="stable")
        self.order = self.order[perm]
        self.offsets = np.concatenate(([0], np.cumsum(np.bincount(child_of_point, minlength=n_children))))


class _CellGrid:
    """Noisy counts on a fixed grid over the domain, released once for the whole tree."""

    def __init__(self, pts: np.ndarray, domain: Rect, cell_length: float, eps: float, src: RandomSource):
        nx = max(1, math.ceil(domain.width / cell_length - 1e-9))
        ny = max(1, math.ceil(domain.height / cell_length - 1e-9))
        self.x_edges = np.minimum(domain.x_lo + cell_length * np.arange(nx + 1), domain.x_hi)
        self.y_edges = np.minimum(domain.y_lo + cell_length * np.arange(ny + 1), domain.y_hi)
        self.x_edges[-1], self.y_edges[-1] = domain.x_hi, domain.y_hi
        ix = np.clip(np.searchsorted(self.x_edges, pts[:, 0], side="right") - 1, 0, nx - 1)
        iy = np.clip(np.searchsorted(self.y_edges, pts[:, 1], side="right") - 1, 0, ny - 1)
        true = np.bincount(ix * ny + iy, minlength=nx * ny).reshape(nx, ny)
        self.noisy = noisy_count(src, true, eps)

    def split(self, rect, axis: int) -> float:
        x_lo, x_hi, y_lo, y_hi = rect
        ax0, ax1, wx, bx = med.grid_overlap(self.x_edges, x_lo, x_hi)
        ay0, ay1, wy, by = med.grid_overlap(self.y_edges, y_lo, y_hi)
        block = self.noisy[ax0:ax1, ay0:ay1]
        if axis == 0:
            return med.cell_median(wx * (block @ wy), bx)
        return med.cell_median(wy * (wx @ block), by)


class _Splitter:
    """Chooses private split values for one data-dependent node."""

    def __init__(self, mechanism: med.MedianMechanism, pts, grid: _CellGrid | None):
        self.mechanism = mechanism
        self.pts = pts
        self.grid = grid

    def split(self, src: RandomSource, idx: np.ndarray, rect, axis: int, budget: float) -> float:
        lo, hi = (rect[0], rect[1]) if axis == 0 else (rect[2], rect[3])
        if not lo < hi:
            return hi
        if self.grid is not None:
            s = self.grid.split(rect, axis)
        else:
            c = med.ValueSet.from_unsorted(self.pts[idx, axis], lo, hi)
            s = self.mechanism.select(src, c, budget)
        return _interior(s, lo, hi)


def _kd_level(part: _Partition, rects: np.ndarray, pts: np.ndarray, splitter: _Splitter,
              src: RandomSource, level: int, budget: float):
    """Private x-split then y-splits of both halves for every node on one level."""
    n_nodes = rects.shape[0]
    splits = np.empty((n_nodes, 3))
    half = budget / 2.0
    for j in range(n_nodes):
        node_src = src.child("median", level, j)
        idx = part.members(j)
        r = rects[j]
        sx = splitter.split(node_src.child(0), idx, r, 0, half)
        right = pts[idx, 0] >= sx
        left_rect = (r[0], sx, r[2], r[3])
        right_rect = (sx, r[1], r[2], r[3])
        sy0 = splitter.split(node_src.child(1), idx[~right], left_rect, 1, half)
        sy1 = splitter.split(node_src.child(2), idx[right], right_rect, 1, half)
        splits[j] = (sx, sy0, sy1)
    return splits


def _midpoint_splits(rects: np.ndarray) -> np.ndarray:
    sx = 0.5 * (rects[:, 0] + rects[:, 1])
    sy = 0.5 * (rects[:, 2] + rects[:, 3])
    return np.stack([sx, sy, sy], axis=1)


def _child_rects(rects: np.ndarray, splits: np.ndarray) -> np.ndarray:
    n = rects.shape[0]
    out = np.empty((n, FANOUT, 4))
    sx, sy0, sy1 = splits[:, 0], splits[:, 1], splits[:, 2]
    for c in range(FANOUT):
        upper_x, upper_y = c & 1, c & 2
        out[:, c, 0] = sx if upper_x else rects[:, 0]
        out[:, c, 1] = rects[:, 1] if upper_x else sx
        sy = sy1 if upper_x else sy0
        out[:, c, 2] = sy if upper_y else rects[:, 2]
        out[:, c, 3] = rects[:, 3] if upper_y else sy
    return out.reshape(n * FANOUT, 4)


def _assign_children(part: _Partition, pts: np.ndarray, splits: np.ndarray) -> None:
    n_nodes = splits.shape[0]
    node = np.repeat(np.arange(n_nodes), part.counts())
    p = pts[part.order]
    upper_x = p[:, 0] >= splits[node, 0]
    sy = np.where(upper_x, splits[node, 2], splits[node, 1])
    upper_y = p[:, 1] >= sy
    part.refine(FANOUT * node + upper_x + 2 * upper_y, FANOUT * n_nodes)


def _release_counts(levels_counts: list, plan: BudgetPlan, src: RandomSource) -> list:
    noisy = []
    for i, counts in enumerate(levels_counts):
        eps = plan.count_eps[i]
        noisy.append(noisy_count(src.child("count", i), counts, eps) if eps > 0 else None)
    return noisy


def _privacy(plan: BudgetPlan, mechanism: med.MedianMechanism | None, dd_levels: int) -> PrivacyReport:
    eps = audit_path_sum(plan)
    delta = 0.0
    if mechanism is not None and mechanism.approximate and dd_levels:
        # every data-dependent level releases two medians on any path
        delta = 2 * dd_levels * mechanism.delta
    return PrivacyReport(eps, delta)


def _validate_plan(plan: BudgetPlan, h: int, dd_levels: int) -> None:
    if plan.height != h:
        raise ValueError(f"plan height {plan.height} does not match tree height {h}")
    if not any(e > 0 for e in plan.count_eps):
        raise ValueError("plan releases no counts")
    for i in range(1, h + 1):
        dd = i > h - dd_levels
        if dd and not plan.median_eps[i] > 0:
            raise ValueError(f"level {i} splits privately but has no median budget")
        if not dd and plan.median_eps[i] != 0:
            raise ValueError(f"level {i} splits at midpoints but carries median budget {plan.median_eps[i]}")


def _build_spatial(kind, points, domain, h, plan, src, mechanism, switch_level) -> PsdTree:
    if h < 0:
        raise ValueError(f"height must be >= 0, got {h}")
    if not 0 <= switch_level <= h:
        raise ValueError(f"switch level must lie in [0, {h}], got {switch_level}")
    _validate_plan(plan, h, switch_level)
    pts = _as_points(points)
    _check_inside(pts, domain)
    if switch_level and mechanism is None:
        raise ValueError("data-dependent splits need a median mechanism")

    grid = None
    if switch_level and mechanism.kind == "cell":
        # the grid is the only median release; it is charged the whole median budget once
        grid = _CellGrid(pts, domain, mechanism.cell_length, plan.eps_median, src.child("grid"))
    splitter = _Splitter(mechanism, pts, grid) if switch_level else None

    part = _Partition(len(pts))
    rects = [None] * (h + 1)
    splits = [None] * (h + 1)
    counts = [None] * (h + 1)
    rects[h] = np.array([domain.as_tuple()], dtype=float)
    for i in range(h, 0, -1):
        counts[i] = part.counts()
        if i > h - switch_level:
            splits[i] = _kd_level(part, rects[i], pts, splitter, src, i, plan.median_eps[i])
        else:
            splits[i] = _midpoint_splits(rects[i])
        _assign_children(part, pts, splits[i])
        rects[i - 1] = _child_rects(rects[i], splits[i])
    counts[0] = part.counts()

    return PsdTree(
        kind=kind,
        height=h,
        domain=domain,
        plan=plan,
        rects=rects,
        noisy=_release_counts(counts, plan, src),
        splits=splits,
        mechanism=mechanism if switch_level else None,
        switch_level=switch_level,
        privacy=_privacy(plan, mechanism, switch_level),
    )


def build_quadtree(points, domain: Rect, h: int, plan: BudgetPlan, src: RandomSource) -> PsdTree:
    """Complete quadtree of height ``h`` with a noisy count on every released level."""
    return _build_spatial("quadtree", points, domain, h, plan, src, None, 0)


def build_kd_flattened(points, domain: Rect, h: int, plan: BudgetPlan,
                       mechanism: med.MedianMechanism, src: RandomSource) -> PsdTree:
    """Flattened kd-tree: each level makes one private x-split and two private y-splits.

    A level's median budget is halved between its x-split and its y-splits; the two
    y-splits see disjoint points and so share the same half.
    """
    if h < 1:
        raise ValueError("a kd-tree needs height >= 1")
    return _build_spatial("kd", points, domain, h, plan, src, mechanism, h)


def build_hybrid(points, domain: Rect, h: int, switch_level: int, plan: BudgetPlan,
                 mechanism: med.MedianMechanism | None, src: RandomSource) -> PsdTree:
    """Private median splits on the top ``switch_level`` levels, midpoint splits below."""
    return _build_spatial("hybrid", points, domain, h, plan, src, mechanism, switch_level)


def _hilbert_split(mechanism, src, keys, lo: int, hi: int, budget: float) -> int:
    if hi - lo < 2:
        return hi
    c = med.ValueSet(keys.astype(float), float(lo), float(hi))
    v = mechanism.select(src, c, budget)
    # keys <= v go left
    s = math.floor(v) + 1
    return int(min(max(s, lo + 1), hi - 1))


def build_hilbert_rtree(points, domain: Rect, h: int, plan: BudgetPlan,
                        mechanism: med.MedianMechanism, hilbert_cfg: HilbertConfig,
                        src: RandomSource) -> PsdTree:
    """Flattened binary tree over Hilbert indices with bounding-box node rectangles."""
    if h < 1:
        raise ValueError("a Hilbert R-tree needs height >= 1")
    if mechanism.kind == "cell":
        raise ValueError("the cell mechanism is defined on the 2-D grid, not on Hilbert indices")
    if hilbert_cfg.domain != domain:
        raise ValueError("Hilbert configuration must cover the tree domain")
    _validate_plan(plan, h, h)
    pts = _as_points(points)
    _check_inside(pts, domain)
    keys = encode_array(hilbert_cfg, pts[:, 0], pts[:, 1])

    part = _Partition(len(pts))
    part.order = np.argsort(keys, kind="stable")
    ranges = [None] * (h + 1)
    splits = [None] * (h + 1)
    counts = [None] * (h + 1)
    ranges[h] = np.array([[0, hilbert_cfg.size]], dtype=np.int64)
    for i in range(h, 0, -1):
        counts[i] = part.counts()
        n_nodes = ranges[i].shape[0]
        sp = np.empty((n_nodes, 3), dtype=np.int64)
        half = plan.median_eps[i] / 2.0
        for j in range(n_nodes):
            node_src = src.child("median", i, j)
            lo, hi = ranges[i][j]
            k = keys[part.members(j)]  # already sorted
            s1 = _hilbert_split(mechanism, node_src.child(0), k, lo, hi, half)
            cut = np.searchsorted(k, s1)
            s0 = _hilbert_split(mechanism, node_src.child(1), k[:cut], lo, s1, half)
            s2 = _hilbert_split(mechanism, node_src.child(2), k[cut:], s1, hi, half)
            sp[j] = (s1, s0, s2)
        splits[i] = sp
        bounds = np.stack([ranges[i][:, 0], sp[:, 1], sp[:, 0], sp[:, 2], ranges[i][:, 1]], axis=1)
        ranges[i - 1] = np.stack([bounds[:, :-1], bounds[:, 1:]], axis=2).reshape(-1, 2)
        node = np.repeat(np.arange(n_nodes), part.counts())
        child = FANOUT * node + (keys[part.order][:, None] >= bounds[node, 1:4]).sum(axis=1)
        part.refine(child, FANOUT * n_nodes)
    counts[0] = part.counts()

    rects = [None] * (h + 1)
    rects[0] = range_bounding_boxes(hilbert_cfg, ranges[0][:, 0], ranges[0][:, 1])
    for i in range(1, h + 1):
        ch = rects[i - 1].reshape(-1, FANOUT, 4)
        with np.errstate(invalid="ignore"), np.testing.suppress_warnings() as sup:
            sup.filter(RuntimeWarning)
            rects[i] = np.stack(
                [np.nanmin(ch[:, :, 0], axis=1), np.nanmax(ch[:, :, 1], axis=1),
                 np.nanmin(ch[:, :, 2], axis=1), np.nanmax(ch[:, :, 3], axis=1)], axis=1)

    return PsdTree(
        kind="hilbert",
        height=h,
        domain=domain,
        plan=plan,
        rects=rects,
        noisy=_release_counts(counts, plan, src),
        splits=splits,
        ranges=ranges,
        mechanism=mechanism,
        switch_level=h,
        hilbert_order=hilbert_cfg.order,
        privacy=_privacy(plan, mechanism, h),
    )


def build_tree(kind: str, points, domain: Rect, h: int, plan: BudgetPlan, src: RandomSource,
               mechanism: med.MedianMechanism | None = None, switch_level: int | None = None,
               hilbert_order: int | None = None) -> PsdTree:
    """Dispatch on ``kind`` (one of ``quadtree``, ``kd``, ``hybrid``, ``hilbert``)."""
    if kind == "quadtree":
        return build_quadtree(points, domain, h, plan, src)
    mechanism = mechanism or med.MedianMechanism()
    if kind == "kd":
        return build_kd_flattened(points, domain, h, plan, mechanism, src)
    if kind == "hybrid":
        ell = h // 2 if switch_level is None else switch_level
        return build_hybrid(points, domain, h, ell, plan, mechanism, src)
    if kind == "hilbert":
        from .hilbert import DEFAULT_ORDER

        cfg = HilbertConfig(hilbert_order or DEFAULT_ORDER, domain)
        return build_hilbert_rtree(points, domain, h, plan, mechanism, cfg, src)
    raise ValueError(f"unknown tree kind {kind!r}; expected one of {TREE_KINDS}")


# --------------------------------------------------------------------------- pruning


def prune(tree: PsdTree, m: float) -> PsdTree:
    """Cut the subtree below every node whose post-processed count is below ``m``.

    Counts are left untouched; a cut node simply becomes a leaf.
    """
    if tree.beta is None:
        raise TreeStateError("prune() runs after post-processing; the tree has no OLS counts")
    alive = tree.alive()
    leaf_mask = [None] * (tree.height + 1)
    for i in range(tree.height, 0, -1):
        prior = tree.is_leaf_at(i)
        leaf_mask[i] = prior | (alive[i] & (tree.beta[i] < m))
        if i > 1:
            alive[i - 1] = np.repeat(alive[i] & ~leaf_mask[i], FANOUT)
    return replace(tree, leaf_mask=leaf_mask)
