"""Hilbert curve indexing of a rectangular domain.

The domain is divided into a ``2^k x 2^k`` grid of cells. The curve starts in the
lower-left cell and, at order 1, visits ``(0,0) -> (0,1) -> (1,1) -> (1,0)`` (cell
coordinates ``(column, row)``); higher orders refine each quadrant with the usual
rotations and reflections. This orientation is fixed so serialised index ranges stay
meaningful across runs.

Scalar functions use Python integers and work for every order up to 31. The
vectorised helpers use int64 arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Point, Rect

DEFAULT_ORDER = 18
MAX_ORDER = 31


@dataclass(frozen=True)
class HilbertConfig:
    order: int = DEFAULT_ORDER
    domain: Rect = Rect(0.0, 1.0, 0.0, 1.0)

    def __post_init__(self):
        if not 1 <= self.order <= MAX_ORDER:
            raise ValueError(f"Hilbert order must lie in [1, {MAX_ORDER}], got {self.order}")
        if not (self.domain.width > 0 and self.domain.height > 0):
            raise ValueError("Hilbert domain must have positive area")

    @property
    def side(self) -> int:
        return 1 << self.order

    @property
    def size(self) -> int:
        return 1 << (2 * self.order)

    def x_edges(self, i):
        return _edges(self.domain.x_lo, self.domain.x_hi, i, self.side)

    def y_edges(self, j):
        return _edges(self.domain.y_lo, self.domain.y_hi, j, self.side)


def _edges(lo: float, hi: float, i, side: int):
    """Coordinate of grid line ``i``; the last line is pinned to ``hi`` exactly."""
    i = np.asarray(i)
    out = np.where(i >= side, hi, lo + (hi - lo) * (i / side))
    return float(out) if out.ndim == 0 else out


def xy_to_index(order: int, x: int, y: int) -> int:
    n = 1 << order
    d = 0
    s = n >> 1
    while s > 0:
        rx = 1 if x & s else 0
        ry = 1 if y & s else 0
        d += s * s * ((3 * rx) ^ ry)
        if ry == 0:
            if rx == 1:
                x, y = n - 1 - x, n - 1 - y
            x, y = y, x
        s >>= 1
    return d


def index_to_xy(order: int, d: int) -> tuple[int, int]:
    n = 1 << order
    x = y = 0
    t = d
    s = 1
    while s < n:
        rx = 1 & (t >> 1)
        ry = 1 & (t ^ rx)
        if ry == 0:
            if rx == 1:
                x, y = s - 1 - x, s - 1 - y
            x, y = y, x
        x += s * rx
        y += s * ry
        t >>= 2
        s <<= 1
    return x, y


def xy_to_index_array(order: int, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64).copy()
    y = np.asarray(y, dtype=np.int64).copy()
    n = np.int64(1) << order
    d = np.zeros_like(x)
    s = n >> 1
    while s > 0:
        rx = ((x & s) > 0).astype(np.int64)
        ry = ((y & s) > 0).astype(np.int64)
        d += s * s * ((3 * rx) ^ ry)
        flip = (ry == 0) & (rx == 1)
        x = np.where(flip, n - 1 - x, x)
        y = np.where(flip, n - 1 - y, y)
        swap = ry == 0
        x, y = np.where(swap, y, x), np.where(swap, x, y)
        s >>= 1
    return d


def index_to_xy_array(order: int, d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    t = np.asarray(d, dtype=np.int64).copy()
    x = np.zeros_like(t)
    y = np.zeros_like(t)
    s = np.int64(1)
    n = np.int64(1) << order
    while s < n:
        rx = 1 & (t >> 1)
        ry = 1 & (t ^ rx)
        flip = (ry == 0) & (rx == 1)
        x = np.where(flip, s - 1 - x, x)
        y = np.where(flip, s - 1 - y, y)
        swap = ry == 0
        x, y = np.where(swap, y, x), np.where(swap, x, y)
        x = x + s * rx
        y = y + s * ry
        t >>= 2
        s <<= 1
    return x, y


def _cell_coord(lo: float, hi: float, side: int, v):
    """Grid column of coordinate ``v``, consistent with :func:`_edges` at boundaries."""
    v = np.asarray(v, dtype=float)
    i = np.floor((v - lo) / (hi - lo) * side).astype(np.int64)
    i = np.clip(i, 0, side - 1)
    i = np.where(v < _edges(lo, hi, i, side), i - 1, i)
    i = np.where(v >= _edges(lo, hi, i + 1, side), i + 1, i)
    return np.clip(i, 0, side - 1)


def grid_cells(cfg: HilbertConfig, xs, ys) -> tuple[np.ndarray, np.ndarray]:
    dom = cfg.domain
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    inside = (dom.x_lo <= xs) & (xs < dom.x_hi) & (dom.y_lo <= ys) & (ys < dom.y_hi)
    if not np.all(inside):
        bad = np.flatnonzero(~inside)[0]
        raise ValueError(f"point ({xs.flat[bad]}, {ys.flat[bad]}) lies outside the Hilbert domain")
    return (
        _cell_coord(dom.x_lo, dom.x_hi, cfg.side, xs),
        _cell_coord(dom.y_lo, dom.y_hi, cfg.side, ys),
    )


def encode(cfg: HilbertConfig, p: Point) -> int:
    """Hilbert index of the grid cell holding ``p``."""
    cx, cy = grid_cells(cfg, [p.x], [p.y])
    return xy_to_index(cfg.order, int(cx[0]), int(cy[0]))


def encode_array(cfg: HilbertConfig, xs, ys) -> np.ndarray:
    if cfg.order > 31:
        raise ValueError("vectorised encoding supports orders up to 31")
    cx, cy = grid_cells(cfg, xs, ys)
    return xy_to_index_array(cfg.order, cx, cy)


def _cell_rect(cfg: HilbertConfig, cx: int, cy: int, span: int = 1) -> Rect:
    return Rect(cfg.x_edges(cx), cfg.x_edges(cx + span), cfg.y_edges(cy), cfg.y_edges(cy + span))


def decode(cfg: HilbertConfig, idx: int) -> Rect:
    """The data-space rectangle of the cell with Hilbert index ``idx``."""
    if not 0 <= idx < cfg.size:
        raise ValueError(f"Hilbert index {idx} outside [0, {cfg.size})")
    cx, cy = index_to_xy(cfg.order, int(idx))
    return _cell_rect(cfg, cx, cy)


def range_grid_boxes(order: int, lo, hi) -> np.ndarray:
    """Grid-cell bounding boxes of the half-open index ranges ``[lo, hi)``.

    Each range is cut into maximal aligned blocks of ``4^j`` consecutive indices; such a
    block is exactly an aligned ``2^j x 2^j`` square of cells. Returns an ``(N, 4)``
    int64 array of ``(cx_lo, cx_hi, cy_lo, cy_hi)`` with exclusive upper ends; empty
    ranges get ``(-1, -1, -1, -1)``.
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=np.int64)).copy()
    hi = np.atleast_1d(np.asarray(hi, dtype=np.int64)).copy()
    big = np.iinfo(np.int64).max
    box = np.stack([np.full_like(lo, big), np.full_like(lo, -1), np.full_like(lo, big), np.full_like(lo, -1)], axis=1)

    def take(start, mask, j):
        if not mask.any():
            return
        bx, by = index_to_xy_array(order, start[mask])
        side = np.int64(1) << j
        bx = (bx >> j) << j
        by = (by >> j) << j
        sub = box[mask]
        sub[:, 0] = np.minimum(sub[:, 0], bx)
        sub[:, 1] = np.maximum(sub[:, 1], bx + side)
        sub[:, 2] = np.minimum(sub[:, 2], by)
        sub[:, 3] = np.maximum(sub[:, 3], by + side)
        box[mask] = sub

    for j in range(order + 1):
        size = np.int64(1) << (2 * j)
        for _ in range(3):
            mask = (lo % (4 * size) != 0) & (lo + size <= hi) if j < order else (lo + size <= hi)
            take(lo, mask, j)
            lo = np.where(mask, lo + size, lo)
        for _ in range(3):
            mask = (hi % (4 * size) != 0) & (hi - size >= lo) if j < order else (hi - size >= lo)
            take(hi - size, mask, j)
            hi = np.where(mask, hi - size, hi)
    empty = box[:, 1] < 0
    box[empty] = -1
    return box


def range_bounding_boxes(cfg: HilbertConfig, lo, hi) -> np.ndarray:
    """Data-space bounding boxes of index ranges ``[lo, hi)``; NaN rows for empty ranges."""
    g = range_grid_boxes(cfg.order, lo, hi)
    out = np.empty(g.shape, dtype=float)
    out[:, 0] = cfg.x_edges(g[:, 0])
    out[:, 1] = cfg.x_edges(g[:, 1])
    out[:, 2] = cfg.y_edges(g[:, 2])
    out[:, 3] = cfg.y_edges(g[:, 3])
    out[g[:, 1] < 0] = np.nan
    return out


def bounding_box(cfg: HilbertConfig, idx_lo: int, idx_hi: int) -> Rect:
    """Smallest rectangle covering every cell with index in ``[idx_lo, idx_hi]`` (inclusive)."""
    if idx_lo > idx_hi:
        raise ValueError(f"empty index range [{idx_lo}, {idx_hi}]")
    if idx_lo < 0 or idx_hi >= cfg.size:
        raise ValueError(f"index range [{idx_lo}, {idx_hi}] outside [0, {cfg.size})")
    b = range_bounding_boxes(cfg, [idx_lo], [idx_hi + 1])[0]
    return Rect(*b)
