"""Query workloads: rectangles of fixed shapes with non-empty true answers."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..geometry import Rect
from ..noise import RandomSource

DEFAULT_QUERIES_PER_SHAPE = 600
MAX_TRIES_PER_QUERY = 100_000
_BATCH = 256
WORKLOAD_HEADER = ["query_id", "shape", "x_lo", "y_lo", "x_hi", "y_hi"]


class RejectionCapError(RuntimeError):
    pass


def shape_label(shape) -> str:
    w, h = shape
    return f"{w:g}x{h:g}"


@dataclass(frozen=True)
class Workload:
    shapes: tuple
    rects: np.ndarray  # (N, 4) as x_lo, x_hi, y_lo, y_hi
    shape_ids: np.ndarray
    seed: int | None = None

    def __len__(self) -> int:
        return len(self.rects)

    def query(self, k: int) -> Rect:
        return Rect(*map(float, self.rects[k]))

    def label(self, k: int) -> str:
        return shape_label(self.shapes[int(self.shape_ids[k])])

    def save(self, path) -> None:
        with open(Path(path), "w", encoding="utf-8", newline="") as fp:
            w = csv.writer(fp, lineterminator="\n")
            w.writerow(WORKLOAD_HEADER)
            for k, r in enumerate(self.rects):
                w.writerow([k, self.label(k)] + [repr(float(r[c])) for c in (0, 2, 1, 3)])

    @classmethod
    def load(cls, path) -> Workload:
        shapes: list = []
        labels: dict = {}
        rects, ids = [], []
        with open(Path(path), encoding="utf-8", newline="") as fp:
            reader = csv.DictReader(fp)
            for row in reader:
                label = row["shape"]
                if label not in labels:
                    w, h = (float(t) for t in label.split("x"))
                    labels[label] = len(shapes)
                    shapes.append((w, h))
                ids.append(labels[label])
                rects.append([float(row["x_lo"]), float(row["x_hi"]), float(row["y_lo"]), float(row["y_hi"])])
        return cls(tuple(shapes), np.array(rects, dtype=float).reshape(-1, 4), np.array(ids, dtype=np.int64))


class _Counter:
    """Counts points in rectangles using x-sorted points."""

    def __init__(self, points: np.ndarray):
        order = np.argsort(points[:, 0], kind="stable")
        self.xs = points[order, 0]
        self.ys = points[order, 1]

    def count(self, r) -> int:
        a = np.searchsorted(self.xs, r[0], side="left")
        b = np.searchsorted(self.xs, r[1], side="left")
        y = self.ys[a:b]
        return int(np.count_nonzero((r[2] <= y) & (y < r[3])))


def _place(gen, lo: float, hi: float, size: float, m: int) -> tuple[np.ndarray, np.ndarray]:
    if size >= hi - lo:
        start = np.full(m, lo)
        return start, start + size
    start = gen.uniform(lo, hi - size, m)
    return start, start + size


def gen_workload(shapes, domain: Rect, points, src: RandomSource,
                 per_shape: int = DEFAULT_QUERIES_PER_SHAPE,
                 max_tries: int = MAX_TRIES_PER_QUERY) -> Workload:
    """``per_shape`` rectangles per ``(width, height)`` shape, placed uniformly in the domain.

    Placements with no points inside are rejected. A shape at least as large as the
    domain is anchored at the lower-left corner.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise ValueError("a workload needs a non-empty dataset")
    shapes = tuple((float(w), float(h)) for w, h in shapes)
    for w, h in shapes:
        if not (w > 0 and h > 0):
            raise ValueError(f"query shapes need positive sides, got {(w, h)}")
    counter = _Counter(pts)
    rects, ids = [], []
    for s, (w, h) in enumerate(shapes):
        gen = src.child("workload", s).generator
        for k in range(per_shape):
            tries = 0
            found = None
            while found is None:
                if tries >= max_tries:
                    raise RejectionCapError(
                        f"no non-empty placement for shape {shape_label((w, h))} after {max_tries} tries "
                        f"(query {k}); use a larger shape"
                    )
                m = min(_BATCH, max_tries - tries)
                x0, x1 = _place(gen, domain.x_lo, domain.x_hi, w, m)
                y0, y1 = _place(gen, domain.y_lo, domain.y_hi, h, m)
                for t in range(m):
                    r = (x0[t], x1[t], y0[t], y1[t])
                    if counter.count(r) > 0:
                        found = r
                        break
                tries += m
            rects.append(found)
            ids.append(s)
    return Workload(shapes, np.array(rects, dtype=float).reshape(-1, 4), np.array(ids, dtype=np.int64))
