"""Points, half-open rectangles and the area arithmetic used for splitting and querying.

Every rectangle is half-open, ``[x_lo, x_hi) x [y_lo, y_hi)``, so a point lying on a
split line always belongs to the upper/right child.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
import numpy as np


class DegenerateRegionError(ValueError):
    """Raised when an area-based computation is asked of a zero-area region."""


@dataclass(frozen=True)
class Point:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"point coordinates must be finite, got ({self.x}, {self.y})")


class Relation(enum.Enum):
    DISJOINT = "disjoint"
    A_CONTAINS_B = "a_contains_b"
    PARTIAL_OVERLAP = "partial_overlap"


@dataclass(frozen=True)
class Rect:
    x_lo: float
    x_hi: float
    y_lo: float
    y_hi: float

    def __post_init__(self):
        coords = (self.x_lo, self.x_hi, self.y_lo, self.y_hi)
        if any(math.isnan(c) for c in coords):
            raise ValueError(f"rectangle has NaN coordinates: {coords}")
        if self.x_lo > self.x_hi or self.y_lo > self.y_hi:
            raise ValueError(f"inverted rectangle: {coords}")

    @property
    def width(self) -> float:
        return self.x_hi - self.x_lo

    @property
    def height(self) -> float:
        return self.y_hi - self.y_lo

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_lo, self.x_hi, self.y_lo, self.y_hi)

    def intersection(self, other: Rect) -> Rect | None:
        """The overlap of two rectangles, or None when they share no area."""
        x_lo, x_hi = max(self.x_lo, other.x_lo), min(self.x_hi, other.x_hi)
        y_lo, y_hi = max(self.y_lo, other.y_lo), min(self.y_hi, other.y_hi)
        if x_lo >= x_hi or y_lo >= y_hi:
            return None
        return Rect(x_lo, x_hi, y_lo, y_hi)

    @classmethod
    def from_string(cls, text: str) -> Rect:
        """Parse ``"x_lo,x_hi,y_lo,y_hi"``."""
        parts = [float(p) for p in text.split(",")]
        if len(parts) != 4:
            raise ValueError(f"expected 4 comma-separated numbers, got {text!r}")
        return cls(*parts)


def contains(r: Rect, p: Point) -> bool:
    return r.x_lo <= p.x < r.x_hi and r.y_lo <= p.y < r.y_hi


def relation(a: Rect, b: Rect) -> Relation:
    """Classify how rectangle ``a`` relates to rectangle ``b``.

    Under half-open semantics two rectangles that merely touch along an edge are
    disjoint, and an empty ``b`` is contained in any ``a`` that bounds it.
    """
    if a.x_lo <= b.x_lo and b.x_hi <= a.x_hi and a.y_lo <= b.y_lo and b.y_hi <= a.y_hi:
        return Relation.A_CONTAINS_B
    if b.x_hi <= a.x_lo or a.x_hi <= b.x_lo or b.y_hi <= a.y_lo or a.y_hi <= b.y_lo:
        return Relation.DISJOINT
    # zero-width b inside a's span but not contained, e.g. on the open edge
    if b.x_lo == b.x_hi or b.y_lo == b.y_hi:
        return Relation.DISJOINT
    return Relation.PARTIAL_OVERLAP


def overlap_fraction(leaf: Rect, q: Rect) -> float:
    """Fraction of ``leaf``'s area covered by ``q``."""
    if not leaf.area > 0:
        raise DegenerateRegionError(f"zero-area region {leaf.as_tuple()}")
    w = max(0.0, min(leaf.x_hi, q.x_hi) - max(leaf.x_lo, q.x_lo))
    h = max(0.0, min(leaf.y_hi, q.y_hi) - max(leaf.y_lo, q.y_lo))
    return min(1.0, (w * h) / leaf.area)


# Vectorised forms over (N, 4) arrays with columns x_lo, x_hi, y_lo, y_hi.

def rects_to_array(rects) -> np.ndarray:
    return np.array([r.as_tuple() for r in rects], dtype=float).reshape(-1, 4)


def contains_points(rects: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Element-wise containment of point i in rectangle i."""
    return (rects[:, 0] <= xs) & (xs < rects[:, 1]) & (rects[:, 2] <= ys) & (ys < rects[:, 3])


def classify(rects: np.ndarray, q: Rect) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(contained, intersects)`` masks of each rectangle against ``q``.

    ``contained`` means the rectangle lies inside ``q``; ``intersects`` means they
    share positive area. Rows containing NaN never intersect and are never contained.
    """
    x_lo, x_hi, y_lo, y_hi = rects[:, 0], rects[:, 1], rects[:, 2], rects[:, 3]
    with np.errstate(invalid="ignore"):
        contained = (q.x_lo <= x_lo) & (x_hi <= q.x_hi) & (q.y_lo <= y_lo) & (y_hi <= q.y_hi)
        intersects = (
            (np.minimum(x_hi, q.x_hi) > np.maximum(x_lo, q.x_lo))
            & (np.minimum(y_hi, q.y_hi) > np.maximum(y_lo, q.y_lo))
        )
    return contained & intersects, intersects


def overlap_fractions(rects: np.ndarray, q: Rect) -> np.ndarray:
    x_lo, x_hi, y_lo, y_hi = rects[:, 0], rects[:, 1], rects[:, 2], rects[:, 3]
    area = (x_hi - x_lo) * (y_hi - y_lo)
    if np.any(~(area > 0)):
        raise DegenerateRegionError("zero-area region in overlap computation")
    w = np.clip(np.minimum(x_hi, q.x_hi) - np.maximum(x_lo, q.x_lo), 0.0, None)
    h = np.clip(np.minimum(y_hi, q.y_hi) - np.maximum(y_lo, q.y_lo), 0.0, None)
    return np.minimum(1.0, w * h / area)
