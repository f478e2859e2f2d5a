"""Point files and synthetic datasets.

Point files are plain text with one ``x,y`` pair per line in dot-decimal notation.
Blank lines and lines starting with ``#`` are ignored.
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from ..geometry import Rect
from ..noise import RandomSource

log = logging.getLogger(__name__)

SYNTHETIC_KINDS = ("uniform", "gaussian-mixture", "skewed-corner")
MIXTURE_COMPONENTS = 12
SKEW_POWER = 3.0


class PointsFormatError(ValueError):
    pass


def load_points(path, domain: Rect | None = None) -> np.ndarray:
    """Parse a point file into an ``(n, 2)`` array.

    Raises :class:`PointsFormatError` citing the line number of the first malformed
    line, or of the first point outside ``domain`` when one is given.
    """
    rows = []
    with open(Path(path), encoding="utf-8") as fp:
        for lineno, line in enumerate(fp, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.split(",")
            if len(parts) != 2:
                raise PointsFormatError(f"{path}:{lineno}: expected 'x,y', got {text!r}")
            try:
                x, y = float(parts[0]), float(parts[1])
            except ValueError:
                raise PointsFormatError(f"{path}:{lineno}: non-numeric coordinate in {text!r}") from None
            if not (np.isfinite(x) and np.isfinite(y)):
                raise PointsFormatError(f"{path}:{lineno}: non-finite coordinate in {text!r}")
            if domain is not None and not (domain.x_lo <= x < domain.x_hi and domain.y_lo <= y < domain.y_hi):
                raise PointsFormatError(f"{path}:{lineno}: point ({x}, {y}) outside domain {domain.as_tuple()}")
            rows.append((x, y))
    pts = np.array(rows, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        log.warning("%s: empty dataset", path)
    else:
        log.info("%s: %d points, bounding box x=[%r, %r] y=[%r, %r]", path, len(pts),
                 pts[:, 0].min(), pts[:, 0].max(), pts[:, 1].min(), pts[:, 1].max())
    return pts


def save_points(path, points) -> None:
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    with open(Path(path), "w", encoding="utf-8", newline="\n") as fp:
        for x, y in pts:
            fp.write(f"{float(x)!r},{float(y)!r}\n")


def data_bounding_domain(points) -> Rect:
    """Smallest half-open rectangle holding every point. Leaks the data's extent."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise ValueError("cannot derive a domain from an empty dataset")
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    hi = np.where(hi > lo, np.nextafter(hi, np.inf), lo + 1.0)
    return Rect(float(lo[0]), float(hi[0]), float(lo[1]), float(hi[1]))


def _scale(domain: Rect, u: np.ndarray) -> np.ndarray:
    out = np.empty_like(u)
    out[:, 0] = domain.x_lo + domain.width * u[:, 0]
    out[:, 1] = domain.y_lo + domain.height * u[:, 1]
    # rounding can land exactly on the upper edge
    out[:, 0] = np.minimum(out[:, 0], np.nextafter(domain.x_hi, -np.inf))
    out[:, 1] = np.minimum(out[:, 1], np.nextafter(domain.y_hi, -np.inf))
    return out


def gen_synthetic(kind: str, n: int, domain: Rect, seed: int) -> np.ndarray:
    """Deterministic synthetic points inside ``domain``.

    * ``uniform``: independent uniform coordinates;
    * ``gaussian-mixture``: a few Gaussian clusters of varying weight and spread,
      resampled until inside the domain;
    * ``skewed-corner``: each unit coordinate is ``u^3``, piling points towards the
      lower-left corner.
    """
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    if kind not in SYNTHETIC_KINDS:
        raise ValueError(f"unknown synthetic kind {kind!r}; expected one of {SYNTHETIC_KINDS}")
    gen = RandomSource(seed).child("synthetic", kind).generator
    if kind == "uniform":
        return _scale(domain, gen.random((n, 2)))
    if kind == "skewed-corner":
        return _scale(domain, gen.random((n, 2)) ** SKEW_POWER)

    k = MIXTURE_COMPONENTS
    centers = gen.random((k, 2))
    spreads = gen.uniform(0.01, 0.08, size=k)
    weights = gen.dirichlet(np.ones(k))
    out = np.empty((0, 2))
    while len(out) < n:
        m = n - len(out)
        comp = gen.choice(k, size=m, p=weights)
        u = centers[comp] + spreads[comp, None] * gen.standard_normal((m, 2))
        u = u[(u >= 0).all(axis=1) & (u < 1).all(axis=1)]
        out = np.concatenate([out, _scale(domain, u)])
    return out[:n]
