"""Private medians of one-dimensional value sets inside a public range ``[lo, hi]``.

Conventions shared by every mechanism: values are sorted, the median index is
``m = ceil(n/2)`` (1-based), ``rank(x)`` is the number of values ``<= x``, and every
output is clamped to ``[lo, hi]`` so it can be used directly as a split coordinate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .noise import LaplaceParams, RandomSource, laplace_sample, standard_laplace

DEFAULT_DELTA = 1e-4
DEFAULT_SAMPLE_RATE = 0.01
DEFAULT_CELL_LENGTH = 0.01

MECHANISMS = ("em", "ss", "cell", "nm", "laplace")


@dataclass(frozen=True)
class ValueSet:
    """A sorted multiset of reals and the public range that bounds it."""

    values: np.ndarray
    lo: float
    hi: float

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValueError(f"range must have positive length, got [{self.lo}, {self.hi}]")
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1:
            raise ValueError("values must be one-dimensional")
        if v.size and np.any(np.diff(v) < 0):
            raise ValueError("values must be sorted in non-decreasing order")
        if v.size and (v[0] < self.lo or v[-1] > self.hi):
            raise ValueError("values fall outside [lo, hi]")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_unsorted(cls, values, lo: float, hi: float) -> ValueSet:
        return cls(np.clip(np.sort(np.asarray(values, dtype=float)), lo, hi), lo, hi)

    @property
    def n(self) -> int:
        return int(self.values.size)

    @property
    def spread(self) -> float:
        return self.hi - self.lo

    @property
    def median_index(self) -> int:
        return (self.n + 1) // 2

    @property
    def median(self) -> float:
        if self.n == 0:
            raise ValueError("empty value set has no median")
        return float(self.values[self.median_index - 1])

    def padded(self) -> np.ndarray:
        """``x_0 .. x_{n+1}`` with the sentinels ``x_0 = lo`` and ``x_{n+1} = hi``."""
        return np.concatenate(([self.lo], self.values, [self.hi]))


def rank(c: ValueSet, x: float) -> int:
    return int(np.searchsorted(c.values, x, side="right"))


def normalized_rank_error(c: ValueSet, x: float) -> float:
    """``|rank(x) - n/2| / (n/2)``, so outputs outside the data cost 100%."""
    if c.n == 0:
        return 0.0
    half = c.n / 2.0
    return min(1.0, abs(rank(c, x) - half) / half)


def _clamp(x: float, lo: float, hi: float) -> float:
    return float(min(max(x, lo), hi))


def em_median(src: RandomSource, c: ValueSet, eps: float) -> float:
    """Exponential-mechanism median.

    Interval ``I_k = [x_k, x_{k+1})`` for ``k = 0..n`` is drawn with probability
    proportional to ``|I_k| * exp(-eps/2 * |k - m|)``; the output is uniform inside it.
    ``eps = 0`` selects by length alone; ``eps = inf`` concentrates on ``I_m``.
    """
    if eps < 0:
        raise ValueError(f"epsilon must be >= 0, got {eps}")
    rng = src.generator
    if c.n == 0:
        return float(rng.uniform(c.lo, c.hi)) if not src.noiseless else 0.5 * (c.lo + c.hi)
    if src.noiseless:
        return c.median
    bounds = c.padded()
    lengths = np.diff(bounds)
    k = np.arange(c.n + 1)
    dist = np.abs(k - c.median_index)
    if math.isinf(eps):
        # nearest interval with positive length to the median rank
        cand = np.flatnonzero(lengths > 0)
        if cand.size == 0:
            return float(c.lo)
        best = cand[np.argmin(dist[cand])]
        return _clamp(rng.uniform(bounds[best], bounds[best + 1]), c.lo, c.hi)
    with np.errstate(divide="ignore"):
        logw = np.log(lengths) - 0.5 * eps * dist
    top = logw.max()
    if not np.isfinite(top):
        return float(c.lo)
    w = np.exp(logw - top)
    cdf = np.cumsum(w)
    idx = int(np.searchsorted(cdf, rng.uniform(0.0, cdf[-1]), side="right"))
    idx = min(idx, c.n)
    return _clamp(rng.uniform(bounds[idx], bounds[idx + 1]), c.lo, c.hi)


def em_interval_probabilities(c: ValueSet, eps: float) -> np.ndarray:
    """Exact selection probabilities of ``I_0 .. I_n`` used by :func:`em_median`."""
    lengths = np.diff(c.padded())
    dist = np.abs(np.arange(c.n + 1) - c.median_index)
    w = lengths * np.exp(-0.5 * eps * dist)
    return w / w.sum()


def smooth_xi(eps: float, delta: float) -> float:
    return eps / (4.0 * (1.0 + math.log(2.0 / delta)))


def smooth_sensitivity(c: ValueSet, xi: float) -> float:
    """Smooth sensitivity of the median at smoothing rate ``xi``.

    The target is ``max_k exp(-k xi) max_t (x_{m+t} - x_{m+t-k-1})`` with ``x_i = lo``
    for ``i < 1`` and ``x_i = hi`` for ``i > n``. Writing ``a = m+t-k-1`` and
    ``b = m+t`` turns it into a maximum of ``F(a, b) = exp(-(b-a-1) xi) (x_b - x_a)``
    over ``0 <= a <= m <= b <= n+1``. ``F`` satisfies
    ``F(a,b) F(a',b') >= F(a,b') F(a',b)`` for ``a < a'``, ``b < b'`` (the exponentials
    cancel and ``(q-p)(q'-p') - (q'-p)(q-p') = (q'-q)(p'-p) >= 0``), so row maxima have
    monotone column positions and a divide-and-conquer search finds every row maximum
    in ``O((rows + cols) log rows)``. Rows and columns farther than ``K`` from ``m``
    are dropped first, where ``exp(-K xi) (hi - lo)`` falls below a cheap lower bound.
    """
    n = c.n
    if n == 0:
        return float(c.spread)
    x = c.padded()
    m = c.median_index

    # lower bound from symmetric windows around m
    j = np.arange(0, min(m, n + 1 - m) + 1)
    lower = float(np.max(np.exp(-xi * (2 * j - 1)) * (x[m + j] - x[m - j])))
    if lower > 0 and xi > 0:
        reach = int(math.floor(math.log(c.spread / lower) / xi)) + 1
    else:
        reach = n
    a0, a1 = max(0, m - reach - 1), m
    b0, b1 = m, min(n + 1, m + reach + 1)

    best = lower
    seg = np.array([[a0, a1, b0, b1]], dtype=np.int64)
    while seg.size:
        r_lo, r_hi, c_lo, c_hi = seg.T
        mid = (r_lo + r_hi) // 2
        lens = c_hi - c_lo + 1
        offsets = np.concatenate(([0], np.cumsum(lens)[:-1]))
        owner = np.repeat(np.arange(len(seg)), lens)
        cols = c_lo[owner] + (np.arange(lens.sum()) - offsets[owner])
        rows = mid[owner]
        vals = np.exp(-xi * (cols - rows - 1)) * (x[cols] - x[rows])
        seg_max = np.maximum.reduceat(vals, offsets)
        best = max(best, float(seg_max.max()))
        hit = np.flatnonzero(vals == seg_max[owner])
        first = hit[np.unique(owner[hit], return_index=True)[1]]
        arg = cols[first]
        left = np.stack([r_lo, mid - 1, c_lo, arg], axis=1)
        right = np.stack([mid + 1, r_hi, arg, c_hi], axis=1)
        seg = np.concatenate([left[left[:, 0] <= left[:, 1]], right[right[:, 0] <= right[:, 1]]])
    return best


def ss_median(src: RandomSource, c: ValueSet, eps: float, delta: float = DEFAULT_DELTA) -> float:
    """Smooth-sensitivity median, ``x_m + (2 sigma_s / eps) Lap(1)``; (eps, delta)-DP."""
    if not 0 < eps < 1:
        raise ValueError(f"smooth sensitivity needs 0 < eps < 1, got {eps}")
    if not 0 < delta < 1:
        raise ValueError(f"smooth sensitivity needs 0 < delta < 1, got {delta}")
    if c.n == 0:
        return em_median(src, c, eps)
    if src.noiseless:
        return c.median
    sigma = smooth_sensitivity(c, smooth_xi(eps, delta))
    return _clamp(c.median + 2.0 * sigma / eps * float(standard_laplace(src)), c.lo, c.hi)


def cell_median(noisy_counts, boundaries) -> float:
    """Median read off privatised cell counts.

    Returns the coordinate where the running sum of ``noisy_counts`` first reaches half
    of their total, interpolating linearly inside the crossing cell. ``boundaries`` has
    one more entry than ``noisy_counts``. With a non-positive total the range midpoint
    is returned.
    """
    counts = np.asarray(noisy_counts, dtype=float)
    edges = np.asarray(boundaries, dtype=float)
    if counts.ndim != 1 or edges.shape != (counts.size + 1,):
        raise ValueError("need len(boundaries) == len(noisy_counts) + 1")
    total = counts.sum()
    if counts.size == 0 or not total > 0:
        return float(0.5 * (edges[0] + edges[-1]))
    half = 0.5 * total
    running = np.cumsum(counts)
    j = int(np.argmax(running >= half))
    before = running[j] - counts[j]
    frac = (half - before) / counts[j]
    return float(edges[j] + frac * (edges[j + 1] - edges[j]))


def grid_overlap(edges, lo: float, hi: float):
    """Cells of a grid (given by sorted ``edges``) that meet ``[lo, hi]``.

    Returns ``(i0, i1, weights, bounds)``: cells ``i0 .. i1-1`` meet the range, each
    weighted by the fraction of its length inside it, and ``bounds`` are their edges
    clipped to the range. Use with :func:`cell_median` on ``weights * counts[i0:i1]``.
    """
    edges = np.asarray(edges, dtype=float)
    i0 = max(0, int(np.searchsorted(edges, lo, side="right")) - 1)
    i1 = min(len(edges) - 1, int(np.searchsorted(edges, hi, side="left")))
    i1 = max(i1, i0 + 1)
    e = edges[i0 : i1 + 1]
    cover = np.clip(np.minimum(e[1:], hi) - np.maximum(e[:-1], lo), 0.0, None)
    return i0, i1, cover / np.diff(e), np.clip(e, lo, hi)


def nm_median(src: RandomSource, c: ValueSet, eps: float) -> float:
    """Noisy mean as a median surrogate.

    Half the budget goes to the sum of ``x - lo`` (sensitivity ``hi - lo``) and half to
    the count (sensitivity 1); the output is ``lo + noisy_sum / max(1, noisy_count)``.
    """
    if not eps > 0:
        raise ValueError(f"epsilon must be > 0, got {eps}")
    half = eps / 2.0
    shifted_sum = float(np.sum(c.values - c.lo)) + laplace_sample(src, LaplaceParams(c.spread, half))
    count = c.n + laplace_sample(src, LaplaceParams(1.0, half))
    if src.noiseless and c.n == 0:
        return 0.5 * (c.lo + c.hi)
    return _clamp(c.lo + shifted_sum / max(1.0, count), c.lo, c.hi)


def laplace_median(src: RandomSource, c: ValueSet, eps: float) -> float:
    """Exact median plus ``Lap((hi - lo)/eps)``.

    Kept only as a negative baseline: the noise is on the scale of the whole range and
    the output usually lands at a clamp boundary.
    """
    if c.n == 0:
        return em_median(src, c, eps)
    return _clamp(c.median + laplace_sample(src, LaplaceParams(c.spread, eps)), c.lo, c.hi)


def sampled_cost(p: float, eps_inner: float) -> float:
    """Privacy cost of running an ``eps_inner``-DP mechanism on a Bernoulli(p) sample."""
    if not 0 < p <= 1:
        raise ValueError(f"sample rate must lie in (0, 1], got {p}")
    if p == 1:
        return eps_inner
    return 2.0 * p * math.exp(eps_inner)


def inner_epsilon(p: float, budget: float) -> float:
    """Largest inner epsilon whose sampled cost stays within ``budget``."""
    if p == 1:
        return budget
    if not budget > 2.0 * p:
        raise ValueError(
            f"sampling at rate {p} costs at least {2 * p} > budget {budget}; lower the sample rate"
        )
    return math.log(budget / (2.0 * p))


def subsample(src: RandomSource, c: ValueSet, p: float) -> ValueSet:
    if p == 1:
        return c
    keep = src.generator.random(c.n) < p
    return ValueSet(c.values[keep], c.lo, c.hi)


def sampled(mechanism, p: float, src: RandomSource, c: ValueSet, eps_inner: float, **kwargs) -> float:
    """Run ``mechanism(src, sample, eps_inner, **kwargs)`` on a Bernoulli(p) subsample of ``c``.

    The accounted cost is :func:`sampled_cost`\\ ``(p, eps_inner)``.
    """
    sampled_cost(p, eps_inner)  # validates p
    return mechanism(src, subsample(src, c, p), eps_inner, **kwargs)


@dataclass(frozen=True)
class MedianMechanism:
    """Configuration of the split-point mechanism used by data-dependent trees.

    ``kind`` is one of ``em``, ``ss``, ``cell``, ``nm`` or ``laplace`` (the last is a
    deliberately weak baseline). ``sample_rate < 1`` wraps ``em``/``ss`` in Bernoulli
    sampling.
    """

    kind: str = "em"
    delta: float = DEFAULT_DELTA
    cell_length: float = DEFAULT_CELL_LENGTH
    sample_rate: float = 1.0

    def __post_init__(self):
        if self.kind not in MECHANISMS:
            raise ValueError(f"unknown median mechanism {self.kind!r}; expected one of {MECHANISMS}")
        if self.kind == "ss" and not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if not self.cell_length > 0:
            raise ValueError(f"cell length must be > 0, got {self.cell_length}")
        if not 0 < self.sample_rate <= 1:
            raise ValueError(f"sample rate must lie in (0, 1], got {self.sample_rate}")
        if self.sample_rate < 1 and self.kind not in ("em", "ss"):
            raise ValueError("sampling applies only to the em and ss mechanisms")

    @property
    def approximate(self) -> bool:
        """True when the guarantee is (eps, delta) rather than pure eps."""
        return self.kind == "ss"

    def select(self, src: RandomSource, c: ValueSet, budget: float) -> float:
        """A private median of ``c`` costing ``budget``. Not valid for ``cell``."""
        fn = {"em": em_median, "ss": ss_median, "nm": nm_median, "laplace": laplace_median}.get(self.kind)
        if fn is None:
            raise ValueError("the cell mechanism works from a shared noisy grid; use cell_median")
        extra = {"delta": self.delta} if self.kind == "ss" else {}
        if self.sample_rate < 1:
            eps_inner = inner_epsilon(self.sample_rate, budget)
            if src.noiseless:
                return fn(src, c, eps_inner, **extra)
            return sampled(fn, self.sample_rate, src, c, eps_inner, **extra)
        return fn(src, c, budget, **extra)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "delta": self.delta,
            "cell_length": self.cell_length,
            "sample_rate": self.sample_rate,
        }
