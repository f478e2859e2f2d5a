"""Privacy-budget allocation across tree levels.

Levels are numbered bottom-up: leaves are level 0 and the root is level ``h``. A plan
holds one count budget per level and one median budget per internal level; a point's
privacy loss is the sum of every entry, since each root-to-leaf path crosses every level
exactly once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

CUBE_ROOT_2 = 2.0 ** (1.0 / 3.0)
DEFAULT_COUNT_SHARE = 0.7
AUDIT_RTOL = 1e-9

COUNT_STRATEGIES = ("uniform", "geometric", "leaf-only", "custom")
MEDIAN_STRATEGIES = ("uniform-internal", "hybrid-top-levels", "none")


class BudgetAuditError(RuntimeError):
    """The entries of a plan do not add up to its declared total."""


def uniform_count_budget(h: int, eps_count: float) -> np.ndarray:
    if h < 0:
        raise ValueError(f"height must be >= 0, got {h}")
    if not eps_count > 0:
        raise ValueError(f"count budget must be > 0, got {eps_count}")
    return np.full(h + 1, eps_count / (h + 1))


def geometric_count_budget(h: int, eps_count: float) -> np.ndarray:
    """Per-level budgets minimising the worst-case quadtree query variance.

    Entry ``i`` is ``2^((h-i)/3) * eps * (2^(1/3) - 1) / (2^((h+1)/3) - 1)``, so the
    budget grows by a factor ``2^(1/3)`` at each step from the root towards the leaves.
    """
    if h < 0:
        raise ValueError(f"height must be >= 0, got {h}")
    if not eps_count > 0:
        raise ValueError(f"count budget must be > 0, got {eps_count}")
    levels = np.arange(h + 1)
    scale = eps_count * (CUBE_ROOT_2 - 1.0) / (2.0 ** ((h + 1) / 3.0) - 1.0)
    return scale * 2.0 ** ((h - levels) / 3.0)


def worst_case_error(strategy: str, h: int) -> float:
    """The ε-free worst-case error curves for uniform and geometric budgets.

    Both assume a query touching the maximal ``8 * 2^(h-i)`` nodes at every level; the
    actual bound is ``16 / eps^2`` times this value.
    """
    if h < 0:
        raise ValueError(f"height must be >= 0, got {h}")
    if strategy == "uniform":
        return float((h + 1) ** 2 * (2 ** (h + 1) - 1))
    if strategy == "geometric":
        return float((2.0 ** ((h + 1) / 3.0) - 1.0) ** 3 / (CUBE_ROOT_2 - 1.0) ** 3)
    raise ValueError(f"unknown strategy {strategy!r}; expected 'uniform' or 'geometric'")


def max_contained_nodes(tree_kind: str, h: int, i: int) -> int:
    """Upper bound on the number of level-``i`` nodes maximally contained in any query.

    ``tree_kind`` is ``"quadtree"`` or ``"kdtree"`` (a binary kd-tree). Flattened
    kd-trees have fanout 4 and obey the quadtree bound. The tighter
    ``min(8 * 2^(h-i), 4^(h-i))`` is valid for quadtrees but not used here.
    """
    if not 0 <= i <= h:
        raise ValueError(f"need 0 <= i <= h, got i={i}, h={h}")
    if tree_kind == "quadtree":
        return 8 * 2 ** (h - i)
    if tree_kind == "kdtree":
        return 8 * 2 ** ((h - i + 1) // 2)
    raise ValueError(f"unknown tree kind {tree_kind!r}")


def split_budget(epsilon: float, count_share: float) -> tuple[float, float]:
    if not 0.0 <= count_share <= 1.0:
        raise ValueError(f"count_share must lie in [0, 1], got {count_share}")
    eps_count = count_share * epsilon
    return eps_count, epsilon - eps_count


@dataclass(frozen=True)
class BudgetPlan:
    """Level-homogeneous budget: ``count_eps[i]`` and ``median_eps[i]`` for level ``i``.

    ``median_eps[0]`` is always 0 (leaves are never split). A zero count entry means
    no count is released at that level.
    """

    height: int
    count_eps: tuple[float, ...]
    median_eps: tuple[float, ...]
    epsilon: float
    labels: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        n = self.height + 1
        if len(self.count_eps) != n or len(self.median_eps) != n:
            raise ValueError(f"plan vectors must have length h+1={n}")
        if any(not e >= 0 for e in self.count_eps + self.median_eps):
            raise ValueError("budget entries must be non-negative")
        if self.median_eps[0] != 0:
            raise ValueError("leaves (level 0) carry no median budget")
        if not self.epsilon > 0:
            raise ValueError(f"total epsilon must be > 0, got {self.epsilon}")

    @property
    def eps_count(self) -> float:
        return math.fsum(self.count_eps)

    @property
    def eps_median(self) -> float:
        return math.fsum(self.median_eps)

    def released_levels(self) -> list[int]:
        return [i for i, e in enumerate(self.count_eps) if e > 0]

    def with_entry(self, kind: str, level: int, value: float) -> BudgetPlan:
        """A copy with one entry replaced; the declared total is kept as is."""
        vec = list(self.count_eps if kind == "count" else self.median_eps)
        vec[level] = value
        if kind == "count":
            return BudgetPlan(self.height, tuple(vec), self.median_eps, self.epsilon, self.labels)
        return BudgetPlan(self.height, self.count_eps, tuple(vec), self.epsilon, self.labels)

    def to_dict(self) -> dict:
        return {
            "height": self.height,
            "epsilon": self.epsilon,
            "count_eps": list(self.count_eps),
            "median_eps": list(self.median_eps),
            "labels": dict(self.labels),
        }

    @classmethod
    def from_dict(cls, d: dict) -> BudgetPlan:
        return cls(
            int(d["height"]),
            tuple(float(x) for x in d["count_eps"]),
            tuple(float(x) for x in d["median_eps"]),
            float(d["epsilon"]),
            dict(d.get("labels", {})),
        )


def audit_path_sum(plan: BudgetPlan, rtol: float = AUDIT_RTOL) -> float:
    """Total privacy loss along any root-to-leaf path; raises if it differs from ``plan.epsilon``."""
    total = math.fsum(plan.count_eps) + math.fsum(plan.median_eps)
    if abs(total - plan.epsilon) > rtol * max(abs(plan.epsilon), abs(total)):
        raise BudgetAuditError(
            f"path sum {total!r} does not match declared epsilon {plan.epsilon!r}"
        )
    return total


def count_budget(
    strategy: str,
    h: int,
    eps_count: float,
    skip_levels: Iterable[int] = (),
    custom: Sequence[float] | None = None,
) -> np.ndarray:
    """Per-level count budgets for a named strategy.

    ``skip_levels`` zeroes the listed levels and rescales the rest so the total is
    preserved. ``custom`` is a vector of non-negative weights (length ``h+1``, leaves
    first) normalised to ``eps_count``.
    """
    if strategy == "uniform":
        vec = uniform_count_budget(h, eps_count)
    elif strategy == "geometric":
        vec = geometric_count_budget(h, eps_count)
    elif strategy == "leaf-only":
        vec = np.zeros(h + 1)
        vec[0] = eps_count
    elif strategy == "custom":
        if custom is None or len(custom) != h + 1:
            raise ValueError(f"custom budget needs h+1={h + 1} weights")
        w = np.asarray(custom, dtype=float)
        if np.any(w < 0) or not w.sum() > 0:
            raise ValueError("custom weights must be non-negative with a positive sum")
        vec = eps_count * w / w.sum()
    else:
        raise ValueError(f"unknown count strategy {strategy!r}; expected one of {COUNT_STRATEGIES}")

    skip = sorted(set(int(s) for s in skip_levels))
    if skip:
        if any(not 0 <= s <= h for s in skip):
            raise ValueError(f"skip levels must lie in [0, {h}], got {skip}")
        vec = vec.copy()
        vec[skip] = 0.0
        if not vec.sum() > 0:
            raise ValueError("skipping these levels leaves no count budget")
        vec *= eps_count / vec.sum()
    return vec


def median_budget(strategy: str, h: int, eps_median: float, switch_level: int | None = None) -> np.ndarray:
    """Median budgets per level (index 0 is always 0).

    ``uniform-internal`` spreads ``eps_median`` evenly over the ``h`` internal levels;
    ``hybrid-top-levels`` spreads it over the top ``switch_level`` levels only.
    """
    vec = np.zeros(h + 1)
    if eps_median == 0 or strategy == "none":
        if eps_median != 0:
            raise ValueError("median strategy 'none' requires a zero median budget")
        return vec
    if strategy == "uniform-internal":
        if h < 1:
            raise ValueError("a tree of height 0 has no internal levels for median budget")
        vec[1:] = eps_median / h
    elif strategy == "hybrid-top-levels":
        if switch_level is None or not 1 <= switch_level <= h:
            raise ValueError(f"switch level must lie in [1, {h}], got {switch_level}")
        vec[h - switch_level + 1 :] = eps_median / switch_level
    else:
        raise ValueError(f"unknown median strategy {strategy!r}; expected one of {MEDIAN_STRATEGIES}")
    return vec


def make_plan(
    epsilon: float,
    h: int,
    count_strategy: str = "geometric",
    count_share: float = DEFAULT_COUNT_SHARE,
    median_strategy: str = "uniform-internal",
    switch_level: int | None = None,
    skip_levels: Iterable[int] = (),
    custom: Sequence[float] | None = None,
) -> BudgetPlan:
    """Assemble a full plan: split ``epsilon`` into count and median shares, then allocate each."""
    if not epsilon > 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    eps_count, eps_median = split_budget(epsilon, count_share)
    if eps_count <= 0:
        raise ValueError("count share must be positive: a tree without counts answers nothing")
    counts = count_budget(count_strategy, h, eps_count, skip_levels, custom)
    medians = median_budget(median_strategy, h, eps_median, switch_level)
    labels = {
        "count_strategy": count_strategy,
        "median_strategy": median_strategy,
        "count_share": count_share,
    }
    if switch_level is not None:
        labels["switch_level"] = switch_level
    if skip_levels:
        labels["skip_levels"] = sorted(set(int(s) for s in skip_levels))
    return BudgetPlan(h, tuple(counts.tolist()), tuple(medians.tolist()), float(epsilon), labels)
