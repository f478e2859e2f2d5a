"""Least-squares consistency post-processing of noisy tree counts.

Given noisy counts ``Y`` released with per-level budgets ``eps_i`` on a complete tree
of fanout ``f``, the estimator ``beta`` minimises ``sum_v eps_v^2 (Y_v - beta_v)^2``
subject to every parent equalling the sum of its children. It is computed in three
vectorised passes over the levels:

1. top-down: ``alpha_u = alpha_parent + eps_u^2 Y_u``; at leaves ``Z = alpha``;
2. bottom-up: ``Z_v`` is the sum of the children's ``Z``;
3. top-down: ``beta_root = Z_root / E_h`` and
   ``beta_v = (Z_v - f^i F_v) / E_i`` with ``F_v = F_parent + eps_{i+1}^2 beta_parent``,

where ``E_l = sum_{j<=l} f^j eps_j^2``. Levels without released counts enter with
weight zero. When ``E_i = 0`` (no observations at or below level ``i``) every subtree
of that level is unconstrained apart from its total, and the minimum-norm solution
spreads the parent evenly: ``beta_v = beta_parent / f``.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .tree import PsdTree, TreeStateError


def _level_weights(eps_by_level: Sequence[float]) -> np.ndarray:
    w = np.asarray(eps_by_level, dtype=float) ** 2
    if np.any(~np.isfinite(w)) or np.any(w < 0):
        raise ValueError("per-level epsilons must be finite and non-negative")
    if not np.any(w > 0):
        raise ValueError("no level carries a released count; nothing to post-process")
    return w


def ols_levels(noisy_by_level: Sequence, eps_by_level: Sequence[float], fanout: int) -> list[np.ndarray]:
    """OLS estimates per level for a complete tree stored level by level.

    ``noisy_by_level[i]`` holds the ``fanout^(h-i)`` noisy counts of level ``i`` (leaves
    first) in child-major order, or ``None`` when ``eps_by_level[i] == 0``.
    """
    f = int(fanout)
    if f < 2:
        raise ValueError(f"fanout must be >= 2, got {fanout}")
    h = len(noisy_by_level) - 1
    if len(eps_by_level) != h + 1:
        raise ValueError("need one epsilon per level")
    w = _level_weights(eps_by_level)
    y = []
    for i, arr in enumerate(noisy_by_level):
        size = f ** (h - i)
        if w[i] == 0:
            y.append(np.zeros(size))
            continue
        if arr is None:
            raise ValueError(f"level {i} has budget {eps_by_level[i]} but no counts")
        arr = np.asarray(arr, dtype=float)
        if arr.shape != (size,):
            raise ValueError(f"level {i} must hold {size} counts, got shape {arr.shape}")
        y.append(arr)

    E = np.cumsum(w * float(f) ** np.arange(h + 1))

    alpha = w[h] * y[h]
    for i in range(h - 1, -1, -1):
        alpha = np.repeat(alpha, f) + w[i] * y[i]
    Z = [None] * (h + 1)
    Z[0] = alpha
    for i in range(1, h + 1):
        Z[i] = Z[i - 1].reshape(-1, f).sum(axis=1)

    beta = [None] * (h + 1)
    beta[h] = Z[h] / E[h]
    F = np.zeros(1)
    for i in range(h - 1, -1, -1):
        F = np.repeat(F + w[i + 1] * beta[i + 1], f)
        if E[i] > 0:
            beta[i] = (Z[i] - float(f) ** i * F) / E[i]
        else:
            beta[i] = np.repeat(beta[i + 1] / f, f)
    return beta


def ols(tree: PsdTree) -> PsdTree:
    """A copy of ``tree`` with post-processed counts ``beta`` on every node."""
    if not tree.is_complete:
        raise TreeStateError("post-processing needs a complete tree; prune only afterwards")
    beta = ols_levels(tree.noisy, tree.plan.count_eps, tree.fanout)
    return tree.with_beta(beta)


def ols_variance_root(f: int, eps_1: float, eps_0: float) -> float:
    """Variance of the root estimate of a two-level tree of fanout ``f``.

    Equals ``2f / (f eps_1^2 + eps_0^2)``, against ``2 / eps_1^2`` for the raw root count.
    """
    if not (eps_1 >= 0 and eps_0 >= 0 and eps_1 + eps_0 > 0):
        raise ValueError("epsilons must be non-negative and not both zero")
    return 2.0 * f / (f * eps_1**2 + eps_0**2)
