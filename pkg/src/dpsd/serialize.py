"""Text serialisation of :class:`~dpsd.tree.PsdTree`.

Format (UTF-8, one record per line)::

    dpsd-tree 1
    #meta {"kind": ..., "height": ..., "domain": [...], "plan": {...}, ...}
    <level> <index> <x_lo> <x_hi> <y_lo> <y_hi> <Y> <beta> <split> <range> <leaf>

Node records follow in depth-first pre-order over the nodes that survive pruning.
Floats are written with ``repr`` (shortest round-trip form), so finite doubles load
back bit for bit. Absent values are ``-``. ``<split>`` is three comma-joined values
(x-split, y-split of the lower half, y-split of the upper half; for Hilbert trees the
middle, lower and upper index cuts) and ``<range>`` is the ``lo,hi`` Hilbert index range.
``<leaf>`` is 1 when the node has no children. A NaN region marks a Hilbert node with
an empty index range.
"""

from __future__ import annotations

import io
import json
from pathlib import Path

import numpy as np

from .budget import BudgetPlan
from .geometry import Rect
from .median import MedianMechanism
from .tree import FANOUT, PrivacyReport, PsdTree

MAGIC = "dpsd-tree 1"
ABSENT = "-"


def _num(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _opt(arr, level: int, j: int) -> str:
    if arr is None or arr[level] is None:
        return ABSENT
    return _num(arr[level][j])


def _meta(tree: PsdTree) -> dict:
    return {
        "kind": tree.kind,
        "height": tree.height,
        "domain": list(tree.domain.as_tuple()),
        "plan": tree.plan.to_dict(),
        "mechanism": None if tree.mechanism is None else tree.mechanism.to_dict(),
        "switch_level": tree.switch_level,
        "hilbert_order": tree.hilbert_order,
        "privacy": {"epsilon": tree.privacy.epsilon, "delta": tree.privacy.delta},
        "has_beta": tree.beta is not None,
        "pruned": tree.leaf_mask is not None,
    }


def dumps(tree: PsdTree) -> str:
    out = io.StringIO()
    write(tree, out)
    return out.getvalue()


def write(tree: PsdTree, fp) -> None:
    fp.write(MAGIC + "\n")
    fp.write("#meta " + json.dumps(_meta(tree), sort_keys=True) + "\n")
    stack = [(tree.height, 0)]
    while stack:
        level, j = stack.pop()
        leaf = level == 0 or bool(tree.is_leaf_at(level)[j])
        split = ABSENT
        if level > 0 and tree.splits is not None and tree.splits[level] is not None:
            split = ",".join(_num(v) for v in tree.splits[level][j])
        rng = ABSENT
        if tree.ranges is not None:
            rng = ",".join(_num(v) for v in tree.ranges[level][j])
        fields = [str(level), str(j)]
        fields += [_num(v) for v in tree.rects[level][j]]
        fields += [_opt(tree.noisy, level, j), _opt(tree.beta, level, j), split, rng, "1" if leaf else "0"]
        fp.write(" ".join(fields) + "\n")
        if not leaf:
            stack.extend((level - 1, c) for c in range(FANOUT * j + FANOUT - 1, FANOUT * j - 1, -1))


def dump(tree: PsdTree, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fp:
        write(tree, fp)


class TreeFormatError(ValueError):
    pass


def loads(text: str) -> PsdTree:
    return read(io.StringIO(text))


def load(path) -> PsdTree:
    with open(Path(path), encoding="utf-8") as fp:
        return read(fp)


def _parse_num(tok: str, integral: bool):
    return int(tok) if integral else float(tok)


def read(fp) -> PsdTree:
    header = fp.readline().rstrip("\n")
    if header != MAGIC:
        raise TreeFormatError(f"line 1: expected {MAGIC!r}, got {header!r}")
    meta_line = fp.readline()
    if not meta_line.startswith("#meta "):
        raise TreeFormatError("line 2: missing #meta record")
    meta = json.loads(meta_line[len("#meta "):])
    h = int(meta["height"])
    hilbert = meta["kind"] == "hilbert"
    sizes = [FANOUT ** (h - i) for i in range(h + 1)]

    rects = [np.full((n, 4), np.nan) for n in sizes]
    noisy = [np.full(n, np.nan) for n in sizes]
    beta = [np.full(n, np.nan) for n in sizes]
    split_dtype = np.int64 if hilbert else float
    splits = [None] + [np.zeros((n, 3), dtype=split_dtype) for n in sizes[1:]]
    ranges = [np.zeros((n, 2), dtype=np.int64) for n in sizes] if hilbert else None
    leaf_mask = [None] + [np.zeros(n, dtype=bool) for n in sizes[1:]]
    has_noisy = [False] * (h + 1)
    has_split = [False] * (h + 1)

    for lineno, line in enumerate(fp, start=3):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 11:
            raise TreeFormatError(f"line {lineno}: expected 11 fields, got {len(parts)}")
        try:
            level, j = int(parts[0]), int(parts[1])
            rects[level][j] = [float(t) for t in parts[2:6]]
            if parts[6] != ABSENT:
                noisy[level][j] = float(parts[6])
                has_noisy[level] = True
            if parts[7] != ABSENT:
                beta[level][j] = float(parts[7])
            if parts[8] != ABSENT:
                splits[level][j] = [_parse_num(t, hilbert) for t in parts[8].split(",")]
                has_split[level] = True
            if parts[9] != ABSENT:
                ranges[level][j] = [int(t) for t in parts[9].split(",")]
            if level > 0:
                leaf_mask[level][j] = parts[10] == "1"
        except (ValueError, IndexError, TypeError) as exc:
            raise TreeFormatError(f"line {lineno}: {exc}") from None

    mech = meta.get("mechanism")
    priv = meta["privacy"]
    return PsdTree(
        kind=meta["kind"],
        height=h,
        domain=Rect(*meta["domain"]),
        plan=BudgetPlan.from_dict(meta["plan"]),
        rects=rects,
        noisy=[a if has_noisy[i] else None for i, a in enumerate(noisy)],
        beta=beta if meta["has_beta"] else None,
        splits=[s if has_split[i] else None for i, s in enumerate(splits)],
        ranges=ranges,
        leaf_mask=leaf_mask if meta["pruned"] else None,
        mechanism=None if mech is None else MedianMechanism(**mech),
        switch_level=int(meta["switch_level"]),
        hilbert_order=meta["hilbert_order"],
        privacy=PrivacyReport(float(priv["epsilon"]), float(priv["delta"])),
    )
