"""Experiment execution and result files.

Result CSV layout (comma-separated, dot decimal, floats in shortest round-trip form)::

    trial,query_id,shape,x_lo,y_lo,x_hi,y_hi,true,estimate,rel_error
    0,0,1x1,...
    ...
    # aggregate,trial,shape,median_rel_error
    # aggregate,0,1x1,0.0731...
    # aggregate,all,1x1,...
    # aggregate,all,all,...
    # audit,epsilon,<path sum>,declared,<spec epsilon>,delta,<total delta>

Timings never enter the CSV; they go to a separate JSON summary.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..geometry import Rect
from ..median import MECHANISMS, MedianMechanism
from ..noise import RandomSource
from ..postprocess import ols
from ..query import answer, relative_error
from ..tree import PsdTree, build_tree, prune
from .config import ExperimentSpec
from .data import gen_synthetic, load_points
from .workload import Workload, gen_workload

RESULT_HEADER = ["trial", "query_id", "shape", "x_lo", "y_lo", "x_hi", "y_hi", "true", "estimate", "rel_error"]


def dataset_for(spec: ExperimentSpec) -> np.ndarray:
    if spec.dataset:
        return load_points(spec.dataset, spec.domain)
    return gen_synthetic(spec.synthetic, spec.n, spec.domain, spec.data_seed)


def build_for_spec(spec: ExperimentSpec, points, trial: int = 0) -> PsdTree:
    """Build, post-process and prune one tree as ``spec`` prescribes."""
    src = RandomSource(spec.seed, noiseless=spec.noiseless).child("trial", trial)
    tree = build_tree(spec.kind, points, spec.domain, spec.height, spec.plan(), src,
                      mechanism=spec.mechanism, switch_level=spec.ell, hilbert_order=spec.hilbert_order)
    if spec.counts == "ols" or spec.prune is not None:
        tree = ols(tree)
    if spec.prune is not None:
        tree = prune(tree, spec.prune)
    return tree


@dataclass
class ExperimentReport:
    spec: ExperimentSpec
    workload: Workload
    truths: np.ndarray
    estimates: np.ndarray  # (trials, queries)
    epsilon: float
    delta: float
    timings: dict = field(default_factory=dict)

    @property
    def rel_errors(self) -> np.ndarray:
        denom = np.maximum(1.0, self.truths)
        return np.abs(self.estimates - self.truths) / denom

    def aggregates(self) -> list[tuple[str, str, float]]:
        """``(trial, shape, median relative error)`` rows, per trial and pooled."""
        err = self.rel_errors
        labels = [self.workload.label(k) for k in range(len(self.workload))]
        shapes = list(dict.fromkeys(labels))
        lab = np.array(labels)
        rows = []
        for t in range(err.shape[0]):
            for s in shapes:
                rows.append((str(t), s, float(np.median(err[t, lab == s]))))
        for s in shapes:
            rows.append(("all", s, float(np.median(err[:, lab == s]))))
        rows.append(("all", "all", float(np.median(err))))
        return rows

    def median_rel_error(self, shape: str | None = None) -> float:
        for t, s, v in self.aggregates():
            if t == "all" and s == (shape or "all"):
                return v
        raise KeyError(shape)

    def write_csv(self, fp) -> None:
        w = csv.writer(fp, lineterminator="\n")
        w.writerow(RESULT_HEADER)
        err = self.rel_errors
        for t in range(self.estimates.shape[0]):
            for k, r in enumerate(self.workload.rects):
                w.writerow([t, k, self.workload.label(k), repr(float(r[0])), repr(float(r[2])),
                            repr(float(r[1])), repr(float(r[3])), int(self.truths[k]),
                            repr(float(self.estimates[t, k])), repr(float(err[t, k]))])
        fp.write("# aggregate,trial,shape,median_rel_error\n")
        for t, s, v in self.aggregates():
            fp.write(f"# aggregate,{t},{s},{v!r}\n")
        fp.write(f"# audit,epsilon,{self.epsilon!r},declared,{self.spec.epsilon!r},delta,{self.delta!r}\n")

    def csv_text(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()

    def save(self, path) -> None:
        with open(Path(path), "w", encoding="utf-8", newline="") as fp:
            self.write_csv(fp)

    def summary(self) -> dict:
        return {
            "config": self.spec.to_config(),
            "epsilon": self.epsilon,
            "delta": self.delta,
            "median_rel_error": {f"{t}/{s}": v for t, s, v in self.aggregates()},
            "timings": self.timings,
        }

    def save_summary(self, path) -> None:
        with open(Path(path), "w", encoding="utf-8") as fp:
            json.dump(self.summary(), fp, indent=2, sort_keys=True)
            fp.write("\n")


def run_experiment(spec: ExperimentSpec, points=None, workload: Workload | None = None) -> ExperimentReport:
    """Build ``spec.trials`` trees, answer the workload on each and collect errors.

    Trial ``t`` draws all its noise from ``RandomSource(spec.seed).child("trial", t)``,
    so the (data, build, workload) seeds determine every result.
    """
    timings: dict = {}
    t0 = time.perf_counter()
    pts = dataset_for(spec) if points is None else np.asarray(points, dtype=float).reshape(-1, 2)
    if workload is None:
        workload = gen_workload(spec.shapes, spec.domain, pts, RandomSource(spec.workload_seed),
                                per_shape=spec.queries_per_shape)
    timings["prepare_s"] = time.perf_counter() - t0
    truths = _true_counts(pts, workload.rects)

    estimates = np.empty((spec.trials, len(workload)))
    build_s, query_s = [], []
    eps = delta = 0.0
    for t in range(spec.trials):
        t1 = time.perf_counter()
        tree = build_for_spec(spec, pts, t)
        t2 = time.perf_counter()
        mode = spec.counts
        for k in range(len(workload)):
            estimates[t, k] = answer(tree, workload.query(k), mode).estimate
        query_s.append(time.perf_counter() - t2)
        build_s.append(t2 - t1)
        eps, delta = tree.privacy.epsilon, tree.privacy.delta
    timings["build_s"] = build_s
    timings["query_s"] = query_s
    return ExperimentReport(spec, workload, truths, estimates, eps, delta, timings)


def _true_counts(points: np.ndarray, rects: np.ndarray) -> np.ndarray:
    order = np.argsort(points[:, 0], kind="stable")
    xs, ys = points[order, 0], points[order, 1]
    out = np.empty(len(rects))
    for k, r in enumerate(rects):
        a, b = np.searchsorted(xs, [r[0], r[1]], side="left")
        y = ys[a:b]
        out[k] = np.count_nonzero((r[2] <= y) & (y < r[3]))
    return out


# --------------------------------------------------------------------------- audits


def default_matrix(epsilon: float = 0.5, h: int = 8) -> list[ExperimentSpec]:
    """Every tree kind crossed with the count strategies and the applicable mechanisms."""
    specs = []
    dom = Rect(0.0, 1.0, 0.0, 1.0)
    for strategy in ("uniform", "geometric", "leaf-only"):
        specs.append(ExperimentSpec(dom, "quadtree", h, epsilon, strategy))
        for kind in ("kd", "hybrid", "hilbert"):
            for mech in MECHANISMS:
                if kind == "hilbert" and mech == "cell":
                    continue
                specs.append(ExperimentSpec(dom, kind, h, epsilon, strategy, mechanism=MedianMechanism(mech)))
    return specs


def audit_spec(spec: ExperimentSpec) -> dict:
    """Privacy accounting of a configuration without touching any data."""
    from ..budget import audit_path_sum

    plan = spec.plan()
    total = audit_path_sum(plan)
    data_dependent = spec.ell
    delta = 2 * data_dependent * spec.mechanism.delta if spec.mechanism.approximate and data_dependent else 0.0
    return {
        "kind": spec.kind,
        "count_strategy": spec.count_strategy,
        "mechanism": spec.mechanism.kind if data_dependent else None,
        "epsilon": total,
        "declared": spec.epsilon,
        "delta": delta,
        "count_eps": list(plan.count_eps),
        "median_eps": list(plan.median_eps),
    }


# --------------------------------------------------------------------------- medians

MEDIAN_QUALITY_MECHANISMS = ("em", "ss", "nm", "cell")


def median_quality(mechanisms=MEDIAN_QUALITY_MECHANISMS, log2_n: int = 20, log2_range: int = 26,
                   depth: int = 6, eps: float = 0.01, delta: float = 1e-4, cell_length: float = 2.0**10,
                   trials: int = 50, seed: int = 0, sample_rate: float = 1.0) -> dict[str, np.ndarray]:
    """Mean normalised rank error of private medians at each depth of a 1-D binary tree.

    Each trial draws ``2^log2_n`` uniform values on ``[0, 2^log2_range]``. For every
    mechanism a binary tree is grown by splitting each node at its private median with
    budget ``eps``, down to ``depth``; the error at a depth averages all non-empty nodes
    of that depth. The cell mechanism reads medians off one histogram with cell width
    ``cell_length`` released with budget ``eps``.
    """
    from .. import median as med

    hi = float(2**log2_range)
    totals = {m: np.zeros(depth + 1) for m in mechanisms}
    for t in range(trials):
        root = RandomSource(seed).child("median-quality", t)
        values = np.sort(root.child("data").uniform(0.0, hi, 2**log2_n))
        for m in mechanisms:
            src = root.child("mechanism", m)
            if m == "cell":
                edges = np.append(np.arange(0.0, hi, cell_length), hi)
                true = np.diff(np.searchsorted(values, edges, side="left"))
                true[-1] += np.count_nonzero(values == hi)
                from ..noise import noisy_count

                hist = noisy_count(src.child("grid"), true, eps)
            else:
                mech = med.MedianMechanism(m, delta=delta, sample_rate=sample_rate if m in ("em", "ss") else 1.0)
            nodes = [(values, 0.0, hi)]
            for d in range(depth + 1):
                errs, nxt = [], []
                for j, (v, lo, up) in enumerate(nodes):
                    c = med.ValueSet(v, lo, up)
                    if m == "cell":
                        i0, i1, w, b = med.grid_overlap(edges, lo, up)
                        s = med.cell_median(w * hist[i0:i1], b)
                    else:
                        s = mech.select(src.child(d, j), c, eps)
                    if c.n:
                        errs.append(med.normalized_rank_error(c, s))
                    cut = np.searchsorted(v, s, side="right")
                    # a split on the boundary leaves one child with an empty range; drop it
                    nxt += [ch for ch in ((v[:cut], lo, s), (v[cut:], s, up)) if ch[1] < ch[2]]
                totals[m][d] += np.mean(errs) if errs else 0.0
                nodes = nxt
    return {m: totals[m] / trials for m in mechanisms}
