"""Command-line interface: ``dpsd {synth,build,query,bench,audit}``.

Every configuration key (see :data:`~dpsd.harness.config.DEFAULTS`) can be given in a
JSON file with ``--config`` and overridden by a flag of the same name, spelled with
either underscores or dashes. Flag values are parsed as JSON when possible, so
``--prune null``, ``--shapes '[[1,1]]'`` and ``--domain=-124.82,-103,31.33,49`` work.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .. import serialize
from ..geometry import Rect
from ..noise import RandomSource
from ..query import answer
from . import experiment as ex
from .config import DEFAULTS, ConfigError, ExperimentSpec, load_config_file
from .data import data_bounding_domain, gen_synthetic, load_points, save_points
from .workload import RejectionCapError, Workload, gen_workload

log = logging.getLogger("dpsd")


def _parse_value(key: str, text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    if key == "domain":
        return [float(t) for t in text.split(",")]
    return text


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON configuration file")
    g = p.add_argument_group("configuration keys")
    for key in DEFAULTS:
        names = [f"--{key}"]
        if "_" in key:
            names.append(f"--{key.replace('_', '-')}")
        g.add_argument(*names, dest=f"cfg_{key}", metavar="VALUE", default=None)


def _config_from_args(args) -> dict:
    cfg = load_config_file(args.config) if args.config else {}
    for key in DEFAULTS:
        v = getattr(args, f"cfg_{key}", None)
        if v is not None:
            cfg[key] = _parse_value(key, v)
    return cfg


def _spec_and_points(args) -> tuple[ExperimentSpec, np.ndarray]:
    cfg = _config_from_args(args)
    if getattr(args, "unsafe_domain_from_data", False):
        path = cfg.get("dataset")
        if not path:
            raise ConfigError("--unsafe-domain-from-data needs a dataset file")
        pts = load_points(path)
        dom = data_bounding_domain(pts)
        log.warning("PRIVACY WARNING: domain %s derived from the data; the release is no longer "
                    "differentially private with respect to the data's extent", dom.as_tuple())
        cfg["domain"] = list(dom.as_tuple())
        return ExperimentSpec.from_config(cfg), pts
    spec = ExperimentSpec.from_config(cfg)
    return spec, ex.dataset_for(spec)


def cmd_synth(args) -> int:
    dom = Rect(*_parse_value("domain", args.domain))
    pts = gen_synthetic(args.kind, args.n, dom, args.seed)
    save_points(args.out, pts)
    log.info("wrote %d points to %s", len(pts), args.out)
    return 0


def cmd_build(args) -> int:
    spec, pts = _spec_and_points(args)
    tree = ex.build_for_spec(spec, pts, args.trial)
    serialize.dump(tree, args.out)
    print(json.dumps({"out": args.out, "nodes": tree.num_nodes(), "epsilon": tree.privacy.epsilon,
                      "delta": tree.privacy.delta}))
    return 0


def cmd_query(args) -> int:
    tree = serialize.load(args.tree)
    if args.rect:
        queries = [Rect.from_string(r) for r in args.rect]
    elif args.workload:
        wl = Workload.load(args.workload)
        queries = [wl.query(k) for k in range(len(wl))]
    elif args.dataset:
        pts = load_points(args.dataset, tree.domain)
        shapes = json.loads(args.shapes)
        wl = gen_workload(shapes, tree.domain, pts, RandomSource(args.workload_seed), per_shape=args.per_shape)
        queries = [wl.query(k) for k in range(len(wl))]
    else:
        raise ConfigError("give --rect, --workload or --dataset")
    out = open(args.out, "w", encoding="utf-8", newline="\n") if args.out else sys.stdout
    try:
        out.write("query_id,x_lo,y_lo,x_hi,y_hi,estimate\n")
        for k, q in enumerate(queries):
            est = answer(tree, q, args.counts).estimate
            out.write(f"{k},{q.x_lo!r},{q.y_lo!r},{q.x_hi!r},{q.y_hi!r},{est!r}\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def cmd_bench(args) -> int:
    spec, pts = _spec_and_points(args)
    report = ex.run_experiment(spec, pts)
    report.save(args.out)
    summary = args.summary or f"{args.out}.summary.json"
    report.save_summary(summary)
    for t, s, v in report.aggregates():
        if t == "all":
            print(f"median relative error [{s}]: {v:.6g}")
    print(f"epsilon {report.epsilon!r}  delta {report.delta!r}")
    return 0


def cmd_audit(args) -> int:
    if args.tree:
        tree = serialize.load(args.tree)
        from ..budget import audit_path_sum

        rows = [{"kind": tree.kind, "epsilon": audit_path_sum(tree.plan), "declared": tree.plan.epsilon,
                 "delta": tree.privacy.delta, "count_eps": list(tree.plan.count_eps),
                 "median_eps": list(tree.plan.median_eps)}]
    elif args.matrix:
        cfg = _config_from_args(args)
        spec = ExperimentSpec.from_config(cfg)
        rows = [ex.audit_spec(s) for s in ex.default_matrix(spec.epsilon, spec.height)]
    else:
        rows = [ex.audit_spec(ExperimentSpec.from_config(_config_from_args(args)))]
    for r in rows:
        print(json.dumps(r, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dpsd", description="Private spatial decompositions")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="write a synthetic point file")
    s.add_argument("--kind", default="uniform")
    s.add_argument("--n", type=int, default=DEFAULTS["n"])
    s.add_argument("--domain", default=",".join(map(str, DEFAULTS["domain"])))
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    b = sub.add_parser("build", help="build a tree and serialise it")
    _add_config_flags(b)
    b.add_argument("--trial", type=int, default=0)
    b.add_argument("--out", required=True)
    b.add_argument("--unsafe-domain-from-data", action="store_true")
    b.set_defaults(func=cmd_build)

    q = sub.add_parser("query", help="answer range queries on a serialised tree")
    q.add_argument("--tree", required=True)
    q.add_argument("--rect", action="append", help="x_lo,x_hi,y_lo,y_hi (repeatable)")
    q.add_argument("--workload", help="workload CSV")
    q.add_argument("--dataset", help="generate a workload against this point file")
    q.add_argument("--shapes", default=json.dumps(DEFAULTS["shapes"]))
    q.add_argument("--per-shape", type=int, default=DEFAULTS["queries_per_shape"])
    q.add_argument("--workload-seed", type=int, default=0)
    q.add_argument("--counts", choices=("raw", "ols"), default="ols")
    q.add_argument("--out")
    q.set_defaults(func=cmd_query)

    e = sub.add_parser("bench", help="run a full experiment")
    _add_config_flags(e)
    e.add_argument("--out", default="results.csv")
    e.add_argument("--summary", help="JSON summary path (default: <out>.summary.json)")
    e.add_argument("--unsafe-domain-from-data", action="store_true")
    e.set_defaults(func=cmd_bench)

    a = sub.add_parser("audit", help="privacy accounting of a tree or configuration")
    _add_config_flags(a)
    a.add_argument("--tree")
    a.add_argument("--matrix", action="store_true", help="audit the default kind x strategy matrix")
    a.set_defaults(func=cmd_audit)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError, RejectionCapError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
