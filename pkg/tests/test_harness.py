import csv
import hashlib
import json
import logging

import numpy as np
import pytest

from dpsd import serialize
from dpsd.geometry import Rect
from dpsd.harness import cli
from dpsd.harness.config import ConfigError, ExperimentSpec, PRESETS, resolve
from dpsd.harness.data import PointsFormatError, gen_synthetic, load_points, save_points
from dpsd.harness.experiment import audit_spec, default_matrix, run_experiment
from dpsd.harness.workload import RejectionCapError, Workload, gen_workload
from dpsd.noise import RandomSource
from dpsd.query import true_answer

UNIT = Rect(0.0, 1.0, 0.0, 1.0)


def test_load_two_points(tmp_path):
    p = tmp_path / "pts.txt"
    p.write_text("0.5,0.5\n1.0,2.0")
    pts = load_points(p)
    assert pts.tolist() == [[0.5, 0.5], [1.0, 2.0]]


def test_load_empty_warns(tmp_path, caplog):
    p = tmp_path / "empty.txt"
    p.write_text("")
    with caplog.at_level(logging.WARNING):
        pts = load_points(p)
    assert pts.shape == (0, 2)
    assert "empty dataset" in caplog.text


def test_load_reports_line_number(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("# header\n0.1,0.2\na,b\n")
    with pytest.raises(PointsFormatError, match=":3:"):
        load_points(p)


def test_load_domain_check(tmp_path):
    p = tmp_path / "pts.txt"
    p.write_text("0.5,0.5\n1.5,0.5\n")
    with pytest.raises(PointsFormatError, match=":2:"):
        load_points(p, UNIT)


def test_save_load_roundtrip(tmp_path):
    pts = gen_synthetic("gaussian-mixture", 500, UNIT, 3)
    save_points(tmp_path / "p.txt", pts)
    assert np.array_equal(load_points(tmp_path / "p.txt"), pts)


@pytest.mark.parametrize("kind", ["uniform", "gaussian-mixture", "skewed-corner"])
def test_synthetic_deterministic_and_inside(tmp_path, kind):
    a = gen_synthetic(kind, 2000, Rect(-5, 5, 10, 11), 9)
    b = gen_synthetic(kind, 2000, Rect(-5, 5, 10, 11), 9)
    save_points(tmp_path / "a.txt", a)
    save_points(tmp_path / "b.txt", b)
    digest = [hashlib.sha256((tmp_path / f).read_bytes()).hexdigest() for f in ("a.txt", "b.txt")]
    assert digest[0] == digest[1]
    assert np.all((a[:, 0] >= -5) & (a[:, 0] < 5) & (a[:, 1] >= 10) & (a[:, 1] < 11))
    assert gen_synthetic(kind, 0, UNIT, 1).shape == (0, 2)


def test_uniform_synthetic_leaf_counts_are_even():
    pts = gen_synthetic("uniform", 100_000, UNIT, 0)
    counts = np.bincount((np.floor(pts[:, 0] * 32) * 32 + np.floor(pts[:, 1] * 32)).astype(int), minlength=1024)
    assert counts.std() / counts.mean() < 0.2


def test_skewed_synthetic_is_skewed():
    pts = gen_synthetic("skewed-corner", 10_000, UNIT, 0)
    assert np.mean((pts[:, 0] < 0.125) & (pts[:, 1] < 0.125)) > 0.2


def test_workload_full_domain_and_determinism(tmp_path):
    pts = gen_synthetic("uniform", 1000, UNIT, 0)
    wl = gen_workload([(1.0, 1.0), (0.1, 0.1)], UNIT, pts, RandomSource(3), per_shape=20)
    assert wl.rects[0].tolist() == [0.0, 1.0, 0.0, 1.0]
    assert all(true_answer(pts, wl.query(k)) > 0 for k in range(len(wl)))
    wl.save(tmp_path / "a.csv")
    gen_workload([(1.0, 1.0), (0.1, 0.1)], UNIT, pts, RandomSource(3), per_shape=20).save(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    back = Workload.load(tmp_path / "a.csv")
    assert np.array_equal(back.rects, wl.rects)
    assert back.label(25) == "0.1x0.1"


def test_workload_rejection_cap():
    pts = np.full((10, 2), 0.01)
    with pytest.raises(RejectionCapError, match="larger shape"):
        gen_workload([(0.001, 0.001)], UNIT, pts, RandomSource(0), per_shape=1)


def test_workload_needs_points():
    with pytest.raises(ValueError):
        gen_workload([(1, 1)], UNIT, np.empty((0, 2)), RandomSource(0))


def test_config_resolution():
    cfg = resolve({"variant": "quad-opt", "height": 3})
    assert cfg["kind"] == "quadtree" and cfg["prune"] is None and cfg["height"] == 3
    assert resolve({"variant": "quad-opt", "counts": "raw"})["counts"] == "raw"
    with pytest.raises(ConfigError):
        resolve({"bogus": 1})
    with pytest.raises(ConfigError):
        resolve({"variant": "nope"})
    assert set(PRESETS) >= {"quad-baseline", "quad-geo", "quad-post", "quad-opt"}


def test_spec_roundtrip_and_validation():
    spec = ExperimentSpec.from_config({"variant": "kd-hybrid", "height": 6, "epsilon": 0.1})
    assert spec.ell == 3
    assert ExperimentSpec.from_config(spec.to_config()) == spec
    with pytest.raises(ConfigError):
        ExperimentSpec.from_config({"epsilon": 0})
    with pytest.raises(ConfigError):
        ExperimentSpec.from_config({"kind": "octree"})


def _aligned_workload():
    rects = []
    for i in range(8):
        rects.append([i / 8, (i + 1) / 8, 0.0, 0.5])
    return Workload(((0.125, 0.5),), np.array(rects), np.zeros(8, dtype=np.int64))


@pytest.mark.parametrize("variant,tol", [("quad-geo", 0.0), ("quad-opt", 1e-12)])
def test_noiseless_experiment_has_zero_error(variant, tol):
    pts = gen_synthetic("uniform", 3000, UNIT, 1)
    spec = ExperimentSpec.from_config({"variant": variant, "domain": [0, 1, 0, 1], "height": 3,
                                       "noiseless": True, "trials": 2})
    rep = run_experiment(spec, pts, _aligned_workload())
    assert rep.median_rel_error() <= tol
    assert rep.rel_errors.max() <= tol
    assert rep.epsilon == pytest.approx(spec.epsilon)


def test_result_file_aggregates_recompute(tmp_path):
    pts = gen_synthetic("uniform", 3000, UNIT, 1)
    spec = ExperimentSpec.from_config({"variant": "kd-standard", "domain": [0, 1, 0, 1], "height": 3,
                                       "shapes": [[0.2, 0.2], [0.5, 0.1]], "queries_per_shape": 30,
                                       "trials": 2, "prune": 16})
    rep = run_experiment(spec, pts)
    rep.save(tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    rows = list(csv.DictReader([l for l in lines if not l.startswith("#")]))
    assert len(rows) == 2 * 60
    footer = {tuple(l[2:].split(",")[1:3]): float(l.split(",")[3]) for l in lines if l.startswith("# aggregate,") and "median_rel_error" not in l}
    errs = np.array([float(r["rel_error"]) for r in rows])
    assert footer[("all", "all")] == float(np.median(errs))
    t0 = np.array([float(r["rel_error"]) for r in rows if r["trial"] == "0" and r["shape"] == "0.2x0.2"])
    assert footer[("0", "0.2x0.2")] == float(np.median(t0))
    audit = [l for l in lines if l.startswith("# audit")][0].split(",")
    assert float(audit[2]) == pytest.approx(float(audit[4]), rel=1e-9)


def test_audit_matrix_covers_every_kind():
    specs = default_matrix()
    kinds = {s.kind for s in specs}
    assert kinds == {"quadtree", "kd", "hybrid", "hilbert"}
    for s in specs:
        rep = audit_spec(s)
        assert rep["epsilon"] == pytest.approx(s.epsilon, rel=1e-9)
        assert (rep["delta"] > 0) == (s.mechanism.kind == "ss" and s.kind != "quadtree")


def test_cli_pipeline(tmp_path, capsys):
    pts = tmp_path / "pts.txt"
    assert cli.main(["synth", "--kind", "uniform", "--n", "3000", "--domain=0,1,0,1", "--seed", "2",
                     "--out", str(pts)]) == 0
    tree = tmp_path / "t.tree"
    assert cli.main(["build", "--dataset", str(pts), "--domain=0,1,0,1", "--height", "3",
                     "--kind", "kd", "--out", str(tree)]) == 0
    t = serialize.load(tree)
    assert t.kind == "kd" and t.height == 3
    capsys.readouterr()
    assert cli.main(["query", "--tree", str(tree), "--rect", "0,1,0,1", "--counts", "ols"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "query_id,x_lo,y_lo,x_hi,y_hi,estimate"
    assert float(out[1].split(",")[-1]) == pytest.approx(3000, rel=0.05)
    assert cli.main(["audit", "--tree", str(tree)]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["epsilon"] == pytest.approx(0.5)
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"dataset": str(pts), "domain": [0, 1, 0, 1], "height": 3,
                               "shapes": [[0.3, 0.3]], "queries_per_shape": 20}))
    res = tmp_path / "r.csv"
    assert cli.main(["bench", "--config", str(cfg), "--switch-level", "1", "--out", str(res)]) == 0
    summary = json.loads((tmp_path / "r.csv.summary.json").read_text())
    assert summary["config"]["switch_level"] == 1
    assert "timings" in summary and "build_s" in summary["timings"]


def test_cli_unsafe_domain_warns(tmp_path, caplog):
    pts = tmp_path / "pts.txt"
    save_points(pts, gen_synthetic("uniform", 500, Rect(3, 4, 5, 6), 0))
    with caplog.at_level(logging.WARNING):
        code = cli.main(["build", "--dataset", str(pts), "--height", "2", "--out", str(tmp_path / "t"),
                         "--unsafe-domain-from-data"])
    assert code == 0
    assert "PRIVACY WARNING" in caplog.text


def test_cli_reports_errors(tmp_path):
    assert cli.main(["build", "--dataset", str(tmp_path / "missing.txt"), "--out", str(tmp_path / "t")]) == 2
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    assert cli.main(["audit", "--config", str(cfg)]) == 2
    assert cli.main(["audit", "--epsilon", "-1"]) == 2
