import numpy as np
import pytest

from dpsd.budget import audit_path_sum, make_plan
from dpsd.geometry import Rect
from dpsd.hilbert import HilbertConfig, encode_array
from dpsd.median import MedianMechanism
from dpsd.noise import RandomSource
from dpsd.postprocess import ols
from dpsd.query import node_true_counts
from dpsd.tree import (
    TreeStateError,
    build_hilbert_rtree,
    build_hybrid,
    build_kd_flattened,
    build_quadtree,
    build_tree,
    prune,
)

UNIT = Rect(0.0, 1.0, 0.0, 1.0)


def quad_plan(eps, h, strategy="geometric"):
    return make_plan(eps, h, strategy, count_share=1.0, median_strategy="none")


def plan_for(kind, eps, h, ell=None):
    if kind == "quadtree":
        return quad_plan(eps, h)
    if kind == "hybrid":
        return make_plan(eps, h, median_strategy="hybrid-top-levels", switch_level=ell)
    return make_plan(eps, h)


def test_height_zero_quadtree():
    pts = np.random.default_rng(0).random((123, 2))
    t = build_quadtree(pts, UNIT, 0, quad_plan(1.0, 0), RandomSource(0, noiseless=True))
    assert t.num_nodes() == 1
    assert t.noisy[0].tolist() == [123.0]
    noisy = build_quadtree(pts, UNIT, 0, quad_plan(1.0, 0), RandomSource(0))
    assert noisy.noisy[0][0] != 123.0


def test_node_count_geometric_series():
    # (4^{h+1} - 1) / 3 nodes; h=10 -> 1,398,101
    pts = np.random.default_rng(0).random((100, 2))
    t = build_quadtree(pts, UNIT, 10, quad_plan(1.0, 10), RandomSource(0))
    assert t.num_nodes() == 1_398_101 == (4**11 - 1) // 3


@pytest.mark.parametrize("kind", ["quadtree", "kd", "hybrid", "hilbert"])
def test_noiseless_counts_consistent_and_exact(kind, uniform_points):
    h = 4
    t = build_tree(kind, uniform_points, UNIT, h, plan_for(kind, 1.0, h, 2),
                   RandomSource(3, noiseless=True), switch_level=2, hilbert_order=10)
    truth = node_true_counts(t, uniform_points)
    for i in range(h + 1):
        assert np.array_equal(t.noisy[i], truth[i])
        assert truth[i].sum() == len(uniform_points)
    for i in range(1, h + 1):
        assert np.array_equal(truth[i], truth[i - 1].reshape(-1, 4).sum(axis=1))


@pytest.mark.parametrize("kind", ["quadtree", "kd", "hybrid"])
def test_children_partition_parent(kind, uniform_points):
    h = 3
    t = build_tree(kind, uniform_points, UNIT, h, plan_for(kind, 1.0, h, 1), RandomSource(5), switch_level=1)
    for i in range(1, h + 1):
        parent = t.rects[i]
        kids = t.rects[i - 1].reshape(-1, 4, 4)
        area = (kids[:, :, 1] - kids[:, :, 0]) * (kids[:, :, 3] - kids[:, :, 2])
        p_area = (parent[:, 1] - parent[:, 0]) * (parent[:, 3] - parent[:, 2])
        assert np.allclose(area.sum(axis=1), p_area, rtol=1e-12)
        assert np.all(kids[:, :, 0] >= parent[:, None, 0]) and np.all(kids[:, :, 1] <= parent[:, None, 1])
        assert np.all(kids[:, :, 2] >= parent[:, None, 2]) and np.all(kids[:, :, 3] <= parent[:, None, 3])
        assert np.all(area > 0)


def test_quadtree_structure_is_data_independent():
    a = build_quadtree(np.random.default_rng(1).random((50, 2)), UNIT, 3, quad_plan(1.0, 3), RandomSource(0))
    b = build_quadtree(np.random.default_rng(2).random((900, 2)), UNIT, 3, quad_plan(1.0, 3), RandomSource(9))
    for i in range(4):
        assert np.array_equal(a.rects[i], b.rects[i])
    # leaf 5 = child 1 of child 1 of child 0: x-upper twice inside the lower-left quadrant
    assert a.rects[0][5].tolist() == [0.375, 0.5, 0.0, 0.125]


def test_kd_near_exact_median_splits_are_balanced():
    rng = np.random.default_rng(4)
    pts = rng.random((4001, 2))
    plan = make_plan(1e9, 2)
    t = build_kd_flattened(pts, UNIT, 2, plan, MedianMechanism("em"), RandomSource(1))
    sx = t.splits[2][0, 0]
    xs = np.sort(pts[:, 0])
    m = (len(xs) + 1) // 2
    assert xs[m - 1] <= sx <= xs[m]  # within one data value of the median
    quarter = node_true_counts(t, pts)[1]
    assert np.all(np.abs(quarter - np.ceil(len(pts) / 4)) <= 1)


def test_kd_identical_points():
    pts = np.full((40, 2), 0.3)
    t = build_kd_flattened(pts, UNIT, 3, make_plan(1.0, 3), MedianMechanism("em"), RandomSource(2, noiseless=True))
    assert t.num_nodes() == (4**4 - 1) // 3
    leaves = node_true_counts(t, pts)[0]
    assert np.count_nonzero(leaves) == 1 and leaves.sum() == 40


@pytest.mark.parametrize("mech", ["em", "ss", "nm", "cell", "laplace"])
def test_kd_mechanisms_build_and_audit(mech, uniform_points):
    plan = make_plan(0.5, 3)
    t = build_kd_flattened(uniform_points, UNIT, 3, plan, MedianMechanism(mech, cell_length=0.05), RandomSource(8))
    assert audit_path_sum(t.plan) == pytest.approx(0.5)
    assert t.privacy.epsilon == pytest.approx(0.5)
    assert t.privacy.delta == (2 * 3 * 1e-4 if mech == "ss" else 0.0)
    assert all(a.shape == (4 ** (3 - i), 4) for i, a in enumerate(t.rects))


def test_hybrid_boundaries(uniform_points):
    h = 3
    q = build_quadtree(uniform_points, UNIT, h, quad_plan(1.0, h), RandomSource(6))
    hy0 = build_hybrid(uniform_points, UNIT, h, 0, quad_plan(1.0, h), None, RandomSource(6))
    for i in range(h + 1):
        assert np.array_equal(q.rects[i], hy0.rects[i])
        assert np.array_equal(q.noisy[i], hy0.noisy[i])
    plan = make_plan(1.0, h)
    kd = build_kd_flattened(uniform_points, UNIT, h, plan, MedianMechanism(), RandomSource(6))
    hyh = build_hybrid(uniform_points, UNIT, h, h, plan, MedianMechanism(), RandomSource(6))
    for i in range(h + 1):
        assert np.array_equal(kd.rects[i], hyh.rects[i])
        assert np.array_equal(kd.noisy[i], hyh.noisy[i])


def test_hybrid_default_switch_level():
    pts = np.random.default_rng(0).random((200, 2))
    plan = make_plan(1.0, 6, median_strategy="hybrid-top-levels", switch_level=3)
    t = build_tree("hybrid", pts, UNIT, 6, plan, RandomSource(0))
    assert t.switch_level == 3


def test_hilbert_root_split_on_contiguous_segment():
    cfg = HilbertConfig(5, UNIT)
    from dpsd.hilbert import index_to_xy_array

    idx = np.arange(100, 200)
    cx, cy = index_to_xy_array(5, idx)
    pts = np.stack([(cx + 0.5) / 32, (cy + 0.5) / 32], axis=1)
    assert np.array_equal(np.sort(encode_array(cfg, pts[:, 0], pts[:, 1])), idx)
    t = build_hilbert_rtree(pts, UNIT, 1, make_plan(1e9, 1), MedianMechanism("em"), cfg, RandomSource(0))
    # exact 1-D median of 100..199 is the 50th key, 149; keys <= 149 go left
    assert t.splits[1][0, 0] == 150
    assert t.ranges[0][:, 1].tolist()[1] == 150


def test_hilbert_boxes_cover_points(uniform_points):
    cfg = HilbertConfig(8, UNIT)
    t = build_hilbert_rtree(uniform_points, UNIT, 3, make_plan(1.0, 3), MedianMechanism(), cfg, RandomSource(1))
    keys = encode_array(cfg, uniform_points[:, 0], uniform_points[:, 1])
    for i in range(4):
        r = t.ranges[i]
        assert r[0, 0] == 0 and r[-1, 1] == cfg.size and np.all(r[1:, 0] == r[:-1, 1])
        node = np.searchsorted(r[:, 1], keys, side="right")
        box = t.rects[i][node]
        x, y = uniform_points[:, 0], uniform_points[:, 1]
        assert np.all((box[:, 0] <= x) & (x < box[:, 1]) & (box[:, 2] <= y) & (y < box[:, 3]))
    assert audit_path_sum(t.plan) == pytest.approx(1.0)


def test_build_errors(uniform_points):
    with pytest.raises(ValueError):
        build_quadtree(uniform_points, UNIT, 2, make_plan(1.0, 2), RandomSource(0))
    with pytest.raises(ValueError):
        build_quadtree(uniform_points, Rect(0, 0, 0, 1), 2, quad_plan(1.0, 2), RandomSource(0))
    with pytest.raises(ValueError):
        build_quadtree(uniform_points + 1.0, UNIT, 2, quad_plan(1.0, 2), RandomSource(0))
    with pytest.raises(ValueError):
        build_kd_flattened(uniform_points, UNIT, 0, make_plan(1.0, 0, median_strategy="none", count_share=1.0),
                           MedianMechanism(), RandomSource(0))
    with pytest.raises(ValueError):
        build_hybrid(uniform_points, UNIT, 2, 3, quad_plan(1.0, 2), None, RandomSource(0))
    with pytest.raises(ValueError):
        build_tree("octree", uniform_points, UNIT, 2, quad_plan(1.0, 2), RandomSource(0))


def test_prune(uniform_points):
    t = build_quadtree(uniform_points, UNIT, 4, quad_plan(1.0, 4), RandomSource(2))
    with pytest.raises(TreeStateError):
        prune(t, 32)
    t = ols(t)
    assert prune(t, np.inf).num_nodes() == 1
    assert prune(t, -np.inf).num_nodes() == t.num_nodes()
    p = prune(t, 32)
    alive = p.alive()
    for i in range(1, 5):
        cut = p.leaf_mask[i] & alive[i]
        assert np.all(p.beta[i][cut] < 32)
        assert np.all(p.beta[i][alive[i] & ~cut] >= 32)
    assert p.noisy is t.noisy  # counts untouched
    with pytest.raises(TreeStateError):
        ols(p)


def test_prune_zero_keeps_nonnegative_tree():
    pts = np.random.default_rng(3).random((20000, 2))
    t = ols(build_quadtree(pts, UNIT, 2, quad_plan(10.0, 2), RandomSource(2)))
    assert all(np.all(b >= 0) for b in t.beta)
    assert prune(t, 0).num_nodes() == t.num_nodes()


def test_node_view_and_iteration(uniform_points):
    t = ols(build_quadtree(uniform_points, UNIT, 2, quad_plan(1.0, 2), RandomSource(2)))
    nodes = list(t.iter_nodes())
    assert len(nodes) == 21
    assert nodes[0].level == 2 and nodes[0].region == UNIT and len(nodes[0].children) == 4
    assert nodes[1].level == 1 and nodes[1].index == 0
    assert nodes[-1].is_leaf
