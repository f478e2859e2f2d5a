import numpy as np
import pytest

from dpsd.geometry import Point, Rect
from dpsd.hilbert import (
    HilbertConfig,
    bounding_box,
    decode,
    encode,
    encode_array,
    index_to_xy,
    index_to_xy_array,
    range_bounding_boxes,
    range_grid_boxes,
    xy_to_index,
    xy_to_index_array,
)


def test_order_one_orientation():
    assert [index_to_xy(1, d) for d in range(4)] == [(0, 0), (0, 1), (1, 1), (1, 0)]


def test_order_two_sequence_frozen():
    # the standard order-2 curve in this orientation
    expected = [(0, 0), (1, 0), (1, 1), (0, 1), (0, 2), (0, 3), (1, 3), (1, 2),
                (2, 2), (2, 3), (3, 3), (3, 2), (3, 1), (2, 1), (2, 0), (3, 0)]
    assert [index_to_xy(2, d) for d in range(16)] == expected


@pytest.mark.parametrize("order", [1, 2, 3, 4, 5, 6])
def test_roundtrip_and_continuity(order):
    n = 4**order
    d = np.arange(n)
    x, y = index_to_xy_array(order, d)
    assert np.array_equal(xy_to_index_array(order, x, y), d)
    steps = np.abs(np.diff(x)) + np.abs(np.diff(y))
    assert np.all(steps == 1)
    assert len(set(zip(x.tolist(), y.tolist()))) == n


def test_scalar_and_vector_agree_at_high_order():
    rng = np.random.default_rng(0)
    x = rng.integers(0, 2**18, 500)
    y = rng.integers(0, 2**18, 500)
    d = xy_to_index_array(18, x, y)
    assert [xy_to_index(18, int(a), int(b)) for a, b in zip(x, y)] == d.tolist()


def test_encode_decode_contains_point():
    cfg = HilbertConfig(5, Rect(-3.0, 5.0, 10.0, 12.0))
    rng = np.random.default_rng(1)
    for px, py in zip(rng.uniform(-3, 5, 200), rng.uniform(10, 12, 200)):
        cell = decode(cfg, encode(cfg, Point(px, py)))
        assert cell.x_lo <= px < cell.x_hi and cell.y_lo <= py < cell.y_hi


def test_encode_rejects_outside():
    cfg = HilbertConfig(3)
    with pytest.raises(ValueError):
        encode_array(cfg, [1.0], [0.5])
    with pytest.raises(ValueError):
        HilbertConfig(0)


@pytest.mark.parametrize("order", [1, 3, 5])
def test_range_boxes_match_brute_force(order):
    n = 4**order
    x, y = index_to_xy_array(order, np.arange(n))
    rng = np.random.default_rng(order)
    lo = rng.integers(0, n, 300)
    hi = np.minimum(n, lo + rng.integers(0, n, 300))
    boxes = range_grid_boxes(order, lo, hi)
    for a, b, box in zip(lo, hi, boxes):
        if a == b:
            assert box.tolist() == [-1, -1, -1, -1]
            continue
        sx, sy = x[a:b], y[a:b]
        assert box.tolist() == [sx.min(), sx.max() + 1, sy.min(), sy.max() + 1]


def test_bounding_box_data_space():
    cfg = HilbertConfig(1, Rect(0, 2, 0, 2))
    assert bounding_box(cfg, 0, 1) == Rect(0, 1, 0, 2)
    assert bounding_box(cfg, 0, 3) == Rect(0, 2, 0, 2)
    assert np.isnan(range_bounding_boxes(cfg, [2], [2])).all()
    with pytest.raises(ValueError):
        bounding_box(cfg, 2, 1)
