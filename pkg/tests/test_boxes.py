import pytest

from wordspot.boxes import BoundingBox, cluster_lines, iou, union_box, vertical_overlap


def test_iou_identity():
    b = BoundingBox(3, 4, 10, 6)
    assert iou(b, b) == 1.0


def test_iou_disjoint():
    assert iou(BoundingBox(0, 0, 5, 5), BoundingBox(10, 10, 5, 5)) == 0.0


def test_iou_analytic_third():
    # intersection 2, union 6
    a = BoundingBox(0, 0, 2, 2)
    b = BoundingBox(1, 0, 2, 2)
    assert iou(a, b) == pytest.approx(1 / 3)


def test_iou_bounds_random(rng):
    for _ in range(300):
        a = BoundingBox(int(rng.integers(0, 40)), int(rng.integers(0, 40)),
                        int(rng.integers(1, 20)), int(rng.integers(1, 20)))
        b = BoundingBox(int(rng.integers(0, 40)), int(rng.integers(0, 40)),
                        int(rng.integers(1, 20)), int(rng.integers(1, 20)))
        v = iou(a, b)
        assert 0.0 <= v <= 1.0
        assert v == iou(b, a)


def test_box_requires_positive_size():
    with pytest.raises(ValueError):
        BoundingBox(0, 0, 0, 3)


def test_clamp_and_expand():
    b = BoundingBox(-5, -5, 20, 20)
    c = b.clamp(100, 100)
    assert (c.x, c.y, c.x2, c.y2) == (0, 0, 15, 15)
    assert b.expand(3) == BoundingBox(-8, -8, 26, 26)
    with pytest.raises(ValueError):
        BoundingBox(200, 200, 5, 5).clamp(100, 100)


def test_union_box():
    boxes = [BoundingBox(2, 3, 4, 4), BoundingBox(10, 1, 2, 2)]
    assert union_box(boxes) == BoundingBox(2, 1, 10, 6)


def test_dict_round_trip():
    b = BoundingBox(7, 8, 9, 10)
    assert BoundingBox.from_dict(b.to_dict()) == b
    assert b.to_dict() == {"x": 7, "y": 8, "w": 9, "h": 10}


def test_vertical_overlap():
    a = BoundingBox(0, 10, 5, 20)
    b = BoundingBox(9, 12, 5, 20)
    assert vertical_overlap(a, b) == 18
    assert vertical_overlap(a, BoundingBox(0, 40, 5, 5)) == 0


def test_cluster_lines_spec_example():
    # two boxes share a line, the third sits below
    boxes = [BoundingBox(10, 10, 50, 20), BoundingBox(70, 12, 50, 20),
             BoundingBox(10, 60, 50, 20)]
    lines = cluster_lines(boxes, 0.5)
    assert lines == [[0, 1], [2]]


def test_cluster_lines_orders_words_by_x():
    boxes = [BoundingBox(300, 10, 40, 20), BoundingBox(100, 12, 40, 20)]
    lines = cluster_lines(boxes, 0.5)
    assert lines == [[1, 0]]


def test_cluster_lines_transitive():
    # a overlaps b, b overlaps c, but a and c barely overlap: one line via b
    a = BoundingBox(0, 0, 10, 20)
    b = BoundingBox(20, 10, 10, 20)
    c = BoundingBox(40, 20, 10, 20)
    lines = cluster_lines([a, b, c], 0.5)
    assert lines == [[0, 1, 2]]
