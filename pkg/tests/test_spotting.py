import numpy as np
import pytest

from conftest import make_page, page_of, render_word
from oracles import dense_ncc_map
from wordspot.boxes import BoundingBox, iou
from wordspot.errors import DimensionMismatchError
from wordspot.snapbox import WordTemplate, extract_template
from wordspot.spotting import (Candidate, QueryModel, combined_score_map,
                               masked_ncc, ncc_score_map, nms, score_page)


def template_of(rng, w=60, h=28):
    cleaned = rng.random((h, w))
    mask = (rng.random((h, w)) > 0.5).astype(np.uint8)
    return cleaned, mask


# ---- masked NCC ----------------------------------------------------------

def test_ncc_self_correlation(rng):
    t, mask = template_of(rng)
    assert masked_ncc(t, t, mask) == pytest.approx(1.0, abs=1e-9)


def test_ncc_anti_correlation(rng):
    t, _ = template_of(rng)
    full = np.ones_like(t, dtype=np.uint8)
    assert masked_ncc(t, 1.0 - t, full) == pytest.approx(-1.0, abs=1e-9)


def test_ncc_brightness_invariance(rng):
    t, mask = template_of(rng)
    assert masked_ncc(t, t + 0.2, mask) == pytest.approx(1.0, abs=1e-6)


def test_ncc_zero_variance_window(rng):
    t, mask = template_of(rng)
    assert masked_ncc(t, np.full_like(t, 0.3), mask) == 0.0


def test_ncc_dimension_mismatch(rng):
    t, mask = template_of(rng)
    with pytest.raises(DimensionMismatchError):
        masked_ncc(t, t[:-1, :], mask)


def test_ncc_requires_support(rng):
    t, _ = template_of(rng, w=8, h=8)
    with pytest.raises(ValueError):
        masked_ncc(t, t, np.zeros_like(t, dtype=np.uint8), support_dilate=0)


# ---- score map vs oracle -------------------------------------------------

def test_score_map_matches_bruteforce(rng):
    page = rng.random((72, 96))
    tpl = rng.random((18, 30))
    mask = (rng.random((18, 30)) > 0.45).astype(np.uint8)
    got = ncc_score_map(page, tpl, mask)
    want = dense_ncc_map(page, tpl, mask)
    assert got.shape == want.shape == (72 - 18 + 1, 96 - 30 + 1)
    assert np.abs(got - want).max() < 1e-6


def test_score_map_agrees_with_pointwise_ncc(rng):
    page = rng.random((40, 50))
    tpl = rng.random((12, 16))
    mask = (rng.random((12, 16)) > 0.4).astype(np.uint8)
    m = ncc_score_map(page, tpl, mask)
    for y, x in [(0, 0), (5, 9), (28, 34)]:
        window = page[y:y + 12, x:x + 16]
        assert m[y, x] == pytest.approx(masked_ncc(tpl, window, mask), abs=1e-9)


# ---- score_page ----------------------------------------------------------

@pytest.fixture
def spotting_scene(rng, small_config):
    """Page with 3 exact planted copies of a word plus the query instance."""
    word = render_word(rng, 70, 30)
    spots = [(40, 30), (170, 30), (40, 120), (190, 130)]
    img = make_page(300, 200, [(word, x, y) for x, y in spots],
                    ink=0.15, background=0.88)
    page = page_of(img)
    ys, xs = np.nonzero(word)
    boxes = [BoundingBox(x + int(xs.min()), y + int(ys.min()),
                         int(xs.max() - xs.min()) + 1, int(ys.max() - ys.min()) + 1)
             for x, y in spots]
    return page, boxes


def test_score_page_self_match(spotting_scene, small_config):
    page, boxes = spotting_scene
    tpl = extract_template(page, boxes[0], small_config)
    model = QueryModel("q", [tpl], scales=(1.0,), threshold=0.55)
    cands = score_page(model, page, small_config, stride=1)
    assert cands
    top = cands[0]
    assert top.score >= 0.99
    assert iou(top.box, boxes[0]) >= 0.9


def test_score_page_finds_planted_copies(spotting_scene, small_config):
    page, boxes = spotting_scene
    tpl = extract_template(page, boxes[0], small_config)
    model = QueryModel("q", [tpl], scales=(1.0,), threshold=0.8)
    cands = score_page(model, page, small_config)
    # exactly the 4 instances (query instance + 3 copies), each localized
    assert len(cands) == 4
    for b in boxes:
        hit = max(cands, key=lambda c: iou(c.box, b))
        assert iou(hit.box, b) >= 0.5
        assert abs(hit.box.x - b.x) <= 2 and abs(hit.box.y - b.y) <= 2
        assert hit.score >= 0.8


def test_score_page_blank_page(small_config, rng):
    blank = page_of(make_page(200, 150, []), 3)
    word = render_word(rng, 60, 26)
    donor = page_of(make_page(200, 150, [(word, 60, 60)], ink=0.15), 0)
    ys, xs = np.nonzero(word)
    box = BoundingBox(60 + int(xs.min()), 60 + int(ys.min()),
                      int(xs.max() - xs.min()) + 1, int(ys.max() - ys.min()) + 1)
    tpl = extract_template(donor, box, small_config)
    model = QueryModel("q", [tpl], scales=(1.0,), threshold=0.55)
    assert score_page(model, blank, small_config) == []


def test_translation_equivariance(rng, small_config):
    # planting the template at an offset shifts the argmax by that offset
    word = render_word(rng, 50, 24)
    base = make_page(220, 160, [(word, 60, 50)], ink=0.15)
    shifted = make_page(220, 160, [(word, 60 + 17, 50 + 11)], ink=0.15)
    p0, p1 = page_of(base, 0), page_of(shifted, 1)
    ys, xs = np.nonzero(word)
    box = BoundingBox(60 + int(xs.min()), 50 + int(ys.min()),
                      int(xs.max() - xs.min()) + 1, int(ys.max() - ys.min()) + 1)
    tpl = extract_template(p0, box, small_config)
    model = QueryModel("q", [tpl], scales=(1.0,), threshold=0.3)

    m0, _, _ = combined_score_map(model, p0.cleaned(small_config), small_config)
    m1, _, _ = combined_score_map(model, p1.cleaned(small_config), small_config)
    y0, x0 = np.unravel_index(np.argmax(m0), m0.shape)
    y1, x1 = np.unravel_index(np.argmax(m1), m1.shape)
    assert (y1 - y0, x1 - x0) == (11, 17)


def test_positive_component_monotone_under_exemplars(spotting_scene, small_config, rng):
    page, boxes = spotting_scene
    t1 = extract_template(page, boxes[0], small_config)
    t2 = extract_template(page, boxes[3], small_config)
    m_one = QueryModel("q", [t1], scales=(1.0,), threshold=0.3)
    m_two = QueryModel("q", [t1, t2], scales=(1.0,), threshold=0.3)
    s1, _, _ = combined_score_map(m_one, page.cleaned(small_config), small_config)
    s2, _, _ = combined_score_map(m_two, page.cleaned(small_config), small_config)
    covered = s1 > -2.0
    assert np.all(s2[covered] >= s1[covered] - 1e-12)


def test_candidates_inside_page_and_capped(spotting_scene, small_config):
    page, boxes = spotting_scene
    tpl = extract_template(page, boxes[0], small_config)
    model = QueryModel("q", [tpl], scales=(0.9, 1.0, 1.1), threshold=0.3)
    cands = score_page(model, page, small_config)
    page_rect = BoundingBox(0, 0, page.width, page.height)
    areas = []
    for c in cands:
        assert page_rect.contains(c.box)
        areas.append(c.box.area)
    assert len(cands) <= (page.width * page.height) // min(areas)


def test_negative_exemplar_lowers_scores(spotting_scene, small_config):
    page, boxes = spotting_scene
    tpl = extract_template(page, boxes[0], small_config)
    neg = extract_template(page, boxes[1], small_config)  # same word as negative
    plain = QueryModel("q", [tpl], scales=(1.0,), threshold=0.3)
    penal = QueryModel("q", [tpl], [neg], scales=(1.0,), threshold=0.3,
                       negative_weight=0.5)
    c_plain = {(c.box.x, c.box.y): c.score for c in score_page(plain, page, small_config)}
    c_pen = {(c.box.x, c.box.y): c.score for c in score_page(penal, page, small_config)}
    shared = set(c_plain) & set(c_pen)
    assert shared
    assert all(c_pen[k] <= c_plain[k] + 1e-9 for k in shared)


# ---- NMS -----------------------------------------------------------------

def test_nms_empty():
    assert nms([]) == []


def test_nms_two_overlapping_keeps_higher():
    a = Candidate(0, BoundingBox(10, 10, 20, 10), 0.9)
    b = Candidate(0, BoundingBox(11, 10, 20, 10), 0.8)  # IoU ~0.9
    kept = nms([a, b], iou_max=0.3)
    assert kept == [a]


def test_nms_keeps_disjoint():
    a = Candidate(0, BoundingBox(10, 10, 20, 10), 0.9)
    b = Candidate(0, BoundingBox(100, 10, 20, 10), 0.8)
    assert nms([a, b]) == [a, b]


def test_nms_different_pages_never_suppress():
    a = Candidate(0, BoundingBox(10, 10, 20, 10), 0.9)
    b = Candidate(1, BoundingBox(10, 10, 20, 10), 0.8)
    assert nms([a, b]) == [a, b]


def test_nms_idempotent_on_seeded_sets():
    rng = np.random.default_rng(4242)
    for _ in range(500):
        cands = [
            Candidate(int(rng.integers(0, 2)),
                      BoundingBox(int(rng.integers(0, 60)), int(rng.integers(0, 60)),
                                  int(rng.integers(4, 20)), int(rng.integers(4, 20))),
                      float(np.round(rng.random(), 3)))
            for _ in range(int(rng.integers(0, 25)))
        ]
        once = nms(cands, 0.3)
        assert nms(once, 0.3) == once
        for i, a in enumerate(once):
            for b in once[:i]:
                assert a.page_id != b.page_id or iou(a.box, b.box) <= 0.3


# ---- model validation ------------------------------------------------------

def test_query_model_validation(rng, small_config):
    cleaned = rng.random((20, 40))
    mask = np.ones((20, 40), dtype=np.uint8)
    tpl = WordTemplate(cleaned, mask, (0, BoundingBox(0, 0, 40, 20)))
    with pytest.raises(ValueError):
        QueryModel("q", [])
    with pytest.raises(ValueError):
        QueryModel("q", [tpl], scales=(1.1, 0.9))
    with pytest.raises(ValueError):
        QueryModel("q", [tpl], threshold=0.95)
