import numpy as np
import pytest

from oracles import (dense_blur2d, direct_blur_separable, flood_fill_components,
                     oracle_bandpass, otsu_bruteforce)
from wordspot.errors import InvalidParamsError
from wordspot.imgproc import (BandpassParams, bandpass_clean, binarize_otsu,
                              connected_components, gaussian_blur, remove_speckle)


# ---- gaussian blur ------------------------------------------------------

@pytest.mark.parametrize("sigma", [0.8, 1.5, 3.0])
def test_blur_matches_dense_2d_oracle(rng, sigma):
    for _ in range(4):
        img = rng.random((64, 64))
        got = gaussian_blur(img, sigma)
        want = dense_blur2d(img, sigma)
        assert np.abs(got - want).max() < 1e-6


def test_blur_large_sigma_fft_path_matches_direct(rng):
    img = rng.random((80, 120))
    got = gaussian_blur(img, 24.0)  # large kernel: FFT path
    want = direct_blur_separable(img, 24.0)
    assert np.abs(got - want).max() < 1e-6


def test_blur_preserves_constants():
    img = np.full((40, 40), 0.37)
    assert np.abs(gaussian_blur(img, 5.0) - 0.37).max() < 1e-12


# ---- band-pass cleaning -------------------------------------------------

def test_bandpass_constant_is_zero():
    img = np.full((128, 128), 0.5)
    out = bandpass_clean(img)
    assert out.shape == img.shape
    assert np.all(out == 0.0)


def test_bandpass_ramp_response_small():
    # horizontal linear ramp 0 -> 1 over 512 px, no ink
    ramp = np.tile(np.linspace(0.0, 1.0, 512), (96, 1))
    got = bandpass_clean(ramp)
    want = oracle_bandpass(ramp)
    assert np.abs(got - want).max() < 1e-6
    assert got.max() <= 0.05


def test_bandpass_stroke_on_ramp_dominates():
    ramp = np.tile(np.linspace(0.0, 1.0, 512), (96, 1))
    img = ramp.copy()
    img[40:56, 255:257] = 0.1  # 2 px wide dark stroke
    stroke_mask = np.zeros(img.shape, dtype=bool)
    stroke_mask[40:56, 255:257] = True

    got = bandpass_clean(img)
    want = oracle_bandpass(img)
    assert np.abs(got - want).max() < 1e-6
    on = got[stroke_mask].mean()
    off = got[~stroke_mask].mean()
    assert on >= 10 * off


def test_bandpass_output_range(rng):
    img = rng.random((100, 150))
    out = bandpass_clean(img)
    assert out.min() >= 0.0 and out.max() <= 1.0
    assert np.all(np.isfinite(out))


def test_bandpass_shift_invariance(rng):
    img = 0.3 + 0.4 * rng.random((96, 96))
    a = bandpass_clean(img)
    b = bandpass_clean(img + 0.2)
    assert np.abs(a - b).max() < 1e-6


def test_bandpass_params_ordering_validated():
    with pytest.raises(InvalidParamsError):
        BandpassParams(8.0, 1.0, 16.0, 64.0)
    with pytest.raises(InvalidParamsError):
        BandpassParams(1.0, 8.0, 8.0, 64.0)
    with pytest.raises(InvalidParamsError):
        BandpassParams(-1.0, 8.0, 16.0, 64.0)


# ---- otsu ---------------------------------------------------------------

def test_otsu_constant_degenerate():
    res = binarize_otsu(np.full((30, 30), 0.42))
    assert res.degenerate
    assert res.binary.sum() == 0


def test_otsu_two_valued_separates_exactly():
    img = np.full((10, 10), 0.2)
    img.ravel()[:40] = 0.9  # 40% bright
    res = binarize_otsu(img)
    assert not res.degenerate
    assert np.array_equal(res.binary, (img > 0.5).astype(np.uint8))


def test_otsu_matches_bruteforce_on_bimodal(rng):
    for _ in range(5):
        n = 4000
        a = rng.normal(0.3, 0.05, n)
        b = rng.normal(0.75, 0.08, n // 2)
        img = np.clip(np.concatenate([a, b]), 0, 1).reshape(60, 100)
        res = binarize_otsu(img)
        t_oracle, _ = otsu_bruteforce(img)
        assert res.threshold == pytest.approx(t_oracle / 255.0)


def test_otsu_unpacks_as_pair():
    binary, threshold = binarize_otsu(np.full((32, 32), 0.1))
    assert binary.shape == (32, 32)
    assert 0.0 <= threshold <= 1.0


# ---- connected components ----------------------------------------------

def test_components_empty():
    labels, stats = connected_components(np.zeros((20, 20), dtype=np.uint8))
    assert stats == []
    assert labels.max() == 0


def test_components_two_squares():
    img = np.zeros((20, 20), dtype=np.uint8)
    img[2:5, 2:5] = 1
    img[10:13, 12:15] = 1
    labels, stats = connected_components(img)
    assert len(stats) == 2
    assert all(s.area == 9 for s in stats)
    assert {(s.bbox.w, s.bbox.h) for s in stats} == {(3, 3)}
    # ties broken by (y, x): top-left square gets label 1
    assert stats[0].bbox.y == 2


def test_components_antidiagonal_connectivity():
    img = np.zeros((6, 6), dtype=np.uint8)
    for i in range(5):
        img[i, 4 - i] = 1
    _, stats8 = connected_components(img, connectivity=8)
    _, stats4 = connected_components(img, connectivity=4)
    assert len(stats8) == 1
    assert len(stats4) == 5


def test_components_centroid_inside_bbox(rng):
    img = (rng.random((30, 30)) > 0.6).astype(np.uint8)
    _, stats = connected_components(img)
    for s in stats:
        cx, cy = s.centroid
        assert s.bbox.x <= cx <= s.bbox.x2 - 1
        assert s.bbox.y <= cy <= s.bbox.y2 - 1


@pytest.mark.parametrize("connectivity", [4, 8])
def test_components_match_flood_fill_oracle(connectivity):
    rng = np.random.default_rng(1234)
    for trial in range(1000):
        img = (rng.random((8, 8)) > 0.55).astype(np.uint8)
        labels, stats = connected_components(img, connectivity)
        _, oracle_areas = flood_fill_components(img, connectivity)
        assert len(stats) == len(oracle_areas)
        assert sorted(s.area for s in stats) == sorted(oracle_areas.values())
        assert sum(s.area for s in stats) == int(img.sum())


# ---- speckle removal ----------------------------------------------------

def test_remove_speckle_keeps_word_drops_dots(rng):
    img = np.zeros((40, 60), dtype=np.uint8)
    img[10:13, 10:13] = 1  # 9 px "word"
    dots = 0
    while dots < 20:
        x, y = int(rng.integers(0, 58)), int(rng.integers(0, 38))
        if not (5 <= y <= 16 and 5 <= x <= 16) and img[y, x] == 0:
            img[y, x] = 1
            dots += 1
    out = remove_speckle(img, min_area=5)
    assert out.sum() == 9
    assert np.array_equal(out[10:13, 10:13], np.ones((3, 3), dtype=np.uint8))


def test_remove_speckle_fixed_point():
    img = np.zeros((30, 30), dtype=np.uint8)
    img[5:10, 5:10] = 1
    img[20:23, 20:23] = 1
    out = remove_speckle(img, min_area=5)
    assert np.array_equal(out, img)


def test_remove_speckle_idempotent_random():
    rng = np.random.default_rng(99)
    for _ in range(100):
        img = (rng.random((24, 24)) > 0.7).astype(np.uint8)
        once = remove_speckle(img, min_area=5)
        twice = remove_speckle(once, min_area=5)
        assert np.array_equal(once, twice)
        # cleaning only removes ink
        assert np.all(once <= img)
