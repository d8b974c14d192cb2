"""Segmentation-free query-by-example spotting.

Scores every sliding-window location of a cleaned page against a set of
word exemplars with masked zero-normalized cross-correlation, combines
exemplars and scales by max, penalizes similarity to rejected exemplars,
and emits ranked non-overlapping candidates.

The sliding scorer runs through FFT correlations that share one forward
transform of the page per search; the result is identical (to float
rounding) to evaluating the masked-NCC formula independently at every
location, which is what the test oracle does.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft
from scipy import ndimage
from sklearn.base import BaseEstimator

from .boxes import BoundingBox, iou
from .config import EngineConfig
from .errors import DimensionMismatchError
from .snapbox import WordTemplate

# variance sums below this count as flat (no signal to correlate)
_VAR_EPS = 1e-9
# combined-map sentinel for locations no template placement covers
UNCOVERED = -2.0


@dataclass(frozen=True)
class Candidate:
    page_id: int
    box: BoundingBox
    score: float
    scale: float = 1.0

    def to_dict(self) -> dict:
        return {"page": self.page_id, "box": self.box.to_dict(),
                "score": self.score, "scale": self.scale}


@dataclass
class QueryModel:
    """Exemplar sets plus search parameters for one query word."""

    query_id: str
    positives: list[WordTemplate]
    negatives: list[WordTemplate] = field(default_factory=list)
    scales: tuple = (0.9, 1.0, 1.1)
    threshold: float = 0.55
    negative_weight: float = 0.5

    def __post_init__(self):
        if not self.positives:
            raise ValueError("query model needs at least one positive exemplar")
        scales = tuple(self.scales)
        if list(scales) != sorted(scales) or any(not (0.5 < s < 2.0) for s in scales):
            raise ValueError(f"scales must be ascending within (0.5, 2.0): {scales}")
        if not (0.3 <= self.threshold <= 0.9):
            raise ValueError(f"threshold outside [0.3, 0.9]: {self.threshold}")
        self.scales = scales

    @property
    def page_id(self) -> int:
        """Page the query was marked on (first positive's origin)."""
        return self.positives[0].page_id


def support_region(mask: np.ndarray, dilate: int = 2) -> np.ndarray:
    """Ink neighborhood over which NCC statistics are taken."""
    sup = mask.astype(bool)
    if dilate > 0:
        sup = ndimage.binary_dilation(sup, structure=np.ones((3, 3), bool),
                                      iterations=dilate)
    return sup


def masked_ncc(template: np.ndarray, window: np.ndarray, mask: np.ndarray,
               support_dilate: int = 2, min_support: int = 16) -> float:
    """Zero-normalized cross-correlation over the template's support region.

    Returns 0 when either side has (numerically) zero variance on the
    support.  Brightness offsets on either side do not change the result.
    """
    template = np.asarray(template, dtype=np.float64)
    window = np.asarray(window, dtype=np.float64)
    if template.shape != window.shape:
        raise DimensionMismatchError(
            f"template {template.shape} vs window {window.shape}")
    if mask.shape != template.shape:
        raise DimensionMismatchError(f"mask {mask.shape} vs template {template.shape}")
    sup = support_region(mask, support_dilate)
    n = int(sup.sum())
    if n < min_support:
        raise ValueError(f"support region has {n} px, need >= {min_support}")
    tz = np.where(sup, template - template[sup].mean(), 0.0)
    wz = np.where(sup, window - window[sup].mean(), 0.0)
    vt = float((tz * tz).sum())
    vw = float((wz * wz).sum())
    if vt < _VAR_EPS or vw < _VAR_EPS:
        return 0.0
    return float(np.clip((tz * wz).sum() / np.sqrt(vt * vw), -1.0, 1.0))


class PageFFT:
    """Forward transforms of a page (and its square), shared across kernels."""

    def __init__(self, page: np.ndarray, max_kernel_shape: tuple[int, int]):
        self.page_shape = page.shape
        h, w = page.shape
        kh, kw = max_kernel_shape
        self.shape = (sfft.next_fast_len(h + kh - 1), sfft.next_fast_len(w + kw - 1))
        self.fft = sfft.rfft2(page, self.shape)
        self.fft_sq = sfft.rfft2(page * page, self.shape)

    def kernel_fft(self, kernel: np.ndarray) -> np.ndarray:
        return sfft.rfft2(kernel[::-1, ::-1], self.shape)

    def apply(self, kf: np.ndarray, kernel_shape: tuple[int, int],
              squared: bool = False) -> np.ndarray:
        """Valid-mode correlation given a precomputed kernel transform."""
        kh, kw = kernel_shape
        h, w = self.page_shape
        full = sfft.irfft2((self.fft_sq if squared else self.fft) * kf, self.shape)
        return full[kh - 1:h, kw - 1:w]

    def correlate(self, kernel: np.ndarray, squared: bool = False) -> np.ndarray:
        """Valid-mode correlation of the page (or page^2) with ``kernel``."""
        return self.apply(self.kernel_fft(kernel), kernel.shape, squared)


class _Variant:
    """One (exemplar, scale) pairing with precomputed match statistics."""

    __slots__ = ("template", "mask", "scale", "support", "n", "tz", "vt", "_kf")

    def __init__(self, template, mask, scale, dilate):
        self.template = np.asarray(template, dtype=np.float64)
        self.mask = mask
        self.scale = scale
        self.support = support_region(mask, dilate)
        self.n = int(self.support.sum())
        if self.n:
            self.tz = np.where(self.support,
                               self.template - self.template[self.support].mean(), 0.0)
        else:
            self.tz = np.zeros_like(self.template)
        self.vt = float((self.tz * self.tz).sum())
        self._kf = {}  # PageFFT shape -> (tz transform, support transform)

    @property
    def shape(self):
        return self.template.shape

    def kernels(self, pfft: PageFFT):
        kf = self._kf.get(pfft.shape)
        if kf is None:
            kf = (pfft.kernel_fft(self.tz),
                  pfft.kernel_fft(self.support.astype(np.float64)))
            self._kf[pfft.shape] = kf
        return kf


def _variant_map(variant: _Variant, pfft: PageFFT) -> np.ndarray:
    """Masked NCC of one variant at every valid location (in-place math)."""
    if variant.vt < _VAR_EPS:
        h, w = pfft.page_shape
        th, tw = variant.shape
        return np.zeros((h - th + 1, w - tw + 1))
    k_tz, k_sup = variant.kernels(pfft)
    num = pfft.apply(k_tz, variant.shape)
    sw = pfft.apply(k_sup, variant.shape)
    sw2 = pfft.apply(k_sup, variant.shape, squared=True)
    # vw = windowed variance sum; reuse buffers
    np.multiply(sw, sw, out=sw)
    sw /= variant.n
    np.subtract(sw2, sw, out=sw2)
    np.maximum(sw2, 0.0, out=sw2)
    flat = sw2 < _VAR_EPS
    sw2 *= variant.vt
    np.sqrt(sw2, out=sw2)
    with np.errstate(divide="ignore", invalid="ignore"):
        np.divide(num, sw2, out=num)
    num[flat] = 0.0
    return np.clip(num, -1.0, 1.0, out=num)


def ncc_score_map(page: np.ndarray, template: np.ndarray, mask: np.ndarray,
                  support_dilate: int = 2, min_support: int = 16,
                  page_fft: PageFFT | None = None) -> np.ndarray:
    """Masked NCC of the template against every valid window of the page.

    Output index (i, j) corresponds to the window whose top-left corner is
    (x=j, y=i); equals :func:`masked_ncc` evaluated at each location.
    """
    page = np.asarray(page, dtype=np.float64)
    template = np.asarray(template, dtype=np.float64)
    if template.shape[0] > page.shape[0] or template.shape[1] > page.shape[1]:
        raise DimensionMismatchError(
            f"template {template.shape} larger than page {page.shape}")
    variant = _Variant(template, mask, 1.0, support_dilate)
    if variant.n < min_support:
        raise ValueError(f"support region has {variant.n} px, need >= {min_support}")
    if page_fft is None:
        page_fft = PageFFT(page, template.shape)
    return _variant_map(variant, page_fft)


def scale_template(tpl: WordTemplate, scale: float) -> tuple[np.ndarray, np.ndarray]:
    """Bilinear rescale of the cleaned crop and its ink mask."""
    if scale == 1.0:
        return tpl.cleaned, tpl.mask
    cleaned = ndimage.zoom(tpl.cleaned, scale, order=1, mode="nearest", prefilter=False)
    maskf = ndimage.zoom(tpl.mask.astype(np.float64), scale, order=1,
                         mode="nearest", prefilter=False)
    return np.clip(cleaned, 0.0, 1.0), (maskf >= 0.5).astype(np.uint8)


def _accumulate(best: np.ndarray, meta: np.ndarray, score_map: np.ndarray,
                variant_idx: int, kh: int, kw: int):
    # place each window's score at its (rounded) center on the page grid
    oy, ox = (kh - 1) // 2, (kw - 1) // 2
    view = best[oy:oy + score_map.shape[0], ox:ox + score_map.shape[1]]
    mview = meta[oy:oy + score_map.shape[0], ox:ox + score_map.shape[1]]
    upd = score_map > view
    view[upd] = score_map[upd]
    mview[upd] = variant_idx


def _model_variants(model: QueryModel, cfg: EngineConfig):
    """(positive, negative) variant lists, built once per model instance."""
    key = (cfg.support_dilate, cfg.min_support, model.scales,
           len(model.positives), len(model.negatives))
    cached = getattr(model, "_variant_cache", None)
    if cached is not None and cached[0] == key:
        return cached[1], cached[2]

    def build(templates):
        out = []
        for tpl in templates:
            for s in model.scales:
                tc, tm = scale_template(tpl, s)
                v = _Variant(tc, tm, s, cfg.support_dilate)
                if v.n >= cfg.min_support:
                    out.append(v)
        return out

    pos, neg = build(model.positives), build(model.negatives)
    model._variant_cache = (key, pos, neg)
    return pos, neg


def _page_fft_for(page, cleaned: np.ndarray, kernel_shape) -> PageFFT:
    """Page transforms, cached on the page (newest entry only) when allowed."""
    cache = getattr(page, "_cache", None)
    lock = getattr(page, "_lock", None)
    if cache is None or lock is None:
        return PageFFT(cleaned, kernel_shape)
    want_shape = (sfft.next_fast_len(cleaned.shape[0] + kernel_shape[0] - 1),
                  sfft.next_fast_len(cleaned.shape[1] + kernel_shape[1] - 1))
    with lock:
        entry = cache.get("pagefft")
        if entry is not None and entry[0] is cleaned and entry[1] == want_shape:
            return entry[2]
    pfft = PageFFT(cleaned, kernel_shape)
    with lock:
        cache["pagefft"] = (cleaned, pfft.shape, pfft)
    return pfft


def combined_score_map(model: QueryModel, cleaned: np.ndarray,
                       config: EngineConfig | None = None, page=None):
    """Per-center-pixel best score and the variant that produced it.

    Returns (score, meta, variants) where score is page-shaped with
    UNCOVERED where no placement reaches, and meta indexes into the
    returned positive-variant list.
    """
    cfg = config or EngineConfig()
    h, w = cleaned.shape
    pos_all, neg_all = _model_variants(model, cfg)
    pos = [v for v in pos_all if v.shape[0] <= h and v.shape[1] <= w]
    neg = [v for v in neg_all if v.shape[0] <= h and v.shape[1] <= w]
    if not pos:
        return None, None, []

    kh_max = max(v.shape[0] for v in pos + neg)
    kw_max = max(v.shape[1] for v in pos + neg)
    if page is not None and cfg.cache_page_fft:
        pfft = _page_fft_for(page, cleaned, (kh_max, kw_max))
    else:
        pfft = PageFFT(cleaned, (kh_max, kw_max))

    best = np.full((h, w), UNCOVERED)
    meta = np.full((h, w), -1, dtype=np.int32)
    for idx, v in enumerate(pos):
        _accumulate(best, meta, _variant_map(v, pfft), idx, v.shape[0], v.shape[1])

    if neg and model.negative_weight > 0:
        nbest = np.full((h, w), UNCOVERED)
        nmeta = np.full((h, w), -1, dtype=np.int32)
        for idx, v in enumerate(neg):
            _accumulate(nbest, nmeta, _variant_map(v, pfft), idx, v.shape[0], v.shape[1])
        covered = (best > UNCOVERED) & (nbest > UNCOVERED)
        best = np.where(covered, best - model.negative_weight * nbest, best)
    return best, meta, pos


def score_page(model: QueryModel, page, config: EngineConfig | None = None,
               stride: int | None = None) -> list[Candidate]:
    """Ranked, non-overlapping candidates for one page.

    Local maxima of the combined score map are detected on a ``stride``
    grid, refined at stride 1 in a window around each, thresholded, run
    through NMS and sorted by descending score with (page, y, x) ties.
    """
    cfg = config or getattr(page, "config", None) or EngineConfig()
    if stride is None:
        stride = cfg.stride
    is_page = callable(getattr(page, "cleaned", None))
    cleaned = page.cleaned(cfg) if is_page else np.asarray(page)
    score, meta, variants = combined_score_map(model, cleaned, cfg,
                                               page=page if is_page else None)
    if score is None:
        return []
    h, w = score.shape

    # coarse grid: max over stride x stride blocks, so no super-threshold
    # peak is ever lost between samples (NCC surfaces are pixel-sharp)
    ph, pw = -(-h // stride), -(-w // stride)
    padded = np.full((ph * stride, pw * stride), UNCOVERED)
    padded[:h, :w] = score
    blocks = padded.reshape(ph, stride, pw, stride)
    sub = blocks.max(axis=(1, 3))
    # local maxima on the coarse grid (3x3 neighborhood), at or above threshold
    neigh = ndimage.maximum_filter(sub, size=3, mode="constant", cval=UNCOVERED)
    peak = (sub >= model.threshold) & (sub > UNCOVERED) & (sub >= neigh)
    ys, xs = np.nonzero(peak)

    seen = {}
    for sy, sx in zip(ys.tolist(), xs.tolist()):
        # block argmax, then a stride-1 refinement window around it
        blk = blocks[sy, :, sx, :]
        k = int(np.argmax(blk))
        cy, cx = sy * stride + k // stride, sx * stride + k % stride
        y0, y1 = max(0, cy - stride), min(h, cy + stride + 1)
        x0, x1 = max(0, cx - stride), min(w, cx + stride + 1)
        win = score[y0:y1, x0:x1]
        k = int(np.argmax(win))
        ry, rx = y0 + k // win.shape[1], x0 + k % win.shape[1]
        if score[ry, rx] < model.threshold:
            continue
        seen[(ry, rx)] = float(score[ry, rx])

    page_id = getattr(page, "id", model.page_id)
    cands = []
    min_area = None
    for (ry, rx), val in seen.items():
        v = variants[meta[ry, rx]]
        th_, tw_ = v.shape
        box = BoundingBox(rx - (tw_ - 1) // 2, ry - (th_ - 1) // 2, tw_, th_)
        cands.append(Candidate(page_id, box, min(1.0, max(-1.0, val)), v.scale))
        area = th_ * tw_
        min_area = area if min_area is None else min(min_area, area)

    cands = nms(cands, cfg.nms_iou_max)
    if min_area:
        cands = cands[: max(1, (h * w) // min_area)]
    return cands


def nms(cands: list[Candidate], iou_max: float = 0.3) -> list[Candidate]:
    """Greedy suppression: keep a candidate iff IoU with every kept one
    stays at or below ``iou_max``.  Idempotent."""
    ordered = sorted(cands, key=lambda c: (-c.score, c.page_id, c.box.y, c.box.x))
    kept: list[Candidate] = []
    for c in ordered:
        if all(c.page_id != k.page_id or iou(c.box, k.box) <= iou_max for k in kept):
            kept.append(c)
    return kept


class WordSpotter(BaseEstimator):
    """Estimator facade: fit on word exemplars, predict candidate boxes.

    ``fit`` replaces the exemplar sets; ``partial_fit`` accrues more, with
    ``y`` labels +1 (positive) or -1 (rejected exemplar).  ``predict`` runs
    :func:`score_page` on a page (or raw cleaned array).  Pass the engine
    ``config`` whose cleaning produced the exemplars so pages are cleaned
    the same way.
    """

    def __init__(self, scales=(0.9, 1.0, 1.1), threshold=0.55,
                 negative_weight=0.5, stride=2, nms_iou_max=0.3, config=None):
        self.scales = scales
        self.threshold = threshold
        self.negative_weight = negative_weight
        self.stride = stride
        self.nms_iou_max = nms_iou_max
        self.config = config

    def _as_list(self, X):
        return [X] if isinstance(X, WordTemplate) else list(X)

    def fit(self, X, y=None):
        templates = self._as_list(X)
        labels = [1] * len(templates) if y is None else list(y)
        self.positives_ = [t for t, lab in zip(templates, labels) if lab > 0]
        self.negatives_ = [t for t, lab in zip(templates, labels) if lab <= 0]
        self.model_()  # validate
        return self

    def partial_fit(self, X, y=None):
        if not hasattr(self, "positives_"):
            return self.fit(X, y)
        templates = self._as_list(X)
        labels = [1] * len(templates) if y is None else list(y)
        for t, lab in zip(templates, labels):
            (self.positives_ if lab > 0 else self.negatives_).append(t)
        return self

    def model_(self, query_id: str = "query") -> QueryModel:
        return QueryModel(query_id, list(self.positives_), list(self.negatives_),
                          tuple(self.scales), self.threshold, self.negative_weight)

    def _config(self) -> EngineConfig:
        from dataclasses import replace

        cfg = replace(self.config) if self.config is not None else EngineConfig()
        cfg.stride = self.stride
        cfg.nms_iou_max = self.nms_iou_max
        return cfg

    def predict(self, page) -> list[Candidate]:
        return score_page(self.model_(), page, self._config(), self.stride)

    def decision_function(self, page) -> np.ndarray:
        cleaned = page.cleaned(self._config()) if callable(getattr(page, "cleaned", None)) \
            else np.asarray(page)
        score, _, _ = combined_score_map(self.model_(), cleaned, self._config())
        return score
