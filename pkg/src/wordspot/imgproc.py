"""Background-noise removal, binarization and connected components.

The cleaning stage inverts the page (ink bright), extracts a stroke-scale
band with a difference of Gaussians, and gates it with a coarser text-region
band so that responses far from text mass are suppressed.  All filtering is
separable with reflect boundary handling; every operation here is a pure
function and safe to call from parallel workers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from sklearn.base import BaseEstimator, TransformerMixin

from .boxes import BoundingBox
from .config import EngineConfig
from .errors import InvalidParamsError
from .validation import as_gray_image, check_binary_image

# kernels this long and up are cheaper through the FFT path
_FFT_KERNEL_CUTOFF = 97
# text-region peaks at or below this are float noise, not signal
_GATE_PEAK_FLOOR = 1e-9


def gaussian_kernel1d(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian kernel truncated at 4 sigma."""
    if sigma <= 0:
        raise InvalidParamsError(f"sigma must be positive, got {sigma}")
    radius = int(np.ceil(4.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def _blur_bank(img: np.ndarray, sigmas) -> dict:
    """Blur one image at several sigmas sharing a single forward FFT.

    The symmetric-padded image is transformed once; each sigma costs one
    spectral multiply by the (separable) transform of its truncated kernel
    plus one inverse transform.  The result equals direct convolution with
    the same kernel up to float rounding.
    """
    from scipy import fft as sfft

    img = np.ascontiguousarray(img, dtype=np.float64)
    h, w = img.shape
    kernels = {s: gaussian_kernel1d(s) for s in dict.fromkeys(sigmas)}
    radius_max = max((len(k) - 1) // 2 for k in kernels.values())
    padded = np.pad(img, radius_max, mode="symmetric")
    shape = (sfft.next_fast_len(padded.shape[0] + 2 * radius_max),
             sfft.next_fast_len(padded.shape[1] + 2 * radius_max))
    fwd = sfft.rfft2(padded, shape)
    out = {}
    for s, k in kernels.items():
        r = (len(k) - 1) // 2
        transfer = np.outer(sfft.fft(k, shape[0]), sfft.rfft(k, shape[1]))
        full = sfft.irfft2(fwd * transfer, shape)
        off = radius_max + r
        out[s] = np.ascontiguousarray(full[off:off + h, off:off + w])
    return out


def _dog_bank(img: np.ndarray, band_pairs) -> list[np.ndarray]:
    """Difference-of-Gaussians for several (lo, hi) bands, one forward FFT.

    Each band costs a single inverse transform: the two kernel transfers
    (centered on a common origin) are subtracted in the spectral domain,
    which by linearity equals subtracting the two blurred images.
    """
    from scipy import fft as sfft

    img = np.ascontiguousarray(img, dtype=np.float64)
    h, w = img.shape
    sigmas = {s for pair in band_pairs for s in pair}
    kernels = {s: gaussian_kernel1d(s) for s in sigmas}
    radius_max = max((len(k) - 1) // 2 for k in kernels.values())
    padded = np.pad(img, radius_max, mode="symmetric")
    shape = (sfft.next_fast_len(padded.shape[0] + 2 * radius_max),
             sfft.next_fast_len(padded.shape[1] + 2 * radius_max))
    fwd = sfft.rfft2(padded, shape)

    def transfer(s):
        k = kernels[s]
        r = (len(k) - 1) // 2
        embedded = np.zeros(2 * radius_max + 1)
        embedded[radius_max - r:radius_max + r + 1] = k
        return np.outer(sfft.fft(embedded, shape[0]), sfft.rfft(embedded, shape[1]))

    out = []
    off = 2 * radius_max
    for lo, hi in band_pairs:
        band = sfft.irfft2(fwd * (transfer(lo) - transfer(hi)), shape)
        out.append(np.ascontiguousarray(band[off:off + h, off:off + w]))
    return out


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with reflect (edge-repeating) boundaries.

    Equivalent to a dense 2-D convolution with the outer product of the
    truncated kernel; large kernels run through an FFT convolution of the
    same kernel, which is identical up to float rounding.
    """
    img = np.ascontiguousarray(img, dtype=np.float64)
    k = gaussian_kernel1d(sigma)
    if len(k) < _FFT_KERNEL_CUTOFF:
        out = ndimage.correlate1d(img, k, axis=1, mode="reflect")
        out = ndimage.correlate1d(out, k, axis=0, mode="reflect")
        return out
    return _blur_bank(img, [sigma])[sigma]


def difference_of_gaussians(img: np.ndarray, sigma_lo: float, sigma_hi: float) -> np.ndarray:
    """Band-pass response: fine blur minus coarse blur."""
    if not (0 < sigma_lo < sigma_hi):
        raise InvalidParamsError(f"need 0 < sigma_lo < sigma_hi, got {sigma_lo}, {sigma_hi}")
    return gaussian_blur(img, sigma_lo) - gaussian_blur(img, sigma_hi)


@dataclass(frozen=True)
class BandpassParams:
    """Sigmas for the stroke band and the gating text-region band.

    ``gate_gain`` controls how softly the text-region band saturates: the
    positive band response is max-normalized, amplified by the gain and
    clipped to [0, 1], so regions carrying a reasonable fraction of the
    strongest text mass pass the gate fully.
    """

    sigma_stroke_lo: float = 1.0
    sigma_stroke_hi: float = 8.0
    sigma_bg_lo: float = 16.0
    sigma_bg_hi: float = 64.0
    gate_gain: float = 3.0

    def __post_init__(self):
        sig = (self.sigma_stroke_lo, self.sigma_stroke_hi, self.sigma_bg_lo, self.sigma_bg_hi)
        if any(s <= 0 for s in sig) or not (sig[0] < sig[1] < sig[2] < sig[3]):
            raise InvalidParamsError(f"sigma ordering violated: {sig}")
        if self.gate_gain < 1.0:
            raise InvalidParamsError(f"gate gain must be >= 1, got {self.gate_gain}")

    @classmethod
    def from_config(cls, config: EngineConfig) -> "BandpassParams":
        return cls(
            config.sigma_stroke_lo, config.sigma_stroke_hi,
            config.sigma_bg_lo, config.sigma_bg_hi, config.gate_gain,
        )


def bandpass_clean(img, params: BandpassParams | None = None) -> np.ndarray:
    """Two-band background removal; returns an ink-bright response in [0, 1].

    The page is inverted so ink is bright, then the positive stroke-band
    response is multiplied by the softly-thresholded positive text-region
    response.  A constant input maps to an all-zero output, and adding a
    constant offset to the input does not change the result.
    """
    img = as_gray_image(img)
    p = params or BandpassParams()
    inv = 1.0 - img
    bands = [(p.sigma_stroke_lo, p.sigma_stroke_hi), (p.sigma_bg_lo, p.sigma_bg_hi)]
    if len(gaussian_kernel1d(p.sigma_bg_hi)) >= _FFT_KERNEL_CUTOFF:
        stroke, region = _dog_bank(inv, bands)
    else:
        blurs = {s: gaussian_blur(inv, s)
                 for s in dict.fromkeys(s for pair in bands for s in pair)}
        stroke = blurs[p.sigma_stroke_lo] - blurs[p.sigma_stroke_hi]
        region = blurs[p.sigma_bg_lo] - blurs[p.sigma_bg_hi]
    region = np.maximum(region, 0.0)
    peak = region.max()
    if peak > _GATE_PEAK_FLOOR:
        gate = np.clip(p.gate_gain * region / peak, 0.0, 1.0)
    else:
        # no text mass at all (flat page up to float noise): suppress everything
        gate = np.zeros_like(region)
    return np.clip(np.maximum(stroke, 0.0) * gate, 0.0, 1.0)


@dataclass(frozen=True)
class OtsuResult:
    binary: np.ndarray
    threshold: float
    degenerate: bool

    def __iter__(self):
        # allows "binary, threshold = binarize_otsu(img)"
        return iter((self.binary, self.threshold))


def binarize_otsu(img) -> OtsuResult:
    """Global threshold maximizing inter-class variance over 256 bins.

    Operates on cleaned images where ink is bright: pixels above the
    threshold become ink.  A single-mode image is flagged degenerate and
    maps to all background.
    """
    img = as_gray_image(img)
    q = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
    hist = np.bincount(q.ravel(), minlength=256).astype(np.float64)
    total = hist.sum()

    bins = np.arange(256, dtype=np.float64)
    w0 = np.cumsum(hist)
    m0 = np.cumsum(hist * bins)
    w1 = total - w0
    mu_total = m0[-1]
    # inter-class variance for each candidate threshold t (background = bins <= t)
    with np.errstate(divide="ignore", invalid="ignore"):
        mean0 = m0 / w0
        mean1 = (mu_total - m0) / w1
        between = w0 * w1 * (mean0 - mean1) ** 2
    between = np.where((w0 > 0) & (w1 > 0), between, -1.0)

    best = int(np.argmax(between))
    if between[best] <= 0:
        # single occupied bin: nothing to separate
        occupied = int(np.flatnonzero(hist)[0]) if total else 0
        return OtsuResult(np.zeros_like(q), occupied / 255.0, True)
    binary = (q > best).astype(np.uint8)
    return OtsuResult(binary, best / 255.0, False)


@dataclass(frozen=True)
class ComponentStats:
    label: int
    area: int
    bbox: BoundingBox
    centroid: tuple[float, float]


_STRUCTURE_4 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
_STRUCTURE_8 = np.ones((3, 3), dtype=bool)


def connected_components(img, connectivity: int = 8) -> tuple[np.ndarray, list[ComponentStats]]:
    """Label maximal ink regions; stats sorted by descending area.

    Ties break by (bbox.y, bbox.x); the label map is renumbered so that
    stats[i].label == i + 1.
    """
    img = check_binary_image(img)
    if connectivity not in (4, 8):
        raise InvalidParamsError(f"connectivity must be 4 or 8, got {connectivity}")
    structure = _STRUCTURE_8 if connectivity == 8 else _STRUCTURE_4
    labels, count = ndimage.label(img, structure=structure)
    if count == 0:
        return labels.astype(np.int32), []

    flat = labels.ravel()
    areas = np.bincount(flat, minlength=count + 1)
    ys, xs = np.nonzero(labels)
    lab = labels[ys, xs]
    sum_y = np.bincount(lab, weights=ys, minlength=count + 1)
    sum_x = np.bincount(lab, weights=xs, minlength=count + 1)
    min_y = np.full(count + 1, np.iinfo(np.int64).max)
    min_x = np.full(count + 1, np.iinfo(np.int64).max)
    max_y = np.zeros(count + 1, dtype=np.int64)
    max_x = np.zeros(count + 1, dtype=np.int64)
    np.minimum.at(min_y, lab, ys)
    np.minimum.at(min_x, lab, xs)
    np.maximum.at(max_y, lab, ys)
    np.maximum.at(max_x, lab, xs)

    entries = []
    for label in range(1, count + 1):
        area = int(areas[label])
        bbox = BoundingBox(
            int(min_x[label]), int(min_y[label]),
            int(max_x[label] - min_x[label] + 1), int(max_y[label] - min_y[label] + 1),
        )
        centroid = (float(sum_x[label] / area), float(sum_y[label] / area))
        entries.append((label, area, bbox, centroid))
    entries.sort(key=lambda e: (-e[1], e[2].y, e[2].x))

    lut = np.zeros(count + 1, dtype=np.int32)
    stats = []
    for rank, (old_label, area, bbox, centroid) in enumerate(entries, start=1):
        lut[old_label] = rank
        stats.append(ComponentStats(rank, area, bbox, centroid))
    return lut[labels], stats


def remove_speckle(img, min_area: int = 5, connectivity: int = 8,
                   labels: np.ndarray | None = None,
                   stats: list[ComponentStats] | None = None) -> np.ndarray:
    """Erase components smaller than ``min_area`` pixels; idempotent.

    ``labels``/``stats`` from a prior connected_components call may be passed
    to avoid relabeling.
    """
    img = check_binary_image(img)
    if labels is None or stats is None:
        labels, stats = connected_components(img, connectivity)
    out = img.copy()
    for s in stats:
        if s.area < min_area:
            out[labels == s.label] = 0
    return out


class BandpassCleaner(TransformerMixin, BaseEstimator):
    """Transformer wrapping :func:`bandpass_clean` for pipeline use."""

    def __init__(self, sigma_stroke_lo=1.0, sigma_stroke_hi=8.0,
                 sigma_bg_lo=16.0, sigma_bg_hi=64.0):
        self.sigma_stroke_lo = sigma_stroke_lo
        self.sigma_stroke_hi = sigma_stroke_hi
        self.sigma_bg_lo = sigma_bg_lo
        self.sigma_bg_hi = sigma_bg_hi

    def _params(self):
        return BandpassParams(self.sigma_stroke_lo, self.sigma_stroke_hi,
                              self.sigma_bg_lo, self.sigma_bg_hi)

    def fit(self, X, y=None):
        self._params()  # validate ordering
        return self

    def transform(self, X):
        if isinstance(X, np.ndarray) and X.ndim == 2:
            return bandpass_clean(X, self._params())
        return [bandpass_clean(img, self._params()) for img in X]


class OtsuBinarizer(TransformerMixin, BaseEstimator):
    """Transformer wrapping :func:`binarize_otsu`.

    After transform, ``threshold_`` and ``degenerate_`` describe the last
    image processed.
    """

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        res = binarize_otsu(X)
        self.threshold_ = res.threshold
        self.degenerate_ = res.degenerate
        return res.binary
