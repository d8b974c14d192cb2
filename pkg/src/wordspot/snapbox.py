"""Snap loose user rectangles to tight word boxes and extract clean templates.

Both operations work on the page's cached cleaned/binary layers so that
repeated calls see identical pixel data (snapping is idempotent) and so a
template crop matches the layer the search later slides over.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .boxes import BoundingBox, union_box
from .config import EngineConfig
from .errors import EmptyTemplateError, OutOfPageError
from .imgproc import connected_components, remove_speckle
from .validation import check_box, crop


@dataclass(frozen=True)
class WordTemplate:
    """A background-free word exemplar: cleaned crop + ink mask + origin."""

    cleaned: np.ndarray = field(compare=False, repr=False)
    mask: np.ndarray = field(compare=False, repr=False)
    origin: tuple[int, BoundingBox] = (0, BoundingBox(0, 0, 1, 1))

    def __post_init__(self):
        if self.cleaned.shape != self.mask.shape:
            raise ValueError("cleaned and mask must share dimensions")
        if int(self.mask.sum()) < 1:
            raise EmptyTemplateError("template mask has no ink")

    @property
    def page_id(self) -> int:
        return self.origin[0]

    @property
    def box(self) -> BoundingBox:
        return self.origin[1]


class SnapResult(NamedTuple):
    box: BoundingBox
    snapped: bool


def _page_rect(page) -> BoundingBox:
    return BoundingBox(0, 0, page.width, page.height)


def snap_box(page, user_box, config: EngineConfig | None = None,
             pad: int | None = None) -> SnapResult:
    """Shrink/adjust a loose user box to the tight box of the marked word.

    Components found in the pad-expanded region are kept when their area
    reaches the speckle threshold and at least ``snap_inclusion_ratio`` of
    their pixels fall inside the original user box; the result is the tight
    union box of the kept components.  When nothing qualifies the (clamped)
    user box comes back with ``snapped=False``.
    """
    cfg = config or getattr(page, "config", None) or EngineConfig()
    if pad is None:
        pad = cfg.snap_pad
    user_box = check_box(user_box)
    if not user_box.intersects(_page_rect(page)):
        raise OutOfPageError(f"box {user_box} does not intersect page {page.id}")
    if user_box.area < 4:
        raise ValueError(f"user box area must be >= 4 px^2, got {user_box.area}")

    inner = user_box.clamp(page.width, page.height)
    region = inner.expand(pad).clamp(page.width, page.height)

    binary = crop(page.binary(cfg), region)
    labels, stats = connected_components(binary, cfg.connectivity)
    if not stats:
        return SnapResult(inner, False)

    # pixel counts inside the original user box, per label
    ix1, iy1 = inner.x - region.x, inner.y - region.y
    inside = labels[iy1:iy1 + inner.h, ix1:ix1 + inner.w]
    inside_counts = np.bincount(inside.ravel(), minlength=len(stats) + 1)

    kept = []
    for s in stats:
        if s.area < cfg.speckle_min_area:
            continue
        if inside_counts[s.label] / s.area >= cfg.snap_inclusion_ratio:
            kept.append(BoundingBox(s.bbox.x + region.x, s.bbox.y + region.y,
                                    s.bbox.w, s.bbox.h))
    if not kept:
        return SnapResult(inner, False)
    return SnapResult(union_box(kept), True)


def extract_template(page, box, config: EngineConfig | None = None) -> WordTemplate:
    """Extract the cleaned crop and speckle-free ink mask for a word box.

    Components that cross the box border with at least
    ``border_outside_ratio`` of their mass outside (fragments of neighboring
    words or lines) are erased from the mask.
    """
    cfg = config or getattr(page, "config", None) or EngineConfig()
    box = check_box(box)
    if not _page_rect(page).contains(box):
        raise OutOfPageError(f"box {box} not fully inside page {page.id}")
    if box.area < 4:
        raise ValueError(f"template box area must be >= 4 px^2, got {box.area}")

    cleaned = crop(page.cleaned(cfg), box).copy()
    mask = crop(page.binary(cfg), box).copy()

    page_labels, page_stats = page.components(cfg)
    local = crop(page_labels, box)
    present = np.unique(local)
    totals = {s.label: s.area for s in page_stats}
    for label in present:
        if label == 0:
            continue
        inside = int(np.count_nonzero(local == label))
        outside_frac = 1.0 - inside / totals[int(label)]
        if outside_frac >= cfg.border_outside_ratio:
            mask[local == label] = 0

    mask = remove_speckle(mask, cfg.speckle_min_area, cfg.connectivity)
    if int(mask.sum()) == 0:
        raise EmptyTemplateError(
            f"box {box} on page {page.id} contains no ink after cleaning")
    return WordTemplate(cleaned, mask, (page.id, box))
