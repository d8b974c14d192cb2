"""Engine configuration: every tunable knob, all in pixels or ratios.

No DPI assumption is made anywhere; defaults suit ~2-4 px stroke widths
typical of 300 DPI manuscript scans.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

from .errors import InvalidParamsError


@dataclass
class EngineConfig:
    # band-pass cleaning: stroke band gated by a text-region band
    sigma_stroke_lo: float = 1.0
    sigma_stroke_hi: float = 8.0
    sigma_bg_lo: float = 16.0
    sigma_bg_hi: float = 64.0
    gate_gain: float = 3.0

    # binarization / components
    speckle_min_area: int = 5
    connectivity: int = 8

    # box snapping
    snap_pad: int = 8
    snap_inclusion_ratio: float = 0.6
    # template extraction: border components mostly outside the box are erased
    border_outside_ratio: float = 0.4

    # spotting
    scales: tuple = (0.9, 1.0, 1.1)
    default_threshold: float = 0.55
    threshold_min: float = 0.3
    threshold_max: float = 0.9
    negative_weight: float = 0.5
    stride: int = 2
    nms_iou_max: float = 0.3
    support_dilate: int = 2
    min_support: int = 16

    # feedback
    blacklist_iou: float = 0.5
    confirm_margin: float = 0.05

    # transcription assembly
    line_overlap_ratio: float = 0.5

    # search pool size; None means one worker per available CPU
    workers: int | None = None
    # keep each page's forward FFT alongside its cleaned layer (speeds up
    # repeated searches; costs ~16 bytes/pixel per page, disable for huge
    # corpora on tight memory)
    cache_page_fft: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self):
        sig = (self.sigma_stroke_lo, self.sigma_stroke_hi, self.sigma_bg_lo, self.sigma_bg_hi)
        if any(s <= 0 for s in sig):
            raise InvalidParamsError(f"sigmas must be positive, got {sig}")
        if not (sig[0] < sig[1] < sig[2] < sig[3]):
            raise InvalidParamsError(f"sigma ordering violated: {sig}")
        if self.connectivity not in (4, 8):
            raise InvalidParamsError(f"connectivity must be 4 or 8, got {self.connectivity}")
        scales = tuple(self.scales)
        if list(scales) != sorted(scales) or any(not (0.5 < s < 2.0) for s in scales):
            raise InvalidParamsError(f"scales must be ascending within (0.5, 2.0): {scales}")
        if not (0.3 <= self.default_threshold <= 0.9):
            raise InvalidParamsError(f"default threshold outside [0.3, 0.9]: {self.default_threshold}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["scales"] = list(self.scales)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EngineConfig":
        d = dict(d)
        if "scales" in d:
            d["scales"] = tuple(d["scales"])
        return cls(**d)
