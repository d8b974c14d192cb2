"""Shared fixtures: synthetic handwriting-like pages and corpora on disk."""

from __future__ import annotations

import numpy as np
import pytest
from PIL import Image, ImageDraw

from wordspot.config import EngineConfig
from wordspot.corpus import Page, Project


def render_word(rng: np.random.Generator, width: int = 90, height: int = 34,
                thickness: int = 2) -> np.ndarray:
    """Random cursive-ish stroke pattern; returns a (height, width) ink mask."""
    im = Image.new("L", (width, height), 0)
    draw = ImageDraw.Draw(im)
    margin = thickness + 1
    n_pts = max(4, width // 12)
    xs = np.linspace(margin, width - margin, n_pts)
    body_lo, body_hi = height * 0.35, height * 0.8
    ys = rng.uniform(body_lo, body_hi, size=n_pts)
    draw.line(list(zip(xs.tolist(), ys.tolist())), fill=255, width=thickness)
    # a couple of ascenders / descenders for vertical structure
    for _ in range(int(rng.integers(1, 3))):
        ax = float(rng.uniform(margin, width - margin))
        top = float(rng.uniform(margin, height * 0.25))
        bottom = float(rng.uniform(body_lo, body_hi))
        draw.line([(ax, top), (ax, bottom)], fill=255, width=thickness)
    return (np.asarray(im) > 0).astype(np.uint8)


def make_page(width: int, height: int, placements=(), ink: float = 0.15,
              background: float = 0.88, ramp: float = 0.0, noise: float = 0.0,
              rng: np.random.Generator | None = None) -> np.ndarray:
    """Float page: light background, optional horizontal ramp and noise,
    word masks stamped at (x, y) as dark ink."""
    img = np.full((height, width), background, dtype=np.float64)
    if ramp:
        img += ramp * (np.arange(width, dtype=np.float64) / max(width - 1, 1) - 0.5)
    for mask, x, y in placements:
        h, w = mask.shape
        region = img[y:y + h, x:x + w]
        region[mask > 0] = ink
    if noise and rng is not None:
        img = img + rng.normal(0.0, noise, size=img.shape)
    return np.clip(img, 0.0, 1.0)


def write_corpus(directory, pages: list[np.ndarray], prefix: str = "page") -> list[str]:
    """Save float pages as 8-bit PNGs named for lexicographic ordering."""
    names = []
    directory.mkdir(parents=True, exist_ok=True)
    for i, img in enumerate(pages):
        name = f"{prefix}{i:03d}.png"
        arr = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
        Image.fromarray(arr).save(directory / name)
        names.append(name)
    return names


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def small_config():
    """Band sigmas shrunk so small test pages keep useful spatial context."""
    return EngineConfig(sigma_stroke_lo=0.8, sigma_stroke_hi=3.0,
                        sigma_bg_lo=6.0, sigma_bg_hi=24.0)


def page_of(img: np.ndarray, page_id: int = 0, name: str = "") -> Page:
    return Page.from_array(page_id, img, name or f"mem{page_id}")


def project_of(images: list[np.ndarray], config: EngineConfig | None = None) -> Project:
    pages = [page_of(img, i, f"page{i:03d}.png") for i, img in enumerate(images)]
    return Project(pages=pages, config=config)
