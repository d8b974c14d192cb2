"""Corpus loading and project persistence.

A project is one JSON document referencing page images by relative path;
pixels are never embedded.  Derived layers (cleaned, binary, component
labels) are cached per page and recomputed on demand after a reload.
"""

from __future__ import annotations

import json
import os
import threading
import uuid
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .config import EngineConfig
from .errors import (EmptyCorpusError, IoFailureError, PageTooSmallError,
                     SchemaMismatchError, UnreadableImageError)
from .feedback import FeedbackEvent, Match, QueryWord
from .imgproc import BandpassParams, bandpass_clean, binarize_otsu, connected_components

SUPPORTED_EXTENSIONS = {".png", ".jpg", ".jpeg", ".tif", ".tiff"}
FORMAT_TAG = "wordspot-project/1"
MIN_PAGE_SIDE = 32

# ITU-R 601 luminance weights, matching PIL's RGB->L conversion
GRAY_WEIGHTS = (0.299, 0.587, 0.114)


class Page:
    """One scanned page: 8-bit luminance plus cached derived layers."""

    def __init__(self, page_id: int, gray: np.ndarray, source_name: str = "",
                 source_path: str | None = None):
        gray = np.asarray(gray)
        if gray.ndim != 2 or gray.dtype != np.uint8:
            raise ValueError("page gray layer must be a 2-D uint8 array")
        if gray.shape[0] < MIN_PAGE_SIDE or gray.shape[1] < MIN_PAGE_SIDE:
            raise PageTooSmallError(
                f"page {source_name or page_id}: {gray.shape[1]}x{gray.shape[0]} "
                f"is below the {MIN_PAGE_SIDE} px minimum")
        self.id = int(page_id)
        self.gray = gray
        self.source_name = source_name
        self.source_path = source_path
        self._lock = threading.Lock()
        self._cache: dict = {}

    @property
    def height(self) -> int:
        return self.gray.shape[0]

    @property
    def width(self) -> int:
        return self.gray.shape[1]

    @classmethod
    def from_array(cls, page_id: int, img, source_name: str = "") -> "Page":
        """Build a page from a float [0,1] or uint8 array (tests, synthetic data)."""
        a = np.asarray(img)
        if a.dtype != np.uint8:
            a = np.clip(np.round(a * 255.0), 0, 255).astype(np.uint8)
        return cls(page_id, a, source_name)

    def gray_float(self) -> np.ndarray:
        with self._lock:
            if "gray_float" not in self._cache:
                self._cache["gray_float"] = self.gray.astype(np.float64) / 255.0
            return self._cache["gray_float"]

    def cleaned(self, config: EngineConfig | None = None) -> np.ndarray:
        """Band-pass cleaned layer (cached per sigma set)."""
        cfg = config or EngineConfig()
        params = BandpassParams.from_config(cfg)
        key = ("cleaned", params)
        with self._lock:
            if key not in self._cache:
                self._cache[key] = bandpass_clean(self.gray_float_unlocked(), params)
            return self._cache[key]

    def gray_float_unlocked(self) -> np.ndarray:
        if "gray_float" not in self._cache:
            self._cache["gray_float"] = self.gray.astype(np.float64) / 255.0
        return self._cache["gray_float"]

    def binary(self, config: EngineConfig | None = None) -> np.ndarray:
        """Otsu binarization of the cleaned layer (ink = 1)."""
        cfg = config or EngineConfig()
        key = ("binary", BandpassParams.from_config(cfg))
        cleaned = self.cleaned(cfg)
        with self._lock:
            if key not in self._cache:
                res = binarize_otsu(cleaned)
                self._cache[key] = res.binary
                self._cache[key + ("threshold",)] = (res.threshold, res.degenerate)
            return self._cache[key]

    def components(self, config: EngineConfig | None = None):
        """(label map, stats) of the page-level binary layer."""
        cfg = config or EngineConfig()
        key = ("components", BandpassParams.from_config(cfg), cfg.connectivity)
        binary = self.binary(cfg)
        with self._lock:
            if key not in self._cache:
                self._cache[key] = connected_components(binary, cfg.connectivity)
            return self._cache[key]

    def __eq__(self, other):
        return (isinstance(other, Page) and self.id == other.id
                and self.source_name == other.source_name
                and np.array_equal(self.gray, other.gray))

    def __repr__(self):
        return f"Page(id={self.id}, {self.width}x{self.height}, {self.source_name!r})"


class Project:
    """Corpus + queries + matches + feedback log: the persistent unit."""

    def __init__(self, project_id: str | None = None, pages: list[Page] | None = None,
                 queries: list[QueryWord] | None = None, matches: list[Match] | None = None,
                 feedback_log: list[FeedbackEvent] | None = None,
                 config: EngineConfig | None = None, version: int = 0):
        self.id = project_id or uuid.uuid4().hex
        self.pages = pages or []
        self.queries = queries or []
        self.matches = matches or []
        self.feedback_log = feedback_log or []
        self.config = config or EngineConfig()
        self.version = version
        self.load_report: list[str] = []
        self._page_index = {p.id: p for p in self.pages}

    def page(self, page_id: int) -> Page | None:
        return self._page_index.get(page_id)

    def query(self, query_id: str) -> QueryWord | None:
        for q in self.queries:
            if q.query_id == query_id:
                return q
        return None

    def match(self, match_id: str) -> Match | None:
        for m in self.matches:
            if m.match_id == match_id:
                return m
        return None

    def bump(self):
        self.version += 1

    def add_query(self, q: QueryWord):
        if self.query(q.query_id) is not None:
            raise ValueError(f"duplicate query id {q.query_id}")
        self.queries.append(q)
        self.bump()

    def next_query_id(self) -> str:
        return f"q{len(self.queries)}"

    def replay_base(self) -> "Project":
        """Copy sharing pages/queries/config, with empty match state."""
        return Project(self.id, self.pages, list(self.queries), [], [],
                       self.config, version=0)

    def __eq__(self, other):
        return (isinstance(other, Project)
                and self.id == other.id and self.version == other.version
                and self.pages == other.pages and self.queries == other.queries
                and self.matches == other.matches
                and self.feedback_log == other.feedback_log
                and self.config == other.config)


def _load_gray(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            if im.mode != "L":
                im = im.convert("L")
            return np.asarray(im, dtype=np.uint8)
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise UnreadableImageError(path, str(exc)) from exc


def load_corpus(directory, config: EngineConfig | None = None) -> Project:
    """Load every supported image under ``directory`` into a fresh project.

    Pages are ordered by lexicographic file name and assigned ids from 0.
    Unsupported files are skipped and listed in ``project.load_report``.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise EmptyCorpusError(f"{directory} is not a directory")
    supported, skipped = [], []
    for p in sorted(directory.iterdir(), key=lambda p: p.name):
        if not p.is_file():
            continue
        if p.suffix.lower() in SUPPORTED_EXTENSIONS:
            supported.append(p)
        else:
            skipped.append(p.name)
    if not supported:
        raise EmptyCorpusError(f"no supported images (png/jpeg/tiff) in {directory}")

    pages = []
    for i, p in enumerate(supported):
        pages.append(Page(i, _load_gray(p), p.name, str(p.resolve())))
    project = Project(pages=pages, config=config, version=0)
    project.load_report = skipped
    return project


def save_project(project: Project, path) -> None:
    """Write the project as a canonical JSON document.

    Page images are referenced by path relative to the project file;
    in-memory pages without a source file are written out as PNGs first.
    """
    path = Path(path)
    base = path.resolve().parent
    pages_json = []
    for page in project.pages:
        if page.source_path is None:
            side_dir = base / f"{path.stem}_pages"
            try:
                side_dir.mkdir(parents=True, exist_ok=True)
                out = side_dir / (page.source_name or f"page{page.id:04d}.png")
                Image.fromarray(page.gray).save(out)
            except OSError as exc:
                raise IoFailureError(f"cannot write page image under {side_dir}: {exc}") from exc
            page.source_path = str(out)
            if not page.source_name:
                page.source_name = out.name
        rel = os.path.relpath(page.source_path, base)
        pages_json.append({
            "id": page.id, "source_name": page.source_name,
            "path": Path(rel).as_posix(), "width": page.width, "height": page.height,
        })

    data = {
        "format": FORMAT_TAG,
        "id": project.id,
        "pages": pages_json,
        "queries": [q.to_dict() for q in project.queries],
        "matches": [m.to_dict() for m in project.matches],
        "feedback_log": [e.to_dict() for e in project.feedback_log],
        "config": project.config.to_dict(),
        "version": project.version,
    }
    try:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(data, f, indent=2, sort_keys=True, ensure_ascii=False)
            f.write("\n")
    except OSError as exc:
        raise IoFailureError(f"cannot write project file {path}: {exc}") from exc


def load_project(path) -> Project:
    """Load a project file, reloading page pixels from the referenced images."""
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except OSError as exc:
        raise IoFailureError(f"cannot read project file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaMismatchError(f"{path} is not valid JSON: {exc}") from exc

    if not isinstance(data, dict) or data.get("format") != FORMAT_TAG:
        raise SchemaMismatchError(
            f"unsupported project format tag {data.get('format')!r} in {path}")

    base = path.resolve().parent
    pages = []
    for pj in data["pages"]:
        img_path = (base / pj["path"]).resolve()
        gray = _load_gray(img_path)
        if gray.shape != (pj["height"], pj["width"]):
            raise SchemaMismatchError(
                f"page image {img_path} is {gray.shape[1]}x{gray.shape[0]}, "
                f"project recorded {pj['width']}x{pj['height']}")
        pages.append(Page(int(pj["id"]), gray, pj["source_name"], str(img_path)))

    return Project(
        project_id=data["id"],
        pages=pages,
        queries=[QueryWord.from_dict(d) for d in data["queries"]],
        matches=[Match.from_dict(d) for d in data["matches"]],
        feedback_log=[FeedbackEvent.from_dict(d) for d in data["feedback_log"]],
        config=EngineConfig.from_dict(data["config"]),
        version=int(data["version"]),
    )
