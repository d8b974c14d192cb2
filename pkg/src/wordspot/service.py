"""HTTP API exposing the full workbench workflow.

One writer lock owns each project; search workers read immutable page
snapshots and their per-page batches are integrated under the lock in
deterministic order.  Clients poll ``/matches`` with a cursor: every match
carries the sequence number of its last change, so replaying from cursor 0
yields each match exactly once in its current state.

Event-sourcing discipline: a feedback request waits for any outstanding
rescore of the same query before applying, so the feedback log replays to
the exact final state.  Search batches computed under a superseded model
are dropped; the rescore that superseded them covers every page.
"""

from __future__ import annotations

import io
import json
import threading
import zipfile
from concurrent.futures import ThreadPoolExecutor
from contextlib import asynccontextmanager
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, PlainTextResponse, Response
from fastapi.staticfiles import StaticFiles
from PIL import Image
from pydantic import BaseModel

from .boxes import BoundingBox, cluster_lines
from .config import EngineConfig
from .corpus import Project, load_corpus
from .errors import WordspotError
from .feedback import (CONFIRMED, QueryWord, apply_feedback,
                       build_query_model, integrate_candidates)
from .search import default_workers, search_corpus
from .snapbox import extract_template, snap_box
from .spotting import score_page

HTTP_STATUS = {
    "EmptyCorpus": 400,
    "UnreadableImage": 400,
    "PageTooSmall": 400,
    "EmptyTemplate": 400,
    "OutOfPage": 400,
    "InvalidParams": 400,
    "SchemaMismatch": 400,
    "IoFailure": 400,
    "UnknownProject": 404,
    "UnknownPage": 404,
    "UnknownQuery": 404,
    "UnknownMatch": 404,
    "IllegalTransition": 409,
    "StaleCursor": 410,
    "EmptyTranscription": 422,
}


class ServiceError(WordspotError):
    def __init__(self, code: str, message: str):
        self.code = code
        super().__init__(message)


class CreateProjectBody(BaseModel):
    corpus_dir: str


class BoxBody(BaseModel):
    x: int
    y: int
    w: int
    h: int


class CreateQueryBody(BaseModel):
    page: int
    box: BoxBody
    transcription: str = ""
    category: str = "none"


class FeedbackBody(BaseModel):
    verdict: str


class ProjectSession:
    """Live state for one project: writer lock, emission log, searches."""

    def __init__(self, project: Project, search_pool: ThreadPoolExecutor,
                 rescore_pool: ThreadPoolExecutor):
        self.project = project
        self.search_pool = search_pool
        self.rescore_pool = rescore_pool
        self.lock = threading.RLock()
        self.changed = threading.Condition(self.lock)
        self.seq = 0
        self.compact_base = 0
        # match_id -> {"seq": n, "match": {...}} or {"seq": n, "removed": True}
        self.records: dict[str, dict] = {}
        self.handles: dict[str, object] = {}
        # per query: model_seq (count of model-changing verdicts) and progress
        self.search_state: dict[str, dict] = {}
        self.rescore_futures: dict[str, object] = {}

    # ---- emissions ----------------------------------------------------

    def _emit_match(self, m):
        self.seq += 1
        self.records[m.match_id] = {"seq": self.seq, "match": m.to_dict()}

    def _emit_removed(self, match_id: str):
        self.seq += 1
        self.records[match_id] = {"seq": self.seq, "match_id": match_id, "removed": True}

    def _integrate(self, query_id: str, page_id: int, cands) -> bool:
        added, updated, removed = integrate_candidates(
            self.project, query_id, page_id, cands)
        for m in added + updated:
            self._emit_match(m)
        for mid in removed:
            self._emit_removed(mid)
        return bool(added or updated or removed)

    # ---- search orchestration -----------------------------------------

    def start_search(self, query_id: str):
        with self.lock:
            st = self.search_state.setdefault(
                query_id, {"model_seq": 0, "pages_done": set()})
            model_seq = st["model_seq"]
            model = build_query_model(self.project, query_id)

        def on_batch(page_id, cands):
            with self.changed:
                st["pages_done"].add(page_id)
                if st["model_seq"] == model_seq:
                    if self._integrate(query_id, page_id, cands):
                        self.project.bump()
                self.changed.notify_all()

        handle = search_corpus(model, self.project, on_batch,
                               config=self.project.config,
                               executor=self.search_pool)
        self.handles[query_id] = handle
        return handle

    def schedule_rescore(self, query_id: str):
        with self.lock:
            model_seq = self.search_state[query_id]["model_seq"]
            model = build_query_model(self.project, query_id)

        def job():
            cands = {p.id: score_page(model, p, self.project.config)
                     for p in self.project.pages}
            with self.changed:
                st = self.search_state[query_id]
                if st["model_seq"] != model_seq:
                    return  # superseded by a newer verdict
                any_change = False
                for page in self.project.pages:
                    any_change |= self._integrate(query_id, page.id, cands[page.id])
                    st["pages_done"].add(page.id)
                if any_change:
                    self.project.bump()
                self.changed.notify_all()

        fut = self.rescore_pool.submit(job)
        self.rescore_futures[query_id] = fut
        fut.add_done_callback(lambda f: self._drop_rescore(query_id, f))

    def _drop_rescore(self, query_id: str, fut):
        with self.lock:
            if self.rescore_futures.get(query_id) is fut:
                del self.rescore_futures[query_id]

    def rescoring(self, query_id: str) -> bool:
        fut = self.rescore_futures.get(query_id)
        return fut is not None and not fut.done()

    def wait_rescore(self, query_id: str):
        """Settle any outstanding rescore so verdicts see canonical state."""
        while True:
            fut = self.rescore_futures.get(query_id)
            if fut is None:
                return
            fut.result()
            with self.lock:
                if self.rescore_futures.get(query_id) is fut:
                    del self.rescore_futures[query_id]
            if self.rescore_futures.get(query_id) is None:
                return

    def await_quiescent(self, timeout: float = 60.0):
        """Block until no search or rescore is in flight (test/export aid)."""
        for h in list(self.handles.values()):
            h.await_done(timeout)
        for qid in list(self.rescore_futures):
            self.wait_rescore(qid)


class Store:
    def __init__(self, config: EngineConfig | None = None, workers: int | None = None):
        self.config = config
        self.sessions: dict[str, ProjectSession] = {}
        self.lock = threading.Lock()
        self.search_pool = ThreadPoolExecutor(
            max_workers=workers or default_workers(), thread_name_prefix="page-search")
        self.rescore_pool = ThreadPoolExecutor(max_workers=2, thread_name_prefix="rescore")

    def create_project(self, corpus_dir: str) -> ProjectSession:
        project = load_corpus(corpus_dir, self.config)
        session = ProjectSession(project, self.search_pool, self.rescore_pool)
        with self.lock:
            self.sessions[project.id] = session
        return session

    def session(self, project_id: str) -> ProjectSession:
        s = self.sessions.get(project_id)
        if s is None:
            raise ServiceError("UnknownProject", f"no project {project_id}")
        return s

    def find_match(self, match_id: str):
        for s in self.sessions.values():
            if s.project.match(match_id) is not None:
                return s
        raise ServiceError("UnknownMatch", f"no match {match_id}")

    def shutdown(self):
        self.search_pool.shutdown(wait=False, cancel_futures=True)
        self.rescore_pool.shutdown(wait=False, cancel_futures=True)


def _png_bytes(arr: np.ndarray) -> bytes:
    if arr.dtype != np.uint8:
        arr = np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return buf.getvalue()


def page_words(project: Project, page_id: int):
    """Transcribed words on a page: marked queries plus confirmed matches."""
    words = []
    for q in project.queries:
        if q.page_id == page_id:
            words.append({"box": q.snapped_box, "transcription": q.transcription,
                          "category": q.category, "state": "query",
                          "query_id": q.query_id, "crop_name": q.query_id})
    for m in project.matches:
        if m.page_id == page_id and m.state == CONFIRMED:
            words.append({"box": m.box, "transcription": m.transcription,
                          "category": m.category, "state": CONFIRMED,
                          "query_id": m.query_id, "crop_name": m.match_id})
    words.sort(key=lambda w: (w["box"].y, w["box"].x))
    return words


def assemble_transcription(project: Project, page_id: int,
                           overlap_ratio: float | None = None) -> str:
    """Confirmed words, clustered into lines, space-separated."""
    ratio = overlap_ratio if overlap_ratio is not None else project.config.line_overlap_ratio
    words = page_words(project, page_id)
    if not words:
        return ""
    boxes = [w["box"] for w in words]
    lines = cluster_lines(boxes, ratio)
    return "\n".join(
        " ".join(words[i]["transcription"] for i in line) for line in lines)


def export_ground_truth(project: Project) -> dict:
    """Ground-truth bundle: per page, every transcribed box in (y, x) order."""
    pages = []
    for page in project.pages:
        entries = [{
            "box": w["box"].to_dict(), "transcription": w["transcription"],
            "category": w["category"], "state": w["state"], "query_id": w["query_id"],
        } for w in page_words(project, page.id)]
        pages.append({"page": page.id, "source_name": page.source_name,
                      "entries": entries})
    return {"project_id": project.id, "pages": pages}


def export_bundle_zip(project: Project) -> bytes:
    """Deterministic ZIP: ground_truth.json plus cleaned crop PNGs."""
    gt = export_ground_truth(project)
    crops = []
    for page in project.pages:
        cleaned = page.cleaned(project.config)
        for w in page_words(project, page.id):
            b = w["box"]
            crops.append((f"crops/{w['crop_name']}.png",
                          _png_bytes(cleaned[b.y:b.y2, b.x:b.x2])))
    buf = io.BytesIO()
    stamp = (2020, 1, 1, 0, 0, 0)
    with zipfile.ZipFile(buf, "w", zipfile.ZIP_DEFLATED) as z:
        data = json.dumps(gt, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
        z.writestr(zipfile.ZipInfo("ground_truth.json", stamp), data)
        for name, payload in sorted(crops):
            z.writestr(zipfile.ZipInfo(name, stamp), payload)
    return buf.getvalue()


def find_ui_dir() -> Path | None:
    import os
    candidates = []
    if os.environ.get("WORDSPOT_UI_DIR"):
        candidates.append(Path(os.environ["WORDSPOT_UI_DIR"]))
    candidates.append(Path.cwd() / "frontend" / "dist")
    candidates.append(Path(__file__).resolve().parents[2] / "frontend" / "dist")
    for c in candidates:
        if (c / "index.html").is_file():
            return c
    return None


def create_app(corpus_dir: str | None = None, config: EngineConfig | None = None,
               workers: int | None = None, ui_dir: str | None = None) -> FastAPI:
    store = Store(config, workers)

    @asynccontextmanager
    async def lifespan(app):
        yield
        store.shutdown()

    app = FastAPI(title="wordspot", lifespan=lifespan)
    app.state.store = store

    if corpus_dir is not None:
        session = store.create_project(corpus_dir)
        app.state.initial_project_id = session.project.id

    @app.exception_handler(WordspotError)
    async def wordspot_error(request: Request, exc: WordspotError):
        status = HTTP_STATUS.get(exc.code, 400)
        return JSONResponse(status_code=status,
                            content={"error": exc.code, "message": str(exc)})

    def get_page(project, n: int):
        page = project.page(n)
        if page is None:
            raise ServiceError("UnknownPage", f"no page {n}")
        return page

    @app.get("/")
    def root():
        return {
            "service": "wordspot",
            "projects": [{"project_id": pid, "n_pages": len(s.project.pages)}
                         for pid, s in store.sessions.items()],
            "ui": app.state.ui_mounted,
        }

    @app.post("/projects", status_code=201)
    def create_project(body: CreateProjectBody):
        session = store.create_project(body.corpus_dir)
        return {"project_id": session.project.id,
                "n_pages": len(session.project.pages),
                "skipped_files": session.project.load_report}

    @app.get("/projects/{project_id}")
    def project_info(project_id: str):
        s = store.session(project_id)
        with s.lock:
            p = s.project
            return {
                "project_id": p.id, "version": p.version, "n_pages": len(p.pages),
                "pages": [{"id": pg.id, "source_name": pg.source_name,
                           "width": pg.width, "height": pg.height} for pg in p.pages],
                "queries": [q.to_dict() for q in p.queries],
            }

    @app.post("/projects/{project_id}/queries", status_code=201)
    def create_query(project_id: str, body: CreateQueryBody):
        s = store.session(project_id)
        if not body.transcription.strip():
            raise ServiceError("EmptyTranscription", "transcription must be non-empty")
        with s.lock:
            project = s.project
            page = get_page(project, body.page)
            box = BoundingBox(body.box.x, body.box.y, body.box.w, body.box.h)
            snapped = snap_box(page, box, project.config)
            template = extract_template(page, snapped.box, project.config)
            qid = project.next_query_id()
            q = QueryWord(qid, page.id, box, snapped.box,
                          body.transcription, body.category,
                          snapped=snapped.snapped, template=template)
            project.add_query(q)
        s.start_search(qid)
        return {
            "query_id": qid,
            "snapped_box": snapped.box.to_dict(),
            "snapped": snapped.snapped,
            "template_png_url": f"/projects/{project_id}/queries/{qid}/template.png",
        }

    @app.get("/projects/{project_id}/queries/{query_id}/template.png")
    def query_template_png(project_id: str, query_id: str):
        s = store.session(project_id)
        with s.lock:
            q = s.project.query(query_id)
            if q is None:
                raise ServiceError("UnknownQuery", f"no query {query_id}")
            from .feedback import query_template
            tpl = query_template(s.project, q)
        return Response(_png_bytes(tpl.cleaned), media_type="image/png")

    @app.get("/projects/{project_id}/matches")
    def get_matches(project_id: str, cursor: int = 0, wait_ms: int = 0):
        s = store.session(project_id)
        with s.changed:
            if cursor < s.compact_base:
                raise ServiceError("StaleCursor",
                                   f"cursor {cursor} predates compaction {s.compact_base}")
            entries = [r for r in s.records.values() if r["seq"] > cursor]
            if not entries and wait_ms > 0:
                s.changed.wait(timeout=wait_ms / 1000.0)
                entries = [r for r in s.records.values() if r["seq"] > cursor]
            entries.sort(key=lambda r: r["seq"])
            next_cursor = entries[-1]["seq"] if entries else cursor
            out = []
            for r in entries:
                if r.get("removed"):
                    out.append({"match_id": r["match_id"], "removed": True,
                                "last_seq": r["seq"]})
                else:
                    out.append({**r["match"], "removed": False, "last_seq": r["seq"]})
        return {"matches": out, "next_cursor": next_cursor}

    @app.post("/matches/{match_id}/feedback")
    def post_feedback(match_id: str, body: FeedbackBody):
        s = store.find_match(match_id)
        with s.lock:
            qid = s.project.match(match_id).query_id
        s.wait_rescore(qid)
        with s.changed:
            m = s.project.match(match_id)
            if m is None:
                raise ServiceError("UnknownMatch", f"no match {match_id}")
            m, delta = apply_feedback(s.project, match_id, body.verdict)
            if not delta.empty:
                s.search_state.setdefault(
                    qid, {"model_seq": 0, "pages_done": set()})["model_seq"] += 1
            s._emit_match(m)
            s.changed.notify_all()
        if not delta.empty:
            s.schedule_rescore(qid)
        return {"state": m.state, "model_delta": delta.to_dict(),
                "new_threshold": delta.new_threshold}

    @app.get("/projects/{project_id}/progress")
    def progress(project_id: str):
        s = store.session(project_id)
        with s.lock:
            total = len(s.project.pages)
            queries = []
            for q in s.project.queries:
                st = s.search_state.get(q.query_id, {"pages_done": set()})
                queries.append({
                    "query_id": q.query_id,
                    "pages_searched": len(st["pages_done"]),
                    "total_pages": total,
                    "rescoring": s.rescoring(q.query_id),
                })
            confirmed = sum(1 for m in s.project.matches if m.state == CONFIRMED)
            return {"queries": queries, "confirmed_count": confirmed,
                    "match_count": len(s.project.matches)}

    @app.get("/projects/{project_id}/export")
    def export(project_id: str, format: str = "zip"):
        s = store.session(project_id)
        with s.lock:
            if format == "json":
                gt = export_ground_truth(s.project)
                return JSONResponse(content=gt)
            payload = export_bundle_zip(s.project)
        return Response(payload, media_type="application/zip",
                        headers={"Content-Disposition":
                                 'attachment; filename="ground_truth.zip"'})

    @app.get("/projects/{project_id}/pages/{n}/transcription",
             response_class=PlainTextResponse)
    def transcription(project_id: str, n: int):
        s = store.session(project_id)
        with s.lock:
            page = get_page(s.project, n)
            return assemble_transcription(s.project, page.id)

    @app.get("/projects/{project_id}/pages/{n}/image")
    def page_image(project_id: str, n: int, cleaned: int = 0):
        s = store.session(project_id)
        page = get_page(s.project, n)
        arr = page.cleaned(s.project.config) if cleaned else page.gray
        return Response(_png_bytes(arr), media_type="image/png")

    ui = Path(ui_dir) if ui_dir else find_ui_dir()
    app.state.ui_mounted = bool(ui)
    if ui:
        app.mount("/ui", StaticFiles(directory=str(ui), html=True), name="ui")

    return app
