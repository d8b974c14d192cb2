"""Corpus-wide search: per-page scoring fanned out over a worker pool.

Page scoring is pure, so the emitted candidates are identical for any
worker count.  Batches are released strictly in deterministic order (the
query's own page first, then ascending page id) by buffering completed
pages until their turn.
"""

from __future__ import annotations

import os
import threading
from concurrent.futures import Executor, ThreadPoolExecutor

from .config import EngineConfig
from .errors import SearchCancelledError
from .spotting import QueryModel, score_page

DONE = "done"
RUNNING = "running"
CANCELLED = "cancelled"
FAILED = "failed"


def default_workers() -> int:
    return os.cpu_count() or 1


class SearchHandle:
    """Control surface for one running corpus search."""

    def __init__(self):
        self._cancel = threading.Event()
        self._finished = threading.Event()
        self.status = RUNNING
        self.error: BaseException | None = None

    def cancel(self):
        """Stop scheduling and emitting; running page tasks finish silently."""
        self._cancel.set()

    @property
    def cancelled(self) -> bool:
        return self._cancel.is_set()

    def await_done(self, timeout: float | None = None) -> str:
        """Block until the search settles; returns the final status."""
        if not self._finished.wait(timeout):
            return RUNNING
        return self.status

    def result(self, timeout: float | None = None) -> str:
        """Like await_done but raises when the search was cancelled."""
        status = self.await_done(timeout)
        if status == CANCELLED:
            raise SearchCancelledError("search cancelled")
        if status == FAILED and self.error is not None:
            raise self.error
        return status


def page_order(page_ids: list[int], first: int | None) -> list[int]:
    """Query's own page first, then ascending ids."""
    rest = sorted(p for p in page_ids if p != first)
    return ([first] if first in page_ids else []) + rest


def search_corpus(model: QueryModel, project, emit,
                  config: EngineConfig | None = None,
                  workers: int | None = None,
                  executor: Executor | None = None,
                  stride: int | None = None) -> SearchHandle:
    """Schedule score_page for every page; emit per-page batches in order.

    ``emit(page_id, candidates)`` is called from a coordinator thread, one
    page at a time, in deterministic order.  The returned handle supports
    cancel() and await_done().
    """
    cfg = config or project.config
    order = page_order([p.id for p in project.pages], model.page_id)
    pages = {p.id: p for p in project.pages}
    handle = SearchHandle()

    own_pool = executor is None
    pool = executor or ThreadPoolExecutor(max_workers=workers or cfg.workers or default_workers())

    def task(page_id):
        if handle.cancelled:
            return None
        return score_page(model, pages[page_id], cfg, stride)

    futures = {pid: pool.submit(task, pid) for pid in order}

    def coordinate():
        try:
            for pid in order:
                if handle.cancelled:
                    break
                result = futures[pid].result()
                if handle.cancelled or result is None:
                    break
                emit(pid, result)
            handle.status = CANCELLED if handle.cancelled else DONE
        except BaseException as exc:  # noqa: BLE001 - reported through the handle
            handle.error = exc
            handle.status = CANCELLED if handle.cancelled else FAILED
        finally:
            if own_pool:
                pool.shutdown(wait=False, cancel_futures=True)
            handle._finished.set()

    threading.Thread(target=coordinate, name=f"search-{model.query_id}", daemon=True).start()
    return handle
