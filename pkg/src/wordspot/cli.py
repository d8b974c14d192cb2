"""Batch and evaluation entry points: clean, spot, eval, bench, replay, serve."""

from __future__ import annotations

import json
import statistics
import sys
import time
from pathlib import Path

import click
import numpy as np
from PIL import Image

from .boxes import BoundingBox
from .config import EngineConfig
from .corpus import load_corpus, load_project
from .errors import WordspotError
from .evaluate import evaluate, load_ground_truth, load_predictions
from .feedback import replay as replay_project
from .imgproc import BandpassParams, bandpass_clean, binarize_otsu
from .search import search_corpus
from .snapbox import extract_template, snap_box
from .spotting import QueryModel


@click.group()
def main():
    """Interactive word-spotting workbench for handwritten manuscripts."""


def _fail(exc: WordspotError):
    click.echo(f"error [{exc.code}]: {exc}", err=True)
    sys.exit(1)


def _parse_box(text: str) -> BoundingBox:
    try:
        x, y, w, h = (int(v) for v in text.split(","))
        return BoundingBox(x, y, w, h)
    except ValueError as exc:
        raise click.BadParameter(f"expected X,Y,W,H integers, got {text!r}") from exc


def _open_project(path: str, config: EngineConfig | None = None):
    p = Path(path)
    if p.is_dir():
        return load_corpus(p, config)
    return load_project(p)


@main.command()
@click.option("--image", "image_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--binary", is_flag=True, help="write the binarized ink mask instead")
@click.option("--sigma-stroke-lo", default=1.0, show_default=True)
@click.option("--sigma-stroke-hi", default=8.0, show_default=True)
@click.option("--sigma-bg-lo", default=16.0, show_default=True)
@click.option("--sigma-bg-hi", default=64.0, show_default=True)
def clean(image_path, out_path, binary, sigma_stroke_lo, sigma_stroke_hi,
          sigma_bg_lo, sigma_bg_hi):
    """Write the background-cleaned (or binarized) page image as 8-bit PNG."""
    try:
        with Image.open(image_path) as im:
            gray = np.asarray(im.convert("L"), dtype=np.uint8)
        params = BandpassParams(sigma_stroke_lo, sigma_stroke_hi, sigma_bg_lo, sigma_bg_hi)
        cleaned = bandpass_clean(gray.astype(np.float64) / 255.0, params)
        out = binarize_otsu(cleaned).binary * 255 if binary \
            else np.clip(np.round(cleaned * 255.0), 0, 255)
        Image.fromarray(out.astype(np.uint8)).save(out_path)
    except WordspotError as exc:
        _fail(exc)
    click.echo(f"wrote {out_path}")


def _spot_query(project, page_n: int, box: BoundingBox, threshold: float | None):
    page = project.page(page_n)
    if page is None:
        raise click.ClickException(f"no page {page_n} in project")
    cfg = project.config
    snapped = snap_box(page, box, cfg)
    template = extract_template(page, snapped.box, cfg)
    return QueryModel("cli", [template], scales=tuple(cfg.scales),
                      threshold=threshold if threshold is not None else cfg.default_threshold,
                      negative_weight=cfg.negative_weight)


def _run_search(model, project, workers):
    results: dict[int, list] = {}
    handle = search_corpus(model, project, lambda pid, cands: results.__setitem__(pid, cands),
                           config=project.config, workers=workers)
    handle.result()
    out = []
    for pid in sorted(results):
        out.extend(results[pid])
    return out


@main.command()
@click.option("--project", "project_path", required=True, type=click.Path(exists=True),
              help="project.json or a corpus directory")
@click.option("--page", "page_n", required=True, type=int)
@click.option("--box", "box_text", required=True, help="X,Y,W,H in page pixels")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--threshold", type=float, default=None)
@click.option("--workers", type=int, default=None)
def spot(project_path, page_n, box_text, out_path, threshold, workers):
    """Search the whole corpus for the word marked by --box on --page."""
    try:
        project = _open_project(project_path)
        model = _spot_query(project, page_n, _parse_box(box_text), threshold)
        cands = _run_search(model, project, workers)
    except WordspotError as exc:
        _fail(exc)
    payload = [{"page": c.page_id, "box": c.box.to_dict(), "score": round(c.score, 6)}
               for c in cands]
    with open(out_path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2)
        f.write("\n")
    click.echo(f"{len(payload)} candidates -> {out_path}")


@main.command("eval")
@click.option("--pred", "pred_path", required=True, type=click.Path(exists=True))
@click.option("--gt", "gt_path", required=True, type=click.Path(exists=True))
@click.option("--iou", "iou_min", default=0.5, show_default=True)
@click.option("--json", "as_json", is_flag=True)
def eval_cmd(pred_path, gt_path, iou_min, as_json):
    """Score predictions against ground truth (precision/recall/AP, mAP)."""
    try:
        result = evaluate(load_predictions(pred_path), load_ground_truth(gt_path), iou_min)
    except WordspotError as exc:
        _fail(exc)
    if as_json:
        click.echo(json.dumps(result.to_dict(), indent=2, sort_keys=True))
        return
    click.echo(f"{'query':<12} {'prec':>6} {'recall':>6} {'AP':>6} {'tp':>4} {'fp':>4} {'fn':>4}")
    for q in sorted(result.per_query):
        e = result.per_query[q]
        click.echo(f"{q or '(all)':<12} {e.precision:>6.3f} {e.recall:>6.3f} "
                   f"{e.average_precision:>6.3f} {e.tp:>4} {e.fp:>4} {e.fn:>4}")
    click.echo(f"mAP = {result.mean_average_precision:.4f}  "
               f"(tp={result.tp} fp={result.fp} fn={result.fn})")


@main.command()
@click.option("--project", "project_path", required=True, type=click.Path(exists=True))
@click.option("--page", "page_n", required=True, type=int)
@click.option("--box", "box_text", required=True)
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--runs", type=int, default=5, show_default=True)
@click.option("--threshold", type=float, default=None)
@click.option("--json", "as_json", is_flag=True)
def bench(project_path, page_n, box_text, workers, runs, threshold, as_json):
    """Time a single-query corpus search; reports per-page and total medians."""
    try:
        project = _open_project(project_path)
        model = _spot_query(project, page_n, _parse_box(box_text), threshold)
        totals, per_page_runs, n_matches = [], [], 0
        for _ in range(runs):
            page_times: dict[int, float] = {}
            marks = {"t": time.perf_counter()}

            def emit(pid, cands, page_times=page_times, marks=marks):
                now = time.perf_counter()
                page_times[pid] = now - marks["t"]
                marks["t"] = now

            t0 = time.perf_counter()
            handle = search_corpus(model, project, emit,
                                   config=project.config, workers=workers)
            handle.result()
            totals.append(time.perf_counter() - t0)
            per_page_runs.append(page_times)
            n_matches = sum(1 for _ in page_times)
    except WordspotError as exc:
        _fail(exc)

    median_total = statistics.median(totals)
    per_page = {pid: statistics.median(r[pid] for r in per_page_runs)
                for pid in per_page_runs[0]}
    report = {
        "workers": workers, "runs": runs,
        "total_median_s": round(median_total, 4),
        "total_all_runs_s": [round(t, 4) for t in totals],
        "per_page_median_s": {str(k): round(v, 4) for k, v in sorted(per_page.items())},
        "pages": n_matches,
    }
    if as_json:
        click.echo(json.dumps(report, indent=2))
    else:
        click.echo(f"workers={workers} runs={runs} median total {median_total:.3f}s")
        for pid, t in sorted(per_page.items()):
            click.echo(f"  page {pid}: {t:.3f}s")


@main.command()
@click.option("--project", "project_path", required=True, type=click.Path(exists=True))
@click.option("--json", "as_json", is_flag=True)
def replay(project_path, as_json):
    """Rebuild match state from the feedback log and verify it matches."""
    try:
        project = load_project(project_path)
        rebuilt = replay_project(project)
    except WordspotError as exc:
        _fail(exc)
    stored = {m.match_id: (m.state, m.transcription, m.category) for m in project.matches}
    redone = {m.match_id: (m.state, m.transcription, m.category) for m in rebuilt.matches}
    identical = stored == redone
    counts = {}
    for m in rebuilt.matches:
        counts[m.state] = counts.get(m.state, 0) + 1
    if as_json:
        click.echo(json.dumps({"identical": identical,
                               "events": len(project.feedback_log),
                               "matches": counts}, indent=2, sort_keys=True))
    else:
        click.echo(f"replayed {len(project.feedback_log)} events -> "
                   f"{sum(counts.values())} matches {counts}")
        click.echo("replay matches stored state" if identical
                   else "MISMATCH between replay and stored state")
    if not identical:
        sys.exit(1)


@main.command()
@click.option("--corpus", "corpus_dir", required=True, type=click.Path(exists=True))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8080, show_default=True)
@click.option("--workers", type=int, default=None, help="search pool size")
def serve(corpus_dir, host, port, workers):
    """Run the HTTP workbench service over a corpus directory."""
    import uvicorn

    from .service import create_app

    try:
        app = create_app(corpus_dir=corpus_dir, workers=workers)
    except WordspotError as exc:
        _fail(exc)
    pid = app.state.initial_project_id
    click.echo(f"project {pid} at http://{host}:{port}/projects/{pid}")
    if app.state.ui_mounted:
        click.echo(f"workbench UI at http://{host}:{port}/ui/")
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
