"""Spotting-quality evaluation against labeled ground truth.

Greedy one-to-one matching of ranked predictions to ground-truth boxes at
an IoU threshold; average precision is the exact area under the
precision-recall step curve (no interpolation, no 11-point quantization).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .boxes import BoundingBox, iou
from .errors import ParseError, SchemaError


@dataclass
class QueryEval:
    precision: float
    recall: float
    average_precision: float
    tp: int
    fp: int
    fn: int


@dataclass
class EvalResult:
    per_query: dict[str, QueryEval] = field(default_factory=dict)
    mean_average_precision: float = 1.0
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def to_dict(self) -> dict:
        return {
            "per_query": {
                q: {"precision": e.precision, "recall": e.recall,
                    "average_precision": e.average_precision,
                    "tp": e.tp, "fp": e.fp, "fn": e.fn}
                for q, e in sorted(self.per_query.items())
            },
            "mean_average_precision": self.mean_average_precision,
            "tp": self.tp, "fp": self.fp, "fn": self.fn,
        }


def _box(d) -> BoundingBox:
    try:
        return BoundingBox.from_dict(d)
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"bad box {d!r}: {exc}") from exc


def _eval_bucket(preds: list[dict], gts: list[dict], iou_min: float) -> QueryEval:
    # rank by score, deterministic ties by (page, y, x)
    preds = sorted(preds, key=lambda p: (-p["score"], p["page"],
                                         p["_box"].y, p["_box"].x))
    gts = sorted(gts, key=lambda g: (g["page"], g["_box"].y, g["_box"].x))
    taken = [False] * len(gts)
    n_gt = len(gts)

    tp_flags = []
    for p in preds:
        best, best_iou = -1, 0.0
        for gi, g in enumerate(gts):
            if taken[gi] or g["page"] != p["page"]:
                continue
            v = iou(p["_box"], g["_box"])
            if v >= iou_min and v > best_iou:
                best, best_iou = gi, v
        if best >= 0:
            taken[best] = True
            tp_flags.append(True)
        else:
            tp_flags.append(False)

    tp = sum(tp_flags)
    fp = len(tp_flags) - tp
    fn = n_gt - tp
    precision = tp / (tp + fp) if (tp + fp) else 1.0
    recall = tp / n_gt if n_gt else 1.0
    if n_gt == 0:
        ap = 1.0 if not preds else 0.0
    else:
        # exact step curve: each true positive adds precision@rank / n_gt
        ap, hits = 0.0, 0
        for rank, is_tp in enumerate(tp_flags, start=1):
            if is_tp:
                hits += 1
                ap += hits / rank
        ap /= n_gt
    return QueryEval(precision, recall, ap, tp, fp, fn)


def evaluate(predictions: list[dict], ground_truth: list[dict],
             iou_min: float = 0.5) -> EvalResult:
    """Score predictions against ground truth at ``IoU >= iou_min``.

    Each prediction needs ``page``, ``box`` and ``score``; ground-truth
    entries need ``page`` and ``box``.  When any prediction carries a
    ``query_id`` the evaluation runs per query; otherwise everything forms
    one bucket.
    """
    preds = []
    for p in predictions:
        try:
            preds.append({"page": int(p["page"]), "score": float(p["score"]),
                          "_box": _box(p["box"]), "query_id": p.get("query_id", "")})
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad prediction entry {p!r}: {exc}") from exc
    gts = []
    for g in ground_truth:
        try:
            gts.append({"page": int(g["page"]), "_box": _box(g["box"]),
                        "query_id": g.get("query_id", "")})
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"bad ground-truth entry {g!r}: {exc}") from exc

    by_query = any(p["query_id"] for p in preds)
    if not by_query:
        for g in gts:
            g["query_id"] = ""

    buckets = sorted({p["query_id"] for p in preds} | {g["query_id"] for g in gts})
    result = EvalResult()
    aps = []
    for q in buckets:
        e = _eval_bucket([p for p in preds if p["query_id"] == q],
                         [g for g in gts if g["query_id"] == q], iou_min)
        result.per_query[q] = e
        result.tp += e.tp
        result.fp += e.fp
        result.fn += e.fn
        aps.append(e.average_precision)
    result.mean_average_precision = sum(aps) / len(aps) if aps else 1.0
    return result


def load_predictions(path) -> list[dict]:
    """Read a matches.json array written by the spot command."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(data, list):
        raise SchemaError(f"{path}: expected a JSON array of predictions")
    return data


def load_ground_truth(path) -> list[dict]:
    """Read ground truth: either an export bundle or a flat entry array."""
    p = Path(path)
    try:
        with open(p, "r", encoding="utf-8") as f:
            data = json.load(f)
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path} is not valid JSON: {exc}") from exc
    if isinstance(data, dict) and "pages" in data:
        flat = []
        for page in data["pages"]:
            for e in page.get("entries", []):
                flat.append({**e, "page": page["page"]})
        return flat
    if isinstance(data, list):
        return data
    raise SchemaError(f"{path}: expected an export bundle or entry array")
