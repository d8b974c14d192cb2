"""Confirm/reject feedback: match state, exemplar accrual, adaptive threshold.

The query model is derived state: positives are the query's own template
plus templates of confirmed matches, negatives come from rejected matches,
and the threshold adapts to the score statistics of the verdicts.  Match
ids are positional (query, page, box), so replaying the feedback log over
the deterministic search reproduces the exact final match states.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from .boxes import BoundingBox, iou
from .config import EngineConfig
from .errors import (EmptyTemplateError, IllegalTransitionError,
                     UnknownMatchError, UnknownQueryError)
from .snapbox import WordTemplate, extract_template
from .spotting import Candidate, QueryModel, score_page

CATEGORIES = ("none", "name", "place")
PENDING, CONFIRMED, REJECTED = "pending", "confirmed", "rejected"
STATES = (PENDING, CONFIRMED, REJECTED)
VERDICTS = ("confirm", "reject")


@dataclass
class QueryWord:
    """A user-marked word: the unit of transcription."""

    query_id: str
    page_id: int
    user_box: BoundingBox
    snapped_box: BoundingBox
    transcription: str
    category: str = "none"
    snapped: bool = True
    template: WordTemplate | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not self.transcription:
            raise ValueError("query transcription must be non-empty")
        if self.category not in CATEGORIES:
            raise ValueError(f"category must be one of {CATEGORIES}")

    def to_dict(self) -> dict:
        return {
            "query_id": self.query_id, "page_id": self.page_id,
            "user_box": self.user_box.to_dict(), "snapped_box": self.snapped_box.to_dict(),
            "transcription": self.transcription, "category": self.category,
            "snapped": self.snapped,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QueryWord":
        return cls(d["query_id"], int(d["page_id"]),
                   BoundingBox.from_dict(d["user_box"]), BoundingBox.from_dict(d["snapped_box"]),
                   d["transcription"], d.get("category", "none"), bool(d.get("snapped", True)))


@dataclass
class Match:
    """One found occurrence and its review state."""

    match_id: str
    query_id: str
    page_id: int
    box: BoundingBox
    score: float
    state: str = PENDING
    transcription: str | None = None
    category: str = "none"

    def __post_init__(self):
        if self.state not in STATES:
            raise ValueError(f"state must be one of {STATES}")
        if (self.state == CONFIRMED) != bool(self.transcription):
            raise ValueError("transcription must be non-empty iff state is confirmed")

    def to_dict(self) -> dict:
        return {
            "match_id": self.match_id, "query_id": self.query_id, "page_id": self.page_id,
            "box": self.box.to_dict(), "score": self.score, "state": self.state,
            "transcription": self.transcription, "category": self.category,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Match":
        return cls(d["match_id"], d["query_id"], int(d["page_id"]),
                   BoundingBox.from_dict(d["box"]), float(d["score"]), d["state"],
                   d.get("transcription"), d.get("category", "none"))


@dataclass(frozen=True)
class FeedbackEvent:
    seq: int
    match_id: str
    verdict: str
    timestamp: float

    def to_dict(self) -> dict:
        return {"seq": self.seq, "match_id": self.match_id,
                "verdict": self.verdict, "timestamp": self.timestamp}

    @classmethod
    def from_dict(cls, d: dict) -> "FeedbackEvent":
        return cls(int(d["seq"]), d["match_id"], d["verdict"], float(d["timestamp"]))


@dataclass
class ModelDelta:
    """What a verdict changed in the query's exemplar sets."""

    query_id: str
    positives_added: list[str] = field(default_factory=list)
    positives_removed: list[str] = field(default_factory=list)
    negatives_added: list[str] = field(default_factory=list)
    negatives_removed: list[str] = field(default_factory=list)
    blacklist_added: list[str] = field(default_factory=list)
    blacklist_removed: list[str] = field(default_factory=list)
    new_threshold: float | None = None
    inversion: bool = False

    @property
    def empty(self) -> bool:
        return not (self.positives_added or self.positives_removed
                    or self.negatives_added or self.negatives_removed
                    or self.blacklist_added or self.blacklist_removed)

    def to_dict(self) -> dict:
        return {
            "query_id": self.query_id, "empty": self.empty,
            "positives_added": self.positives_added, "positives_removed": self.positives_removed,
            "negatives_added": self.negatives_added, "negatives_removed": self.negatives_removed,
            "blacklist_added": self.blacklist_added, "blacklist_removed": self.blacklist_removed,
            "new_threshold": self.new_threshold, "inversion": self.inversion,
        }


def make_match_id(project_id: str, query_id: str, page_id: int,
                  box: BoundingBox) -> str:
    # project prefix keeps ids globally routable (the feedback endpoint is
    # not project-scoped); the rest is positional, so replays regenerate
    # identical ids
    return f"{project_id[:8]}.{query_id}.p{page_id}.x{box.x}y{box.y}w{box.w}h{box.h}"


def query_template(project, query: QueryWord) -> WordTemplate:
    """The query's own exemplar, extracted once and cached."""
    if query.template is None:
        page = project.page(query.page_id)
        query.template = extract_template(page, query.snapped_box, project.config)
    return query.template


def adaptive_threshold(confirmed_scores, rejected_scores,
                       config: EngineConfig | None = None) -> tuple[float, bool]:
    """Threshold from verdict score statistics; returns (value, inverted).

    No feedback keeps the default; confirms alone lower it just under the
    weakest confirmed score; with both kinds it sits at the midpoint of the
    worst rejected and weakest confirmed scores.  Always clamped to the
    configured range.  ``inverted`` flags a noisy user whose rejected
    scores exceed confirmed ones.
    """
    cfg = config or EngineConfig()
    default = cfg.default_threshold
    inverted = False
    if not confirmed_scores and not rejected_scores:
        t = default
    elif confirmed_scores and not rejected_scores:
        t = min(default, min(confirmed_scores) - cfg.confirm_margin)
    elif rejected_scores and not confirmed_scores:
        # rejects alone push the bar above the worst offender
        t = max(default, max(rejected_scores) + cfg.confirm_margin)
    else:
        hi, lo = max(rejected_scores), min(confirmed_scores)
        t = (hi + lo) / 2.0
        inverted = hi > lo
    return float(min(cfg.threshold_max, max(cfg.threshold_min, t))), inverted


def query_matches(project, query_id: str) -> list[Match]:
    return [m for m in project.matches if m.query_id == query_id]


def threshold_for(project, query_id: str) -> tuple[float, bool]:
    ms = query_matches(project, query_id)
    return adaptive_threshold(
        [m.score for m in ms if m.state == CONFIRMED],
        [m.score for m in ms if m.state == REJECTED],
        project.config)


def build_query_model(project, query_id: str) -> QueryModel:
    """Derive the current exemplar sets and threshold for a query."""
    q = project.query(query_id)
    if q is None:
        raise UnknownQueryError(query_id)
    cfg = project.config
    positives = [query_template(project, q)]
    negatives = []
    for m in query_matches(project, query_id):
        if m.state == PENDING:
            continue
        try:
            tpl = extract_template(project.page(m.page_id), m.box, cfg)
        except EmptyTemplateError:
            continue  # blank-region verdicts carry no usable exemplar
        (positives if m.state == CONFIRMED else negatives).append(tpl)
    threshold, _ = threshold_for(project, query_id)
    return QueryModel(query_id, positives, negatives, tuple(cfg.scales),
                      threshold, cfg.negative_weight)


def apply_feedback(project, match_id: str, verdict: str,
                   timestamp: float | None = None) -> tuple[Match, ModelDelta]:
    """Record a verdict, update match state, report the model delta.

    Repeating the current state is a no-op with an empty delta (the event
    is still logged).  States never return to pending; confirmed and
    rejected convert into each other on user correction.
    """
    m = project.match(match_id)
    if m is None:
        raise UnknownMatchError(match_id)
    if verdict not in VERDICTS:
        raise IllegalTransitionError(f"unknown verdict {verdict!r}")
    q = project.query(m.query_id)

    seq = project.feedback_log[-1].seq + 1 if project.feedback_log else 1
    ts = time.time() if timestamp is None else timestamp
    project.feedback_log.append(FeedbackEvent(seq, match_id, verdict, ts))

    delta = ModelDelta(query_id=m.query_id)
    prev = m.state
    if verdict == "confirm" and prev != CONFIRMED:
        m.state = CONFIRMED
        m.transcription = q.transcription
        m.category = q.category
        delta.positives_added.append(match_id)
        if prev == REJECTED:
            delta.negatives_removed.append(match_id)
            delta.blacklist_removed.append(match_id)
    elif verdict == "reject" and prev != REJECTED:
        m.state = REJECTED
        m.transcription = None
        delta.negatives_added.append(match_id)
        delta.blacklist_added.append(match_id)
        if prev == CONFIRMED:
            delta.positives_removed.append(match_id)

    delta.new_threshold, delta.inversion = threshold_for(project, m.query_id)
    project.bump()
    return m, delta


def suppressed(project, query_id: str, page_id: int, box: BoundingBox) -> bool:
    """True when a candidate box duplicates a decided occurrence.

    Covers the rejected blacklist, already-confirmed occurrences, and the
    query's own marked instance.
    """
    cfg = project.config
    q = project.query(query_id)
    if q.page_id == page_id and iou(box, q.snapped_box) >= cfg.blacklist_iou:
        return True
    for m in project.matches:
        if m.query_id != query_id or m.page_id != page_id or m.state == PENDING:
            continue
        if iou(box, m.box) >= cfg.blacklist_iou:
            return True
    return False


def integrate_candidates(project, query_id: str, page_id: int,
                         cands: list[Candidate]):
    """Reconcile one page's candidates with the match list.

    The page's pending set becomes exactly the non-suppressed candidates;
    confirmed and rejected matches are untouched.  Returns
    (added, updated, removed_ids); the caller bumps the version.
    """
    desired: dict[str, Candidate] = {}
    for c in cands:
        if suppressed(project, query_id, page_id, c.box):
            continue
        desired.setdefault(make_match_id(project.id, query_id, page_id, c.box), c)

    existing = {m.match_id: m for m in project.matches
                if m.query_id == query_id and m.page_id == page_id and m.state == PENDING}
    removed_ids = [mid for mid in existing if mid not in desired]
    added, updated = [], []
    for mid, c in desired.items():
        if mid in existing:
            m = existing[mid]
            if m.score != c.score:
                m.score = c.score
                updated.append(m)
        else:
            m = Match(mid, query_id, page_id, c.box, c.score)
            added.append(m)

    if removed_ids:
        gone = set(removed_ids)
        project.matches[:] = [m for m in project.matches if m.match_id not in gone]
    project.matches.extend(added)
    return added, updated, removed_ids


def rescore_pending(project, query_id: str, stride: int | None = None) -> list[Match]:
    """Re-run the search under the current model and reconcile every page.

    Pending matches are re-scored/culled, blacklisted regions stay out,
    decided matches are untouched.  The version bumps once, and only when
    something changed (a rescore with no new feedback is a fixed point).
    """
    if project.query(query_id) is None:
        raise UnknownQueryError(query_id)
    model = build_query_model(project, query_id)
    changed = False
    for page in project.pages:
        cands = score_page(model, page, project.config, stride)
        added, updated, removed = integrate_candidates(project, query_id, page.id, cands)
        changed = changed or bool(added or updated or removed)
    if changed:
        project.bump()
    return query_matches(project, query_id)


def run_initial_search(project, query_id: str, stride: int | None = None) -> list[Match]:
    """Synchronous search for a fresh query (library/CLI path)."""
    return rescore_pending(project, query_id, stride)


def replay(project) -> "object":
    """Rebuild match state from scratch by replaying the feedback log.

    Searches every query with its initial model, then applies events in
    sequence order, rescoring the affected query after each, exactly as the
    live loop does.  Returns the rebuilt project.
    """
    fresh = project.replay_base()
    for q in fresh.queries:
        run_initial_search(fresh, q.query_id)
    for ev in project.feedback_log:
        m, _ = apply_feedback(fresh, ev.match_id, ev.verdict, ev.timestamp)
        rescore_pending(fresh, m.query_id)
    return fresh
