"""Axis-aligned pixel rectangles: the universal region currency.

Boxes use a top-left origin with y pointing down and are serialized as
``{"x": int, "y": int, "w": int, "h": int}``.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True, order=True)
class BoundingBox:
    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise ValueError(f"box must be at least 1x1, got {self.w}x{self.h}")

    @property
    def x2(self) -> int:
        """Exclusive right edge."""
        return self.x + self.w

    @property
    def y2(self) -> int:
        """Exclusive bottom edge."""
        return self.y + self.h

    @property
    def area(self) -> int:
        return self.w * self.h

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + (self.w - 1) / 2.0, self.y + (self.h - 1) / 2.0)

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "w": self.w, "h": self.h}

    @classmethod
    def from_dict(cls, d: dict) -> "BoundingBox":
        return cls(int(d["x"]), int(d["y"]), int(d["w"]), int(d["h"]))

    def expand(self, pad: int) -> "BoundingBox":
        return BoundingBox(self.x - pad, self.y - pad, self.w + 2 * pad, self.h + 2 * pad)

    def clamp(self, width: int, height: int) -> "BoundingBox":
        """Clip to a width x height page; raises if nothing remains."""
        x1 = max(self.x, 0)
        y1 = max(self.y, 0)
        x2 = min(self.x2, width)
        y2 = min(self.y2, height)
        if x2 <= x1 or y2 <= y1:
            raise ValueError("box lies entirely outside the page")
        return BoundingBox(x1, y1, x2 - x1, y2 - y1)

    def intersects(self, other: "BoundingBox") -> bool:
        return (
            self.x < other.x2 and other.x < self.x2
            and self.y < other.y2 and other.y < self.y2
        )

    def contains(self, other: "BoundingBox") -> bool:
        return (
            self.x <= other.x and self.y <= other.y
            and self.x2 >= other.x2 and self.y2 >= other.y2
        )


def intersection_area(a: BoundingBox, b: BoundingBox) -> int:
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0
    return iw * ih


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union, in [0, 1]."""
    inter = intersection_area(a, b)
    if inter == 0:
        return 0.0
    return inter / float(a.area + b.area - inter)


def union_box(boxes) -> BoundingBox:
    """Tight box enclosing every box in a non-empty sequence."""
    boxes = list(boxes)
    if not boxes:
        raise ValueError("union_box of empty sequence")
    x1 = min(b.x for b in boxes)
    y1 = min(b.y for b in boxes)
    x2 = max(b.x2 for b in boxes)
    y2 = max(b.y2 for b in boxes)
    return BoundingBox(x1, y1, x2 - x1, y2 - y1)


def vertical_overlap(a: BoundingBox, b: BoundingBox) -> int:
    """Length of the y-interval shared by two boxes (0 when disjoint)."""
    return max(0, min(a.y2, b.y2) - max(a.y, b.y))


def cluster_lines(boxes: list[BoundingBox], overlap_ratio: float = 0.5) -> list[list[int]]:
    """Group word boxes into text lines.

    Two boxes share a line iff their vertical overlap is at least
    ``overlap_ratio`` of the smaller height; the relation is closed
    transitively.  Returns lists of indices into ``boxes``: lines ordered by
    mean y-center, members ordered by x.
    """
    n = len(boxes)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            ov = vertical_overlap(boxes[i], boxes[j])
            if ov >= overlap_ratio * min(boxes[i].h, boxes[j].h):
                parent[find(i)] = find(j)

    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)

    lines = []
    for members in groups.values():
        members.sort(key=lambda i: (boxes[i].x, boxes[i].y))
        mean_y = sum(boxes[i].y + boxes[i].h / 2.0 for i in members) / len(members)
        lines.append((mean_y, members))
    lines.sort(key=lambda t: t[0])
    return [members for _, members in lines]
