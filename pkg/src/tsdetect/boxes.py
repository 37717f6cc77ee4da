"""Axis-aligned box geometry and the per-frame/per-sequence detection containers.

Boxes are corner-format (x1, y1, x2, y2) with strictly positive area and a
confidence score in [0, 1]. IoU is the overlap primitive everything else
(adjacency graphs, matching, metrics) is built on.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidBoxError


@dataclass(frozen=True)
class Box:
    x1: float
    y1: float
    x2: float
    y2: float
    score: float = 1.0
    label: int = 0

    def __post_init__(self):
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise InvalidBoxError(
                f"box must have positive area, got ({self.x1}, {self.y1}, {self.x2}, {self.y2})"
            )
        if not 0.0 <= self.score <= 1.0:
            raise InvalidBoxError(f"score must lie in [0, 1], got {self.score}")

    def with_score(self, score: float) -> "Box":
        return Box(self.x1, self.y1, self.x2, self.y2, score, self.label)


def area(b: Box) -> float:
    """Area of a valid box, always > 0."""
    return (b.x2 - b.x1) * (b.y2 - b.y1)


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two boxes; symmetric, 0 when disjoint.

    Boxes touching only along an edge have zero intersection area and
    therefore IoU 0.
    """
    ix = min(a.x2, b.x2) - max(a.x1, b.x1)
    iy = min(a.y2, b.y2) - max(a.y1, b.y1)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    union = area(a) + area(b) - inter
    return inter / union


def boxes_to_array(boxes: list[Box]) -> np.ndarray:
    """(n, 5) float64 array of x1, y1, x2, y2, score."""
    if not boxes:
        return np.zeros((0, 5))
    return np.array([[b.x1, b.y1, b.x2, b.y2, b.score] for b in boxes])


def pairwise_iou_matrix(boxes: list[Box]) -> np.ndarray:
    """(n, n) IoU matrix with a zero diagonal.

    In-place arithmetic keeps temporaries down; this sits on the hot path of
    the recalibration pipeline.
    """
    n = len(boxes)
    if n == 0:
        return np.zeros((0, 0))
    arr = boxes_to_array(boxes)
    x1, y1, x2, y2 = arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3]
    areas = (x2 - x1) * (y2 - y1)
    ix = np.minimum(x2[:, None], x2)
    np.subtract(ix, np.maximum(x1[:, None], x1), out=ix)
    np.clip(ix, 0.0, None, out=ix)
    iy = np.minimum(y2[:, None], y2)
    np.subtract(iy, np.maximum(y1[:, None], y1), out=iy)
    np.clip(iy, 0.0, None, out=iy)
    ix *= iy  # intersection area
    union = areas[:, None] + areas
    union -= ix
    ix /= union  # IoU
    np.fill_diagonal(ix, 0.0)
    return ix


@dataclass
class FrameDetections:
    sequence_id: str
    frame_index: int
    boxes: list[Box] = field(default_factory=list)

    def __post_init__(self):
        if self.frame_index < 0:
            raise InvalidBoxError(f"frame_index must be >= 0, got {self.frame_index}")


@dataclass
class SequenceDataset:
    """Per-frame detections keyed by (sequence id, frame index).

    Frames are stored in insertion order; `add` rejects duplicate keys so the
    (sequence, frame) key stays unique.
    """

    frames: list[FrameDetections] = field(default_factory=list)

    def __post_init__(self):
        self._index: dict[tuple[str, int], FrameDetections] = {}
        for f in self.frames:
            key = (f.sequence_id, f.frame_index)
            if key in self._index:
                raise InvalidBoxError(f"duplicate frame key {key}")
            self._index[key] = f

    def add(self, frame: FrameDetections) -> None:
        key = (frame.sequence_id, frame.frame_index)
        if key in self._index:
            raise InvalidBoxError(f"duplicate frame key {key}")
        self._index[key] = frame
        self.frames.append(frame)

    def get(self, sequence_id: str, frame_index: int) -> FrameDetections | None:
        return self._index.get((sequence_id, frame_index))

    def sequence_ids(self) -> list[str]:
        seen: dict[str, None] = {}
        for f in self.frames:
            seen.setdefault(f.sequence_id, None)
        return list(seen)

    def sequence(self, sequence_id: str) -> list[FrameDetections]:
        """Frames of one sequence sorted by frame index."""
        frames = [f for f in self.frames if f.sequence_id == sequence_id]
        return sorted(frames, key=lambda f: f.frame_index)

    def n_frames(self) -> int:
        return len(self.frames)

    def n_boxes(self) -> int:
        return sum(len(f.boxes) for f in self.frames)
