"""Deterministic synthetic sequence and candidate generator.

Simulates the two failure modes the temporal/spatial corrections target at
desk scale: frame-to-frame appearance heterogeneity (brightness swings,
occlusion and dropout frames with no object) and the score/overlap
discrepancy (the highest-scored candidate is not the best-localized one).

All randomness comes from SplitMix64 streams (see prng). Two independent
streams are used so ground truth and candidates reproduce separately:

  trajectory stream (seed ^ TAG_TRAJECTORY): 2 draws for the blob size,
    then per frame 1 brightness draw, 1 occlusion draw, 1 dropout draw.
  candidate stream (seed ^ TAG_CANDIDATES): per positive frame and per
    candidate, 4 geometry draws (center x/y offset, width/height delta)
    followed by 1 score-noise draw.

Candidate scores follow

    score = eps + (1 - 2*eps) * (rho * norm_iou + (1 - |rho|) * noise + max(0, -rho))

with norm_iou the frame-local min-max normalized IoU against ground truth.
The affine squash into [eps, 1-eps] is strictly monotone, so rho=1 makes the
score ranking equal the IoU ranking, rho=0 makes it pure noise, and rho=-1
inverts it.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .boxes import Box, FrameDetections, SequenceDataset, iou
from .errors import ConfigError
from .prng import TAG_CANDIDATES, TAG_TRAJECTORY, stream

SCORE_EPS = 1e-3


@dataclass(frozen=True)
class SynthConfig:
    sequence_id: str = "seq0"
    n_frames: int = 500
    image_w: int = 640
    image_h: int = 480
    start_x: float = 120.0
    start_y: float = 160.0
    vel_x: float = 1.2
    vel_y: float = 0.6
    size_min: float = 48.0
    size_max: float = 96.0
    brightness_min: float = 0.6
    brightness_max: float = 1.0
    occlusion_prob: float = 0.0
    dropout_prob: float = 0.0
    rho: float = 1.0
    candidates_per_frame: int = 8
    jitter_scale: float = 7.0
    seed: int = 42

    def __post_init__(self):
        if self.n_frames < 1:
            raise ConfigError(f"n_frames must be >= 1, got {self.n_frames}")
        if self.image_w < 2 or self.image_h < 2:
            raise ConfigError(f"image extent too small: {self.image_w}x{self.image_h}")
        if not 0.0 < self.size_min <= self.size_max:
            raise ConfigError(
                f"need 0 < size_min <= size_max, got {self.size_min}, {self.size_max}"
            )
        if self.size_max >= min(self.image_w, self.image_h):
            raise ConfigError("size_max must be smaller than the image extent")
        for name in ("occlusion_prob", "dropout_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        if not -1.0 <= self.rho <= 1.0:
            raise ConfigError(f"rho must lie in [-1, 1], got {self.rho}")
        if self.candidates_per_frame < 1:
            raise ConfigError(
                f"candidates_per_frame must be >= 1, got {self.candidates_per_frame}"
            )
        if self.jitter_scale < 0.0:
            raise ConfigError(f"jitter_scale must be >= 0, got {self.jitter_scale}")
        if not 0.0 < self.brightness_min <= self.brightness_max:
            raise ConfigError("need 0 < brightness_min <= brightness_max")

    @staticmethod
    def from_mapping(values: dict[str, str]) -> "SynthConfig":
        known = {f.name: f for f in fields(SynthConfig)}
        kwargs: dict[str, object] = {}
        for key, raw in values.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            ftype = known[key].type
            try:
                if ftype == "int":
                    kwargs[key] = int(raw)
                elif ftype == "float":
                    kwargs[key] = float(raw)
                else:
                    kwargs[key] = raw
            except ValueError:
                raise ConfigError(f"config key {key!r} has malformed value {raw!r}") from None
        return SynthConfig(**kwargs)


@dataclass(frozen=True)
class _FrameState:
    frame_index: int
    box: Box | None  # None on occluded/dropout (negative) frames
    brightness: float


def _simulate(cfg: SynthConfig) -> list[_FrameState]:
    rng = stream(cfg.seed, TAG_TRAJECTORY)
    w = rng.uniform_in(cfg.size_min, cfg.size_max)
    h = rng.uniform_in(cfg.size_min, cfg.size_max)
    states = []
    for t in range(cfg.n_frames):
        brightness = rng.uniform_in(cfg.brightness_min, cfg.brightness_max)
        occluded = rng.bernoulli(cfg.occlusion_prob)
        dropped = rng.bernoulli(cfg.dropout_prob)
        cx = min(max(cfg.start_x + t * cfg.vel_x, w / 2), cfg.image_w - w / 2)
        cy = min(max(cfg.start_y + t * cfg.vel_y, h / 2), cfg.image_h - h / 2)
        box = None
        if not occluded and not dropped:
            box = Box(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2, 1.0)
        states.append(_FrameState(t, box, brightness))
    return states


def generate_ground_truth(cfg: SynthConfig) -> SequenceDataset:
    """One sequence with at most one object per frame; negative frames are empty.

    The blob drifts with the configured velocity and is clamped so its box
    never leaves the image.
    """
    dataset = SequenceDataset()
    for st in _simulate(cfg):
        boxes = [st.box] if st.box is not None else []
        dataset.add(FrameDetections(cfg.sequence_id, st.frame_index, boxes))
    return dataset


def _candidate_geometry(gt: Box, rng, sigma: float) -> Box:
    """Center shift plus size delta applied to the corners directly, so
    sigma=0 reproduces the ground-truth box bit for bit."""
    dx = rng.uniform_in(-sigma, sigma)
    dy = rng.uniform_in(-sigma, sigma)
    dw = rng.uniform_in(-sigma, sigma)
    dh = rng.uniform_in(-sigma, sigma)
    x1, x2 = gt.x1 + dx - dw / 2, gt.x2 + dx + dw / 2
    y1, y2 = gt.y1 + dy - dh / 2, gt.y2 + dy + dh / 2
    if x2 - x1 < 2.0:
        cx = (x1 + x2) / 2
        x1, x2 = cx - 1.0, cx + 1.0
    if y2 - y1 < 2.0:
        cy = (y1 + y2) / 2
        y1, y2 = cy - 1.0, cy + 1.0
    return Box(x1, y1, x2, y2, 1.0)


def corrupt_candidates(gt: SequenceDataset, cfg: SynthConfig) -> SequenceDataset:
    """Jittered copies of each ground-truth box with discrepancy-dialed scores.

    Negative frames stay empty. With jitter_scale=0 every candidate equals
    the ground truth; with rho=1 the score order equals the IoU order on
    every frame.
    """
    rng = stream(cfg.seed, TAG_CANDIDATES)
    out = SequenceDataset()
    for frame in gt.frames:
        if not frame.boxes:
            out.add(FrameDetections(frame.sequence_id, frame.frame_index, []))
            continue
        gt_box = frame.boxes[0]
        geoms = []
        noises = []
        for _ in range(cfg.candidates_per_frame):
            geoms.append(_candidate_geometry(gt_box, rng, cfg.jitter_scale))
            noises.append(rng.uniform())
        ious = np.array([iou(c, gt_box) for c in geoms])
        spread = ious.max() - ious.min()
        norm = (ious - ious.min()) / spread if spread > 0 else np.ones_like(ious)
        inner = cfg.rho * norm + (1.0 - abs(cfg.rho)) * np.array(noises) + max(0.0, -cfg.rho)
        scores = SCORE_EPS + (1.0 - 2.0 * SCORE_EPS) * inner
        boxes = [g.with_score(float(s)) for g, s in zip(geoms, scores)]
        out.add(FrameDetections(frame.sequence_id, frame.frame_index, boxes))
    return out


def render_frames(cfg: SynthConfig) -> list[np.ndarray]:
    """Optional raster mode: grayscale uint8 frames for the temporal demo.

    The blob is a filled ellipse whose intensity scales with the per-frame
    brightness draw; the background is a dim constant under the same
    brightness. Uses the trajectory stream only, so rasters match the box
    ground truth frame for frame.
    """
    frames = []
    ys, xs = np.mgrid[0 : cfg.image_h, 0 : cfg.image_w]
    for st in _simulate(cfg):
        background = 30.0 * st.brightness
        img = np.full((cfg.image_h, cfg.image_w), background)
        if st.box is not None:
            b = st.box
            cx, cy = (b.x1 + b.x2) / 2, (b.y1 + b.y2) / 2
            rx, ry = (b.x2 - b.x1) / 2, (b.y2 - b.y1) / 2
            inside = ((xs - cx) / rx) ** 2 + ((ys - cy) / ry) ** 2 <= 1.0
            img[inside] = 200.0 * st.brightness
        frames.append(np.clip(np.rint(img), 0, 255).astype(np.uint8))
    return frames
