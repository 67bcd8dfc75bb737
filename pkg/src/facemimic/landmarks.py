"""Facial-landmark containers, range-based retargeting, mask embedding, and distances.

Coordinates are pixels with x along image width (column) and y along height
(row). A face is always exactly 53 landmarks of (x, y, confidence).
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateRangeError, DimensionError

log = logging.getLogger(__name__)

N_LANDMARKS = 53


class LandmarkSet:
    """53 landmarks of (x, y, confidence); immutable after construction.

    `clamped` counts coordinates that were clamped by the operation that
    produced this set (0 for raw detections); it is diagnostic only and
    excluded from equality.
    """

    __slots__ = ("points", "clamped")

    def __init__(self, points, clamped: int = 0):
        pts = np.asarray(points, dtype=np.float64)
        if pts.shape != (N_LANDMARKS, 3):
            raise DimensionError(f"expected {N_LANDMARKS}x3 landmark array, got {pts.shape}")
        if not np.isfinite(pts[:, :2]).all():
            raise ValueError("landmark coordinates must be finite")
        conf = pts[:, 2]
        if not ((conf >= 0.0) & (conf <= 1.0)).all():
            raise ValueError("confidences must lie in [0, 1]")
        pts = pts.copy()
        pts.setflags(write=False)
        self.points = pts
        self.clamped = int(clamped)

    @property
    def xy(self) -> np.ndarray:
        return self.points[:, :2]

    @property
    def confidence(self) -> np.ndarray:
        return self.points[:, 2]

    def __eq__(self, other):
        if not isinstance(other, LandmarkSet):
            return NotImplemented
        return np.array_equal(self.points, other.points)

    def __hash__(self):
        return hash(self.points.tobytes())

    def __repr__(self):
        return f"LandmarkSet(mean_conf={self.confidence.mean():.3f})"


@dataclass(frozen=True)
class RangeBox:
    """Per-landmark coordinate range: min/max of (x, y) over observed frames."""

    min_xy: tuple[float, float]
    max_xy: tuple[float, float]

    def __post_init__(self):
        if self.max_xy[0] < self.min_xy[0] or self.max_xy[1] < self.min_xy[1]:
            raise ValueError("RangeBox max must be >= min per axis")


@dataclass
class LandmarkMask:
    """Two-channel image embedding of a landmark set.

    occupancy: (h, w) uint8, 1 where a positive-confidence landmark was rasterized.
    confidence: (h, w) float32, max confidence among landmarks sharing a pixel.
    clamped: number of landmarks whose pixel was clamped into the frame.
    """

    occupancy: np.ndarray
    confidence: np.ndarray
    clamped: int = 0

    def channels(self) -> np.ndarray:
        """Stack as (2, h, w) float32 in network channel order."""
        return np.stack(
            [self.occupancy.astype(np.float32), self.confidence.astype(np.float32)]
        )


def ranges_to_arrays(ranges) -> tuple[np.ndarray, np.ndarray]:
    """Convert a 53-entry RangeBox sequence to (lo, hi) arrays of shape (53, 2)."""
    if len(ranges) != N_LANDMARKS:
        raise DimensionError(f"expected {N_LANDMARKS} range boxes, got {len(ranges)}")
    lo = np.array([r.min_xy for r in ranges], dtype=np.float64)
    hi = np.array([r.max_xy for r in ranges], dtype=np.float64)
    return lo, hi


def arrays_to_ranges(lo: np.ndarray, hi: np.ndarray) -> list[RangeBox]:
    return [
        RangeBox((float(l[0]), float(l[1])), (float(h[0]), float(h[1])))
        for l, h in zip(lo, hi)
    ]


def compute_ranges(frames) -> list[RangeBox]:
    """Per-landmark, per-axis min/max of (x, y) over a sequence of LandmarkSets.

    Requires at least two frames. Degenerate (zero-width) axes are legal in
    the output but are logged, since they cannot serve as source ranges for
    normalize().
    """
    frames = list(frames)
    if len(frames) < 2:
        raise ValueError(f"need at least 2 frames to compute ranges, got {len(frames)}")
    stack = np.stack([f.xy for f in frames])  # (F, 53, 2)
    lo = stack.min(axis=0)
    hi = stack.max(axis=0)
    degenerate = np.nonzero((hi - lo) == 0.0)
    if degenerate[0].size:
        pairs = sorted({(int(i), "xy"[int(a)]) for i, a in zip(*degenerate)})
        log.warning("degenerate (zero-width) ranges for landmark/axis: %s", pairs)
    return arrays_to_ranges(lo, hi)


def normalize(src: LandmarkSet, human_ranges, robot_ranges) -> LandmarkSet:
    """Retarget landmark coordinates from the human range box to the robot's.

    Per landmark and axis the map is affine: the human min/max endpoints go to
    the robot min/max endpoints. Inputs outside the human range are clamped to
    it first (the count is surfaced on the result's `clamped` field).
    Confidences pass through unchanged.
    """
    h_lo, h_hi = ranges_to_arrays(human_ranges)
    r_lo, r_hi = ranges_to_arrays(robot_ranges)
    span = h_hi - h_lo
    if (span <= 0.0).any():
        idx, axis = np.argwhere(span <= 0.0)[0]
        raise DegenerateRangeError(int(idx), int(axis))
    xy = src.xy
    clipped = np.clip(xy, h_lo, h_hi)
    n_clamped = int((clipped != xy).sum())
    if n_clamped:
        log.debug("normalize clamped %d coordinate(s) into the human range", n_clamped)
    out_xy = (clipped - h_lo) * (r_hi - r_lo) / span + r_lo
    pts = np.column_stack([out_xy, src.confidence])
    return LandmarkSet(pts, clamped=n_clamped)


def encode_mask(lms: LandmarkSet, dims: tuple[int, int]) -> LandmarkMask:
    """Rasterize a landmark set into the two-channel (occupancy, confidence) mask.

    dims is (w, h). Each landmark with confidence > 0 lands on the pixel
    (round-half-up(x), round-half-up(y)), clamped into the frame; colliding
    landmarks keep the maximum confidence. Zero-confidence landmarks are
    omitted from both channels.
    """
    w, h = int(dims[0]), int(dims[1])
    occupancy = np.zeros((h, w), dtype=np.uint8)
    confidence = np.zeros((h, w), dtype=np.float32)
    keep = lms.confidence > 0.0
    xy = lms.xy[keep]
    conf = lms.confidence[keep]
    xs = np.floor(xy[:, 0] + 0.5).astype(np.int64)
    ys = np.floor(xy[:, 1] + 0.5).astype(np.int64)
    cx = np.clip(xs, 0, w - 1)
    cy = np.clip(ys, 0, h - 1)
    n_clamped = int(((cx != xs) | (cy != ys)).sum())
    occupancy[cy, cx] = 1
    np.maximum.at(confidence, (cy, cx), conf.astype(np.float32))
    return LandmarkMask(occupancy, confidence, clamped=n_clamped)


def landmark_distance(a: LandmarkSet, b: LandmarkSet) -> float:
    """Mean Euclidean distance between corresponding landmarks, in pixels."""
    d = np.linalg.norm(a.xy - b.xy, axis=1)
    return float(d.sum() / N_LANDMARKS)


def _pixels(img) -> np.ndarray:
    return img.pixels if hasattr(img, "pixels") else np.asarray(img)


def image_distance(a, b) -> float:
    """Mean squared error over all w*h*3 channel values of two images in [0, 1]."""
    pa, pb = _pixels(a), _pixels(b)
    if pa.shape != pb.shape:
        raise DimensionError(f"image shapes differ: {pa.shape} vs {pb.shape}")
    diff = pa.astype(np.float64) - pb.astype(np.float64)
    return float((diff * diff).sum() / diff.size)


# ---------------------------------------------------------------------------
# CSV formats (UTF-8, LF line endings)
# ---------------------------------------------------------------------------

LANDMARK_HEADER = ["index", "x", "y", "confidence"]
RANGE_HEADER = ["index", "hmin_x", "hmin_y", "hmax_x", "hmax_y"]


def save_landmarks_csv(lms: LandmarkSet, path) -> None:
    """Write the 53-row `index,x,y,confidence` file. Floats are repr-exact."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LANDMARK_HEADER)
        for i, (x, y, c) in enumerate(lms.points):
            writer.writerow([i, repr(float(x)), repr(float(y)), repr(float(c))])


def load_landmarks_csv(path) -> LandmarkSet:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != LANDMARK_HEADER:
            raise ValueError(f"unexpected landmark CSV header in {path}: {header}")
        rows = [(float(r[1]), float(r[2]), float(r[3])) for r in reader]
    if len(rows) != N_LANDMARKS:
        raise DimensionError(f"{path}: expected {N_LANDMARKS} rows, got {len(rows)}")
    return LandmarkSet(np.array(rows, dtype=np.float64))


def save_ranges_csv(ranges, path) -> None:
    lo, hi = ranges_to_arrays(ranges)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RANGE_HEADER)
        for i in range(N_LANDMARKS):
            writer.writerow(
                [i, repr(lo[i, 0]), repr(lo[i, 1]), repr(hi[i, 0]), repr(hi[i, 1])]
            )


def load_ranges_csv(path) -> list[RangeBox]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != RANGE_HEADER:
            raise ValueError(f"unexpected range CSV header in {path}: {header}")
        rows = [[float(v) for v in r[1:5]] for r in reader]
    if len(rows) != N_LANDMARKS:
        raise DimensionError(f"{path}: expected {N_LANDMARKS} rows, got {len(rows)}")
    arr = np.array(rows, dtype=np.float64)
    return arrays_to_ranges(arr[:, :2], arr[:, 2:])
