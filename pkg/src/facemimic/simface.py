"""Parametric simulated animatronic face.

Deterministic forward model from motor commands to landmarks and rendered
self-images, a landmark detector for those images, and procedurally distorted
"subject" rigs used as stand-ins for human faces at evaluation time.

Rendering convention: the landmark blobs live in channel 0 of the RGB image,
anti-aliased skin-crease polylines and the background "skull" texture live in
channels 1 and 2. Compositing order is fixed (background, edges, blobs) so
overlaps are reproducible bit-for-bit.
"""

from __future__ import annotations

import hashlib
import json
import math

import numpy as np

from .errors import DimensionError, RangeError
from .landmarks import N_LANDMARKS, LandmarkSet

GRID_VALUES = (0.0, 0.25, 0.5, 0.75, 1.0)
GRID_STEP = 0.25
N_CLASSES = 5

BLOB_AMPLITUDE = 0.85
EDGE_AMPLITUDE = (0.35, 0.28)  # channels 1, 2
EDGE_HALFWIDTH = 0.6  # px
DETECT_TAU = 0.10  # confidence-zeroing threshold, fraction of blob amplitude
DETECT_FLOOR = 0.05  # response floor, fraction of blob amplitude
DETECT_REFINE_ITERS = 4

RIG_FORMAT = "facemimic-rig-v1"


class MotorCommand:
    """N motor angles, each on the 5-level grid {0, 0.25, 0.5, 0.75, 1}."""

    __slots__ = ("values",)

    def __init__(self, values):
        vals = np.asarray(values, dtype=np.float64)
        if vals.ndim != 1 or vals.size < 1:
            raise DimensionError(f"command must be a non-empty vector, got shape {vals.shape}")
        if not np.isin(vals, GRID_VALUES).all():
            raise ValueError(f"command values must be on the grid {GRID_VALUES}: {vals}")
        vals = vals.copy()
        vals.setflags(write=False)
        self.values = vals

    @classmethod
    def zeros(cls, n: int) -> "MotorCommand":
        return cls(np.zeros(n))

    @classmethod
    def from_classes(cls, indices) -> "MotorCommand":
        idx = np.asarray(indices)
        return cls(idx.astype(np.float64) * GRID_STEP)

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def classes(self) -> np.ndarray:
        return np.rint(self.values / GRID_STEP).astype(np.int64)

    def __eq__(self, other):
        if not isinstance(other, MotorCommand):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash(self.values.tobytes())

    def __repr__(self):
        return f"MotorCommand({list(self.values)})"


class SelfImage:
    """w x h x 3 image with float32 values in [0, 1], stored as (h, w, 3)."""

    __slots__ = ("pixels",)

    def __init__(self, pixels):
        px = np.asarray(pixels, dtype=np.float32)
        if px.ndim != 3 or px.shape[2] != 3:
            raise DimensionError(f"expected (h, w, 3) image, got shape {px.shape}")
        if not np.isfinite(px).all():
            raise ValueError("image contains non-finite values")
        if px.min() < 0.0 or px.max() > 1.0:
            raise ValueError("image values must lie in [0, 1]")
        px = px.copy()
        px.setflags(write=False)
        self.pixels = px

    @property
    def dims(self) -> tuple[int, int]:
        """(w, h)"""
        return (self.pixels.shape[1], self.pixels.shape[0])

    def to_uint8(self) -> np.ndarray:
        return np.rint(self.pixels * 255.0).astype(np.uint8)

    @classmethod
    def from_uint8(cls, arr) -> "SelfImage":
        return cls(np.asarray(arr, dtype=np.float32) / np.float32(255.0))

    def quantized(self) -> "SelfImage":
        """The image as it survives 8-bit storage; fixed point for PNG round trips."""
        return SelfImage.from_uint8(self.to_uint8())

    def chw(self) -> np.ndarray:
        """(3, h, w) float32 view for network input."""
        return np.ascontiguousarray(self.pixels.transpose(2, 0, 1))

    def __eq__(self, other):
        if not isinstance(other, SelfImage):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels)

    def __hash__(self):
        return hash(self.pixels.tobytes())


class FaceRig:
    """Immutable simulator parameters: neutral landmark layout plus per-motor
    displacement fields (pixels per unit motor angle), blob width, edge
    topology, and image dimensions. `rig_id` is the SHA-256 of the canonical
    serialization of every other field.
    """

    def __init__(self, neutral_layout, displacement_fields, blob_sigma,
                 edge_topology, image_dims, meta=None):
        layout = np.asarray(neutral_layout, dtype=np.float64)
        fields = np.asarray(displacement_fields, dtype=np.float64)
        w, h = int(image_dims[0]), int(image_dims[1])
        if layout.shape != (N_LANDMARKS, 2):
            raise DimensionError(f"neutral layout must be {N_LANDMARKS}x2, got {layout.shape}")
        if fields.ndim != 3 or fields.shape[1:] != (N_LANDMARKS, 2) or fields.shape[0] < 1:
            raise DimensionError(
                f"displacement fields must be Nx{N_LANDMARKS}x2 with N >= 1, got {fields.shape}"
            )
        if not np.isfinite(layout).all() or not np.isfinite(fields).all():
            raise ValueError("rig geometry must be finite")
        if blob_sigma <= 0:
            raise ValueError("blob_sigma must be positive")
        if w < 8 or h < 8:
            raise ValueError(f"image dims too small: {(w, h)}")
        topo = [tuple(int(i) for i in line) for line in edge_topology]
        for line in topo:
            if len(line) < 2 or any(i < 0 or i >= N_LANDMARKS for i in line):
                raise ValueError(f"bad edge polyline: {line}")

        # Containment: a global margin >= the worst-case total displacement
        # must keep every neutral position inside the frame.
        per_lm = np.abs(fields).sum(axis=0)  # (53, 2)
        margin = float(per_lm.max()) if fields.size else 0.0
        lo_ok = (layout > margin).all()
        hi_ok = (layout[:, 0] < w - 1 - margin).all() and (layout[:, 1] < h - 1 - margin).all()
        if not (lo_ok and hi_ok):
            raise ValueError(
                f"neutral layout violates containment margin {margin:.2f}px for dims {(w, h)}"
            )

        layout.setflags(write=False)
        fields.setflags(write=False)
        self.neutral_layout = layout
        self.displacement_fields = fields
        self.blob_sigma = float(blob_sigma)
        self.edge_topology = tuple(topo)
        self.image_dims = (w, h)
        self.meta = dict(meta or {})
        # Per-landmark worst-case displacement (max over axes), used by the detector.
        self._max_disp = per_lm.max(axis=1)
        self._max_disp.setflags(write=False)
        self.rig_id = hashlib.sha256(canonical_rig_json(self).encode("utf-8")).hexdigest()
        self._background = _build_background(w, h)
        self._background.setflags(write=False)
        self._static_image = None

    @property
    def n_motors(self) -> int:
        return self.displacement_fields.shape[0]

    @property
    def background(self) -> np.ndarray:
        return self._background

    def max_displacement(self, k: int) -> float:
        return float(self._max_disp[k])

    def __repr__(self):
        return f"FaceRig({self.n_motors} motors, dims={self.image_dims}, id={self.rig_id[:12]})"


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def canonical_rig_json(rig: FaceRig) -> str:
    """Canonical text form of all rig fields except rig_id (basis of the hash)."""
    doc = {
        "format": RIG_FORMAT,
        "image_dims": list(rig.image_dims),
        "blob_sigma": rig.blob_sigma,
        "neutral_layout": [[float(x), float(y)] for x, y in rig.neutral_layout],
        "displacement_fields": [
            [[float(x), float(y)] for x, y in field] for field in rig.displacement_fields
        ],
        "edge_topology": [list(line) for line in rig.edge_topology],
        "meta": rig.meta,
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def save_rig(rig: FaceRig, path) -> None:
    doc = json.loads(canonical_rig_json(rig))
    doc["rig_id"] = rig.rig_id
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_rig(path) -> FaceRig:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != RIG_FORMAT:
        raise ValueError(f"not a rig document: {path}")
    rig = FaceRig(
        neutral_layout=doc["neutral_layout"],
        displacement_fields=doc["displacement_fields"],
        blob_sigma=doc["blob_sigma"],
        edge_topology=doc["edge_topology"],
        image_dims=doc["image_dims"],
        meta=doc.get("meta", {}),
    )
    stored = doc.get("rig_id")
    if stored is not None and stored != rig.rig_id:
        raise ValueError(f"rig_id mismatch in {path}: stored {stored}, recomputed {rig.rig_id}")
    return rig


# ---------------------------------------------------------------------------
# Forward model and rendering
# ---------------------------------------------------------------------------

def _check_command(rig: FaceRig, cmd: MotorCommand) -> None:
    if cmd.n != rig.n_motors:
        raise DimensionError(f"command has {cmd.n} values, rig has {rig.n_motors} motors")


def forward_landmarks(rig: FaceRig, cmd: MotorCommand) -> LandmarkSet:
    """Landmark positions for a command: neutral + sum of angle-scaled fields.

    Deformation is linear in the motor angles; confidences are 1.
    """
    _check_command(rig, cmd)
    xy = rig.neutral_layout + np.tensordot(cmd.values, rig.displacement_fields, axes=1)
    pts = np.column_stack([xy, np.ones(N_LANDMARKS)])
    return LandmarkSet(pts)


def _build_background(w: int, h: int) -> np.ndarray:
    """Fixed skull texture: an elliptical dome plus a gentle weave, channels 1-2 only."""
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    cx, cy = w / 2.0, h * 0.55
    dome = np.clip(1.0 - ((xs - cx) / (w * 0.52)) ** 2 - ((ys - cy) / (h * 0.60)) ** 2, 0.0, None)
    weave_g = np.sin(2 * np.pi * xs * 3.0 / w) * np.cos(2 * np.pi * ys * 2.0 / h)
    weave_b = np.cos(2 * np.pi * xs * 2.0 / w) * np.sin(2 * np.pi * ys * 3.0 / h)
    g = 0.22 + 0.12 * dome + 0.025 * weave_g
    b = 0.24 + 0.10 * dome + 0.020 * weave_b
    r = np.zeros_like(g)
    return np.stack([r, g, b], axis=2).astype(np.float32)


def _accumulate_edge_alpha(alpha: np.ndarray, p0, p1) -> None:
    """Max-composite anti-aliased coverage of segment p0->p1 into `alpha`."""
    h, w = alpha.shape
    pad = EDGE_HALFWIDTH + 1.5
    x0 = max(0, int(math.floor(min(p0[0], p1[0]) - pad)))
    x1 = min(w, int(math.ceil(max(p0[0], p1[0]) + pad)) + 1)
    y0 = max(0, int(math.floor(min(p0[1], p1[1]) - pad)))
    y1 = min(h, int(math.ceil(max(p0[1], p1[1]) + pad)) + 1)
    if x0 >= x1 or y0 >= y1:
        return
    ys, xs = np.mgrid[y0:y1, x0:x1].astype(np.float64)
    dx, dy = p1[0] - p0[0], p1[1] - p0[1]
    seg_len2 = dx * dx + dy * dy
    if seg_len2 == 0.0:
        t = np.zeros_like(xs)
    else:
        t = np.clip(((xs - p0[0]) * dx + (ys - p0[1]) * dy) / seg_len2, 0.0, 1.0)
    ox = xs - (p0[0] + t * dx)
    oy = ys - (p0[1] + t * dy)
    d = np.sqrt(ox * ox + oy * oy)
    cov = np.clip(EDGE_HALFWIDTH + 0.5 - d, 0.0, 1.0)
    np.maximum(alpha[y0:y1, x0:x1], cov.astype(np.float32), out=alpha[y0:y1, x0:x1])


def _add_blob(ch: np.ndarray, cx: float, cy: float, sigma: float, amp: float) -> None:
    h, w = ch.shape
    r = 3.5 * sigma
    x0 = max(0, int(math.floor(cx - r)))
    x1 = min(w, int(math.ceil(cx + r)) + 1)
    y0 = max(0, int(math.floor(cy - r)))
    y1 = min(h, int(math.ceil(cy + r)) + 1)
    if x0 >= x1 or y0 >= y1:
        return
    ys, xs = np.mgrid[y0:y1, x0:x1].astype(np.float64)
    g = np.exp(-((xs - cx) ** 2 + (ys - cy) ** 2) / (2.0 * sigma * sigma))
    ch[y0:y1, x0:x1] += (amp * g).astype(np.float32)


def render(rig: FaceRig, cmd: MotorCommand) -> SelfImage:
    """Deterministic self-image: background, anti-aliased edge polylines at the
    commanded landmark positions, then a Gaussian blob per landmark in channel 0.
    """
    _check_command(rig, cmd)
    lms = forward_landmarks(rig, cmd)
    img = rig.background.copy()
    h, w = img.shape[:2]

    alpha = np.zeros((h, w), dtype=np.float32)
    xy = lms.xy
    for line in rig.edge_topology:
        for a, b in zip(line[:-1], line[1:]):
            _accumulate_edge_alpha(alpha, xy[a], xy[b])
    img[:, :, 1] += EDGE_AMPLITUDE[0] * alpha
    img[:, :, 2] += EDGE_AMPLITUDE[1] * alpha

    ch0 = img[:, :, 0]
    for k in range(N_LANDMARKS):
        _add_blob(ch0, xy[k, 0], xy[k, 1], rig.blob_sigma, BLOB_AMPLITUDE)

    np.clip(img, 0.0, 1.0, out=img)
    return SelfImage(img)


def static_self_image(rig: FaceRig) -> SelfImage:
    """The all-zero-command self-image the generative model is conditioned on."""
    if rig._static_image is None:
        rig._static_image = render(rig, MotorCommand.zeros(rig.n_motors))
    return rig._static_image


# ---------------------------------------------------------------------------
# Landmark detection on rendered (or generated) images
# ---------------------------------------------------------------------------

def detect_landmarks(rig: FaceRig, img: SelfImage) -> LandmarkSet:
    """Locate the blob of each landmark near its neutral position.

    The search window per landmark is a square of half-width
    (worst-case displacement + 3 sigma) centered on the neutral position. The
    floored channel-0 response is reduced to a position with an
    intensity-weighted centroid which is then sharpened by a few
    Gaussian-windowed (mean-shift) refinements; the soft window suppresses
    neighboring blobs that leak into the search window in dense regions.
    Landmarks whose peak response falls below tau report confidence 0 at the
    neutral position.
    """
    if img.dims != rig.image_dims:
        raise DimensionError(f"image dims {img.dims} do not match rig dims {rig.image_dims}")
    w, h = rig.image_dims
    sigma = rig.blob_sigma
    response = np.maximum(
        img.pixels[:, :, 0].astype(np.float64) - DETECT_FLOOR * BLOB_AMPLITUDE, 0.0
    )
    tau = DETECT_TAU * BLOB_AMPLITUDE
    sw2 = 2.0 * (1.5 * sigma) ** 2

    pts = np.empty((N_LANDMARKS, 3), dtype=np.float64)
    for k in range(N_LANDMARKS):
        nx, ny = rig.neutral_layout[k]
        hw = rig.max_displacement(k) + 3.0 * sigma
        x0 = max(0, int(math.floor(nx - hw)))
        x1 = min(w, int(math.ceil(nx + hw)) + 1)
        y0 = max(0, int(math.floor(ny - hw)))
        y1 = min(h, int(math.ceil(ny + hw)) + 1)
        crop = response[y0:y1, x0:x1]
        peak = crop.max() if crop.size else 0.0
        raw_peak = peak + DETECT_FLOOR * BLOB_AMPLITUDE
        if raw_peak < tau:
            pts[k] = (nx, ny, 0.0)
            continue
        ys, xs = np.mgrid[y0:y1, x0:x1].astype(np.float64)
        mass = crop.sum()
        cx = float((crop * xs).sum() / mass)
        cy = float((crop * ys).sum() / mass)
        for _ in range(DETECT_REFINE_ITERS):
            wgt = crop * np.exp(-((xs - cx) ** 2 + (ys - cy) ** 2) / sw2)
            m = wgt.sum()
            if m <= 0.0:
                break
            cx = float((wgt * xs).sum() / m)
            cy = float((wgt * ys).sum() / m)
        conf = min(raw_peak / BLOB_AMPLITUDE, 1.0)
        pts[k] = (cx, cy, conf)
    return LandmarkSet(pts)


# ---------------------------------------------------------------------------
# Default rig construction
# ---------------------------------------------------------------------------

# Landmark index blocks of the 53-point scheme.
JAW = list(range(0, 15))
BROW_L = list(range(15, 19))
BROW_R = list(range(19, 23))
NOSE_BRIDGE = list(range(23, 27))
NOSE_BASE = list(range(27, 32))
EYE_L = list(range(32, 38))
EYE_R = list(range(38, 44))
MOUTH = list(range(44, 52))
FOREHEAD = 52

EDGE_TOPOLOGY = (
    tuple(JAW),
    tuple(BROW_L),
    tuple(BROW_R),
    tuple(NOSE_BRIDGE),
    tuple(NOSE_BASE),
    tuple(EYE_L) + (EYE_L[0],),
    tuple(EYE_R) + (EYE_R[0],),
    tuple(MOUTH) + (MOUTH[0],),
    (FOREHEAD, NOSE_BRIDGE[0]),
)

# Per-landmark caps on worst-case displacement (px at the default 96x64 scale),
# chosen so detection windows of clustered landmarks stay separable.
_GROUP_CAPS = {
    "jaw": 2.6, "brow": 2.4, "bridge": 0.7, "base": 0.8,
    "eye": 1.2, "mouth": 1.3, "forehead": 2.4,
}


def _unit_layout() -> np.ndarray:
    """Neutral layout in face units (u, v in [-1, 1], v pointing down)."""
    pts = np.zeros((N_LANDMARKS, 2))
    t = np.arange(15) * math.pi / 14.0
    pts[JAW, 0] = -np.cos(t)
    pts[JAW, 1] = -0.15 + 1.15 * np.sin(t)
    for idx, sign in ((BROW_L, -1.0), (BROW_R, 1.0)):
        u = np.linspace(0.70, 0.20, 4) * sign
        arc = np.sin(np.linspace(0.0, math.pi, 4))
        pts[idx, 0] = u
        pts[idx, 1] = -0.62 - 0.10 * arc
    pts[NOSE_BRIDGE, 0] = 0.0
    pts[NOSE_BRIDGE, 1] = np.linspace(-0.40, 0.05, 4)
    pts[NOSE_BASE, 0] = np.array([-0.20, -0.10, 0.0, 0.10, 0.20])
    pts[NOSE_BASE, 1] = np.array([0.13, 0.16, 0.17, 0.16, 0.13])
    ang = np.arange(6) * math.pi / 3.0
    for idx, cx in ((EYE_L, -0.45), (EYE_R, 0.45)):
        pts[idx, 0] = cx + 0.26 * np.cos(ang)
        pts[idx, 1] = -0.30 + 0.20 * np.sin(ang)
    ang8 = np.arange(8) * math.pi / 4.0
    pts[MOUTH, 0] = 0.36 * np.cos(ang8)
    pts[MOUTH, 1] = 0.58 + 0.21 * np.sin(ang8)
    pts[FOREHEAD] = (0.0, -0.85)
    return pts


# (center u, center v, rho px at 96x64, kind, direction, gain px)
_MOTOR_DEFS = (
    ("brow_raise_l", -0.45, -0.62, 8.0, "dir", (0.0, -1.0), 2.2),
    ("brow_raise_r", 0.45, -0.62, 8.0, "dir", (0.0, -1.0), 2.2),
    ("eye_widen_l", -0.45, -0.30, 6.0, "radial", None, 1.1),
    ("eye_widen_r", 0.45, -0.30, 6.0, "radial", None, 1.1),
    ("smile_l", -0.36, 0.58, 9.0, "dir", (-0.55, -0.835), 2.2),
    ("smile_r", 0.36, 0.58, 9.0, "dir", (0.55, -0.835), 2.2),
    ("jaw_open", 0.0, 1.0, 12.0, "dir", (0.0, 1.0), 2.6),
    ("lip_raise", 0.0, 0.40, 6.0, "dir", (0.0, -1.0), 1.4),
    ("cheek_l", -0.62, 0.15, 9.0, "dir", (0.35, -0.937), 1.8),
    ("cheek_r", 0.62, 0.15, 9.0, "dir", (-0.35, -0.937), 1.8),
)


def _landmark_caps() -> np.ndarray:
    caps = np.empty(N_LANDMARKS)
    caps[JAW] = _GROUP_CAPS["jaw"]
    caps[BROW_L + BROW_R] = _GROUP_CAPS["brow"]
    caps[NOSE_BRIDGE] = _GROUP_CAPS["bridge"]
    caps[NOSE_BASE] = _GROUP_CAPS["base"]
    caps[EYE_L + EYE_R] = _GROUP_CAPS["eye"]
    caps[MOUTH] = _GROUP_CAPS["mouth"]
    caps[FOREHEAD] = _GROUP_CAPS["forehead"]
    return caps


def default_rig(dims: tuple[int, int] = (96, 64), n_motors: int = 10,
                blob_sigma: float = 0.7) -> FaceRig:
    """The standard desk-scale robot rig: 53-point face, 10 muscle-like motors.

    Only n_motors in [1, 10] are supported (the first n motor definitions are
    used); geometry scales with dims while keeping displacement magnitudes and
    the blob width in absolute pixels tuned for the default 96x64.
    """
    if not (1 <= n_motors <= len(_MOTOR_DEFS)):
        raise ValueError(f"n_motors must be in [1, {len(_MOTOR_DEFS)}]")
    w, h = int(dims[0]), int(dims[1])
    scale = min(w / 96.0, h / 64.0)
    cx, cy = w * 0.5, h * 0.52
    hx, hy = w * 0.40, h * 0.40

    unit = _unit_layout()
    layout = np.column_stack([cx + unit[:, 0] * hx, cy + unit[:, 1] * hy])

    fields = np.zeros((n_motors, N_LANDMARKS, 2))
    for m, (_, mu, mv, rho, kind, direction, gain) in enumerate(_MOTOR_DEFS[:n_motors]):
        center = np.array([cx + mu * hx, cy + mv * hy])
        delta = layout - center
        dist2 = (delta ** 2).sum(axis=1)
        weight = np.exp(-dist2 / (2.0 * (rho * scale) ** 2))
        if kind == "radial":
            norm = np.sqrt(dist2)[:, None] + 1e-9
            direction_k = delta / norm
        else:
            direction_k = np.broadcast_to(np.asarray(direction), (N_LANDMARKS, 2))
        fields[m] = gain * scale * weight[:, None] * direction_k

    # Cap each landmark's worst-case total displacement so detection windows
    # in dense regions (eyes, nose, mouth) stay separable.
    caps = _landmark_caps() * scale
    totals = np.abs(fields).sum(axis=0).max(axis=1)  # (53,)
    shrink = np.minimum(1.0, caps / np.maximum(totals, 1e-12))
    fields *= shrink[None, :, None]

    return FaceRig(
        neutral_layout=layout,
        displacement_fields=fields,
        blob_sigma=blob_sigma * scale,
        edge_topology=EDGE_TOPOLOGY,
        image_dims=(w, h),
        meta={"kind": "master", "name": "default", "scale": scale},
    )


# ---------------------------------------------------------------------------
# Pseudo-human subjects
# ---------------------------------------------------------------------------

def make_subject(master_rig: FaceRig, seed: int, distortion: float) -> FaceRig:
    """A procedurally distorted variant of the master rig standing in for a human.

    The neutral layout gets an affine transform (per-axis scale within
    1 +/- 0.3*distortion, shear up to 0.1*distortion, a small translation) and
    each displacement field is rescaled by a factor in
    [1 - 0.5*distortion, 1 + 0.5*distortion]. Deterministic in (seed,
    distortion). If the transformed layout would violate containment it is
    uniformly shrunk about its centroid until it fits.
    """
    if not (0.0 <= distortion <= 1.0):
        raise RangeError(f"distortion must be in [0, 1], got {distortion}")
    rng = np.random.default_rng(np.random.SeedSequence([0x5AB0, int(seed)]))
    u = rng.uniform(-1.0, 1.0, size=6)
    w, h = master_rig.image_dims

    sx = 1.0 + 0.3 * distortion * u[0]
    sy = 1.0 + 0.3 * distortion * u[1]
    kx = 0.1 * distortion * u[2]
    ky = 0.1 * distortion * u[3]
    tx = 0.03 * w * distortion * u[4]
    ty = 0.03 * h * distortion * u[5]

    layout = master_rig.neutral_layout
    center = layout.mean(axis=0)
    affine = np.array([[sx, kx * sx], [ky * sy, sy]])
    # Composed so the identity transform reproduces the master layout exactly.
    offset = center - center @ affine.T + np.array([tx, ty])
    new_layout = layout @ affine.T + offset

    factors = 1.0 + 0.5 * distortion * rng.uniform(-1.0, 1.0, size=master_rig.n_motors)
    new_fields = master_rig.displacement_fields * factors[:, None, None]

    # Fit-up: recenter/shrink about the centroid only if containment would fail.
    margin = float(np.abs(new_fields).sum(axis=0).max()) + 0.5
    lo = np.array([margin, margin])
    hi = np.array([w - 1 - margin, h - 1 - margin])
    c0 = new_layout.mean(axis=0)
    c = np.clip(c0, lo + 1.0, hi - 1.0)
    rel = new_layout - c0
    shrink = 1.0
    span_hi = rel.max(axis=0)
    span_lo = rel.min(axis=0)
    for axis in range(2):
        if span_hi[axis] > 0:
            shrink = min(shrink, (hi[axis] - c[axis]) / span_hi[axis])
        if span_lo[axis] < 0:
            shrink = min(shrink, (lo[axis] - c[axis]) / span_lo[axis])
    if shrink < 1.0 or not np.array_equal(c, c0):
        new_layout = c + rel * min(shrink, 1.0)

    return FaceRig(
        neutral_layout=new_layout,
        displacement_fields=new_fields,
        blob_sigma=master_rig.blob_sigma,
        edge_topology=master_rig.edge_topology,
        image_dims=master_rig.image_dims,
        meta={
            "kind": "subject",
            "seed": int(seed),
            "distortion": float(distortion),
            "parent": master_rig.rig_id,
        },
    )
