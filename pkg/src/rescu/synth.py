"""Deterministic synthetic scenes with known patterns, VPs and spacing.

Instances of a textured template are laid out on a world plane and imaged
through a plane-to-image homography (either frontal or a pinhole camera
looking at the plane obliquely). Besides the raster, a scene carries the
exact feature set obtained by mapping the template keypoints through the same
homography, so discovery can be tested without detector noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from .errors import InstanceOutOfBounds
from .features import VisualWordIndex
from .types import (
    DEFAULT_DESCRIPTOR_DIM, Feature, FeatureSet, GroundTruth, GtRegion, RecurringPattern, RpMatrix, instance_regions,
)

BACKGROUND = 0.5


@dataclass(frozen=True)
class Shape:
    kind: str  # disk | ring | square | triangle | cross
    cx: float
    cy: float
    size: float
    bright: bool = True


@dataclass(frozen=True)
class Template:
    """A square patch of shapes; every shape contributes one keypoint."""

    width: float
    height: float
    shapes: tuple[Shape, ...]
    seed: int = 0

    def keypoints(self, dim: int = DEFAULT_DESCRIPTOR_DIM) -> list[tuple[float, float, float, float, np.ndarray]]:
        rng = np.random.default_rng(10_000 + self.seed)
        out = []
        for k, sh in enumerate(self.shapes):
            desc = rng.normal(size=dim)
            desc /= np.linalg.norm(desc)
            theta = (0.3 + 0.9 * k) % (2 * math.pi)
            out.append((sh.cx, sh.cy, sh.size / math.sqrt(2.0), theta, desc))
        return out


@dataclass(frozen=True)
class Motif:
    template: Template
    offsets: tuple[tuple[float, float], ...]  # instance top-left corners on the plane


@dataclass(frozen=True)
class SceneSpec:
    motifs: tuple[Motif, ...]
    homography: tuple[tuple[float, ...], ...]  # plane -> image, 3x3
    image_size: tuple[int, int] = (640, 480)
    noise_px: float = 0.0
    descriptor_noise: float = 0.01
    n_distractors: int = 0
    seed: int = 0
    perspective: bool = False

    @property
    def H(self) -> np.ndarray:
        return np.array(self.homography, dtype=float)


@dataclass
class Scene:
    image: Optional[np.ndarray]
    features: FeatureSet
    gt: GroundTruth
    vp_gt: Optional[tuple[float, float]]
    ts_gt: bool
    # per motif: rows = template keypoints, columns = instances, cells = feature ids
    gt_matrices: list[RpMatrix] = field(default_factory=list)
    gt_centers: list[np.ndarray] = field(default_factory=list)


def _shape_mask(kind: str, dx: np.ndarray, dy: np.ndarray, size: float) -> np.ndarray:
    """Anti-aliased coverage in [0, 1] via a clipped signed distance."""
    if kind == "disk":
        sd = np.hypot(dx, dy) - size
    elif kind == "ring":
        r = np.hypot(dx, dy)
        sd = np.maximum(r - size, 0.5 * size - r)
    elif kind == "square":
        sd = np.maximum(np.abs(dx), np.abs(dy)) - size
    elif kind == "triangle":
        # downward triangle with inradius size / 2
        n = [(0.0, -1.0), (math.sqrt(3) / 2, 0.5), (-math.sqrt(3) / 2, 0.5)]
        sd = np.max(np.stack([nx * dx + ny * dy for nx, ny in n]), axis=0) - 0.5 * size
    elif kind == "cross":
        arm = 0.35 * size
        sd = np.minimum(
            np.maximum(np.abs(dx) - size, np.abs(dy) - arm),
            np.maximum(np.abs(dx) - arm, np.abs(dy) - size),
        )
    else:
        raise ValueError(f"unknown shape {kind!r}")
    return np.clip(0.5 - sd, 0.0, 1.0)


def _paint(canvas: np.ndarray, origin: tuple[float, float], template: Template, offset: tuple[float, float]) -> None:
    ox, oy = origin
    for sh in template.shapes:
        cx, cy = offset[0] + sh.cx - ox, offset[1] + sh.cy - oy
        r = int(math.ceil(sh.size)) + 2
        y0, y1 = max(int(cy) - r, 0), min(int(cy) + r + 2, canvas.shape[0])
        x0, x1 = max(int(cx) - r, 0), min(int(cx) + r + 2, canvas.shape[1])
        yy, xx = np.mgrid[y0:y1, x0:x1]
        cov = _shape_mask(sh.kind, xx + 0.5 - cx, yy + 0.5 - cy, sh.size)
        val = 0.95 if sh.bright else 0.05
        canvas[y0:y1, x0:x1] = canvas[y0:y1, x0:x1] * (1 - cov) + val * cov


def _apply_h(H: np.ndarray, pts: np.ndarray) -> np.ndarray:
    ph = np.hstack([pts, np.ones((len(pts), 1))]) @ H.T
    return ph[:, :2] / ph[:, 2:3]


def _jacobian(H: np.ndarray, x: float, y: float) -> np.ndarray:
    p = H @ np.array([x, y, 1.0])
    w = p[2]
    return np.array(
        [
            [(H[0, 0] * w - p[0] * H[2, 0]) / w**2, (H[0, 1] * w - p[0] * H[2, 1]) / w**2],
            [(H[1, 0] * w - p[1] * H[2, 0]) / w**2, (H[1, 1] * w - p[1] * H[2, 1]) / w**2],
        ]
    )


def _render(spec: SceneSpec) -> np.ndarray:
    width, height = spec.image_size
    H = spec.H
    corners = []
    for motif in spec.motifs:
        for ox, oy in motif.offsets:
            corners += [(ox, oy), (ox + motif.template.width, oy + motif.template.height)]
    corners = np.array(corners)
    lo = np.floor(corners.min(axis=0)) - 4
    hi = np.ceil(corners.max(axis=0)) + 4
    canvas = np.full((int(hi[1] - lo[1]), int(hi[0] - lo[0])), BACKGROUND)
    for motif in spec.motifs:
        for off in motif.offsets:
            _paint(canvas, (lo[0], lo[1]), motif.template, off)

    # inverse-map every image pixel onto the plane
    inv = np.linalg.inv(H)
    yy, xx = np.mgrid[0:height, 0:width]
    pix = np.stack([xx.ravel() + 0.5, yy.ravel() + 0.5, np.ones(xx.size)])
    px, py, pw = inv @ pix
    u, v = px / pw - lo[0] - 0.5, py / pw - lo[1] - 0.5
    valid = pw > 0
    img = ndimage.map_coordinates(canvas, [np.where(valid, v, -10), np.where(valid, u, -10)], order=1, cval=BACKGROUND)
    img = img.reshape(height, width)
    return np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)


def render_scene(spec: SceneSpec, with_image: bool = True) -> Scene:
    """Render ``spec`` and derive its exact features and ground truth.

    Raises:
        InstanceOutOfBounds: a projected instance leaves the image.
    """
    width, height = spec.image_size
    H = spec.H
    rng = np.random.default_rng(spec.seed)
    gt_rps = []
    raw = []  # (x, y, scale, theta, desc, motif, keypoint, instance)
    for mi, motif in enumerate(spec.motifs):
        t = motif.template
        regions = []
        for ox, oy in motif.offsets:
            quad = np.array([(ox, oy), (ox + t.width, oy), (ox + t.width, oy + t.height), (ox, oy + t.height)])
            img_quad = _apply_h(H, quad)
            x0, y0 = img_quad.min(axis=0)
            x1, y1 = img_quad.max(axis=0)
            if x0 < 0 or y0 < 0 or x1 > width or y1 > height:
                raise InstanceOutOfBounds(f"instance at plane offset {(ox, oy)} projects to {(x0, y0, x1, y1)}")
            regions.append(GtRegion(box=(float(x0), float(y0), float(x1), float(y1))))
        gt_rps.append(tuple(regions))
        for ki, (u, v, sc, th, desc) in enumerate(t.keypoints()):
            for ii, (ox, oy) in enumerate(motif.offsets):
                px, py = ox + u, oy + v
                x, y = _apply_h(H, np.array([[px, py]]))[0]
                J = _jacobian(H, px, py)
                s_img = sc * math.sqrt(abs(np.linalg.det(J)))
                dvec = J @ np.array([math.cos(th), math.sin(th)])
                th_img = math.atan2(dvec[1], dvec[0])
                raw.append((x, y, s_img, th_img, desc, mi, ki, ii))

    # distractors reuse template descriptors at random places
    all_kp = [(mi, kp) for mi, m in enumerate(spec.motifs) for kp in m.template.keypoints()]
    for _ in range(spec.n_distractors):
        mi, kp = all_kp[int(rng.integers(len(all_kp)))]
        x, y = rng.uniform(0, width), rng.uniform(0, height)
        raw.append((x, y, float(rng.uniform(1.0, 6.0)), float(rng.uniform(0, 2 * math.pi)), kp[4], -1, -1, -1))

    feats = []
    index = {}
    for fid, (x, y, s, th, desc, mi, ki, ii) in enumerate(raw):
        if spec.noise_px > 0:
            x += rng.normal(0.0, spec.noise_px)
            y += rng.normal(0.0, spec.noise_px)
        x = min(max(x, 0.0), width - 1e-6)
        y = min(max(y, 0.0), height - 1e-6)
        d = desc + rng.normal(0.0, spec.descriptor_noise, size=desc.shape)
        feats.append(Feature(id=fid, x=float(x), y=float(y), scale=float(s), orientation=float(th), descriptor=tuple(d)))
        if mi >= 0:
            index[(mi, ki, ii)] = fid
    fs = FeatureSet(image_width=width, image_height=height, features=tuple(feats), descriptor_dim=len(raw[0][4]) if raw else DEFAULT_DESCRIPTOR_DIM)

    gt_matrices, gt_centers = [], []
    for mi, motif in enumerate(spec.motifs):
        nk, ni = len(motif.template.shapes), len(motif.offsets)
        gt_matrices.append(
            RpMatrix(rows=tuple(tuple(index[(mi, k, i)] for i in range(ni)) for k in range(nk)), words=tuple(range(nk)))
        )
        centers = np.array([(ox + motif.template.width / 2, oy + motif.template.height / 2) for ox, oy in motif.offsets])
        gt_centers.append(_apply_h(H, centers))

    vp_gt = None
    if spec.perspective:
        col = H[:, 0]
        if abs(col[2]) > 1e-12:
            vp_gt = (float(col[0] / col[2]), float(col[1] / col[2]))

    image = _render(spec) if with_image else None
    return Scene(
        image=image, features=fs, gt=GroundTruth(rps=tuple(gt_rps)), vp_gt=vp_gt,
        ts_gt=_uniform_spacing(spec), gt_matrices=gt_matrices, gt_centers=gt_centers,
    )


def _uniform_spacing(spec: SceneSpec) -> bool:
    for motif in spec.motifs:
        offs = np.array(motif.offsets, dtype=float)
        for axis in (0, 1):
            vals = np.unique(np.round(offs[:, axis], 9))
            if len(vals) >= 3:
                gaps = np.diff(vals)
                if np.ptp(gaps) > 1e-9 * max(1.0, float(gaps.max())):
                    return False
    return True


# -- cameras -----------------------------------------------------------------


def frontal_homography(scale: float = 1.0, tx: float = 0.0, ty: float = 0.0) -> np.ndarray:
    return np.array([[scale, 0, tx], [0, scale, ty], [0, 0, 1]], dtype=float)


def camera_homography(
    focal: float,
    image_size: tuple[int, int],
    yaw_deg: float,
    distance: float,
    target: tuple[float, float],
    pitch_deg: float = 0.0,
) -> np.ndarray:
    """Plane (z = 0) to image homography of a pinhole camera aimed at ``target``.

    The camera sits ``distance`` plane units in front of the target, rotated by
    ``yaw_deg`` about the plane's vertical axis and ``pitch_deg`` about its
    horizontal axis.
    """
    w, h = image_size
    K = np.array([[focal, 0, w / 2.0], [0, focal, h / 2.0], [0, 0, 1]])
    yaw, pitch = math.radians(yaw_deg), math.radians(pitch_deg)
    Ry = np.array([[math.cos(yaw), 0, math.sin(yaw)], [0, 1, 0], [-math.sin(yaw), 0, math.cos(yaw)]])
    Rx = np.array([[1, 0, 0], [0, math.cos(pitch), -math.sin(pitch)], [0, math.sin(pitch), math.cos(pitch)]])
    R = Rx @ Ry
    # camera looks along +z in its frame; the plane normal faces the camera
    T = np.array([target[0], target[1], 0.0])
    C = T - distance * (R.T @ np.array([0.0, 0.0, 1.0]))
    t = -R @ C
    P = K @ np.hstack([R, t[:, None]])
    Hm = P[:, [0, 1, 3]]
    return Hm / Hm[2, 2]


# -- presets -----------------------------------------------------------------


def template_a(seed: int = 1) -> Template:
    return Template(
        width=80, height=80, seed=seed,
        shapes=(
            Shape("disk", 20, 20, 7, True),
            Shape("square", 60, 20, 6, False),
            Shape("triangle", 40, 42, 9, True),
            Shape("disk", 18, 62, 5, False),
            Shape("ring", 60, 62, 8, True),
            Shape("cross", 40, 16, 5, False),
        ),
    )


def template_b(seed: int = 2) -> Template:
    return Template(
        width=60, height=60, seed=seed,
        shapes=(
            Shape("triangle", 18, 20, 8, False),
            Shape("square", 42, 22, 6, True),
            Shape("ring", 30, 44, 8, False),
        ),
    )


def template_row(seed: int = 3) -> Template:
    """Tall template so per-word lines of a receding row fan out widely."""
    return Template(
        width=60, height=160, seed=seed,
        shapes=(
            Shape("disk", 15, 14, 5, True),
            Shape("square", 45, 40, 5, False),
            Shape("triangle", 30, 72, 7, True),
            Shape("disk", 15, 100, 4, False),
            Shape("ring", 45, 122, 6, True),
            Shape("cross", 30, 148, 6, False),
        ),
    )


def grid_spec(rows: int = 2, cols: int = 3, seed: int = 0, spacing: float = 130.0, n_distractors: int = 10) -> SceneSpec:
    t = template_a()
    offsets = tuple((c * spacing, r * spacing) for r in range(rows) for c in range(cols))
    w, h = 640, 480
    span_x = (cols - 1) * spacing + t.width
    span_y = (rows - 1) * spacing + t.height
    Hm = frontal_homography(1.0, (w - span_x) / 2.0, (h - span_y) / 2.0)
    return SceneSpec(
        motifs=(Motif(t, offsets),), homography=tuple(map(tuple, Hm)), image_size=(w, h),
        n_distractors=n_distractors, seed=seed,
    )


def two_motif_spec(seed: int = 0, n_distractors: int = 10) -> SceneSpec:
    ta, tb = template_a(), template_b()
    a_offsets = tuple((40.0 + 130.0 * i, 40.0) for i in range(3))
    b_offsets = tuple((30.0 + 118.0 * i, 330.0) for i in range(5))
    return SceneSpec(
        motifs=(Motif(ta, a_offsets), Motif(tb, b_offsets)),
        homography=tuple(map(tuple, frontal_homography())), image_size=(640, 480),
        n_distractors=n_distractors, seed=seed,
    )


def perspective_row_spec(
    spacings: Sequence[float] = (110.0, 110.0, 110.0, 110.0),
    yaw_deg: float = 50.0,
    seed: int = 0,
    noise_px: float = 0.0,
    pitch_deg: float = 0.0,
    focal: float = 500.0,
    distance: float = 500.0,
    template: Optional[Template] = None,
    image_size: tuple[int, int] = (640, 480),
) -> SceneSpec:
    """A single row of instances along the plane's x axis seen obliquely."""
    t = template or template_row()
    xs = np.concatenate([[0.0], np.cumsum(spacings)])
    offsets = tuple((float(x), 0.0) for x in xs)
    target = ((xs[-1] + t.width) / 2.0, t.height / 2.0)
    Hm = camera_homography(focal, image_size, yaw_deg, distance, target, pitch_deg)
    return SceneSpec(
        motifs=(Motif(t, offsets),), homography=tuple(map(tuple, Hm)), image_size=image_size,
        noise_px=noise_px, seed=seed, perspective=True,
    )


PRESETS = {
    "grid": lambda seed: grid_spec(seed=seed),
    "perspective-row": lambda seed: perspective_row_spec(seed=seed),
    "two-motifs": lambda seed: two_motif_spec(seed=seed),
    "shelf": lambda seed: grid_spec(rows=2, cols=6, seed=seed, spacing=95.0),
}


def gt_pattern(scene: Scene, motif: int = 0) -> RecurringPattern:
    """The ground-truth pattern of one motif as a RecurringPattern (score 0)."""
    matrix = scene.gt_matrices[motif]
    return RecurringPattern(matrix=matrix, score=0.0, instances=instance_regions(matrix, scene.features))


def gt_words(scene: Scene) -> VisualWordIndex:
    """Visual words built from the ground-truth correspondences."""
    words = [tuple(f for f in row if f is not None) for m in scene.gt_matrices for row in m.rows]
    assignment = {f: w for w, ids in enumerate(words) for f in ids}
    return VisualWordIndex(words=tuple(words), assignment=assignment)
