"""Single-view geometry on discovered patterns.

Corresponding features of a pattern's instances trace implicit lines that,
under perspective, meet at a vanishing point. Instance centroids along one
such line can also be tested for equal 3D spacing through the cross-ratio,
and the pattern can be warped so its vanishing point moves to infinity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Optional, Sequence, Union

import numpy as np
from scipy import ndimage

from .errors import (
    DegenerateGeometry,
    InsufficientLines,
    InsufficientPoints,
    NoConsensus,
    NonColinear,
    VpInsidePattern,
)
from .types import FeatureSet, LineEstimate, RecurringPattern, TsResult, VanishingPoint

EQUAL_SPACING_CR = 4.0 / 3.0
COLINEAR_GATE = 0.02
MIN_GATE_PX = 1.5


@dataclass(frozen=True)
class RansacConfig:
    angular_threshold_deg: float = 10.0
    inlier_point_to_line_px: float = 2.0
    iterations: int = 1000
    rng_seed: int = 0
    min_lines: int = 3
    use_angular_constraint: bool = True

    def __post_init__(self) -> None:
        if self.angular_threshold_deg <= 0 or self.inlier_point_to_line_px <= 0:
            raise ValueError("RANSAC thresholds must be positive")
        if self.iterations < 1 or self.min_lines < 2:
            raise ValueError("iterations >= 1 and min_lines >= 2 required")


def _tls(pts: np.ndarray) -> tuple[float, float, float, np.ndarray]:
    """Total-least-squares line (a, b, c) and the signed residuals."""
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    # smallest right singular vector is the line normal
    _, sing, vt = np.linalg.svd(centered, full_matrices=False)
    if sing[0] <= 1e-12 * max(1.0, float(np.abs(pts).max())):
        raise DegenerateGeometry("all points coincide")
    a, b = vt[-1]
    norm = math.hypot(a, b)
    a, b = a / norm, b / norm
    # canonical sign: first nonzero of (a, b) positive
    if a < 0 or (a == 0 and b < 0):
        a, b = -a, -b
    c = -(a * centroid[0] + b * centroid[1])
    return a, b, c, pts @ np.array([a, b]) + c


def fit_line_to_word(points: Sequence[Sequence[float]], min_points: int = 3, source_word: int = -1) -> LineEstimate:
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) < max(min_points, 2):
        raise InsufficientPoints(f"need {max(min_points, 2)} points, got {len(pts)}")
    a, b, c, res = _tls(pts)
    rms = float(np.sqrt(np.mean(res**2)))
    return LineEstimate(
        a=float(a), b=float(b), c=float(c),
        support=tuple((float(x), float(y)) for x, y in pts),
        rms_residual=rms, source_word=source_word,
    )


def _span(line: LineEstimate) -> float:
    pts = np.asarray(line.support)
    t = pts @ line.direction
    return float(t.max() - t.min())


def passes_colinearity(line: LineEstimate, rel_gate: float = COLINEAR_GATE, min_gate_px: float = MIN_GATE_PX) -> bool:
    return line.rms_residual <= max(rel_gate * _span(line), min_gate_px)


def lines_from_rp(
    rp: RecurringPattern, fs: FeatureSet, rel_gate: float = COLINEAR_GATE, min_gate_px: float = MIN_GATE_PX
) -> list[LineEstimate]:
    """One line per pattern row with >= 3 filled cells that passes the colinearity gate."""
    if rp.matrix.n < 3:
        return []
    out = []
    for i, row in enumerate(rp.matrix.rows):
        ids = [f for f in row if f is not None]
        if len(ids) < 3:
            continue
        word = rp.matrix.words[i] if rp.matrix.words else i
        try:
            line = fit_line_to_word(fs.positions[ids], source_word=word)
        except DegenerateGeometry:
            continue
        if passes_colinearity(line, rel_gate, min_gate_px):
            out.append(line)
    return out


def _angle_between_lines(l1: LineEstimate, l2: LineEstimate) -> float:
    """Acute angle between two lines, degrees."""
    cosv = abs(l1.a * l2.a + l1.b * l2.b)
    return math.degrees(math.acos(min(1.0, cosv)))


def _intersect(l1: LineEstimate, l2: LineEstimate) -> Optional[np.ndarray]:
    p = np.cross([l1.a, l1.b, l1.c], [l2.a, l2.b, l2.c])
    if abs(p[2]) < 1e-12:
        return None
    return p[:2] / p[2]


def _lsq_point(lines: Sequence[LineEstimate]) -> Optional[np.ndarray]:
    A = np.array([[ln.a, ln.b] for ln in lines])
    rhs = -np.array([ln.c for ln in lines])
    ata = A.T @ A
    if abs(np.linalg.det(ata)) < 1e-12:
        return None
    return np.linalg.solve(ata, A.T @ rhs)


def _inliers(lines: Sequence[LineEstimate], p: np.ndarray, thr: float) -> list[int]:
    return [i for i, ln in enumerate(lines) if ln.distance(p[0], p[1]) <= thr]


def vp_to_vector(
    vp: Union[Sequence[float], np.ndarray], width: float, height: float, focal: Optional[float] = None
) -> np.ndarray:
    """Unit direction (vp_x - x0, vp_y - y0, f) with (x0, y0) the image center.

    ``f`` defaults to (width + height) / 4. ``vp`` may be homogeneous
    ``(x, y, w)``; ``w = 0`` denotes a point at infinity.
    """
    if width <= 0 or height <= 0:
        raise ValueError("image dimensions must be positive")
    f = (width + height) / 4.0 if focal is None else float(focal)
    v = np.asarray(vp, dtype=float)
    w = 1.0 if v.size == 2 else float(v[2])
    vec = np.array([v[0] - width / 2.0 * w, v[1] - height / 2.0 * w, f * w])
    if w < 0:
        vec = -vec
    return vec / np.linalg.norm(vec)


def vector_angle_deg(u: np.ndarray, v: np.ndarray) -> float:
    return math.degrees(math.acos(float(np.clip(np.dot(u, v), -1.0, 1.0))))


def ransac_vp(
    lines: Sequence[LineEstimate],
    cfg: RansacConfig = RansacConfig(),
    image_size: Optional[tuple[float, float]] = None,
    focal: Optional[float] = None,
) -> VanishingPoint:
    """Robust common intersection of ``lines``.

    Line pairs meeting at less than ``cfg.angular_threshold_deg`` are never
    used as hypotheses (unless the constraint is disabled). When there are
    no more admissible pairs than ``cfg.iterations`` every pair is tried;
    otherwise pairs are drawn without replacement from a seeded generator.
    The winning hypothesis (most inliers, earliest on ties) is refined by
    least squares over its inliers, re-collecting inliers while their count
    does not drop.
    """
    if len(lines) < cfg.min_lines:
        raise InsufficientLines(f"need {cfg.min_lines} lines, got {len(lines)}")
    pairs = [
        (i, j)
        for i, j in combinations(range(len(lines)), 2)
        if not cfg.use_angular_constraint or _angle_between_lines(lines[i], lines[j]) >= cfg.angular_threshold_deg
    ]
    if not pairs:
        raise NoConsensus("no line pair passes the angular constraint")
    if len(pairs) > cfg.iterations:
        rng = np.random.default_rng(cfg.rng_seed)
        chosen = sorted(rng.choice(len(pairs), size=cfg.iterations, replace=False))
        pairs = [pairs[k] for k in chosen]

    thr = cfg.inlier_point_to_line_px
    best_inl: list[int] = []
    best_p = None
    for i, j in pairs:
        p = _intersect(lines[i], lines[j])
        if p is None:
            continue
        inl = _inliers(lines, p, thr)
        if len(inl) > len(best_inl):
            best_inl, best_p = inl, p
    if best_p is None or len(best_inl) < cfg.min_lines:
        raise NoConsensus(f"largest consensus {len(best_inl)} < {cfg.min_lines}")

    point, inl = best_p, best_inl
    for _ in range(20):
        q = _lsq_point([lines[k] for k in inl])
        if q is None:
            break
        q_inl = _inliers(lines, q, thr)
        if len(q_inl) < len(inl):
            break
        same = q_inl == inl
        point, inl = q, q_inl
        if same:
            break

    w, h = image_size if image_size is not None else (0.0, 0.0)
    if w > 0 and h > 0:
        f = (w + h) / 4.0 if focal is None else float(focal)
        direction = tuple(float(v) for v in vp_to_vector(point, w, h, f))
    else:
        f = float(focal) if focal is not None else 1.0
        vec = np.array([point[0], point[1], f])
        direction = tuple(float(v) for v in vec / np.linalg.norm(vec))
    return VanishingPoint(
        point=(float(point[0]), float(point[1])), direction=direction, inlier_lines=tuple(inl), focal_nominal=f
    )


# -- cross-ratio and translation symmetry ---------------------------------------


def cross_ratio_1d(ta: float, tb: float, tc: float, td: float) -> float:
    """Cross-ratio AC*BD / (BC*AD) of four positions on a common line."""
    den = (tc - tb) * (td - ta)
    if den == 0.0 or ta == tb or tc == td:
        raise DegenerateGeometry("coincident points in cross-ratio")
    return (tc - ta) * (td - tb) / den


def cross_ratio(a, b, c, d, tol: float = 1e-6) -> float:
    """Cross-ratio of four ordered colinear 2D points.

    Positions are measured with sign along the common line, so the value is
    the projective invariant even if a transform reverses the order.
    ``tol`` bounds the largest perpendicular deviation relative to the span.
    """
    pts = np.array([a, b, c, d], dtype=float)
    for i, j in combinations(range(4), 2):
        if np.allclose(pts[i], pts[j], rtol=0.0, atol=1e-12 * max(1.0, float(np.abs(pts).max()))):
            raise DegenerateGeometry("coincident points in cross-ratio")
    la, lb, _, res = _tls(pts)
    direction = np.array([-lb, la])
    t = pts @ direction
    span = float(t.max() - t.min())
    if float(np.abs(res).max()) > tol * span:
        raise NonColinear(f"points deviate {float(np.abs(res).max()):.3g} from their line (span {span:.3g})")
    return cross_ratio_1d(*(float(v) for v in t))


def ts_centroids(rp: RecurringPattern, fs: Optional[FeatureSet] = None) -> np.ndarray:
    """Instance centroids; with ``fs``, only rows filled in every column are averaged."""
    if fs is not None:
        full = [row for row in rp.matrix.rows if all(f is not None for f in row)]
        if full:
            pos = fs.positions
            return np.array(
                [pos[[row[j] for row in full]].mean(axis=0) for j in range(rp.matrix.n)]
            )
    return np.array([inst.centroid for inst in rp.instances], dtype=float).reshape(-1, 2)


def order_along_axis(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sort points by projection on their first principal axis (ties by x, then y).

    Returns (order, positions along the axis in that order).
    """
    centered = points - points.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    axis = vt[0]
    if axis[0] < 0 or (axis[0] == 0 and axis[1] < 0):
        axis = -axis
    t = centered @ axis
    order = np.array(sorted(range(len(points)), key=lambda i: (t[i], points[i, 0], points[i, 1])))
    return order, t[order]


def detect_translation_symmetry(
    rp: RecurringPattern,
    t: float = 0.06,
    fs: Optional[FeatureSet] = None,
    rel_gate: float = COLINEAR_GATE,
) -> TsResult:
    """Test whether colinear instances are equally spaced in 3D.

    Every window of four consecutive centroids along the fitted axis yields
    a cross-ratio; equal 3D spacing gives 4/3 under any perspective. The
    deviation is the median of |cr - 4/3| over windows.
    """
    untested = TsResult(tested=False, cross_ratios=(), deviation=math.inf, has_symmetry=False, threshold=t)
    cents = ts_centroids(rp, fs)
    if len(cents) < 4:
        return untested
    try:
        a, b, c, res = _tls(cents)
    except DegenerateGeometry:
        return untested
    _, pos = order_along_axis(cents)
    span = float(pos[-1] - pos[0])
    if span <= 0 or float(np.sqrt(np.mean(res**2))) > rel_gate * span:
        return untested
    crs = []
    for k in range(len(pos) - 3):
        try:
            crs.append(cross_ratio_1d(*(float(v) for v in pos[k : k + 4])))
        except DegenerateGeometry:
            return untested
    dev = float(np.median(np.abs(np.array(crs) - EQUAL_SPACING_CR)))
    return TsResult(tested=True, cross_ratios=tuple(crs), deviation=dev, has_symmetry=dev <= t, threshold=t)


# -- rectification ----------------------------------------------------------------


def _union_box(rp: RecurringPattern) -> tuple[float, float, float, float]:
    boxes = np.array([inst.bbox for inst in rp.instances])
    return float(boxes[:, 0].min()), float(boxes[:, 1].min()), float(boxes[:, 2].max()), float(boxes[:, 3].max())


def rectifying_homography(
    rp: RecurringPattern,
    vp: Optional[Union[VanishingPoint, Sequence[float]]],
    image_size: tuple[int, int],
    fs: Optional[FeatureSet] = None,
) -> np.ndarray:
    """Homography sending ``vp`` to infinity along the pattern axis.

    The line sent to infinity passes through ``vp`` perpendicular to the axis
    of the instance centroids. The image center is kept fixed with identity
    Jacobian there; if the center lies on that line the pattern centroid is
    fixed instead. ``vp=None`` means the pattern is already frontal.
    """
    if vp is None:
        return np.eye(3)
    v = np.asarray(vp.point if isinstance(vp, VanishingPoint) else vp, dtype=float)
    if v.size == 3:
        if abs(v[2]) < 1e-12:
            return np.eye(3)
        v = v[:2] / v[2]
    x0, y0, x1, y1 = _union_box(rp)
    if x0 <= v[0] <= x1 and y0 <= v[1] <= y1:
        raise VpInsidePattern(f"vanishing point {tuple(v)} inside pattern box {(x0, y0, x1, y1)}")
    cents = ts_centroids(rp, fs)
    if len(cents) >= 2:
        _, _, vt = np.linalg.svd(cents - cents.mean(axis=0), full_matrices=False)
        d = vt[0]
    else:
        d = v - np.array([(x0 + x1) / 2, (y0 + y1) / 2])
        d = d / np.linalg.norm(d)

    width, height = image_size
    fixed = np.array([width / 2.0, height / 2.0])
    vc = v - fixed
    if abs(float(d @ vc)) < 1e-6 * max(1.0, float(np.linalg.norm(vc))):
        fixed = cents.mean(axis=0)
        vc = v - fixed
    k = float(d @ vc)
    T = np.array([[1, 0, -fixed[0]], [0, 1, -fixed[1]], [0, 0, 1]], dtype=float)
    P = np.array([[1, 0, 0], [0, 1, 0], [-d[0] / k, -d[1] / k, 1]], dtype=float)
    H = np.linalg.inv(T) @ P @ T

    corners = np.array([[x0, y0, 1], [x1, y0, 1], [x1, y1, 1], [x0, y1, 1]], dtype=float)
    w = (corners @ H.T)[:, 2]
    if not (np.all(w > 0) or np.all(w < 0)):
        raise VpInsidePattern("line sent to infinity crosses the pattern region")
    return H


def apply_homography(H: np.ndarray, pts: np.ndarray) -> np.ndarray:
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    ph = np.hstack([pts, np.ones((len(pts), 1))]) @ H.T
    return ph[:, :2] / ph[:, 2:3]


def rectify_rp(
    image: np.ndarray,
    rp: RecurringPattern,
    vp: Optional[Union[VanishingPoint, Sequence[float]]],
    fs: Optional[FeatureSet] = None,
    max_side: int = 2048,
) -> tuple[np.ndarray, np.ndarray]:
    """Warp the pattern region to an affine view.

    Returns the output raster and the 3x3 homography from input pixel
    coordinates to output raster coordinates.
    """
    img = np.asarray(image)
    height, width = img.shape[:2]
    H = rectifying_homography(rp, vp, (width, height), fs)
    boxes = np.array([inst.bbox for inst in rp.instances])
    corners = np.concatenate(
        [boxes[:, [0, 1]], boxes[:, [2, 1]], boxes[:, [2, 3]], boxes[:, [0, 3]]], axis=0
    )
    warped = apply_homography(H, corners)
    lo, hi = warped.min(axis=0), warped.max(axis=0)
    extent = hi - lo
    scale = min(1.0, max_side / max(float(extent.max()), 1.0))
    out_w = max(1, int(math.ceil(extent[0] * scale)))
    out_h = max(1, int(math.ceil(extent[1] * scale)))
    S = np.array([[scale, 0, -lo[0] * scale], [0, scale, -lo[1] * scale], [0, 0, 1]])
    H_out = S @ H

    inv = np.linalg.inv(H_out)
    vv, uu = np.mgrid[0:out_h, 0:out_w]
    src = np.stack([uu.ravel() + 0.5, vv.ravel() + 0.5, np.ones(uu.size)])
    sx, sy, sw = inv @ src
    sx, sy = sx / sw - 0.5, sy / sw - 0.5
    if img.ndim == 2:
        out = ndimage.map_coordinates(img.astype(float), [sy, sx], order=1, cval=0.0).reshape(out_h, out_w)
    else:
        chans = [
            ndimage.map_coordinates(img[..., ch].astype(float), [sy, sx], order=1, cval=0.0).reshape(out_h, out_w)
            for ch in range(img.shape[2])
        ]
        out = np.stack(chans, axis=-1)
    if img.dtype == np.uint8:
        out = np.clip(np.round(out), 0, 255).astype(np.uint8)
    return out, H_out
