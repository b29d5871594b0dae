"""Domain types shared across the package.

All containers are frozen dataclasses. Sequences are stored as tuples so values
hash and compare structurally; numpy views are derived lazily where the hot
paths need them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence, Union

import numpy as np

from .errors import InvariantViolation

TWO_PI = 2.0 * math.pi
DEFAULT_DESCRIPTOR_DIM = 128
REGION_RADIUS_FACTOR = 3.0

Box = tuple[float, float, float, float]
Point = tuple[float, float]


def normalize_angle(theta: float) -> float:
    t = math.fmod(theta, TWO_PI)
    if t < 0.0:
        t += TWO_PI
    # fmod of a tiny negative value can round up to exactly 2*pi
    if t >= TWO_PI:
        t = 0.0
    return t


@dataclass(frozen=True)
class Feature:
    id: int
    x: float
    y: float
    scale: float
    orientation: float
    descriptor: tuple[float, ...]
    response: float = 0.0

    def __post_init__(self) -> None:
        if not (self.scale > 0.0):
            raise InvariantViolation(f"feature {self.id}: scale must be > 0, got {self.scale}")
        object.__setattr__(self, "orientation", normalize_angle(float(self.orientation)))
        object.__setattr__(self, "descriptor", tuple(float(v) for v in self.descriptor))


@dataclass(frozen=True)
class FeatureSet:
    image_width: int
    image_height: int
    features: tuple[Feature, ...]
    descriptor_dim: int = DEFAULT_DESCRIPTOR_DIM

    def __post_init__(self) -> None:
        object.__setattr__(self, "features", tuple(self.features))
        if self.image_width <= 0 or self.image_height <= 0:
            raise InvariantViolation("image dimensions must be positive")
        if self.descriptor_dim <= 0:
            raise InvariantViolation("descriptor_dim must be positive")
        for i, f in enumerate(self.features):
            if f.id != i:
                raise InvariantViolation(f"feature ids must be dense from 0: position {i} holds id {f.id}")
            if not (0.0 <= f.x < self.image_width and 0.0 <= f.y < self.image_height):
                raise InvariantViolation(f"feature {f.id}: ({f.x}, {f.y}) outside image bounds")
            if len(f.descriptor) != self.descriptor_dim:
                raise InvariantViolation(
                    f"feature {f.id}: descriptor length {len(f.descriptor)} != {self.descriptor_dim}"
                )

    def __len__(self) -> int:
        return len(self.features)

    @property
    def diagonal(self) -> float:
        return math.hypot(self.image_width, self.image_height)

    @cached_property
    def positions(self) -> np.ndarray:
        return np.array([(f.x, f.y) for f in self.features], dtype=float).reshape(-1, 2)

    @cached_property
    def scales(self) -> np.ndarray:
        return np.array([f.scale for f in self.features], dtype=float)

    @cached_property
    def orientations(self) -> np.ndarray:
        return np.array([f.orientation for f in self.features], dtype=float)

    @cached_property
    def descriptors(self) -> np.ndarray:
        return np.array([f.descriptor for f in self.features], dtype=float).reshape(-1, self.descriptor_dim)


@dataclass(frozen=True)
class RpMatrix:
    """Pattern matrix: one row per visual word, one column per instance.

    ``rows[i][j]`` is a feature id or ``None`` for a hole. ``words[i]`` is the
    visual-word index that row ``i`` draws its features from.
    """

    rows: tuple[tuple[Optional[int], ...], ...]
    words: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "rows", tuple(tuple(r) for r in self.rows))
        object.__setattr__(self, "words", tuple(self.words))

    @property
    def m(self) -> int:
        return len(self.rows)

    @property
    def n(self) -> int:
        return len(self.rows[0]) if self.rows else 0

    def column(self, j: int) -> tuple[Optional[int], ...]:
        return tuple(row[j] for row in self.rows)

    def feature_ids(self) -> list[int]:
        return [c for row in self.rows for c in row if c is not None]


def validate_rp_matrix(matrix: RpMatrix) -> list[str]:
    """Return a list of human-readable invariant violations (empty when valid)."""
    problems: list[str] = []
    widths = {len(r) for r in matrix.rows}
    if len(widths) > 1:
        problems.append(f"ragged rows: widths {sorted(widths)}")
        return problems
    if matrix.m < 2:
        problems.append(f"m < 2 (m = {matrix.m})")
    if matrix.n < 2:
        problems.append(f"n < 2 (n = {matrix.n})")
    if matrix.words and len(matrix.words) != matrix.m:
        problems.append(f"words length {len(matrix.words)} != m {matrix.m}")
    seen: dict[int, tuple[int, int]] = {}
    for i, row in enumerate(matrix.rows):
        for j, fid in enumerate(row):
            if fid is None:
                continue
            if fid in seen:
                problems.append(f"duplicate feature {fid} at {seen[fid]} and {(i, j)}")
            else:
                seen[fid] = (i, j)
    for j in range(matrix.n):
        filled = sum(1 for row in matrix.rows if row[j] is not None)
        if filled < 2:
            problems.append(f"column {j} has {filled} filled cells (< 2)")
    return problems


@dataclass(frozen=True)
class InstanceRegion:
    bbox: Box
    member_features: tuple[int, ...]
    centroid: Point

    def __post_init__(self) -> None:
        x0, y0, x1, y1 = self.bbox
        if not (x0 < x1 and y0 < y1):
            raise InvariantViolation(f"degenerate instance box {self.bbox}")
        object.__setattr__(self, "member_features", tuple(self.member_features))

    @property
    def area(self) -> float:
        x0, y0, x1, y1 = self.bbox
        return (x1 - x0) * (y1 - y0)


def instance_region(fs: FeatureSet, member_ids: Sequence[int], k: float = REGION_RADIUS_FACTOR) -> InstanceRegion:
    """Union of member-feature disks of radius ``k * scale``, clipped to the image."""
    pts = fs.positions[list(member_ids)]
    radii = fs.scales[list(member_ids)] * k
    x0 = max(0.0, float(np.min(pts[:, 0] - radii)))
    y0 = max(0.0, float(np.min(pts[:, 1] - radii)))
    x1 = min(float(fs.image_width), float(np.max(pts[:, 0] + radii)))
    y1 = min(float(fs.image_height), float(np.max(pts[:, 1] + radii)))
    cx, cy = (float(v) for v in pts.mean(axis=0))
    return InstanceRegion(bbox=(x0, y0, x1, y1), member_features=tuple(member_ids), centroid=(cx, cy))


def instance_regions(matrix: RpMatrix, fs: FeatureSet, k: float = REGION_RADIUS_FACTOR) -> tuple[InstanceRegion, ...]:
    out = []
    for j in range(matrix.n):
        members = [fid for fid in matrix.column(j) if fid is not None]
        out.append(instance_region(fs, members, k))
    return tuple(out)


@dataclass(frozen=True)
class DiscoveryParams:
    """Search parameters.

    ``p_d`` bounds the distance between two features of the same instance as a
    fraction of the image diagonal, ``p_s`` bounds the scale ratio between
    corresponding features of two instances to ``[1 - p_s, 1 / (1 - p_s)]``,
    and ``p_theta`` (degrees) bounds their wrapped orientation difference.
    """

    p_d: float = 0.2
    p_s: float = 0.5
    p_theta: float = 30.0
    sigma_s: float = 0.2
    sigma_theta: float = 0.2
    n_initials: int = 20
    rng_seed: int = 0
    angle_mode: str = "literal"
    u_min: float = 0.3
    max_rps: int = 10

    def __post_init__(self) -> None:
        if not (0.0 < self.p_d <= 1.0):
            raise InvariantViolation(f"p_d must lie in (0, 1], got {self.p_d}")
        if not (0.0 < self.p_s <= 1.0):
            raise InvariantViolation(f"p_s must lie in (0, 1], got {self.p_s}")
        if not (self.p_theta > 0.0):
            raise InvariantViolation(f"p_theta must be positive, got {self.p_theta}")
        if not (self.sigma_s > 0.0 and self.sigma_theta > 0.0):
            raise InvariantViolation("deformation tolerances must be positive")
        if self.n_initials < 1:
            raise InvariantViolation("n_initials must be >= 1")
        if self.angle_mode not in ("literal", "wrapped"):
            raise InvariantViolation(f"unknown angle_mode {self.angle_mode!r}")


@dataclass(frozen=True)
class RecurringPattern:
    matrix: RpMatrix
    score: float
    instances: tuple[InstanceRegion, ...]
    params: DiscoveryParams = field(default_factory=DiscoveryParams)

    def __post_init__(self) -> None:
        object.__setattr__(self, "instances", tuple(self.instances))
        if len(self.instances) != self.matrix.n:
            raise InvariantViolation(f"{len(self.instances)} instance regions for {self.matrix.n} columns")

    @property
    def count(self) -> int:
        return self.matrix.n


@dataclass(frozen=True)
class LineEstimate:
    """Line ``a*x + b*y + c = 0`` with ``a**2 + b**2 == 1``."""

    a: float
    b: float
    c: float
    support: tuple[Point, ...]
    rms_residual: float
    source_word: int = -1

    def distance(self, x: float, y: float) -> float:
        return abs(self.a * x + self.b * y + self.c)

    @property
    def direction(self) -> np.ndarray:
        return np.array([-self.b, self.a])


@dataclass(frozen=True)
class VanishingPoint:
    point: Point
    direction: tuple[float, float, float]
    inlier_lines: tuple[int, ...]
    focal_nominal: float


@dataclass(frozen=True)
class TsResult:
    tested: bool
    cross_ratios: tuple[float, ...]
    deviation: float
    has_symmetry: bool
    threshold: float


@dataclass(frozen=True)
class GtRegion:
    """Ground-truth instance region: an axis-aligned box or a simple polygon."""

    box: Optional[Box] = None
    polygon: Optional[tuple[Point, ...]] = None

    def __post_init__(self) -> None:
        if (self.box is None) == (self.polygon is None):
            raise InvariantViolation("GT region needs exactly one of box / polygon")
        if self.polygon is not None:
            object.__setattr__(self, "polygon", tuple((float(x), float(y)) for x, y in self.polygon))
            if len(self.polygon) < 3:
                raise InvariantViolation("polygon needs >= 3 vertices")
        else:
            object.__setattr__(self, "box", tuple(float(v) for v in self.box))


Region = Union[Box, GtRegion, InstanceRegion]


@dataclass(frozen=True)
class GroundTruth:
    rps: tuple[tuple[GtRegion, ...], ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "rps", tuple(tuple(rp) for rp in self.rps))
        for i, rp in enumerate(self.rps):
            if len(rp) < 1:
                raise InvariantViolation(f"GT RP {i} has no instance regions")
