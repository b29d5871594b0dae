"""Feature extraction, feature-file loading and visual-word grouping."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from .errors import ImageTooSmall, InvariantViolation, ParseError, UnsupportedFormat
from .types import Feature, FeatureSet

MIN_IMAGE_SIDE = 32

# detector configuration
N_OCTAVES = 3
SCALES_PER_OCTAVE = 3
BASE_SIGMA = 1.6
ASSUMED_BLUR = 0.5
CONTRAST_THRESHOLD = 0.03
EDGE_RATIO = 10.0
BORDER = 5
ORI_BINS = 36
DESC_WIDTH = 4
DESC_BINS = 8
DESC_MAG_CLIP = 0.2


@dataclass(frozen=True)
class VisualWordIndex:
    words: tuple[tuple[int, ...], ...]
    assignment: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "words", tuple(tuple(w) for w in self.words))
        if not self.assignment:
            object.__setattr__(
                self, "assignment", {fid: wi for wi, w in enumerate(self.words) for fid in w}
            )

    def __len__(self) -> int:
        return len(self.words)

    def word_of(self, fid: int) -> Optional[int]:
        return self.assignment.get(fid)


def to_gray(image: np.ndarray) -> np.ndarray:
    """Convert an 8-bit (or float) grayscale/RGB(A) raster to float64 in [0, 1]."""
    arr = np.asarray(image)
    if arr.ndim == 3:
        if arr.shape[2] not in (3, 4):
            raise UnsupportedFormat(f"unsupported channel count {arr.shape[2]}")
        arr = arr[..., :3].astype(np.float64) @ np.array([0.299, 0.587, 0.114])
    elif arr.ndim != 2:
        raise UnsupportedFormat(f"unsupported image shape {arr.shape}")
    if arr.dtype == np.uint8 or (arr.dtype.kind == "f" and arr.max(initial=0.0) > 1.0):
        return np.asarray(arr, dtype=np.float64) / 255.0
    if arr.dtype.kind not in "fui":
        raise UnsupportedFormat(f"unsupported dtype {arr.dtype}")
    return np.asarray(arr, dtype=np.float64)


def load_image(path: str | Path) -> np.ndarray:
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(path) as im:
            if im.format not in ("PNG", "JPEG"):
                raise UnsupportedFormat(f"{path}: only PNG and JPEG are supported, got {im.format}")
            if im.mode not in ("L", "RGB"):
                im = im.convert("RGB")
            return np.array(im)
    except UnidentifiedImageError as exc:
        raise UnsupportedFormat(f"{path}: not a readable image") from exc


def _gaussian_pyramid(gray: np.ndarray) -> list[list[np.ndarray]]:
    k = 2.0 ** (1.0 / SCALES_PER_OCTAVE)
    n_levels = SCALES_PER_OCTAVE + 3
    sig_prev = [BASE_SIGMA * k**i for i in range(n_levels)]
    incr = [math.sqrt(max(BASE_SIGMA**2 - ASSUMED_BLUR**2, 0.01))]
    incr += [math.sqrt(sig_prev[i] ** 2 - sig_prev[i - 1] ** 2) for i in range(1, n_levels)]

    pyramid = []
    base = ndimage.gaussian_filter(gray, incr[0], mode="nearest")
    for _ in range(N_OCTAVES):
        levels = [base]
        for i in range(1, n_levels):
            levels.append(ndimage.gaussian_filter(levels[-1], incr[i], mode="nearest"))
        pyramid.append(levels)
        # level S has twice the base blur of this octave
        base = levels[SCALES_PER_OCTAVE][::2, ::2]
        if min(base.shape) < 2 * BORDER + 3:
            break
    return pyramid


def _refine(dog: np.ndarray, s: int, y: int, x: int) -> Optional[tuple[float, float, float, float]]:
    """One-step quadratic refinement; returns (ds, dy, dx, value) or None if unstable."""
    c = dog[s, y, x]
    g = np.array(
        [
            (dog[s + 1, y, x] - dog[s - 1, y, x]) / 2.0,
            (dog[s, y + 1, x] - dog[s, y - 1, x]) / 2.0,
            (dog[s, y, x + 1] - dog[s, y, x - 1]) / 2.0,
        ]
    )
    dss = dog[s + 1, y, x] + dog[s - 1, y, x] - 2 * c
    dyy = dog[s, y + 1, x] + dog[s, y - 1, x] - 2 * c
    dxx = dog[s, y, x + 1] + dog[s, y, x - 1] - 2 * c
    dsy = (dog[s + 1, y + 1, x] - dog[s + 1, y - 1, x] - dog[s - 1, y + 1, x] + dog[s - 1, y - 1, x]) / 4.0
    dsx = (dog[s + 1, y, x + 1] - dog[s + 1, y, x - 1] - dog[s - 1, y, x + 1] + dog[s - 1, y, x - 1]) / 4.0
    dyx = (dog[s, y + 1, x + 1] - dog[s, y + 1, x - 1] - dog[s, y - 1, x + 1] + dog[s, y - 1, x - 1]) / 4.0
    hess = np.array([[dss, dsy, dsx], [dsy, dyy, dyx], [dsx, dyx, dxx]])
    try:
        off = -np.linalg.solve(hess, g)
    except np.linalg.LinAlgError:
        return None
    if np.any(np.abs(off) > 1.0):
        return None
    off = np.clip(off, -0.5, 0.5)
    value = c + 0.5 * float(g @ off)
    # edge rejection on the spatial Hessian
    tr = dxx + dyy
    det = dxx * dyy - dyx * dyx
    if det <= 0 or tr * tr / det >= (EDGE_RATIO + 1) ** 2 / EDGE_RATIO:
        return None
    return float(off[0]), float(off[1]), float(off[2]), float(value)


def _gradients(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    gy, gx = np.gradient(img)
    return np.hypot(gx, gy), np.arctan2(gy, gx)


def _dominant_orientation(mag: np.ndarray, ang: np.ndarray, y: float, x: float, sigma: float) -> float:
    win_sigma = 1.5 * sigma
    rad = int(round(3 * win_sigma))
    yi, xi = int(round(y)), int(round(x))
    y0, y1 = max(yi - rad, 0), min(yi + rad + 1, mag.shape[0])
    x0, x1 = max(xi - rad, 0), min(xi + rad + 1, mag.shape[1])
    yy, xx = np.mgrid[y0:y1, x0:x1]
    w = np.exp(-((yy - y) ** 2 + (xx - x) ** 2) / (2 * win_sigma**2)) * mag[y0:y1, x0:x1]
    bins = (np.floor(np.mod(ang[y0:y1, x0:x1], 2 * np.pi) / (2 * np.pi) * ORI_BINS).astype(int)) % ORI_BINS
    hist = np.bincount(bins.ravel(), weights=w.ravel(), minlength=ORI_BINS)
    # circular smoothing
    for _ in range(2):
        hist = (np.roll(hist, 1) + hist + np.roll(hist, -1)) / 3.0
    b = int(np.argmax(hist))
    left, mid, right = hist[(b - 1) % ORI_BINS], hist[b], hist[(b + 1) % ORI_BINS]
    denom = left - 2 * mid + right
    frac = 0.5 * (left - right) / denom if denom != 0 else 0.0
    return ((b + 0.5 + frac) / ORI_BINS * 2 * np.pi) % (2 * np.pi)


def _descriptor(mag: np.ndarray, ang: np.ndarray, y: float, x: float, sigma: float, theta: float) -> np.ndarray:
    """4x4 spatial cells x 8 orientation bins of gradients, rotated to ``theta``."""
    cell = 3.0 * sigma
    half = DESC_WIDTH * cell / 2.0
    rad = int(math.ceil(half * math.sqrt(2))) + 1
    yi, xi = int(round(y)), int(round(x))
    y0, y1 = max(yi - rad, 0), min(yi + rad + 1, mag.shape[0])
    x0, x1 = max(xi - rad, 0), min(xi + rad + 1, mag.shape[1])
    yy, xx = np.mgrid[y0:y1, x0:x1]
    dy, dx = yy - y, xx - x
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    # coordinates in the keypoint frame, in cell units
    u = (cos_t * dx + sin_t * dy) / cell + DESC_WIDTH / 2.0 - 0.5
    v = (-sin_t * dx + cos_t * dy) / cell + DESC_WIDTH / 2.0 - 0.5
    rel = np.mod(ang[y0:y1, x0:x1] - theta, 2 * np.pi) / (2 * np.pi) * DESC_BINS
    rel = np.where(rel >= DESC_BINS, rel - DESC_BINS, rel)  # mod can round up to 2*pi
    w = mag[y0:y1, x0:x1] * np.exp(-(dx**2 + dy**2) / (2 * half**2))
    inside = (u > -1) & (u < DESC_WIDTH) & (v > -1) & (v < DESC_WIDTH)
    u, v, rel, w = u[inside], v[inside], rel[inside], w[inside]

    hist = np.zeros((DESC_WIDTH + 2, DESC_WIDTH + 2, DESC_BINS + 1))
    u0, v0, o0 = np.floor(u).astype(int), np.floor(v).astype(int), np.floor(rel).astype(int)
    fu, fv, fo = u - u0, v - v0, rel - o0
    for du in (0, 1):
        wu = fu if du else 1 - fu
        for dv in (0, 1):
            wv = fv if dv else 1 - fv
            for do in (0, 1):
                wo = fo if do else 1 - fo
                np.add.at(hist, (v0 + dv + 1, u0 + du + 1, o0 + do), w * wu * wv * wo)
    hist[:, :, 0] += hist[:, :, DESC_BINS]
    desc = hist[1:-1, 1:-1, :DESC_BINS].ravel()
    norm = np.linalg.norm(desc)
    if norm > 0:
        desc = np.minimum(desc / norm, DESC_MAG_CLIP)
        desc /= max(np.linalg.norm(desc), 1e-12)
    return desc


def detect_features(image: np.ndarray, contrast_threshold: float = CONTRAST_THRESHOLD) -> FeatureSet:
    """Detect scale-space blob features with gradient-histogram descriptors.

    A three-octave difference-of-Gaussian pyramid (three scales per octave)
    is searched for 3x3x3 extrema whose refined response exceeds
    ``contrast_threshold`` (intensities in [0, 1]). Each keypoint gets one
    dominant gradient orientation and a 128-d descriptor.

    Args:
        image: 8-bit grayscale or RGB raster, at least 32x32.
        contrast_threshold: minimum absolute DoG response.

    Returns:
        FeatureSet sorted by (y, x) with dense ids.
    """
    arr = np.asarray(image)
    if arr.ndim < 2 or arr.shape[0] < MIN_IMAGE_SIDE or arr.shape[1] < MIN_IMAGE_SIDE:
        raise ImageTooSmall(f"image must be at least {MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE}, got {arr.shape[:2]}")
    gray = to_gray(arr)
    height, width = gray.shape
    pyramid = _gaussian_pyramid(gray)
    k = 2.0 ** (1.0 / SCALES_PER_OCTAVE)

    raw = []
    for o, levels in enumerate(pyramid):
        stack = np.stack(levels)
        dog = stack[1:] - stack[:-1]
        grads = [_gradients(lv) for lv in levels]
        mx = ndimage.maximum_filter(dog, size=3, mode="nearest")
        mn = ndimage.minimum_filter(dog, size=3, mode="nearest")
        pre = 0.5 * contrast_threshold
        cand = ((dog == mx) | (dog == mn)) & (np.abs(dog) > pre)
        cand[0] = cand[-1] = False
        cand[:, :BORDER, :] = cand[:, -BORDER:, :] = False
        cand[:, :, :BORDER] = cand[:, :, -BORDER:] = False
        factor = 2.0**o
        for s, y, x in zip(*np.nonzero(cand)):
            # plateau guard: strict extremum against at least one neighbour value
            patch = dog[s - 1 : s + 2, y - 1 : y + 2, x - 1 : x + 2]
            if np.all(patch == dog[s, y, x]):
                continue
            ref = _refine(dog, s, y, x)
            if ref is None:
                continue
            ds, dy, dx, value = ref
            if abs(value) < contrast_threshold:
                continue
            sigma_oct = BASE_SIGMA * k ** (s + ds)
            yo, xo = y + dy, x + dx
            mag, ang = grads[s]
            theta = _dominant_orientation(mag, ang, yo, xo, sigma_oct)
            desc = _descriptor(mag, ang, yo, xo, sigma_oct, theta)
            fx, fy = xo * factor, yo * factor
            if not (0.0 <= fx < width and 0.0 <= fy < height):
                continue
            raw.append((fy, fx, sigma_oct * factor, theta, desc, abs(value)))

    raw.sort(key=lambda r: (round(r[0], 9), round(r[1], 9), r[2]))
    feats = tuple(
        Feature(id=i, x=fx, y=fy, scale=sc, orientation=th, descriptor=tuple(d), response=resp)
        for i, (fy, fx, sc, th, d, resp) in enumerate(raw)
    )
    return FeatureSet(image_width=width, image_height=height, features=feats, descriptor_dim=DESC_WIDTH**2 * DESC_BINS)


def load_features(path: str | Path) -> FeatureSet:
    """Read a features.json file, enforcing every FeatureSet invariant."""
    from .io import decode_feature_set

    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        from .errors import MissingInputError

        raise MissingInputError(f"{path}: {exc}") from exc
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return decode_feature_set(payload)


def _normalized(desc: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(desc, axis=1, keepdims=True)
    return np.divide(desc, norms, out=np.zeros_like(desc), where=norms > 0)


def build_visual_words(fs: FeatureSet, distance_threshold: float, min_word_size: int = 2) -> VisualWordIndex:
    """Group features into visual words by greedy leader clustering.

    Features are visited by descending detector response (ties by id). A
    feature joins the word of the nearest leader provided its distance to
    every current member is within ``distance_threshold`` (complete linkage);
    otherwise it founds a new word. Distances are Euclidean on L2-normalized
    descriptors. Words smaller than ``min_word_size`` are dropped and the rest
    are sorted by size, largest first.
    """
    if len(fs) == 0:
        return VisualWordIndex(words=())
    desc = _normalized(fs.descriptors)
    order = sorted(range(len(fs)), key=lambda i: (-fs.features[i].response, i))
    leaders: list[int] = []
    members: list[list[int]] = []
    for i in order:
        placed = False
        if leaders:
            lead_d = np.linalg.norm(desc[leaders] - desc[i], axis=1)
            for w in np.argsort(lead_d, kind="stable"):
                if lead_d[w] > distance_threshold:
                    break
                mem_d = np.linalg.norm(desc[members[w]] - desc[i], axis=1)
                if np.all(mem_d <= distance_threshold):
                    members[w].append(i)
                    placed = True
                    break
        if not placed:
            leaders.append(i)
            members.append([i])
    words = [(sorted(m), w) for w, m in enumerate(members) if len(m) >= max(min_word_size, 2)]
    words.sort(key=lambda t: (-len(t[0]), t[1]))
    return VisualWordIndex(words=tuple(tuple(m) for m, _ in words))
