import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rescu.errors import ImageTooSmall, UnsupportedFormat
from rescu.features import build_visual_words, detect_features, load_image
from rescu.types import Feature, FeatureSet


def disk_image(cx=64.3, cy=70.6, radius=10.0, size=(140, 128)):
    h, w = size
    yy, xx = np.mgrid[0:h, 0:w]
    # anti-aliased disk via 4x4 supersampling
    acc = np.zeros((h, w))
    for oy in np.linspace(-0.375, 0.375, 4):
        for ox in np.linspace(-0.375, 0.375, 4):
            acc += ((xx + ox - cx) ** 2 + (yy + oy - cy) ** 2) <= radius**2
    return (acc / 16.0 * 255).astype(np.uint8)


def blobs_image(seed=5, size=160):
    rng = np.random.default_rng(seed)
    img = np.full((size, size), 40.0)
    yy, xx = np.mgrid[0:size, 0:size]
    for _ in range(14):
        cx, cy = rng.uniform(15, size - 15, 2)
        r = rng.uniform(3, 9)
        img += rng.uniform(80, 200) * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * r * r))
    return np.clip(img, 0, 255).astype(np.uint8)


def test_uniform_image_has_no_features():
    fs = detect_features(np.full((64, 64), 128, dtype=np.uint8))
    assert len(fs.features) == 0


def test_disk_center_found():
    cx, cy = 64.3, 70.6
    fs = detect_features(disk_image(cx, cy))
    assert len(fs.features) >= 1
    best = min(np.hypot(f.x - cx, f.y - cy) for f in fs.features)
    assert best <= 2.0


def test_rotation_keeps_count_within_ten_percent():
    img = blobs_image()
    a = len(detect_features(img).features)
    b = len(detect_features(np.rot90(img).copy()).features)
    assert a > 5
    assert abs(a - b) <= 0.1 * max(a, b)


def test_rgb_and_gray_agree():
    img = blobs_image(seed=2)
    rgb = np.stack([img] * 3, axis=-1)
    a, b = detect_features(img), detect_features(rgb)
    assert len(a.features) == len(b.features)
    for fa, fb in zip(a.features, b.features):
        assert abs(fa.x - fb.x) < 1e-3 and abs(fa.y - fb.y) < 1e-3


def test_features_sorted_and_inside():
    fs = detect_features(blobs_image(seed=3))
    keys = [(f.y, f.x) for f in fs.features]
    assert keys == sorted(keys)
    for f in fs.features:
        assert 0 <= f.x < fs.image_width and 0 <= f.y < fs.image_height and f.scale > 0
        assert 0 <= f.orientation < 2 * np.pi


def test_determinism():
    img = blobs_image(seed=7)
    assert detect_features(img) == detect_features(img.copy())


def test_too_small():
    with pytest.raises(ImageTooSmall):
        detect_features(np.zeros((31, 64), dtype=np.uint8))


def test_unsupported_format(tmp_path):
    with pytest.raises(UnsupportedFormat):
        detect_features(np.zeros((64, 64, 2), dtype=np.uint8))
    p = tmp_path / "x.png"
    p.write_bytes(b"not an image at all")
    with pytest.raises(UnsupportedFormat):
        load_image(p)


def _fs(descs):
    feats = tuple(Feature(k, float(k), 0.0, 1.0, 0.0, tuple(map(float, d))) for k, d in enumerate(descs))
    return FeatureSet(100, 100, feats, len(descs[0]))


def test_identical_descriptors_form_one_word():
    idx = build_visual_words(_fs([(1, 0, 0)] * 4), 0.1)
    assert idx.words == ((0, 1, 2, 3),)


def test_distant_pair_gives_empty_index():
    idx = build_visual_words(_fs([(1, 0), (0, 1)]), 0.5)
    assert len(idx) == 0


def _oracle_clusters(desc, thr):
    """Connected components of the threshold graph; valid when clusters are well separated."""
    n = len(desc)
    comp = list(range(n))
    for i, j in itertools.combinations(range(n), 2):
        if np.linalg.norm(desc[i] - desc[j]) <= thr:
            a, b = comp[i], comp[j]
            comp = [a if c == b else c for c in comp]
    groups = {}
    for i, c in enumerate(comp):
        groups.setdefault(c, []).append(i)
    return sorted(tuple(g) for g in groups.values() if len(g) >= 2)


def test_two_tight_clusters():
    descs = [(1, 0.01, 0), (1, 0, 0.02), (0, 1, 0), (1, 0.02, 0.01), (0.01, 1, 0.01), (0, 1, 0.02)]
    fs = _fs(descs)
    idx = build_visual_words(fs, 0.1)
    norm = np.array(descs, float) / np.linalg.norm(descs, axis=1, keepdims=True)
    assert sorted(idx.words) == _oracle_clusters(norm, 0.1)
    assert [len(w) for w in idx.words] == [3, 3]


@st.composite
def descriptor_sets(draw):
    n = draw(st.integers(2, 14))
    dim = draw(st.integers(2, 4))
    pool = draw(st.lists(st.lists(st.integers(-3, 3), min_size=dim, max_size=dim), min_size=1, max_size=4))
    descs = [draw(st.sampled_from(pool)) for _ in range(n)]
    return [[v + 0.1 * draw(st.integers(-1, 1)) for v in d] for d in descs]


@settings(max_examples=80, deadline=None)
@given(descriptor_sets(), st.sampled_from([0.0, 0.05, 0.2, 0.6]))
def test_word_properties(descs, thr):
    fs = _fs(descs)
    idx = build_visual_words(fs, thr)
    desc = fs.descriptors
    desc = desc / np.where(np.linalg.norm(desc, axis=1, keepdims=True) > 0, np.linalg.norm(desc, axis=1, keepdims=True), 1)
    seen = set()
    sizes = [len(w) for w in idx.words]
    assert sizes == sorted(sizes, reverse=True)
    for w in idx.words:
        assert len(w) >= 2
        assert not seen & set(w)
        seen |= set(w)
        for a, b in itertools.combinations(w, 2):
            d = np.linalg.norm(desc[a] - desc[b])
            assert d <= thr
            if thr == 0.0:
                assert np.array_equal(desc[a], desc[b])
    assert build_visual_words(fs, thr) == idx
