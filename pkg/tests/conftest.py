import math

import numpy as np
import pytest

from rescu.types import Feature, FeatureSet


def feat(fid, x, y, scale=2.0, theta=1.0, desc=(0.0,)):
    return Feature(id=fid, x=float(x), y=float(y), scale=float(scale), orientation=float(theta), descriptor=tuple(desc))


def make_fs(points, width=400, height=400, dim=1):
    """points: iterable of (x, y, scale, theta) or (x, y)."""
    feats = []
    for k, p in enumerate(points):
        x, y, *rest = p
        s = rest[0] if rest else 2.0
        t = rest[1] if len(rest) > 1 else 1.0
        feats.append(Feature(id=k, x=float(x), y=float(y), scale=float(s), orientation=float(t), descriptor=(0.0,) * dim))
    return FeatureSet(image_width=width, image_height=height, features=tuple(feats), descriptor_dim=dim)


def congruent_grid(n_words, n_inst, spacing=60.0, origin=(40.0, 40.0), offsets=None, scale=2.0, theta=1.0):
    """Feature set of n_inst translated copies of an n_words-feature motif.

    Returns (fs, words) with words[w] = ids of word w across instances.
    """
    offsets = offsets or [(8.0 * w, 11.0 * w + (w % 2) * 5.0) for w in range(n_words)]
    pts, words = [], [[] for _ in range(n_words)]
    for i in range(n_inst):
        for w in range(n_words):
            words[w].append(len(pts))
            pts.append((origin[0] + spacing * i + offsets[w][0], origin[1] + offsets[w][1], scale, theta + 0.4 * w))
    return make_fs(pts), [tuple(w) for w in words]


def random_feature_set(seed, n_max=12):
    """Noisy copies of a random motif: at most n_max features in 2-3 words."""
    rng = np.random.default_rng(seed)
    n_words = int(rng.integers(2, 4))
    n_inst = int(rng.integers(2, 5))
    pts, words = [], [[] for _ in range(n_words)]
    base = rng.uniform(-20, 20, size=(n_words, 2))
    for i in range(n_inst):
        origin = rng.uniform(30, 250, size=2)
        for w in range(n_words):
            if len(pts) >= n_max or rng.random() < 0.15:
                continue
            p = origin + base[w] + rng.normal(0, 3, 2)
            words[w].append(len(pts))
            pts.append((p[0], p[1], 2.0 * rng.uniform(0.8, 1.25), (1.0 + w) * rng.uniform(0.9, 1.1)))
    words = [tuple(w) for w in words if len(w) >= 2]
    fs = make_fs(pts, width=300, height=300)
    return fs, words


@pytest.fixture
def two_by_three():
    return congruent_grid(2, 3)


ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def verdict(request, capsys):
    """Print and record one PASS/FAIL line per acceptance criterion, then assert it."""

    def emit(number, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {detail}"
        request.config.stash.setdefault(ACCEPTANCE_KEY, []).append(line)
        with capsys.disabled():
            print("\n" + line)
        assert ok, line

    return emit


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
