import numpy as np
import pytest

from rescu.errors import InstanceOutOfBounds
from rescu.geometry import cross_ratio
from rescu.synth import (
    PRESETS, SceneSpec, Motif, frontal_homography, grid_spec, gt_pattern, gt_words, perspective_row_spec,
    render_scene, template_a,
)


def test_frontal_grid():
    scene = render_scene(grid_spec())
    assert len(scene.gt.rps) == 1 and len(scene.gt.rps[0]) == 6
    assert scene.vp_gt is None and scene.ts_gt
    assert scene.image.shape == (480, 640) and scene.image.dtype == np.uint8


def test_perspective_row_vp_and_spacing():
    scene = render_scene(perspective_row_spec(), with_image=False)
    assert scene.vp_gt is not None and all(np.isfinite(scene.vp_gt))
    c = scene.gt_centers[0]
    dist = np.hypot(*(c - np.asarray(scene.vp_gt)).T)
    order = np.argsort(dist)[::-1]  # far from the VP first
    gaps = np.hypot(*np.diff(c[order], axis=0).T)
    assert np.all(np.diff(gaps) < 0)


def test_uneven_spacing_flag():
    assert not render_scene(perspective_row_spec(spacings=(100, 100, 200)), with_image=False).ts_gt
    assert render_scene(perspective_row_spec(spacings=(100, 100, 100)), with_image=False).ts_gt


@pytest.mark.parametrize("yaw", [30.0, 45.0, 60.0])
def test_projected_centers_cross_ratio(yaw):
    scene = render_scene(perspective_row_spec(yaw_deg=yaw), with_image=False)
    c = scene.gt_centers[0]
    for k in range(len(c) - 3):
        assert abs(cross_ratio(*c[k : k + 4]) - 4 / 3) <= 1e-9


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_seed_determinism(name):
    a = render_scene(PRESETS[name](3))
    b = render_scene(PRESETS[name](3))
    assert a.image.tobytes() == b.image.tobytes()
    assert a.features == b.features and a.gt == b.gt


def test_out_of_bounds():
    spec = SceneSpec(
        motifs=(Motif(template_a(), ((0.0, 0.0), (600.0, 0.0))),),
        homography=tuple(map(tuple, frontal_homography())),
        image_size=(640, 480),
    )
    with pytest.raises(InstanceOutOfBounds):
        render_scene(spec)


def test_gt_matrices_consistent():
    scene = render_scene(PRESETS["two-motifs"](0), with_image=False)
    assert [m.n for m in scene.gt_matrices] == [3, 5]
    words = gt_words(scene)
    for w in words.words:
        descs = np.array([scene.features.features[f].descriptor for f in w])
        assert np.abs(descs - descs[0]).max() < 0.2
    rp = gt_pattern(scene, 1)
    assert rp.count == 5
    for inst, gt in zip(rp.instances, scene.gt.rps[1]):
        x0, y0, x1, y1 = gt.box
        bx = inst.bbox
        assert x0 - 1 <= bx[0] and bx[2] <= x1 + 1 and y0 - 1 <= bx[1] and bx[3] <= y1 + 1
