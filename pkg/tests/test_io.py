import json
import math

import pytest
from hypothesis import given, settings, strategies as st

from rescu import io as rio
from rescu.discovery import discover_rps, precompute_affinity_cache, rp_objective
from rescu.errors import InvariantViolation, MissingInputError, ParseError
from rescu.features import VisualWordIndex, build_visual_words, load_features
from rescu.metrics import EvalReport
from rescu.synth import PRESETS, render_scene
from rescu.types import Feature, FeatureSet, GroundTruth, GtRegion, TsResult, VanishingPoint

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


def roundtrip(encode, decode, value):
    text = rio.dumps(encode(value))
    again = rio.dumps(encode(decode(json.loads(text))))
    return text, again


@st.composite
def feature_sets(draw):
    w = draw(st.integers(1, 4000))
    h = draw(st.integers(1, 4000))
    dim = draw(st.integers(1, 4))
    n = draw(st.integers(0, 6))
    feats = []
    for k in range(n):
        feats.append(
            Feature(
                id=k,
                x=draw(st.floats(0, w, exclude_max=True)),
                y=draw(st.floats(0, h, exclude_max=True)),
                scale=draw(st.floats(1e-3, 1e3)),
                orientation=draw(st.floats(-20, 20)),
                descriptor=tuple(draw(st.lists(finite, min_size=dim, max_size=dim))),
                response=draw(finite),
            )
        )
    return FeatureSet(image_width=w, image_height=h, features=tuple(feats), descriptor_dim=dim)


@settings(max_examples=150)
@given(feature_sets())
def test_feature_set_roundtrip_bytes(fs):
    a, b = roundtrip(rio.encode_feature_set, rio.decode_feature_set, fs)
    assert a == b


def test_feature_near_upper_bound_stays_inside():
    fs = FeatureSet(10, 10, (Feature(0, 10 - 1e-12, 9.9999999999, 1.0, 2 * math.pi - 1e-12, (0.0,)),), 1)
    doc = json.loads(rio.dumps(rio.encode_feature_set(fs)))
    back = rio.decode_feature_set(doc)
    assert back.features[0].x < 10 and back.features[0].y < 10
    assert back.features[0].orientation == 0.0


@st.composite
def ground_truths(draw):
    rps = []
    for _ in range(draw(st.integers(1, 3))):
        regs = []
        for _ in range(draw(st.integers(1, 4))):
            if draw(st.booleans()):
                x, y = draw(finite), draw(finite)
                regs.append(GtRegion(box=(x, y, x + draw(st.floats(0.1, 100)), y + draw(st.floats(0.1, 100)))))
            else:
                pts = draw(st.lists(st.tuples(finite, finite), min_size=3, max_size=6))
                regs.append(GtRegion(polygon=tuple(pts)))
        rps.append(tuple(regs))
    return GroundTruth(rps=tuple(rps))


@settings(max_examples=100)
@given(ground_truths())
def test_ground_truth_roundtrip_bytes(gt):
    a, b = roundtrip(rio.encode_ground_truth, rio.decode_ground_truth, gt)
    assert a == b


@settings(max_examples=100)
@given(st.lists(st.floats(0, 10), max_size=5), st.one_of(st.floats(0, 1), st.just(math.inf)), st.booleans())
def test_ts_roundtrip_bytes(crs, dev, tested):
    res = TsResult(tested=tested, cross_ratios=tuple(crs), deviation=dev, has_symmetry=tested and dev <= 0.06, threshold=0.06)
    a, b = roundtrip(lambda r: rio.encode_ts([r]), lambda d: rio.decode_ts(d)[0], res)
    assert a == b


@settings(max_examples=100)
@given(finite, finite, st.floats(1, 1e4))
def test_vp_roundtrip_bytes(x, y, f):
    n = math.sqrt(x * x + y * y + f * f)
    vp = VanishingPoint(point=(x, y), direction=(x / n, y / n, f / n), inlier_lines=(0, 2, 3), focal_nominal=f)
    a, b = roundtrip(lambda v: rio.encode_vp(v, (640, 480)), rio.decode_vp, vp)
    assert a == b


def test_vp_not_found_roundtrip():
    a, b = roundtrip(rio.encode_vp, rio.decode_vp, None)
    assert a == b and rio.decode_vp(json.loads(a)) is None


@settings(max_examples=100)
@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=4))
def test_report_roundtrip_bytes(rates):
    reps = [
        EvalReport(h=0.1 * k, rp_precision=a, rp_recall=b, inst_precision=c, inst_recall=d,
                   per_rp_assignments=(0, None), counts=(3, 4), total=7)
        for k, (a, b, c, d) in enumerate(rates)
    ]
    a, b = roundtrip(rio.encode_report, rio.decode_report, reps)
    assert a == b


@pytest.fixture(scope="module")
def scene_rps():
    scene = render_scene(PRESETS["two-motifs"](0), with_image=False)
    words = build_visual_words(scene.features, 0.5)
    return scene, words, discover_rps(scene.features, words)


def test_rps_roundtrip_bytes(scene_rps):
    _, _, rps = scene_rps
    a, b = roundtrip(rio.encode_rps, rio.decode_rps, rps)
    assert a == b


def test_stored_score_matches_recomputation(scene_rps):
    scene, words, rps = scene_rps
    cache = precompute_affinity_cache(scene.features, words, rps[0].params)
    for rp in rps:
        assert abs(rp_objective(rp.matrix, cache) - rp.score) <= 1e-9


def test_decoded_score_matches_recomputation(scene_rps):
    scene, words, rps = scene_rps
    back = rio.decode_rps(json.loads(rio.dumps(rio.encode_rps(rps))))
    cache = precompute_affinity_cache(scene.features, words, rps[0].params)
    for rp in back:
        assert abs(rp_objective(rp.matrix, cache) - rp.score) <= 1e-9


def test_canonical_form():
    text = rio.dumps({"b": 1.0 / 3.0, "a": [math.inf, 2]})
    assert text == '{\n  "a": [\n    null,\n    2\n  ],\n  "b": 0.333333333\n}\n'


def test_schema_and_type_checked():
    with pytest.raises(ParseError):
        rio.decode_feature_set({"schema": "other", "type": "features"})
    with pytest.raises(ParseError):
        rio.decode_feature_set({"schema": rio.SCHEMA, "type": "gt"})


def _features_doc(features, width=100, height=100, dim=2):
    return {"schema": rio.SCHEMA, "type": "features", "image_width": width, "image_height": height,
            "descriptor_dim": dim, "features": features}


def _f(fid, x=10.0, y=10.0, scale=1.0):
    return {"id": fid, "x": x, "y": y, "scale": scale, "orientation": 0.5, "descriptor": [0.1, 0.2]}


def test_load_features_valid(tmp_path):
    p = tmp_path / "features.json"
    p.write_text(json.dumps(_features_doc([_f(0), _f(1, 20.0), _f(2, 30.0)])))
    assert len(load_features(p).features) == 3


def test_load_features_zero_scale_names_feature(tmp_path):
    p = tmp_path / "features.json"
    p.write_text(json.dumps(_features_doc([_f(0), _f(1, scale=0.0)])))
    with pytest.raises(InvariantViolation, match="feature 1"):
        load_features(p)


def test_load_features_out_of_bounds(tmp_path):
    p = tmp_path / "features.json"
    p.write_text(json.dumps(_features_doc([_f(0, x=150.0)])))
    with pytest.raises(InvariantViolation):
        load_features(p)


def test_load_features_parse_errors(tmp_path):
    p = tmp_path / "features.json"
    p.write_text("{not json")
    with pytest.raises(ParseError):
        load_features(p)
    p.write_text(json.dumps(_features_doc([{"id": 0}])))
    with pytest.raises(ParseError):
        load_features(p)
    with pytest.raises(MissingInputError):
        load_features(tmp_path / "absent.json")


def test_atomic_write_leaves_no_temp_files(tmp_path):
    rio.write_json(tmp_path / "x.json", {"a": 1})
    assert sorted(p.name for p in tmp_path.iterdir()) == ["x.json"]
