import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from rescu import io as rio
from rescu.cli import main


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def scenes(tmp_path_factory):
    root = tmp_path_factory.mktemp("scenes")
    for name, preset, seed in (("grid0", "grid", 0), ("grid1", "grid", 1), ("persp", "perspective-row", 0), ("two", "two-motifs", 0)):
        assert main(["synth", "--preset", preset, "--seed", str(seed), "-o", str(root / name)]) == 0
    return root


def test_synth_outputs(scenes):
    names = sorted(p.name for p in (scenes / "persp").iterdir())
    assert names == ["features.json", "gt.json", "image.png", "manifest.json", "vp_gt.json"]
    assert not (scenes / "grid0" / "vp_gt.json").exists()


def test_pipeline_grid_end_to_end(scenes, tmp_path):
    out = tmp_path / "out"
    assert run("pipeline", scenes / "grid0" / "features.json", "--eval", "-o", out) == 0
    entry = rio.read_json(out / "report.json")["entries"][0]
    assert entry["inst_recall"] == 1.0 and entry["rp_recall"] == 1.0
    assert entry["counts"] == [6]
    assert (out / "overlay.png").stat().st_size > 0
    svg_out = tmp_path / "svg"
    assert run("pipeline", scenes / "grid0" / "features.json", "--overlay", "svg", "-o", svg_out) == 0
    svg = (svg_out / "overlay.svg").read_text()
    assert svg.count('class="rp0"') == 6 and 'class="rp1"' not in svg


def test_pipeline_missing_gt(scenes, tmp_path):
    src = tmp_path / "features.json"
    src.write_bytes((scenes / "grid0" / "features.json").read_bytes())
    out = tmp_path / "out"
    assert run("pipeline", src, "--eval", "-o", out) == 3
    assert not out.exists()


def test_pipeline_perspective(scenes, tmp_path):
    out = tmp_path / "out"
    assert run("pipeline", scenes / "persp" / "features.json", "-o", out) == 0
    vp = rio.decode_vp(rio.read_json(out / "vp.json"))
    gt = rio.decode_vp(rio.read_json(scenes / "persp" / "vp_gt.json"))
    assert vp is not None and np.hypot(*np.subtract(vp.point, gt.point)) < 5.0
    ts = rio.decode_ts(rio.read_json(out / "ts.json"))
    assert ts[0].has_symmetry


def test_pipeline_replay_byte_identical(scenes, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("pipeline", scenes / "two" / "features.json", "--eval", "--sweep", "0.1:0.9:0.2", "-o", a) == 0
    assert run("pipeline", "--replay", a / "manifest.json", "-o", b) == 0
    for name in ("rps.json", "vp.json", "ts.json", "report.json", "curves.csv", "overlay.png"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_pipeline_caption(scenes, tmp_path):
    out = tmp_path / "out"
    assert run("pipeline", scenes / "grid0" / "features.json", "--caption", "A group of tiles on a wall.", "-o", out) == 0
    assert (out / "caption.txt").read_text() == "Six similar tiles on a wall.\n"


def test_pipeline_from_image(scenes, tmp_path):
    out = tmp_path / "out"
    assert run("pipeline", scenes / "grid0" / "image.png", "--gt", scenes / "grid0" / "gt.json", "-o", out) == 0
    assert (out / "features.json").exists()
    assert rio.read_json(out / "report.json")["entries"][0]["inst_recall"] >= 0.7


def test_stage_commands(scenes, tmp_path, capsys):
    feats = scenes / "two" / "features.json"
    rps = tmp_path / "rps.json"
    assert run("discover", feats, "-o", rps) == 0
    assert (tmp_path / "rps.manifest.json").exists()
    assert run("count", rps, "-o", tmp_path / "counts.json") == 0
    capsys.readouterr()
    counts = rio.read_json(tmp_path / "counts.json")
    assert counts["counts"] == [3, 5] and counts["total"] == 8
    assert run("eval", rps, scenes / "two" / "gt.json", "--sweep", "0.1:0.9:0.4", "-o", tmp_path / "report.json") == 0
    assert len(rio.read_json(tmp_path / "report.json")["entries"]) == 3
    assert (tmp_path / "report.csv").read_text().startswith("h,")

    prps = tmp_path / "prps.json"
    pfeats = scenes / "persp" / "features.json"
    assert run("discover", pfeats, "-o", prps) == 0
    vp = tmp_path / "vp.json"
    assert run("vpd", prps, "--features", pfeats, "--image-size", "640x480", "-o", vp) == 0
    assert run("symmetry", prps, "--features", pfeats, "-o", tmp_path / "ts.json") == 0
    assert run("rectify", scenes / "persp" / "image.png", prps, vp, "--features", pfeats, "-o", tmp_path / "rect.png") == 0
    assert (tmp_path / "rect.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_caption_command(capsys):
    assert run("caption", "--base", "A group of men jumping in the sky.", "--count", "5", "--ts", "--vp", "outside") == 0
    assert capsys.readouterr().out.strip() == (
        "Five similar men jumping in the sky. The men have a potential translation symmetry in 3D "
        "and form a vanishing point outside of the image."
    )
    assert run("caption", "--base", "A cat.", "--count", "3") == 10
    assert run("caption", "--base", "A group of cats.", "--count", "100") == 10


def test_error_exit_codes(tmp_path):
    assert run("discover", tmp_path / "absent.json") == 3
    bad = tmp_path / "bad.json"
    bad.write_text("{oops")
    assert run("discover", bad) == 4
    doc = {"schema": "rescu/v1", "type": "features", "image_width": 10, "image_height": 10, "descriptor_dim": 1,
           "features": [{"id": 0, "x": 1.0, "y": 1.0, "scale": 0.0, "orientation": 0.0, "descriptor": [1.0]}]}
    inv = tmp_path / "inv.json"
    inv.write_text(json.dumps(doc))
    assert run("discover", inv) == 5
    tiny = tmp_path / "tiny.png"
    from PIL import Image
    Image.fromarray(np.zeros((8, 8), dtype=np.uint8)).save(tiny)
    assert run("features", tiny, "-o", tmp_path / "f.json") == 6


def test_batch(scenes, tmp_path):
    src = tmp_path / "in"
    src.mkdir()
    for name in ("grid0", "grid1", "two"):
        d = src / name
        d.mkdir()
        for f in ("features.json", "gt.json"):
            (d / f).write_bytes((scenes / name / f).read_bytes())
    (src / "broken").mkdir()
    (src / "broken" / "features.json").write_text("not json")
    out = tmp_path / "out"
    assert run("batch", src, "--sweep", "0.3:0.7:0.2", "--jobs", "2", "-o", out) == 0
    agg = rio.read_json(out / "aggregate.json")
    assert agg["processed"] == ["grid0", "grid1", "two"]
    assert [f["name"] for f in agg["failures"]] == ["broken"]
    per = [rio.decode_report(rio.read_json(out / n / "report.json")) for n in agg["processed"]]
    for k, entry in enumerate(agg["mean"]):
        for key in ("rp_precision", "rp_recall", "inst_precision", "inst_recall"):
            assert entry[key] == pytest.approx(np.mean([getattr(r[k], key) for r in per]), abs=1e-9)
    assert (out / "curves.csv").read_text().startswith("h,")


def test_batch_empty_and_all_failed(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert run("batch", empty, "-o", tmp_path / "o1") == 12
    (empty / "x").mkdir()
    (empty / "x" / "features.json").write_text("[]")
    assert run("batch", empty, "-o", tmp_path / "o2") == 12


def test_env_seed_default(scenes, tmp_path, monkeypatch):
    monkeypatch.setenv("RESCU_SEED", "7")
    out = tmp_path / "rps.json"
    assert run("discover", scenes / "grid0" / "features.json", "-o", out) == 0
    doc = rio.decode_rps(rio.read_json(out))
    assert doc[0].params.rng_seed == 7


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "rescu", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "rescu" in res.stdout
