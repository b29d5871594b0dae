"""Command-line front end.

Every command that writes files also writes a run manifest next to them.
Failures exit with the error class's code (see ``rescu.errors``); argument
errors exit with 2.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from PIL import Image

from . import __version__
from . import io as rio
from .captioner import CaptionContext, count_for_regions, enhance_caption
from .discovery import default_grid, discover_rps, grid_search_params
from .errors import (
    InsufficientLines, MissingInputError, NoConsensus, ParseError, RescuError, UnsupportedFormat, ZeroInputs,
)
from .features import build_visual_words, detect_features, load_image
from .geometry import RansacConfig, detect_translation_symmetry, lines_from_rp, ransac_vp, rectify_rp, vp_to_vector
from .metrics import evaluate, mean_report, sweep_h
from .overlay import curve_csv, overlay_png_bytes, overlay_svg
from .synth import PRESETS, render_scene
from .types import DiscoveryParams, FeatureSet, VanishingPoint

log = logging.getLogger("rescu")

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")
DEFAULT_WORD_DIST = 0.5


def env_seed() -> int:
    raw = os.environ.get("RESCU_SEED")
    if raw is None or raw == "":
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ParseError(f"RESCU_SEED must be an integer, got {raw!r}") from None


class Timer:
    def __init__(self) -> None:
        self.times: dict[str, float] = {}
        self.stage = "setup"

    @contextmanager
    def __call__(self, name: str):
        self.stage = name
        t0 = time.perf_counter()
        try:
            yield
        except RescuError as exc:
            if not getattr(exc, "stage", None):
                exc.stage = name
            raise
        finally:
            self.times[name] = self.times.get(name, 0.0) + time.perf_counter() - t0


def manifest_doc(command: str, inputs: dict, parameters: dict, seeds: dict, timer: Timer) -> dict:
    return {
        "schema": rio.SCHEMA,
        "type": "manifest",
        "command": command,
        "inputs": inputs,
        "parameters": parameters,
        "seeds": seeds,
        "version": __version__,
        "wall_time_s": dict(sorted(timer.times.items())),
    }


def _manifest_path(out: Path) -> Path:
    return out.with_name(out.name.split(".")[0] + ".manifest.json")


def parse_size(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}") from None


def parse_sweep(text: str) -> list[float]:
    try:
        lo, hi, step = (float(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo:hi:step, got {text!r}") from None
    if step <= 0 or hi < lo:
        raise argparse.ArgumentTypeError("sweep needs lo <= hi and step > 0")
    n = int(round((hi - lo) / step)) + 1
    return [round(lo + k * step, 9) for k in range(n) if lo + k * step <= hi + 1e-9]


def _load_features_any(path: Path, contrast: Optional[float] = None) -> tuple[FeatureSet, Optional[np.ndarray]]:
    """Features from a features.json or by running the detector on an image."""
    if not path.exists():
        raise MissingInputError(f"{path}: no such file")
    if path.suffix.lower() == ".json":
        return rio.decode_feature_set(rio.read_json(path)), None
    if path.suffix.lower() not in IMAGE_SUFFIXES:
        raise UnsupportedFormat(f"{path}: expected PNG, JPEG or features JSON")
    image = load_image(path)
    kwargs = {} if contrast is None else {"contrast_threshold": contrast}
    return detect_features(image, **kwargs), image


def _params_from(args) -> DiscoveryParams:
    p = DiscoveryParams()
    kw = {"rng_seed": args.seed}
    if args.pd is not None:
        kw["p_d"] = args.pd
    if args.ps is not None:
        kw["p_s"] = args.ps
    if args.ptheta is not None:
        kw["p_theta"] = args.ptheta
    if args.initials is not None:
        kw["n_initials"] = args.initials
    return replace(p, **kw)


def find_vp(rps, fs: FeatureSet, cfg: RansacConfig):
    """VP from the best-scoring pattern that yields enough consistent lines."""
    for rp in rps:
        lines = lines_from_rp(rp, fs)
        if len(lines) < cfg.min_lines:
            continue
        try:
            vp = ransac_vp(lines, cfg, image_size=(fs.image_width, fs.image_height))
        except (InsufficientLines, NoConsensus):
            continue
        return vp, lines
    return None, []


def vp_status(vp: Optional[VanishingPoint], width: int, height: int) -> str:
    if vp is None:
        return "none"
    x, y = vp.point
    return "inside" if 0 <= x < width and 0 <= y < height else "outside"


# -- pipeline ------------------------------------------------------------------


@dataclass(frozen=True)
class PipelineOptions:
    word_dist: float = DEFAULT_WORD_DIST
    contrast: Optional[float] = None
    grid: bool = False
    params: DiscoveryParams = field(default_factory=DiscoveryParams)
    ac_deg: float = 10.0
    ts_t: float = 0.06
    gt: Optional[str] = None
    evaluate: bool = False
    h: float = 0.5
    sweep: Optional[tuple[float, ...]] = None
    caption: Optional[str] = None
    overlay: str = "png"


def _resolve_gt(input_path: Path, opts: PipelineOptions) -> Optional[Path]:
    if opts.gt:
        gt = Path(opts.gt)
    elif opts.evaluate:
        gt = input_path.parent / "gt.json"
    else:
        return None
    if not gt.exists():
        raise MissingInputError(f"{gt}: ground truth not found")
    return gt


def run_pipeline(input_path: str | Path, outdir: str | Path, opts: PipelineOptions) -> dict:
    """Run every stage on one input and write its outputs to ``outdir``.

    Inputs are validated before anything is written, so a missing ground
    truth leaves no partial results behind. Returns the evaluation report
    (or None) and the list of written files.
    """
    timer = Timer()
    input_path, outdir = Path(input_path), Path(outdir)
    with timer("inputs"):
        if not input_path.exists():
            raise MissingInputError(f"{input_path}: no such file")
        gt_path = _resolve_gt(input_path, opts)
        gt = rio.decode_ground_truth(rio.read_json(gt_path)) if gt_path else None
    with timer("features"):
        fs, image = _load_features_any(input_path, opts.contrast)
        words = build_visual_words(fs, opts.word_dist)
    with timer("discover"):
        if opts.grid:
            params, rps = grid_search_params(fs, words, default_grid(opts.params))
        else:
            params, rps = opts.params, discover_rps(fs, words, opts.params)
    cfg = RansacConfig(angular_threshold_deg=opts.ac_deg, rng_seed=opts.params.rng_seed)
    with timer("vpd"):
        vp, lines = find_vp(rps, fs, cfg)
    with timer("symmetry"):
        ts = [detect_translation_symmetry(rp, opts.ts_t, fs=fs) for rp in rps]
    report_doc = None
    reports = []
    if gt is not None:
        with timer("eval"):
            hs = list(opts.sweep) if opts.sweep else [opts.h]
            reports = sweep_h(rps, gt, hs)
            report_doc = rio.encode_report(reports)
    caption_text = None
    if opts.caption:
        with timer("caption"):
            if not rps:
                raise RescuError("no recurring pattern to describe")
            caption_text = enhance_caption(
                CaptionContext(
                    base_caption=opts.caption, rp_count=rps[0].count,
                    ts_detected=bool(ts and ts[0].has_symmetry),
                    vp_status=vp_status(vp, fs.image_width, fs.image_height),
                )
            )
    with timer("overlay"):
        if image is None:
            image = np.full((fs.image_height, fs.image_width), 128, dtype=np.uint8)
        if opts.overlay == "svg":
            overlay = overlay_svg(fs.image_width, fs.image_height, rps, lines, vp)
        else:
            overlay = overlay_png_bytes(image, rps, lines, vp)

    with timer("write"):
        written = []

        def put(name, payload):
            rio.write_text_atomic(outdir / name, payload)
            written.append(name)

        if input_path.suffix.lower() != ".json":
            put("features.json", rio.dumps(rio.encode_feature_set(fs)))
        put("rps.json", rio.dumps(rio.encode_rps(rps)))
        put("vp.json", rio.dumps(rio.encode_vp(vp, (fs.image_width, fs.image_height))))
        put("ts.json", rio.dumps(rio.encode_ts(ts)))
        if report_doc is not None:
            put("report.json", rio.dumps(report_doc))
            if opts.sweep:
                rows = [(r.h, r.rp_precision, r.rp_recall, r.inst_precision, r.inst_recall) for r in reports]
                put("curves.csv", curve_csv(rows, ("h", "rp_precision", "rp_recall", "inst_precision", "inst_recall")))
        if caption_text is not None:
            put("caption.txt", caption_text + "\n")
        put("overlay." + opts.overlay, overlay)
    params_doc = asdict(opts)
    params_doc["params"] = asdict(params)
    params_doc["searched_grid"] = opts.grid
    manifest = manifest_doc(
        "pipeline", {"input": str(input_path), "gt": str(gt_path) if gt_path else None}, params_doc,
        {"discovery": params.rng_seed, "ransac": cfg.rng_seed}, timer,
    )
    rio.write_json(outdir / "manifest.json", manifest)
    return {"report": reports[0] if len(reports) == 1 else (reports or None), "reports": reports, "written": written}


def _options_from_manifest(path: Path) -> tuple[str, PipelineOptions]:
    doc = rio.read_json(path)
    if not isinstance(doc, dict) or doc.get("type") != "manifest" or doc.get("command") != "pipeline":
        raise ParseError(f"{path}: not a pipeline manifest")
    p = dict(doc["parameters"])
    p.pop("searched_grid", None)
    p["params"] = rio.decode_params(p["params"])
    if p.get("sweep") is not None:
        p["sweep"] = tuple(p["sweep"])
    return doc["inputs"]["input"], PipelineOptions(**p)


# -- subcommands -----------------------------------------------------------------


def cmd_features(args) -> int:
    timer = Timer()
    with timer("features"):
        fs, _ = _load_features_any(Path(args.image), args.contrast)
    out = Path(args.output)
    with timer("write"):
        rio.write_json(out, rio.encode_feature_set(fs))
    words = build_visual_words(fs, args.word_dist)
    log.info("%d features, %d visual words", len(fs.features), len(words))
    rio.write_json(
        _manifest_path(out),
        manifest_doc("features", {"image": args.image}, {"contrast": args.contrast, "word_dist": args.word_dist}, {}, timer),
    )
    return 0


def cmd_discover(args) -> int:
    timer = Timer()
    with timer("inputs"):
        fs = rio.decode_feature_set(rio.read_json(args.features))
        words = build_visual_words(fs, args.word_dist)
    base = _params_from(args)
    with timer("discover"):
        if args.grid:
            params, rps = grid_search_params(fs, words, default_grid(base))
        else:
            params, rps = base, discover_rps(fs, words, base)
    out = Path(args.output)
    rio.write_json(out, rio.encode_rps(rps))
    rio.write_json(
        _manifest_path(out),
        manifest_doc("discover", {"features": args.features},
                     {"grid": args.grid, "word_dist": args.word_dist, "params": asdict(params)},
                     {"discovery": params.rng_seed}, timer),
    )
    print(f"{len(rps)} pattern(s); counts {[rp.count for rp in rps]}")
    return 0


def cmd_vpd(args) -> int:
    timer = Timer()
    with timer("inputs"):
        rps = rio.decode_rps(rio.read_json(args.rps))
        fs = rio.decode_feature_set(rio.read_json(args.features))
    size = args.image_size or (fs.image_width, fs.image_height)
    cfg = RansacConfig(angular_threshold_deg=args.ac_deg, rng_seed=args.seed)
    with timer("vpd"):
        vp, _ = find_vp(rps, fs, cfg)
        if vp is not None and tuple(size) != (fs.image_width, fs.image_height):
            vp = replace(vp, direction=tuple(float(v) for v in vp_to_vector(vp.point, *size)), focal_nominal=(size[0] + size[1]) / 4.0)
    out = Path(args.output)
    rio.write_json(out, rio.encode_vp(vp, tuple(size)))
    rio.write_json(
        _manifest_path(out),
        manifest_doc("vpd", {"rps": args.rps, "features": args.features}, {"ac_deg": args.ac_deg, "image_size": list(size)},
                     {"ransac": args.seed}, timer),
    )
    if vp is None:
        print("no vanishing point found")
        raise NoConsensus("no pattern produced a consistent line bundle")
    print(f"vp = ({vp.point[0]:.2f}, {vp.point[1]:.2f}) from {len(vp.inlier_lines)} lines")
    return 0


def cmd_symmetry(args) -> int:
    timer = Timer()
    with timer("inputs"):
        rps = rio.decode_rps(rio.read_json(args.rps))
        fs = rio.decode_feature_set(rio.read_json(args.features)) if args.features else None
    with timer("symmetry"):
        results = [detect_translation_symmetry(rp, args.t, fs=fs) for rp in rps]
    out = Path(args.output)
    rio.write_json(out, rio.encode_ts(results))
    rio.write_json(_manifest_path(out), manifest_doc("symmetry", {"rps": args.rps, "features": args.features}, {"t": args.t}, {}, timer))
    for k, r in enumerate(results):
        print(f"rp {k}: tested={r.tested} deviation={r.deviation:.4g} symmetric={r.has_symmetry}")
    return 0


def cmd_rectify(args) -> int:
    timer = Timer()
    with timer("inputs"):
        image = load_image(args.image)
        rps = rio.decode_rps(rio.read_json(args.rps))
        vp = rio.decode_vp(rio.read_json(args.vp))
        fs = rio.decode_feature_set(rio.read_json(args.features)) if args.features else None
        if not rps:
            raise ParseError(f"{args.rps}: no patterns")
        if args.index >= len(rps):
            raise ParseError(f"pattern index {args.index} out of range ({len(rps)} patterns)")
    with timer("rectify"):
        raster, H = rectify_rp(image, rps[args.index], vp, fs=fs)
    out = Path(args.output)
    buf = _png_bytes(raster)
    rio.write_text_atomic(out, buf)
    rio.write_json(
        _manifest_path(out),
        manifest_doc("rectify", {"image": args.image, "rps": args.rps, "vp": args.vp},
                     {"index": args.index, "homography": H.tolist()}, {}, timer),
    )
    return 0


def _png_bytes(raster: np.ndarray) -> bytes:
    import io as _io

    buf = _io.BytesIO()
    Image.fromarray(raster).save(buf, format="PNG")
    return buf.getvalue()


def cmd_count(args) -> int:
    rps = rio.decode_rps(rio.read_json(args.rps))
    counts = [rp.count for rp in rps]
    doc = {"schema": rio.SCHEMA, "type": "counts", "counts": counts, "total": sum(counts)}
    if args.output:
        rio.write_json(args.output, doc)
    sys.stdout.write(rio.dumps(doc))
    return 0


def cmd_eval(args) -> int:
    timer = Timer()
    with timer("inputs"):
        rps = rio.decode_rps(rio.read_json(args.rps))
        gt = rio.decode_ground_truth(rio.read_json(args.gt))
    hs = args.sweep if args.sweep else [args.h]
    with timer("eval"):
        reports = sweep_h(rps, gt, hs)
    out = Path(args.output)
    rio.write_json(out, rio.encode_report(reports))
    if args.sweep:
        rows = [(r.h, r.rp_precision, r.rp_recall, r.inst_precision, r.inst_recall) for r in reports]
        rio.write_text_atomic(out.with_suffix(".csv"), curve_csv(rows, ("h", "rp_precision", "rp_recall", "inst_precision", "inst_recall")))
    rio.write_json(_manifest_path(out), manifest_doc("eval", {"rps": args.rps, "gt": args.gt}, {"h": hs}, {}, timer))
    for r in reports:
        print(
            f"h={r.h:.3g} P_RP={r.rp_precision:.3f} R_RP={r.rp_recall:.3f} "
            f"P_I={r.inst_precision:.3f} R_I={r.inst_recall:.3f}"
        )
    return 0


def cmd_caption(args) -> int:
    count, noun_regions = args.count, None
    if args.regions:
        regions_path, rps_path = args.regions
        doc = rio.read_json(regions_path)
        try:
            noun_regions = tuple((str(r["noun"]), tuple(float(v) for v in r["box"])) for r in doc["regions"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"{regions_path}: {exc}") from exc
        hit = count_for_regions(rio.decode_rps(rio.read_json(rps_path)), noun_regions)
        if hit is not None:
            count = hit[1]
    if count is None:
        raise ParseError("no count given and no pattern falls inside a noun region")
    text = enhance_caption(
        CaptionContext(base_caption=args.base, rp_count=count, ts_detected=args.ts, vp_status=args.vp, noun_regions=noun_regions)
    )
    print(text)
    return 0


def cmd_synth(args) -> int:
    timer = Timer()
    outdir = Path(args.output)
    with timer("render"):
        scene = render_scene(PRESETS[args.preset](args.seed))
    with timer("write"):
        rio.write_text_atomic(outdir / "image.png", _png_bytes(scene.image))
        rio.write_json(outdir / "features.json", rio.encode_feature_set(scene.features))
        rio.write_json(outdir / "gt.json", rio.encode_ground_truth(scene.gt))
        w, h = scene.features.image_width, scene.features.image_height
        if scene.vp_gt is not None:
            vp = VanishingPoint(
                point=scene.vp_gt, direction=tuple(float(v) for v in vp_to_vector(scene.vp_gt, w, h)),
                inlier_lines=(), focal_nominal=(w + h) / 4.0,
            )
            rio.write_json(outdir / "vp_gt.json", rio.encode_vp(vp, (w, h)))
    rio.write_json(
        outdir / "manifest.json",
        manifest_doc("synth", {}, {"preset": args.preset, "ts_gt": scene.ts_gt}, {"scene": args.seed}, timer),
    )
    return 0


def _pipeline_options(args) -> PipelineOptions:
    return PipelineOptions(
        word_dist=args.word_dist, contrast=args.contrast, grid=args.grid, params=_params_from(args),
        ac_deg=args.ac_deg, ts_t=args.t, gt=args.gt, evaluate=args.eval, h=args.h,
        sweep=tuple(args.sweep) if args.sweep else None, caption=args.caption, overlay=args.overlay,
    )


def cmd_pipeline(args) -> int:
    if args.replay:
        input_path, opts = _options_from_manifest(Path(args.replay))
    else:
        if not args.input:
            raise MissingInputError("pipeline needs an input image / features file or --replay")
        input_path, opts = args.input, _pipeline_options(args)
    result = run_pipeline(input_path, args.output, opts)
    rep = result["reports"]
    if rep:
        r = rep[0]
        print(f"P_RP={r.rp_precision:.3f} R_RP={r.rp_recall:.3f} P_I={r.inst_precision:.3f} R_I={r.inst_recall:.3f}")
    print("wrote " + ", ".join(result["written"]))
    return 0


def batch_inputs(directory: Path) -> list[tuple[str, Path, Optional[Path]]]:
    """(name, input, gt) triples, sorted by name.

    An entry is a sub-directory holding ``image.png`` or ``features.json``
    (plus an optional ``gt.json``), or a loose image / ``*.features.json``
    file with an optional sibling ``<stem>.gt.json``.
    """
    items = []
    for p in sorted(directory.iterdir()):
        if p.is_dir():
            src = next((p / n for n in ("features.json", "image.png", "image.jpg") if (p / n).exists()), None)
            if src is not None:
                gt = p / "gt.json"
                items.append((p.name, src, gt if gt.exists() else None))
        elif p.suffix.lower() in IMAGE_SUFFIXES or p.name.endswith(".features.json"):
            stem = p.name[: -len(".features.json")] if p.name.endswith(".features.json") else p.stem
            gt = p.with_name(stem + ".gt.json")
            items.append((stem, p, gt if gt.exists() else None))
    return items


def _batch_one(job):
    name, src, gt, outdir, opts = job
    try:
        res = run_pipeline(src, outdir / name, replace(opts, gt=str(gt) if gt else None, evaluate=False))
        return name, res["reports"], None
    except (RescuError, OSError, ValueError) as exc:
        return name, None, f"{type(exc).__name__}: {exc}"


def cmd_batch(args) -> int:
    directory = Path(args.directory)
    if not directory.is_dir():
        raise MissingInputError(f"{directory}: not a directory")
    opts = _pipeline_options(args)
    outdir = Path(args.output)
    jobs = [(name, src, gt, outdir, opts) for name, src, gt in batch_inputs(directory)]
    if not jobs:
        raise ZeroInputs(f"{directory}: no inputs")
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_batch_one, jobs))
    else:
        results = [_batch_one(j) for j in jobs]
    results.sort(key=lambda r: r[0])
    ok = [r for r in results if r[2] is None]
    failures = [{"name": name, "error": err} for name, _, err in results if err is not None]
    if not ok:
        raise ZeroInputs(f"all {len(results)} inputs failed")
    evaluated = [(name, reps) for name, reps, _ in ok if reps]
    hs = list(args.sweep) if args.sweep else [args.h]
    curves = []
    for k, h in enumerate(hs):
        if evaluated:
            mean = mean_report([reps[k] for _, reps in evaluated])
            curves.append({"h": h, **mean})
    doc = {
        "schema": rio.SCHEMA, "type": "batch", "processed": [name for name, _, _ in ok],
        "evaluated": [name for name, _ in evaluated], "failures": failures, "mean": curves,
    }
    rio.write_json(outdir / "aggregate.json", doc)
    if args.sweep and curves:
        keys = ("rp_precision", "rp_recall", "inst_precision", "inst_recall")
        rows = [(c["h"], *(c[k] for k in keys)) for c in curves]
        rio.write_text_atomic(outdir / "curves.csv", curve_csv(rows, ("h", *keys)))
    print(f"{len(ok)} processed, {len(evaluated)} evaluated, {len(failures)} failed")
    for f in failures:
        print(f"  failed: {f['name']}: {f['error']}")
    return 0


# -- parser --------------------------------------------------------------------


def _add_discovery_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--grid", action="store_true", help="grid-search p_d, p_s, p_theta")
    p.add_argument("--pd", type=float, help="max feature distance within an instance (fraction of diagonal)")
    p.add_argument("--ps", type=float, help="max scale ratio difference")
    p.add_argument("--ptheta", type=float, help="max orientation difference (degrees)")
    p.add_argument("--initials", type=int, help="number of seed URPs")
    p.add_argument("--word-dist", type=float, default=DEFAULT_WORD_DIST, help="visual word descriptor distance")


def build_parser() -> argparse.ArgumentParser:
    seed = env_seed()
    parser = argparse.ArgumentParser(prog="rescu", description="Recurring pattern discovery and single-view geometry.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("--version", action="version", version=f"rescu {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("features", help="detect features in an image")
    p.add_argument("image")
    p.add_argument("-o", "--output", default="features.json")
    p.add_argument("--contrast", type=float)
    p.add_argument("--word-dist", type=float, default=DEFAULT_WORD_DIST)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("discover", help="find recurring patterns in a feature set")
    p.add_argument("features")
    p.add_argument("-o", "--output", default="rps.json")
    p.add_argument("--seed", type=int, default=seed)
    _add_discovery_flags(p)
    p.set_defaults(func=cmd_discover)

    p = sub.add_parser("vpd", help="vanishing point from pattern correspondences")
    p.add_argument("rps")
    p.add_argument("--features", required=True, help="features.json the patterns refer to")
    p.add_argument("--image-size", type=parse_size)
    p.add_argument("-o", "--output", default="vp.json")
    p.add_argument("--ac-deg", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=seed)
    p.set_defaults(func=cmd_vpd)

    p = sub.add_parser("symmetry", help="cross-ratio translation symmetry test")
    p.add_argument("rps")
    p.add_argument("--features", help="features.json (centroids from complete rows)")
    p.add_argument("--t", type=float, default=0.06)
    p.add_argument("-o", "--output", default="ts.json")
    p.set_defaults(func=cmd_symmetry)

    p = sub.add_parser("rectify", help="warp a pattern to an affine view")
    p.add_argument("image")
    p.add_argument("rps")
    p.add_argument("vp")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--features")
    p.add_argument("--index", type=int, default=0, help="which pattern to rectify")
    p.set_defaults(func=cmd_rectify)

    p = sub.add_parser("count", help="instance counts per pattern")
    p.add_argument("rps")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_count)

    p = sub.add_parser("eval", help="precision / recall against ground truth")
    p.add_argument("rps")
    p.add_argument("gt")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--h", type=float, default=0.5)
    g.add_argument("--sweep", type=parse_sweep, help="lo:hi:step")
    p.add_argument("-o", "--output", default="report.json")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("caption", help="enhance a caption with pattern facts")
    p.add_argument("--base", required=True)
    p.add_argument("--count", type=int)
    p.add_argument("--ts", action="store_true")
    p.add_argument("--vp", choices=("none", "inside", "outside"), default="none")
    p.add_argument("--regions", nargs=2, metavar=("REGIONS_JSON", "RPS_JSON"))
    p.set_defaults(func=cmd_caption)

    p = sub.add_parser("synth", help="render a synthetic scene")
    p.add_argument("--preset", choices=sorted(PRESETS), required=True)
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_synth)

    for name, func, helptext in (("pipeline", cmd_pipeline, "all stages on one input"), ("batch", cmd_batch, "pipeline over a directory")):
        p = sub.add_parser(name, help=helptext)
        if name == "pipeline":
            p.add_argument("input", nargs="?")
            p.add_argument("--replay", help="re-run with the inputs and parameters of a manifest")
        else:
            p.add_argument("directory")
            p.add_argument("--jobs", type=int, default=1)
        p.add_argument("-o", "--output", required=True)
        p.add_argument("--seed", type=int, default=seed)
        _add_discovery_flags(p)
        p.add_argument("--contrast", type=float)
        p.add_argument("--ac-deg", type=float, default=10.0)
        p.add_argument("--t", type=float, default=0.06)
        p.add_argument("--gt")
        p.add_argument("--eval", action="store_true", help="evaluate against gt.json next to the input")
        g = p.add_mutually_exclusive_group()
        g.add_argument("--h", type=float, default=0.5)
        g.add_argument("--sweep", type=parse_sweep)
        p.add_argument("--caption")
        p.add_argument("--overlay", choices=("png", "svg"), default="png")
        p.set_defaults(func=func)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        parser = build_parser()
        args = parser.parse_args(argv)
    except RescuError as exc:
        print(f"rescu: {exc}", file=sys.stderr)
        return exc.exit_code
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except RescuError as exc:
        stage = getattr(exc, "stage", None)
        where = f"{args.command}: {stage}" if stage else args.command
        print(f"rescu {where}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
