"""Canonical JSON interchange.

Every document carries ``"schema": "rescu/v1"`` and a ``"type"`` tag. Output
is deterministic: keys sorted, two-space indent, floats rounded to nine
significant digits (pattern scores keep full precision so they
stay exact against recomputation), non-finite floats written as ``null``. Decoding rebuilds
the frozen domain types, so every invariant is checked on the way in.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import asdict, fields
from decimal import ROUND_FLOOR, Decimal
from pathlib import Path
from typing import Any, Optional, Sequence

from .errors import InvariantViolation, MissingInputError, ParseError
from .metrics import EvalReport
from .types import (
    TWO_PI, DiscoveryParams, Feature, FeatureSet, GroundTruth, GtRegion, InstanceRegion, RecurringPattern,
    RpMatrix, TsResult, VanishingPoint,
)

SCHEMA = "rescu/v1"
SIG_DIGITS = 9


def fnum(v: float) -> Optional[float]:
    """Round to nine significant digits; None for inf/nan."""
    v = float(v)
    if not math.isfinite(v):
        return None
    return float(f"{v:.{SIG_DIGITS}g}")


def _fnum_below(v: float, limit: float) -> float:
    """Nine-digit rounding that stays strictly below ``limit``."""
    r = fnum(v)
    if r < limit:
        return r
    d = Decimal(repr(v))
    exp = d.adjusted() - (SIG_DIGITS - 1)
    q = d.quantize(Decimal(1).scaleb(exp), rounding=ROUND_FLOOR)
    r = float(q)
    while r >= limit:
        q -= Decimal(1).scaleb(exp)
        r = float(q)
    return float(f"{r:.{SIG_DIGITS}g}")


class _Exact(float):
    """Float written at full round-trip precision."""


def _clean(obj: Any) -> Any:
    if isinstance(obj, _Exact):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return obj
    if isinstance(obj, float):
        return fnum(obj)
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if hasattr(obj, "tolist"):
        return _clean(obj.tolist())
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(doc: dict) -> str:
    return json.dumps(_clean(doc), sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def _doc(kind: str, body: dict) -> dict:
    return {"schema": SCHEMA, "type": kind, **body}


def _check(doc: Any, kind: str) -> dict:
    if not isinstance(doc, dict):
        raise ParseError(f"expected a JSON object for {kind}")
    if doc.get("schema") != SCHEMA:
        raise ParseError(f"unsupported schema {doc.get('schema')!r} (want {SCHEMA})")
    if doc.get("type") != kind:
        raise ParseError(f"expected document type {kind!r}, got {doc.get('type')!r}")
    return doc


def _num(v: Any, what: str) -> float:
    if v is None:
        return math.inf
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ParseError(f"{what}: expected a number, got {v!r}")
    return float(v)


# -- features ----------------------------------------------------------------


def encode_feature_set(fs: FeatureSet) -> dict:
    feats = []
    for f in fs.features:
        theta = fnum(f.orientation)
        feats.append(
            {
                "id": f.id,
                "x": _fnum_below(f.x, fs.image_width),
                "y": _fnum_below(f.y, fs.image_height),
                "scale": f.scale,
                "orientation": 0.0 if theta >= TWO_PI else theta,
                "descriptor": list(f.descriptor),
                "response": f.response,
            }
        )
    return _doc(
        "features",
        {"image_width": fs.image_width, "image_height": fs.image_height, "descriptor_dim": fs.descriptor_dim, "features": feats},
    )


def decode_feature_set(doc: Any) -> FeatureSet:
    """Build a FeatureSet from a features document.

    Raises:
        ParseError: malformed document.
        InvariantViolation: a feature breaks a FeatureSet invariant (the
            message names the feature id).
    """
    doc = _check(doc, "features")
    try:
        width, height = int(doc["image_width"]), int(doc["image_height"])
        dim = int(doc.get("descriptor_dim", 128))
        raw = doc["features"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"features document: {exc}") from exc
    if not isinstance(raw, list):
        raise ParseError("'features' must be a list")
    feats = []
    for k, item in enumerate(raw):
        fid = item.get("id", k) if isinstance(item, dict) else k
        try:
            feats.append(
                Feature(
                    id=int(item["id"]),
                    x=_num(item["x"], "x"),
                    y=_num(item["y"], "y"),
                    scale=_num(item["scale"], "scale"),
                    orientation=_num(item["orientation"], "orientation"),
                    descriptor=tuple(_num(v, "descriptor") for v in item["descriptor"]),
                    response=_num(item.get("response", 0.0), "response"),
                )
            )
        except InvariantViolation as exc:
            raise InvariantViolation(f"feature {fid}: {exc}") from exc
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"feature {fid}: {exc}") from exc
    return FeatureSet(image_width=width, image_height=height, features=tuple(feats), descriptor_dim=dim)


# -- patterns ----------------------------------------------------------------


def encode_params(p: DiscoveryParams) -> dict:
    return asdict(p)


def decode_params(d: dict) -> DiscoveryParams:
    known = {f.name for f in fields(DiscoveryParams)}
    return DiscoveryParams(**{k: v for k, v in d.items() if k in known})


def _encode_rp(rp: RecurringPattern) -> dict:
    return {
        "matrix": {"rows": [list(r) for r in rp.matrix.rows], "words": list(rp.matrix.words)},
        "score": _Exact(rp.score),
        "count": rp.count,
        "instances": [
            {"bbox": list(r.bbox), "member_features": list(r.member_features), "centroid": list(r.centroid)}
            for r in rp.instances
        ],
        "params": encode_params(rp.params),
    }


def encode_rps(rps: Sequence[RecurringPattern]) -> dict:
    return _doc("rps", {"patterns": [_encode_rp(rp) for rp in rps]})


def decode_rps(doc: Any) -> list[RecurringPattern]:
    doc = _check(doc, "rps")
    out = []
    try:
        for item in doc["patterns"]:
            m = item["matrix"]
            matrix = RpMatrix(
                rows=tuple(tuple(None if v is None else int(v) for v in row) for row in m["rows"]),
                words=tuple(int(w) for w in m.get("words", ())),
            )
            instances = tuple(
                InstanceRegion(
                    bbox=tuple(float(v) for v in r["bbox"]),
                    member_features=tuple(int(v) for v in r["member_features"]),
                    centroid=tuple(float(v) for v in r["centroid"]),
                )
                for r in item["instances"]
            )
            out.append(
                RecurringPattern(
                    matrix=matrix, score=float(item["score"]), instances=instances,
                    params=decode_params(item.get("params", {})),
                )
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"rps document: {exc}") from exc
    return out


# -- ground truth ------------------------------------------------------------


def encode_ground_truth(gt: GroundTruth) -> dict:
    rps = []
    for rp in gt.rps:
        regions = []
        for r in rp:
            regions.append({"box": list(r.box)} if r.box is not None else {"polygon": [list(p) for p in r.polygon]})
        rps.append(regions)
    return _doc("gt", {"rps": rps})


def decode_ground_truth(doc: Any) -> GroundTruth:
    doc = _check(doc, "gt")
    try:
        rps = []
        for rp in doc["rps"]:
            regions = []
            for r in rp:
                if "box" in r:
                    regions.append(GtRegion(box=tuple(float(v) for v in r["box"])))
                else:
                    regions.append(GtRegion(polygon=tuple((float(x), float(y)) for x, y in r["polygon"])))
            rps.append(tuple(regions))
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"gt document: {exc}") from exc
    return GroundTruth(rps=tuple(rps))


# -- geometry results ---------------------------------------------------------


def encode_vp(vp: Optional[VanishingPoint], image_size: Optional[tuple[int, int]] = None) -> dict:
    body: dict = {"found": vp is not None}
    if image_size is not None:
        body["image_size"] = list(image_size)
    if vp is not None:
        body.update(
            point=list(vp.point), direction=list(vp.direction),
            inlier_lines=list(vp.inlier_lines), focal_nominal=vp.focal_nominal,
        )
    return _doc("vp", body)


def decode_vp(doc: Any) -> Optional[VanishingPoint]:
    doc = _check(doc, "vp")
    if not doc.get("found", True):
        return None
    try:
        return VanishingPoint(
            point=tuple(float(v) for v in doc["point"]),
            direction=tuple(float(v) for v in doc["direction"]),
            inlier_lines=tuple(int(v) for v in doc["inlier_lines"]),
            focal_nominal=float(doc["focal_nominal"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"vp document: {exc}") from exc


def encode_ts(results: Sequence[TsResult]) -> dict:
    return _doc(
        "ts",
        {
            "results": [
                {
                    "tested": r.tested, "cross_ratios": list(r.cross_ratios), "deviation": r.deviation,
                    "has_symmetry": r.has_symmetry, "threshold": r.threshold,
                }
                for r in results
            ]
        },
    )


def decode_ts(doc: Any) -> list[TsResult]:
    doc = _check(doc, "ts")
    try:
        return [
            TsResult(
                tested=bool(r["tested"]), cross_ratios=tuple(float(v) for v in r["cross_ratios"]),
                deviation=_num(r["deviation"], "deviation"), has_symmetry=bool(r["has_symmetry"]),
                threshold=float(r["threshold"]),
            )
            for r in doc["results"]
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"ts document: {exc}") from exc


CONVENTIONS = {
    "acceptance": "iod > h (strict)",
    "instance_matching": "one-to-one, maximum cardinality, then maximum total iod",
    "rp_assignment": "argmax instance precision, accepted if > 0",
    "rp_recall": "gt patterns covered by a one-to-one pairing with positive-precision detections",
    "empty_precision": 1.0,
    "empty_recall": 1.0,
}


def _encode_report_body(r: EvalReport) -> dict:
    return {
        "h": r.h, "rp_precision": r.rp_precision, "rp_recall": r.rp_recall,
        "inst_precision": r.inst_precision, "inst_recall": r.inst_recall,
        "per_rp_assignments": list(r.per_rp_assignments), "counts": list(r.counts), "total": r.total,
    }


def encode_report(reports: Sequence[EvalReport]) -> dict:
    """A report document; several entries form an h sweep."""
    return _doc("report", {"conventions": CONVENTIONS, "entries": [_encode_report_body(r) for r in reports]})


def decode_report(doc: Any) -> list[EvalReport]:
    doc = _check(doc, "report")
    try:
        return [
            EvalReport(
                h=float(e["h"]), rp_precision=float(e["rp_precision"]), rp_recall=float(e["rp_recall"]),
                inst_precision=float(e["inst_precision"]), inst_recall=float(e["inst_recall"]),
                per_rp_assignments=tuple(None if a is None else int(a) for a in e["per_rp_assignments"]),
                counts=tuple(int(c) for c in e["counts"]), total=int(e["total"]),
            )
            for e in doc["entries"]
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"report document: {exc}") from exc


# -- files -------------------------------------------------------------------


def read_json(path: str | os.PathLike) -> Any:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise MissingInputError(f"{p}: no such file") from exc
    except OSError as exc:
        raise MissingInputError(f"{p}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{p}: {exc}") from exc


def write_text_atomic(path: str | os.PathLike, text: str | bytes) -> None:
    """Write via a temporary file in the same directory, then rename."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    data = text.encode("utf-8") if isinstance(text, str) else text
    fd, tmp = tempfile.mkstemp(prefix=f".{p.name}.", dir=p.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, p)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path: str | os.PathLike, doc: dict) -> None:
    write_text_atomic(path, dumps(doc))
