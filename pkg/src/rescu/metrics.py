"""Evaluation: intersection-over-detection, precision/recall, success curves, counting.

Acceptance of a detection against a ground-truth instance is strict:
``iod > h``. Instance matching is one-to-one and of maximum cardinality;
among maximum matchings the one with the largest total IOD is taken.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy.optimize import linear_sum_assignment
from shapely.geometry import Polygon, box as shapely_box

from .errors import EmptyInput, UnpairedRecords, ZeroAreaDetection
from .geometry import vector_angle_deg, vp_to_vector
from .types import Box, GroundTruth, GtRegion, InstanceRegion, RecurringPattern, TsResult

RegionLike = Union[Box, GtRegion, InstanceRegion, Sequence[float]]


def _as_polygon(region: RegionLike) -> tuple[Optional[Box], Optional[Polygon]]:
    if isinstance(region, InstanceRegion):
        return tuple(region.bbox), None
    if isinstance(region, GtRegion):
        if region.box is not None:
            return tuple(region.box), None
        return None, Polygon(region.polygon)
    vals = tuple(float(v) for v in region)
    if len(vals) != 4:
        raise ValueError(f"expected a box (x0, y0, x1, y1), got {region!r}")
    return vals, None


def _box_area(b: Box) -> float:
    return max(0.0, b[2] - b[0]) * max(0.0, b[3] - b[1])


def region_area(region: RegionLike) -> float:
    b, poly = _as_polygon(region)
    return _box_area(b) if poly is None else float(poly.area)


def iod(det: RegionLike, gt: RegionLike) -> float:
    """Fraction of the detection's area covered by the GT region.

    Raises:
        ZeroAreaDetection: the detection has no area.
    """
    db, dpoly = _as_polygon(det)
    gb, gpoly = _as_polygon(gt)
    if dpoly is None and gpoly is None:
        area = _box_area(db)
        if area <= 0.0:
            raise ZeroAreaDetection(f"detection {db} has zero area")
        w = min(db[2], gb[2]) - max(db[0], gb[0])
        h = min(db[3], gb[3]) - max(db[1], gb[1])
        inter = max(0.0, w) * max(0.0, h)
        return min(1.0, inter / area)
    dg = dpoly if dpoly is not None else shapely_box(*db)
    gg = gpoly if gpoly is not None else shapely_box(*gb)
    if dg.area <= 0.0:
        raise ZeroAreaDetection("detection polygon has zero area")
    return min(1.0, float(dg.intersection(gg).area) / float(dg.area))


def iod_matrix(dets: Sequence[RegionLike], gts: Sequence[RegionLike]) -> np.ndarray:
    out = np.zeros((len(dets), len(gts)))
    for i, d in enumerate(dets):
        for j, g in enumerate(gts):
            out[i, j] = iod(d, g)
    return out


def match_instances(iods: np.ndarray, h: float) -> list[tuple[int, int]]:
    """Maximum one-to-one matching among pairs with IOD > h.

    Cardinality comes first, total IOD second. Plain greedy matching can
    settle for fewer pairs (a detection taking the only GT another one
    could use), which also breaks monotonicity in ``h``.
    """
    ok = iods > h
    if not ok.any():
        return []
    eps = 1.0 / (min(iods.shape) + 1.0)
    weight = np.where(ok, 1.0 + eps * iods, 0.0)
    rows, cols = linear_sum_assignment(weight, maximize=True)
    return sorted((int(i), int(j)) for i, j in zip(rows, cols) if ok[i, j])


def _pr_from_matches(n_det: int, n_gt: int, n_match: int) -> tuple[float, float]:
    if n_det == 0:
        return (1.0, 1.0) if n_gt == 0 else (0.0, 0.0)
    precision = n_match / n_det
    recall = 1.0 if n_gt == 0 else n_match / n_gt
    return precision, recall


def instance_pr(det_instances: Sequence[RegionLike], gt_instances: Sequence[RegionLike], h: float) -> tuple[float, float]:
    """Instance-level precision and recall of one detected RP against one GT RP."""
    if not 0.0 <= h < 1.0:
        raise ValueError(f"h must lie in [0, 1), got {h}")
    n_match = len(match_instances(iod_matrix(det_instances, gt_instances), h)) if det_instances and gt_instances else 0
    return _pr_from_matches(len(det_instances), len(gt_instances), n_match)


def _instances(rp) -> Sequence[RegionLike]:
    return rp.instances if isinstance(rp, RecurringPattern) else rp


def _gt_list(gts) -> list[Sequence[RegionLike]]:
    return list(gts.rps) if isinstance(gts, GroundTruth) else list(gts)


def _pair_table(det_rps, gt_rps, h) -> tuple[np.ndarray, np.ndarray]:
    P = np.zeros((len(det_rps), len(gt_rps)))
    R = np.zeros_like(P)
    for i, d in enumerate(det_rps):
        for j, g in enumerate(gt_rps):
            P[i, j], R[i, j] = instance_pr(_instances(d), g, h)
    return P, R


def _assign(P: np.ndarray) -> list[Optional[int]]:
    out: list[Optional[int]] = []
    for row in P:
        if row.size == 0 or row.max() <= 0.0:
            out.append(None)
        else:
            out.append(int(np.argmax(row)))  # lowest GT index on ties
    return out


def _covered_gts(P: np.ndarray) -> int:
    """GT RPs reachable by a one-to-one pairing with detections of positive P_I.

    Equals the number of distinct argmax GTs whenever those do not collide;
    unlike the argmax count it cannot rise with h.
    """
    if P.size == 0:
        return 0
    return len(match_instances(P, 0.0))


def rp_pr(det_rps, gt_rps, h: float) -> tuple[float, float, list[Optional[int]]]:
    """RP-level precision/recall and the detection -> GT assignment.

    Each detection goes to the GT RP on which its instance precision is
    highest, if that precision is positive. Recall counts GT RPs covered by
    a one-to-one pairing of detections and GTs with positive precision.
    """
    gts = _gt_list(gt_rps)
    dets = list(det_rps)
    P, _ = _pair_table(dets, gts, h)
    assign = _assign(P)
    n_acc = sum(a is not None for a in assign)
    precision = 1.0 if not dets else n_acc / len(dets)
    recall = 1.0 if not gts else _covered_gts(P) / len(gts)
    return precision, recall, assign


def count_instances(rps: Sequence[RecurringPattern]) -> tuple[list[int], int]:
    counts = [rp.count for rp in rps]
    return counts, sum(counts)


@dataclass(frozen=True)
class EvalReport:
    h: float
    rp_precision: float
    rp_recall: float
    inst_precision: float
    inst_recall: float
    per_rp_assignments: tuple[Optional[int], ...]
    counts: tuple[int, ...]
    total: int

    def __post_init__(self) -> None:
        for name in ("rp_precision", "rp_recall", "inst_precision", "inst_recall"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} = {v} outside [0, 1]")


def evaluate(det_rps, gt_rps, h: float = 0.5) -> EvalReport:
    """Image-level report.

    Instance precision averages, over detections, the instance precision
    against the assigned GT RP (0 when unassigned). Instance recall averages,
    over GT RPs, the best instance recall any detection reaches on it.
    """
    gts = _gt_list(gt_rps)
    dets = list(det_rps)
    P, R = _pair_table(dets, gts, h)
    assign = _assign(P)
    rp_p = 1.0 if not dets else sum(a is not None for a in assign) / len(dets)
    rp_r = 1.0 if not gts else _covered_gts(P) / len(gts)
    inst_p = 1.0 if not dets else float(np.mean([P[i, a] if a is not None else 0.0 for i, a in enumerate(assign)]))
    if not gts:
        inst_r = 1.0
    elif not dets:
        inst_r = 0.0
    else:
        inst_r = float(np.mean(R.max(axis=0)))
    counts = [rp.count if isinstance(rp, RecurringPattern) else len(rp) for rp in dets]
    return EvalReport(
        h=float(h), rp_precision=float(rp_p), rp_recall=float(rp_r), inst_precision=inst_p,
        inst_recall=inst_r, per_rp_assignments=tuple(assign), counts=tuple(counts), total=sum(counts),
    )


def sweep_h(det_rps, gt_rps, h_values: Sequence[float]) -> list[EvalReport]:
    hs = [float(h) for h in h_values]
    if any(b < a for a, b in zip(hs, hs[1:])):
        raise ValueError("h_values must be sorted ascending")
    return [evaluate(det_rps, gt_rps, h) for h in hs]


def mean_report(reports: Sequence[EvalReport]) -> dict:
    """Unweighted per-image mean of the four rates."""
    if not reports:
        raise EmptyInput("no reports to aggregate")
    keys = ("rp_precision", "rp_recall", "inst_precision", "inst_recall")
    return {k: float(np.mean([getattr(r, k) for r in reports])) for k in keys}


# -- vanishing points and translation symmetry ---------------------------------------


def _vp_errors(preds, gts, image_sizes, focal):
    if not (len(preds) == len(gts) == len(image_sizes)):
        raise UnpairedRecords(f"{len(preds)} predictions, {len(gts)} GT, {len(image_sizes)} sizes")
    dist, ang = [], []
    for p, g, (w, h) in zip(preds, gts, image_sizes):
        if p is None:
            continue
        p_arr, g_arr = np.asarray(p, dtype=float), np.asarray(g, dtype=float)
        if p_arr.size == 2 and g_arr.size == 2:
            dist.append(float(np.hypot(*(p_arr - g_arr))))
        else:
            dist.append(math.inf)
        ang.append(vector_angle_deg(vp_to_vector(p_arr, w, h, focal), vp_to_vector(g_arr, w, h, focal)))
    return dist, ang


def vpd_success_curve(
    preds: Sequence[Optional[Sequence[float]]],
    gts: Sequence[Sequence[float]],
    image_sizes: Sequence[tuple[float, float]],
    dist_thresholds_px: Sequence[float],
    angle_thresholds_deg: Sequence[float],
    focal: Optional[float] = None,
) -> tuple[list[tuple[float, float]], list[tuple[float, float]]]:
    """Point-distance and vector-angle success rates.

    A record with no prediction (``None``) is not a detected VP and is left
    out of the denominator. Returns two lists of (threshold, rate).

    Raises:
        UnpairedRecords: the three input sequences differ in length.
    """
    dist, ang = _vp_errors(preds, gts, image_sizes, focal)
    n = len(dist)

    def curve(errs, taus):
        return [(float(t), (sum(e <= t for e in errs) / n) if n else 0.0) for t in taus]

    return curve(dist, dist_thresholds_px), curve(ang, angle_thresholds_deg)


def ts_success_rate(results: Sequence[TsResult], t: Optional[float] = None) -> float:
    """Share of inputs judged translation-symmetric, optionally re-thresholded at ``t``."""
    if not results:
        raise EmptyInput("no translation-symmetry results")
    if t is None:
        hits = sum(r.has_symmetry for r in results)
    else:
        hits = sum(r.tested and r.deviation <= t for r in results)
    return hits / len(results)
