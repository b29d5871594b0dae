"""Visual overlays (PNG or SVG) and CSV curve output."""

from __future__ import annotations

import csv
import io as _io
import math
from typing import Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np
from PIL import Image, ImageDraw

from .types import LineEstimate, RecurringPattern, VanishingPoint

PALETTE = (
    (230, 25, 75), (60, 180, 75), (0, 130, 200), (245, 130, 48), (145, 30, 180),
    (70, 240, 240), (240, 50, 230), (210, 245, 60), (250, 190, 212), (0, 128, 128),
)
LINE_COLOR = (255, 225, 25)
VP_COLOR = (255, 255, 255)


def _hex(rgb: tuple[int, int, int]) -> str:
    return "#%02x%02x%02x" % rgb


def _clip_line(line: LineEstimate, width: int, height: int) -> Optional[tuple[tuple[float, float], tuple[float, float]]]:
    """Segment of the infinite line inside the image rectangle."""
    a, b, c = line.a, line.b, line.c
    pts = []
    if abs(b) > 1e-12:
        for x in (0.0, float(width)):
            y = -(a * x + c) / b
            if 0.0 <= y <= height:
                pts.append((x, y))
    if abs(a) > 1e-12:
        for y in (0.0, float(height)):
            x = -(b * y + c) / a
            if 0.0 <= x <= width:
                pts.append((x, y))
    pts = sorted(set(pts))
    if len(pts) < 2:
        return None
    return pts[0], pts[-1]


def vp_marker(vp: VanishingPoint, width: int, height: int) -> tuple[str, tuple[float, float], Optional[tuple[float, float]]]:
    """("inside", point, None) or ("outside", border point, arrow tail) for a VP."""
    x, y = vp.point
    if 0 <= x < width and 0 <= y < height:
        return "inside", (x, y), None
    cx, cy = width / 2.0, height / 2.0
    dx, dy = x - cx, y - cy
    s = min(
        (cx - 2) / abs(dx) if abs(dx) > 1e-12 else math.inf,
        (cy - 2) / abs(dy) if abs(dy) > 1e-12 else math.inf,
    )
    tip = (cx + dx * s, cy + dy * s)
    n = math.hypot(dx, dy)
    tail = (tip[0] - 40 * dx / n, tip[1] - 40 * dy / n)
    return "outside", tip, tail


def _arrow_head(tip, tail, size=10.0):
    dx, dy = tip[0] - tail[0], tip[1] - tail[1]
    n = math.hypot(dx, dy) or 1.0
    ux, uy = dx / n, dy / n
    left = (tip[0] - size * ux + 0.5 * size * uy, tip[1] - size * uy - 0.5 * size * ux)
    right = (tip[0] - size * ux - 0.5 * size * uy, tip[1] - size * uy + 0.5 * size * ux)
    return [tip, left, right]


def render_overlay(
    image: np.ndarray,
    rps: Sequence[RecurringPattern],
    lines: Sequence[LineEstimate] = (),
    vp: Optional[VanishingPoint] = None,
) -> Image.Image:
    """Instance boxes per pattern in distinct colors, fitted lines and the VP."""
    arr = np.asarray(image)
    base = Image.fromarray(arr).convert("RGB")
    width, height = base.size
    draw = ImageDraw.Draw(base)
    for line in lines:
        seg = _clip_line(line, width, height)
        if seg is not None:
            draw.line(seg, fill=LINE_COLOR, width=1)
    for k, rp in enumerate(rps):
        color = PALETTE[k % len(PALETTE)]
        for inst in rp.instances:
            draw.rectangle(inst.bbox, outline=color, width=2)
    if vp is not None:
        where, tip, tail = vp_marker(vp, width, height)
        if where == "inside":
            x, y = tip
            draw.ellipse((x - 5, y - 5, x + 5, y + 5), outline=VP_COLOR, width=2)
        else:
            draw.line((tail, tip), fill=VP_COLOR, width=2)
            draw.polygon(_arrow_head(tip, tail), fill=VP_COLOR)
    return base


def overlay_png_bytes(image, rps, lines=(), vp=None) -> bytes:
    buf = _io.BytesIO()
    render_overlay(image, rps, lines, vp).save(buf, format="PNG")
    return buf.getvalue()


def overlay_svg(width: int, height: int, rps, lines=(), vp=None, image_href: Optional[str] = None) -> str:
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" xmlns:xlink="http://www.w3.org/1999/xlink" '
        f'width="{width}" height="{height}" viewBox="0 0 {width} {height}">'
    ]
    if image_href:
        parts.append(f'<image xlink:href="{escape(image_href)}" width="{width}" height="{height}"/>')
    for line in lines:
        seg = _clip_line(line, width, height)
        if seg is not None:
            (x0, y0), (x1, y1) = seg
            parts.append(f'<line x1="{x0:.2f}" y1="{y0:.2f}" x2="{x1:.2f}" y2="{y1:.2f}" stroke="{_hex(LINE_COLOR)}"/>')
    for k, rp in enumerate(rps):
        color = _hex(PALETTE[k % len(PALETTE)])
        for inst in rp.instances:
            x0, y0, x1, y1 = inst.bbox
            parts.append(
                f'<rect x="{x0:.2f}" y="{y0:.2f}" width="{x1 - x0:.2f}" height="{y1 - y0:.2f}" '
                f'fill="none" stroke="{color}" stroke-width="2" class="rp{k}"/>'
            )
    if vp is not None:
        where, tip, tail = vp_marker(vp, width, height)
        if where == "inside":
            parts.append(f'<circle cx="{tip[0]:.2f}" cy="{tip[1]:.2f}" r="5" fill="none" stroke="{_hex(VP_COLOR)}"/>')
        else:
            pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in _arrow_head(tip, tail))
            parts.append(
                f'<line x1="{tail[0]:.2f}" y1="{tail[1]:.2f}" x2="{tip[0]:.2f}" y2="{tip[1]:.2f}" stroke="{_hex(VP_COLOR)}"/>'
            )
            parts.append(f'<polygon points="{pts}" fill="{_hex(VP_COLOR)}"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def curve_csv(rows: Sequence[Sequence], header: Sequence[str]) -> str:
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([f"{v:.9g}" if isinstance(v, float) else v for v in row])
    return buf.getvalue()
