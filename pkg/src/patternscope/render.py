"""Deterministic chart rendering: hand-rolled SVG plus PIL contact sheets.

Every number drawn here must already exist in a CSV emitted by the analyze
stage; rendering only formats. Output bytes carry no timestamps or
environment data, so fixed inputs give byte-identical files. Percentages are
printed with one decimal place throughout.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

from PIL import Image

from .errors import ReportError
from .stats import FiveNumberSummary

_SVG_HEADER = ('<svg xmlns="http://www.w3.org/2000/svg" width="{w}" '
               'height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif">')
_BAR_COLORS = ("#5c6bc0", "#ffb74d")
_AXIS = "#444444"


def _fmt(value: float, decimals: int = 2) -> str:
    return f"{value:.{decimals}f}"


def _text(x: float, y: float, s: str, size: int = 12, anchor: str = "middle",
          color: str = "#222222") -> str:
    return (f'<text x="{_fmt(x)}" y="{_fmt(y)}" font-size="{size}" '
            f'text-anchor="{anchor}" fill="{color}">{s}</text>')


def percent_label(fraction: float) -> str:
    """One-decimal percentage, the only sanctioned percent format."""
    return f"{fraction * 100.0:.1f}%"


def grouped_bar_chart(title: str, categories: Sequence[str],
                      series: Sequence[tuple[str, Sequence[float]]],
                      width: int = 720, height: int = 360) -> str:
    """Bars are fractions in [0, 1]; each is labeled with its percentage."""
    if not categories or not series:
        raise ReportError("empty chart input")
    for _, values in series:
        if len(values) != len(categories):
            raise ReportError("series length does not match categories")
    left, right, top, bottom = 50, 16, 34, 58
    plot_w = width - left - right
    plot_h = height - top - bottom
    peak = max(max(values) for _, values in series)
    y_max = max(peak * 1.15, 0.05)
    group_w = plot_w / len(categories)
    bar_w = group_w * 0.8 / len(series)

    parts = [_SVG_HEADER.format(w=width, h=height),
             _text(width / 2, 20, title, 14)]
    parts.append(f'<line x1="{left}" y1="{top + plot_h}" '
                 f'x2="{left + plot_w}" y2="{top + plot_h}" '
                 f'stroke="{_AXIS}"/>')
    for g, cat in enumerate(categories):
        for s, (label, values) in enumerate(series):
            v = values[g]
            h = plot_h * v / y_max
            x = left + g * group_w + group_w * 0.1 + s * bar_w
            y = top + plot_h - h
            color = _BAR_COLORS[s % len(_BAR_COLORS)]
            parts.append(f'<rect x="{_fmt(x)}" y="{_fmt(y)}" '
                         f'width="{_fmt(bar_w * 0.92)}" height="{_fmt(h)}" '
                         f'fill="{color}"/>')
            parts.append(_text(x + bar_w * 0.46, y - 4, percent_label(v), 10))
        parts.append(_text(left + g * group_w + group_w / 2,
                           top + plot_h + 16, cat, 11))
    for s, (label, _) in enumerate(series):
        x = left + s * 130
        color = _BAR_COLORS[s % len(_BAR_COLORS)]
        parts.append(f'<rect x="{x}" y="{height - 24}" width="12" '
                     f'height="12" fill="{color}"/>')
        parts.append(_text(x + 18, height - 14, label, 11, anchor="start"))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def line_chart(title: str, ys: Sequence[float], x_label: str, y_label: str,
               width: int = 720, height: int = 360) -> str:
    """Fractions over an index axis (percentile-bucket curves)."""
    if not ys:
        raise ReportError("empty chart input")
    left, right, top, bottom = 56, 16, 34, 44
    plot_w = width - left - right
    plot_h = height - top - bottom
    y_max = max(max(ys) * 1.1, 0.05)
    n = len(ys)
    points = []
    for i, v in enumerate(ys):
        x = left + (plot_w * i / (n - 1) if n > 1 else plot_w / 2)
        y = top + plot_h * (1.0 - v / y_max)
        points.append(f"{_fmt(x)},{_fmt(y)}")
    parts = [_SVG_HEADER.format(w=width, h=height),
             _text(width / 2, 20, title, 14),
             f'<line x1="{left}" y1="{top + plot_h}" x2="{left + plot_w}" '
             f'y2="{top + plot_h}" stroke="{_AXIS}"/>',
             f'<line x1="{left}" y1="{top}" x2="{left}" '
             f'y2="{top + plot_h}" stroke="{_AXIS}"/>',
             f'<polyline fill="none" stroke="#5c6bc0" stroke-width="1.5" '
             f'points="{" ".join(points)}"/>',
             _text(left + plot_w / 2, height - 10, x_label, 11),
             _text(14, top + plot_h / 2, y_label, 11),
             _text(left - 6, top + plot_h + 4, "0.0%", 9, anchor="end"),
             _text(left - 6, top + 10, percent_label(y_max), 9, anchor="end")]
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def box_plot(title: str,
             boxes: Sequence[tuple[str, FiveNumberSummary]],
             width: int = 720, height: int = 360,
             log_scale: bool = False) -> str:
    """Whisker boxes from five-number summaries (1.5 IQR whiskers)."""
    if not boxes:
        raise ReportError("empty chart input")
    import math
    left, right, top, bottom = 64, 16, 34, 56
    plot_w = width - left - right
    plot_h = height - top - bottom

    def tx(v: float) -> float:
        return math.log10(v) if log_scale else v

    lo = min(tx(s.minimum) for _, s in boxes)
    hi = max(tx(s.maximum) for _, s in boxes)
    span = (hi - lo) or 1.0
    lo -= span * 0.05
    hi += span * 0.05

    def y_of(v: float) -> float:
        return top + plot_h * (1.0 - (tx(v) - lo) / (hi - lo))

    slot = plot_w / len(boxes)
    parts = [_SVG_HEADER.format(w=width, h=height),
             _text(width / 2, 20, title, 14),
             f'<line x1="{left}" y1="{top}" x2="{left}" '
             f'y2="{top + plot_h}" stroke="{_AXIS}"/>']
    for i, (label, s) in enumerate(boxes):
        cx = left + slot * (i + 0.5)
        bw = slot * 0.4
        for v in (s.whisker_low, s.whisker_high):
            parts.append(f'<line x1="{_fmt(cx - bw / 2)}" y1="{_fmt(y_of(v))}" '
                         f'x2="{_fmt(cx + bw / 2)}" y2="{_fmt(y_of(v))}" '
                         f'stroke="{_AXIS}"/>')
        parts.append(f'<line x1="{_fmt(cx)}" y1="{_fmt(y_of(s.whisker_high))}" '
                     f'x2="{_fmt(cx)}" y2="{_fmt(y_of(s.whisker_low))}" '
                     f'stroke="{_AXIS}" stroke-dasharray="3,2"/>')
        parts.append(f'<rect x="{_fmt(cx - bw / 2)}" y="{_fmt(y_of(s.q3))}" '
                     f'width="{_fmt(bw)}" '
                     f'height="{_fmt(max(y_of(s.q1) - y_of(s.q3), 0.5))}" '
                     f'fill="#c5cae9" stroke="{_AXIS}"/>')
        parts.append(f'<line x1="{_fmt(cx - bw / 2)}" '
                     f'y1="{_fmt(y_of(s.median))}" x2="{_fmt(cx + bw / 2)}" '
                     f'y2="{_fmt(y_of(s.median))}" stroke="#d81b60" '
                     f'stroke-width="2"/>')
        parts.append(_text(cx, top + plot_h + 16, label, 10))
        parts.append(_text(cx, top + plot_h + 30, _fmt(s.median, 2), 9,
                           color="#666666"))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def contact_sheet(images: Sequence[Image.Image], columns: int = 6,
                  cell: int = 96, pad: int = 4,
                  background=(255, 255, 255)) -> Image.Image:
    """Thumbnail grid; preserves input order, one cell per image."""
    if not images:
        raise ReportError("empty contact sheet input")
    rows = (len(images) + columns - 1) // columns
    sheet = Image.new("RGB",
                      (columns * (cell + pad) + pad, rows * (cell + pad) + pad),
                      background)
    for i, img in enumerate(images):
        thumb = img.convert("RGB").copy()
        thumb.thumbnail((cell, cell), Image.NEAREST)
        r, c = divmod(i, columns)
        x = pad + c * (cell + pad) + (cell - thumb.width) // 2
        y = pad + r * (cell + pad) + (cell - thumb.height) // 2
        sheet.paste(thumb, (x, y))
    return sheet


def save_svg(svg: str, path: str | Path) -> None:
    Path(path).write_text(svg, encoding="utf-8")
