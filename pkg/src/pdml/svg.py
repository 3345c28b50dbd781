"""Hand-rolled SVG emission for region maps, timelines, and scatters.

Plain string assembly, fixed two-decimal coordinates, no timestamps: a
given input always renders to identical bytes. The decision plane is
drawn with power on the vertical axis and log10 distortion on the
horizontal, matching the axes the regions were designed on.
"""

from __future__ import annotations

import numpy as np

from .bayes import DecisionGridSpec, DecisionRegionGrid, TimelineResult

COLORS = ("#2e8b57", "#222222", "#d62728", "#1f77b4")
LABELS = ("H0 clean", "H1 multipath", "H2 spoofing", "H3 jamming")

_FONT = 'font-family="Helvetica,Arial,sans-serif"'


def _header(width: int, height: int) -> str:
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">\n'
            f'<rect width="{width}" height="{height}" fill="#ffffff"/>\n')


def _legend(x: float, y: float) -> str:
    rows = []
    for i, (color, label) in enumerate(zip(COLORS, LABELS)):
        yy = y + 22 * i
        rows.append(f'<rect x="{x:.2f}" y="{yy:.2f}" width="14" height="14" fill="{color}"/>')
        rows.append(f'<text x="{x + 20:.2f}" y="{yy + 11.5:.2f}" {_FONT} font-size="12">{label}</text>')
    return "\n".join(rows) + "\n"


def _ticks_x(x0, y1, pw, lo, hi, values, fmt) -> str:
    parts = []
    for v in values:
        px = x0 + (v - lo) / (hi - lo) * pw
        parts.append(f'<line x1="{px:.2f}" y1="{y1:.2f}" x2="{px:.2f}" y2="{y1 + 5:.2f}" '
                     f'stroke="#444444" stroke-width="1"/>')
        parts.append(f'<text x="{px:.2f}" y="{y1 + 18:.2f}" {_FONT} font-size="11" '
                     f'text-anchor="middle">{fmt(v)}</text>')
    return "\n".join(parts) + "\n"


def _ticks_y(x0, y0, ph, lo, hi, values, fmt) -> str:
    parts = []
    for v in values:
        py = y0 + ph - (v - lo) / (hi - lo) * ph
        parts.append(f'<line x1="{x0 - 5:.2f}" y1="{py:.2f}" x2="{x0:.2f}" y2="{py:.2f}" '
                     f'stroke="#444444" stroke-width="1"/>')
        parts.append(f'<text x="{x0 - 8:.2f}" y="{py + 4:.2f}" {_FONT} font-size="11" '
                     f'text-anchor="end">{fmt(v)}</text>')
    return "\n".join(parts) + "\n"


def _frame(x0, y0, pw, ph) -> str:
    return (f'<rect x="{x0:.2f}" y="{y0:.2f}" width="{pw:.2f}" height="{ph:.2f}" '
            f'fill="none" stroke="#444444" stroke-width="1"/>\n')


def _axis_titles(x0, y0, pw, ph, xlabel, ylabel) -> str:
    cx = x0 + pw / 2
    cy = y0 + ph / 2
    return (f'<text x="{cx:.2f}" y="{y0 + ph + 36:.2f}" {_FONT} font-size="12" '
            f'text-anchor="middle">{xlabel}</text>\n'
            f'<text x="{x0 - 42:.2f}" y="{cy:.2f}" {_FONT} font-size="12" text-anchor="middle" '
            f'transform="rotate(-90 {x0 - 42:.2f} {cy:.2f})">{ylabel}</text>\n')


def _decision_axes(spec: DecisionGridSpec, x0, y0, pw, ph) -> str:
    d_ticks = [t for t in range(int(np.ceil(spec.d_min)), int(np.floor(spec.d_max)) + 1)]
    p_step = 5.0 if spec.p_max - spec.p_min > 12 else 1.0
    first = np.ceil(spec.p_min / p_step) * p_step
    p_ticks = list(np.arange(first, spec.p_max + 1e-9, p_step))
    out = _frame(x0, y0, pw, ph)
    out += _ticks_x(x0, y0 + ph, pw, spec.d_min, spec.d_max, d_ticks, lambda v: f"{v:g}")
    out += _ticks_y(x0, y0, ph, spec.p_min, spec.p_max, p_ticks, lambda v: f"{v:g}")
    out += _axis_titles(x0, y0, pw, ph, "distortion (log10)", "received power (dB)")
    return out


def svg_region_map(regions: DecisionRegionGrid, path: str) -> None:
    """Render the labeled decision plane, one color per hypothesis.

    Cells are emitted as horizontal run-length rectangles, slightly
    inflated so adjacent runs leave no antialiasing seams.
    """
    spec = regions.spec
    x0, y0, pw, ph = 62.0, 18.0, 420.0, 380.0
    cw = pw / spec.d_bins
    ch = ph / spec.p_bins
    parts = [_header(660, 470)]
    dec = regions.decisions
    for i in range(spec.p_bins):
        row = dec[i]
        top = y0 + ph - (i + 1) * ch
        j = 0
        while j < spec.d_bins:
            label = row[j]
            j2 = j + 1
            while j2 < spec.d_bins and row[j2] == label:
                j2 += 1
            parts.append(
                f'<rect x="{x0 + j * cw:.2f}" y="{top:.2f}" '
                f'width="{(j2 - j) * cw + 0.35:.2f}" height="{ch + 0.35:.2f}" '
                f'fill="{COLORS[int(label)]}"/>')
            j = j2
    parts.append("\n" + _decision_axes(spec, x0, y0, pw, ph))
    parts.append(_legend(x0 + pw + 26, y0 + 8))
    parts.append("</svg>\n")
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(parts))


def svg_timeline(result: TimelineResult, path: str) -> None:
    """Render the four cumulative decision-share traces over epochs.

    A band along the top shows the scheduled truth phases in the same
    color coding, so decision flips line up visually with phase changes.
    """
    n = int(result.epoch.size)
    x0, y0, pw, ph = 58.0, 30.0, 440.0, 280.0
    parts = [_header(660, 370)]

    xs = x0 + (np.arange(n) / max(n - 1, 1)) * pw

    band_y = y0 - 14.0
    k = 0
    while k < n:
        t = int(result.truth[k])
        k2 = k + 1
        while k2 < n and int(result.truth[k2]) == t:
            k2 += 1
        bx = xs[k] if k else x0
        bx2 = xs[k2 - 1] if k2 < n else x0 + pw
        parts.append(f'<rect x="{bx:.2f}" y="{band_y:.2f}" width="{bx2 - bx + 0.5:.2f}" '
                     f'height="8" fill="{COLORS[t]}"/>')
        if k:  # phase boundary marker down the plot
            parts.append(f'<line x1="{xs[k]:.2f}" y1="{y0:.2f}" x2="{xs[k]:.2f}" '
                         f'y2="{y0 + ph:.2f}" stroke="#999999" stroke-width="1" '
                         f'stroke-dasharray="4,3"/>')
        k = k2

    for i in range(4):
        ys = y0 + ph - result.traces[i] * ph
        pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{COLORS[i]}" '
                     f'stroke-width="1.8"/>')

    parts.append(_frame(x0, y0, pw, ph))
    step = max(1, int(np.ceil(n / 8 / 10)) * 10) if n > 20 else max(1, n // 4)
    x_ticks = list(range(0, n, step))
    parts.append(_ticks_x(x0, y0 + ph, pw, 0, max(n - 1, 1), x_ticks, lambda v: f"{v:d}"))
    parts.append(_ticks_y(x0, y0, ph, 0.0, 1.0, [0.0, 0.25, 0.5, 0.75, 1.0], lambda v: f"{v:g}"))
    parts.append(_axis_titles(x0, y0, pw, ph, "epoch", "cumulative decision share"))
    parts.append(_legend(x0 + pw + 26, y0 + 8))
    parts.append("</svg>\n")
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(parts))


def svg_scatter(power_db: np.ndarray, distortion: np.ndarray, truth: np.ndarray,
                spec: DecisionGridSpec, path: str, max_points: int = 4000) -> None:
    """Scatter measurements on the decision-plane axes, colored by truth.

    Oversized inputs are thinned deterministically with an even index
    stride; values beyond the axes are clamped onto the frame edge.
    """
    n = int(power_db.size)
    if n > max_points:
        keep = np.linspace(0, n - 1, max_points).astype(np.int64)
        power_db, distortion, truth = power_db[keep], distortion[keep], truth[keep]
        n = max_points
    x0, y0, pw, ph = 62.0, 18.0, 420.0, 380.0
    logd = np.log10(np.maximum(np.asarray(distortion, dtype=float), 10.0 ** spec.d_min))
    xs = x0 + np.clip((logd - spec.d_min) / (spec.d_max - spec.d_min), 0, 1) * pw
    ys = y0 + ph - np.clip((power_db - spec.p_min) / (spec.p_max - spec.p_min), 0, 1) * ph
    parts = [_header(660, 470)]
    for k in range(n):
        parts.append(f'<circle cx="{xs[k]:.2f}" cy="{ys[k]:.2f}" r="1.6" '
                     f'fill="{COLORS[int(truth[k])]}" fill-opacity="0.55"/>')
    parts.append("\n" + _decision_axes(spec, x0, y0, pw, ph))
    parts.append(_legend(x0 + pw + 26, y0 + 8))
    parts.append("</svg>\n")
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(parts))
