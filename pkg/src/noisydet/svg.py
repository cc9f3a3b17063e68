"""Minimal deterministic SVG charts.

Output depends only on the data passed in: coordinates are printed with a
fixed number of decimals and there are no ids, timestamps or fonts beyond a
generic family, so identical inputs give byte-identical files.
"""

import math
from xml.sax.saxutils import escape

# clean level first, then yellow to purple for increasing noise
LEVEL_COLORS = ["#1f77b4", "#fde725", "#5ec962", "#21918c", "#3b528b", "#440154",
                "#8c564b", "#e377c2", "#7f7f7f"]


def _n(x):
    return f"{x:.2f}"


def _text(x, y, s, size=12, anchor="middle"):
    return (f'<text x="{_n(x)}" y="{_n(y)}" font-size="{size}" text-anchor="{anchor}"'
            f' font-family="sans-serif">{escape(str(s))}</text>')


def _doc(width, height, body):
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">')
    return "\n".join([head, f'<rect width="{width}" height="{height}" fill="white"/>',
                      *body, "</svg>", ""])


def census_chart(rows, title="Positive anchors per lesion"):
    """Grouped bar chart, one group per criterion, log-scale y axis.

    ``rows`` are ``(criterion, level, value)`` triples in display order.
    """
    criteria, levels = [], []
    values = {}
    for crit, level, value in rows:
        if crit not in criteria:
            criteria.append(crit)
        if level not in levels:
            levels.append(level)
        values[(crit, level)] = float(value)
    positive = [v for v in values.values() if v > 0 and math.isfinite(v)]
    lo = math.floor(math.log10(min(positive))) if positive else 0
    hi = math.ceil(math.log10(max(positive))) if positive else 1
    hi = max(hi, lo + 1)

    width, height = max(420, 140 + 30 * len(criteria) * len(levels)), 400
    left, right, top, bottom = 70, 20, 40, 80
    plot_w, plot_h = width - left - right, height - top - bottom

    def y_of(v):
        return top + plot_h * (1 - (math.log10(v) - lo) / (hi - lo))

    body = [_text(width / 2, 22, title, 14)]
    for e in range(lo, hi + 1):
        y = y_of(10 ** e)
        body.append(f'<line x1="{left}" y1="{_n(y)}" x2="{width - right}" y2="{_n(y)}" '
                    'stroke="#dddddd"/>')
        body.append(_text(left - 6, y + 4, f"1e{e}", 10, "end"))
    body.append(f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + plot_h}" stroke="black"/>')
    body.append(f'<line x1="{left}" y1="{top + plot_h}" x2="{width - right}" '
                f'y2="{top + plot_h}" stroke="black"/>')

    group_w = plot_w / max(1, len(criteria))
    bar_w = group_w * 0.8 / max(1, len(levels))
    for g, crit in enumerate(criteria):
        x0 = left + g * group_w + group_w * 0.1
        for k, level in enumerate(levels):
            v = values.get((crit, level))
            if v is None or not v > 0 or not math.isfinite(v):
                continue
            y = y_of(v)
            color = LEVEL_COLORS[k % len(LEVEL_COLORS)]
            body.append(f'<rect x="{_n(x0 + k * bar_w)}" y="{_n(y)}" width="{_n(bar_w)}" '
                        f'height="{_n(top + plot_h - y)}" fill="{color}"/>')
        body.append(_text(x0 + group_w * 0.4, top + plot_h + 18, crit))
    for k, level in enumerate(levels):
        x = left + k * 90
        body.append(f'<rect x="{x}" y="{height - 30}" width="12" height="12" '
                    f'fill="{LEVEL_COLORS[k % len(LEVEL_COLORS)]}"/>')
        body.append(_text(x + 16, height - 20, level, 11, "start"))
    return _doc(width, height, body)


def froc_chart(points, fp_cut, band=None, title="FROC"):
    """Step curve of ``(fp_per_image, sensitivity)`` with an optional CI band.

    ``band`` is ``(fp_grid, lower, upper)``.
    """
    width, height = 480, 400
    left, right, top, bottom = 60, 20, 40, 50
    plot_w, plot_h = width - left - right, height - top - bottom

    def xy(fp, s):
        return left + plot_w * fp / fp_cut, top + plot_h * (1 - s)

    body = [_text(width / 2, 22, title, 14)]
    for k in range(5):
        s = k / 4
        _, y = xy(0, s)
        body.append(f'<line x1="{left}" y1="{_n(y)}" x2="{width - right}" y2="{_n(y)}" '
                    'stroke="#dddddd"/>')
        body.append(_text(left - 6, y + 4, f"{s:.2f}", 10, "end"))
    for k in range(5):
        fp = fp_cut * k / 4
        x, _ = xy(fp, 0)
        body.append(_text(x, top + plot_h + 16, f"{fp:.2f}", 10))
    body.append(_text(left + plot_w / 2, height - 10, "FPs per image", 12))
    body.append(f'<rect x="{left}" y="{top}" width="{plot_w}" height="{plot_h}" fill="none" '
                'stroke="black"/>')

    if band is not None:
        grid, lower, upper = band
        upper_pts = [xy(f, s) for f, s in zip(grid, upper)]
        lower_pts = [xy(f, s) for f, s in zip(grid, lower)][::-1]
        coords = " ".join(f"{_n(x)},{_n(y)}" for x, y in upper_pts + lower_pts)
        body.append(f'<polygon points="{coords}" fill="#1f77b4" fill-opacity="0.25" '
                    'stroke="none"/>')

    # step curve: zero before the first operating point, flat after the last
    step = [(0.0, 0.0)]
    for fp, s in points:
        step.append((fp, step[-1][1]))
        step.append((fp, s))
    step.append((fp_cut, step[-1][1]))
    coords = " ".join(f"{_n(x)},{_n(y)}" for x, y in (xy(f, s) for f, s in step))
    body.append(f'<polyline points="{coords}" fill="none" stroke="#1f77b4" stroke-width="2"/>')
    return _doc(width, height, body)
