"""Static SVG line plots written without a plotting backend.

Each plot area is a ``<g class="axes">`` element carrying its data-to-pixel
transform in ``data-*`` attributes, and every series is a ``<polyline>`` whose
``data-label`` names it, so values can be read back from the file.
"""
import csv
import json
import math
import os
import xml.etree.ElementTree as ET
from xml.sax.saxutils import quoteattr, escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")
WIDTH, HEIGHT = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 70, 160, 40, 50


def _finite_points(x, y, logx, logy):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    ok = np.isfinite(x) & np.isfinite(y)
    if logx:
        ok &= x > 0
    if logy:
        ok &= y > 0
    return x[ok], y[ok]


def _limits(vals, log):
    if vals.size == 0:
        return (1.0, 10.0) if log else (0.0, 1.0)
    lo, hi = float(vals.min()), float(vals.max())
    if log:
        lo, hi = math.log10(lo), math.log10(hi)
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    return (10**lo, 10**hi) if log else (lo, hi)


class _Axis:
    def __init__(self, lo, hi, log, p0, p1):
        self.lo, self.hi, self.log, self.p0, self.p1 = lo, hi, log, p0, p1

    def _t(self, v):
        return np.log10(v) if self.log else v

    def to_px(self, v):
        a, b = self._t(self.lo), self._t(self.hi)
        return self.p0 + (self._t(np.asarray(v, dtype=np.float64)) - a) / (b - a) * (self.p1 - self.p0)

    def ticks(self, n=5):
        a, b = self._t(self.lo), self._t(self.hi)
        vals = np.linspace(a, b, n)
        return 10**vals if self.log else vals


def line_plot(path, series, title="", xlabel="", ylabel="", logx=False, logy=False):
    """Write ``series`` (``{label: (x, y)}``) as one polyline each; returns ``path``."""
    pts = {k: _finite_points(x, y, logx, logy) for k, (x, y) in series.items()}
    allx = np.concatenate([p[0] for p in pts.values()]) if pts else np.empty(0)
    ally = np.concatenate([p[1] for p in pts.values()]) if pts else np.empty(0)
    xl, yl = _limits(allx, logx), _limits(ally, logy)
    ax = _Axis(*xl, logx, LEFT, WIDTH - RIGHT)
    ay = _Axis(*yl, logy, HEIGHT - BOTTOM, TOP)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}">',
           f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<text x="{WIDTH / 2}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>',
           f'<g class="axes" data-x0={quoteattr(repr(xl[0]))} data-x1={quoteattr(repr(xl[1]))} '
           f'data-y0={quoteattr(repr(yl[0]))} data-y1={quoteattr(repr(yl[1]))} '
           f'data-logx="{int(logx)}" data-logy="{int(logy)}" data-left="{LEFT}" '
           f'data-right="{WIDTH - RIGHT}" data-top="{TOP}" data-bottom="{HEIGHT - BOTTOM}">',
           f'<rect x="{LEFT}" y="{TOP}" width="{WIDTH - LEFT - RIGHT}" '
           f'height="{HEIGHT - TOP - BOTTOM}" fill="none" stroke="black"/>']
    for v in ax.ticks():
        px = float(ax.to_px(v))
        out.append(f'<text x="{px:.1f}" y="{HEIGHT - BOTTOM + 16}" text-anchor="middle" '
                   f'font-size="11">{v:.3g}</text>')
    for v in ay.ticks():
        py = float(ay.to_px(v))
        out.append(f'<text x="{LEFT - 6}" y="{py + 4:.1f}" text-anchor="end" font-size="11">{v:.3g}</text>')
    for i, (label, (x, y)) in enumerate(pts.items()):
        color = PALETTE[i % len(PALETTE)]
        coords = " ".join(f"{px!r},{py!r}" for px, py in zip(ax.to_px(x).tolist(), ay.to_px(y).tolist()))
        out.append(f'<polyline class="series" data-label={quoteattr(label)} points="{coords}" '
                   f'fill="none" stroke="{color}" stroke-width="1.5"/>')
        ly = TOP + 16 * i + 10
        out.append(f'<line x1="{WIDTH - RIGHT + 10}" y1="{ly}" x2="{WIDTH - RIGHT + 30}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text class="legend" x="{WIDTH - RIGHT + 35}" y="{ly + 4}" '
                   f'font-size="11">{escape(label)}</text>')
    out.append("</g>")
    out.append(f'<text x="{(LEFT + WIDTH - RIGHT) / 2}" y="{HEIGHT - 12}" text-anchor="middle" '
               f'font-size="12">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{(TOP + HEIGHT - BOTTOM) / 2}" text-anchor="middle" font-size="12" '
               f'transform="rotate(-90 16 {(TOP + HEIGHT - BOTTOM) / 2})">{escape(ylabel)}</text>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")
    return path


def read_plot(path):
    """Parse an SVG from :func:`line_plot` back into ``{label: (x, y)}`` data values."""
    ns = {"s": "http://www.w3.org/2000/svg"}
    root = ET.parse(path).getroot()
    g = root.find("s:g[@class='axes']", ns)
    a = {k: float(g.get(f"data-{k}")) for k in ("x0", "x1", "y0", "y1", "left", "right", "top", "bottom")}
    logx, logy = g.get("data-logx") == "1", g.get("data-logy") == "1"

    def inv(p, lo, hi, p0, p1, log):
        f = (lambda v: math.log10(v)) if log else (lambda v: v)
        v = f(lo) + (p - p0) / (p1 - p0) * (f(hi) - f(lo))
        return 10**v if log else v

    out = {}
    for pl in g.findall("s:polyline", ns):
        raw = pl.get("points").split()
        xy = [tuple(map(float, s.split(","))) for s in raw]
        x = np.array([inv(px, a["x0"], a["x1"], a["left"], a["right"], logx) for px, _ in xy])
        y = np.array([inv(py, a["y0"], a["y1"], a["bottom"], a["top"], logy) for _, py in xy])
        out[pl.get("data-label")] = (x, y)
    return out


def _read_columns(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    cols = {}
    for r in rows:
        for k, v in r.items():
            cols.setdefault(k, []).append(np.nan if v == "" else float(v))
    return {k: np.array(v) for k, v in cols.items()}


# (file stem, column, title, log y)
FAMILIES = (
    ("residual", "residual", "Residual", True),
    ("misfit", "misfit", "Data misfit", True),
    ("loss", "loss", "Tikhonov loss", True),
    ("spread", "spread", "Ensemble spread", True),
    ("lambda", "lambda", "Regularization parameter", True),
)


def emit_plots(bundle):
    """Write one SVG per figure family into ``bundle``; returns the written paths."""
    with open(os.path.join(bundle, "manifest.json")) as fh:
        schemes = json.load(fh)["schemes"]
    agg = {s: _read_columns(os.path.join(bundle, f"aggregate_{s}.csv")) for s in schemes}
    written = []
    for stem, col, title, logy in FAMILIES:
        # one polyline per scheme; schemes without the quantity give an empty line
        series = {s: (agg[s]["t"], agg[s].get(f"{col}_mean", np.full(agg[s]["t"].size, np.nan)))
                  for s in schemes}
        written.append(line_plot(os.path.join(bundle, f"plot_{stem}.svg"), series, title,
                                 "t", col, logy=logy))
    theta = {}
    for s in schemes:
        for c in ("theta_min", "theta_max"):
            y = agg[s].get(f"{c}_mean", np.empty(0))
            if y.size and np.any(np.isfinite(y)):
                theta[f"{s} {c}"] = (agg[s]["t"], y)
    written.append(line_plot(os.path.join(bundle, "plot_theta.svg"), theta,
                             "Precisions of the regularization covariance", "t", "theta", logy=True))
    fields = {}
    for name in ["truth"] + list(schemes):
        f = os.path.join(bundle, f"field_{name}.csv")
        if os.path.exists(f):
            c = _read_columns(f)
            fields[name] = (c["x"], c["value"])
    written.append(line_plot(os.path.join(bundle, "plot_fields.svg"), fields,
                             "Estimates and truth", "x", "u"))
    return written
