"""Self-contained SVG line plots with error bars (no plotting dependency)."""
from __future__ import annotations

import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .chaos_metrics import exp_decay_fit, lln_rate_fit
from .kernels import InvalidInput

SCALES = ("loglog", "semilogy", "linear")
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")
W, H = 640, 440
LEFT, RIGHT, TOP, BOTTOM = 70, 170, 40, 60


def _norm_series(series):
    out = []
    for s in series:
        if isinstance(s, dict):
            label, x, y, e = s.get("label", ""), s["x"], s["y"], s.get("yerr")
        else:
            label, x, y = s[0], s[1], s[2]
            e = s[3] if len(s) > 3 else None
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        e = np.zeros_like(y) if e is None else np.nan_to_num(np.asarray(e, float))
        if not (x.shape == y.shape == e.shape) or x.ndim != 1:
            raise InvalidInput(f"series {label!r}: x, y, yerr must be 1-d of equal length")
        out.append((str(label), x, y, e))
    return out


def _fmt_tick(v):
    if v == 0:
        return "0"
    if abs(v) >= 1e4 or abs(v) < 1e-2:
        return f"{v:.0e}"
    return f"{v:g}"


def emit_plot(series, scale, path, *, title="", xlabel="", ylabel="", fit=False):
    """Write an SVG plot; returns the fitted slopes/rates per series when ``fit``.

    loglog fits use lln_rate_fit (slope of log y on log x); semilogy fits use
    the exponential decay fit (rate of y ~ exp(-rate x)).
    """
    if scale not in SCALES:
        raise InvalidInput(f"scale must be one of {SCALES}")
    data = _norm_series(series)
    if not data or all(len(s[1]) == 0 for s in data):
        raise InvalidInput("nothing to plot: empty series")
    logx = scale == "loglog"
    logy = scale in ("loglog", "semilogy")

    def tx(v):
        return np.log10(v) if logx else v

    def ty(v):
        return np.log10(v) if logy else v

    xs, ys = [], []
    for _, x, y, e in data:
        okx = x > 0 if logx else np.isfinite(x)
        oky = y > 0 if logy else np.isfinite(y)
        ok = okx & oky
        xs.extend(tx(x[ok]))
        ys.extend(ty(y[ok]))
        lo = y[ok] - e[ok]
        hi = y[ok] + e[ok]
        ys.extend(ty(hi))
        ys.extend(ty(lo[lo > 0]) if logy else lo)
    if not xs:
        raise InvalidInput("no plottable points for this scale")
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    padx, pady = 0.05 * (x1 - x0), 0.08 * (y1 - y0)
    x0, x1, y0, y1 = x0 - padx, x1 + padx, y0 - pady, y1 + pady
    pw, ph = W - LEFT - RIGHT, H - TOP - BOTTOM

    def px(v):
        return LEFT + (v - x0) / (x1 - x0) * pw

    def py(v):
        return TOP + (1 - (v - y0) / (y1 - y0)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
           f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">',
           f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
           f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    if title:
        out.append(f'<text x="{W / 2:.1f}" y="22" text-anchor="middle" font-size="14">'
                   f'{escape(title)}</text>')
    for k in range(6):
        v = x0 + (x1 - x0) * k / 5
        lab = _fmt_tick(10 ** v if logx else v)
        out.append(f'<line x1="{px(v):.1f}" y1="{TOP + ph}" x2="{px(v):.1f}" y2="{TOP + ph + 5}" '
                   f'stroke="black"/><text x="{px(v):.1f}" y="{TOP + ph + 18}" '
                   f'text-anchor="middle">{lab}</text>')
        v = y0 + (y1 - y0) * k / 5
        lab = _fmt_tick(10 ** v if logy else v)
        out.append(f'<line x1="{LEFT - 5}" y1="{py(v):.1f}" x2="{LEFT}" y2="{py(v):.1f}" '
                   f'stroke="black"/><text x="{LEFT - 8}" y="{py(v) + 4:.1f}" '
                   f'text-anchor="end">{lab}</text>')
    if xlabel:
        out.append(f'<text x="{LEFT + pw / 2:.1f}" y="{H - 18}" text-anchor="middle">'
                   f'{escape(xlabel)}</text>')
    if ylabel:
        out.append(f'<text x="16" y="{TOP + ph / 2:.1f}" text-anchor="middle" '
                   f'transform="rotate(-90 16 {TOP + ph / 2:.1f})">{escape(ylabel)}</text>')

    fits = {}
    for idx, (label, x, y, e) in enumerate(data):
        col = _COLORS[idx % len(_COLORS)]
        ok = (x > 0 if logx else np.isfinite(x)) & (y > 0 if logy else np.isfinite(y))
        pts = [(px(tx(a)), py(ty(b))) for a, b in zip(x[ok], y[ok])]
        if len(pts) > 1:
            path_d = " ".join(f"{a:.2f},{b:.2f}" for a, b in pts)
            out.append(f'<polyline points="{path_d}" fill="none" stroke="{col}"/>')
        for a, b, err in zip(x[ok], y[ok], e[ok]):
            cx, cy = px(tx(a)), py(ty(b))
            if err > 0:
                lo = b - err
                ylo = py(ty(lo)) if (lo > 0 or not logy) else TOP + ph
                yhi = py(ty(b + err))
                out.append(f'<line x1="{cx:.2f}" y1="{ylo:.2f}" x2="{cx:.2f}" y2="{yhi:.2f}" '
                           f'stroke="{col}"/>')
            out.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="3" fill="{col}"/>')
        legend = label
        if fit and ok.sum() >= 2:
            if scale == "loglog":
                rf = lln_rate_fit(list(zip(x[ok], y[ok], e[ok] if np.all(e[ok] > 0) else
                                           [None] * ok.sum())),
                                  min_octaves=0.0, min_distinct=2)
                fits[label] = {"slope": rf.slope, "ci": [rf.ci_low, rf.ci_high]}
                legend = f"{label} (slope {rf.slope:.3f})"
            elif scale == "semilogy" and ok.sum() >= 3:
                rate, r2 = exp_decay_fit(x[ok], y[ok])
                fits[label] = {"rate": rate, "r2": r2}
                legend = f"{label} (rate {rate:.3f})"
        ly = TOP + 14 + 18 * idx
        out.append(f'<circle cx="{W - RIGHT + 14}" cy="{ly - 4}" r="4" fill="{col}"/>'
                   f'<text x="{W - RIGHT + 24}" y="{ly}">{escape(legend)}</text>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")
    return fits
