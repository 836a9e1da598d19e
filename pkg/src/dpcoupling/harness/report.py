"""Standalone SVG charts and the summary table.

Input files are recognised by their header: per-epoch metrics, sweep
tables, or method aggregates. Each chart is its own SVG file.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from xml.sax.saxutils import escape

from ..optimizer import METRICS_HEADER, read_metrics_csv
from .experiments import AGGREGATE_HEADER, MIXED, SWEEP_HEADER, read_aggregate_csv, read_sweep_csv
from .metrics import DegenerateDenominatorError, delta_metric

W, H, PAD = 480, 320, 50
COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


class ReportError(ValueError):
    pass


def _header(path) -> list:
    with open(path, newline="") as fh:
        row = next(csv.reader(fh), None)
    if not row:
        raise ReportError(f"{path}: empty file")
    return row


def _scale(lo, hi, a, b):
    if hi == lo:
        hi, lo = hi + 0.5, lo - 0.5
    return lambda v: a + (v - lo) / (hi - lo) * (b - a)


def _axes(title, xlabel, ylabel, xlo, xhi, ylo, yhi):
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W / 2}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{PAD}" y1="{H - PAD}" x2="{W - PAD}" y2="{H - PAD}" stroke="black"/>',
        f'<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{H - PAD}" stroke="black"/>',
        f'<text x="{W / 2}" y="{H - 12}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>',
        f'<text x="14" y="{H / 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {H / 2})">{escape(ylabel)}</text>',
        f'<text x="{PAD}" y="{H - PAD + 16}" font-size="10" text-anchor="middle">{xlo:.4g}</text>',
        f'<text x="{W - PAD}" y="{H - PAD + 16}" font-size="10" text-anchor="middle">{xhi:.4g}</text>',
        f'<text x="{PAD - 4}" y="{H - PAD}" font-size="10" text-anchor="end">{ylo:.4g}</text>',
        f'<text x="{PAD - 4}" y="{PAD + 4}" font-size="10" text-anchor="end">{yhi:.4g}</text>',
    ]
    return parts


def line_chart(series: dict, title: str, xlabel: str, ylabel: str) -> str:
    """``series`` maps a legend label to (xs, ys); non-finite points are skipped."""
    pts = [(x, y) for xs, ys in series.values() for x, y in zip(xs, ys) if math.isfinite(y)]
    if not pts:
        raise ReportError(f"nothing to plot for {title!r}")
    xlo, xhi = min(p[0] for p in pts), max(p[0] for p in pts)
    ylo, yhi = min(p[1] for p in pts), max(p[1] for p in pts)
    sx, sy = _scale(xlo, xhi, PAD, W - PAD), _scale(ylo, yhi, H - PAD, PAD)
    out = _axes(title, xlabel, ylabel, xlo, xhi, ylo, yhi)
    for k, (label, (xs, ys)) in enumerate(series.items()):
        color = COLORS[k % len(COLORS)]
        coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys) if math.isfinite(y))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{coords}"/>')
        out.append(f'<text x="{W - PAD + 4}" y="{PAD + 14 * k}" font-size="10" fill="{color}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def heat_chart(alphas, etas, values, best=None, title="accuracy") -> str:
    """Cells coloured by value (white = low, blue = high); ``best`` is (i, j)."""
    finite = [v for row in values for v in row if math.isfinite(v)]
    if not finite:
        raise ReportError("no finite cells to plot")
    lo, hi = min(finite), max(finite)
    nx, ny = len(alphas), len(etas)
    cw, ch = (W - 2 * PAD) / nx, (H - 2 * PAD) / ny
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W / 2}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<text x="{W / 2}" y="{H - 12}" text-anchor="middle" font-size="12">alpha</text>',
        f'<text x="14" y="{H / 2}" text-anchor="middle" font-size="12" transform="rotate(-90 14 {H / 2})">eta</text>',
    ]
    for i, a in enumerate(alphas):
        out.append(f'<text x="{PAD + (i + 0.5) * cw:.1f}" y="{H - PAD + 14}" font-size="10" '
                   f'text-anchor="middle">{a:.3g}</text>')
        for j, e in enumerate(etas):
            v = values[i][j]
            x, y = PAD + i * cw, H - PAD - (j + 1) * ch
            if math.isfinite(v):
                t = 0.0 if hi == lo else (v - lo) / (hi - lo)
                r = g = int(round(255 * (1 - t)))
                fill = f"rgb({r},{g},255)"
            else:
                fill = "#bbbbbb"
            stroke = ' stroke="red" stroke-width="3"' if best == (i, j) else ""
            out.append(f'<rect x="{x:.1f}" y="{y:.1f}" width="{cw:.1f}" height="{ch:.1f}" fill="{fill}"{stroke}/>')
            label = f"{v:.4f}" if math.isfinite(v) else "err"
            out.append(f'<text x="{x + cw / 2:.1f}" y="{y + ch / 2 + 4:.1f}" font-size="9" '
                       f'text-anchor="middle">{label}</text>')
    for j, e in enumerate(etas):
        out.append(f'<text x="{PAD - 4}" y="{H - PAD - (j + 0.5) * ch + 4:.1f}" font-size="10" '
                   f'text-anchor="end">{e:.3g}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


@dataclass
class SummaryRow:
    source: str
    method: str
    mean_acc: float
    sd_acc: float
    delta: float | None
    note: str


SUMMARY_HEADER = ["source", "method", "mean_acc", "sd_acc", "delta", "note"]


def summarize_aggregate(records, source: str):
    """Summary rows with Δ for each mixed method present alongside the baselines."""
    by = {r["method"]: r for r in records}
    acc = {m: float(r["mean_acc"]) for m, r in by.items()}
    rows = []
    for m, r in by.items():
        delta, note = None, r["note"]
        if m in MIXED and all(b in acc for b in ("NonPriv", "OnlyPub", "FullPriv")):
            try:
                delta = delta_metric(acc["NonPriv"], acc["OnlyPub"], acc["FullPriv"], acc[m])
            except DegenerateDenominatorError:
                note = (note + "; " if note else "") + "delta undefined: not below NonPriv"
        rows.append(SummaryRow(source, m, acc[m], float(r["sd_acc"] or 0.0), delta, note))
    return rows


def write_summary_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for r in rows:
            w.writerow([r.source, r.method, repr(r.mean_acc), repr(r.sd_acc),
                        "" if r.delta is None else repr(r.delta), r.note])


def report(paths, out_dir) -> list:
    """Render charts for every input and write ``summary.csv``; returns written paths."""
    paths = [Path(p) for p in paths]
    if not paths:
        raise ReportError("no input files")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written, summary, curves = [], [], {}
    for p in paths:
        head = _header(p)
        if head == METRICS_HEADER:
            rows = read_metrics_csv(p)
            if not rows:
                raise ReportError(f"{p}: no metric rows")
            curves[p.stem] = rows
            last = rows[-1]
            summary.append(SummaryRow(str(p), p.stem, last.test_acc, 0.0, None, "final epoch"))
        elif head == SWEEP_HEADER:
            res = read_sweep_csv(p)
            alphas = sorted({c.alpha for c in res.cells})
            etas = sorted({c.eta for c in res.cells})
            grid = [[math.nan] * len(etas) for _ in alphas]
            for c in res.cells:
                grid[alphas.index(c.alpha)][etas.index(c.eta)] = c.mean_acc
            best = None
            if res.best is not None:
                bc = res.cells[res.best]
                best = (alphas.index(bc.alpha), etas.index(bc.eta))
            target = out_dir / f"{p.stem}_heat.svg"
            target.write_text(heat_chart(alphas, etas, grid, best, f"{p.stem}: mean test accuracy"))
            written.append(target)
        elif head == AGGREGATE_HEADER:
            summary.extend(summarize_aggregate(read_aggregate_csv(p), str(p)))
        else:
            raise ReportError(f"{p}: unrecognised header {','.join(head)}")
    for key, ylabel in (("train_loss", "train loss"), ("test_acc", "test accuracy")):
        if not curves:
            break
        series = {name: ([r.epoch for r in rows], [getattr(r, key) for r in rows]) for name, rows in curves.items()}
        target = out_dir / f"{key}.svg"
        target.write_text(line_chart(series, ylabel, "epoch", ylabel))
        written.append(target)
    target = out_dir / "summary.csv"
    write_summary_csv(summary, target)
    written.append(target)
    return written
