"""CSV, SVG and JSON writers.  Output bytes depend only on the data."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .geodesic import GeodesicTrace


def fmt(v: float) -> str:
    """17 significant digits: round-trips every float64."""
    return format(float(v), ".17g")


def csv_text(traces: Sequence[GeodesicTrace]) -> str:
    if not traces:
        raise ValueError("nothing to write")
    dim = traces[0].dim
    header = ["ray", "k", "r", "S"] + [f"x{i + 1}" for i in range(dim)] + [f"u{i + 1}" for i in range(dim)]
    lines = [",".join(header)]
    for ray, tr in enumerate(traces):
        for k in range(len(tr)):
            vals = [tr.r[k], tr.S[k], *tr.x[k], *tr.u[k]]
            lines.append(f"{ray},{k}," + ",".join(fmt(v) for v in vals))
    return "\n".join(lines) + "\n"


def emit_csv(traces, path) -> None:
    """Write ``ray,k,r,S,x1..xn,u1..un`` rows ordered by (ray, k)."""
    if isinstance(traces, GeodesicTrace):
        traces = [traces]
    text = csv_text(list(traces))
    Path(path).write_bytes(text.encode("ascii"))


def _pt(p) -> str:
    # y is flipped so the chart's x2 axis points up; + 0.0 clears negative zero
    return f"{p[0] + 0.0:.6f},{-p[1] + 0.0:.6f}"


def svg_text(traces: Sequence[GeodesicTrace], level_sets: Iterable = (), discs: Iterable = (),
             title: Optional[str] = None) -> str:
    traces = list(traces)
    level_sets = list(level_sets)
    discs = list(discs)
    if any(tr.dim != 2 for tr in traces):
        raise ValueError("SVG output supports dim = 2 only")
    pts = [tr.x for tr in traces] + [ls.points for ls in level_sets]
    pts += [np.array([[c[0] - r, c[1] - r], [c[0] + r, c[1] + r]]) for c, r in discs]
    allp = np.concatenate([p for p in pts if len(p)])
    lo, hi = allp.min(axis=0), allp.max(axis=0)
    span = np.maximum(hi - lo, 1e-9)
    lo, hi = lo - 0.05 * span, hi + 0.05 * span
    w, h = hi - lo
    stroke = 0.002 * max(w, h)
    out = ['<?xml version="1.0" encoding="UTF-8"?>',
           f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="{lo[0]:.6f} {-hi[1]:.6f} {w:.6f} {h:.6f}" '
           f'width="800" height="{800 * h / w:.0f}">']
    if title:
        out.append(f"<title>{title}</title>")
    out.append(f'<g fill="none" stroke="#1f4e79" stroke-width="{stroke:.6f}">')
    for tr in traces:
        out.append(f'<polyline points="{" ".join(_pt(p) for p in tr.x)}"/>')
    out.append("</g>")
    if discs:
        out.append(f'<g fill="none" stroke="#888888" stroke-width="{0.5 * stroke:.6f}">')
        for c, r in discs:
            out.append(f'<circle cx="{c[0] + 0.0:.6f}" cy="{-c[1] + 0.0:.6f}" r="{r:.6f}"/>')
        out.append("</g>")
    if level_sets:
        out.append(f'<g fill="none" stroke="#c0392b" stroke-width="{stroke:.6f}">')
        for ls in level_sets:
            p = ls.points if not ls.closed else np.vstack([ls.points, ls.points[:1]])
            out.append(f'<polyline points="{" ".join(_pt(q) for q in p)}"/>')
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_svg(traces, path, level_sets=(), discs=(), title: Optional[str] = None) -> None:
    """Polylines per ray, optional wavefront polylines and Huygens circles."""
    if isinstance(traces, GeodesicTrace):
        traces = [traces]
    Path(path).write_bytes(svg_text(traces, level_sets, discs, title).encode("utf-8"))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def report_json(report: dict) -> str:
    return json.dumps(_jsonable(report), sort_keys=True, indent=2) + "\n"
