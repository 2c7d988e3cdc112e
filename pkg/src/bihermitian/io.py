"""Persistence: field dumps, reports, CSV slices and minimal SVG line plots."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .grid import KIND_RANK, FlatBundle, FundamentalGrid

COMPONENT_SHAPES = {0: (), 1: (4,), 2: (4, 4)}


class DumpError(ValueError):
    pass


# ---------------------------------------------------------------- JSON


def _clean(obj):
    """Plain-Python copy with non-finite floats mapped to strings (strict JSON)."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path, obj):
    Path(path).write_text(dumps(obj))


# ---------------------------------------------------------------- fields


def write_field(stem, values, kind: str, grid: FundamentalGrid, bundle: FlatBundle | None):
    """Little-endian float64 ``<stem>.bin`` plus a ``<stem>.json`` sidecar."""
    stem = Path(stem)
    values = np.asarray(values)
    if np.iscomplexobj(values):
        raise DumpError("field dumps hold real data only")
    if kind not in KIND_RANK:
        raise DumpError(f"unknown field kind {kind!r}")
    expect = grid.shape + COMPONENT_SHAPES[KIND_RANK[kind]]
    if values.shape != expect:
        raise DumpError(f"{kind} field has shape {values.shape}, expected {expect}")
    values.astype("<f8").tofile(stem.with_suffix(".bin"))
    meta = {
        "kind": kind,
        "bundle": bundle.to_dict() if bundle else None,
        "grid": grid.to_dict(),
        "lambda": grid.lam,
    }
    write_json(stem.with_suffix(".json"), meta)
    return stem.with_suffix(".bin")


def read_field(path):
    """Returns ``(values, meta)``; accepts either the ``.bin`` or the ``.json`` path."""
    path = Path(path)
    meta_path, bin_path = path.with_suffix(".json"), path.with_suffix(".bin")
    try:
        meta = json.loads(meta_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DumpError(f"cannot read sidecar {meta_path}: {exc}") from exc
    for key in ("kind", "bundle", "grid", "lambda"):
        if key not in meta:
            raise DumpError(f"sidecar lacks {key!r}")
    kind = meta["kind"]
    if kind not in KIND_RANK:
        raise DumpError(f"unknown field kind {kind!r}")
    g = meta["grid"]
    shape = (g["n_s"], g["n_eta"], g["n_xi1"], g["n_xi2"]) + COMPONENT_SHAPES[KIND_RANK[kind]]
    data = np.fromfile(bin_path, dtype="<f8")
    if data.size != int(np.prod(shape)):
        raise DumpError(f"{bin_path} holds {data.size} values, sidecar implies {int(np.prod(shape))}")
    return data.reshape(shape), meta


# ---------------------------------------------------------------- CSV and SVG


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([f"{v:.12e}" if isinstance(v, float) else v for v in r])


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise DumpError(f"{path} holds no data rows")
    return rows[0], rows[1:]


def svg_lines(series, title="", xlabel="", ylabel="", logy=False, width=480, height=320):
    """Minimal static SVG; ``series`` is a list of ``(label, xs, ys)``."""
    pad = 48
    pts = []
    for label, xs, ys in series:
        xs = np.asarray(xs, float)
        ys = np.asarray(ys, float)
        if logy:
            keep = ys > 0
            xs, ys = xs[keep], np.log10(ys[keep])
        pts.append((label, xs, ys))
    allx = np.concatenate([p[1] for p in pts]) if pts else np.array([0.0, 1.0])
    ally = np.concatenate([p[2] for p in pts]) if pts else np.array([0.0, 1.0])
    if allx.size == 0:
        raise DumpError("nothing to plot")
    x0, x1 = float(allx.min()), float(allx.max())
    y0, y1 = float(ally.min()), float(ally.max())
    x1 = x1 if x1 > x0 else x0 + 1.0
    y1 = y1 if y1 > y0 else y0 + 1.0

    def sx(x):
        return pad + (x - x0) / (x1 - x0) * (width - 2 * pad)

    def sy(y):
        return height - pad - (y - y0) / (y1 - y0) * (height - 2 * pad)

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{width / 2:.1f}" y="{pad / 2:.1f}" text-anchor="middle" font-size="13">{title}</text>',
        f'<text x="{width / 2:.1f}" y="{height - 10}" text-anchor="middle" font-size="11">{xlabel}</text>',
        f'<text x="12" y="{height / 2:.1f}" font-size="11" transform="rotate(-90 12 {height / 2:.1f})" '
        f'text-anchor="middle">{("log10 " if logy else "") + ylabel}</text>',
        f'<text x="{pad}" y="{height - pad + 14}" font-size="10">{x0:.3g}</text>',
        f'<text x="{width - pad}" y="{height - pad + 14}" font-size="10" text-anchor="end">{x1:.3g}</text>',
        f'<text x="{pad - 4}" y="{height - pad}" font-size="10" text-anchor="end">{y0:.3g}</text>',
        f'<text x="{pad - 4}" y="{pad + 4}" font-size="10" text-anchor="end">{y1:.3g}</text>',
    ]
    for i, (label, xs, ys) in enumerate(pts):
        c = colors[i % len(colors)]
        coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
        out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{coords}"/>')
        out.append(f'<text x="{width - pad}" y="{pad + 14 * (i + 1)}" font-size="10" fill="{c}" '
                   f'text-anchor="end">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
