"""CSV tables of convergence studies, markdown summaries and hand-written SVG plots."""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .analysis import VARIABLES, ErrorTable

HEADER = ["level", "h", "n_elem", "n_dof"] + [f"err_{v}" for v in VARIABLES] + [f"ord_{v}" for v in VARIABLES]


class CsvFormatError(ValueError):
    pass


def table_rows(table: ErrorTable) -> list[list[str]]:
    orders = table.orders()
    rows = []
    for i, r in enumerate(table.rows):
        row = [str(r.level), f"{r.h:.12e}", str(r.n_elem), str(r.n_dof)]
        row += [f"{r.errors[v]:.12e}" for v in VARIABLES]
        row += ["" if not np.isfinite(orders[v][i]) else f"{orders[v][i]:.6f}" for v in VARIABLES]
        rows.append(row)
    return rows


def write_csv(path, table: ErrorTable):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        w.writerows(table_rows(table))


@dataclass
class Study:
    """A convergence table read back from CSV."""

    label: str
    k: int | None
    level: np.ndarray
    h: np.ndarray
    n_elem: np.ndarray
    n_dof: np.ndarray
    errors: dict
    orders: dict


def _infer_order(path: Path) -> int | None:
    m = re.search(r"_k(\d)", path.stem)
    return int(m.group(1)) if m else None


def read_csv(path, k: int | None = None) -> Study:
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise CsvFormatError(f"cannot read {path}: {exc}") from exc
    if not rows or rows[0] != HEADER:
        raise CsvFormatError(f"{path}: header does not match {','.join(HEADER)}")
    body = rows[1:]
    if not body:
        raise CsvFormatError(f"{path}: no data rows")
    cols = {name: [] for name in HEADER}
    for lineno, row in enumerate(body, start=2):
        if len(row) != len(HEADER):
            raise CsvFormatError(f"{path}:{lineno}: expected {len(HEADER)} fields, got {len(row)}")
        for name, cell in zip(HEADER, row):
            try:
                cols[name].append(float(cell) if cell != "" else math.nan)
            except ValueError as exc:
                raise CsvFormatError(f"{path}:{lineno}: bad value {cell!r} for {name}") from exc
    arr = {n: np.array(v) for n, v in cols.items()}
    for n in ("level", "h", "n_elem", "n_dof") + tuple(f"err_{v}" for v in VARIABLES):
        if np.any(~np.isfinite(arr[n])):
            raise CsvFormatError(f"{path}: missing values in column {n}")
    if np.any(arr["h"] <= 0):
        raise CsvFormatError(f"{path}: mesh sizes must be positive")
    return Study(path.stem, k if k is not None else _infer_order(path),
                 arr["level"].astype(int), arr["h"], arr["n_elem"].astype(int), arr["n_dof"].astype(int),
                 {v: arr[f"err_{v}"] for v in VARIABLES}, {v: arr[f"ord_{v}"] for v in VARIABLES})


def markdown_table(studies) -> str:
    lines = []
    for st in studies:
        title = st.label if st.k is None else f"{st.label} (k = {st.k})"
        lines.append(f"### {title}")
        lines.append("")
        head = ["level", "h", "n_dof"] + [f"{v} err" for v in VARIABLES] + [f"{v} ord" for v in VARIABLES]
        lines.append("| " + " | ".join(head) + " |")
        lines.append("|" + "---|" * len(head))
        for i in range(len(st.level)):
            cells = [str(st.level[i]), f"{st.h[i]:.4g}", str(st.n_dof[i])]
            cells += [f"{st.errors[v][i]:.3e}" for v in VARIABLES]
            cells += ["-" if not np.isfinite(st.orders[v][i]) else f"{st.orders[v][i]:.2f}" for v in VARIABLES]
            lines.append("| " + " | ".join(cells) + " |")
        lines.append("")
    return "\n".join(lines)


# --- SVG ----------------------------------------------------------------------

COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
WIDTH, HEIGHT = 520, 400
LEFT, RIGHT, TOP, BOTTOM = 70, 20, 30, 50


def _decades(lo: float, hi: float):
    a, b = math.floor(lo), math.ceil(hi)
    if a == b:
        b += 1
    return a, b


def svg_plot(variable: str, studies) -> str | None:
    """Log-log plot of the ``variable`` error against h; None when no study has two positive points."""
    series = []
    for st in studies:
        e = st.errors[variable]
        ok = e > 0
        if ok.sum() >= 2:
            series.append((st, np.log10(st.h[ok]), np.log10(e[ok])))
    if not series:
        return None
    tris = [_triangle_geometry(st.k, lx, ly) if st.k is not None else [] for st, lx, ly in series]
    xs = np.concatenate([s[1] for s in series] + [np.ravel([t[1][0] for t in tr]) for tr in tris if tr])
    ys = np.concatenate([s[2] for s in series] + [np.ravel([t[1][1] for t in tr]) for tr in tris if tr])
    x0, x1 = _decades(xs.min(), xs.max())
    y0, y1 = _decades(ys.min(), ys.max())
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def px(x):
        return LEFT + (x - x0) / (x1 - x0) * pw

    def py(y):
        return TOP + (y1 - y) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
           f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<text x="{WIDTH / 2:.1f}" y="18" text-anchor="middle" font-size="13">'
           f'L2 error of {variable}</text>',
           f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for d in range(x0, x1 + 1):
        X = px(d)
        out.append(f'<line x1="{X:.2f}" y1="{TOP}" x2="{X:.2f}" y2="{TOP + ph}" stroke="#ddd"/>')
        out.append(f'<text x="{X:.2f}" y="{TOP + ph + 16}" text-anchor="middle">1e{d}</text>')
    for d in range(y0, y1 + 1):
        Y = py(d)
        out.append(f'<line x1="{LEFT}" y1="{Y:.2f}" x2="{LEFT + pw}" y2="{Y:.2f}" stroke="#ddd"/>')
        out.append(f'<text x="{LEFT - 6}" y="{Y + 4:.2f}" text-anchor="end">1e{d}</text>')
    out.append(f'<text x="{LEFT + pw / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle">h</text>')
    out.append(f'<text x="16" y="{TOP + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {TOP + ph / 2:.1f})">error</text>')
    for i, (st, lx, ly) in enumerate(series):
        color = COLORS[i % len(COLORS)]
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(lx, ly))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for a, b in zip(lx, ly):
            out.append(f'<circle cx="{px(a):.2f}" cy="{py(b):.2f}" r="3" fill="{color}"/>')
        label = st.label if st.k is None else f"{st.label} k={st.k}"
        out.append(f'<text x="{LEFT + 8}" y="{TOP + 16 + 14 * i}" fill="{color}">{label}</text>')
        for slope, (tx, ty) in tris[i]:
            pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(tx, ty))
            out.append(f'<polygon points="{pts}" fill="none" stroke="{color}" stroke-dasharray="3,2"/>')
            out.append(f'<text x="{px(tx[1]) + 4:.2f}" y="{(py(ty[1]) + py(ty[2])) / 2 + 4:.2f}" '
                       f'fill="{color}">{slope:g}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _triangle_geometry(k, lx, ly):
    """Slope triangles for ``k + 1/2`` and ``k + 1`` stacked under the finest point (log10 coordinates)."""
    i = int(np.argmin(lx))
    width = 0.5 * max(abs(lx.max() - lx.min()) / max(len(lx) - 1, 1), 0.15)
    xa, top = lx[i], ly[i] - 0.25
    out = []
    for slope in (k + 0.5, k + 1.0):
        ya = top - slope * width
        out.append((slope, (np.array([xa, xa + width, xa + width]), np.array([ya, ya, ya + slope * width]))))
        top = ya - 0.1
    return out


def write_report(studies, outdir) -> list[Path]:
    """Markdown table plus one SVG per variable with at least two points; returns written paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    md = outdir / "report.md"
    md.write_text(markdown_table(studies))
    written.append(md)
    for v in VARIABLES:
        svg = svg_plot(v, studies)
        if svg is not None:
            path = outdir / f"error_{v}.svg"
            path.write_text(svg)
            written.append(path)
    return written
