"""Field export: prediction CSVs (with optional FEM comparison columns) and a
minimal dependency-free SVG heatmap writer for per-time field slices."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import InvalidInput
from .operator import DeepONetModel

CSV_HEADER = "x,z,t,prediction"
CSV_HEADER_FEM = "x,z,t,prediction,fem,abs_error"


def export_csv(model: DeepONetModel, xi_row, coords, out_path,
               fem_values=None) -> Path:
    """Write per-point predictions; adds fem/abs_error columns when reference
    values are supplied.  An empty coordinate list yields a header-only file."""
    coords = np.asarray(coords, dtype=float).reshape(-1, 3)
    out_path = Path(out_path)
    if coords.shape[0] == 0:
        out_path.write_text((CSV_HEADER_FEM if fem_values is not None
                             else CSV_HEADER) + "\n")
        return out_path
    pred = model.predict_batch(np.asarray(xi_row, float)[None, :model.M],
                               coords)[0]
    lines = []
    if fem_values is not None:
        fem = np.asarray(fem_values, dtype=float).ravel()
        if fem.shape[0] != coords.shape[0]:
            raise InvalidInput("FEM reference length does not match coordinates")
        lines.append(CSV_HEADER_FEM)
        for (x, z, t), pv, fv in zip(coords, pred, fem):
            lines.append(f"{x:.17g},{z:.17g},{t:.17g},{pv:.17g},{fv:.17g},"
                         f"{abs(fv - pv):.17g}")
    else:
        lines.append(CSV_HEADER)
        for (x, z, t), pv in zip(coords, pred):
            lines.append(f"{x:.17g},{z:.17g},{t:.17g},{pv:.17g}")
    out_path.write_text("\n".join(lines) + "\n")
    return out_path


def _color(v: float) -> str:
    """Two-sided blue-white-red map for v in [-1, 1]."""
    v = float(np.clip(v, -1.0, 1.0))
    if v >= 0:
        r, g, b = 255, int(255 * (1 - v)), int(255 * (1 - v))
    else:
        r, g, b = int(255 * (1 + v)), int(255 * (1 + v)), 255
    return f"#{r:02x}{g:02x}{b:02x}"


def svg_heatmap(values: np.ndarray, xs, zs, out_path, title: str = "",
                cell: int = 24) -> Path:
    """Rasterless heatmap: one SVG rect per grid cell, centered on the nodes.

    ``values[i, j]`` corresponds to (zs[i], xs[j]); z increases upward.
    """
    values = np.asarray(values, dtype=float)
    xs, zs = list(xs), list(zs)
    if values.shape != (len(zs), len(xs)):
        raise InvalidInput("heatmap values must be shaped (len(zs), len(xs))")
    vmax = float(np.max(np.abs(values))) or 1.0
    w, h = cell * len(xs), cell * len(zs)
    pad = 30
    rows = [f'<svg xmlns="http://www.w3.org/2000/svg" '
            f'width="{w + 2 * pad}" height="{h + 2 * pad}">']
    if title:
        rows.append(f'<text x="{pad}" y="{pad - 10}" font-size="12" '
                    f'font-family="monospace">{title}</text>')
    for i in range(len(zs)):
        for j in range(len(xs)):
            x0 = pad + j * cell
            y0 = pad + (len(zs) - 1 - i) * cell
            rows.append(f'<rect x="{x0}" y="{y0}" width="{cell}" height="{cell}" '
                        f'fill="{_color(values[i, j] / vmax)}"/>')
    rows.append("</svg>")
    out_path = Path(out_path)
    out_path.write_text("\n".join(rows) + "\n")
    return out_path


def export_time_slices(model: DeepONetModel, xi_row, xs, zs, times, out_dir,
                       fem_rows=None, svg: bool = False,
                       dataset_coords=None, fem_flat=None) -> list[str]:
    """One CSV (and optional SVG) per requested time slice.

    When ``dataset_coords``/``fem_flat`` reference a stored dataset row, the
    matching FEM values are attached wherever a requested (x, z, t) exists in
    the dataset grid.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    xs = np.asarray(xs, float)
    zs = np.asarray(zs, float)
    written = []
    lookup = None
    if dataset_coords is not None and fem_flat is not None:
        lookup = {tuple(np.round(c, 9)): v
                  for c, v in zip(np.asarray(dataset_coords), np.ravel(fem_flat))}
    for t in times:
        coords = np.array([(x, z, t) for z in zs for x in xs])
        fem = None
        if lookup is not None:
            vals = [lookup.get(tuple(np.round(c, 9))) for c in coords]
            if all(v is not None for v in vals):
                fem = np.array(vals)
        tag = f"{model.variable}_t{t:g}".replace(".", "p")
        path = export_csv(model, xi_row, coords, out_dir / f"{tag}.csv",
                          fem_values=fem)
        written.append(str(path))
        if svg:
            pred = model.predict_batch(
                np.asarray(xi_row, float)[None, :model.M], coords)[0]
            grid = pred.reshape(len(zs), len(xs))
            p = svg_heatmap(grid, xs, zs, out_dir / f"{tag}.svg",
                            title=f"{model.variable} at t={t:g}")
            written.append(str(p))
    return written
