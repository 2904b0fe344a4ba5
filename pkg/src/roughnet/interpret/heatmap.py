"""Aggregation of attributions onto the strike x maturity grid, and their files.

A heat map holds, for each grid cell, the mean over instances of |phi| for that
feature. Rankings sort cells by that value (ties broken by feature index).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from html import escape
from pathlib import Path

import numpy as np

from roughnet.errors import IOFailure, ParseError, ValidationError
from roughnet.pricer.params import PARAM_NAMES, SmileGrid

OVERALL = "overall"


@dataclass
class HeatMap:
    method: str
    output: str  # parameter name, or "overall"
    values: np.ndarray  # (n_strikes, n_maturities)
    n_instances: int
    grid: SmileGrid = SmileGrid()

    def __post_init__(self):
        self.values = np.asarray(self.values, float)
        if self.values.shape != self.grid.shape:
            raise ValidationError(f"heat map shape {self.values.shape} does not match grid {self.grid.shape}")
        if np.any(self.values < 0):
            raise ValidationError("heat map entries must be nonnegative")

    def ranking(self):
        """[(strike, maturity, value)] in decreasing order of value."""
        flat = self.values.ravel()
        order = np.lexsort((np.arange(flat.size), -flat))
        cells = self.grid.cells()
        return [(cells[i][0], cells[i][1], float(flat[i])) for i in order]

    def top(self, n=1):
        return [(k, t) for k, t, _ in self.ranking()[:n]]


def aggregate_heatmap(results, grid: SmileGrid = SmileGrid()) -> HeatMap:
    """Mean |phi| per cell over results sharing one method and one output."""
    results = list(results)
    if not results:
        raise ValidationError("no attributions to aggregate")
    methods = {r.method for r in results}
    outputs = {r.output for r in results}
    if len(methods) > 1 or len(outputs) > 1:
        raise ValidationError(f"cannot aggregate mixed attributions: methods {sorted(methods)}, "
                              f"outputs {sorted(outputs)}")
    phi = np.array([r.phi for r in results])
    if phi.shape[1] != grid.size:
        raise ValidationError(f"attributions have {phi.shape[1]} features, grid has {grid.size}")
    vals = np.abs(phi).mean(axis=0).reshape(grid.shape)
    return HeatMap(results[0].method, PARAM_NAMES[results[0].output], vals, len(results), grid)


def overall_heatmap(maps) -> HeatMap:
    """Sum of per-output maps of one method, as in a stacked SHAP summary plot."""
    maps = list(maps)
    if not maps:
        raise ValidationError("no heat maps to combine")
    if len({m.method for m in maps}) > 1:
        raise ValidationError("cannot combine heat maps of different methods")
    return HeatMap(maps[0].method, OVERALL, sum(m.values for m in maps), maps[0].n_instances, maps[0].grid)


def _write(path, write):
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            write(fh)
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}") from exc


def write_attributions(results, path, grid: SmileGrid = SmileGrid()):
    def body(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "output_param", "instance", "phi_0", "prediction"] + grid.cell_labels())
        for r in results:
            base = "" if r.base is None else repr(float(r.base))
            w.writerow([r.method, r.output_name, r.instance, base, repr(float(r.prediction))]
                       + [repr(float(v)) for v in r.phi])
    _write(path, body)


def write_heatmap_csv(hm: HeatMap, path):
    def body(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["K\\T"] + [repr(float(t)) for t in hm.grid.maturities])
        for k, row in zip(hm.grid.strikes, hm.values):
            w.writerow([repr(float(k))] + [repr(float(v)) for v in row])
    _write(path, body)


def write_ranking_csv(hm: HeatMap, path):
    def body(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "K", "T", "mean_abs_attribution"])
        for i, (k, t, v) in enumerate(hm.ranking(), start=1):
            w.writerow([i, repr(float(k)), repr(float(t)), repr(v)])
    _write(path, body)


def _colour(frac):
    """White for 0 through to dark red for 1 (monotone in every channel)."""
    frac = min(max(frac, 0.0), 1.0)
    r = round(255 - 115 * frac)
    g = round(255 - 255 * frac)
    b = round(255 - 255 * frac)
    return f"#{r:02x}{g:02x}{b:02x}"


def heatmap_svg(hm: HeatMap, title=None, cell=48) -> str:
    """Standalone SVG: strikes down the rows, maturities across the columns."""
    nk, nt = hm.values.shape
    left, top, legend = 70, 50, 40
    width = left + nt * cell + legend + 60
    height = top + nk * cell + 50
    vmax = float(hm.values.max())
    title = title or f"{hm.method} attributions, {hm.output} (n={hm.n_instances})"
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<text x="{left}" y="20" font-size="13">{escape(title)}</text>',
    ]
    for a, k in enumerate(hm.grid.strikes):
        y = top + a * cell
        parts.append(f'<text x="{left - 8}" y="{y + cell / 2 + 4}" text-anchor="end">K={k:g}</text>')
        for b in range(nt):
            v = hm.values[a, b]
            frac = v / vmax if vmax > 0 else 0.0
            parts.append(f'<rect class="cell" x="{left + b * cell}" y="{y}" width="{cell}" height="{cell}" '
                         f'fill="{_colour(frac)}" stroke="#999" stroke-width="0.5">'
                         f'<title>K={k:g}, T={hm.grid.maturities[b]:g}: {v:.4g}</title></rect>')
    for b, t in enumerate(hm.grid.maturities):
        parts.append(f'<text x="{left + b * cell + cell / 2}" y="{top + nk * cell + 16}" '
                     f'text-anchor="middle">T={t:g}</text>')
    lx = left + nt * cell + 20
    for s in range(10):
        parts.append(f'<rect x="{lx}" y="{top + (9 - s) * nk * cell / 10}" width="14" '
                     f'height="{nk * cell / 10}" fill="{_colour(s / 9)}"/>')
    parts.append(f'<text x="{lx + 18}" y="{top + 8}">{vmax:.3g}</text>')
    parts.append(f'<text x="{lx + 18}" y="{top + nk * cell}">0</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_heatmap_svg(hm: HeatMap, path, title=None):
    _write(path, lambda fh: fh.write(heatmap_svg(hm, title)))


def read_heatmap_csv(path, method="", output="") -> HeatMap:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise IOFailure(f"cannot read heat map {path}: {exc}") from exc
    try:
        mats = [float(t) for t in rows[0][1:]]
        strikes = [float(r[0]) for r in rows[1:]]
        vals = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    except (IndexError, ValueError) as exc:
        raise ParseError(f"malformed heat map {path}: {exc}")
    return HeatMap(method, output, vals, 0, SmileGrid(strikes, mats))
