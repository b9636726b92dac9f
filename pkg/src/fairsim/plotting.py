"""Plain SVG output: accuracy scatter grids and box plots."""

from __future__ import annotations

import json
import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np
import pandas as pd

from .analysis import BIAS_LABELS, CELL_KEYS, KNN_COLUMNS, EllipseSpec, SchemaError
from .experiment import DIAGNOSTIC_COLUMNS

COLORS = {"full": "#2bb5b0", "anon": "#f08070"}
VIEW_LABELS = {"full": "complete", "anon": "anonymised"}
PANEL = 150
MARGIN = 36
FONT = "font-family='sans-serif'"


def _require(columns, required, what):
    missing = set(required) - set(columns)
    if missing:
        raise SchemaError(f"{what} missing columns: {sorted(missing)}")


def _fmt(v: float) -> str:
    return f"{v:.2f}".rstrip("0").rstrip(".") if v != int(v) else str(int(v))


class _Canvas:
    def __init__(self, width: float, height: float):
        self.width, self.height = width, height
        self.parts: list[str] = []

    def add(self, text: str) -> None:
        self.parts.append(text)

    def text(self, x, y, s, size=10, anchor="middle", rotate=None):
        tr = f" transform='rotate({rotate} {x:.1f} {y:.1f})'" if rotate is not None else ""
        self.add(f"<text x='{x:.1f}' y='{y:.1f}' font-size='{size}' {FONT} "
                 f"text-anchor='{anchor}'{tr}>{escape(str(s))}</text>")

    def render(self) -> str:
        head = (f"<svg xmlns='http://www.w3.org/2000/svg' width='{self.width:.0f}' "
                f"height='{self.height:.0f}' viewBox='0 0 {self.width:.0f} {self.height:.0f}'>")
        return "\n".join([head, "<rect width='100%' height='100%' fill='white'/>",
                          *self.parts, "</svg>"]) + "\n"


def scatter_grid_svg(cells: list[dict], alphas, levels, title: str = "",
                     level_labels=None) -> str:
    """Panels with rows = alpha and columns = bias level, each on [0, 1]^2.

    ``cells`` are entries of ``ellipses.json``; x is perfect-trained accuracy,
    y biased-trained accuracy.
    """
    alphas, levels = list(alphas), list(levels)
    level_labels = level_labels or [_fmt(v) for v in levels]
    w = MARGIN * 2 + PANEL * len(levels) + 10 * (len(levels) - 1)
    h = MARGIN * 2 + 20 + PANEL * len(alphas) + 10 * (len(alphas) - 1)
    cv = _Canvas(w, h)
    if title:
        cv.text(w / 2, 16, title, 12)
    for ri, alpha in enumerate(alphas):
        for ci, level in enumerate(levels):
            x0 = MARGIN + ci * (PANEL + 10)
            y0 = MARGIN + 20 + ri * (PANEL + 10)

            def px(v, x0=x0):
                return x0 + v * PANEL

            def py(v, y0=y0):
                return y0 + (1 - v) * PANEL

            cv.add(f"<g class='panel' data-alpha='{alpha}' data-level='{level}'>")
            cv.add(f"<rect x='{x0}' y='{y0}' width='{PANEL}' height='{PANEL}' "
                   "fill='none' stroke='#888'/>")
            cv.add(f"<line class='identity' x1='{px(0):.1f}' y1='{py(0):.1f}' "
                   f"x2='{px(1):.1f}' y2='{py(1):.1f}' stroke='black' stroke-width='1'/>")
            for cell in cells:
                if not (math.isclose(cell["alpha"], alpha) and math.isclose(cell["bias_level"], level)):
                    continue
                color = COLORS.get(cell["view"], "#555")
                for x, y in cell["points"]:
                    cv.add(f"<circle cx='{px(x):.1f}' cy='{py(y):.1f}' r='1.6' "
                           f"fill='{color}' fill-opacity='0.7'/>")
                if cell.get("ellipse"):
                    e = cell["ellipse"]
                    spec = EllipseSpec(tuple(e["center"]), tuple(e["semi_axes"]), e["rotation"])
                    pts = " ".join(f"{px(a):.1f},{py(b):.1f}" for a, b in spec.outline())
                    cv.add(f"<polygon class='ellipse' points='{pts}' fill='none' "
                           f"stroke='{color}' stroke-width='1.2'/>")
            cv.add("</g>")
            if ri == 0:
                cv.text(x0 + PANEL / 2, y0 - 4, level_labels[ci], 9)
            if ci == 0:
                cv.text(x0 - 8, y0 + PANEL / 2, f"alpha={_fmt(alpha)}", 9, rotate=-90)
    cv.text(w / 2, h - 8, "x: trained on perfect ranking   y: trained on biased ranking", 9)
    lx = w - MARGIN - 150
    for i, (view, color) in enumerate(COLORS.items()):
        cv.add(f"<circle cx='{lx + 90 * i}' cy='{h - 24}' r='3' fill='{color}'/>")
        cv.text(lx + 90 * i + 6, h - 21, VIEW_LABELS[view], 9, anchor="start")
    return cv.render()


def boxplot_svg(panels: list[tuple[str, dict]], title: str = "", n_cols: int = 2,
                ylim=None, ylabel: str = "") -> str:
    """Grid of box plots; each panel maps box labels to value arrays."""
    n_cols = max(1, min(n_cols, len(panels) or 1))
    n_rows = max(1, math.ceil(len(panels) / n_cols))
    pw, ph = 260, 170
    w = MARGIN * 2 + n_cols * pw + 20 * (n_cols - 1)
    h = MARGIN * 2 + 20 + n_rows * (ph + 30)
    cv = _Canvas(w, h)
    if title:
        cv.text(w / 2, 16, title, 12)
    all_vals = [np.asarray(v, float) for _, g in panels for v in g.values() if len(v)]
    if ylim is None:
        lo = min((v.min() for v in all_vals), default=0.0)
        hi = max((v.max() for v in all_vals), default=1.0)
        if hi <= lo:
            hi = lo + 1.0
        ylim = (lo, hi)
    lo, hi = ylim
    for i, (name, groups) in enumerate(panels):
        r, c = divmod(i, n_cols)
        x0 = MARGIN + c * (pw + 20)
        y0 = MARGIN + 20 + r * (ph + 30)

        def py(v, y0=y0):
            v = min(max(v, lo), hi)
            return y0 + (1 - (v - lo) / (hi - lo)) * ph

        cv.add(f"<g class='boxpanel'><rect x='{x0}' y='{y0}' width='{pw}' height='{ph}' "
               "fill='none' stroke='#888'/>")
        cv.text(x0 + pw / 2, y0 - 4, name, 9)
        labels = list(groups)
        step = pw / max(len(labels), 1)
        for j, label in enumerate(labels):
            vals = np.asarray(groups[label], dtype=float)
            vals = vals[np.isfinite(vals)]
            cx = x0 + step * (j + 0.5)
            cv.text(cx, y0 + ph + 11, label, 8)
            if vals.size == 0:
                continue
            q1, med, q3 = np.percentile(vals, [25, 50, 75])
            iqr = q3 - q1
            low = vals[vals >= q1 - 1.5 * iqr].min()
            high = vals[vals <= q3 + 1.5 * iqr].max()
            bw = min(step * 0.6, 24)
            cv.add(f"<line x1='{cx:.1f}' y1='{py(low):.1f}' x2='{cx:.1f}' y2='{py(high):.1f}' stroke='black'/>")
            cv.add(f"<rect class='box' x='{cx - bw / 2:.1f}' y='{py(q3):.1f}' width='{bw:.1f}' "
                   f"height='{max(py(q1) - py(q3), 0.5):.1f}' fill='#d8e8f0' stroke='black'/>")
            cv.add(f"<line x1='{cx - bw / 2:.1f}' y1='{py(med):.1f}' x2='{cx + bw / 2:.1f}' "
                   f"y2='{py(med):.1f}' stroke='black' stroke-width='2'/>")
            for v in vals[(vals < low) | (vals > high)]:
                cv.add(f"<circle cx='{cx:.1f}' cy='{py(v):.1f}' r='1.3' fill='black'/>")
        cv.text(x0 - 4, py(lo) + 3, _fmt(lo), 8, anchor="end")
        cv.text(x0 - 4, py(hi) + 3, _fmt(hi), 8, anchor="end")
        cv.add("</g>")
    if ylabel:
        cv.text(12, h / 2, ylabel, 9, rotate=-90)
    return cv.render()


def _levels(values) -> list[float]:
    return sorted({float(v) for v in values})


def _level_name(level, rejection) -> str:
    if rejection is None or (isinstance(rejection, float) and math.isnan(rejection)):
        return f"mu={_fmt(level)}"
    return f"{100 * rejection:.0f}% rejected"


def plot(summary_dir, out_dir) -> list[Path]:
    """Emit every SVG that the analysis outputs in ``summary_dir`` support."""
    summary_dir, out_dir = Path(summary_dir), Path(out_dir)
    ell_path = summary_dir / "ellipses.json"
    if not ell_path.exists():
        raise SchemaError(f"{ell_path} not found")
    doc = json.loads(ell_path.read_text())
    if "cells" not in doc:
        raise SchemaError("ellipses.json lacks 'cells'")
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    cells = doc["cells"]
    for c in cells:
        _require(c, CELL_KEYS + ("points",), "ellipses.json cell")
    by_group: dict[tuple[str, str], list[dict]] = {}
    for c in cells:
        by_group.setdefault((c["scenario"], c["algorithm"]), []).append(c)
    for (scenario, algorithm), group in sorted(by_group.items()):
        alphas = _levels(c["alpha"] for c in group)
        levels = _levels(c["bias_level"] for c in group)
        rej = {float(c["bias_level"]): c["rejection_prob"] for c in group}
        svg = scatter_grid_svg(group, alphas, levels, f"{algorithm} / {scenario}",
                               [_level_name(v, rej[v]) for v in levels])
        written.append(_write(out_dir / f"scatter_{scenario}_{algorithm}.svg", svg))

    coef_path = summary_dir / "coefficients.csv"
    if coef_path.exists():
        coefs = pd.read_csv(coef_path)
        _require(coefs.columns, DIAGNOSTIC_COLUMNS, "coefficients.csv")
        written.extend(_coefficient_plots(coefs, out_dir))
    knn_path = summary_dir / "knn_L.csv"
    if knn_path.exists():
        knn = pd.read_csv(knn_path)
        _require(knn.columns, KNN_COLUMNS, "knn_L.csv")
        written.extend(_knn_plots(knn, out_dir))
    return written


def _coefficient_plots(coefs: pd.DataFrame, out_dir: Path) -> list[Path]:
    written = []
    coefs = coefs[coefs["label_source"] == "biased"]
    for (scenario, algorithm), g in coefs.groupby(["scenario", "algorithm"], sort=True):
        levels = _levels(g["bias_level"])
        corners = [(BIAS_LABELS[i], levels[i]) for i in sorted(BIAS_LABELS) if i < len(levels)]
        for column, stem, ylim in (("p_value", "pvalues", (0.0, 1.0)),
                                   ("estimate", "coefficients", None)):
            panels = []
            for alpha in _levels(g["alpha"]):
                for view in ("full", "anon"):
                    for name, level in corners:
                        sub = g[(g["alpha"] == alpha) & (g["view"] == view)
                                & np.isclose(g["bias_level"], level)]
                        if sub.empty:
                            continue
                        terms = [t for t in dict.fromkeys(sub["term"]) if t != "intercept"]
                        panels.append((f"alpha={_fmt(alpha)} {VIEW_LABELS[view]} {name} bias",
                                       {t: sub.loc[sub["term"] == t, column].to_numpy()
                                        for t in terms}))
            if panels:
                svg = boxplot_svg(panels, f"{stem} / {algorithm} / {scenario}", n_cols=4,
                                  ylim=ylim, ylabel=column)
                written.append(_write(out_dir / f"{stem}_{scenario}_{algorithm}.svg", svg))
    return written


def _knn_plots(knn: pd.DataFrame, out_dir: Path) -> list[Path]:
    written = []
    for scenario, g in knn.groupby("scenario", sort=True):
        panels = []
        for alpha in _levels(g["alpha"]):
            for view in ("full", "anon"):
                sub = g[(g["alpha"] == alpha) & (g["view"] == view)]
                if sub.empty:
                    continue
                groups = {}
                for level in _levels(sub["bias_level"]):
                    rows = sub[np.isclose(sub["bias_level"], level)]
                    rej = rows["rejection_prob"].iloc[0]
                    label = (f"{100 * rej:.0f}%" if pd.notna(rej) else _fmt(level))
                    groups[label] = rows["L"].to_numpy()
                panels.append((f"alpha={_fmt(alpha)} {VIEW_LABELS[view]}", groups))
        if panels:
            svg = boxplot_svg(panels, f"tuned L / {scenario}", n_cols=2, ylabel="L")
            written.append(_write(out_dir / f"knn_L_{scenario}.svg", svg))
    return written


def _write(path: Path, text: str) -> Path:
    path.write_text(text)
    return path
