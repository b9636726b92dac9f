"""Reductions of benchmark records: accuracy summaries, 95% ellipses,
coefficient tables and tuned-L distributions."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import stats

from .experiment import DIAGNOSTIC_COLUMNS, RESULT_COLUMNS, EvalRecord

CHI2_95 = float(stats.chi2.ppf(0.95, 2))
CELL_KEYS = ("scenario", "alpha", "bias_level", "rejection_prob", "algorithm", "view")
SUMMARY_COLUMNS = CELL_KEYS + ("n", "n_failed", "mean_acc_perfect", "sd_acc_perfect",
                               "mean_acc_biased", "sd_acc_biased")
KNN_COLUMNS = ("scenario", "alpha", "bias_level", "rejection_prob", "view", "replicate", "L")


class SchemaError(ValueError):
    """An input table lacks required columns or keys."""


# Named corners of the coefficient figures, by index into the bias grid.
BIAS_LABELS = {1: "weak", 4: "strong"}


@dataclass(frozen=True)
class EllipseSpec:
    center: tuple[float, float]
    semi_axes: tuple[float, float]
    rotation: float

    def contains(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float)) - np.asarray(self.center)
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        u = pts[:, 0] * c + pts[:, 1] * s
        v = -pts[:, 0] * s + pts[:, 1] * c
        a, b = self.semi_axes
        return (u / a) ** 2 + (v / b) ** 2 <= 1.0

    def outline(self, n: int = 64) -> np.ndarray:
        t = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
        a, b = self.semi_axes
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        u, v = a * np.cos(t), b * np.sin(t)
        return np.column_stack([self.center[0] + u * c - v * s,
                                self.center[1] + u * s + v * c])


def ellipse_95(points) -> EllipseSpec:
    """Gaussian 95% region from the sample mean and covariance.

    Semi-axes are ``sqrt(chi2_2(0.95) * eigenvalue)``, major axis first;
    ``rotation`` is the major axis angle in ``(-pi/2, pi/2]``.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be an (n, 2) array")
    if pts.shape[0] < 3:
        raise ValueError("need at least 3 points")
    cov = np.cov(pts, rowvar=False)
    vals, vecs = np.linalg.eigh(cov)
    scale = max(float(vals[-1]), 0.0)
    if not np.all(np.isfinite(vals)) or vals[0] <= 1e-12 * max(scale, 1e-300):
        raise ValueError("collinear points: covariance is singular")
    major = vecs[:, 1]
    angle = math.atan2(major[1], major[0])
    if angle <= -math.pi / 2:
        angle += math.pi
    elif angle > math.pi / 2:
        angle -= math.pi
    center = pts.mean(axis=0)
    return EllipseSpec((float(center[0]), float(center[1])),
                       (math.sqrt(CHI2_95 * vals[1]), math.sqrt(CHI2_95 * vals[0])), angle)


@dataclass(frozen=True)
class SummaryCell:
    scenario: str
    alpha: float
    bias_level: float
    rejection_prob: float | None
    algorithm: str
    view: str
    n: int
    n_failed: int
    mean_acc_perfect: float
    sd_acc_perfect: float
    mean_acc_biased: float
    sd_acc_biased: float
    ellipse: EllipseSpec | None
    points: tuple[tuple[float, float], ...]

    def key(self) -> tuple:
        return tuple(getattr(self, k) for k in CELL_KEYS)


def records_frame(records) -> pd.DataFrame:
    if isinstance(records, pd.DataFrame):
        return records.copy()
    rows = [{k: getattr(r, k) for k in RESULT_COLUMNS} for r in records]
    return pd.DataFrame(rows, columns=list(RESULT_COLUMNS))


def read_results(path) -> pd.DataFrame:
    df = pd.read_csv(path, dtype={"scenario": str, "algorithm": str, "view": str,
                                  "converged": str})
    missing = set(RESULT_COLUMNS) - set(df.columns)
    if missing:
        raise SchemaError(f"results file missing columns: {sorted(missing)}")
    df["converged"] = df["converged"].astype(str).str.lower() == "true"
    return df


def _sd(values: np.ndarray) -> float:
    return float(np.std(values, ddof=1)) if values.size > 1 else math.nan


def summarize(records) -> list[SummaryCell]:
    """One cell per (scenario, alpha, bias level, algorithm, view).

    Failed replicates (missing accuracies) are counted but not averaged.
    """
    df = records_frame(records)
    if df.empty:
        return []
    df["rejection_prob"] = df["rejection_prob"].astype(float)
    out = []
    keyed = df.assign(_rej=df["rejection_prob"].fillna(-1.0))
    group_cols = ["scenario", "alpha", "bias_level", "_rej", "algorithm", "view"]
    for key, g in keyed.groupby(group_cols, sort=True, dropna=False):
        ok = g.dropna(subset=["acc_perfect", "acc_biased"])
        pts = ok[["acc_perfect", "acc_biased"]].to_numpy(dtype=float)
        ellipse = None
        if len(pts) >= 3:
            try:
                ellipse = ellipse_95(pts)
            except ValueError:
                ellipse = None
        scenario, alpha, level, rej, algorithm, view = key
        out.append(SummaryCell(
            scenario, float(alpha), float(level), None if rej < 0 else float(rej),
            algorithm, view, int(len(g)), int(len(g) - len(ok)),
            float(pts[:, 0].mean()) if len(pts) else math.nan, _sd(pts[:, 0]),
            float(pts[:, 1].mean()) if len(pts) else math.nan, _sd(pts[:, 1]),
            ellipse, tuple(map(tuple, pts.tolist()))))
    return out


def summary_frame(cells) -> pd.DataFrame:
    rows = [{k: getattr(c, k) for k in SUMMARY_COLUMNS} for c in cells]
    return pd.DataFrame(rows, columns=list(SUMMARY_COLUMNS))


def coefficient_tables(diagnostics) -> pd.DataFrame:
    """Long table, one row per (cell, label source, replicate, term)."""
    if isinstance(diagnostics, (str, Path)):
        df = pd.read_csv(diagnostics)
    elif isinstance(diagnostics, pd.DataFrame):
        df = diagnostics.copy()
    else:
        df = pd.DataFrame(list(diagnostics), columns=list(DIAGNOSTIC_COLUMNS))
    missing = set(DIAGNOSTIC_COLUMNS) - set(df.columns)
    if missing:
        raise SchemaError(f"diagnostics missing columns: {sorted(missing)}")
    for col in ("alpha", "bias_level", "rejection_prob", "estimate", "std_error", "p_value"):
        df[col] = pd.to_numeric(df[col], errors="coerce")
    df["replicate"] = df["replicate"].astype(int)
    df["converged"] = df["converged"].astype(str).str.lower() == "true"
    return df[list(DIAGNOSTIC_COLUMNS)].reset_index(drop=True)


def rejection_rates(coefs: pd.DataFrame, level: float = 0.05) -> pd.DataFrame:
    """Share of replicates with ``p < level`` per cell, label source and term."""
    cols = ["scenario", "alpha", "bias_level", "algorithm", "view", "label_source",
            "term", "block"]
    if coefs.empty:
        return pd.DataFrame(columns=cols + ["n", "rate"])
    valid = coefs.dropna(subset=["p_value"])
    out = (valid.assign(hit=valid["p_value"] < level)
           .groupby(cols, sort=True)["hit"].agg(["size", "mean"]).reset_index())
    return out.rename(columns={"size": "n", "mean": "rate"})


def knn_L_table(records) -> pd.DataFrame:
    df = records_frame(records)
    df = df[(df["algorithm"] == "knn") & df["hyperparam"].notna()]
    if df.empty:
        return pd.DataFrame(columns=list(KNN_COLUMNS))
    out = df.rename(columns={"hyperparam": "L"})[list(KNN_COLUMNS)].copy()
    out["L"] = out["L"].astype(int)
    return out.sort_values(["scenario", "alpha", "bias_level", "view", "replicate"]
                           ).reset_index(drop=True)


def ellipses_document(cells) -> dict:
    items = []
    for c in cells:
        items.append({
            **{k: getattr(c, k) for k in CELL_KEYS},
            "n": c.n,
            "ellipse": None if c.ellipse is None else {
                "center": list(c.ellipse.center), "semi_axes": list(c.ellipse.semi_axes),
                "rotation": c.ellipse.rotation},
            "points": [list(p) for p in c.points],
        })
    return {"version": 1, "chi2_quantile": CHI2_95,
            "axes": {"x": "acc_perfect", "y": "acc_biased"}, "cells": items}


def _write_csv(df: pd.DataFrame, path: Path) -> None:
    df.to_csv(path, index=False, lineterminator="\n", float_format="%.10g")


def analyze(results_path, out_dir, diagnostics_path=None) -> dict[str, Path]:
    """Write summary.csv, coefficients.csv, knn_L.csv and ellipses.json."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = read_results(results_path)
    cells = summarize(records)
    if diagnostics_path is None:
        candidate = Path(results_path).with_name("diagnostics.csv")
        diagnostics_path = candidate if candidate.exists() else None
    coefs = (coefficient_tables(diagnostics_path) if diagnostics_path is not None
             else pd.DataFrame(columns=list(DIAGNOSTIC_COLUMNS)))
    paths = {name: out_dir / name for name in
             ("summary.csv", "coefficients.csv", "knn_L.csv", "ellipses.json")}
    _write_csv(summary_frame(cells), paths["summary.csv"])
    _write_csv(coefs, paths["coefficients.csv"])
    _write_csv(knn_L_table(records), paths["knn_L.csv"])
    doc = ellipses_document(cells)
    paths["ellipses.json"].write_text(json.dumps(doc, indent=1, allow_nan=False,
                                                 default=_json_default) + "\n")
    return paths


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"cannot serialise {type(obj).__name__}")
