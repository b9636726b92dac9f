"""Hyperparameter-range calibration on perfect-ranking data.

Each protocol fits a growing grid on many simulated training tables: when the
chosen value sits on the upper edge of the grid, the upper bound is doubled
and the search rerun.
"""

from __future__ import annotations

import csv
from collections import Counter
from pathlib import Path

import numpy as np

from . import rng as rngmod
from .experiment import ExperimentPlan
from .models import kernel_cv_errors, tune_knn, tune_mlp
from .models.svm import KERNELS
from .simgen import VIEWS, assemble_dataset, gen_base

CALIBRATION_KINDS = ("knn", "mlp", "svm-kernel")
KNN_START = 5
MLP_START = 3
MLP_DECAYS = tuple(round(0.1 * i, 1) for i in range(9))
_TAG = {"knn": 0, "mlp": 1, "svm-kernel": 2}


def calibration_tables(plan: ExperimentPlan, n_datasets: int):
    """Yield ``(scenario, alpha, view, dataset, table)`` with perfect labels."""
    for scenario in plan.scenarios:
        levels, _ = plan.levels(scenario)
        for alpha in plan.alphas:
            for d in range(n_datasets):
                cfg = plan.scenario_config(scenario, alpha, float(levels[0]), d)
                base = gen_base(cfg, cfg.n_train, rngmod.TRAIN)
                bundle = assemble_dataset(cfg, base, base)  # test split unused here
                for view in plan.views:
                    yield scenario, alpha, view, d, cfg.master_seed, bundle.table(view, "perfect")


def _grow(fit, start: int, limit: int):
    upper = start
    while True:
        model = fit(upper)
        chosen = model.hyperparam
        if chosen < upper or upper >= limit:
            return model, upper
        upper = min(2 * upper, limit)


def calibrate_knn_one(table, rng_seed, start=KNN_START):
    def fit(upper):
        rng = np.random.default_rng(rng_seed)
        return tune_knn(table, range(1, upper + 1), rng)

    model, upper = _grow(fit, start, table.n_rows - table.n_rows // 10 - 1)
    return {"L": model.hyperparam, "cv_error": model.tuning_report["cv_error"],
            "upper": upper}


def calibrate_mlp_one(table, rng_seed, start=MLP_START, decays=MLP_DECAYS, max_iter=500):
    def fit(upper):
        rng = np.random.default_rng(rng_seed)
        return tune_mlp(table, range(1, upper + 1), decays, rng, max_iter=max_iter)

    model, upper = _grow(fit, start, 64)
    return {"size": model.hyperparams["size"], "decay": model.hyperparams["decay"],
            "cv_error": model.tuning_report["cv_error"], "upper": upper}


def calibrate_svm_one(table, rng_seed, kernels=KERNELS, C=1.0):
    errors = kernel_cv_errors(table, np.random.default_rng(rng_seed), kernels, C)
    errs = np.array([errors[k] for k in kernels])
    out = {"kernel": kernels[int(np.argmin(errs))]}
    out.update({f"cv_error_{k}": float(errors[k]) for k in kernels})
    return out


def calibrate(kind: str, plan: ExperimentPlan, n_datasets: int = 100, progress=None):
    """Run one protocol; returns a list of row dicts."""
    if kind not in CALIBRATION_KINDS:
        raise ValueError(f"unknown calibration kind {kind!r}")
    one = {"knn": calibrate_knn_one, "mlp": calibrate_mlp_one,
           "svm-kernel": calibrate_svm_one}[kind]
    rows = []
    for scenario, alpha, view, d, seed, table in calibration_tables(plan, n_datasets):
        rng_seed = [seed, rngmod.MODEL, 100 + _TAG[kind], VIEWS.index(view)]
        kw = {"C": plan.svm_cost} if kind == "svm-kernel" else {}
        row = {"scenario": scenario, "alpha": alpha, "view": view, "dataset": d,
               **one(table, rng_seed, **kw)}
        rows.append(row)
        if progress is not None:
            progress(row)
    return rows


def summarize_calibration(kind: str, rows) -> dict:
    if not rows:
        return {"kind": kind, "n": 0}
    if kind == "svm-kernel":
        counts = Counter(r["kernel"] for r in rows)
        return {"kind": kind, "n": len(rows),
                "wins": {k: counts.get(k, 0) for k in KERNELS},
                "modal": counts.most_common(1)[0][0]}
    key = "L" if kind == "knn" else "size"
    values = np.array([r[key] for r in rows], dtype=float)
    out = {"kind": kind, "n": len(rows), key: _describe(values)}
    if kind == "mlp":
        decays = Counter(r["decay"] for r in rows)
        out["decay"] = {"counts": {str(k): v for k, v in sorted(decays.items())},
                        "modal": decays.most_common(1)[0][0]}
    return out


def _describe(values: np.ndarray) -> dict:
    q = np.percentile(values, [5, 25, 50, 75, 95])
    return {"min": float(values.min()), "max": float(values.max()),
            "quantiles": dict(zip(("5", "25", "50", "75", "95"), map(float, q)))}


def write_calibration(kind: str, rows, out_dir) -> tuple[Path, dict]:
    import json

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = kind.replace("-", "_")
    csv_path = out_dir / f"calibration_{stem}.csv"
    if rows:
        with open(csv_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, list(rows[0]), lineterminator="\n")
            writer.writeheader()
            writer.writerows(rows)
    else:
        csv_path.write_text("")
    summary = summarize_calibration(kind, rows)
    (out_dir / f"calibration_{stem}.json").write_text(json.dumps(summary, indent=2) + "\n")
    return csv_path, summary
