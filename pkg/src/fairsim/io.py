"""On-disk formats for datasets, fitted models and coefficient tables."""

from __future__ import annotations

import io as _io
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .models import KNNModel, LogisticFit, MLPWeights, SelectedLogistic, SVMSolution
from .simgen import LABEL_SOURCES, VIEWS, DatasetBundle, ScenarioConfig
from .table import TrainingTable, block_names

FORMAT_VERSION = 1
COEF_COLUMNS = ("term", "estimate", "std_error", "p_value")


def _numeric_csv(path: Path, header: list[str], columns: list[np.ndarray], int_cols: set[int]):
    data = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    fmt = ["%d" if i in int_cols else "%.17g" for i in range(len(header))]
    buf = _io.StringIO()
    np.savetxt(buf, data, fmt=fmt, delimiter=",", header=",".join(header), comments="")
    path.write_text(buf.getvalue())


def write_table(table: TrainingTable, path) -> Path:
    """``method_id,candidate_id,<features>,w``, one row per candidate."""
    path = Path(path)
    n = table.n_rows
    mids = table.method_ids if table.method_ids is not None else np.arange(n)
    cids = table.candidate_ids if table.candidate_ids is not None else np.zeros(n, int)
    header = ["method_id", "candidate_id", *table.feature_names, "w"]
    cols = [mids, cids, *table.features.T, table.labels]
    _numeric_csv(path, header, cols, {0, 1, len(header) - 1})
    return path


def read_table(path) -> TrainingTable:
    path = Path(path)
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    if header[:2] != ["method_id", "candidate_id"] or header[-1] != "w":
        raise ValueError(f"{path}: unexpected header {header}")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return TrainingTable(data[:, 2:-1], data[:, -1].astype(np.int8), tuple(header[2:-1]),
                         data[:, 0].astype(np.int64), data[:, 1].astype(np.int64))


def write_bundle(bundle: DatasetBundle, out_dir) -> dict[str, Path]:
    """Write the four training views, the test methods and a JSON sidecar."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = {}
    for view in VIEWS:
        for source in LABEL_SOURCES:
            name = f"train_{view}_{source}.csv"
            files[name] = write_table(bundle.table(view, source), out_dir / name)

    cfg = bundle.config
    test = bundle.test
    m, nd, k = test.X.shape
    feats = test.features("full").reshape(m * nd, -1)
    header = ["method_id", "candidate_id", *block_names(k, "xyz"), "rank_perfect", "w"]
    cols = [np.repeat(np.arange(m), nd), np.tile(np.arange(nd), m), *feats.T,
            test.rank_perfect.reshape(-1), test.success_perfect.reshape(-1)]
    files["test.csv"] = out_dir / "test.csv"
    _numeric_csv(files["test.csv"], header, cols, {0, 1, len(header) - 2, len(header) - 1})

    sidecar = {
        "format_version": FORMAT_VERSION,
        "code_version": __version__,
        "config": config_dict(cfg),
        "seed": int(cfg.master_seed),
        "layout": "method-major, candidate-minor, feature-innermost",
        "files": sorted(files),
    }
    files["dataset.json"] = out_dir / "dataset.json"
    files["dataset.json"].write_text(json.dumps(sidecar, indent=2) + "\n")
    return files


def config_dict(cfg: ScenarioConfig) -> dict:
    d = asdict(cfg)
    d["scenario"] = cfg.scenario.value
    return d


def _arr(a):
    return None if a is None else np.asarray(a, dtype=float).tolist()


def _nan_to_none(obj):
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    if isinstance(obj, list):
        return [_nan_to_none(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _nan_to_none(v) for k, v in obj.items()}
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return _nan_to_none(float(obj))
    if isinstance(obj, np.ndarray):
        return _nan_to_none(obj.tolist())
    if isinstance(obj, tuple):
        return [_nan_to_none(v) for v in obj]
    return obj


def model_to_dict(model, include_training_rows: bool = False) -> dict:
    """JSON-ready description of a ``FittedModel`` (NaN becomes null)."""
    p = model.payload
    if isinstance(p, LogisticFit):
        params = {"terms": list(p.terms), "beta": _arr(p.beta),
                  "std_errors": _arr(p.std_errors), "p_values": _arr(p.p_values),
                  "log_likelihood": p.log_likelihood, "iterations": p.n_iter}
    elif isinstance(p, SelectedLogistic):
        est, se, pv = p.full_coefficients()
        params = {"mask": np.asarray(p.mask, bool).tolist(), "aic": p.aic,
                  "terms": list(p.terms), "selected_beta": _arr(p.fit.beta),
                  "beta": _arr(est), "std_errors": _arr(se), "p_values": _arr(pv),
                  "log_likelihood": p.fit.log_likelihood}
    elif isinstance(p, KNNModel):
        params = {"L": int(p.L), "n_rows": int(p.features.shape[0]),
                  "cv_errors": _arr(p.cv_errors)}
        if include_training_rows:
            params["features"] = _arr(p.features)
            params["labels"] = _arr(p.labels)
    elif isinstance(p, MLPWeights):
        params = {"W1": _arr(p.W1), "b1": _arr(p.b1), "w2": _arr(p.w2), "b2": float(p.b2),
                  "loss": p.loss, "iterations": p.n_iter}
    elif isinstance(p, SVMSolution):
        params = {"kernel": p.kernel_name, "C": p.C, "w": _arr(p.w), "bias": p.bias,
                  "n_support": int(len(p.support)), "kkt_gap": p.kkt_gap,
                  "iterations": p.n_iter, "dual_objective": p.dual_objective,
                  "primal_objective": p.primal_objective}
    else:
        params = {}
    return _nan_to_none({
        "format_version": FORMAT_VERSION,
        "kind": model.kind,
        "hyperparameters": dict(model.hyperparams),
        "converged": bool(model.converged),
        "parameters": params,
        "tuning_report": dict(model.tuning_report),
    })


def write_model(model, path, **kw) -> Path:
    path = Path(path)
    path.write_text(json.dumps(model_to_dict(model, **kw), indent=1, allow_nan=False) + "\n")
    return path


def coefficient_rows(model) -> list[tuple[str, float, float, float]]:
    p = model.payload
    if isinstance(p, LogisticFit):
        return list(zip(p.terms, p.beta, p.std_errors, p.p_values))
    if isinstance(p, SelectedLogistic):
        est, se, pv = p.full_coefficients()
        return list(zip(p.terms, est, se, pv))
    raise ValueError(f"{model.kind} has no coefficient table")


def write_coefficients(model, path) -> Path:
    """``term,estimate,std_error,p_value``; missing values are left blank."""
    path = Path(path)
    lines = [",".join(COEF_COLUMNS)]
    for term, e, s, p in coefficient_rows(model):
        lines.append(",".join([term] + ["" if not np.isfinite(v) else repr(float(v))
                                        for v in (e, s, p)]))
    path.write_text("\n".join(lines) + "\n")
    return path
