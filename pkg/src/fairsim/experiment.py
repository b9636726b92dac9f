"""Factorial benchmark: scenarios x alpha x bias level x view x algorithm x replicate.

All bias levels and views of one (scenario, alpha, replicate) share the same
base draws, so a replicate is the unit of work: its base randomness is
generated once and every requested cell is evaluated on top of it.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from . import rng as rngmod
from .models import (
    ConstantModel,
    FittedModel,
    fit_logistic,
    fit_svm_linear,
    rank_candidates,
    stepwise_aic,
    tune_knn,
    tune_mlp,
)
from .simgen import (
    LABEL_SOURCES,
    TIE_POLICIES,
    VIEWS,
    Scenario,
    ScenarioConfig,
    assemble_dataset,
    bias_levels,
    gen_base,
    self_censored_features,
)

log = logging.getLogger(__name__)

ALGORITHMS = ("logistic", "logistic_aic", "svm", "mlp", "knn")
SCENARIOS = tuple(s.value for s in Scenario)
RESULT_COLUMNS = ("scenario", "alpha", "bias_level", "rejection_prob", "algorithm", "view",
                  "replicate", "acc_perfect", "acc_biased", "hyperparam", "converged")
DIAGNOSTIC_COLUMNS = ("scenario", "alpha", "bias_level", "rejection_prob", "algorithm",
                      "view", "label_source", "replicate", "term", "block", "estimate",
                      "std_error", "p_value", "converged")


@dataclass(frozen=True)
class ExperimentPlan:
    scenarios: tuple[str, ...] = SCENARIOS
    alphas: tuple[float, ...] = (0.2, 0.5, 0.8)
    mu_levels: tuple[float, ...] = (0.4, 0.8, 1.2, 1.6, 2.0)
    algorithms: tuple[str, ...] = ALGORITHMS
    views: tuple[str, ...] = VIEWS
    replicates: int = 100
    n_train: int = 5000
    n_test: int | None = None
    n_candidates: int = 5
    n_features: int = 5
    master_seed: int = 2024
    svm_cost: float = 1.0
    knn_max_L: int = 70
    mlp_max_size: int = 10
    sc_test_features: str = "unbiased"
    censored_ties: str = "objective"

    def __post_init__(self):
        for name in ("scenarios", "alphas", "mu_levels", "algorithms", "views"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        object.__setattr__(self, "scenarios", tuple(Scenario(s).value for s in self.scenarios))
        bad = set(self.algorithms) - set(ALGORITHMS)
        if bad:
            raise ValueError(f"unknown algorithms: {sorted(bad)}")
        bad = set(self.views) - set(VIEWS)
        if bad:
            raise ValueError(f"unknown views: {sorted(bad)}")
        if self.replicates < 1:
            raise ValueError("replicates must be positive")
        if self.n_test is None:
            object.__setattr__(self, "n_test", max(1, self.n_train // 10))
        if self.sc_test_features not in ("unbiased", "depreciated"):
            raise ValueError("sc_test_features must be 'unbiased' or 'depreciated'")
        if self.censored_ties not in TIE_POLICIES:
            raise ValueError(f"censored_ties must be one of {TIE_POLICIES}")
        for a in self.alphas:
            if not 0 <= a < 1:
                raise ValueError(f"alpha {a} outside [0, 1)")
        if any(mu <= 0 for mu in self.mu_levels):
            raise ValueError("mu levels must be > 0")

    @classmethod
    def preset(cls, name: str, **overrides) -> "ExperimentPlan":
        if name == "paper":
            base = cls()
        elif name == "desk":
            base = cls(n_train=1000, replicates=20)
        else:
            raise ValueError(f"unknown preset {name!r}")
        return replace(base, **overrides) if overrides else base

    def levels(self, scenario: str):
        return bias_levels(Scenario(scenario), self.n_features, self.mu_levels)

    def cells(self) -> list["Cell"]:
        out = []
        for scenario in self.scenarios:
            values, probs = self.levels(scenario)
            for alpha in self.alphas:
                for b, level in enumerate(values):
                    rej = None if probs is None else float(probs[b])
                    for algorithm in self.algorithms:
                        for view in self.views:
                            out.append(Cell(scenario, float(alpha), b, float(level), rej,
                                            algorithm, view))
        return out

    def scenario_config(self, scenario: str, alpha: float, bias_param: float,
                        replicate_id: int) -> ScenarioConfig:
        seed = rngmod.replicate_seed(self.master_seed, scenario, alpha, replicate_id)
        return ScenarioConfig(scenario, alpha, bias_param, self.n_train, self.n_test,
                              self.n_candidates, self.n_features, seed, self.censored_ties)


@dataclass(frozen=True)
class Cell:
    scenario: str
    alpha: float
    bias_index: int
    bias_level: float
    rejection_prob: float | None
    algorithm: str
    view: str

    def matches(self, **filters) -> bool:
        for key, want in filters.items():
            have = getattr(self, key)
            if isinstance(have, float):
                if not math.isclose(have, float(want), rel_tol=1e-9, abs_tol=1e-12):
                    return False
            elif str(have) != str(want):
                return False
        return True

    def sort_key(self):
        return (SCENARIOS.index(self.scenario), self.alpha, self.bias_index,
                ALGORITHMS.index(self.algorithm), VIEWS.index(self.view))


@dataclass
class EvalRecord:
    scenario: str
    alpha: float
    bias_level: float
    rejection_prob: float | None
    algorithm: str
    view: str
    replicate: int
    acc_perfect: float
    acc_biased: float
    hyperparam: float | None = None
    converged: bool = True
    bias_index: int = 0
    hyperparam_perfect: float | None = None
    error: str = ""

    def sort_key(self):
        return (SCENARIOS.index(self.scenario), self.alpha, self.bias_index,
                ALGORITHMS.index(self.algorithm), VIEWS.index(self.view), self.replicate)

    def row(self) -> dict:
        return {
            "scenario": self.scenario,
            "alpha": _fmt(self.alpha),
            "bias_level": _fmt(self.bias_level),
            "rejection_prob": _fmt(self.rejection_prob),
            "algorithm": self.algorithm,
            "view": self.view,
            "replicate": self.replicate,
            "acc_perfect": _fmt(self.acc_perfect),
            "acc_biased": _fmt(self.acc_biased),
            "hyperparam": _fmt(self.hyperparam),
            "converged": str(bool(self.converged)).lower(),
        }


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    value = float(value)
    if math.isnan(value):
        return ""
    return repr(value)


def fit_algorithm(algorithm: str, table, rng, plan: ExperimentPlan) -> FittedModel:
    if algorithm == "logistic":
        fit = fit_logistic(table)
        return FittedModel("logistic", fit, converged=fit.converged)
    if algorithm == "logistic_aic":
        sel = stepwise_aic(table)
        return FittedModel("logistic_aic", sel, {"n_selected": int(sel.mask.sum())},
                           {"path": [list(step) for step in sel.path]},
                           converged=sel.fit.converged)
    if algorithm == "knn":
        return tune_knn(table, range(1, plan.knn_max_L + 1), rng)
    if algorithm == "mlp":
        return tune_mlp(table, range(1, plan.mlp_max_size + 1), (0.0,), rng)
    if algorithm == "svm":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return fit_svm_linear(table, C=plan.svm_cost)
    if algorithm == "constant":
        return FittedModel("constant", ConstantModel(table.width))
    raise ValueError(f"unknown algorithm {algorithm!r}")


def top1_accuracy(ranks: np.ndarray, rank_perfect: np.ndarray) -> float:
    """Share of methods whose predicted winner is the perfect-ranking winner."""
    hit = ((ranks == 1) & (rank_perfect == 1)).any(axis=-1)
    return float(hit.mean())


def _coef_rows(model: FittedModel, names, cell: Cell, label_source: str, replicate: int):
    if model.kind == "logistic":
        fit = model.payload
        est, se, pv = fit.beta, fit.std_errors, fit.p_values
    elif model.kind == "logistic_aic":
        est, se, pv = model.payload.full_coefficients()
    else:
        return []
    terms = ("intercept",) + tuple(names)
    rows = []
    for term, e, s, p in zip(terms, est, se, pv):
        rows.append({
            "scenario": cell.scenario, "alpha": _fmt(cell.alpha),
            "bias_level": _fmt(cell.bias_level), "rejection_prob": _fmt(cell.rejection_prob),
            "algorithm": cell.algorithm, "view": cell.view, "label_source": label_source,
            "replicate": replicate, "term": term,
            "block": "intercept" if term == "intercept" else term[0],
            "estimate": _fmt(e), "std_error": _fmt(s), "p_value": _fmt(p),
            "converged": str(bool(model.converged)).lower(),
        })
    return rows


def run_replicate(plan: ExperimentPlan, scenario: str, alpha: float, replicate: int,
                  cells=None):
    """Evaluate ``cells`` (default: all cells of this scenario/alpha) on one replicate.

    Returns ``(records, coefficient_rows)``.
    """
    if cells is None:
        cells = [c for c in plan.cells() if c.scenario == scenario and c.alpha == alpha]
    cells = sorted(cells, key=Cell.sort_key)
    if not cells:
        return [], []
    first = cells[0]
    cfg = plan.scenario_config(scenario, alpha, first.bias_level, replicate)
    seed = cfg.master_seed
    base = gen_base(cfg, cfg.n_train, rngmod.TRAIN)
    test_base = gen_base(cfg, cfg.n_test, rngmod.TEST)
    depreciated_test = (plan.sc_test_features == "depreciated"
                        and Scenario(scenario) is Scenario.SELF_CENSORSHIP)

    perfect_cache: dict[tuple[str, str], tuple] = {}
    records, coefs = [], []
    for cell in cells:
        a_idx = ALGORITHMS.index(cell.algorithm)
        v_idx = VIEWS.index(cell.view)
        cfg_b = replace(cfg, bias_param=cell.bias_level)
        bundle = assemble_dataset(cfg_b, base, test_base)
        test_feats = bundle.test_features(cell.view)
        if depreciated_test:
            test_feats = _depreciate(bundle, cell.view)
        target = bundle.test.rank_perfect

        def evaluate(label_source: str, bias_key: int):
            l_idx = LABEL_SOURCES.index(label_source)
            table = bundle.table(cell.view, label_source)
            model = fit_algorithm(cell.algorithm, table,
                                  rngmod.stream(seed, rngmod.MODEL, a_idx, v_idx, l_idx, bias_key),
                                  plan)
            ranks = rank_candidates(model, test_feats,
                                    rngmod.stream(seed, rngmod.EVAL, a_idx, v_idx, l_idx, bias_key))
            return model, top1_accuracy(ranks, target), table.feature_names

        error = ""
        try:
            key = (cell.algorithm, cell.view)
            if key in perfect_cache and not depreciated_test:
                m_p, acc_p, names = perfect_cache[key]
            else:
                m_p, acc_p, names = evaluate("perfect", 0)
                perfect_cache[key] = (m_p, acc_p, names)
            m_b, acc_b, _ = evaluate("biased", cell.bias_index + 1)
        except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
            log.warning("cell %s replicate %d failed: %s", cell, replicate, exc)
            error = f"{type(exc).__name__}: {exc}"
            records.append(EvalRecord(cell.scenario, cell.alpha, cell.bias_level,
                                      cell.rejection_prob, cell.algorithm, cell.view,
                                      replicate, math.nan, math.nan, None, False,
                                      cell.bias_index, None, error))
            continue
        records.append(EvalRecord(
            cell.scenario, cell.alpha, cell.bias_level, cell.rejection_prob,
            cell.algorithm, cell.view, replicate, acc_p, acc_b, m_b.hyperparam,
            bool(m_p.converged and m_b.converged), cell.bias_index, m_p.hyperparam))
        coefs.extend(_coef_rows(m_p, names, cell, "perfect", replicate))
        coefs.extend(_coef_rows(m_b, names, cell, "biased", replicate))
    return records, coefs


def _depreciate(bundle, view: str) -> np.ndarray:
    test = bundle.test
    x = self_censored_features(test.X, test.Y, bundle.config.bias_param)
    blocks = [x, test.Y, test.Z] if view == "full" else [x, test.Z]
    return np.concatenate(blocks, axis=-1)


def run_cell(plan: ExperimentPlan, cell: Cell, replicate_id: int) -> EvalRecord:
    records, _ = run_replicate(plan, cell.scenario, cell.alpha, replicate_id, [cell])
    return records[0]


def _task(args):
    plan, scenario, alpha, replicate, cells = args
    return run_replicate(plan, scenario, alpha, replicate, cells)


def thread_count(configured: int | None = None) -> int:
    if configured:
        return max(1, int(configured))
    env = os.environ.get("FAIRSIM_THREADS")
    return max(1, int(env)) if env else 1


def run_plan(plan: ExperimentPlan, out_dir=None, threads: int | None = None,
             cell_filter: dict | None = None, progress=None, replicates=None):
    """Run every selected cell for every replicate.

    Records come back sorted canonically whatever the execution order. With
    ``out_dir`` the rows are appended to ``results.partial.csv`` as each
    replicate finishes; on completion ``results.csv``, ``diagnostics.csv``
    and ``manifest.json`` are written and the partial file removed.
    ``replicates`` restricts the run to the listed replicate ids.
    """
    started = time.time()
    cells = [c for c in plan.cells() if c.matches(**(cell_filter or {}))]
    groups: dict[tuple[str, float], list[Cell]] = {}
    for c in cells:
        groups.setdefault((c.scenario, c.alpha), []).append(c)
    tasks = [(plan, s, a, r, cs) for (s, a), cs in groups.items()
             for r in (range(plan.replicates) if replicates is None else replicates)]

    out_dir = None if out_dir is None else Path(out_dir)
    partial = None
    writer = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        partial = open(out_dir / "results.partial.csv", "w", newline="")
        writer = csv.DictWriter(partial, RESULT_COLUMNS, lineterminator="\n")
        writer.writeheader()

    records: list[EvalRecord] = []
    coefs: list[dict] = []

    def collect(result, done):
        recs, cs = result
        records.extend(recs)
        coefs.extend(cs)
        if writer is not None:
            for r in recs:
                writer.writerow(r.row())
            partial.flush()
        if progress is not None:
            progress(done, len(tasks), recs)

    n_threads = thread_count(threads)
    try:
        if n_threads == 1:
            for done, t in enumerate(tasks, 1):
                collect(_task(t), done)
        else:
            with ProcessPoolExecutor(max_workers=n_threads) as pool:
                futures = [pool.submit(_task, t) for t in tasks]
                for done, fut in enumerate(as_completed(futures), 1):
                    collect(fut.result(), done)
    finally:
        if partial is not None:
            partial.close()

    records.sort(key=EvalRecord.sort_key)
    coefs.sort(key=_coef_sort_key)
    if out_dir is not None:
        write_results(records, out_dir / "results.csv")
        write_rows(coefs, DIAGNOSTIC_COLUMNS, out_dir / "diagnostics.csv")
        failures = [r for r in records if r.error]
        manifest = {
            "plan": asdict(plan),
            "master_seed": plan.master_seed,
            "code_version": __version__,
            "wall_time_s": round(time.time() - started, 3),
            "n_records": len(records),
            "n_failed": len(failures),
            "failures": [{"cell": [r.scenario, r.alpha, r.bias_level, r.algorithm, r.view],
                          "replicate": r.replicate, "error": r.error} for r in failures],
            "cell_filter": cell_filter or {},
            "replicates": None if replicates is None else list(replicates),
        }
        (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
        (out_dir / "results.partial.csv").unlink(missing_ok=True)
    return records, coefs


def _coef_sort_key(row: dict):
    return (SCENARIOS.index(row["scenario"]), float(row["alpha"]), float(row["bias_level"]),
            ALGORITHMS.index(row["algorithm"]), VIEWS.index(row["view"]),
            LABEL_SOURCES.index(row["label_source"]), int(row["replicate"]))


def write_results(records, path) -> None:
    write_rows([r.row() for r in records], RESULT_COLUMNS, path)


def write_rows(rows, columns, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, columns, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def read_results(path) -> list[EvalRecord]:
    """Parse a results CSV back into records (hyperparam/rejection may be blank)."""
    def num(text):
        return None if text == "" else float(text)

    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(RESULT_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"results file missing columns: {sorted(missing)}")
        for row in reader:
            acc_p, acc_b = num(row["acc_perfect"]), num(row["acc_biased"])
            out.append(EvalRecord(
                row["scenario"], float(row["alpha"]), float(row["bias_level"]),
                num(row["rejection_prob"]), row["algorithm"], row["view"],
                int(row["replicate"]),
                math.nan if acc_p is None else acc_p, math.nan if acc_b is None else acc_b,
                num(row["hyperparam"]), row["converged"] == "true"))
    return out


def record_fields() -> tuple[str, ...]:
    return tuple(f.name for f in fields(EvalRecord))
