import json
import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st

from fairsim.analysis import (
    CHI2_95,
    KNN_COLUMNS,
    SUMMARY_COLUMNS,
    SchemaError,
    analyze,
    coefficient_tables,
    ellipse_95,
    knn_L_table,
    read_results,
    rejection_rates,
    summarize,
)
from fairsim.experiment import EvalRecord, ExperimentPlan, run_plan, write_results


def rec(acc_p, acc_b, replicate=0, view="full", algorithm="logistic", level=0.2, L=None):
    return EvalRecord("threshold_binary", 0.5, level, 0.5, algorithm, view, replicate,
                      acc_p, acc_b, L)


def test_chi2_quantile():
    assert CHI2_95 == pytest.approx(5.991, abs=1e-3)


def test_unit_covariance_semi_axes():
    pts = np.random.default_rng(0).standard_normal((200_000, 2))
    e = ellipse_95(pts)
    assert e.semi_axes == pytest.approx((2.448, 2.448), abs=0.02)
    assert e.center == pytest.approx((0, 0), abs=0.01)


def test_diagonal_covariance_rotation_and_ratio():
    g = np.random.default_rng(1)
    pts = g.standard_normal((100_000, 2)) * [2.0, 1.0]
    e = ellipse_95(pts)
    assert abs(e.rotation) < 0.02 or abs(abs(e.rotation) - math.pi) < 0.02
    assert e.semi_axes[0] / e.semi_axes[1] == pytest.approx(2.0, rel=0.02)
    tilted = ellipse_95(pts @ np.array([[0, 1], [1, 0]]))
    assert abs(tilted.rotation) == pytest.approx(math.pi / 2, abs=0.02)


def test_coverage_monte_carlo():
    g = np.random.default_rng(2)
    cov = np.array([[1.0, 0.6], [0.6, 0.5]])
    fit = g.multivariate_normal([0.5, 0.3], cov, 100_000)
    e = ellipse_95(fit)
    fresh = g.multivariate_normal([0.5, 0.3], cov, 100_000)
    assert abs(e.contains(fresh).mean() - 0.95) <= 0.005


def test_outline_lies_on_boundary():
    e = ellipse_95(np.random.default_rng(3).standard_normal((50, 2)) * [3, 1] + [1, 2])
    o = e.outline(32)
    c, s = math.cos(e.rotation), math.sin(e.rotation)
    d = o - e.center
    u, v = d[:, 0] * c + d[:, 1] * s, -d[:, 0] * s + d[:, 1] * c
    np.testing.assert_allclose((u / e.semi_axes[0]) ** 2 + (v / e.semi_axes[1]) ** 2, 1.0)


def test_ellipse_errors():
    with pytest.raises(ValueError, match="collinear"):
        ellipse_95([[0, 0], [1, 1], [2, 2], [3, 3]])
    with pytest.raises(ValueError):
        ellipse_95([[0, 0], [1, 0]])


def test_single_record_summary():
    (cell,) = summarize([rec(0.9, 0.7)])
    assert (cell.mean_acc_perfect, cell.mean_acc_biased, cell.n) == (0.9, 0.7, 1)
    assert math.isnan(cell.sd_acc_perfect) and cell.ellipse is None


def test_failed_records_counted_not_averaged():
    cells = summarize([rec(0.9, 0.7, 0), rec(math.nan, math.nan, 1), rec(0.7, 0.5, 2)])
    assert cells[0].n == 3 and cells[0].n_failed == 1
    assert cells[0].mean_acc_perfect == pytest.approx(0.8)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=10),
       st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=10))
def test_aggregation_linearity(a, b):
    ra = [rec(p, q, i) for i, (p, q) in enumerate(a)]
    rb = [rec(p, q, 100 + i) for i, (p, q) in enumerate(b)]
    (ca,), (cb,), (cab,) = summarize(ra), summarize(rb), summarize(ra + rb)
    pooled = (ca.mean_acc_perfect * ca.n + cb.mean_acc_perfect * cb.n) / (ca.n + cb.n)
    assert cab.mean_acc_perfect == pytest.approx(pooled, abs=1e-12)
    assert cab.n == ca.n + cb.n


def test_summary_does_not_mutate():
    records = [rec(0.9, 0.7, 0), rec(0.8, 0.6, 1)]
    before = [r.row() for r in records]
    summarize(records)
    knn_L_table(records)
    assert [r.row() for r in records] == before


def test_knn_table():
    assert list(knn_L_table([]).columns) == list(KNN_COLUMNS)
    assert knn_L_table([]).empty
    rows = [rec(0.9, 0.8, i, algorithm="knn", L=5 + i, level=lv)
            for i, lv in enumerate((0.2, 0.2, 0.8))] + [rec(0.9, 0.8)]
    t = knn_L_table(rows)
    assert len(t) == 3 and t["L"].tolist() == [5, 6, 7]
    assert t["L"].between(1, 70).all()


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    plan = ExperimentPlan(scenarios=("threshold_binary",), alphas=(0.5,),
                          algorithms=("logistic", "knn"), replicates=3, n_train=300,
                          knn_max_L=15, master_seed=5)
    run_plan(plan, out, cell_filter={"bias_index": 4})
    return out


def test_anonymized_cells_have_no_y_terms(small_run):
    coefs = coefficient_tables(small_run / "diagnostics.csv")
    anon = coefs[coefs["view"] == "anon"]
    full = coefs[coefs["view"] == "full"]
    assert not anon.empty and "y" not in set(anon["block"])
    assert {"x", "y", "z", "intercept"} == set(full["block"])
    rates = rejection_rates(coefs)
    assert rates["rate"].between(0, 1).all()


def test_analyze_writes_four_files(small_run, tmp_path):
    paths = analyze(small_run / "results.csv", tmp_path)
    assert sorted(p.name for p in paths.values()) == [
        "coefficients.csv", "ellipses.json", "knn_L.csv", "summary.csv"]
    summary = pd.read_csv(paths["summary.csv"])
    assert list(summary.columns) == list(SUMMARY_COLUMNS)
    assert summary["mean_acc_perfect"].between(0, 1).all()
    doc = json.loads(paths["ellipses.json"].read_text())
    assert doc["axes"] == {"x": "acc_perfect", "y": "acc_biased"}
    assert len(doc["cells"]) == len(summary)
    assert len(pd.read_csv(paths["knn_L.csv"])) == 2 * 3


def test_analyze_empty_results(tmp_path):
    write_results([], tmp_path / "results.csv")
    paths = analyze(tmp_path / "results.csv", tmp_path / "out")
    assert pd.read_csv(paths["summary.csv"]).empty
    assert json.loads(paths["ellipses.json"].read_text())["cells"] == []


def test_missing_columns_is_schema_error(tmp_path):
    (tmp_path / "bad.csv").write_text("scenario,alpha\nx,0.2\n")
    with pytest.raises(SchemaError):
        read_results(tmp_path / "bad.csv")
    with pytest.raises(SchemaError):
        coefficient_tables(pd.DataFrame({"term": ["x1"]}))
