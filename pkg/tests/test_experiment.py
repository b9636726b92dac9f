import json
import math

import numpy as np
import pytest

from fairsim import rng as rngmod
from fairsim.experiment import (
    RESULT_COLUMNS,
    Cell,
    ExperimentPlan,
    fit_algorithm,
    read_results,
    run_cell,
    run_plan,
    run_replicate,
    thread_count,
    top1_accuracy,
)
from fairsim.models import rank_candidates
from fairsim.simgen import assemble_dataset, gen_base


def small_plan(**kw):
    base = dict(scenarios=("threshold_binary",), alphas=(0.5,), algorithms=("logistic",),
                replicates=2, n_train=300, master_seed=7)
    base.update(kw)
    return ExperimentPlan(**base)


def test_plan_defaults_and_presets():
    p = ExperimentPlan()
    assert p.n_test == 500 and p.replicates == 100 and p.alphas == (0.2, 0.5, 0.8)
    d = ExperimentPlan.preset("desk")
    assert (d.n_train, d.n_test, d.replicates) == (1000, 100, 20)
    assert ExperimentPlan.preset("desk", replicates=3).replicates == 3
    with pytest.raises(ValueError):
        ExperimentPlan.preset("huge")
    with pytest.raises(ValueError):
        ExperimentPlan(algorithms=("cart",))
    with pytest.raises(ValueError):
        ExperimentPlan(alphas=(1.0,))


def test_cells_cross_product():
    p = ExperimentPlan()
    cells = p.cells()
    assert len(cells) == 3 * 3 * 5 * 5 * 2
    assert len(set(cells)) == len(cells)


def test_top1_accuracy():
    perfect = np.array([[1, 2, 3], [2, 1, 3]])
    assert top1_accuracy(np.array([[1, 3, 2], [1, 2, 3]]), perfect) == 0.5
    assert top1_accuracy(perfect, perfect) == 1.0


def test_record_count_and_distinct_seeds(tmp_path):
    plan = small_plan(views=("full", "anon"))
    flt = {"bias_index": 4}
    records, coefs = run_plan(plan, tmp_path, cell_filter=flt)
    assert len(records) == 2 * 2
    assert [r.replicate for r in records] == [0, 1, 0, 1]
    s = {plan.scenario_config("threshold_binary", 0.5, 0.0, r).master_seed for r in range(2)}
    assert len(s) == 2
    bases = [gen_base(plan.scenario_config("threshold_binary", 0.5, 0.0, r), 10, rngmod.TRAIN)
             for r in range(2)]
    assert not np.array_equal(bases[0].X, bases[1].X)
    rows = (tmp_path / "results.csv").read_text().splitlines()
    assert rows[0] == ",".join(RESULT_COLUMNS) and len(rows) == 5
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["n_records"] == 4 and manifest["master_seed"] == 7
    assert not (tmp_path / "results.partial.csv").exists()
    assert len(read_results(tmp_path / "results.csv")) == 4
    assert {c["label_source"] for c in coefs} == {"perfect", "biased"}


def test_rerun_is_identical(tmp_path):
    plan = small_plan(algorithms=("logistic", "knn"), knn_max_L=10)
    flt = {"bias_index": 2}
    run_plan(plan, tmp_path / "a", cell_filter=flt)
    run_plan(plan, tmp_path / "b", cell_filter=flt)
    for name in ("results.csv", "diagnostics.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_order_independent_of_schedule():
    plan = small_plan(replicates=3)
    flt = {"bias_index": 1}
    full, _ = run_plan(plan, cell_filter=flt)
    parts = []
    for r in (2, 0, 1):
        parts += run_plan(plan, cell_filter=flt, replicates=[r])[0]
    assert [x.row() for x in full] == [x.row() for x in sorted(parts, key=lambda x: x.sort_key())]


def test_run_cell_matches_grouped_replicate():
    plan = small_plan(algorithms=("logistic", "svm"))
    cells = [c for c in plan.cells() if c.bias_index in (0, 3)]
    grouped, _ = run_replicate(plan, "threshold_binary", 0.5, 1, cells)
    for cell, rec in zip(sorted(cells, key=Cell.sort_key), grouped):
        single = run_cell(plan, cell, 1)
        assert single.row() == rec.row()


def test_shared_base_across_bias_levels():
    plan = small_plan()
    levels, _ = plan.levels("threshold_binary")
    tensors = []
    for level in levels[[0, 4]]:
        cfg = plan.scenario_config("threshold_binary", 0.5, float(level), 0)
        b = assemble_dataset(cfg, gen_base(cfg, cfg.n_train, rngmod.TRAIN),
                             gen_base(cfg, cfg.n_test, rngmod.TEST))
        tensors.append((b.train.features("full").tobytes(), b.test.X.tobytes(),
                        b.train.success_biased.tobytes()))
    assert tensors[0][:2] == tensors[1][:2]
    assert tensors[0][2] != tensors[1][2]


def test_zero_bias_gives_equal_accuracies():
    plan = small_plan(n_train=500)
    cell = Cell("threshold_binary", 0.5, 0, -1.0, 0.0, "logistic", "full")
    rec = run_cell(plan, cell, 0)
    assert rec.acc_perfect == rec.acc_biased


def test_random_baseline_near_one_fifth():
    plan = small_plan(n_train=300, n_test=4000)
    cfg = plan.scenario_config("threshold_binary", 0.5, 0.0, 0)
    b = assemble_dataset(cfg, gen_base(cfg, cfg.n_train, rngmod.TRAIN),
                         gen_base(cfg, cfg.n_test, rngmod.TEST))
    model = fit_algorithm("constant", b.table("full", "perfect"), None, plan)
    ranks = rank_candidates(model, b.test_features("full"), np.random.default_rng(0))
    acc = top1_accuracy(ranks, b.test.rank_perfect)
    assert abs(acc - 0.2) < 3 * math.sqrt(0.16 / 4000)


def test_accuracy_above_random_floor():
    plan = small_plan(n_train=1000, algorithms=("logistic", "knn", "svm"), knn_max_L=20)
    records, _ = run_plan(plan, cell_filter={"bias_index": 0}, replicates=[0])
    floor = 0.2 - 3 * math.sqrt(0.16 / plan.n_test)
    for r in records:
        assert r.acc_perfect >= floor and r.acc_biased >= floor
        assert 0 <= r.acc_perfect <= 1


def test_failures_recorded_not_raised(monkeypatch):
    import fairsim.experiment as ex

    def boom(*a, **k):
        raise ValueError("degenerate labels")

    monkeypatch.setattr(ex, "fit_logistic", boom)
    plan = small_plan()
    records, _ = run_plan(plan, cell_filter={"bias_index": 0})
    assert len(records) == 4
    assert all(math.isnan(r.acc_perfect) and not r.converged for r in records)
    assert all("degenerate labels" in r.error for r in records)


def test_thread_count(monkeypatch):
    monkeypatch.delenv("FAIRSIM_THREADS", raising=False)
    assert thread_count() == 1
    monkeypatch.setenv("FAIRSIM_THREADS", "3")
    assert thread_count() == 3 and thread_count(2) == 2


def test_process_pool_matches_serial():
    plan = small_plan(replicates=2)
    flt = {"bias_index": 4}
    serial, _ = run_plan(plan, cell_filter=flt, threads=1)
    pooled, _ = run_plan(plan, cell_filter=flt, threads=2)
    assert [r.row() for r in serial] == [r.row() for r in pooled]
