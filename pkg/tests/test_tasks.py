"""Downstream-harness oracles: search spaces, runtime metrics, folds, heads."""

import json

import numpy as np
import pytest
import torch

from mmir.tasks import (
    CUDA_BLOCK_SHAPES,
    CUDA_MATRIX_SIZES,
    IF_VALUES,
    OMP_CHUNK,
    OMP_POWER,
    OMP_SCHEDULE,
    OMP_THREADS,
    TASKS,
    VF_VALUES,
    FoldSpec,
    HeadConfig,
    RuntimeTable,
    TaskBundle,
    TaskSpec,
    TrainedHead,
    accuracy,
    binary_f1,
    compute_error_rate,
    compute_speedup,
    geometric_mean,
    head_logits,
    leave_one_out_folds,
    load_labels_csv,
    macro_f1,
    make_folds,
    oracle_config,
    predict_config,
    reduced_data_subsample,
    run_task,
    train_head,
)


# ------------------------------------------------------------- search spaces

def test_search_space_sizes_by_enumeration():
    assert len(TASKS["devmap"].label_space) == 2
    assert TASKS["coarsen"].label_space == ("1", "2", "4", "8", "16", "32")
    assert len(TASKS["vectorize"].label_space) == len(VF_VALUES) * len(IF_VALUES) == 35
    omp = len(OMP_POWER) * len(OMP_THREADS) * len(OMP_SCHEDULE) * len(OMP_CHUNK)
    assert len(TASKS["omp"].label_space) == omp == 504
    assert len(TASKS["numa"].label_space) == 13
    assert len(TASKS["cudablock"].label_space) == len(CUDA_MATRIX_SIZES) * len(CUDA_BLOCK_SHAPES) == 140


def test_search_space_contents():
    assert "vf4_if8" in TASKS["vectorize"].label_space
    assert "p120_t32_DYNAMIC_c64" in TASKS["omp"].label_space
    assert "m1232_b1x512" in TASKS["cudablock"].label_space
    for space in (TASKS[t].label_space for t in TASKS):
        assert len(set(space)) == len(space)


def test_task_spec_rejects_duplicate_labels():
    with pytest.raises(ValueError, match="unique"):
        TaskSpec(name="x", label_space=("a", "a"), aux_feature_names=(),
                 cv_scheme="stratified_kfold")


# ------------------------------------------------------------ runtime tables

@pytest.fixture()
def toy_table():
    table = RuntimeTable()
    rows = {
        ("p1", "A"): 2.0, ("p1", "B"): 1.0, ("p1", "C"): 1.5,
        ("p2", "A"): 3.0, ("p2", "B"): 3.0, ("p2", "C"): 6.0,
    }
    for (pid, cid) in (("p1", "A"), ("p1", "B"), ("p1", "C"),
                       ("p2", "A"), ("p2", "B"), ("p2", "C")):
        table.add(pid, cid, rows[(pid, cid)])
    return table


def test_runtime_table_validation(toy_table):
    with pytest.raises(ValueError, match="duplicate"):
        toy_table.add("p1", "A", 5.0)
    with pytest.raises(ValueError, match="positive"):
        toy_table.add("p3", "A", 0.0)
    with pytest.raises(KeyError):
        toy_table.runtime("p1", "Z")


def test_runtime_table_roundtrip(toy_table, tmp_path):
    path = tmp_path / "rt.csv"
    toy_table.save(path)
    loaded = RuntimeTable.load(path)
    assert loaded.runtimes == toy_table.runtimes
    (tmp_path / "rt2.csv").write_text("x,y\n")
    with pytest.raises(ValueError, match="not a runtime table"):
        RuntimeTable.load(tmp_path / "rt2.csv")


def test_oracle_config_minimum_and_tie(toy_table):
    assert oracle_config(toy_table, "p1") == "B"
    assert oracle_config(toy_table, "p2") == "A"  # tie with B -> earliest config
    with pytest.raises(KeyError):
        oracle_config(toy_table, "p9")


def test_compute_speedup_hand_values(toy_table):
    assert compute_speedup(toy_table, "A", "B", "p1") == 2.0
    assert compute_speedup(toy_table, "A", "A", "p1") == 1.0
    with pytest.raises(KeyError):
        compute_speedup(toy_table, "A", "Z", "p1")


def test_compute_error_rate_hand_values(toy_table):
    assert compute_error_rate(toy_table, "B", "p1") == 0.0
    assert abs(compute_error_rate(toy_table, "C", "p1") - 0.5) < 1e-12
    assert abs(compute_error_rate(toy_table, "A", "p1") - 1.0) < 1e-12


def test_geometric_mean_hand_values():
    assert abs(geometric_mean([2.0, 0.5]) - 1.0) < 1e-12
    assert abs(geometric_mean([4.0]) - 4.0) < 1e-12
    assert abs(geometric_mean([1.0, 8.0]) - np.sqrt(8.0)) < 1e-12
    with pytest.raises(ValueError):
        geometric_mean([])
    with pytest.raises(ValueError, match="positive"):
        geometric_mean([1.0, 0.0])


def test_metrics_against_brute_force_sweep():
    """Random table, <= 50 rows: every metric recomputed the long way."""
    rng = np.random.default_rng(17)
    table = RuntimeTable()
    programs = [f"pr{i}" for i in range(7)]
    configs = [f"c{i}" for i in range(7)]
    for pid in programs:
        for cid in configs:
            table.add(pid, cid, float(rng.uniform(0.1, 5.0)))
    for pid in programs:
        best_brute = min(configs, key=lambda c: table.runtime(pid, c))
        assert table.runtime(pid, oracle_config(table, pid)) == table.runtime(pid, best_brute)
        for cid in configs:
            assert compute_speedup(table, "c0", cid, pid) == (
                table.runtime(pid, "c0") / table.runtime(pid, cid)
            )
            expected_err = (table.runtime(pid, cid) - table.runtime(pid, best_brute)) / table.runtime(pid, best_brute)
            assert abs(compute_error_rate(table, cid, pid) - expected_err) < 1e-12
    speedups = [compute_speedup(table, "c0", "c1", pid) for pid in programs]
    brute_geo = float(np.prod(speedups) ** (1.0 / len(speedups)))
    assert abs(geometric_mean(speedups) - brute_geo) < 1e-9


# --------------------------------------------------------------------- folds

def test_make_folds_670_by_10():
    ids = [f"s{i}" for i in range(670)]
    labels = ["a" if i % 2 else "b" for i in range(670)]
    folds = make_folds(ids, labels, k=10, seed=0)
    assert folds.k == 10
    sizes = [len(f) for f in folds.folds]
    assert sizes == [67] * 10
    assert sorted(i for f in folds.folds for i in f) == sorted(ids)


def test_make_folds_stratified_within_one():
    ids = [f"s{i}" for i in range(100)]
    labels = ["x"] * 73 + ["y"] * 27
    folds = make_folds(ids, labels, k=5, seed=3)
    lab = dict(zip(ids, labels))
    for fold in folds.folds:
        nx = sum(lab[i] == "x" for i in fold)
        ny = sum(lab[i] == "y" for i in fold)
        assert nx in (14, 15)
        assert ny in (5, 6)


def test_make_folds_deterministic_and_seed_sensitive():
    ids = [f"s{i}" for i in range(40)]
    labels = ["a"] * 20 + ["b"] * 20
    a = make_folds(ids, labels, k=4, seed=1)
    b = make_folds(ids, labels, k=4, seed=1)
    c = make_folds(ids, labels, k=4, seed=2)
    assert a.folds == b.folds
    assert a.folds != c.folds


def test_make_folds_small_class_warns():
    ids = [f"s{i}" for i in range(20)]
    labels = ["a"] * 17 + ["b"] * 3
    with pytest.warns(UserWarning, match="best-effort"):
        folds = make_folds(ids, labels, k=10, seed=0)
    assert sorted(i for f in folds.folds for i in f) == sorted(ids)


def test_make_folds_k_exceeds_samples():
    with pytest.raises(ValueError, match="exceeds"):
        make_folds(["a", "b"], ["x", "y"], k=3, seed=0)


def test_fold_split_partitions():
    ids = [f"s{i}" for i in range(30)]
    labels = ["a"] * 15 + ["b"] * 15
    folds = make_folds(ids, labels, k=3, seed=0)
    for f in range(3):
        train, test = folds.split(f)
        assert not set(train) & set(test)
        assert sorted(train + test) == sorted(ids)


def test_foldspec_rejects_overlap():
    with pytest.raises(ValueError, match="overlap"):
        FoldSpec(folds=[["a", "b"], ["b"]], scheme="x")


def test_leave_one_out():
    folds = leave_one_out_folds(["p3", "p1", "p2"])
    assert folds.folds == [["p1"], ["p2"], ["p3"]]
    with pytest.raises(ValueError, match="at least 2"):
        leave_one_out_folds(["only"])


def test_reduced_data_subsample():
    ids = [f"s{i}" for i in range(1000)]
    assert reduced_data_subsample(ids, 1.0, seed=0) == ids
    half = reduced_data_subsample(ids, 0.05, seed=0)
    assert len(half) == 50
    assert set(half) <= set(ids)
    assert reduced_data_subsample(ids, 0.05, seed=0) == half
    with pytest.raises(ValueError, match="fraction"):
        reduced_data_subsample(ids, 0.0, seed=0)
    with pytest.raises(ValueError, match="nothing"):
        reduced_data_subsample(ids[:4], 0.05, seed=0)


# --------------------------------------------------------------------- heads

def planted(n=60, seed=0):
    rng = np.random.default_rng(seed)
    half = n // 2
    feats = np.vstack([
        rng.normal(+1.5, 0.4, size=(half, 3)),
        rng.normal(-1.5, 0.4, size=(n - half, 3)),
    ]).astype(np.float32)
    labels = ["CPU"] * half + ["GPU"] * (n - half)
    return feats, labels


def test_train_head_fits_separable_data():
    feats, labels = planted()
    head = train_head(feats, None, labels, ("CPU", "GPU"),
                      HeadConfig(epochs=150), seed=0)
    preds = predict_config(head, feats)
    assert accuracy(labels, preds) >= 0.95


def test_train_head_rejects_unknown_label():
    feats, labels = planted(10)
    with pytest.raises(ValueError, match="outside the label space"):
        train_head(feats, None, labels, ("CPU",), HeadConfig(epochs=1), seed=0)


def test_train_head_deterministic():
    feats, labels = planted(30)
    a = train_head(feats, None, labels, ("CPU", "GPU"), HeadConfig(epochs=50), seed=4)
    b = train_head(feats, None, labels, ("CPU", "GPU"), HeadConfig(epochs=50), seed=4)
    assert np.array_equal(head_logits(a, feats, None), head_logits(b, feats, None))


def test_train_head_aux_standardization_uses_train_stats():
    feats, labels = planted(20)
    aux = np.arange(40, dtype=np.float32).reshape(20, 2)
    head = train_head(feats, aux, labels, ("CPU", "GPU"), HeadConfig(epochs=5), seed=0)
    assert np.allclose(head.aux_mean, aux.mean(axis=0))
    assert np.allclose(head.aux_std, aux.std(axis=0))
    # constant column keeps std 1 so standardization stays finite
    aux[:, 1] = 7.0
    head2 = train_head(feats, aux, labels, ("CPU", "GPU"), HeadConfig(epochs=5), seed=0)
    assert head2.aux_std[1] == 1.0
    assert np.all(np.isfinite(head_logits(head2, feats, aux)))


def test_head_width_check():
    feats, labels = planted(20)
    head = train_head(feats, None, labels, ("CPU", "GPU"), HeadConfig(epochs=5), seed=0)
    with pytest.raises(ValueError, match="width"):
        head_logits(head, np.zeros((2, 5), dtype=np.float32), None)


def test_predict_config_tie_breaks_to_lowest_index():
    from torch import nn

    net = nn.Linear(3, 4)
    with torch.no_grad():
        net.weight.zero_()
        net.bias.zero_()
    head = TrainedHead(net=net, label_space=("w", "x", "y", "z"),
                       aux_mean=np.zeros(0), aux_std=np.ones(0), feature_dim=3)
    assert predict_config(head, np.ones(3, dtype=np.float32)) == "w"
    with torch.no_grad():
        net.bias[2] = 1.0
    assert predict_config(head, np.ones(3, dtype=np.float32)) == "y"


# ------------------------------------------------------------------- metrics

def test_classification_metric_hand_values():
    y_true = ["CPU", "CPU", "GPU", "GPU"]
    y_pred = ["CPU", "GPU", "GPU", "GPU"]
    assert accuracy(y_true, y_pred) == 0.75
    # GPU as positive: tp=2 fp=1 fn=0 -> f1 = 4/5
    assert abs(binary_f1(y_true, y_pred, "GPU") - 0.8) < 1e-12
    # CPU as positive: tp=1 fp=0 fn=1 -> f1 = 2/3
    assert abs(binary_f1(y_true, y_pred, "CPU") - 2 / 3) < 1e-12
    assert abs(macro_f1(y_true, y_pred) - (0.8 + 2 / 3) / 2) < 1e-12
    assert binary_f1(["a"], ["a"], "b") == 0.0
    with pytest.raises(ValueError):
        accuracy([], [])


# ------------------------------------------------------------------ run_task

def _bundle(n=40, seed=0, with_table=False, task="devmap"):
    feats, labels = planted(n, seed)
    ids = [f"s{i:03d}" for i in range(n)]
    table = None
    if with_table:
        spec = TASKS[task]
        table = RuntimeTable()
        rng = np.random.default_rng(seed + 1)
        for sid in ids:
            for cid in spec.label_space:
                table.add(sid, cid, float(rng.uniform(0.5, 2.0)))
            table.baselines[sid] = spec.label_space[0]
        labels = [oracle_config(table, sid) for sid in ids]
    return TaskBundle(
        sample_ids=ids,
        program_ids={s: s for s in ids},
        labels=dict(zip(ids, labels)),
        embeddings={s: feats[i] for i, s in enumerate(ids)},
        aux={s: np.zeros(0, dtype=np.float32) for s in ids},
        runtime_table=table,
    )


def test_run_task_devmap_end_to_end(tmp_path):
    bundle = _bundle(40)
    metrics = run_task(TASKS["devmap"], bundle, tmp_path, seed=0,
                       head_config=HeadConfig(epochs=120), k_override=5)
    assert metrics.accuracy >= 0.9
    assert metrics.f1_binary is not None
    assert len(metrics.per_fold_accuracy) == 5
    saved = json.loads((tmp_path / "metrics.json").read_text())
    assert saved["accuracy"] == metrics.accuracy
    rows = (tmp_path / "folds.csv").read_text().splitlines()
    assert rows[0] == "sample_id,fold,true,predicted"
    assert len(rows) == 41
    assert (tmp_path / "metrics.png").stat().st_size > 0


def test_run_task_runtime_metrics(tmp_path):
    bundle = _bundle(12, with_table=True, task="coarsen")
    metrics = run_task(TASKS["coarsen"], bundle, tmp_path, seed=0,
                       head_config=HeadConfig(epochs=40))
    assert metrics.summary["scheme"] == "leave_one_out"
    assert len(metrics.speedups) == 12
    assert metrics.geometric_mean_speedup is not None
    assert metrics.oracle_geometric_mean >= metrics.geometric_mean_speedup - 1e-9
    assert metrics.mean_error_rate >= 0.0
    for sid, err in metrics.error_rates.items():
        assert err >= 0.0


def test_run_task_requires_runtime_table(tmp_path):
    bundle = _bundle(12)
    with pytest.raises(ValueError, match="runtime table"):
        run_task(TASKS["coarsen"], bundle, tmp_path)


def test_run_task_rejects_foreign_labels(tmp_path):
    bundle = _bundle(10)
    bundle.labels[bundle.sample_ids[0]] = "TPU"
    with pytest.raises(ValueError, match="label space"):
        run_task(TASKS["devmap"], bundle, tmp_path, k_override=2)


def test_run_task_reduced_fraction(tmp_path):
    bundle = _bundle(40)
    metrics = run_task(TASKS["devmap"], bundle, tmp_path, seed=0,
                       head_config=HeadConfig(epochs=60), k_override=4,
                       reduced_fraction=0.5)
    assert metrics.summary["reduced_fraction"] == 0.5
    assert 0.0 <= metrics.accuracy <= 1.0


def test_run_task_deterministic(tmp_path):
    for d in ("a", "b"):
        bundle = _bundle(24)
        run_task(TASKS["devmap"], bundle, tmp_path / d, seed=3,
                 head_config=HeadConfig(epochs=60), k_override=4)
    assert (tmp_path / "a" / "metrics.json").read_bytes() == (
        tmp_path / "b" / "metrics.json"
    ).read_bytes()
    assert (tmp_path / "a" / "folds.csv").read_bytes() == (
        tmp_path / "b" / "folds.csv"
    ).read_bytes()


# ------------------------------------------------------------------- loaders

def test_load_labels_csv_roundtrip(tmp_path):
    path = tmp_path / "labels.csv"
    path.write_text(
        "sample_id,program_id,label,transfer_size,workgroup_size\n"
        "s0,p0,CPU,100,64\n"
        "s1,p1,GPU,5,256\n"
    )
    ids, programs, labels, aux = load_labels_csv(path, ("transfer_size", "workgroup_size"))
    assert ids == ["s0", "s1"]
    assert programs == {"s0": "p0", "s1": "p1"}
    assert labels == {"s0": "CPU", "s1": "GPU"}
    assert np.allclose(aux["s1"], [5.0, 256.0])
    with pytest.raises(ValueError, match="header"):
        load_labels_csv(path, ())
