import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from mvela.ela import FEATURE_NAMES, FeatureVector
from mvela.errors import DataError
from mvela.forest import ForestParams, fit_classification
from mvela.portfolio import PerformanceRecord, PerformanceTable
from mvela.selector import (
    LabeledDataset,
    build_labeled_dataset,
    confidence_select,
    grouped_kfold,
    hybrid_oracle,
    label_instances,
    load_outcomes,
    meta_select,
    run_cv_experiment,
    save_outcomes,
    train_selector,
    _meta_training_set,
)

ALGOS = ("alg_a", "alg_b", "alg_c")


def _table(erts_by_instance):
    records = {}
    targets = {}
    for iid, erts in erts_by_instance.items():
        targets[iid] = 0.0
        for algo, ert in zip(ALGOS, erts):
            records[(iid, algo)] = PerformanceRecord(iid, algo, ert, 1, 1)
    return PerformanceTable(algorithms=ALGOS, records=records, targets=targets)


def test_label_lowest_ert():
    table = _table({"i": (10.0, 5.0, 8.0)})
    assert label_instances(table)["i"] == "alg_b"


def test_label_tie_declaration_order():
    table = _table({"i": (5.0, 5.0, 9.0)})
    assert label_instances(table)["i"] == "alg_a"


def test_label_infinite_skipped():
    table = _table({"i": (math.inf, 7.0, 9.0)})
    assert label_instances(table)["i"] == "alg_b"


def test_grouped_kfold_sizes_702():
    plan = grouped_kfold([f"i{n}" for n in range(702)], k=10, seed=3)
    sizes = [len(plan.fold_instances(f)) for f in range(10)]
    assert set(sizes) <= {70, 71}
    assert sum(sizes) == 702


def test_grouped_kfold_deterministic_and_disjoint():
    ids = [f"i{n}" for n in range(25)]
    a = grouped_kfold(ids, k=5, seed=1)
    b = grouped_kfold(ids, k=5, seed=1)
    assert a.assignment == b.assignment
    seen = set()
    for f in range(5):
        fold = a.fold_instances(f)
        assert not fold & seen
        seen |= fold
    assert seen == set(ids)


def test_grouped_kfold_needs_enough_instances():
    with pytest.raises(DataError):
        grouped_kfold(["a", "b"], k=3)


def _fabricated(n_instances=12, reps=3, seed=0):
    """TE features are informative on even instances, SH on odd ones, so the
    two encodings genuinely complement each other."""
    rng = np.random.default_rng(seed)
    erts = {}
    fvs_te, fvs_sh = [], []
    for n in range(n_instances):
        iid = f"i{n:02d}"
        best = ALGOS[n % 3]
        base = [3.0, 3.0, 3.0]
        base[n % 3] = 1.0
        erts[iid] = tuple(base)
        for rep in range(reps):
            signal = np.zeros(38)
            signal[n % 3] = 5.0
            noise_te = rng.normal(size=38) * 0.3
            noise_sh = rng.normal(size=38) * 0.3
            te_vals = signal + noise_te if n % 2 == 0 else noise_te
            sh_vals = signal + noise_sh if n % 2 == 1 else noise_sh
            fvs_te.append(FeatureVector(iid, rep, "target", FEATURE_NAMES, te_vals))
            fvs_sh.append(FeatureVector(iid, rep, "shap", FEATURE_NAMES, sh_vals))
    table = _table(erts)
    te = build_labeled_dataset(fvs_te, table, "target")
    sh = build_labeled_dataset(fvs_sh, table, "shap")
    return te, sh, table


def test_build_labeled_dataset_label_consistency():
    te, _, table = _fabricated()
    labels = label_instances(table)
    for iid, label in zip(te.instance_ids, te.labels):
        assert label == labels[iid]
    # all repetitions of an instance share the label
    by_instance = {}
    for iid, label in zip(te.instance_ids, te.labels):
        by_instance.setdefault(iid, set()).add(label)
    assert all(len(s) == 1 for s in by_instance.values())


def test_train_selector_single_class():
    te, _, _ = _fabricated()
    rows = np.arange(te.n)
    single = LabeledDataset(
        te.encoding_tag, te.feature_names, te.instance_ids, te.repetitions,
        te.X, tuple("alg_b" for _ in range(te.n)),
    )
    model = train_selector(single, rows, ForestParams(n_trees=5, seed=0), ALGOS)
    assert model.predict(te.X[0]) == "alg_b"


def test_hybrid_oracle_rules():
    erts = {"alg_a": 10.0, "alg_b": 3.0}
    assert hybrid_oracle("alg_a", "alg_b", erts) == "alg_b"
    assert hybrid_oracle("alg_a", "alg_a", erts) == "alg_a"
    assert hybrid_oracle("alg_a", "alg_b", {"alg_a": 3.0, "alg_b": 3.0}) == "alg_a"  # tie -> TE


def test_meta_training_set_width_and_tie_label():
    te, sh, table = _fabricated(n_instances=6, reps=2)
    # Force identical predictions: single-class labels make both selectors
    # agree, so realized ERTs tie and every meta label must be TE.
    uniform_te = LabeledDataset(
        te.encoding_tag, te.feature_names, te.instance_ids, te.repetitions,
        te.X, tuple("alg_a" for _ in range(te.n)),
    )
    uniform_sh = LabeledDataset(
        sh.encoding_tag, sh.feature_names, sh.instance_ids, sh.repetitions,
        sh.X, tuple("alg_a" for _ in range(sh.n)),
    )
    X, labels = _meta_training_set(
        uniform_te, uniform_sh, list(dict.fromkeys(te.instance_ids)), table,
        ForestParams(n_trees=3, seed=0), inner_k=2, seed=5, class_labels=ALGOS,
    )
    assert X.shape[1] == 76
    assert set(labels) == {"TE"}


def test_meta_select_routes_to_chosen_selector():
    rng = np.random.default_rng(0)
    X = rng.uniform(size=(40, 76))
    labels = ["TE" if x > 0.5 else "SH" for x in X[:, 0]]
    meta = fit_classification(X, labels, ForestParams(n_trees=9, seed=1), class_labels=("TE", "SH"))
    te_row = np.full(38, 0.9)
    sh_row = np.zeros(38)
    choice = meta.predict(np.concatenate([te_row, sh_row]))
    routed = meta_select(meta, te_row, sh_row, "alg_a", "alg_b")
    assert routed == ("alg_a" if choice == "TE" else "alg_b")
    assert routed in {"alg_a", "alg_b"}


def test_confidence_select_rules():
    rng = np.random.default_rng(1)
    X = rng.uniform(size=(60, 38))
    confident_labels = ["alg_a" if x > 0.5 else "alg_b" for x in X[:, 0]]
    vague_labels = ["alg_a" if v > 0.5 else "alg_b" for v in rng.uniform(size=60)]
    confident = fit_classification(X, confident_labels, ForestParams(n_trees=15, seed=2), ALGOS)
    vague = fit_classification(X, vague_labels, ForestParams(n_trees=15, seed=3), ALGOS)

    probe = np.full(38, 0.9)
    c_conf = confident.predict_proba(probe).max()
    c_vague = vague.predict_proba(probe).max()
    assert c_conf > c_vague
    assert confidence_select(confident, probe, vague, probe) == confident.predict(probe)
    assert confidence_select(vague, probe, confident, probe) == confident.predict(probe)
    # tie: same model on both sides resolves to the TE side's prediction
    assert confidence_select(vague, probe, vague, probe) == vague.predict(probe)
    for proba in (confident.predict_proba(probe), vague.predict_proba(probe)):
        assert 1.0 / len(ALGOS) <= proba.max() <= 1.0


@pytest.fixture(scope="module")
def cv_result():
    te, sh, table = _fabricated()
    outcomes, audit = run_cv_experiment(
        te, sh, table, k=4, seed=9,
        forest_params=ForestParams(n_trees=10, feature_subsample="sqrt"),
        inner_k=2,
    )
    return te, sh, table, outcomes, audit


def test_cv_outcome_invariants(cv_result):
    _, _, table, outcomes, _ = cv_result
    for o in outcomes:
        assert o.chosen["Hybrid"] in {o.chosen["TE"], o.chosen["SH"]}
        assert o.chosen["Meta"] in {o.chosen["TE"], o.chosen["SH"]}
        assert o.chosen["Confidence"] in {o.chosen["TE"], o.chosen["SH"]}
        assert o.ert["Hybrid"] == min(o.ert["TE"], o.ert["SH"])


def test_cv_no_leakage_and_full_coverage(cv_result):
    te, _, _, outcomes, audit = cv_result
    for fold_info in audit.folds:
        assert not set(fold_info["train_instances"]) & set(fold_info["test_instances"])
    seen = {(o.instance_id, o.repetition) for o in outcomes}
    expected = set(zip(te.instance_ids, te.repetitions))
    assert seen == expected
    assert len(outcomes) == te.n


def test_cv_deterministic(cv_result):
    te, sh, table, outcomes, _ = cv_result
    again, _ = run_cv_experiment(
        te, sh, table, k=4, seed=9,
        forest_params=ForestParams(n_trees=10, feature_subsample="sqrt"),
        inner_k=2,
    )
    assert [o.chosen for o in again] == [o.chosen for o in outcomes]


def test_cv_hybrid_beats_both_on_average(cv_result):
    _, _, _, outcomes, _ = cv_result
    mean = lambda s: np.mean([o.ert[s] for o in outcomes])
    assert mean("Hybrid") <= mean("TE") + 1e-12
    assert mean("Hybrid") <= mean("SH") + 1e-12


def test_outcomes_csv_round_trip(cv_result, tmp_path):
    _, _, _, outcomes, _ = cv_result
    path = tmp_path / "outcomes.csv"
    save_outcomes(outcomes, path)
    clone = load_outcomes(path)
    assert len(clone) == len(outcomes)
    for a, b in zip(outcomes, clone):
        assert (a.instance_id, a.repetition, a.fold) == (b.instance_id, b.repetition, b.fold)
        assert a.chosen == b.chosen
        assert a.ert == b.ert


def test_misaligned_datasets_rejected():
    te, sh, table = _fabricated(n_instances=6, reps=2)
    shuffled = LabeledDataset(
        sh.encoding_tag, sh.feature_names,
        tuple(reversed(sh.instance_ids)), sh.repetitions, sh.X, sh.labels,
    )
    with pytest.raises(DataError):
        run_cv_experiment(te, shuffled, table, k=3, inner_k=2)
