"""Algorithm selectors over landscape features, with grouped cross-validation
and three ways to combine the two encodings.

Per encoding a multi-class forest maps the 38 features to the best algorithm
(lowest ERT, ties toward earlier portfolio order). Grouped k-fold keeps all
repetitions of an instance in one fold. On top of the two selectors:

* Hybrid: oracle that keeps whichever prediction realized the lower ERT
  (the virtual best encoding; not a deployable selector).
* Meta: a binary forest fed both feature vectors (TE block then SH block)
  decides which selector to trust; its training labels come from inner
  out-of-fold predictions so no test information leaks.
* Confidence: trust the selector whose top class probability is higher.

Ties in Hybrid, Meta labels, and Confidence all resolve toward TE.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .forest import ClassificationForest, ForestParams, fit_classification
from .portfolio import PerformanceTable
from .seeding import derive_seed, rng_for

STRATEGIES = ("TE", "SH", "Hybrid", "Meta", "Confidence")
META_CLASSES = ("TE", "SH")


@dataclass(frozen=True)
class LabeledDataset:
    """Feature rows for one encoding; label = best algorithm of the instance."""

    encoding_tag: str
    feature_names: tuple[str, ...]
    instance_ids: tuple[str, ...]
    repetitions: tuple[int, ...]
    X: np.ndarray
    labels: tuple[str, ...]

    def __post_init__(self):
        if not (len(self.instance_ids) == len(self.repetitions) == self.X.shape[0] == len(self.labels)):
            raise DataError("labeled dataset rows are misaligned")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def rows_for(self, instances: set[str]) -> np.ndarray:
        return np.array([i for i, iid in enumerate(self.instance_ids) if iid in instances])


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignment: dict[str, int]
    seed: int

    def fold_instances(self, fold: int) -> set[str]:
        return {iid for iid, f in self.assignment.items() if f == fold}


@dataclass(frozen=True)
class SelectionOutcome:
    """Chosen algorithm and realized ERT per strategy for one (instance, repetition)."""

    instance_id: str
    repetition: int
    fold: int
    chosen: dict[str, str]
    ert: dict[str, float]


def label_instances(perf: PerformanceTable) -> dict[str, str]:
    """Best algorithm per instance; ties break toward earlier portfolio order."""
    labels = {}
    for instance_id in perf.targets:
        best = None
        best_ert = np.inf
        for algorithm in perf.algorithms:
            ert = perf.records[(instance_id, algorithm)].ert
            if ert < best_ert:
                best, best_ert = algorithm, ert
        if best is None:  # every algorithm infinite; take declaration order
            best = perf.algorithms[0]
        labels[instance_id] = best
    return labels


def grouped_kfold(instance_ids, k: int = 10, seed: int = 0) -> FoldPlan:
    """Seeded shuffle then round-robin assignment; fold sizes differ by <= 1."""
    instance_ids = list(instance_ids)
    if len(instance_ids) < k:
        raise DataError(f"need at least {k} instances for {k}-fold CV")
    order = rng_for(seed, "folds").permutation(len(instance_ids))
    assignment = {instance_ids[int(j)]: i % k for i, j in enumerate(order)}
    return FoldPlan(k=k, assignment=assignment, seed=seed)


def build_labeled_dataset(features, perf: PerformanceTable, encoding_tag: str) -> LabeledDataset:
    """Assemble rows from FeatureVector objects of one encoding."""
    labels = label_instances(perf)
    rows = [fv for fv in features if fv.encoding_tag == encoding_tag]
    if not rows:
        raise DataError(f"no feature vectors for encoding {encoding_tag!r}")
    rows.sort(key=lambda fv: (fv.problem_id, fv.repetition))
    return LabeledDataset(
        encoding_tag=encoding_tag,
        feature_names=rows[0].names,
        instance_ids=tuple(fv.problem_id for fv in rows),
        repetitions=tuple(fv.repetition for fv in rows),
        X=np.vstack([fv.values for fv in rows]),
        labels=tuple(labels[fv.problem_id] for fv in rows),
    )


def train_selector(
    dataset: LabeledDataset,
    row_idx: np.ndarray,
    params: ForestParams,
    class_labels: tuple[str, ...],
) -> ClassificationForest:
    if row_idx.size == 0:
        raise DataError("empty training set")
    X = dataset.X[row_idx]
    labels = [dataset.labels[i] for i in row_idx]
    return fit_classification(X, labels, params, class_labels=class_labels)


def hybrid_oracle(pred_te: str, pred_sh: str, erts: dict[str, float]) -> str:
    """The better of the two predictions by realized ERT; ties go to TE."""
    return pred_sh if erts[pred_sh] < erts[pred_te] else pred_te


def meta_select(
    meta: ClassificationForest,
    te_row: np.ndarray,
    sh_row: np.ndarray,
    pred_te: str,
    pred_sh: str,
) -> str:
    choice = meta.predict(np.concatenate([te_row, sh_row]))
    return pred_te if choice == "TE" else pred_sh


def confidence_select(
    selector_te: ClassificationForest,
    te_row: np.ndarray,
    selector_sh: ClassificationForest,
    sh_row: np.ndarray,
) -> str:
    """Trust the selector with the higher top class probability; ties to TE."""
    proba_te = selector_te.predict_proba(te_row)
    proba_sh = selector_sh.predict_proba(sh_row)
    pred_te = selector_te.class_labels[int(np.argmax(proba_te))]
    pred_sh = selector_sh.class_labels[int(np.argmax(proba_sh))]
    if float(proba_te.max()) >= float(proba_sh.max()):
        return pred_te
    return pred_sh


@dataclass
class CvAudit:
    """Per-fold train/test instance sets, for leakage checks."""

    folds: list[dict] = field(default_factory=list)


def _realized_ert(perf: PerformanceTable, instance_id: str, algorithm: str) -> float:
    return perf.records[(instance_id, algorithm)].ert


def _meta_training_set(
    te: LabeledDataset,
    sh: LabeledDataset,
    train_instances: list[str],
    perf: PerformanceTable,
    params: ForestParams,
    inner_k: int,
    seed: int,
    class_labels: tuple[str, ...],
):
    """Out-of-fold selector predictions over the training instances define the
    meta labels (TE when its prediction realized an ERT <= SH's)."""
    inner_k = min(inner_k, len(train_instances))
    if inner_k < 2:
        raise DataError("meta training needs at least 2 inner folds")
    plan = grouped_kfold(train_instances, k=inner_k, seed=seed)
    features = []
    labels = []
    for fold in range(inner_k):
        test_instances = plan.fold_instances(fold)
        fit_instances = set(train_instances) - test_instances
        te_fit = te.rows_for(fit_instances)
        sh_fit = sh.rows_for(fit_instances)
        selector_te = train_selector(te, te_fit, params, class_labels)
        selector_sh = train_selector(sh, sh_fit, params, class_labels)
        te_rows = te.rows_for(test_instances)
        sh_rows = sh.rows_for(test_instances)
        pred_te = selector_te.predict(te.X[te_rows])
        pred_sh = selector_sh.predict(sh.X[sh_rows])
        for j in range(te_rows.size):
            iid = te.instance_ids[te_rows[j]]
            ert_te = _realized_ert(perf, iid, pred_te[j])
            ert_sh = _realized_ert(perf, iid, pred_sh[j])
            features.append(np.concatenate([te.X[te_rows[j]], sh.X[sh_rows[j]]]))
            labels.append("TE" if ert_te <= ert_sh else "SH")
    return np.vstack(features), labels


def run_cv_experiment(
    te: LabeledDataset,
    sh: LabeledDataset,
    perf: PerformanceTable,
    k: int = 10,
    seed: int = 0,
    forest_params: ForestParams | None = None,
    inner_k: int = 5,
) -> tuple[list[SelectionOutcome], CvAudit]:
    """Grouped k-fold evaluation of the five strategies.

    Row alignment between the two encodings is by (instance, repetition).
    All randomness is derived from (seed, fold index).
    """
    if te.instance_ids != sh.instance_ids or te.repetitions != sh.repetitions:
        raise DataError("TE and SH datasets are not row-aligned")
    params = forest_params or ForestParams(feature_subsample="sqrt")
    class_labels = perf.algorithms
    instance_ids = list(dict.fromkeys(te.instance_ids))
    plan = grouped_kfold(instance_ids, k=k, seed=seed)

    outcomes: list[SelectionOutcome] = []
    audit = CvAudit()
    for fold in range(k):
        test_instances = plan.fold_instances(fold)
        train_instances = [iid for iid in instance_ids if iid not in test_instances]
        fold_seed = derive_seed(seed, "fold", fold)

        te_train = te.rows_for(set(train_instances))
        sh_train = sh.rows_for(set(train_instances))
        fold_params = ForestParams(
            n_trees=params.n_trees,
            max_depth=params.max_depth,
            min_samples_leaf=params.min_samples_leaf,
            feature_subsample=params.feature_subsample,
            bootstrap=params.bootstrap,
            seed=derive_seed(fold_seed, "selector"),
        )
        selector_te = train_selector(te, te_train, fold_params, class_labels)
        selector_sh = train_selector(sh, sh_train, fold_params, class_labels)

        meta_X, meta_labels = _meta_training_set(
            te,
            sh,
            train_instances,
            perf,
            fold_params,
            inner_k,
            derive_seed(fold_seed, "inner"),
            class_labels,
        )
        meta_params = ForestParams(
            n_trees=params.n_trees,
            max_depth=params.max_depth,
            min_samples_leaf=params.min_samples_leaf,
            feature_subsample=params.feature_subsample,
            bootstrap=params.bootstrap,
            seed=derive_seed(fold_seed, "meta"),
        )
        meta = fit_classification(meta_X, meta_labels, meta_params, class_labels=META_CLASSES)

        audit.folds.append(
            {
                "fold": fold,
                "train_instances": sorted(train_instances),
                "test_instances": sorted(test_instances),
            }
        )

        te_rows = te.rows_for(test_instances)
        sh_rows = sh.rows_for(test_instances)
        pred_te_all = selector_te.predict(te.X[te_rows])
        pred_sh_all = selector_sh.predict(sh.X[sh_rows])
        for j in range(te_rows.size):
            i_te = te_rows[j]
            i_sh = sh_rows[j]
            iid = te.instance_ids[i_te]
            rep = te.repetitions[i_te]
            pred_te, pred_sh = pred_te_all[j], pred_sh_all[j]
            erts = {a: _realized_ert(perf, iid, a) for a in class_labels}
            chosen = {
                "TE": pred_te,
                "SH": pred_sh,
                "Hybrid": hybrid_oracle(pred_te, pred_sh, erts),
                "Meta": meta_select(meta, te.X[i_te], sh.X[i_sh], pred_te, pred_sh),
                "Confidence": confidence_select(selector_te, te.X[i_te], selector_sh, sh.X[i_sh]),
            }
            outcomes.append(
                SelectionOutcome(
                    instance_id=iid,
                    repetition=rep,
                    fold=fold,
                    chosen=chosen,
                    ert={s: erts[a] for s, a in chosen.items()},
                )
            )
    outcomes.sort(key=lambda o: (o.instance_id, o.repetition))
    return outcomes, audit


def save_outcomes(outcomes: list[SelectionOutcome], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["instance", "repetition", "fold"]
        for strategy in STRATEGIES:
            header += [f"{strategy}_choice", f"{strategy}_ert"]
        writer.writerow(header)
        for o in outcomes:
            row = [o.instance_id, o.repetition, o.fold]
            for strategy in STRATEGIES:
                row += [o.chosen[strategy], repr(o.ert[strategy])]
            writer.writerow(row)


def load_outcomes(path: str | Path) -> list[SelectionOutcome]:
    outcomes = []
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            chosen = {s: row[f"{s}_choice"] for s in STRATEGIES}
            ert = {s: float(row[f"{s}_ert"]) for s in STRATEGIES}
            outcomes.append(
                SelectionOutcome(
                    instance_id=row["instance"],
                    repetition=int(row["repetition"]),
                    fold=int(row["fold"]),
                    chosen=chosen,
                    ert=ert,
                )
            )
    return outcomes


def save_audit(audit: CvAudit, path: str | Path) -> None:
    Path(path).write_text(json.dumps({"folds": audit.folds}, indent=2, sort_keys=True))
