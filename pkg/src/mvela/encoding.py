"""Categorical-to-numeric encodings of an initial design.

Three routes with increasing nuance:

* one-hot: k indicator columns per categorical variable (baseline).
* target: each level becomes one static number, a weighted blend of the
  level's mean objective and the global mean, lambda = n_j / (n_j + m).
* shap: a regression forest is fit as surrogate on the design, then every
  categorical cell is replaced by that feature's Shapley attribution for
  its own row, so the same level can encode differently depending on the
  numeric context it appears in.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .design import CATEGORICAL, Column, Design, EncodedDesign
from .errors import DataError
from .forest import ForestParams, fit_regression
from .seeding import derive_seed, rng_for
from .shapley import permutation_shapley_batch

ENCODINGS = ("onehot", "target", "shap")


@dataclass(frozen=True)
class EncoderConfig:
    te_weight: float = 10.0
    shap_n_permutations: int = 10
    shap_background_cap: int = 100
    shap_forest_params: ForestParams = ForestParams()
    seed: int = 0

    def __post_init__(self):
        if self.te_weight < 0:
            raise DataError("te_weight must be >= 0")
        if self.shap_n_permutations < 1:
            raise DataError("shap_n_permutations must be >= 1")
        if self.shap_background_cap < 1:
            raise DataError("shap_background_cap must be >= 1")

    def to_dict(self) -> dict:
        fp = self.shap_forest_params
        return {
            "te_weight": self.te_weight,
            "shap_n_permutations": self.shap_n_permutations,
            "shap_background_cap": self.shap_background_cap,
            "shap_forest_params": {
                "n_trees": fp.n_trees,
                "max_depth": fp.max_depth,
                "min_samples_leaf": fp.min_samples_leaf,
                "feature_subsample": fp.feature_subsample,
                "bootstrap": fp.bootstrap,
                "seed": fp.seed,
            },
            "seed": self.seed,
        }

    @staticmethod
    def from_dict(data: dict) -> "EncoderConfig":
        data = dict(data)
        if "shap_forest_params" in data:
            data["shap_forest_params"] = ForestParams(**data["shap_forest_params"])
        return EncoderConfig(**data)


def one_hot_encode(design: Design) -> EncodedDesign:
    """Indicator columns per categorical level; numeric columns pass through."""
    names: list[str] = []
    cols: list[np.ndarray] = []
    for j, col in enumerate(design.columns):
        values = design.column_values(j)
        if col.kind != CATEGORICAL:
            names.append(col.name)
            cols.append(values.astype(float))
            continue
        for level in _levels(col):
            names.append(f"{col.name}={level}")
            cols.append((values == level).astype(float))
    return EncodedDesign(
        problem_id=design.problem_id,
        feature_names=tuple(names),
        X=np.column_stack(cols),
        Y=design.Y.copy(),
        encoding_tag="onehot",
    )


def target_encode(design: Design, m: float = 10.0) -> EncodedDesign:
    """Static per-level encoding: lambda * mean(Y_level) + (1-lambda) * mean(Y).

    lambda = n_level / (n_level + m); with m = 0 a level maps exactly to its
    own mean. Every occurrence of a level gets the same number.
    """
    if m < 0:
        raise DataError("te smoothing weight must be >= 0")
    global_mean = float(design.Y.mean())
    cols = []
    for j, col in enumerate(design.columns):
        values = design.column_values(j)
        if col.kind != CATEGORICAL:
            cols.append(values.astype(float))
            continue
        encoded = np.empty(design.n, dtype=float)
        for level in np.unique(values.astype(str)):
            mask = values == level
            n_j = int(mask.sum())
            lam = n_j / (n_j + m) if n_j + m > 0 else 1.0
            encoded[mask] = lam * float(design.Y[mask].mean()) + (1.0 - lam) * global_mean
        cols.append(encoded)
    return EncodedDesign(
        problem_id=design.problem_id,
        feature_names=tuple(c.name for c in design.columns),
        X=np.column_stack(cols),
        Y=design.Y.copy(),
        encoding_tag="target",
    )


def shap_encode(design: Design, config: EncoderConfig) -> EncodedDesign:
    """Per-observation encoding of categorical cells by Shapley attribution.

    The surrogate forest sees categorical levels as integer codes (order of
    declaration; trees split on codes without implying a metric). The
    background is the design itself, subsampled to the configured cap. Row i
    uses the permutation stream seeded by (config.seed, i). Numeric columns
    pass through untouched; `max_efficiency_gap` records the worst
    |base + sum(phi) - value(full coalition)| across rows.
    """
    if design.n < 1:
        raise DataError("shap_encode needs at least one row")
    cat_idx = [j for j, c in enumerate(design.columns) if c.kind == CATEGORICAL]
    if not cat_idx:
        return EncodedDesign(
            problem_id=design.problem_id,
            feature_names=tuple(c.name for c in design.columns),
            X=design.X.astype(float),
            Y=design.Y.copy(),
            encoding_tag="shap",
        )

    surrogate_X = _integer_coded(design)
    if design.n > config.shap_background_cap:
        rng = rng_for(derive_seed(config.seed, "background"))
        keep = np.sort(rng.choice(design.n, size=config.shap_background_cap, replace=False))
        background = surrogate_X[keep]
    else:
        background = surrogate_X

    forest = fit_regression(surrogate_X, design.Y, config.shap_forest_params)
    bases, phis, fulls = permutation_shapley_batch(
        forest.predict,
        surrogate_X,
        background,
        n_permutations=config.shap_n_permutations,
        seed=config.seed,
    )
    gap = float(np.max(np.abs(bases + phis.sum(axis=1) - fulls)))

    X = np.empty((design.n, design.dimension), dtype=float)
    for j, col in enumerate(design.columns):
        if col.kind == CATEGORICAL:
            X[:, j] = phis[:, j]
        else:
            X[:, j] = design.column_values(j).astype(float)
    return EncodedDesign(
        problem_id=design.problem_id,
        feature_names=tuple(c.name for c in design.columns),
        X=X,
        Y=design.Y.copy(),
        encoding_tag="shap",
        max_efficiency_gap=gap,
    )


def encode(design: Design, method: str, config: EncoderConfig | None = None) -> EncodedDesign:
    config = config or EncoderConfig()
    if method == "onehot":
        return one_hot_encode(design)
    if method == "target":
        return target_encode(design, m=config.te_weight)
    if method == "shap":
        return shap_encode(design, config)
    raise DataError(f"unknown encoding {method!r}; expected one of {ENCODINGS}")


def _integer_coded(design: Design) -> np.ndarray:
    """Design matrix with categorical cells mapped to their level index."""
    X = np.empty((design.n, design.dimension), dtype=float)
    for j, col in enumerate(design.columns):
        values = design.column_values(j)
        if col.kind == CATEGORICAL:
            levels = _levels(col)
            lookup = {level: i for i, level in enumerate(levels)}
            X[:, j] = [lookup[v] for v in values]
        else:
            X[:, j] = values.astype(float)
    return X


def _levels(col: Column) -> tuple[str, ...]:
    if col.levels is None:
        raise DataError(f"column {col.name!r} is categorical but has no declared levels")
    return col.levels
