"""Initial designs: uniform sampling of the relaxed search space plus the
min-max normalization applied right before feature computation.

A `Design` keeps mixed-typed columns (floats, ints, category labels); the
encoders in `mvela.encoding` turn it into an all-numeric `EncodedDesign`,
and `normalize` maps that onto [0, 1] per column, producing the
`NumericDesign` the feature code consumes.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .problem import CATEGORICAL, CONTINUOUS, INTEGER, MixedVariableProblem, evaluate_relaxed
from .seeding import rng_for


@dataclass(frozen=True)
class Column:
    name: str
    kind: str
    levels: tuple[str, ...] | None = None


@dataclass(frozen=True)
class Design:
    """Sampled points X (n rows, mixed types per column) with raw objectives Y."""

    problem_id: str
    columns: tuple[Column, ...]
    X: np.ndarray  # (n, D) object array
    Y: np.ndarray  # (n,) float array
    seed: int

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dimension(self) -> int:
        return len(self.columns)

    def column_values(self, index: int) -> np.ndarray:
        return self.X[:, index]


@dataclass(frozen=True)
class EncodedDesign:
    """All-numeric design in raw scale, before normalization."""

    problem_id: str
    feature_names: tuple[str, ...]
    X: np.ndarray  # (n, D') float array
    Y: np.ndarray  # (n,) raw objective values
    encoding_tag: str
    max_efficiency_gap: float = 0.0


@dataclass(frozen=True)
class NumericDesign:
    """Normalized design; every entry of Xn and Yn lies in [0, 1]."""

    problem_id: str
    feature_names: tuple[str, ...]
    Xn: np.ndarray
    Yn: np.ndarray
    encoding_tag: str


def sample_initial_design(
    problem: MixedVariableProblem, multiplier: int = 50, seed: int = 0
) -> Design:
    """Uniform sample of n = multiplier * D points over the relaxed box.

    Activation conditions are ignored while sampling; objective values come
    from the relaxed evaluator, so rows that violate hierarchy land on the
    constant hyperplanes instead of failing.
    """
    if multiplier < 1:
        raise DataError("multiplier must be >= 1")
    rng = rng_for(seed)
    n = multiplier * problem.dimension
    columns = []
    raw_columns = []
    for spec in problem.variables:
        if spec.kind == CONTINUOUS:
            raw_columns.append(rng.uniform(spec.lower, spec.upper, size=n))
            columns.append(Column(spec.name, CONTINUOUS))
        elif spec.kind == INTEGER:
            raw_columns.append(rng.integers(int(spec.lower), int(spec.upper) + 1, size=n))
            columns.append(Column(spec.name, INTEGER))
        else:
            idx = rng.integers(len(spec.categories), size=n)
            raw_columns.append(np.array(spec.categories, dtype=object)[idx])
            columns.append(Column(spec.name, CATEGORICAL, levels=spec.categories))

    X = np.empty((n, problem.dimension), dtype=object)
    for j, values in enumerate(raw_columns):
        if columns[j].kind == CONTINUOUS:
            X[:, j] = [float(v) for v in values]
        elif columns[j].kind == INTEGER:
            X[:, j] = [int(v) for v in values]
        else:
            X[:, j] = values

    Y = np.empty(n, dtype=float)
    names = [c.name for c in columns]
    for i in range(n):
        Y[i] = evaluate_relaxed(problem, dict(zip(names, X[i])))
    return Design(problem.instance_id, tuple(columns), X, Y, seed)


def normalize(encoded: EncodedDesign) -> NumericDesign:
    """Min-max scale every column and Y independently onto [0, 1].

    Constant columns map to 0.5 everywhere (neutral value, avoids division
    by zero). Idempotent on its own output.
    """
    if not np.all(np.isfinite(encoded.X)) or not np.all(np.isfinite(encoded.Y)):
        raise DataError("normalize requires finite input")
    Xn = np.empty_like(encoded.X, dtype=float)
    for j in range(encoded.X.shape[1]):
        Xn[:, j] = _minmax(encoded.X[:, j])
    return NumericDesign(
        problem_id=encoded.problem_id,
        feature_names=encoded.feature_names,
        Xn=Xn,
        Yn=_minmax(encoded.Y),
        encoding_tag=encoded.encoding_tag,
    )


def _minmax(values: np.ndarray) -> np.ndarray:
    lo = values.min()
    hi = values.max()
    if hi == lo:
        return np.full(values.shape, 0.5)
    return (values - lo) / (hi - lo)


# ---------------------------------------------------------------------------
# CSV persistence (header row; category cells carry labels; sidecar JSON
# stores column kinds, levels, and the sampling seed)
# ---------------------------------------------------------------------------


def save_design(design: Design, csv_path: str | Path, extra_meta: dict | None = None) -> None:
    csv_path = Path(csv_path)
    with csv_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([c.name for c in design.columns] + ["__objective__"])
        for i in range(design.n):
            row = [_cell(design.X[i, j], design.columns[j].kind) for j in range(design.dimension)]
            writer.writerow(row + [repr(float(design.Y[i]))])
    meta = {
        "problem_id": design.problem_id,
        "seed": design.seed,
        "columns": [
            {"name": c.name, "kind": c.kind, "levels": list(c.levels) if c.levels else None}
            for c in design.columns
        ],
    }
    meta.update(extra_meta or {})
    csv_path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True))


def load_design(csv_path: str | Path) -> Design:
    csv_path = Path(csv_path)
    meta = json.loads(csv_path.with_suffix(".json").read_text())
    columns = tuple(
        Column(c["name"], c["kind"], tuple(c["levels"]) if c["levels"] else None)
        for c in meta["columns"]
    )
    rows = []
    with csv_path.open(newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            rows.append(row)
    n = len(rows)
    X = np.empty((n, len(columns)), dtype=object)
    Y = np.empty(n, dtype=float)
    for i, row in enumerate(rows):
        for j, col in enumerate(columns):
            if col.kind == CONTINUOUS:
                X[i, j] = float(row[j])
            elif col.kind == INTEGER:
                X[i, j] = int(row[j])
            else:
                X[i, j] = row[j]
        Y[i] = float(row[-1])
    return Design(meta["problem_id"], columns, X, Y, meta["seed"])


def save_numeric_design(
    design: NumericDesign, csv_path: str | Path, extra_meta: dict | None = None
) -> None:
    csv_path = Path(csv_path)
    with csv_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(design.feature_names) + ["__objective__"])
        for i in range(design.Xn.shape[0]):
            writer.writerow([repr(float(v)) for v in design.Xn[i]] + [repr(float(design.Yn[i]))])
    meta = {
        "problem_id": design.problem_id,
        "encoding_tag": design.encoding_tag,
        "feature_names": list(design.feature_names),
    }
    meta.update(extra_meta or {})
    csv_path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True))


def load_numeric_design(csv_path: str | Path) -> NumericDesign:
    csv_path = Path(csv_path)
    meta = json.loads(csv_path.with_suffix(".json").read_text())
    data = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2, dtype=float)
    return NumericDesign(
        problem_id=meta["problem_id"],
        feature_names=tuple(meta["feature_names"]),
        Xn=data[:, :-1],
        Yn=data[:, -1],
        encoding_tag=meta["encoding_tag"],
    )


def _cell(value, kind: str) -> str:
    if kind == CONTINUOUS:
        return repr(float(value))
    if kind == INTEGER:
        return str(int(value))
    return str(value)
