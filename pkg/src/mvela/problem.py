"""Mixed-variable problem definitions and a seeded synthetic benchmark suite.

A problem mixes continuous, integer, and categorical decision variables.
Categorical/integer variables may gate other variables (activation); the
evaluator relaxes those conditions by substituting a canonical default for
every inactive variable, so the objective is constant along inactive
dimensions and total over the box-constrained domain.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, DomainError
from .seeding import derive_seed, rng_for

CONTINUOUS = "continuous"
INTEGER = "integer"
CATEGORICAL = "categorical"

Value = float | int | str
Assignment = Mapping[str, Value]


@dataclass(frozen=True)
class Activation:
    """Variable is active only when `parent` takes one of `values`."""

    parent: str
    values: tuple[Value, ...]


@dataclass(frozen=True)
class VariableSpec:
    name: str
    kind: str
    lower: float | None = None
    upper: float | None = None
    categories: tuple[str, ...] | None = None
    activation: Activation | None = None

    def __post_init__(self):
        if self.kind not in (CONTINUOUS, INTEGER, CATEGORICAL):
            raise ConfigError(f"variable {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == CATEGORICAL:
            if not self.categories:
                raise ConfigError(f"variable {self.name!r}: categorical needs categories")
            if len(set(self.categories)) != len(self.categories):
                raise ConfigError(f"variable {self.name!r}: duplicate categories")
        else:
            if self.lower is None or self.upper is None:
                raise ConfigError(f"variable {self.name!r}: numeric kind needs bounds")
            if self.kind == CONTINUOUS and not self.lower < self.upper:
                raise ConfigError(f"variable {self.name!r}: requires lower < upper")
            if self.kind == INTEGER and not self.lower <= self.upper:
                raise ConfigError(f"variable {self.name!r}: requires lower <= upper")

    def default_value(self) -> Value:
        """Canonical substitute used when this variable is inactive.

        Midpoint of the box for numeric kinds (floored for integers), first
        category otherwise. Any fixed choice yields the constant-hyperplane
        behavior along inactive dimensions.
        """
        if self.kind == CONTINUOUS:
            return (self.lower + self.upper) / 2.0
        if self.kind == INTEGER:
            return int(math.floor((self.lower + self.upper) / 2.0))
        return self.categories[0]

    def check_value(self, value: Value) -> None:
        if self.kind == CATEGORICAL:
            if value not in self.categories:
                raise DomainError(f"variable {self.name!r}: {value!r} not a category")
            return
        if isinstance(value, str) or isinstance(value, bool):
            raise DomainError(f"variable {self.name!r}: non-numeric value {value!r}")
        if self.kind == INTEGER and float(value) != int(value):
            raise DomainError(f"variable {self.name!r}: {value!r} is not an integer")
        if not self.lower <= float(value) <= self.upper:
            raise DomainError(
                f"variable {self.name!r}: {value!r} outside [{self.lower}, {self.upper}]"
            )


@dataclass(frozen=True)
class MixedVariableProblem:
    """Box-constrained mixed-variable minimization problem.

    `objective` must be a deterministic total function over full assignments;
    activation structure is handled by `evaluate_relaxed`, never by the
    objective itself. Instances are immutable and safe to share across
    threads.
    """

    instance_id: str
    variables: tuple[VariableSpec, ...]
    objective: Callable[[dict[str, Value]], float]
    group: str = ""

    def __post_init__(self):
        if len(self.variables) < 1:
            raise ConfigError(f"problem {self.instance_id!r}: needs at least one variable")
        seen: dict[str, VariableSpec] = {}
        for spec in self.variables:
            if spec.name in seen:
                raise ConfigError(f"problem {self.instance_id!r}: duplicate variable {spec.name!r}")
            if spec.activation is not None:
                parent = seen.get(spec.activation.parent)
                if parent is None:
                    raise ConfigError(
                        f"variable {spec.name!r}: activation parent "
                        f"{spec.activation.parent!r} not declared earlier"
                    )
                if parent.kind == CONTINUOUS:
                    raise ConfigError(
                        f"variable {spec.name!r}: activation parent must be categorical or integer"
                    )
            seen[spec.name] = spec

    @property
    def dimension(self) -> int:
        return len(self.variables)

    def variable(self, name: str) -> VariableSpec:
        for spec in self.variables:
            if spec.name == name:
                return spec
        raise KeyError(name)


def _resolve(problem: MixedVariableProblem, point: Assignment) -> tuple[dict[str, Value], dict[str, bool]]:
    """Effective values plus per-variable activity, in declaration order.

    Activation is resolved against *effective* parent values, so a child of
    an inactive parent is judged by the parent's default. Raises DomainError
    for out-of-bounds or missing values.
    """
    effective: dict[str, Value] = {}
    active: dict[str, bool] = {}
    for spec in problem.variables:
        if spec.name not in point:
            raise DomainError(f"variable {spec.name!r}: missing from assignment")
        value = point[spec.name]
        spec.check_value(value)
        act = spec.activation
        is_active = act is None or effective[act.parent] in act.values
        effective[spec.name] = value if is_active else spec.default_value()
        active[spec.name] = is_active
    return effective, active


def effective_assignment(problem: MixedVariableProblem, point: Assignment) -> dict[str, Value]:
    """Replace inactive variables by their canonical defaults."""
    return _resolve(problem, point)[0]


def active_variables(problem: MixedVariableProblem, point: Assignment) -> dict[str, bool]:
    """Which variables are active at this point (parents resolved first)."""
    return _resolve(problem, point)[1]


def evaluate_relaxed(problem: MixedVariableProblem, point: Assignment) -> float:
    """Objective value with activation constraints relaxed.

    Inactive variables are substituted by defaults before calling the raw
    objective, which makes the landscape constant along inactive dimensions.
    """
    return float(problem.objective(effective_assignment(problem, point)))


# ---------------------------------------------------------------------------
# Synthetic suite
# ---------------------------------------------------------------------------

_BASE_KINDS = ("sphere", "ellipsoid", "rastrigin")


@dataclass(frozen=True)
class SyntheticObjective:
    """Picklable objective combining a numeric base landscape with category
    effects.

    Numeric variables are scaled to [-1, 1]; each categorical level adds a
    constant offset and shifts the optimum of the base landscape, so the
    categorical choice changes both the achievable value and where the good
    region lies. `amplitude` controls the ruggedness of the rastrigin-like
    base.
    """

    kind: str
    numeric_names: tuple[str, ...]
    numeric_lower: tuple[float, ...]
    numeric_upper: tuple[float, ...]
    weights: tuple[float, ...]
    cat_names: tuple[str, ...]
    cat_offsets: tuple[tuple[float, ...], ...]
    cat_shifts: tuple[tuple[tuple[float, ...], ...], ...]
    cat_levels: tuple[tuple[str, ...], ...]
    amplitude: float = 3.0
    table_scale: float = 0.0
    table_seed: int = 0
    quantum: float = 0.0

    def _table_value(self, level_indices: tuple[int, ...]) -> float:
        # Deterministic pseudo-random value per category combination;
        # neighboring combinations are uncorrelated by construction.
        return derive_seed(self.table_seed, *level_indices) / 2.0**63

    def __call__(self, assignment: dict[str, Value]) -> float:
        offset = 0.0
        n = len(self.numeric_names)
        shift = [0.0] * n
        level_indices = []
        for ci, name in enumerate(self.cat_names):
            level = self.cat_levels[ci].index(assignment[name])
            level_indices.append(level)
            offset += self.cat_offsets[ci][level]
            level_shift = self.cat_shifts[ci][level]
            for j in range(n):
                shift[j] += level_shift[j]
        if self.table_scale > 0.0 and level_indices:
            offset += self.table_scale * self._table_value(tuple(level_indices))
        total = 0.0
        for j, name in enumerate(self.numeric_names):
            lo, hi = self.numeric_lower[j], self.numeric_upper[j]
            z = (2.0 * (float(assignment[name]) - lo) / (hi - lo) - 1.0) - shift[j]
            z *= self.weights[j]
            if self.kind == "rastrigin":
                total += z * z - self.amplitude * math.cos(2.0 * math.pi * z) + self.amplitude
            else:
                total += z * z
        if self.quantum > 0.0:
            # Cap the numeric resolution: being in the right region is all
            # that counts, so the category lookup decides the outcome. The
            # lookup itself stays unquantized and always visible.
            total = math.floor(total / self.quantum) * self.quantum
        return total + offset


@dataclass(frozen=True)
class SuiteTemplate:
    """Counts of variables per kind plus how many instances to generate."""

    n_continuous: int
    n_integer: int
    n_categorical: int
    count: int = 1
    hierarchical: bool = False

    def __post_init__(self):
        if self.n_continuous + self.n_integer + self.n_categorical < 1:
            raise ConfigError("template must declare at least one variable")
        if self.n_continuous < 1:
            raise ConfigError(
                "template needs at least one continuous variable "
                "(all-discrete designs duplicate rows and break distance features)"
            )
        if self.count < 1:
            raise ConfigError("template count must be >= 1")
        if self.hierarchical and self.n_categorical < 1:
            raise ConfigError("hierarchical template needs a categorical parent")

    @property
    def dimension(self) -> int:
        return self.n_continuous + self.n_integer + self.n_categorical

    def label(self) -> str:
        tag = f"c{self.n_continuous}i{self.n_integer}k{self.n_categorical}"
        return tag + ("h" if self.hierarchical else "")


@dataclass(frozen=True)
class SuiteConfig:
    templates: tuple[SuiteTemplate, ...]

    def __post_init__(self):
        if not self.templates:
            raise ConfigError("suite config needs at least one template")

    def to_dict(self) -> dict:
        return {
            "templates": [
                {
                    "n_continuous": t.n_continuous,
                    "n_integer": t.n_integer,
                    "n_categorical": t.n_categorical,
                    "count": t.count,
                    "hierarchical": t.hierarchical,
                }
                for t in self.templates
            ]
        }

    @staticmethod
    def from_dict(data: dict) -> "SuiteConfig":
        return SuiteConfig(
            templates=tuple(SuiteTemplate(**entry) for entry in data["templates"])
        )


def _build_problem(template: SuiteTemplate, instance_id: str, problem_seed: int) -> MixedVariableProblem:
    rng = rng_for(problem_seed)
    kind = _BASE_KINDS[int(rng.integers(len(_BASE_KINDS)))]
    # Two instance regimes drive the portfolio's complementarity. Structured
    # instances have mild category effects on top of the numeric base, so
    # steady local refinement pays off. Scatter instances put most of the
    # objective into an uncorrelated lookup over category combinations,
    # which punishes neighborhood search and rewards uniform exploration.
    scatter = bool(template.n_categorical >= 1 and rng.random() < 0.5)

    variables: list[VariableSpec] = []
    numeric_names: list[str] = []
    numeric_lower: list[float] = []
    numeric_upper: list[float] = []
    for i in range(template.n_continuous):
        lo = float(rng.uniform(-6.0, -2.0))
        hi = float(rng.uniform(2.0, 6.0))
        variables.append(VariableSpec(f"x{i}", CONTINUOUS, lower=lo, upper=hi))
        numeric_names.append(f"x{i}")
        numeric_lower.append(lo)
        numeric_upper.append(hi)
    for i in range(template.n_integer):
        lo = int(rng.integers(-5, 1))
        hi = int(lo + rng.integers(6, 13))
        variables.append(VariableSpec(f"z{i}", INTEGER, lower=lo, upper=hi))
        numeric_names.append(f"z{i}")
        numeric_lower.append(float(lo))
        numeric_upper.append(float(hi))

    shift_scale = 0.15
    cat_names: list[str] = []
    cat_levels: list[tuple[str, ...]] = []
    cat_offsets: list[tuple[float, ...]] = []
    cat_shifts: list[tuple[tuple[float, ...], ...]] = []
    n_numeric = len(numeric_names)
    for i in range(template.n_categorical):
        n_levels = int(rng.integers(5, 9)) if scatter else int(rng.integers(2, 5))
        levels = tuple(f"c{i}v{j}" for j in range(n_levels))
        variables.append(VariableSpec(f"c{i}", CATEGORICAL, categories=levels))
        if scatter:
            offsets = np.zeros(n_levels)  # the lookup table carries the effect
        else:
            offsets = rng.uniform(0.0, 1.5, size=n_levels)
            offsets[int(rng.integers(n_levels))] = 0.0
        shifts = rng.uniform(-shift_scale, shift_scale, size=(n_levels, n_numeric))
        cat_names.append(f"c{i}")
        cat_levels.append(levels)
        cat_offsets.append(tuple(float(v) for v in offsets))
        cat_shifts.append(tuple(tuple(float(v) for v in row) for row in shifts))

    if template.hierarchical:
        # First continuous variable becomes conditional on the first
        # categorical one, active under roughly half of its levels. The
        # parent must be declared before its child, so it moves to the front.
        parent_levels = cat_levels[0]
        active = parent_levels[: max(1, len(parent_levels) // 2)]
        gated = variables[0]
        gated_spec = VariableSpec(
            gated.name,
            gated.kind,
            lower=gated.lower,
            upper=gated.upper,
            activation=Activation(parent=cat_names[0], values=tuple(active)),
        )
        parent_spec = next(v for v in variables if v.name == cat_names[0])
        rest = [v for v in variables if v.name not in (cat_names[0], gated.name)]
        variables = [parent_spec, gated_spec] + rest

    weights = [1.0] * n_numeric
    if kind == "ellipsoid":
        weights = [float(v) for v in np.geomspace(1.0, 4.0, max(n_numeric, 1))] if n_numeric else []
    if scatter:
        # Shallow numeric part: most of the objective rides on the lookup.
        weights = [0.5 * w for w in weights]
    amplitude = float(rng.uniform(1.0, 2.0)) if kind == "rastrigin" else 3.0

    objective = SyntheticObjective(
        kind=kind,
        numeric_names=tuple(numeric_names),
        numeric_lower=tuple(numeric_lower),
        numeric_upper=tuple(numeric_upper),
        weights=tuple(weights),
        cat_names=tuple(cat_names),
        cat_offsets=tuple(cat_offsets),
        cat_shifts=tuple(cat_shifts),
        cat_levels=tuple(cat_levels),
        amplitude=amplitude,
        table_scale=10.0 if scatter else 0.0,
        table_seed=derive_seed(problem_seed, "table"),
        quantum=1.0 if scatter else 0.0,
    )
    return MixedVariableProblem(
        instance_id=instance_id,
        variables=tuple(variables),
        objective=objective,
        group=template.label(),
    )


def generate_synthetic_suite(config: SuiteConfig, seed: int) -> list[MixedVariableProblem]:
    """Deterministic list of problems; same (config, seed) reproduces it bit-exactly."""
    problems: list[MixedVariableProblem] = []
    index = 0
    for t_idx, template in enumerate(config.templates):
        for c in range(template.count):
            problem_seed = derive_seed(seed, "suite", t_idx, c)
            instance_id = f"syn{index:03d}_{template.label()}"
            problems.append(_build_problem(template, instance_id, problem_seed))
            index += 1
    return problems


def suite_manifest(config: SuiteConfig, seed: int, problems: Sequence[MixedVariableProblem]) -> dict:
    """JSON-serializable manifest sufficient to rebuild the suite bit-exactly."""
    entries = []
    index = 0
    for t_idx, template in enumerate(config.templates):
        for c in range(template.count):
            problem = problems[index]
            entries.append(
                {
                    "instance_id": problem.instance_id,
                    "group": problem.group,
                    "template_index": t_idx,
                    "template": {
                        "n_continuous": template.n_continuous,
                        "n_integer": template.n_integer,
                        "n_categorical": template.n_categorical,
                        "hierarchical": template.hierarchical,
                    },
                    "problem_seed": derive_seed(seed, "suite", t_idx, c),
                    "variables": [_spec_to_dict(v) for v in problem.variables],
                }
            )
            index += 1
    return {"generator_seed": seed, "suite": config.to_dict(), "problems": entries}


def load_suite_manifest(manifest: dict) -> list[MixedVariableProblem]:
    """Rebuild problems from a manifest written by `suite_manifest`."""
    problems = []
    for entry in manifest["problems"]:
        template = SuiteTemplate(count=1, **entry["template"])
        problem = _build_problem(template, entry["instance_id"], entry["problem_seed"])
        rebuilt = [_spec_to_dict(v) for v in problem.variables]
        if rebuilt != entry["variables"]:
            raise ConfigError(
                f"manifest variables for {entry['instance_id']!r} do not match regeneration"
            )
        problems.append(problem)
    return problems


def save_suite_manifest(manifest: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True))


def read_suite_manifest(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())


def _spec_to_dict(spec: VariableSpec) -> dict:
    data: dict = {"name": spec.name, "kind": spec.kind}
    if spec.kind == CATEGORICAL:
        data["categories"] = list(spec.categories)
    else:
        data["lower"] = spec.lower
        data["upper"] = spec.upper
    if spec.activation is not None:
        data["activation"] = {
            "parent": spec.activation.parent,
            "values": list(spec.activation.values),
        }
    return data
