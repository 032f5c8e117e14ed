"""Built-in optimizer portfolio, run traces, per-instance targets, and ERT.

Three cheap seeded optimizers that are complementary on the synthetic suite:
pure random search, a (mu+lambda) evolutionary algorithm, and simulated
annealing sharing the EA's neighborhood. Every run records its raw
evaluations and the running best; the per-instance target is the
0.01-quantile of all raw values pooled over algorithms and repetitions,
which guarantees the best-performing run reaches it.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .problem import (
    CATEGORICAL,
    CONTINUOUS,
    MixedVariableProblem,
    VariableSpec,
    active_variables,
    evaluate_relaxed,
)
from .seeding import derive_seed, rng_for

ALGORITHMS = ("random_search", "mixed_evolutionary", "mixed_annealing")

EA_MU = 5
EA_LAMBDA = 10
SA_CALIBRATION_EVALS = 10


@dataclass(frozen=True)
class RunTrace:
    """One optimizer run. `values` holds the raw evaluations (needed for the
    target quantile); `best_so_far` is its running minimum, length == budget."""

    instance_id: str
    algorithm_id: str
    repetition: int
    best_so_far: np.ndarray
    seed: int
    values: np.ndarray | None = None


@dataclass(frozen=True)
class PerformanceRecord:
    instance_id: str
    algorithm_id: str
    ert: float
    successes: int
    total_evals: int


@dataclass(frozen=True)
class PerformanceTable:
    algorithms: tuple[str, ...]
    records: dict[tuple[str, str], PerformanceRecord]
    targets: dict[str, float]

    @property
    def instance_ids(self) -> list[str]:
        return sorted(self.targets)

    def record(self, instance_id: str, algorithm_id: str) -> PerformanceRecord:
        return self.records[(instance_id, algorithm_id)]

    def vbs_ert(self, instance_id: str) -> float:
        return min(self.records[(instance_id, a)].ert for a in self.algorithms)


# ---------------------------------------------------------------------------
# point sampling and mutation (shared EA / SA neighborhood)
# ---------------------------------------------------------------------------


def _sample_value(spec: VariableSpec, rng: np.random.Generator):
    if spec.kind == CONTINUOUS:
        return float(rng.uniform(spec.lower, spec.upper))
    if spec.kind == CATEGORICAL:
        return spec.categories[int(rng.integers(len(spec.categories)))]
    return int(rng.integers(int(spec.lower), int(spec.upper) + 1))


def _sample_point(problem: MixedVariableProblem, rng: np.random.Generator) -> dict:
    return {spec.name: _sample_value(spec, rng) for spec in problem.variables}


def _mutate_value(spec: VariableSpec, value, rng: np.random.Generator):
    if spec.kind == CONTINUOUS:
        step = 0.1 * (spec.upper - spec.lower) * rng.normal()
        return float(min(max(value + step, spec.lower), spec.upper))
    if spec.kind == CATEGORICAL:
        return spec.categories[int(rng.integers(len(spec.categories)))]
    step = int(rng.geometric(0.5))
    if rng.random() < 0.5:
        step = -step
    return int(min(max(value + step, int(spec.lower)), int(spec.upper)))


def _mutate(problem: MixedVariableProblem, point: dict, rng: np.random.Generator) -> dict:
    """Per-gene mutation at rate 1/D (at least one gene), hierarchy-aware:
    a variable switched from inactive to active is resampled uniformly."""
    d = problem.dimension
    before = active_variables(problem, point)
    child = dict(point)
    mutated = False
    for spec in problem.variables:
        if rng.random() < 1.0 / d:
            child[spec.name] = _mutate_value(spec, child[spec.name], rng)
            mutated = True
    if not mutated:
        spec = problem.variables[int(rng.integers(d))]
        child[spec.name] = _mutate_value(spec, child[spec.name], rng)
    after = active_variables(problem, child)
    for spec in problem.variables:
        if after[spec.name] and not before[spec.name]:
            child[spec.name] = _sample_value(spec, rng)
    return child


# ---------------------------------------------------------------------------
# algorithms
# ---------------------------------------------------------------------------


def _run_random_search(problem, budget, rng):
    values = np.empty(budget)
    for i in range(budget):
        values[i] = evaluate_relaxed(problem, _sample_point(problem, rng))
    return values


def _run_evolutionary(problem, budget, rng):
    values = np.empty(budget)
    evals = 0
    population: list[tuple[float, int, dict]] = []  # (fitness, age, point)
    age = 0
    while evals < min(EA_MU, budget):
        point = _sample_point(problem, rng)
        f = evaluate_relaxed(problem, point)
        values[evals] = f
        population.append((f, age, point))
        age += 1
        evals += 1
    population.sort(key=lambda t: (t[0], t[1]))
    while evals < budget:
        offspring = []
        for _ in range(min(EA_LAMBDA, budget - evals)):
            parent = population[int(rng.integers(len(population)))][2]
            child = _mutate(problem, parent, rng)
            f = evaluate_relaxed(problem, child)
            values[evals] = f
            offspring.append((f, age, child))
            age += 1
            evals += 1
        population = sorted(population + offspring, key=lambda t: (t[0], t[1]))[:EA_MU]
    return values


def _run_annealing(problem, budget, rng):
    # Temperature calibrates to the spread of a few uniform samples, cools
    # geometrically over the first half of the budget, then the chain is a
    # pure descent (accepting equals keeps it moving on plateaus).
    values = np.empty(budget)
    calibration = min(SA_CALIBRATION_EVALS, budget)
    best_point, best_f = None, math.inf
    for i in range(calibration):
        point = _sample_point(problem, rng)
        f = evaluate_relaxed(problem, point)
        values[i] = f
        if f < best_f:
            best_point, best_f = point, f
    t0 = 0.3 * float(np.std(values[:calibration])) + 1e-12
    t_end = 1e-4 * t0
    current, current_f = best_point, best_f
    steps = budget - calibration
    cooling_steps = max(steps // 2, 1)
    for k in range(steps):
        proposal = _mutate(problem, current, rng)
        f = evaluate_relaxed(problem, proposal)
        values[calibration + k] = f
        if f <= current_f:
            current, current_f = proposal, f
        elif k < cooling_steps:
            temp = t0 * (t_end / t0) ** (k / cooling_steps)
            if rng.random() < math.exp(-(f - current_f) / temp):
                current, current_f = proposal, f
    return values


_RUNNERS = {
    "random_search": _run_random_search,
    "mixed_evolutionary": _run_evolutionary,
    "mixed_annealing": _run_annealing,
}


def run_algorithm(
    problem: MixedVariableProblem,
    algorithm_id: str,
    budget: int | None = None,
    repetitions: int = 20,
    seed: int = 0,
) -> list[RunTrace]:
    """Run one optimizer `repetitions` times; repetition r is seeded by
    (seed, r). Activation constraints hold during optimization: inactive
    variables are replaced by defaults at evaluation, so they cannot affect
    the objective."""
    if algorithm_id not in _RUNNERS:
        raise DataError(f"unknown algorithm {algorithm_id!r}; expected one of {ALGORITHMS}")
    if budget is None:
        budget = 100 * problem.dimension
    runner = _RUNNERS[algorithm_id]
    traces = []
    for rep in range(repetitions):
        rep_seed = derive_seed(seed, rep)
        values = runner(problem, budget, rng_for(rep_seed))
        traces.append(
            RunTrace(
                instance_id=problem.instance_id,
                algorithm_id=algorithm_id,
                repetition=rep,
                best_so_far=np.minimum.accumulate(values),
                seed=rep_seed,
                values=values,
            )
        )
    return traces


def run_portfolio(
    problem: MixedVariableProblem,
    budget_multiplier: int = 100,
    repetitions: int = 20,
    seed: int = 0,
    algorithms: tuple[str, ...] = ALGORITHMS,
) -> dict[str, list[RunTrace]]:
    budget = budget_multiplier * problem.dimension
    return {
        algorithm: run_algorithm(
            problem, algorithm, budget, repetitions, derive_seed(seed, algorithm)
        )
        for algorithm in algorithms
    }


# ---------------------------------------------------------------------------
# targets and ERT
# ---------------------------------------------------------------------------


def compute_target(traces: list[RunTrace]) -> float:
    """0.01-quantile (linear interpolation between order statistics) of all
    raw evaluations pooled across the given traces."""
    if not traces:
        raise DataError("need at least one trace to compute a target")
    values = np.concatenate([t.values for t in traces])
    return float(np.quantile(values, 0.01))


def compute_ert(traces: list[RunTrace], target: float, budget: int) -> PerformanceRecord:
    """Expected running time: total evaluations over successful repetitions.

    A repetition's hitting time is the first 1-based index where the running
    best reaches the target; failures contribute the full budget to the
    numerator and nothing to the denominator.
    """
    successes = 0
    total = 0
    for trace in traces:
        hit = trace.best_so_far <= target
        if hit.any():
            successes += 1
            total += int(np.argmax(hit)) + 1
        else:
            total += budget
    ert = total / successes if successes > 0 else math.inf
    first = traces[0]
    return PerformanceRecord(
        instance_id=first.instance_id,
        algorithm_id=first.algorithm_id,
        ert=ert,
        successes=successes,
        total_evals=total,
    )


def build_performance_table(
    traces_by_instance: dict[str, dict[str, list[RunTrace]]],
    algorithms: tuple[str, ...] = ALGORITHMS,
) -> PerformanceTable:
    records = {}
    targets = {}
    for instance_id, per_algorithm in traces_by_instance.items():
        pooled = [t for traces in per_algorithm.values() for t in traces]
        target = compute_target(pooled)
        targets[instance_id] = target
        budget = pooled[0].best_so_far.shape[0]
        for algorithm in algorithms:
            records[(instance_id, algorithm)] = compute_ert(
                per_algorithm[algorithm], target, budget
            )
    return PerformanceTable(algorithms=algorithms, records=records, targets=targets)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def save_traces(per_algorithm: dict[str, list[RunTrace]], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["algorithm", "repetition", "eval_index", "best_so_far"])
        for algorithm in sorted(per_algorithm):
            for trace in per_algorithm[algorithm]:
                for i, v in enumerate(trace.best_so_far):
                    writer.writerow([algorithm, trace.repetition, i + 1, repr(float(v))])


def save_performance_table(table: PerformanceTable, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["instance", "algorithm", "ert", "successes", "total_evals", "target"])
        for instance_id in table.instance_ids:
            for algorithm in table.algorithms:
                rec = table.records[(instance_id, algorithm)]
                writer.writerow(
                    [
                        instance_id,
                        algorithm,
                        repr(rec.ert),
                        rec.successes,
                        rec.total_evals,
                        repr(table.targets[instance_id]),
                    ]
                )
    Path(path).with_suffix(".json").write_text(
        json.dumps({"algorithms": list(table.algorithms)}, sort_keys=True)
    )


def load_performance_table(path: str | Path) -> PerformanceTable:
    meta = json.loads(Path(path).with_suffix(".json").read_text())
    algorithms = tuple(meta["algorithms"])
    records = {}
    targets = {}
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            rec = PerformanceRecord(
                instance_id=row["instance"],
                algorithm_id=row["algorithm"],
                ert=float(row["ert"]),
                successes=int(row["successes"]),
                total_evals=int(row["total_evals"]),
            )
            records[(rec.instance_id, rec.algorithm_id)] = rec
            targets[rec.instance_id] = float(row["target"])
    return PerformanceTable(algorithms=algorithms, records=records, targets=targets)
