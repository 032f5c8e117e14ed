import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from mvela.errors import DataError
from mvela.portfolio import (
    ALGORITHMS,
    PerformanceRecord,
    RunTrace,
    build_performance_table,
    compute_ert,
    compute_target,
    load_performance_table,
    run_algorithm,
    run_portfolio,
    save_performance_table,
)
from mvela.problem import SuiteConfig, SuiteTemplate, generate_synthetic_suite


@pytest.fixture(scope="module")
def problem():
    return generate_synthetic_suite(SuiteConfig(templates=(SuiteTemplate(1, 1, 1),)), seed=3)[0]


def _trace(best, values=None, instance="i", algorithm="a", rep=0):
    best = np.asarray(best, dtype=float)
    return RunTrace(
        instance_id=instance,
        algorithm_id=algorithm,
        repetition=rep,
        best_so_far=best,
        seed=0,
        values=np.asarray(values, dtype=float) if values is not None else best.copy(),
    )


@pytest.mark.parametrize("algorithm", ALGORITHMS)
def test_trace_shapes(problem, algorithm):
    traces = run_algorithm(problem, algorithm, repetitions=3, seed=1)
    assert len(traces) == 3
    for trace in traces:
        assert trace.best_so_far.shape == (100 * problem.dimension,)
        assert np.all(np.diff(trace.best_so_far) <= 0)
        assert trace.values.shape == trace.best_so_far.shape


def test_twenty_repetitions_default(problem):
    traces = run_algorithm(problem, "random_search", budget=30, seed=5)
    assert len(traces) == 20


@pytest.mark.parametrize("algorithm", ALGORITHMS)
def test_deterministic(problem, algorithm):
    a = run_algorithm(problem, algorithm, budget=60, repetitions=2, seed=7)
    b = run_algorithm(problem, algorithm, budget=60, repetitions=2, seed=7)
    for ta, tb in zip(a, b):
        assert_array_equal(ta.values, tb.values)
        assert_array_equal(ta.best_so_far, tb.best_so_far)


def test_unknown_algorithm(problem):
    with pytest.raises(DataError):
        run_algorithm(problem, "gradient_descent")


def test_target_all_equal():
    traces = [_trace(np.full(10, 3.5))]
    assert compute_target(traces) == 3.5


def test_target_interpolation_rule():
    # 200 pooled values 1..200: rank position 1 + 0.01 * 199 = 2.99
    traces = [_trace(np.arange(1, 101)[::-1].astype(float), values=np.arange(1, 101)),
              _trace(np.arange(101, 201)[::-1].astype(float), values=np.arange(101, 201))]
    assert_allclose(compute_target(traces), 2.99, atol=1e-12)


def test_target_at_least_minimum(problem):
    traces = run_algorithm(problem, "random_search", budget=50, repetitions=3, seed=2)
    target = compute_target(traces)
    assert target >= min(t.values.min() for t in traces)


def test_ert_all_hit_at_100():
    traces = [_trace(np.concatenate([np.full(99, 1.0), [0.0]] )) for _ in range(20)]
    record = compute_ert(traces, target=0.0, budget=100)
    assert record.ert == 100.0
    assert record.successes == 20


def test_ert_one_hit_one_fail():
    hit = np.concatenate([np.full(49, 1.0), np.zeros(251)])
    fail = np.full(300, 1.0)
    record = compute_ert([_trace(hit), _trace(fail, rep=1)], target=0.0, budget=300)
    assert record.ert == 350.0
    assert record.successes == 1
    assert record.total_evals == 350


def test_ert_no_success_is_infinite():
    record = compute_ert([_trace(np.full(10, 5.0))], target=0.0, budget=10)
    assert math.isinf(record.ert)
    assert record.successes == 0


def test_ert_brute_force_replay_oracle():
    rng = np.random.default_rng(0)
    for _ in range(100):
        budget = int(rng.integers(5, 40))
        n_runs = int(rng.integers(1, 6))
        traces = [
            _trace(np.minimum.accumulate(rng.uniform(size=budget)), rep=r)
            for r in range(n_runs)
        ]
        target = float(rng.uniform(0, 1))
        record = compute_ert(traces, target, budget)

        successes = 0
        total = 0
        for trace in traces:
            hit_at = None
            for i, v in enumerate(trace.best_so_far):
                if v <= target:
                    hit_at = i + 1
                    break
            if hit_at is None:
                total += budget
            else:
                successes += 1
                total += hit_at
        expected = total / successes if successes else math.inf
        assert record.ert == expected
        assert record.successes == successes
        assert record.total_evals == total


def test_ert_non_increasing_as_target_relaxes():
    rng = np.random.default_rng(1)
    traces = [
        _trace(np.minimum.accumulate(rng.uniform(size=50)), rep=r) for r in range(5)
    ]
    erts = [compute_ert(traces, t, 50).ert for t in np.linspace(0.05, 0.95, 10)]
    finite = [e for e in erts if math.isfinite(e)]
    assert all(b <= a or math.isinf(a) for a, b in zip(erts, erts[1:]))
    assert finite  # at least some targets are reachable


def test_performance_table_guarantees_solvability(problem):
    suite = generate_synthetic_suite(
        SuiteConfig(templates=(SuiteTemplate(1, 1, 1, count=3),)), seed=11
    )
    traces = {
        p.instance_id: run_portfolio(p, budget_multiplier=20, repetitions=3, seed=4)
        for p in suite
    }
    table = build_performance_table(traces)
    for instance_id in table.instance_ids:
        assert math.isfinite(table.vbs_ert(instance_id))
        best = min(
            t.values.min()
            for per_alg in [traces[instance_id]]
            for trs in per_alg.values()
            for t in trs
        )
        assert table.targets[instance_id] >= best


def test_performance_table_round_trip(tmp_path, problem):
    traces = {problem.instance_id: run_portfolio(problem, budget_multiplier=10, repetitions=2, seed=9)}
    table = build_performance_table(traces)
    path = tmp_path / "perf.csv"
    save_performance_table(table, path)
    clone = load_performance_table(path)
    assert clone.algorithms == table.algorithms
    assert clone.targets == table.targets
    assert clone.records == table.records
