import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from mvela.design import Column, Design, sample_initial_design
from mvela.encoding import (
    EncoderConfig,
    encode,
    one_hot_encode,
    shap_encode,
    target_encode,
)
from mvela.errors import DataError
from mvela.forest import ForestParams
from mvela.problem import SuiteConfig, SuiteTemplate, generate_synthetic_suite


def _design(columns, X, y):
    X_arr = np.empty((len(X), len(columns)), dtype=object)
    for i, row in enumerate(X):
        for j, v in enumerate(row):
            X_arr[i, j] = v
    return Design("toy", tuple(columns), X_arr, np.asarray(y, dtype=float), seed=0)


@pytest.fixture
def cat_design():
    columns = [
        Column("x", "continuous"),
        Column("c", "categorical", levels=("a", "b", "c")),
    ]
    X = [[0.1, "b"], [0.4, "a"], [0.9, "c"], [0.6, "a"]]
    return _design(columns, X, [1.0, 2.0, 3.0, 4.0])


def test_one_hot_rows(cat_design):
    out = one_hot_encode(cat_design)
    assert out.feature_names == ("x", "c=a", "c=b", "c=c")
    assert_array_equal(out.X[0, 1:], [0.0, 1.0, 0.0])
    assert_array_equal(out.X[1, 1:], [1.0, 0.0, 0.0])


def test_one_hot_no_categorical_passthrough():
    design = _design([Column("x", "continuous"), Column("z", "integer")],
                     [[0.5, 3], [0.25, 7]], [1.0, 2.0])
    out = one_hot_encode(design)
    assert out.feature_names == ("x", "z")
    assert_array_equal(out.X, [[0.5, 3.0], [0.25, 7.0]])


def test_one_hot_column_count_and_group_sums(cat_design):
    out = one_hot_encode(cat_design)
    assert out.X.shape[1] == 1 + 3
    assert_array_equal(out.X[:, 1:].sum(axis=1), np.ones(4))


def test_target_encode_hand_example():
    # Y = [0, 1], levels [a, b], m = 10:
    # a: lambda = 1/11 -> 1/11 * 0 + 10/11 * 0.5 = 0.45454...
    design = _design(
        [Column("c", "categorical", levels=("a", "b"))],
        [["a"], ["b"]],
        [0.0, 1.0],
    )
    out = target_encode(design, m=10.0)
    assert_allclose(out.X[0, 0], (1 / 11) * 0.0 + (10 / 11) * 0.5, atol=1e-15)
    assert_allclose(out.X[1, 0], (1 / 11) * 1.0 + (10 / 11) * 0.5, atol=1e-15)


def test_target_encode_m_zero_gives_level_means(cat_design):
    out = target_encode(cat_design, m=0.0)
    assert_allclose(out.X[1, 1], 3.0)  # level a mean of [2, 4]
    assert_allclose(out.X[3, 1], 3.0)
    assert_allclose(out.X[0, 1], 1.0)  # level b
    assert_allclose(out.X[2, 1], 3.0)  # level c


def test_target_encode_single_level_is_global_mean():
    design = _design(
        [Column("c", "categorical", levels=("only",))],
        [["only"], ["only"], ["only"]],
        [1.0, 2.0, 6.0],
    )
    for m in (0.0, 10.0, 1e6):
        out = target_encode(design, m=m)
        assert_allclose(out.X[:, 0], np.full(3, 3.0))


def test_target_encode_static_per_level(cat_design):
    out = target_encode(cat_design, m=5.0)
    assert out.X[1, 1] == out.X[3, 1]  # both rows are level a


def test_target_encode_between_level_and_global_mean(cat_design):
    out = target_encode(cat_design, m=7.0)
    global_mean = cat_design.Y.mean()
    for row, level_mean in ((0, 1.0), (1, 3.0), (2, 3.0)):
        lo, hi = sorted((level_mean, global_mean))
        assert lo - 1e-12 <= out.X[row, 1] <= hi + 1e-12


def _shap_config(**kw):
    defaults = dict(
        shap_n_permutations=4,
        shap_background_cap=40,
        shap_forest_params=ForestParams(n_trees=30, seed=7),
        seed=13,
    )
    defaults.update(kw)
    return EncoderConfig(**defaults)


def test_shap_encode_no_categorical_unchanged():
    design = _design([Column("x", "continuous")], [[0.1], [0.9]], [0.0, 1.0])
    out = shap_encode(design, _shap_config())
    assert_array_equal(out.X, [[0.1], [0.9]])
    assert out.encoding_tag == "shap"


def test_shap_encode_efficiency_and_passthrough():
    rng = np.random.default_rng(0)
    n = 120
    levels = ("u", "v", "w")
    cats = [levels[i] for i in rng.integers(0, 3, size=n)]
    xs = rng.uniform(size=n)
    y = xs * 2 + np.array([{"u": 0.0, "v": 1.5, "w": 3.0}[c] for c in cats])
    design = _design(
        [Column("x", "continuous"), Column("c", "categorical", levels=levels)],
        [[x, c] for x, c in zip(xs, cats)],
        y,
    )
    out = shap_encode(design, _shap_config())
    assert out.max_efficiency_gap <= 1e-9
    assert_allclose(out.X[:, 0], xs)  # numeric column untouched


def test_shap_encode_ignored_category_near_zero():
    # Objective built from the numeric column only; the categorical column
    # should receive attributions within forest-fit noise of zero.
    rng = np.random.default_rng(1)
    n = 500
    levels = ("a", "b")
    cats = [levels[i] for i in rng.integers(0, 2, size=n)]
    xs = rng.uniform(size=n)
    y = 3.0 * xs + 1.0
    design = _design(
        [Column("x", "continuous"), Column("c", "categorical", levels=levels)],
        [[x, c] for x, c in zip(xs, cats)],
        y,
    )
    out = shap_encode(design, _shap_config())
    assert np.mean(np.abs(out.X[:, 1])) <= 0.05 * np.std(y)


def test_shap_encode_context_dependent_unlike_target():
    # Category x numeric interaction: the same level must encode differently
    # in different numeric contexts.
    rng = np.random.default_rng(2)
    n = 200
    levels = ("lo", "hi")
    cats = [levels[i] for i in rng.integers(0, 2, size=n)]
    xs = rng.uniform(size=n)
    y = np.array([x * (5.0 if c == "hi" else -5.0) for x, c in zip(xs, cats)])
    design = _design(
        [Column("x", "continuous"), Column("c", "categorical", levels=levels)],
        [[x, c] for x, c in zip(xs, cats)],
        y,
    )
    out = shap_encode(design, _shap_config())
    hi_rows = [i for i, c in enumerate(cats) if c == "hi"]
    spread = out.X[hi_rows, 1].max() - out.X[hi_rows, 1].min()
    assert spread > 10 * 1e-9

    te = target_encode(design, m=0.0)
    assert np.ptp(te.X[hi_rows, 1]) == 0.0  # static by construction


def test_shap_encode_deterministic():
    problem = generate_synthetic_suite(
        SuiteConfig(templates=(SuiteTemplate(1, 1, 1),)), seed=8
    )[0]
    design = sample_initial_design(problem, multiplier=20, seed=3)
    config = _shap_config()
    a = shap_encode(design, config)
    b = shap_encode(design, config)
    assert_array_equal(a.X, b.X)


def test_encode_dispatch_and_unknown():
    design = _design([Column("x", "continuous")], [[0.0], [1.0]], [0.0, 1.0])
    assert encode(design, "onehot").encoding_tag == "onehot"
    assert encode(design, "target").encoding_tag == "target"
    assert encode(design, "shap", _shap_config()).encoding_tag == "shap"
    with pytest.raises(DataError):
        encode(design, "nope")


def test_encoder_config_round_trip():
    config = _shap_config()
    clone = EncoderConfig.from_dict(config.to_dict())
    assert clone == config
