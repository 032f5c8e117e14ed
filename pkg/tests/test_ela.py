import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from mvela.design import NumericDesign, normalize, sample_initial_design
from mvela.ela import (
    FEATURE_COUNT,
    FEATURE_NAMES,
    compute_feature_vector,
    dispersion,
    ela_distribution,
    ela_meta,
    information_content,
    nearest_better_clustering,
)
from mvela.encoding import EncoderConfig, encode
from mvela.errors import DataError
from mvela.forest import ForestParams
from mvela.problem import SuiteConfig, SuiteTemplate, generate_synthetic_suite
from mvela.seeding import rng_for


def _nd(X, y, tag="target"):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return NumericDesign(
        problem_id="toy",
        feature_names=tuple(f"f{i}" for i in range(X.shape[1])),
        Xn=X,
        Yn=np.asarray(y, dtype=float),
        encoding_tag=tag,
    )


# ---------------------------------------------------------------------------
# model-fit features
# ---------------------------------------------------------------------------


def test_meta_exact_linear_fit():
    x = np.linspace(0, 1, 30)
    features, flags = ela_meta(_nd(x[:, None], 2.0 + 3.0 * x))
    assert_allclose(features["meta.lin_adj_r2"], 1.0, atol=1e-9)
    assert_allclose(features["meta.lin_intercept"], 2.0, atol=1e-9)
    assert_allclose(features["meta.lin_coef_min"], 3.0, atol=1e-9)
    assert_allclose(features["meta.lin_coef_max"], 3.0, atol=1e-9)
    assert_allclose(features["meta.lin_coef_ratio"], 1.0, atol=1e-9)
    assert flags == ()


def test_meta_exact_quadratic_fit():
    rng = np.random.default_rng(0)
    X = rng.uniform(size=(80, 2))
    y = X[:, 0] ** 2 + 4.0 * X[:, 1] ** 2
    features, _ = ela_meta(_nd(X, y))
    assert_allclose(features["meta.quad_adj_r2"], 1.0, atol=1e-9)
    assert_allclose(features["meta.quad_cond"], 4.0, atol=1e-6)


@pytest.mark.parametrize("seed", range(5))
def test_meta_noise_has_no_fit(seed):
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(500, 3))
    y = rng.normal(size=500)
    features, _ = ela_meta(_nd(X, y))
    assert -0.05 < features["meta.lin_adj_r2"] < 0.05


def test_meta_needs_enough_rows():
    with pytest.raises(DataError):
        ela_meta(_nd(np.random.default_rng(0).uniform(size=(6, 3)), np.arange(6)))


# ---------------------------------------------------------------------------
# objective-distribution features
# ---------------------------------------------------------------------------


def test_distribution_symmetric_zero_skew():
    y = np.array([0.1, 0.2, 0.3, 0.7, 0.8, 0.9])  # symmetric around 0.5
    features = ela_distribution(_nd(np.zeros((6, 1)), y))
    assert_allclose(features["ydist.skewness"], 0.0, atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_distribution_uniform_kurtosis(seed):
    y = np.random.default_rng(seed).uniform(size=5000)
    features = ela_distribution(_nd(np.zeros((5000, 1)), y))
    assert abs(features["ydist.kurtosis"] - (-1.2)) < 0.15


@pytest.mark.parametrize("seed", range(5))
def test_distribution_gaussian_single_peak(seed):
    y = np.random.default_rng(seed).normal(size=5000)
    y = (y - y.min()) / (y.max() - y.min())
    features = ela_distribution(_nd(np.zeros((5000, 1)), y))
    assert features["ydist.n_peaks"] == 1.0


def test_distribution_constant_convention():
    features = ela_distribution(_nd(np.zeros((10, 1)), np.full(10, 0.5)))
    assert features["ydist.skewness"] == 0.0
    assert features["ydist.kurtosis"] == 0.0
    assert features["ydist.n_peaks"] == 1.0


# ---------------------------------------------------------------------------
# dispersion features
# ---------------------------------------------------------------------------


def test_dispersion_emits_16_features():
    rng = np.random.default_rng(1)
    features = dispersion(_nd(rng.uniform(size=(120, 2)), rng.uniform(size=120)))
    assert len(features) == 16


@pytest.mark.parametrize("seed", range(5))
def test_dispersion_random_labels_ratios_near_one(seed):
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(500, 2))
    y = rng.uniform(size=500)  # independent of X
    features = dispersion(_nd(X, y))
    for stat in ("ratio_mean_25", "ratio_median_25"):
        assert 0.9 < features[f"disp.{stat}"] < 1.1


def test_dispersion_sphere_clusters_best_points():
    rng = np.random.default_rng(3)
    X = rng.uniform(size=(500, 2))
    y = ((X - 0.5) ** 2).sum(axis=1)
    features = dispersion(_nd(X, y / y.max()))
    assert features["disp.ratio_mean_02"] < 1.0


def test_dispersion_small_n_floor():
    rng = np.random.default_rng(4)
    features = dispersion(_nd(rng.uniform(size=(50, 2)), rng.uniform(size=50)))
    # ceil(0.02 * 50) = 1 is floored to a 2-row subset, which still works
    assert np.isfinite(features["disp.ratio_mean_02"])


# ---------------------------------------------------------------------------
# information-content features
# ---------------------------------------------------------------------------


def test_ic_constant_objective():
    rng = np.random.default_rng(5)
    features = information_content(_nd(rng.uniform(size=(40, 2)), np.full(40, 0.25)), seed=0)
    assert features["ic.h_max"] == 0.0
    assert features["ic.m0"] == 0.0
    for name in ("ic.eps_s", "ic.eps_max", "ic.eps_ratio"):
        assert np.isfinite(features[name])


def test_ic_monotone_tour_partial_information():
    # Points on a line with y equal to the position: any tour starting at an
    # endpoint sweeps monotonically, giving exactly one counted symbol.
    n = 20
    x = np.linspace(0, 1, n)
    seed = next(
        s for s in range(1000) if int(rng_for(s, "ic").integers(n)) in (0, n - 1)
    )
    features = information_content(_nd(x[:, None], x), seed=seed)
    assert_allclose(features["ic.m0"], 1.0 / (n - 1), atol=1e-15)


@pytest.mark.parametrize("seed", range(3))
def test_ic_entropy_bounded(seed):
    rng = np.random.default_rng(seed)
    features = information_content(
        _nd(rng.uniform(size=(100, 3)), rng.uniform(size=100)), seed=seed
    )
    assert 0.0 <= features["ic.h_max"] <= 1.0


# ---------------------------------------------------------------------------
# nearest-better clustering features
# ---------------------------------------------------------------------------


def test_nbc_three_point_hand_example():
    X = np.array([[0.0], [1.0], [3.0]])
    y = np.array([0.0, 1.0, 2.0])
    features = nearest_better_clustering(_nd(X, y))

    # Independent computation from the definitions:
    nn = np.array([1.0, 1.0, 2.0])
    nb = np.array([2.0, 1.0, 2.0])  # best point takes max of the others
    q = nb / nn
    indegree = np.array([1.0, 1.0, 0.0])

    def corr(a, b):
        return float(np.corrcoef(a, b)[0, 1])

    assert_allclose(features["nbc.sd_ratio"], nn.std(ddof=1) / nb.std(ddof=1), atol=1e-12)
    assert_allclose(features["nbc.mean_ratio"], nn.mean() / nb.mean(), atol=1e-12)
    assert_allclose(features["nbc.corr_nn_nb"], corr(nn, nb), atol=1e-12)
    assert_allclose(features["nbc.qnn_cv"], q.std(ddof=1) / q.mean(), atol=1e-12)
    assert_allclose(features["nbc.indegree_cor"], corr(indegree, y), atol=1e-12)


def test_nbc_all_equal_degenerate_vector():
    rng = np.random.default_rng(6)
    features = nearest_better_clustering(_nd(rng.uniform(size=(10, 2)), np.full(10, 0.5)))
    assert list(features.values()) == [1.0, 1.0, 0.0, 0.0, 0.0]


@pytest.mark.parametrize("seed", range(3))
def test_nbc_nearest_better_at_least_nearest(seed):
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(60, 2))
    y = rng.uniform(size=60)
    from scipy.spatial.distance import cdist

    dist = cdist(X, X)
    np.fill_diagonal(dist, np.inf)
    nn = dist.min(axis=1)
    for i in range(60):
        better = y < y[i]
        if better.any():
            nb_i = np.where(better, dist[i], np.inf).min()
            assert nb_i >= nn[i] - 1e-15


# ---------------------------------------------------------------------------
# full vector
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def suite_design():
    problem = generate_synthetic_suite(
        SuiteConfig(templates=(SuiteTemplate(2, 1, 1),)), seed=13
    )[0]
    return problem, sample_initial_design(problem, multiplier=50, seed=21)


def _features_from_raw(design, seed=3):
    return compute_feature_vector(normalize(encode(design, "target")), seed=seed)


def test_vector_has_38_finite_entries(suite_design):
    _, design = suite_design
    fv = _features_from_raw(design)
    assert fv.names == FEATURE_NAMES
    assert fv.values.shape == (FEATURE_COUNT,)
    assert FEATURE_COUNT == 38
    assert np.all(np.isfinite(fv.values))


def test_vector_deterministic(suite_design):
    _, design = suite_design
    a = _features_from_raw(design, seed=5)
    b = _features_from_raw(design, seed=5)
    assert_array_equal(a.values, b.values)


def test_shift_scale_invariance_power_of_two(suite_design):
    # Scaling raw objectives by a power of two commutes exactly with
    # normalization, so features must be bit-identical.
    _, design = suite_design
    from dataclasses import replace

    base = _features_from_raw(design, seed=7)
    scaled = replace(design, Y=design.Y * 2.0)
    assert_array_equal(_features_from_raw(scaled, seed=7).values, base.values)


def test_shift_scale_invariance_general_affine(suite_design):
    _, design = suite_design
    from dataclasses import replace

    base = _features_from_raw(design, seed=7)
    scaled = replace(design, Y=1.7 * design.Y + 3.1)
    assert_allclose(_features_from_raw(scaled, seed=7).values, base.values, rtol=1e-8, atol=1e-8)


def test_row_permutation_only_moves_information_content(suite_design):
    _, design = suite_design
    from dataclasses import replace

    rng = np.random.default_rng(17)
    perm = rng.permutation(design.n)
    shuffled = replace(design, X=design.X[perm], Y=design.Y[perm])

    base = compute_feature_vector(normalize(encode(design, "target")), seed=3)
    moved = compute_feature_vector(normalize(encode(shuffled, "target")), seed=3)
    ic_slice = [i for i, name in enumerate(FEATURE_NAMES) if name.startswith("ic.")]
    rest = [i for i in range(FEATURE_COUNT) if i not in ic_slice]
    assert_allclose(moved.values[rest], base.values[rest], rtol=1e-8, atol=1e-10)


def test_features_on_shap_encoded_design(suite_design):
    _, design = suite_design
    config = EncoderConfig(
        shap_n_permutations=3,
        shap_background_cap=30,
        shap_forest_params=ForestParams(n_trees=20, seed=1),
        seed=2,
    )
    fv = compute_feature_vector(normalize(encode(design, "shap", config)), seed=9)
    assert np.all(np.isfinite(fv.values))
    assert fv.encoding_tag == "shap"
