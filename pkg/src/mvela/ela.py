"""Landscape feature sets computed on a normalized design.

Five sets, 38 features total, in fixed order: model-fit summaries (9),
objective-distribution statistics (3), dispersion of the best points (16),
information content along a nearest-neighbor tour (5), and nearest-better
clustering (5). Inputs must already be normalized to [0, 1]; all sets are
pure functions of the design except the tour start, which is seeded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist
from scipy.stats import gaussian_kde

from .design import NumericDesign
from .errors import DataError
from .seeding import rng_for

META_NAMES = (
    "meta.lin_adj_r2",
    "meta.lin_inter_adj_r2",
    "meta.quad_adj_r2",
    "meta.quad_inter_adj_r2",
    "meta.lin_intercept",
    "meta.lin_coef_min",
    "meta.lin_coef_max",
    "meta.lin_coef_ratio",
    "meta.quad_cond",
)
YDIST_NAMES = ("ydist.skewness", "ydist.kurtosis", "ydist.n_peaks")
DISPERSION_QUANTILES = (0.02, 0.05, 0.10, 0.25)
DISPERSION_NAMES = tuple(
    f"disp.{stat}_{int(q * 100):02d}"
    for q in DISPERSION_QUANTILES
    for stat in ("ratio_mean", "ratio_median", "diff_mean", "diff_median")
)
IC_NAMES = ("ic.h_max", "ic.eps_s", "ic.eps_max", "ic.m0", "ic.eps_ratio")
NBC_NAMES = (
    "nbc.sd_ratio",
    "nbc.mean_ratio",
    "nbc.corr_nn_nb",
    "nbc.qnn_cv",
    "nbc.indegree_cor",
)
FEATURE_NAMES = META_NAMES + YDIST_NAMES + DISPERSION_NAMES + IC_NAMES + NBC_NAMES
FEATURE_COUNT = len(FEATURE_NAMES)  # 38


@dataclass(frozen=True)
class FeatureVector:
    problem_id: str
    repetition: int
    encoding_tag: str
    names: tuple[str, ...]
    values: np.ndarray
    flags: tuple[str, ...] = ()

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, self.values))


def _adjusted_r2(A: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray, bool]:
    """Least squares via SVD (minimum-norm on rank deficiency).

    Returns (adjusted R^2, coefficients, rank_deficient flag). p counts the
    predictors excluding the intercept column.
    """
    n, cols = A.shape
    p = cols - 1
    if n < cols + 1:
        raise DataError(f"need more than {cols + 1} rows for a {p}-predictor fit")
    coef, _, rank, _ = np.linalg.lstsq(A, y, rcond=None)
    residual = y - A @ coef
    ss_res = float(residual @ residual)
    centered = y - y.mean()
    ss_tot = float(centered @ centered)
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    adj = 1.0 - (1.0 - r2) * (n - 1) / (n - p - 1)
    return adj, coef, rank < cols


def _interactions(X: np.ndarray) -> np.ndarray:
    n, d = X.shape
    pairs = [X[:, i] * X[:, j] for i in range(d) for j in range(i + 1, d)]
    if not pairs:
        return np.empty((n, 0))
    return np.column_stack(pairs)


def ela_meta(d: NumericDesign) -> tuple[dict[str, float], tuple[str, ...]]:
    """Linear and quadratic least-squares fits; coefficients and fit quality.

    Returns the 9 features plus diagnostic flags (set when any system was
    rank deficient and solved by minimum-norm least squares).
    """
    X, y = d.Xn, d.Yn
    n, k = X.shape
    ones = np.ones((n, 1))
    inter = _interactions(X)

    lin = np.hstack([ones, X])
    lin_inter = np.hstack([ones, X, inter])
    quad = np.hstack([ones, X, X**2])
    quad_inter = np.hstack([ones, X, X**2, inter])

    adj_lin, coef_lin, flag1 = _adjusted_r2(lin, y)
    adj_lin_inter, _, flag2 = _adjusted_r2(lin_inter, y)
    adj_quad, coef_quad, flag3 = _adjusted_r2(quad, y)
    adj_quad_inter, _, flag4 = _adjusted_r2(quad_inter, y)

    slopes = np.abs(coef_lin[1:])
    quad_coefs = np.abs(coef_quad[1 + k : 1 + 2 * k])
    result = {
        "meta.lin_adj_r2": adj_lin,
        "meta.lin_inter_adj_r2": adj_lin_inter,
        "meta.quad_adj_r2": adj_quad,
        "meta.quad_inter_adj_r2": adj_quad_inter,
        "meta.lin_intercept": float(coef_lin[0]),
        "meta.lin_coef_min": float(slopes.min()),
        "meta.lin_coef_max": float(slopes.max()),
        "meta.lin_coef_ratio": _ratio(slopes.max(), slopes.min()),
        "meta.quad_cond": _ratio(quad_coefs.max(), quad_coefs.min()),
    }
    flags = ("meta_rank_deficient",) if (flag1 or flag2 or flag3 or flag4) else ()
    return result, flags


def ela_distribution(d: NumericDesign) -> dict[str, float]:
    """Skewness, excess kurtosis, and KDE peak count of the objective values."""
    y = d.Yn
    n = y.shape[0]
    if n < 4:
        raise DataError("distribution features need at least 4 rows")
    centered = y - y.mean()
    m2 = float(np.mean(centered**2))
    if m2 == 0.0:
        return {"ydist.skewness": 0.0, "ydist.kurtosis": 0.0, "ydist.n_peaks": 1.0}
    skewness = float(np.mean(centered**3)) / m2**1.5
    kurtosis = float(np.mean(centered**4)) / m2**2 - 3.0

    kde = gaussian_kde(y, bw_method="silverman")
    bandwidth = math.sqrt(float(kde.covariance[0, 0]))
    grid = np.linspace(y.min() - 3 * bandwidth, y.max() + 3 * bandwidth, 512)
    density = kde(grid)
    return {
        "ydist.skewness": skewness,
        "ydist.kurtosis": kurtosis,
        "ydist.n_peaks": float(_count_peaks(density)),
    }


def _count_peaks(density: np.ndarray, mass_floor: float = 0.01) -> int:
    """Strict local maxima of the density, ignoring modes below the mass floor.

    The grid is split at local minima; a maximum only counts when its segment
    holds at least `mass_floor` of the total mass. Without the floor, lone
    tail samples produce spurious bumps (grid-level artifacts of the KDE).
    """
    interior = np.arange(1, density.size - 1)
    is_max = (density[interior] > density[interior - 1]) & (
        density[interior] > density[interior + 1]
    )
    maxima = interior[is_max]
    if maxima.size <= 1:
        return 1
    is_min = (density[interior] < density[interior - 1]) & (
        density[interior] < density[interior + 1]
    )
    boundaries = np.concatenate([[0], interior[is_min], [density.size]])
    total = density.sum()
    count = 0
    for peak in maxima:
        lo = boundaries[np.searchsorted(boundaries, peak, side="right") - 1]
        hi = boundaries[np.searchsorted(boundaries, peak, side="right")]
        if density[lo:hi].sum() / total >= mass_floor:
            count += 1
    return max(count, 1)


def dispersion(d: NumericDesign, quantiles=DISPERSION_QUANTILES) -> dict[str, float]:
    """Pairwise-distance statistics of the best-objective subsets versus all rows.

    For each quantile the rows with the lowest objective values are taken
    (at least 2); emitted per quantile: ratio and difference of subset
    mean/median pairwise distance against the full sample.
    """
    X, y = d.Xn, d.Yn
    n = X.shape[0]
    if n < 2:
        raise DataError("dispersion needs at least 2 rows")
    full = pdist(X)
    full_mean = float(full.mean())
    full_median = float(np.median(full))
    # Objective ties break on row content so the subset (and therefore the
    # features) cannot depend on row order.
    order = np.lexsort(tuple(X[:, j] for j in reversed(range(X.shape[1]))) + (y,))

    result: dict[str, float] = {}
    for q in quantiles:
        size = max(2, math.ceil(q * n))
        subset = X[order[:size]]
        dists = pdist(subset)
        sub_mean = float(dists.mean())
        sub_median = float(np.median(dists))
        tag = f"{int(q * 100):02d}"
        result[f"disp.ratio_mean_{tag}"] = sub_mean / full_mean if full_mean > 0 else 1.0
        result[f"disp.ratio_median_{tag}"] = (
            sub_median / full_median if full_median > 0 else 1.0
        )
        result[f"disp.diff_mean_{tag}"] = sub_mean - full_mean
        result[f"disp.diff_median_{tag}"] = sub_median - full_median
    return result


def _nearest_neighbor_tour(X: np.ndarray, start: int) -> np.ndarray:
    n = X.shape[0]
    dist = cdist(X, X)
    np.fill_diagonal(dist, np.inf)
    tour = np.empty(n, dtype=np.int64)
    visited = np.zeros(n, dtype=bool)
    current = start
    tour[0] = current
    visited[current] = True
    for step in range(1, n):
        row = dist[current].copy()
        row[visited] = np.inf
        current = int(np.argmin(row))  # ties resolve to the lowest index
        tour[step] = current
        visited[current] = True
    return tour


def information_content(
    d: NumericDesign,
    seed: int = 0,
    settle_threshold: float = 0.05,
    half_factor: float = 0.5,
) -> dict[str, float]:
    """Symbol-sequence statistics along a seeded nearest-neighbor tour.

    Consecutive objective slopes become symbols {-1, 0, +1} at tolerance eps;
    H(eps) is the base-6 entropy over the six unequal consecutive-symbol
    pairs, M(eps) the fraction of non-zero symbols differing from the
    previous non-zero one. The eps grid is 0 plus 1000 log-spaced points
    covering [1e-5, 1e15] scaled by the largest absolute slope.
    """
    X, y = d.Xn, d.Yn
    n = X.shape[0]
    if n < 3:
        raise DataError("information content needs at least 3 rows")
    tour = _nearest_neighbor_tour(X, int(rng_for(seed, "ic").integers(n)))
    xt = X[tour]
    yt = y[tour]
    steps = np.linalg.norm(np.diff(xt, axis=0), axis=1)
    keep = steps > 0  # duplicate consecutive points are skipped
    slopes = np.diff(yt)[keep] / steps[keep]

    denom = n - 1
    max_slope = float(np.max(np.abs(slopes))) if slopes.size else 0.0
    if max_slope == 0.0:
        positive = np.logspace(-5, 15, 1000)
        h = np.zeros(positive.size + 1)
        m = np.zeros(positive.size + 1)
    else:
        positive = max_slope * np.logspace(-5, 15, 1000)
        grid = np.concatenate([[0.0], positive])
        psi = np.where(
            slopes[None, :] < -grid[:, None],
            -1,
            np.where(slopes[None, :] > grid[:, None], 1, 0),
        )
        h = _pair_entropy(psi)
        m = np.array([_partial_information(row, denom) for row in psi])

    m0 = float(m[0])
    h_max = float(h.max())
    h_pos = h[1:]
    m_pos = m[1:]

    settled = np.nonzero(h_pos < settle_threshold)[0]
    eps_s = math.log10(positive[settled[0]] if settled.size else positive[-1])
    eps_max = math.log10(positive[int(np.argmax(h_pos))])
    below = np.nonzero(m_pos < half_factor * m0)[0]
    eps_ratio = math.log10(positive[below[0]] if m0 > 0 and below.size else positive[-1])

    return {
        "ic.h_max": h_max,
        "ic.eps_s": eps_s,
        "ic.eps_max": eps_max,
        "ic.m0": m0,
        "ic.eps_ratio": eps_ratio,
    }


def _pair_entropy(psi: np.ndarray) -> np.ndarray:
    """Base-6 entropy of unequal consecutive symbol pairs, per grid row."""
    g, length = psi.shape
    if length < 2:
        return np.zeros(g)
    codes = 3 * (psi[:, :-1] + 1) + (psi[:, 1:] + 1)  # 0..8
    offset = codes + 9 * np.arange(g)[:, None]
    counts = np.bincount(offset.ravel(), minlength=9 * g).reshape(g, 9)
    probs = counts / (length - 1)
    unequal = [1, 2, 3, 5, 6, 7]  # codes where the two symbols differ
    p = probs[:, unequal]
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, -p * np.log(p) / np.log(6), 0.0)
    return terms.sum(axis=1)


def _partial_information(psi_row: np.ndarray, denom: int) -> float:
    nz = psi_row[psi_row != 0]
    if nz.size == 0:
        return 0.0
    changes = 1 + int(np.sum(nz[1:] != nz[:-1]))
    return changes / denom


def nearest_better_clustering(d: NumericDesign) -> dict[str, float]:
    """Statistics contrasting nearest-neighbor and nearest-better distances.

    The point with no strictly better neighbor takes the maximum of the
    others' nearest-better distances. When every objective value is equal
    the documented degenerate vector (1, 1, 0, 0, 0) is returned.
    """
    X, y = d.Xn, d.Yn
    n = X.shape[0]
    if n < 3:
        raise DataError("nearest-better clustering needs at least 3 rows")
    if np.all(y == y[0]):
        return dict(zip(NBC_NAMES, (1.0, 1.0, 0.0, 0.0, 0.0)))

    dist = cdist(X, X)
    np.fill_diagonal(dist, np.inf)
    nn = dist.min(axis=1)

    nb = np.empty(n)
    target = np.full(n, -1, dtype=np.int64)
    no_better = []
    for i in range(n):
        better = y < y[i]
        if not better.any():
            no_better.append(i)
            continue
        row = np.where(better, dist[i], np.inf)
        j = int(np.argmin(row))
        nb[i] = row[j]
        target[i] = j
    others = [i for i in range(n) if i not in no_better]
    fallback = max(nb[i] for i in others)
    for i in no_better:
        nb[i] = fallback

    indegree = np.bincount(target[target >= 0], minlength=n).astype(float)
    q = nb / nn
    return dict(
        zip(
            NBC_NAMES,
            (
                _ratio(_sd(nn), _sd(nb)),
                _ratio(float(nn.mean()), float(nb.mean())),
                _pearson(nn, nb),
                _ratio(_sd(q), float(q.mean())),
                _pearson(indegree, y),
            ),
        )
    )


def compute_feature_vector(
    d: NumericDesign, seed: int = 0, repetition: int = 0
) -> FeatureVector:
    """All five feature sets concatenated in fixed order (38 values)."""
    meta, flags = ela_meta(d)
    parts: dict[str, float] = {}
    parts.update(meta)
    parts.update(ela_distribution(d))
    parts.update(dispersion(d))
    parts.update(information_content(d, seed=seed))
    parts.update(nearest_better_clustering(d))
    values = np.array([parts[name] for name in FEATURE_NAMES], dtype=float)
    return FeatureVector(
        problem_id=d.problem_id,
        repetition=repetition,
        encoding_tag=d.encoding_tag,
        names=FEATURE_NAMES,
        values=values,
        flags=flags,
    )


def _sd(values: np.ndarray) -> float:
    return float(np.std(values, ddof=1))


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    ca = a - a.mean()
    cb = b - b.mean()
    va = float(ca @ ca)
    vb = float(cb @ cb)
    if va == 0.0 or vb == 0.0:
        return 0.0
    return float(ca @ cb) / math.sqrt(va * vb)


def _ratio(numerator: float, denominator: float) -> float:
    if denominator == 0.0:
        return math.inf if numerator > 0 else 0.0
    return float(numerator) / float(denominator)
