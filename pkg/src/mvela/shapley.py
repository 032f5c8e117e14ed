"""Shapley attributions for a prediction model at a single observation.

The value function is interventional: a coalition mask picks which features
take the observation's values, every other feature is replaced by each
background row in turn, and predictions are averaged over the background.
`exact_shapley` enumerates all coalitions (the oracle); the estimator walks
random feature permutations forward and reversed (antithetic) and averages
the marginal contributions, which keeps the efficiency identity
base + sum(phi) = value(full coalition) intact by telescoping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import CapabilityError, DataError
from .seeding import derive_seed, rng_for

EXACT_ENUMERATION_LIMIT = 20

Model = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ShapleyAttribution:
    """base_value is the empty-coalition value; phi has one entry per feature."""

    base_value: float
    phi: np.ndarray

    @property
    def total(self) -> float:
        return self.base_value + float(self.phi.sum())


def coalition_values(
    model: Model, x: np.ndarray, background: np.ndarray, masks: np.ndarray
) -> np.ndarray:
    """Value-function outputs for several coalition masks in one model call.

    masks: (n_masks, M) boolean; True marks features fixed to x's value.
    """
    x = np.asarray(x, dtype=float)
    background = np.asarray(background, dtype=float)
    blends = np.where(masks[:, None, :], x[None, None, :], background[None, :, :])
    n_masks, n_bg, m = blends.shape
    values = model(blends.reshape(n_masks * n_bg, m))
    return np.asarray(values, dtype=float).reshape(n_masks, n_bg).mean(axis=1)


def exact_shapley(model: Model, x, background) -> ShapleyAttribution:
    """Full-enumeration Shapley values; guarded to at most 20 features."""
    x = np.asarray(x, dtype=float)
    background = np.atleast_2d(np.asarray(background, dtype=float))
    m = x.shape[0]
    if m > EXACT_ENUMERATION_LIMIT:
        raise CapabilityError(
            f"exact enumeration guard: {m} features > {EXACT_ENUMERATION_LIMIT}"
        )
    codes = np.arange(2**m)
    masks = (codes[:, None] >> np.arange(m)[None, :]) & 1
    values = coalition_values(model, x, background, masks.astype(bool))

    weights = [
        math.factorial(s) * math.factorial(m - s - 1) / math.factorial(m)
        for s in range(m)
    ]
    phi = np.zeros(m)
    sizes = masks.sum(axis=1)
    for i in range(m):
        without = np.nonzero((codes >> i) & 1 == 0)[0]
        with_i = without | (1 << i)
        w = np.array([weights[s] for s in sizes[without]])
        phi[i] = float(np.sum(w * (values[with_i] - values[without])))
    return ShapleyAttribution(base_value=float(values[0]), phi=phi)


def _walk_masks_batch(perms: np.ndarray) -> np.ndarray:
    """Coalition masks for antithetic walks, vectorized over rows.

    perms: (n_rows, n_perms, M). Output (n_rows, n_masks, M) ordered as:
    empty, full, then per permutation the forward prefixes of sizes 1..M-1
    followed by the reversed-order prefixes.
    """
    n, n_perms, m = perms.shape
    position = np.argsort(perms, axis=-1)  # position[i, p, f] = step at which f joins
    steps = np.arange(m - 1)
    forward = position[:, :, None, :] <= steps[None, None, :, None]
    backward = (m - 1 - position)[:, :, None, :] <= steps[None, None, :, None]
    walks = np.concatenate([forward, backward], axis=2)  # (n, P, 2*(M-1), M)
    walks = walks.reshape(n, n_perms * 2 * (m - 1), m)
    masks = np.zeros((n, 2 + walks.shape[1], m), dtype=bool)
    masks[:, 1, :] = True
    masks[:, 2:, :] = walks
    return masks


def _assemble_walks_batch(
    perms: np.ndarray, values: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Average marginal contributions over all walks, vectorized over rows.

    values: (n_rows, n_masks) in the `_walk_masks_batch` order. Returns
    (base values, phi matrix, full-coalition values).
    """
    n, n_perms, m = perms.shape
    v_empty = values[:, 0]
    v_full = values[:, 1]
    interior = values[:, 2:].reshape(n, n_perms, 2, m - 1)
    ends = np.broadcast_to(v_empty[:, None, None, None], (n, n_perms, 2, 1))
    fulls = np.broadcast_to(v_full[:, None, None, None], (n, n_perms, 2, 1))
    walk_values = np.concatenate([ends, interior, fulls], axis=3)  # (n, P, 2, M+1)
    contrib = np.diff(walk_values, axis=3)  # (n, P, 2, M)
    order = np.stack([perms, perms[:, :, ::-1]], axis=2)  # feature joining at step t
    phi = np.zeros((n, m))
    rows = np.broadcast_to(np.arange(n)[:, None, None, None], order.shape)
    np.add.at(phi, (rows, order), contrib)
    phi /= 2 * n_perms
    return v_empty.astype(float), phi, v_full.astype(float)


def _sample_permutations(rng: np.random.Generator, n_permutations: int, m: int) -> np.ndarray:
    return np.vstack([rng.permutation(m) for _ in range(n_permutations)])


def permutation_shapley(
    model: Model, x, background, n_permutations: int, seed: int = 0
) -> ShapleyAttribution:
    """Antithetic permutation-sampling estimate of the Shapley values.

    Efficiency holds for any number of permutations since every walk
    telescopes to value(full) - value(empty).
    """
    if n_permutations < 1:
        raise DataError("n_permutations must be >= 1")
    x = np.asarray(x, dtype=float)
    background = np.atleast_2d(np.asarray(background, dtype=float))
    m = x.shape[0]
    perms = _sample_permutations(rng_for(seed), n_permutations, m)[None, :, :]
    values = coalition_values(model, x, background, _walk_masks_batch(perms)[0])
    bases, phis, _ = _assemble_walks_batch(perms, values[None, :])
    return ShapleyAttribution(base_value=float(bases[0]), phi=phis[0])


def permutation_shapley_batch(
    model: Model,
    rows: np.ndarray,
    background: np.ndarray,
    n_permutations: int,
    seed: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-row Shapley estimates with one model call for the whole batch.

    Row i uses the seed derived from (seed, i), so results are bit-identical
    to calling `permutation_shapley` row by row with those seeds, regardless
    of batch size or execution order.

    Returns (base_values, phi matrix, full-coalition values).
    """
    if n_permutations < 1:
        raise DataError("n_permutations must be >= 1")
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    background = np.atleast_2d(np.asarray(background, dtype=float))
    n, m = rows.shape
    n_bg = background.shape[0]
    n_masks = 2 + n_permutations * 2 * (m - 1)

    bases = np.empty(n)
    fulls = np.empty(n)
    phis = np.empty((n, m))
    # Chunk rows to bound the blend buffer at roughly 32M doubles.
    chunk = max(1, int(32_000_000 / (n_masks * n_bg * m)))
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        perms = np.stack(
            [
                _sample_permutations(rng_for(derive_seed(seed, i)), n_permutations, m)
                for i in range(lo, hi)
            ]
        )
        masks = _walk_masks_batch(perms)
        blends = np.where(
            masks[:, :, None, :], rows[lo:hi, None, None, :], background[None, None, :, :]
        )
        predictions = model(blends.reshape((hi - lo) * n_masks * n_bg, m))
        values = np.asarray(predictions, dtype=float).reshape(hi - lo, n_masks, n_bg).mean(axis=2)
        bases[lo:hi], phis[lo:hi], fulls[lo:hi] = _assemble_walks_batch(perms, values)
    return bases, phis, fulls
