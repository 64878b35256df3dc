"""Exact Gaussian simulation from the covariance model."""

from __future__ import annotations

import numpy as np

from .covariance import ObservationLayout, assemble, grid_for, table_for
from .likelihood import cholesky
from .params import ModelParams


def covariance_factor(p: ModelParams, layout: ObservationLayout, pad_factor: int = 7) -> np.ndarray:
    """Lower Cholesky factor of the model covariance on ``layout``."""
    grid = grid_for(layout, pad_factor)
    return cholesky(assemble(layout, p, table_for(layout, p, grid)))


def sample(p: ModelParams, layout: ObservationLayout, seed: int, n_reps: int = 1,
           pad_factor: int = 7, chol: np.ndarray | None = None) -> np.ndarray:
    """Draw ``n_reps`` samples, returned as an ``(n_reps, len(layout))`` array.

    Replicate ``r`` uses its own generator seeded with ``seed + r``, so any
    subset of replicates can be regenerated independently.
    """
    if chol is None:
        chol = covariance_factor(p, layout, pad_factor)
    n = chol.shape[0]
    out = np.empty((n_reps, n))
    # one matrix-vector product per replicate keeps each draw bit-identical
    # regardless of how many replicates are requested together
    for r in range(n_reps):
        out[r] = chol @ np.random.default_rng(seed + r).standard_normal(n)
    return out
