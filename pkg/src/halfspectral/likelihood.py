"""Exact Gaussian log-likelihood with exact and stochastic derivatives.

The data are modeled as ``y ~ N(0, Sigma)``. With ``Sigma = L L^T`` and
``A_k = L^{-1} dSigma_k L^{-T}`` (symmetric), the score and expected
Fisher information are

    g_k = -1/2 tr(A_k) + 1/2 a^T dSigma_k a,      a = Sigma^{-1} y
    I_jk = 1/2 tr(A_j A_k)

The stochastic versions replace the traces with Hutchinson averages over a
fixed set of Rademacher probes ``u``: ``tr(A_k) ~ mean u^T A_k u`` and
``tr(A_j A_k) ~ mean <A_j u, A_k u>``. Whitening on both sides keeps the
estimand symmetric and makes the Fisher estimate a Gram matrix, so it is
positive semi-definite for every probe draw.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack, solve_triangular

from .covariance import ObservationLayout, assemble, iter_assemble_grad, table_for
from .errors import ConditioningWarning, ConfigError, IndefiniteMatrixError, NumericError
from .fft_kernel import FrequencyGrid
from .params import ModelParams, check_names

LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class ProbeSet:
    """Fixed Rademacher probe vectors, stored as columns of ``probes``."""

    probes: np.ndarray
    seed: int | None = None

    @property
    def m(self) -> int:
        return self.probes.shape[1]

    @classmethod
    def rademacher(cls, n: int, m: int = 72, seed: int = 0) -> "ProbeSet":
        if m < 1:
            raise ConfigError(f"probe count must be positive, got {m}")
        rng = np.random.default_rng(seed)
        signs = rng.integers(0, 2, size=(n, m)) * 2.0 - 1.0
        return cls(probes=signs, seed=seed)

    @classmethod
    def exhaustive(cls, n: int) -> "ProbeSet":
        """All ``2**n`` sign vectors; makes the trace estimators exact."""
        if n > 16:
            raise ConfigError("exhaustive probes only for n <= 16")
        signs = np.array(list(itertools.product((-1.0, 1.0), repeat=n))).T
        return cls(probes=signs, seed=None)


def cholesky(sigma: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor; raises :class:`IndefiniteMatrixError` with the failing pivot."""
    factor, info = lapack.dpotrf(sigma, lower=1, clean=1)
    if info > 0:
        raise IndefiniteMatrixError(info - 1)
    if info < 0:
        raise NumericError(f"dpotrf: illegal argument {-info}")
    return factor


def gaussian_loglik(chol: np.ndarray, y: np.ndarray) -> float:
    """Zero-mean Gaussian log density given the lower Cholesky factor."""
    z = solve_triangular(chol, y, lower=True)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return -0.5 * (len(y) * LOG_2PI + logdet + z @ z)


@dataclass
class LikelihoodState:
    """Everything derived from one parameter point, shared by value and derivatives."""

    params: ModelParams
    layout: ObservationLayout
    y: np.ndarray
    sigma: np.ndarray
    chol: np.ndarray
    loglik: float
    solved: np.ndarray  # Sigma^{-1} y
    free_params: tuple = ()
    table: object = None

    def grad_matrices(self):
        """Yield ``(name, dSigma/dname)`` without holding all of them in memory."""
        yield from iter_assemble_grad(self.layout, self.params, self.table, self.free_params)


def evaluate(p: ModelParams, y, layout: ObservationLayout, grid: FrequencyGrid,
             free_params=()) -> LikelihoodState:
    """Assemble, factorize and evaluate the log-likelihood at ``p``."""
    y = np.asarray(y, dtype=float)
    if y.shape != (len(layout),):
        raise ConfigError(f"data vector has shape {y.shape}, layout has {len(layout)} entries")
    names = check_names(free_params)
    table = table_for(layout, p, grid, names)
    sigma = assemble(layout, p, table)
    chol = cholesky(sigma)
    z = solve_triangular(chol, y, lower=True)
    solved = solve_triangular(chol, z, lower=True, trans="T")
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    value = -0.5 * (len(y) * LOG_2PI + logdet + z @ z)
    return LikelihoodState(p, layout, y, sigma, chol, float(value), solved, names, table)


def loglik(p: ModelParams, y, layout: ObservationLayout, grid: FrequencyGrid) -> float:
    """Exact zero-mean Gaussian log-likelihood."""
    return evaluate(p, y, layout, grid).loglik


def exact_gradient(state: LikelihoodState) -> np.ndarray:
    sigma_inv = solve_triangular(
        state.chol, solve_triangular(state.chol, np.eye(len(state.y)), lower=True),
        lower=True, trans="T",
    )
    out = []
    for _, d in state.grad_matrices():
        out.append(-0.5 * np.sum(sigma_inv * d) + 0.5 * state.solved @ d @ state.solved)
    return np.array(out)


def exact_fisher(state: LikelihoodState) -> np.ndarray:
    """Dense expected Fisher information ``1/2 tr(Sigma^-1 dS_j Sigma^-1 dS_k)``."""
    whitened = [_whiten(state.chol, d) for _, d in state.grad_matrices()]
    k = len(whitened)
    fisher = np.empty((k, k))
    for i in range(k):
        for j in range(i, k):
            fisher[i, j] = fisher[j, i] = 0.5 * np.sum(whitened[i] * whitened[j])
    return fisher


def _whiten(chol, d):
    left = solve_triangular(chol, d, lower=True)
    return solve_triangular(chol, left.T, lower=True)


def _probe_pass(state: LikelihoodState, probes: ProbeSet):
    """One sweep over dSigma_k: probe images ``A_k u`` and quadratic terms ``a^T dSigma_k a``."""
    u = probes.probes
    if u.shape[0] != len(state.y):
        raise ConfigError(f"probes have length {u.shape[0]}, data has {len(state.y)}")
    back = solve_triangular(state.chol, u, lower=True, trans="T")
    images, quads = [], []
    for _, d in state.grad_matrices():
        images.append(solve_triangular(state.chol, d @ back, lower=True))
        quads.append(state.solved @ d @ state.solved)
    return images, np.array(quads)


def stochastic_derivatives(state: LikelihoodState, probes: ProbeSet):
    """Symmetrized stochastic gradient and expected Fisher, sharing one set of solves."""
    u = probes.probes
    images, quads = _probe_pass(state, probes)
    traces = np.array([np.sum(u * img) for img in images]) / probes.m
    grad = -0.5 * traces + 0.5 * quads
    if images:
        stacked = np.stack([img.ravel() for img in images])
        fisher = stacked @ stacked.T / (2.0 * probes.m)
    else:
        fisher = np.empty((0, 0))
    return grad, fisher


def loglik_grad_exact(p, y, layout, grid, free_params) -> np.ndarray:
    """Exact gradient of :func:`loglik` using dense traces."""
    return exact_gradient(evaluate(p, y, layout, grid, free_params))


def stochastic_grad(p, y, layout, grid, free_params, probes: ProbeSet) -> np.ndarray:
    """Unbiased symmetrized stochastic gradient of :func:`loglik`."""
    return stochastic_derivatives(evaluate(p, y, layout, grid, free_params), probes)[0]


def stochastic_fisher(p, layout, grid, free_params, probes: ProbeSet) -> np.ndarray:
    """Symmetrized stochastic expected Fisher information (PSD Gram matrix)."""
    state = evaluate(p, np.zeros(len(layout)), layout, grid, free_params)
    return stochastic_derivatives(state, probes)[1]


def standard_errors(fisher, names=None, rcond: float = 1e-10) -> np.ndarray:
    """Standard deviations from the (pseudo-)inverse of a Fisher matrix.

    Directions with eigenvalues below ``rcond * max eigenvalue`` are treated
    as unidentified: a :class:`ConditioningWarning` names the affected
    parameters and their standard errors are reported as NaN; the remaining
    ones come from the pseudo-inverse. A matrix with no identified direction
    raises :class:`NumericError` listing the null-space combinations.
    """
    fisher = np.asarray(fisher, dtype=float)
    k = fisher.shape[0]
    names = list(names) if names is not None else [f"p{i}" for i in range(k)]
    if fisher.shape != (k, k) or not np.allclose(fisher, fisher.T, rtol=1e-10, atol=0):
        raise ConfigError("Fisher matrix must be square and symmetric")
    vals, vecs = np.linalg.eigh(0.5 * (fisher + fisher.T))
    top = vals.max(initial=0.0)
    if top <= 0:
        raise NumericError("Fisher matrix is singular in every direction: "
                           + "; ".join(_describe(vecs[:, i], names) for i in range(k)))
    good = vals > rcond * top
    inv = (vecs[:, good] / vals[good]) @ vecs[:, good].T
    se = np.sqrt(np.clip(np.diag(inv), 0.0, None))
    if not good.all():
        null = vecs[:, ~good]
        loading = np.sum(null ** 2, axis=1)
        affected = loading > 1e-6
        se[affected] = np.nan
        combos = "; ".join(_describe(null[:, i], names) for i in range(null.shape[1]))
        warnings.warn(
            f"Fisher matrix is near-singular (cond > {1 / rcond:.0e}); unidentified "
            f"direction(s): {combos}",
            ConditioningWarning,
            stacklevel=2,
        )
    return se


def _describe(vec, names, tol=1e-3):
    terms = [f"{c:+.3g}*{n}" for c, n in zip(vec, names) if abs(c) > tol]
    return " ".join(terms) if terms else "0"
