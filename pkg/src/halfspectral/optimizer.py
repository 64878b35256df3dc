"""Trust-region maximum likelihood in log-transformed coordinates.

The optimizer minimizes the negative log-likelihood. Gradients are the
symmetrized stochastic gradient and the curvature model is the stochastic
expected Fisher matrix, both with probes held fixed across iterations so
that the derivatives describe one deterministic surrogate problem.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .covariance import ObservationLayout, grid_for
from .errors import ConfigError, HalfSpectralError, NumericError
from .likelihood import ProbeSet, evaluate, standard_errors, stochastic_derivatives
from .params import PARAM_NAMES, ModelParams, ParamTransform, check_names

log = logging.getLogger(__name__)

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class TrustRegionOptions:
    initial_radius: float = 1.0
    max_radius: float = 100.0
    min_radius: float = 1e-10
    accept_ratio: float = 0.1
    shrink: float = 0.25
    grow: float = 2.0
    max_iter: int = 200
    tolerance: float = 1e-6
    gtol: float = 0.0

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ConfigError("tolerance must be positive")
        if not 0 < self.initial_radius <= self.max_radius:
            raise ConfigError("need 0 < initial_radius <= max_radius")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be at least 1")


@dataclass
class TrustRegionResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    hess: np.ndarray
    trace: list
    converged: bool
    n_iterations: int
    message: str


def dogleg(g: np.ndarray, B: np.ndarray, radius: float) -> np.ndarray:
    """Approximate minimizer of ``g^T p + p^T B p / 2`` subject to ``|p| <= radius``.

    Uses the dogleg path when ``B`` is positive definite and falls back to the
    steepest-descent step to the boundary otherwise.
    """
    gnorm = np.linalg.norm(g)
    if gnorm == 0:
        return np.zeros_like(g)
    try:
        c = np.linalg.cholesky(B)
    except np.linalg.LinAlgError:
        return -radius * g / gnorm
    full = -np.linalg.solve(c.T, np.linalg.solve(c, g))
    if np.linalg.norm(full) <= radius:
        return full
    curv = g @ B @ g
    cauchy = -(gnorm ** 2 / curv) * g
    cnorm = np.linalg.norm(cauchy)
    if cnorm >= radius:
        return -radius * g / gnorm
    # move from the Cauchy point toward the Newton point until |p| = radius
    d = full - cauchy
    a = d @ d
    b = 2 * cauchy @ d
    c0 = cnorm ** 2 - radius ** 2
    t = (-b + np.sqrt(b * b - 4 * a * c0)) / (2 * a)
    return cauchy + t * d


def minimize_trust_region(fun: Callable, x0, options: TrustRegionOptions = TrustRegionOptions()):
    """Minimize ``fun`` where ``fun(x)`` returns ``(value, gradient, curvature)``.

    Terminates when an accepted step changes the objective by at most
    ``tolerance * max(|f|, 1)`` or a rejected step was predicted to change
    it by no more than that, when the gradient norm drops to ``gtol``,
    when an interior step predicts no decrease above rounding (stationary),
    when the radius collapses below ``min_radius`` (not converged) or after
    ``max_iter`` iterations (not converged).
    """
    x = np.asarray(x0, dtype=float).copy()
    f, g, B = fun(x)
    if not np.isfinite(f):
        raise NumericError(f"objective is not finite at the initial point: {f}")
    radius = options.initial_radius
    trace = []
    converged = False
    message = "maximum iterations reached"
    it = 0
    for it in range(1, options.max_iter + 1):
        if options.gtol > 0 and np.linalg.norm(g) <= options.gtol:
            converged, message = True, "gradient norm below gtol"
            it -= 1
            break
        step = dogleg(g, B, radius)
        snorm = float(np.linalg.norm(step))
        predicted = -(g @ step + 0.5 * step @ B @ step)
        if snorm < radius and not predicted > _EPS * max(abs(f), 1.0):
            # an interior (Newton) step that the model says cannot lower f:
            # the iterate is stationary to rounding
            converged, message = True, "stationary point: no predicted decrease"
            it -= 1
            break
        try:
            f_new, g_new, B_new = fun(x + step)
        except (HalfSpectralError, np.linalg.LinAlgError) as exc:
            log.debug("trial point failed: %s", exc)
            f_new = np.inf
        actual = f - f_new if np.isfinite(f_new) else -np.inf
        ratio = actual / predicted if predicted > 0 else (-np.inf if actual < 0 else 0.0)
        if ratio < 0.25:
            radius = options.shrink * radius
        elif ratio > 0.75 and snorm >= 0.99 * radius:
            radius = min(options.grow * radius, options.max_radius)
        accepted = bool(ratio > options.accept_ratio and f_new <= f)
        if accepted:
            change = abs(f - f_new)
            x, f, g, B = x + step, f_new, g_new, B_new
        trace.append(dict(iteration=it, objective=float(f), step_norm=snorm,
                          radius=float(radius), ratio=float(ratio), accepted=accepted))
        log.info("iter %3d  f=%.10g  |step|=%.3g  radius=%.3g  ratio=%.3g  %s",
                 it, f, snorm, radius, ratio, "accept" if accepted else "reject")
        threshold = options.tolerance * max(abs(f), 1.0)
        if accepted and change <= threshold:
            converged, message = True, "relative objective change below tolerance"
            break
        if not accepted and predicted <= threshold:
            # the model promises less than the tolerance inside the trust region
            # and the objective does not deliver even that: with a noisy
            # gradient this is the attainable optimum
            converged, message = True, "predicted objective change below tolerance"
            break
        if radius < options.min_radius:
            message = "trust radius collapsed; steps persistently rejected"
            break
    return TrustRegionResult(x, float(f), g, B, trace, converged, it, message)


@dataclass(frozen=True)
class FitOptions:
    """Everything that controls a fit besides the data and the initial point."""

    free_params: tuple = PARAM_NAMES
    n_probes: int = 72
    seed: int = 0
    pad_factor: int = 7
    trust_region: TrustRegionOptions = field(default_factory=TrustRegionOptions)

    def __post_init__(self):
        names = check_names(self.free_params)
        if not names:
            raise ConfigError("every parameter is frozen; nothing to fit")
        object.__setattr__(self, "free_params", names)


def freeze(names=(), base: FitOptions | None = None) -> FitOptions:
    """Fit options with ``names`` held at their initial values."""
    frozen = set(check_names(names))
    free = tuple(n for n in PARAM_NAMES if n not in frozen)
    if not free:
        raise ConfigError("every parameter is frozen; nothing to fit")
    base = base if base is not None else FitOptions()
    return replace(base, free_params=free)


@dataclass
class FitResult:
    estimates: ModelParams
    free_params: tuple
    loglik: float
    gradient: np.ndarray
    fisher: np.ndarray
    std_errors: np.ndarray
    trace: list
    converged: bool
    n_iterations: int
    seed: int
    message: str = ""

    def to_dict(self) -> dict:
        return dict(
            converged=self.converged,
            message=self.message,
            n_iterations=self.n_iterations,
            seed=self.seed,
            loglik=self.loglik,
            free_params=list(self.free_params),
            estimates=self.estimates.to_dict(),
            std_errors={n: _jsonable(s) for n, s in zip(self.free_params, self.std_errors)},
            gradient={n: float(g) for n, g in zip(self.free_params, self.gradient)},
            fisher=self.fisher.tolist(),
        )

    def trace_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, ["iteration", "objective", "step_norm", "radius", "ratio",
                                      "accepted"], lineterminator="\n")
        writer.writeheader()
        for row in self.trace:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
        return buf.getvalue()


def _jsonable(x):
    return None if not np.isfinite(x) else float(x)


def fit(y, layout: ObservationLayout, init: ModelParams, opts: FitOptions = FitOptions()) -> FitResult:
    """Maximum likelihood estimate of the free parameters.

    The trace's ``objective`` column holds the exact log-likelihood (not its
    negative) at each accepted iterate.
    """
    y = np.asarray(y, dtype=float)
    names = opts.free_params
    grid = grid_for(layout, opts.pad_factor)
    probes = ProbeSet.rademacher(len(y), opts.n_probes, opts.seed)
    transform = ParamTransform(names)

    def objective(z):
        p = init.with_vector(names, transform.to_natural(z))
        state = evaluate(p, y, layout, grid, names)
        grad, fisher = stochastic_derivatives(state, probes)
        jac = transform.jacobian(z)
        return -state.loglik, -grad * jac, fisher * np.outer(jac, jac)

    z0 = transform.to_unconstrained(init.vector(names))
    result = minimize_trust_region(objective, z0, opts.trust_region)
    for row in result.trace:
        row["objective"] = -row["objective"]

    estimates = init.with_vector(names, transform.to_natural(result.x))
    state = evaluate(estimates, y, layout, grid, names)
    grad, fisher = stochastic_derivatives(state, probes)
    se = standard_errors(fisher, names)
    return FitResult(
        estimates=estimates,
        free_params=names,
        loglik=state.loglik,
        gradient=grad,
        fisher=fisher,
        std_errors=se,
        trace=result.trace,
        converged=result.converged,
        n_iterations=result.n_iterations,
        seed=opts.seed,
        message=result.message,
    )
