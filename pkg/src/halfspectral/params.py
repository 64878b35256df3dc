"""Model parameters and the transforms used for unconstrained optimization."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError

#: The 25 estimable parameters, in canonical order.
PARAM_NAMES = (
    "theta0", "theta1", "theta2", "theta3",
    "rho0", "nu0", "rho1", "nu1",
    "zeta00", "zeta01", "zeta02", "zeta10", "zeta11", "zeta12",
    "beta", "tau",
    "xi00", "xi01", "xi1", "xi2",
    "phi1", "phi2",
    "alpha",
    "eta_st", "eta_t",
)

#: Parameters that may take any real value. Everything else is log-transformed.
UNCONSTRAINED = frozenset({"rho0", "rho1", "alpha"})

#: Parameters allowed to be exactly zero.
NONNEGATIVE = frozenset({"eta_st", "eta_t"})

#: Parameters that enter only through the scale field or the nuggets, not the kernel K.
SCALE_PARAMS = frozenset({"theta0", "theta1", "theta2", "theta3", "phi1", "phi2"})
NUGGET_PARAMS = frozenset({"eta_st", "eta_t"})
KERNEL_PARAMS = frozenset(PARAM_NAMES) - SCALE_PARAMS - NUGGET_PARAMS

DEFAULT_WINDOW = 775.0


def evenly_spaced_knots(t_start: float, t_end: float, n_knots: int = 4) -> tuple:
    """Knot times spaced evenly over ``[t_start, t_end]``, endpoints included."""
    if not t_end > t_start:
        raise ConfigError(f"knot window must have t_end > t_start, got [{t_start}, {t_end}]")
    return tuple(float(t) for t in np.linspace(t_start, t_end, n_knots))


@dataclass(frozen=True)
class ModelParams:
    """All parameters of the nonstationary half-spectral covariance model.

    Altitudes are in meters and times in sample units. The structural
    constants (``knot_times``, ``knot_decay``, ``nu_s_below``,
    ``nu_s_above``) are never estimated.
    """

    theta_knots: tuple = (1.0, 1.0, 1.0, 1.0)
    rho0: float = 2.0
    nu0: float = 1.0
    rho1: float = 4.0
    nu1: float = 1.5
    zeta00: float = 10.0
    zeta01: float = 0.05
    zeta02: float = 1.0
    zeta10: float = 11.0
    zeta11: float = 0.05
    zeta12: float = 1.0
    beta: float = 450.0
    tau: float = 0.05
    xi00: float = 1.0
    xi01: float = 2.0
    xi1: float = 0.05
    xi2: float = 2.0
    phi1: float = 100.0
    phi2: float = 1.0
    alpha: float = 0.0
    eta_st: float = 0.05
    eta_t: float = 0.01
    knot_times: tuple = evenly_spaced_knots(0.0, DEFAULT_WINDOW)
    knot_decay: float = 50.0
    nu_s_below: float = 0.5
    nu_s_above: float = 0.75

    def __post_init__(self):
        object.__setattr__(self, "theta_knots", tuple(float(v) for v in self.theta_knots))
        object.__setattr__(self, "knot_times", tuple(float(v) for v in self.knot_times))
        if len(self.theta_knots) != len(self.knot_times):
            raise ConfigError(
                f"{len(self.theta_knots)} theta knots but {len(self.knot_times)} knot times"
            )
        if len(self.theta_knots) != 4:
            raise ConfigError("the model uses exactly four scale knots")
        if any(b <= a for a, b in zip(self.knot_times, self.knot_times[1:])):
            raise ConfigError(f"knot_times must be strictly increasing: {self.knot_times}")
        for name in PARAM_NAMES:
            v = self[name]
            if not math.isfinite(v):
                raise ConfigError(f"parameter {name} is not finite: {v}")
            if name in UNCONSTRAINED:
                continue
            if name in NONNEGATIVE:
                if v < 0:
                    raise ConfigError(f"parameter {name} must be >= 0, got {v}")
            elif v <= 0:
                raise ConfigError(f"parameter {name} must be > 0, got {v}")
        for name in ("knot_decay", "nu_s_below", "nu_s_above"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")

    def __getitem__(self, name: str) -> float:
        if name.startswith("theta") and name[5:].isdigit():
            idx = int(name[5:])
            if idx < len(self.theta_knots):
                return self.theta_knots[idx]
        elif name in PARAM_NAMES:
            return getattr(self, name)
        raise ConfigError(f"unknown parameter name {name!r}")

    def replace(self, **changes) -> "ModelParams":
        """Return a copy with some fields (or ``thetaK`` entries) replaced."""
        thetas = list(self.theta_knots)
        fields = {}
        for name, value in changes.items():
            if name.startswith("theta") and name[5:].isdigit():
                idx = int(name[5:])
                if idx >= len(thetas):
                    raise ConfigError(f"unknown parameter name {name!r}")
                thetas[idx] = float(value)
            elif name in {f.name for f in dataclasses.fields(self)}:
                fields[name] = value
            else:
                raise ConfigError(f"unknown parameter name {name!r}")
        if "theta_knots" not in fields:
            fields["theta_knots"] = tuple(thetas)
        return dataclasses.replace(self, **fields)

    def vector(self, names: Sequence[str] = PARAM_NAMES) -> np.ndarray:
        return np.array([self[n] for n in names], dtype=float)

    def with_vector(self, names: Sequence[str], values: Iterable[float]) -> "ModelParams":
        values = list(values)
        if len(values) != len(names):
            raise ConfigError(f"{len(names)} names but {len(values)} values")
        return self.replace(**{n: float(v) for n, v in zip(names, values)})

    def with_window(self, t_start: float, t_end: float) -> "ModelParams":
        """Place the scale knots evenly over the given time window."""
        return dataclasses.replace(self, knot_times=evenly_spaced_knots(t_start, t_end))

    def to_dict(self) -> dict:
        out = {name: self[name] for name in PARAM_NAMES}
        out.update(
            knot_times=list(self.knot_times),
            knot_decay=self.knot_decay,
            nu_s_below=self.nu_s_below,
            nu_s_above=self.nu_s_above,
        )
        return out

    @classmethod
    def from_dict(cls, data: Mapping, base: "ModelParams | None" = None) -> "ModelParams":
        """Build parameters from a flat mapping of names to values.

        Accepts either ``theta0``..``theta3`` or a ``theta_knots`` list.
        Missing entries are taken from ``base`` (defaults if None).
        """
        base = base if base is not None else cls()
        changes = dict(data)
        if "knot_times" in changes:
            changes["knot_times"] = tuple(changes["knot_times"])
        if "theta_knots" in changes:
            changes["theta_knots"] = tuple(changes["theta_knots"])
        return base.replace(**changes)


def check_names(names: Iterable[str]) -> tuple:
    """Validate a list of estimable parameter names, preserving order."""
    names = tuple(names)
    unknown = [n for n in names if n not in PARAM_NAMES]
    if unknown:
        raise ConfigError(f"unknown parameter name(s): {', '.join(map(repr, unknown))}")
    if len(set(names)) != len(names):
        raise ConfigError("duplicate parameter names")
    return names


class ParamTransform:
    """Log transform for positive parameters, identity for the rest.

    Parameters
    ----------
    names : sequence of str
        Parameter names in vector order.
    """

    def __init__(self, names: Sequence[str]):
        self.names = check_names(names)
        self.is_log = np.array([n not in UNCONSTRAINED for n in self.names])

    def to_unconstrained(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if np.any(values[self.is_log] <= 0):
            bad = [n for n, v, lg in zip(self.names, values, self.is_log) if lg and v <= 0]
            raise ConfigError(f"cannot log-transform non-positive parameter(s) {bad}")
        return np.where(self.is_log, np.log(np.where(self.is_log, values, 1.0)), values)

    def to_natural(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return np.where(self.is_log, np.exp(np.where(self.is_log, z, 0.0)), z)

    def jacobian(self, z) -> np.ndarray:
        """Diagonal of d(natural)/d(unconstrained)."""
        z = np.asarray(z, dtype=float)
        return np.where(self.is_log, np.exp(np.where(self.is_log, z, 0.0)), 1.0)
