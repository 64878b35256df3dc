"""Observation layouts and dense covariance assembly.

Entry ``(i, j)`` of the covariance matrix is

    lambda(x_i, t_i) lambda(x_j, t_j) K(t_i - t_j; x_i, x_j)
        + eta_st**2 [i == j] + eta_t**2 [t_i == t_j]

The temporal nugget couples *all* sites observed at the same time index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AssemblyError, ConfigError
from .fft_kernel import FrequencyGrid, KernelTable, kernel_table, make_frequency_grid
from .params import KERNEL_PARAMS, ModelParams, check_names
from .spectral import _butterworth_parts, knot_weights


@dataclass(frozen=True)
class ObservationLayout:
    """Which (site, time) cells are observed.

    ``site_index[i]`` indexes ``site_altitudes`` and ``time_index[i]`` is the
    integer sample time of observation ``i``. Use :meth:`from_entries`,
    :meth:`full` or :meth:`from_mask` to get the canonical (site, time)
    sorted order.
    """

    site_index: np.ndarray
    time_index: np.ndarray
    site_altitudes: np.ndarray

    def __post_init__(self):
        si = np.asarray(self.site_index, dtype=np.int64)
        ti = np.asarray(self.time_index, dtype=np.int64)
        alt = np.asarray(self.site_altitudes, dtype=float)
        if si.shape != ti.shape or si.ndim != 1:
            raise ConfigError("site_index and time_index must be 1-d arrays of equal length")
        if len(si) == 0:
            raise ConfigError("layout has no observations")
        if np.any(np.diff(alt) <= 0):
            raise ConfigError("site_altitudes must be strictly increasing")
        if si.min() < 0 or si.max() >= len(alt):
            raise ConfigError("site_index out of range")
        if ti.min() < 0:
            raise ConfigError("time indices must be nonnegative")
        keys = si * (ti.max() + 1) + ti
        if len(np.unique(keys)) != len(keys):
            raise ConfigError("layout entries must be unique")
        object.__setattr__(self, "site_index", si)
        object.__setattr__(self, "time_index", ti)
        object.__setattr__(self, "site_altitudes", alt)

    def __len__(self):
        return len(self.site_index)

    @classmethod
    def from_entries(cls, entries, site_altitudes) -> "ObservationLayout":
        entries = sorted((int(s), int(t)) for s, t in entries)
        si, ti = zip(*entries) if entries else ((), ())
        return cls(np.array(si), np.array(ti), np.asarray(site_altitudes, dtype=float))

    @classmethod
    def full(cls, site_altitudes, times) -> "ObservationLayout":
        """Every site observed at every time in ``times``."""
        times = np.asarray(times, dtype=np.int64)
        n_s = len(site_altitudes)
        return cls(np.repeat(np.arange(n_s), len(times)), np.tile(times, n_s),
                   np.asarray(site_altitudes, dtype=float))

    @classmethod
    def from_mask(cls, site_altitudes, times, observed) -> "ObservationLayout":
        """Layout from a boolean ``(n_times, n_sites)`` mask of observed cells."""
        observed = np.asarray(observed, dtype=bool)
        times = np.asarray(times, dtype=np.int64)
        s, t = np.nonzero(observed.T)
        return cls(s, times[t], np.asarray(site_altitudes, dtype=float))

    @property
    def altitudes(self) -> np.ndarray:
        """Altitude of every observation."""
        return self.site_altitudes[self.site_index]

    @property
    def max_lag(self) -> int:
        return int(self.time_index.max() - self.time_index.min())

    @property
    def time_span(self) -> tuple:
        return int(self.time_index.min()), int(self.time_index.max())

    def subset(self, keep) -> "ObservationLayout":
        keep = np.asarray(keep)
        return ObservationLayout(self.site_index[keep], self.time_index[keep], self.site_altitudes)


def grid_for(layout: ObservationLayout, pad_factor: int = 7) -> FrequencyGrid:
    """Frequency grid long enough for every lag in ``layout``."""
    return make_frequency_grid(max(layout.max_lag + 1, 2), pad_factor)


def table_for(layout: ObservationLayout, p: ModelParams, grid: FrequencyGrid, free_params=()) -> KernelTable:
    return kernel_table(layout.site_altitudes, p, grid, layout.max_lag + 1, free_params)


def scale_field(layout: ObservationLayout, p: ModelParams, free_params=()):
    """lambda at each observation, plus its partials for the requested parameters."""
    x = layout.altitudes
    above = x > p.beta
    excess = np.where(above, x - p.beta, 0.0)
    decay, dlog_phi1, dlog_phi2, dlog_z = _butterworth_parts(excess, 0.0, p.phi1, p.phi2)
    weights = knot_weights(layout.time_index, p)
    local = weights @ np.asarray(p.theta_knots)
    lam = decay * local
    partials = {}
    for name in free_params:
        if name.startswith("theta"):
            partials[name] = decay * weights[:, int(name[5:])]
        elif name == "phi1":
            partials[name] = lam * dlog_phi1
        elif name == "phi2":
            partials[name] = lam * dlog_phi2
        elif name == "beta":
            # d(x - beta)_+ / d beta = -1 above beta, 0 at or below
            partials[name] = np.where(above, -lam * dlog_z, 0.0)
    return lam, partials


def _check_table(layout: ObservationLayout, table: KernelTable):
    if layout.max_lag >= table.n_lags:
        raise AssemblyError(
            f"layout needs lags up to {layout.max_lag} but table has only {table.n_lags - 1}"
        )
    sites = np.asarray(table.sites)
    pos = np.searchsorted(sites, layout.site_altitudes)
    pos = np.clip(pos, 0, len(sites) - 1)
    missing = sites[pos] != layout.site_altitudes
    if np.any(missing):
        raise AssemblyError(
            f"table lacks altitudes {layout.site_altitudes[missing].tolist()}"
        )
    return pos


def _gather(arr, layout, pos, table):
    s = pos[layout.site_index]
    t = layout.time_index
    return arr[s[:, None], s[None, :], (t[:, None] - t[None, :]) + table.n_lags - 1]


def _same_time(layout):
    t = layout.time_index
    return (t[:, None] == t[None, :]).astype(float)


def assemble(layout: ObservationLayout, p: ModelParams, table: KernelTable) -> np.ndarray:
    """Dense covariance matrix for ``layout``."""
    pos = _check_table(layout, table)
    lam, _ = scale_field(layout, p)
    sigma = _gather(table.values, layout, pos, table)
    sigma *= lam[:, None] * lam[None, :]
    if p.eta_t:
        sigma += p.eta_t ** 2 * _same_time(layout)
    sigma[np.diag_indices_from(sigma)] += p.eta_st ** 2
    return sigma


def iter_assemble_grad(layout: ObservationLayout, p: ModelParams, table: KernelTable, free_params):
    """Yield ``(name, dSigma/dname)`` one parameter at a time."""
    names = check_names(free_params)
    pos = _check_table(layout, table)
    lam, dlam = scale_field(layout, p, names)
    base = None
    lamlam = lam[:, None] * lam[None, :]
    for name in names:
        if name == "eta_st":
            yield name, 2.0 * p.eta_st * np.eye(len(layout))
            continue
        if name == "eta_t":
            yield name, 2.0 * p.eta_t * _same_time(layout)
            continue
        out = None
        if name in KERNEL_PARAMS:
            if name not in table.grads:
                raise AssemblyError(f"kernel table carries no derivative for {name!r}")
            out = _gather(table.grads[name], layout, pos, table) * lamlam
        if name in dlam:
            if base is None:
                base = _gather(table.values, layout, pos, table)
            cross = dlam[name][:, None] * lam[None, :]
            term = base * (cross + cross.T)
            out = term if out is None else out + term
        yield name, out


def assemble_grad(layout: ObservationLayout, p: ModelParams, table: KernelTable, free_params) -> dict:
    """Derivatives of :func:`assemble` for each parameter in ``free_params``."""
    return dict(iter_assemble_grad(layout, p, table, free_params))
