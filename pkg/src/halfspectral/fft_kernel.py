"""Space-time kernel values at integer lags via inverse FFT of the cross-spectrum.

For sites ``x, x'`` the kernel at lag ``h`` is the periodic trapezoid rule

    K(h; x, x') = (1/N) sum_j exp(2 pi i f_j h) Phi_{x x'}(f_j)

on the signed Fourier grid ``f_j`` of length ``N = pad_factor * n_time``.
On an even grid the Nyquist node ``f = -1/2`` stands for both endpoints of
``[-1/2, 1/2]``; it is given the average of ``Phi(-1/2)`` and
``Phi(1/2) = conj(Phi(-1/2))``, i.e. its real part. With that convention
every inverse transform is real up to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from .errors import ConfigError, NumericError
from .params import KERNEL_PARAMS, ModelParams, check_names
from .spectral import SiteSpectra, pair_coherence

IMAG_RTOL = 1e-10
_PAIR_CHUNK = 64


@dataclass(frozen=True)
class FrequencyGrid:
    """Signed Fourier frequencies ``j / n_fft`` folded into ``[-1/2, 1/2)``."""

    n_fft: int
    n_time: int
    pad_factor: int
    rounded: bool = False

    @property
    def freqs(self) -> np.ndarray:
        return np.fft.fftfreq(self.n_fft)

    @property
    def max_lags(self) -> int:
        return self.n_fft // self.pad_factor


def make_frequency_grid(n_time: int, pad_factor: int = 7, fft_friendly: bool = False) -> FrequencyGrid:
    """Frequency grid of length ``pad_factor * n_time``.

    With ``fft_friendly`` the length is rounded up to the next 5-smooth size;
    the ``rounded`` flag records whether that changed anything.
    """
    if int(pad_factor) != pad_factor or pad_factor < 1:
        raise ConfigError(f"pad_factor must be a positive integer, got {pad_factor}")
    if int(n_time) != n_time or n_time < 2:
        raise ConfigError(f"n_time must be an integer >= 2, got {n_time}")
    n_fft = int(pad_factor) * int(n_time)
    rounded = False
    if fft_friendly:
        fast = scipy.fft.next_fast_len(n_fft, real=False)
        rounded = fast != n_fft
        n_fft = fast
    return FrequencyGrid(n_fft=n_fft, n_time=int(n_time), pad_factor=int(pad_factor), rounded=rounded)


def lags(n_lags: int) -> np.ndarray:
    """Lag values ``-(n_lags-1) .. n_lags-1`` in table order."""
    return np.arange(-(n_lags - 1), n_lags)


@dataclass
class KernelTable:
    """Kernel sequences for every ordered pair of sites.

    ``values[a, b, h + n_lags - 1]`` is K(h; sites[a], sites[b]) for
    ``|h| < n_lags``. ``grads`` maps a parameter name to an array of the same
    shape; parameters that do not enter K (scales, nuggets) are absent and
    have zero kernel derivative.
    """

    sites: np.ndarray
    n_lags: int
    values: np.ndarray
    grads: dict = field(default_factory=dict)

    def sequence(self, a: int, b: int) -> np.ndarray:
        return self.values[a, b]

    def at(self, a: int, b: int, h: int) -> float:
        if abs(h) >= self.n_lags:
            raise IndexError(f"lag {h} outside table of {self.n_lags} lags")
        return float(self.values[a, b, h + self.n_lags - 1])


def _check_lags(grid: FrequencyGrid, n_lags: int):
    if int(n_lags) != n_lags or n_lags < 1:
        raise ConfigError(f"n_lags must be a positive integer, got {n_lags}")
    if n_lags * grid.pad_factor > grid.n_fft:
        raise ConfigError(
            f"n_lags={n_lags} exceeds n_fft/pad_factor={grid.n_fft / grid.pad_factor:g}; "
            "lags would wrap around the FFT"
        )


def kernel_table(sites, p: ModelParams, grid: FrequencyGrid, n_lags: int, free_params=()) -> KernelTable:
    """Kernel values (and optionally parameter derivatives) for all site pairs.

    Parameters
    ----------
    sites : array_like
        Distinct altitudes in meters.
    p : ModelParams
    grid : FrequencyGrid
    n_lags : int
        Number of nonnegative lags; the table covers ``|h| < n_lags``.
    free_params : sequence of str
        Parameters to differentiate with respect to.
    """
    _check_lags(grid, n_lags)
    names = check_names(free_params)
    kernel_names = [n for n in names if n in KERNEL_PARAMS]
    sites = np.asarray(sites, dtype=float)
    if sites.ndim != 1 or len(np.unique(sites)) != len(sites):
        raise ConfigError("sites must be a 1-d sequence of distinct altitudes")
    n_s = len(sites)
    N = grid.n_fft

    # even quantities live on |f| = k/N, k = 0..N//2; the phase needs the signed grid
    n_half = N // 2 + 1
    s_half = np.sin(np.pi * np.arange(n_half) / N)
    s_full = np.sin(np.pi * grid.freqs)
    fold = np.minimum(np.arange(N), N - np.arange(N))
    nyquist = N // 2 if N % 2 == 0 else None

    spectra = SiteSpectra(sites, s_half, p, [n for n in kernel_names if n != "alpha"])
    bad = ~np.isfinite(spectra.sdf) | ~np.isfinite(spectra.gamma)
    if bad.any():
        site, k = np.argwhere(bad)[0]
        raise NumericError(
            f"non-finite spectrum at frequency {k / N:.6g} for altitude {sites[site]:g}"
        )

    # diagonal K(0) bounds every |K(h; a, b)| via sqrt(K0_a K0_b)
    weights = np.full(n_half, 2.0)
    weights[0] = 1.0
    if nyquist is not None:
        weights[-1] = 1.0
    k0 = spectra.sdf @ weights / N

    ia, ib = np.triu_indices(n_s)
    width = 2 * n_lags - 1
    take = np.r_[N - (n_lags - 1):N, 0:n_lags] % N
    values = np.empty((n_s, n_s, width))
    grads = {n: np.empty((n_s, n_s, width)) for n in kernel_names}

    nu_bar = 0.5 * (spectra.nu_s[ia] + spectra.nu_s[ib])
    for nu in np.unique(nu_bar):
        group = np.flatnonzero(nu_bar == nu)
        for start in range(0, len(group), _PAIR_CHUNK):
            chunk = group[start:start + _PAIR_CHUNK]
            a, b = ia[chunk], ib[chunk]
            _fill_pairs(values, grads, spectra, sites, a, b, float(nu), p, s_full, fold,
                        nyquist, take, k0, kernel_names)
    return KernelTable(sites=sites, n_lags=int(n_lags), values=values, grads=grads)


def _to_lags(phi_full, nyquist, take):
    if nyquist is not None:
        phi_full[:, nyquist] = phi_full[:, nyquist].real
    return scipy.fft.ifft(phi_full, axis=1)[:, take]


def _fill_pairs(values, grads, spectra, sites, a, b, nu, p, s_full, fold, nyquist, take, k0,
                names):
    dx = (sites[a] - sites[b])[:, None]
    dist = np.abs(dx)
    want = bool(names)
    coh = pair_coherence(spectra.gamma[a], spectra.gamma[b], dist, nu, want_slopes=want)
    if want:
        coh, e_a, e_b = coh
    mag = np.sqrt(spectra.sdf[a] * spectra.sdf[b]) * coh
    phase = np.exp(1j * p.alpha * s_full[None, :] * dx)

    raw = _to_lags(mag[:, fold] * phase, nyquist, take)
    scale = np.sqrt(k0[a] * k0[b])
    resid = np.abs(raw.imag).max(axis=1)
    worst = int(np.argmax(resid / scale))
    if resid[worst] > IMAG_RTOL * scale[worst]:
        raise NumericError(
            f"imaginary residual {resid[worst]:.3g} exceeds {IMAG_RTOL:g} * K(0) for altitudes "
            f"({sites[a[worst]]:g}, {sites[b[worst]]:g})"
        )
    kern = raw.real
    values[a, b] = kern
    values[b, a] = kern[:, ::-1]

    for name in names:
        if name == "alpha":
            dphi = (mag[:, fold] * phase) * (1j * s_full[None, :] * dx)
        else:
            dlog = np.zeros_like(mag)
            ds = spectra.dlog_sdf.get(name)
            if ds is not None:
                dlog += 0.5 * (ds[a] + ds[b])
            dg = spectra.dlog_gamma.get(name)
            if dg is not None:
                dlog += e_a * dg[a] + e_b * dg[b]
            dphi = (mag * dlog)[:, fold] * phase
        d = _to_lags(dphi, nyquist, take).real
        grads[name][a, b] = d
        grads[name][b, a] = d[:, ::-1]


def _pair_table(x, xp, p, grid, n_lags, free_params=()):
    if x == xp:
        table = kernel_table([x], p, grid, n_lags, free_params)
        return table, 0, 0
    table = kernel_table([x, xp], p, grid, n_lags, free_params)
    return table, 0, 1


def kernel_sequence(x: float, xp: float, p: ModelParams, grid: FrequencyGrid, n_lags: int) -> np.ndarray:
    """K(h; x, xp) for ``h = -(n_lags-1) .. n_lags-1``."""
    table, a, b = _pair_table(float(x), float(xp), p, grid, n_lags)
    return table.values[a, b].copy()


def kernel_sequence_grad(x: float, xp: float, p: ModelParams, grid: FrequencyGrid, n_lags: int,
                         free_params) -> dict:
    """Analytic derivatives of :func:`kernel_sequence`, keyed by parameter name."""
    names = check_names(free_params)
    table, a, b = _pair_table(float(x), float(xp), p, grid, n_lags, names)
    zero = np.zeros(2 * n_lags - 1)
    return {n: table.grads[n][a, b].copy() if n in table.grads else zero.copy() for n in names}


def kernel_lag0(x: float, p: ModelParams, grid: FrequencyGrid) -> float:
    """Marginal kernel variance K(0; x, x) (before lambda scaling)."""
    return float(kernel_table([x], p, grid, 1).values[0, 0, 0])


__all__ = [
    "FrequencyGrid", "KernelTable", "make_frequency_grid", "kernel_table",
    "kernel_sequence", "kernel_sequence_grad", "kernel_lag0", "lags",
]
