"""Nonparametric spectral estimators and model-implied spectral curves.

Cross-spectra use the convention ``S_ab(f) = E[A(f) conj(B(f))] / n`` with
``A = fft(a)``, which matches the model's ``Phi_{x x'}(f)`` when ``a`` is
observed at altitude ``x`` and ``b`` at ``x'``.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, DomainError
from .params import ModelParams
from .spectral import coherence, marginal_sdf, phase_factor


def _series(a):
    a = np.asarray(a, dtype=float)
    if a.ndim != 1 or len(a) < 2:
        raise DomainError("series must be 1-d with at least two values")
    if not np.all(np.isfinite(a)):
        raise DomainError("series contains missing values; split it at gaps first")
    return a


def periodogram(series, nfft: int | None = None, onesided: bool = True):
    """Periodogram ``|DFT|**2 / n``.

    Returns ``(freqs, power)``. With ``onesided`` only the nonnegative
    Fourier frequencies are returned; otherwise all ``nfft`` of them in FFT
    order, whose mean equals the mean square of the series.
    """
    a = _series(series)
    n = len(a)
    nfft = nfft or n
    power = np.abs(np.fft.fft(a, nfft)) ** 2 / n
    freqs = np.fft.fftfreq(nfft)
    if onesided:
        keep = nfft // 2 + 1
        return np.abs(freqs[:keep]), power[:keep]
    return freqs, power


def sine_tapers(n: int, n_tapers: int = 5) -> np.ndarray:
    """Orthonormal sine tapers, shape ``(n_tapers, n)``."""
    if not 1 <= n_tapers < n:
        raise ConfigError(f"need 1 <= n_tapers < n, got n_tapers={n_tapers}, n={n}")
    k = np.arange(1, n_tapers + 1)[:, None]
    t = np.arange(n)[None, :]
    return np.sqrt(2.0 / (n + 1)) * np.sin(np.pi * k * (t + 1) / (n + 1))


def eigenspectra(a, b=None, n_tapers: int = 5, nfft: int | None = None):
    """Per-taper (cross-)spectra, shape ``(n_tapers, nfft // 2 + 1)``."""
    a = _series(a)
    b = a if b is None else _series(b)
    if len(a) != len(b):
        raise DomainError("series must have equal length")
    n = len(a)
    nfft = nfft or n
    v = sine_tapers(n, n_tapers)
    fa = np.fft.fft(v * a, nfft, axis=1)[:, :nfft // 2 + 1]
    fb = fa if b is a else np.fft.fft(v * b, nfft, axis=1)[:, :nfft // 2 + 1]
    return fa * np.conj(fb)


def multitaper_spectrum(series, n_tapers: int = 5, nfft: int | None = None):
    """Sine-multitaper spectrum: mean of the tapered eigenspectra. Returns ``(freqs, S)``."""
    eig = eigenspectra(series, n_tapers=n_tapers, nfft=nfft).real
    nfft = nfft or len(series)
    return np.arange(nfft // 2 + 1) / nfft, eig.mean(axis=0)


def multitaper_coherence(a, b, n_tapers: int = 5, nfft: int | None = None):
    """Complex sine-multitaper coherence ``S_ab / sqrt(S_aa S_bb)``.

    Frequencies where either auto-spectrum vanishes get NaN.
    Returns ``(freqs, coherence)``.
    """
    nfft = nfft or len(np.asarray(a))
    s_ab = eigenspectra(a, b, n_tapers, nfft).mean(axis=0)
    s_aa = eigenspectra(a, None, n_tapers, nfft).real.mean(axis=0)
    s_bb = eigenspectra(b, None, n_tapers, nfft).real.mean(axis=0)
    denom = np.sqrt(s_aa * s_bb)
    with np.errstate(invalid="ignore", divide="ignore"):
        coh = np.where(denom > 0, s_ab / np.where(denom > 0, denom, 1.0), np.nan + 0j)
    return np.arange(nfft // 2 + 1) / nfft, coh


def split_at_gaps(times, values, min_length: int = 2):
    """Slices of the runs of consecutive time indices with finite values."""
    times = np.asarray(times)
    ok = np.isfinite(np.asarray(values, dtype=float))
    runs = []
    start = None
    for i in range(len(ok)):
        if not ok[i]:
            if start is not None:
                runs.append(slice(start, i))
            start = None
        elif start is None:
            start = i
        elif times[i] != times[i - 1] + 1:
            runs.append(slice(start, i))
            start = i
    if start is not None:
        runs.append(slice(start, len(ok)))
    return [r for r in runs if r.stop - r.start >= min_length]


def segment_average(estimates, lengths):
    """Length-weighted average of per-segment estimates on a common grid."""
    w = np.asarray(lengths, dtype=float)
    return np.tensordot(w / w.sum(), np.asarray(estimates), axes=1)


def gapped_multitaper(times, a, b=None, n_tapers: int = 5, nfft: int | None = None):
    """Multitaper spectrum (or complex coherence if ``b`` is given) of gappy series.

    Each gap-free run is tapered separately, zero-padded to a common
    ``nfft`` (the longest run by default), and the run estimates are
    averaged with weights proportional to run length. For coherence the
    averaging is applied to the auto- and cross-spectra before normalizing.
    """
    a = np.asarray(a, dtype=float)
    mask = np.isfinite(a) if b is None else np.isfinite(a) & np.isfinite(np.asarray(b, float))
    both = np.where(mask, a, np.nan)
    segs = [s for s in split_at_gaps(times, both) if s.stop - s.start > n_tapers]
    if not segs:
        raise DomainError("no gap-free segment longer than the number of tapers")
    nfft = nfft or max(s.stop - s.start for s in segs)
    lengths = [s.stop - s.start for s in segs]
    freqs = np.arange(nfft // 2 + 1) / nfft
    if b is None:
        specs = [eigenspectra(a[s], None, n_tapers, nfft).real.mean(axis=0) for s in segs]
        return freqs, segment_average(specs, lengths)
    b = np.asarray(b, dtype=float)
    s_ab = segment_average([eigenspectra(a[s], b[s], n_tapers, nfft).mean(axis=0) for s in segs],
                           lengths)
    s_aa = segment_average([eigenspectra(a[s], None, n_tapers, nfft).real.mean(axis=0)
                            for s in segs], lengths)
    s_bb = segment_average([eigenspectra(b[s], None, n_tapers, nfft).real.mean(axis=0)
                            for s in segs], lengths)
    denom = np.sqrt(s_aa * s_bb)
    with np.errstate(invalid="ignore", divide="ignore"):
        coh = np.where(denom > 0, s_ab / np.where(denom > 0, denom, 1.0), np.nan + 0j)
    return freqs, coh


def model_curves(p: ModelParams, sites, pairs, freqs):
    """Model-implied marginal spectra and complex coherences.

    Parameters
    ----------
    p : ModelParams
    sites : sequence of float
        Altitudes for which to tabulate ``S_x(f) + eta_st**2 + eta_t**2``.
        The scale field lambda is not applied.
    pairs : sequence of (float, float)
        Altitude pairs for which to tabulate ``C_f(x, x') exp(i g(f) (x - x'))``.
    freqs : array_like
        Frequencies in cycles per sample.

    Returns
    -------
    dict
        ``{"freq": ..., "sdf": {x: array}, "coherence": {(x, x'): complex array}}``
    """
    freqs = np.asarray(freqs, dtype=float)
    floor = p.eta_st ** 2 + p.eta_t ** 2
    sdf = {float(x): marginal_sdf(freqs, x, p) + floor for x in sites}
    coh = {}
    for x, xp in pairs:
        coh[(float(x), float(xp))] = (coherence(freqs, x, xp, p)
                                      * phase_factor(freqs, x - xp, p.alpha))
    return {"freq": freqs, "sdf": sdf, "coherence": coh}
