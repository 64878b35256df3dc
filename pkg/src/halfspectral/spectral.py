"""Frequency-domain building blocks of the covariance model.

Frequencies are in cycles per sample on ``[-1/2, 1/2)`` and altitudes in
meters. Every spectral quantity depends on frequency only through
``sin(pi f)``, which keeps the periodic extension smooth at the Nyquist
endpoints.

The Matern correlation uses the unscaled-distance convention

    M_nu(d) = 2**(1 - nu) / Gamma(nu) * d**nu * K_nu(d),   M_nu(0) = 1,

because the coherence supplies its own frequency-dependent range.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit, gammaln, kve

from .errors import DomainError
from .params import ModelParams


def _finite(name, *values):
    for v in values:
        if not np.all(np.isfinite(v)):
            raise DomainError(f"{name}: non-finite input")


def butterworth(z, xi0, xi1, xi2):
    """Butterworth-type bump ``exp(xi0) / (1 + (z**2 / xi1**2)**xi2)``.

    The power is taken of ``z**2`` so the result is real and even for
    non-integer ``xi2``.
    """
    _finite("butterworth", z, xi0, xi1, xi2)
    if np.any(np.asarray(xi1) <= 0) or np.any(np.asarray(xi2) <= 0):
        raise DomainError("butterworth: xi1 and xi2 must be positive")
    z = np.asarray(z, dtype=float)
    with np.errstate(over="ignore"):
        q = (z * z / (xi1 * xi1)) ** xi2
        out = np.exp(xi0) / (1.0 + q)
    return out if out.ndim else float(out)


def _butterworth_parts(z, a, b, c):
    """B(z; a, b, c) and its logarithmic partials in b and c.

    Returns ``(B, dlogB/db, dlogB/dc, dlogB/dz)``; the z-partial is zero at z = 0.
    """
    z = np.asarray(z, dtype=float)
    r = z * z / (b * b)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        q = r ** c
        frac = np.where(np.isinf(q), 1.0, q / (1.0 + q))
        val = np.exp(a) / (1.0 + q)
        dlog_b = 2.0 * c * frac / b
        dlog_c = np.where(r > 0, -frac * np.log(np.where(r > 0, r, 1.0)), 0.0)
        dlog_z = np.where(z != 0, -2.0 * c * frac / np.where(z != 0, z, 1.0), 0.0)
    return val, dlog_b, dlog_c, dlog_z


def logistic_weight(x, beta, tau):
    """Logistic transition weight ``1 / (1 + exp(-tau (x - beta)))``."""
    _finite("logistic_weight", x, beta, tau)
    if np.any(np.asarray(tau) <= 0):
        raise DomainError("logistic_weight: tau must be positive")
    out = expit(tau * (np.asarray(x, dtype=float) - beta))
    return out if np.ndim(out) else float(out)


def interp_param(x, p_below, p_above, beta, tau):
    """Blend a below-ABL and an above-ABL value with the logistic weight."""
    w = logistic_weight(x, beta, tau)
    return (1.0 - w) * p_below + w * p_above


def coherence_smoothness(x, p: ModelParams):
    """Coherence smoothness: ``nu_s_below`` for x <= beta, ``nu_s_above`` above."""
    return np.where(np.asarray(x) <= p.beta, p.nu_s_below, p.nu_s_above)


def marginal_sdf(f, x, p: ModelParams):
    """Marginal temporal spectral density S_x(f) at altitude ``x``."""
    s = np.sin(np.pi * np.asarray(f, dtype=float))
    xi0 = interp_param(x, p.xi00, p.xi01, p.beta, p.tau)
    rho = interp_param(x, p.rho0, p.rho1, p.beta, p.tau)
    nu = interp_param(x, p.nu0, p.nu1, p.beta, p.tau)
    low = 1.0 + butterworth(s, xi0, p.xi1, p.xi2)
    out = low * (np.exp(rho) * s * s + 1.0) ** (-nu - 0.5)
    return out if np.ndim(out) else float(out)


def matern_correlation(d, nu):
    """Matern correlation ``2**(1-nu)/Gamma(nu) d**nu K_nu(d)`` with value 1 at 0."""
    d = np.asarray(d, dtype=float)
    _finite("matern_correlation", d, nu)
    if np.any(d < 0):
        raise DomainError("matern_correlation: distance must be nonnegative")
    if nu <= 0:
        raise DomainError("matern_correlation: nu must be positive")
    out = _matern(d, nu)
    return out if out.ndim else float(out)


def _matern(d, nu):
    if nu == 0.5:
        return np.exp(-d)
    pos = d > 0
    dd = np.where(pos, d, 1.0)
    with np.errstate(under="ignore"):
        logc = (1.0 - nu) * np.log(2.0) - gammaln(nu)
        val = np.exp(logc + nu * np.log(dd) - dd) * kve(nu, dd)
    # rounding can push tiny distances a few ulps above the exact bound of 1
    return np.where(pos, np.minimum(val, 1.0), 1.0)


def _matern_log_slope(u, nu):
    """``-u * M'(u) / M(u) = u K_{1-nu}(u) / K_nu(u)`` (zero at u = 0)."""
    if nu == 0.5:
        return u
    pos = u > 0
    uu = np.where(pos, u, 1.0)
    return np.where(pos, uu * kve(1.0 - nu, uu) / kve(nu, uu), 0.0)


def coherence_range(f, x, p: ModelParams):
    """Squared coherence range gamma_x(f) in m**2."""
    s = np.sin(np.pi * np.asarray(f, dtype=float))
    z0 = interp_param(x, p.zeta00, p.zeta10, p.beta, p.tau)
    z1 = interp_param(x, p.zeta01, p.zeta11, p.beta, p.tau)
    z2 = interp_param(x, p.zeta02, p.zeta12, p.beta, p.tau)
    return butterworth(s, z0, z1, z2)


def coherence(f, x, xp, p: ModelParams):
    """Nonstationary Paciorek-Schervish-type coherence modulus C_f(x, xp)."""
    g1 = coherence_range(f, x, p)
    g2 = coherence_range(f, xp, p)
    gbar = 0.5 * (g1 + g2)
    nu = 0.5 * float(coherence_smoothness(x, p) + coherence_smoothness(xp, p))
    prefactor = (g1 * g2) ** 0.25 / np.sqrt(gbar)
    out = prefactor * _matern(abs(x - xp) / np.sqrt(gbar), nu)
    return out if np.ndim(out) else float(out)


def phase_factor(f, dx, alpha):
    """Unit-modulus phase ``exp(i alpha sin(pi f) dx)``."""
    out = np.exp(1j * alpha * np.sin(np.pi * np.asarray(f, dtype=float)) * dx)
    return out if np.ndim(out) else complex(out)


def knot_weights(t, p: ModelParams):
    """Normalized exponential weights of the scale knots, shape ``t.shape + (4,)``."""
    t = np.asarray(t, dtype=float)
    dist = np.abs(t[..., None] - np.asarray(p.knot_times)) / p.knot_decay
    # shift by the nearest knot so weights never underflow together
    raw = np.exp(-(dist - dist.min(axis=-1, keepdims=True)))
    return raw / raw.sum(axis=-1, keepdims=True)


def scale_lambda(x, t, p: ModelParams):
    """Scale field lambda(x, t): altitude decay above beta times blended knot scales."""
    x = np.asarray(x, dtype=float)
    excess = np.maximum(x - p.beta, 0.0)
    decay = butterworth(excess, 0.0, p.phi1, p.phi2)
    local = knot_weights(t, p) @ np.asarray(p.theta_knots)
    out = decay * local
    return out if np.ndim(out) else float(out)


def cross_spectrum(f, x, xp, p: ModelParams):
    """Entry of the cross-spectral matrix Phi(f) for altitudes ``x`` and ``xp``."""
    mag = np.sqrt(marginal_sdf(f, x, p) * marginal_sdf(f, xp, p)) * coherence(f, x, xp, p)
    out = mag * phase_factor(f, x - xp, p.alpha)
    return out if np.ndim(out) else complex(out)


# ---------------------------------------------------------------------------
# Vectorized per-site terms with analytic log-derivatives, used by the FFT
# engine. Arrays have shape (n_sites, n_freq).


class SiteSpectra:
    """Marginal spectra and coherence ranges for a set of sites on a frequency grid.

    Parameters
    ----------
    sites : array_like
        Altitudes (m).
    s : array_like
        Values of ``sin(pi f)`` at which to evaluate.
    p : ModelParams
    names : sequence of str
        Parameters whose log-derivatives are wanted.
    """

    def __init__(self, sites, s, p: ModelParams, names=()):
        x = np.asarray(sites, dtype=float)[:, None]
        s = np.asarray(s, dtype=float)[None, :]
        self.sites = x[:, 0]
        self.nu_s = coherence_smoothness(self.sites, p)

        w = expit(p.tau * (x - p.beta))
        dw_dbeta = -p.tau * w * (1.0 - w)
        dw_dtau = (x - p.beta) * w * (1.0 - w)

        xi0 = (1 - w) * p.xi00 + w * p.xi01
        rho = (1 - w) * p.rho0 + w * p.rho1
        nu = (1 - w) * p.nu0 + w * p.nu1
        bump, dlb_b, dlb_c, _ = _butterworth_parts(s, xi0, p.xi1, p.xi2)
        low = 1.0 + bump
        ers2 = np.exp(rho) * s * s
        log_tail = np.log1p(ers2)
        self.sdf = low * np.exp((-nu - 0.5) * log_tail)

        zs = [(1 - w) * a + w * b for a, b in
              ((p.zeta00, p.zeta10), (p.zeta01, p.zeta11), (p.zeta02, p.zeta12))]
        self.gamma, dlg_b, dlg_c, _ = _butterworth_parts(s, zs[0], zs[1], zs[2])

        # log-derivatives of S wrt the site-level quantities xi0(x), rho(x), nu(x)
        ls_xi0 = bump / low
        ls_rho = -(nu + 0.5) * ers2 / (1.0 + ers2)
        ls_nu = -log_tail
        # log-derivatives of gamma wrt zeta_j(x)
        lg = (np.ones_like(self.gamma), dlg_b, dlg_c)

        self.dlog_sdf = {}
        self.dlog_gamma = {}
        for name in names:
            if name == "xi00":
                self.dlog_sdf[name] = (1 - w) * ls_xi0
            elif name == "xi01":
                self.dlog_sdf[name] = w * ls_xi0
            elif name == "xi1":
                self.dlog_sdf[name] = bump * dlb_b / low
            elif name == "xi2":
                self.dlog_sdf[name] = bump * dlb_c / low
            elif name in ("rho0", "rho1"):
                self.dlog_sdf[name] = (1 - w if name == "rho0" else w) * ls_rho
            elif name in ("nu0", "nu1"):
                self.dlog_sdf[name] = (1 - w if name == "nu0" else w) * ls_nu
            elif name.startswith("zeta"):
                regime, j = int(name[4]), int(name[5])
                self.dlog_gamma[name] = (w if regime else 1 - w) * lg[j]
            elif name in ("beta", "tau"):
                dw = dw_dbeta if name == "beta" else dw_dtau
                self.dlog_sdf[name] = dw * (
                    (p.xi01 - p.xi00) * ls_xi0 + (p.rho1 - p.rho0) * ls_rho
                    + (p.nu1 - p.nu0) * ls_nu
                )
                self.dlog_gamma[name] = dw * sum(
                    (b - a) * g for (a, b), g in zip(
                        ((p.zeta00, p.zeta10), (p.zeta01, p.zeta11), (p.zeta02, p.zeta12)), lg
                    )
                )


def pair_coherence(gamma_a, gamma_b, distance, nu, want_slopes=False):
    """Coherence of site pairs from their coherence ranges.

    With ``want_slopes`` also returns ``(e_a, e_b)``, the derivatives of
    ``log C`` with respect to ``log gamma_a`` and ``log gamma_b``.
    """
    gbar = 0.5 * (gamma_a + gamma_b)
    root = np.sqrt(gbar)
    u = distance / root
    with np.errstate(under="ignore"):
        c = (gamma_a * gamma_b) ** 0.25 / root * _matern(u, nu)
    if not want_slopes:
        return c
    slope = _matern_log_slope(u, nu)
    ra = gamma_a / gbar
    rb = gamma_b / gbar
    e_a = 0.25 * (1.0 - ra + slope * ra)
    e_b = 0.25 * (1.0 - rb + slope * rb)
    return c, e_a, e_b
