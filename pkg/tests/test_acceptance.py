"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line."""

import time

import numpy as np
import pytest

from halfspectral import (
    FitOptions, ModelParams, ObservationLayout, assemble, assemble_grad, fit, grid_for, loglik, sample,
)
from halfspectral.covariance import table_for
from halfspectral.diagnostics import multitaper_coherence, periodogram, sine_tapers
from halfspectral.fft_kernel import kernel_sequence, kernel_table, make_frequency_grid
from halfspectral.likelihood import (
    ProbeSet, cholesky, evaluate, exact_fisher, exact_gradient, stochastic_derivatives,
)
from halfspectral.params import KERNEL_PARAMS, PARAM_NAMES
from halfspectral.simulation import covariance_factor

from conftest import JUNE02, random_params, random_sites
from test_fft_kernel import riemann_kernel


@pytest.fixture
def report(capsys):
    def _report(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n[acceptance] criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
        assert ok, f"criterion {number} ({title}) failed: {detail}"
    return _report


def test_criterion_01_fft_length_invariance(report):
    start = time.perf_counter()
    p = JUNE02.with_window(0, 255)
    sites = np.array([250.0, 330.0, 410.0, 490.0, 570.0, 650.0])
    lay = ObservationLayout.full(sites, np.arange(256))
    y = sample(p, lay, seed=1, pad_factor=21)[0]
    values = {pad: loglik(p, y, lay, grid_for(lay, pad)) for pad in (5, 7, 11, 21)}
    worst = max(abs(a - b) / abs(b) for a in values.values() for b in values.values())
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-6 and elapsed < 30.0
    report(1, "FFT-length invariance", ok,
           f"max pairwise relative loglik difference {worst:.2e} (<= 1e-6) over pads 5/7/11/21, "
           f"{elapsed:.1f} s (< 30 s)")


def test_criterion_02_kernel_assembly_performance(report):
    p = JUNE02.with_window(0, 999)
    sites = 100.0 + 30.0 * np.arange(30)
    grid = make_frequency_grid(1000, 7)
    kernel_table(sites[:2], p, grid, 1000)  # warm-up (imports, FFT plans)
    start = time.perf_counter()
    table = kernel_table(sites, p, grid, 1000)
    elapsed = time.perf_counter() - start
    ok = elapsed < 5.0 and table.values.shape == (30, 30, 1999)
    report(2, "kernel-assembly performance", ok, f"30 sites x 1000 lags, pad 7: {elapsed:.2f} s (< 5 s)")


def test_criterion_03_quadrature_oracle(report):
    rng = np.random.default_rng(3)
    grid = make_frequency_grid(64, 7)
    worst = 0.0
    for _ in range(50):
        p = random_params(rng)
        x, xp = random_sites(rng, 2)
        for a, b in ((x, xp), (xp, x), (x, x)):
            got = kernel_sequence(a, b, p, grid, 64)
            ref = riemann_kernel(a, b, p, grid.n_fft, 64)
            worst = max(worst, np.abs(got - ref).max() / np.abs(ref).max())
    report(3, "quadrature oracle equivalence", worst <= 1e-12,
           f"max relative deviation from direct Riemann sum {worst:.2e} (<= 1e-12), 50 draws, 64 lags")


def test_criterion_04_positive_definiteness(report):
    rng = np.random.default_rng(4)
    failures, sizes = [], []
    for k in range(200):
        n_s = int(rng.integers(1, 9))
        n_t = int(rng.integers(2, 1000 // n_s + 1))
        p = random_params(rng, window=(0, n_t - 1), eta_st_min=1e-3)
        sites = random_sites(rng, n_s)
        observed = rng.random((n_t, n_s)) > rng.uniform(0, 0.3)
        observed[0, 0] = True
        lay = ObservationLayout.from_mask(sites, np.arange(n_t), observed)
        sizes.append(len(lay))
        try:
            cholesky(assemble(lay, p, table_for(lay, p, grid_for(lay))))
        except np.linalg.LinAlgError as exc:
            failures.append((k, str(exc)))
    report(4, "positive-definiteness", not failures,
           f"{200 - len(failures)}/200 Cholesky factorizations succeeded "
           f"(eta_st >= 1e-3, n in [{min(sizes)}, {max(sizes)}])")


def _fd_ratio(analytic, fd, values):
    # relative to the derivative; where the derivative is at the rounding level
    # of the quantity itself, relative to 1e-6 of that quantity
    return np.abs(analytic - fd).max() / max(np.abs(fd).max(), 1e-6 * np.abs(values).max())


def test_criterion_05_gradient_correctness(report):
    rng = np.random.default_rng(5)
    worst_kernel = worst_cov = worst_ll = 0.0
    kernel_names = sorted(KERNEL_PARAMS)
    for _ in range(10):
        p = random_params(rng, window=(0, 7)).replace(alpha=rng.uniform(0.002, 0.01))
        sites = np.sort(np.r_[p.beta - rng.uniform(5, 60), p.beta + rng.uniform(5, 60),
                              p.beta + rng.uniform(100, 300)])
        lay = ObservationLayout.full(sites, np.arange(8))
        grid = grid_for(lay)
        table = table_for(lay, p, grid, PARAM_NAMES)
        sigma = assemble(lay, p, table)
        grads = assemble_grad(lay, p, table, PARAM_NAMES)
        for name in PARAM_NAMES:
            h = 1e-5 * (1 + abs(p[name]))
            up, dn = p.replace(**{name: p[name] + h}), p.replace(**{name: p[name] - h})
            t_up, t_dn = table_for(lay, up, grid), table_for(lay, dn, grid)
            if name in kernel_names:
                fd_k = (t_up.values - t_dn.values) / (2 * h)
                worst_kernel = max(worst_kernel, _fd_ratio(table.grads[name], fd_k, table.values))
            fd_s = (assemble(lay, up, t_up) - assemble(lay, dn, t_dn)) / (2 * h)
            worst_cov = max(worst_cov, _fd_ratio(grads[name], fd_s, sigma))
        y = sample(p, lay, seed=int(rng.integers(1 << 30)))[0]
        g = exact_gradient(evaluate(p, y, lay, grid, PARAM_NAMES))
        for k, name in enumerate(PARAM_NAMES):
            h = 1e-3 * max(abs(p[name]), 1e-2)
            f = lambda d: loglik(p.replace(**{name: p[name] + d}), y, lay, grid)
            fd = (8 * (f(h) - f(-h)) - (f(2 * h) - f(-2 * h))) / (12 * h)
            worst_ll = max(worst_ll, abs(g[k] - fd) / max(abs(fd), 1e-3))
    ok = worst_kernel <= 1e-4 and worst_cov <= 1e-4 and worst_ll <= 1e-5
    report(5, "gradient correctness", ok,
           f"10 points x 25 parameters: kernel {worst_kernel:.1e}, covariance {worst_cov:.1e} (<= 1e-4), "
           f"loglik {worst_ll:.1e} (<= 1e-5)")


def test_criterion_06_stochastic_calibration(report):
    rng = np.random.default_rng(6)
    # (a) exhaustive enumeration reproduces the dense traces
    p = random_params(rng, window=(0, 1))
    lay = ObservationLayout.full(random_sites(rng, 2), np.arange(2))
    y = sample(p, lay, seed=1)[0]
    state = evaluate(p, y, lay, grid_for(lay), PARAM_NAMES)
    g_s, f_s = stochastic_derivatives(state, ProbeSet.exhaustive(4))
    g_e, f_e = exact_gradient(state), exact_fisher(state)
    exact_err = max(np.abs(g_s - g_e).max() / np.abs(g_e).max(), np.abs(f_s - f_e).max() / np.abs(f_e).max())

    # (b) Fisher error decay at n = 200, 25 parameters; (c) PSD of every draw
    p = random_params(rng, window=(0, 49))
    lay = ObservationLayout.full(random_sites(rng, 4), np.arange(50))
    state = evaluate(p, np.zeros(200), lay, grid_for(lay), PARAM_NAMES)
    exact = exact_fisher(state)
    rms, min_eig = {}, np.inf
    for m in (8, 32, 128):
        errs = []
        for seed in range(20):
            est = stochastic_derivatives(state, ProbeSet.rademacher(200, m, seed=1000 * m + seed))[1]
            errs.append(np.linalg.norm(est - exact))
            min_eig = min(min_eig, np.linalg.eigvalsh(est).min() / np.trace(est))
        rms[m] = np.sqrt(np.mean(np.square(errs)))
    slope = np.polyfit(np.log(list(rms)), np.log(list(rms.values())), 1)[0]
    ok = exact_err <= 1e-12 and -0.65 <= slope <= -0.35 and min_eig >= -1e-12
    report(6, "stochastic estimator calibration", ok,
           f"exhaustive-probe deviation {exact_err:.1e} (<= 1e-12); Fisher RMS Frobenius error "
           + ", ".join(f"m={m}: {e:.3g}" for m, e in rms.items())
           + f", log-log slope {slope:.2f} (expected -0.5); min eig/trace {min_eig:.1e} (PSD)")


@pytest.mark.slow
def test_criterion_07_parameter_recovery(report):
    start = time.perf_counter()
    free = ("theta1", "rho0", "nu0", "rho1", "zeta00", "zeta10", "xi00", "eta_st")
    truth = ModelParams().with_window(0, 127)
    lay = ObservationLayout.full(np.array([300.0, 380.0, 460.0, 540.0, 620.0]), np.arange(128))
    chol = covariance_factor(truth, lay)
    within, converged = [], 0
    for rep in range(20):
        y = sample(truth, lay, seed=7000 + rep, chol=chol)[0]
        res = fit(y, lay, truth, FitOptions(free_params=free, seed=rep))
        converged += res.converged
        z = (res.estimates.vector(free) - truth.vector(free)) / res.std_errors
        within.extend(np.abs(z) <= 3)
    rate = float(np.mean(within))
    elapsed = time.perf_counter() - start
    ok = rate >= 0.9 and elapsed < 1800
    report(7, "parameter recovery", ok,
           f"{rate:.1%} of {len(within)} estimates within 3 SE of truth (>= 90%), "
           f"{converged}/20 fits converged, {elapsed:.0f} s (< 30 min)")


def test_criterion_08_simulation_covariance(report):
    p = JUNE02.with_window(0, 127)
    lay = ObservationLayout.full(np.array([300.0, 420.0, 500.0, 650.0]), np.arange(128))
    sigma = assemble(lay, p, table_for(lay, p, grid_for(lay)))
    reps = 2000
    x = sample(p, lay, seed=8, n_reps=reps)
    emp = x.T @ x / reps
    d = np.diag(sigma)
    se = np.sqrt((np.outer(d, d) + sigma ** 2) / reps)
    rate = float(np.mean(np.abs(emp - sigma) <= 5 * se))
    report(8, "simulation correctness", rate >= 0.99,
           f"{rate:.4%} of {sigma.size} covariance entries within 5 MC SE (>= 99%), 2000 reps")


def test_criterion_09_diagnostics_identities(report):
    rng = np.random.default_rng(9)
    taper_err = max(np.abs(v @ v.T - np.eye(len(v))).max()
                    for v in (sine_tapers(n, 5) for n in (8, 64, 127, 1000)))
    max_mod, parseval, self_err = 0.0, 0.0, 0.0
    for _ in range(200):
        n = int(rng.integers(8, 300))
        a = rng.standard_normal(n) * rng.uniform(0.1, 10)
        b = 0.7 * a + rng.standard_normal(n) * rng.uniform(0, 2)
        c = multitaper_coherence(a, b)[1]
        max_mod = max(max_mod, np.abs(c).max())
        s = periodogram(a, onesided=False)[1]
        parseval = max(parseval, abs(s.mean() - np.mean(a ** 2)) / np.mean(a ** 2))
        self_err = max(self_err, np.abs(multitaper_coherence(a, a)[1] - 1).max())
    ok = taper_err <= 1e-12 and max_mod <= 1 + 1e-12 and parseval <= 1e-10 and self_err <= 1e-12
    report(9, "diagnostics identities", ok,
           f"taper orthonormality {taper_err:.1e} (<= 1e-12), max |coherence| {max_mod:.15f} (<= 1), "
           f"Parseval {parseval:.1e} (<= 1e-10), self-coherence {self_err:.1e}")


def test_criterion_10_separability(report):
    # altitude-independent S, frequency-independent coherence (xi/zeta shapes
    # so flat that the bracket is 1 to double precision), no phase
    p = ModelParams(xi00=2.0, xi01=2.0, rho0=3.0, rho1=3.0, nu0=1.2, nu1=1.2,
                    zeta01=1e8, zeta11=1e8, zeta02=2.0, zeta12=2.0, alpha=0.0)
    sites = np.array([150.0, 300.0, 440.0, 470.0, 700.0, 900.0])
    t = kernel_table(sites, p, make_frequency_grid(64, 7), 64)
    r = t.values[0, 0]
    ratio = t.values / r[None, None, :]
    spread = float(np.abs(ratio - ratio[:, :, 63:64]).max())
    report(10, "separability degeneration", spread <= 1e-10,
           f"max variation of K(h; x, x')/r(h) over lags {spread:.1e} (<= 1e-10)")
