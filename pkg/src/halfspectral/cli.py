"""Command-line interface: ``halfspectral {fit,simulate,diagnose,kernel-dump}``.

Exit codes: 0 success, 2 input/configuration error, 3 fit did not
converge, 4 numerical failure (e.g. indefinite covariance).
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import sys
from pathlib import Path

import numpy as np

from .covariance import ObservationLayout, grid_for
from .diagnostics import gapped_multitaper, model_curves, periodogram, segment_average, split_at_gaps
from .errors import ConfigError, HalfSpectralError, NumericError
from .fft_kernel import kernel_table, make_frequency_grid
from .io import (
    CONFIG_HELP,
    Config,
    DataFrame,
    InputError,
    header_comment,
    load_config,
    load_params,
    read_data_csv,
    write_data_csv,
    write_json,
    write_table_csv,
)
from .optimizer import FitOptions, TrustRegionOptions, fit, freeze
from .params import ModelParams, evenly_spaced_knots
from .simulation import sample
from .spectral import scale_lambda

log = logging.getLogger("halfspectral")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NOT_CONVERGED = 3
EXIT_NUMERIC = 4


def _with_window(params: dict | None, base: ModelParams, t0: int, t1: int) -> ModelParams:
    params = dict(params or {})
    if "knot_times" not in params and t1 > t0:
        base = ModelParams.from_dict({"knot_times": evenly_spaced_knots(t0, t1)}, base)
    return ModelParams.from_dict(params, base)


def heuristic_init(y, layout: ObservationLayout, pad_factor: int = 7) -> ModelParams:
    """Starting values: beta at mid-domain, thetas matched to local data SD.

    Everything not listed keeps its :class:`ModelParams` default. Each
    knot's theta is the SD of data within a sixth of the window of that knot
    (after removing the nugget defaults), divided by the model's marginal
    kernel SD below beta.
    """
    y = np.asarray(y, dtype=float)
    t0, t1 = layout.time_span
    alts = layout.site_altitudes
    base = ModelParams(beta=float(0.5 * (alts.min() + alts.max())))
    if t1 > t0:
        base = base.with_window(t0, t1)
    sd = float(np.std(y))
    base = base.replace(eta_st=0.1 * sd + 1e-6, eta_t=0.05 * sd + 1e-6)
    grid = make_frequency_grid(2, pad_factor)
    k0 = kernel_table([alts.min()], base, grid, 1).values[0, 0, 0]
    reach = max((t1 - t0) / 6.0, 1.0)
    thetas = []
    for tk in base.knot_times:
        near = np.abs(layout.time_index - tk) <= reach
        var = np.var(y[near]) if near.sum() > 1 else sd ** 2
        var = max(var - base.eta_st ** 2 - base.eta_t ** 2, 0.01 * sd ** 2, 1e-12)
        thetas.append(float(np.sqrt(var / k0)))
    return base.replace(theta_knots=tuple(thetas))


def _fit_options(cfg: Config) -> FitOptions:
    try:
        tr = TrustRegionOptions(tolerance=cfg.tolerance, **cfg.trust_region)
    except TypeError as exc:
        raise InputError(f"trust_region: {exc}") from None
    base = FitOptions(n_probes=cfg.n_probes, seed=cfg.seed, pad_factor=cfg.pad_factor,
                      trust_region=tr)
    return freeze(cfg.freeze, base)


def cmd_fit(args, cfg: Config) -> int:
    frame = read_data_csv(args.data)
    layout, y = frame.to_layout(cfg.sites)
    t0, t1 = layout.time_span
    if cfg.params is None:
        init = heuristic_init(y, layout, cfg.pad_factor)
    else:
        init = _with_window(cfg.params, heuristic_init(y, layout, cfg.pad_factor), t0, t1)
    opts = _fit_options(cfg)
    log.info("fitting %d observations at %d altitudes, %d free parameters",
             len(y), len(layout.site_altitudes), len(opts.free_params))
    result = fit(y, layout, init, opts)
    out = Path(args.out_dir)
    write_json(out / "fit_result.json", result.to_dict(), "fit")
    (out / "fit_trace.csv").write_text(
        header_comment("fit-trace", seed=result.seed) + result.trace_csv()
    )
    print(f"loglik={result.loglik:.10g} converged={result.converged} "
          f"iterations={result.n_iterations} ({result.message})")
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def cmd_simulate(args, cfg: Config) -> int:
    if args.data:
        frame = read_data_csv(args.data)
        layout, _ = frame.to_layout(cfg.sites)
    else:
        if not cfg.sites:
            raise InputError("simulate needs --data or a 'sites' list in the config")
        layout = ObservationLayout.full(sorted(float(s) for s in cfg.sites), np.arange(cfg.n_time))
    t0, t1 = layout.time_span
    params = _load_model_params(args, cfg, t0, t1)
    reps = args.reps if args.reps is not None else cfg.reps
    draws = sample(params, layout, cfg.seed, reps, pad_factor=cfg.pad_factor)
    out = Path(args.out_dir)
    for r, draw in enumerate(draws):
        frame = DataFrame.from_layout(layout, draw)
        write_data_csv(out / f"simulation_{r:03d}.csv", frame, "simulation",
                       seed=cfg.seed + r, rep=r)
    print(f"wrote {reps} simulation(s) of {len(layout)} values to {out}")
    return EXIT_OK


def _load_model_params(args, cfg: Config, t0: int, t1: int) -> ModelParams:
    params = dict(cfg.params or {})
    if getattr(args, "params", None):
        params.update(load_params(args.params))
    if not params and cfg.params is None:
        log.warning("no parameters given; using built-in defaults")
    return _with_window(params, ModelParams(), t0, t1)


def cmd_diagnose(args, cfg: Config) -> int:
    frame = read_data_csv(args.data)
    if cfg.sites:
        frame = frame.select(cfg.sites)
    t0, t1 = int(frame.times[0]), int(frame.times[-1])
    params = _load_model_params(args, cfg, t0, t1)
    out = Path(args.out_dir)
    times = frame.times
    alts = frame.altitudes
    nfft = _common_nfft(times, frame.values, cfg.n_tapers)
    freqs = np.arange(nfft // 2 + 1) / nfft

    pg_cols = {"frequency": freqs}
    mt_cols = {"frequency": freqs}
    for j, x in enumerate(alts):
        col = frame.values[:, j]
        segs = split_at_gaps(times, col)
        if not segs:
            continue
        pgs = [periodogram(col[s], nfft)[1] for s in segs]
        pg_cols[f"periodogram_{x:g}"] = segment_average(pgs, [s.stop - s.start for s in segs])
        try:
            mt_cols[f"multitaper_{x:g}"] = gapped_multitaper(times, col, None, cfg.n_tapers, nfft)[1]
        except HalfSpectralError:
            pass
    curves = model_curves(params, alts, [], freqs)
    for x in alts:
        mt_cols[f"model_{x:g}"] = curves["sdf"][float(x)]
    write_table_csv(out / "periodogram.csv", pg_cols, "periodogram")
    write_table_csv(out / "spectra.csv", mt_cols, "multitaper-spectra", n_tapers=cfg.n_tapers)

    for k in cfg.offsets:
        cols = {"frequency": freqs}
        pairs = [(alts[i], alts[i + k]) for i in range(len(alts) - k)]
        model = model_curves(params, [], pairs, freqs)["coherence"]
        for x, xp in pairs:
            a = frame.values[:, list(alts).index(x)]
            b = frame.values[:, list(alts).index(xp)]
            tag = f"{x:g}_{xp:g}"
            try:
                emp = gapped_multitaper(times, a, b, cfg.n_tapers, nfft)[1]
                cols[f"re_{tag}"] = emp.real
                cols[f"im_{tag}"] = emp.imag
            except HalfSpectralError:
                pass
            m = model[(float(x), float(xp))]
            cols[f"model_re_{tag}"] = m.real
            cols[f"model_im_{tag}"] = m.imag
        write_table_csv(out / f"coherence_offset{k}.csv", cols, "multitaper-coherence",
                        offset=k, n_tapers=cfg.n_tapers)

    lam_cols = {"time": times}
    for x in alts:
        lam_cols[f"lambda_{x:g}"] = scale_lambda(x, times, params)
    write_table_csv(out / "scale.csv", lam_cols, "scale-field")
    print(f"wrote diagnostics for {len(alts)} altitudes to {out}")
    return EXIT_OK


def _common_nfft(times, values, n_tapers):
    longest = 0
    for j in range(values.shape[1]):
        for s in split_at_gaps(times, values[:, j]):
            longest = max(longest, s.stop - s.start)
    if longest <= n_tapers:
        raise InputError("data has no gap-free run longer than the number of tapers")
    return longest


def cmd_kernel_dump(args, cfg: Config) -> int:
    n_lags = args.n_lags if args.n_lags is not None else cfg.n_lags
    params = _load_model_params(args, cfg, 0, max(n_lags - 1, 1))
    if cfg.pairs:
        pairs = [(float(a), float(b)) for a, b in cfg.pairs]
    elif cfg.sites:
        s = sorted(float(v) for v in cfg.sites)
        pairs = [(a, b) for i, a in enumerate(s) for b in s[i:]]
    else:
        raise InputError("kernel-dump needs 'pairs' or 'sites' in the config")
    sites = sorted({v for pair in pairs for v in pair})
    grid = make_frequency_grid(max(n_lags, 2), cfg.pad_factor)
    table = kernel_table(sites, params, grid, n_lags, cfg.gradients)
    lag = np.arange(-(n_lags - 1), n_lags)
    rows = {"pair_x": [], "pair_xp": [], "lag": [], "value": []}
    for name in cfg.gradients:
        rows[f"d_{name}"] = []
    for x, xp in pairs:
        a, b = sites.index(x), sites.index(xp)
        rows["pair_x"].extend([x] * len(lag))
        rows["pair_xp"].extend([xp] * len(lag))
        rows["lag"].extend(lag.tolist())
        rows["value"].extend(table.values[a, b].tolist())
        for name in cfg.gradients:
            g = table.grads.get(name)
            rows[f"d_{name}"].extend((g[a, b] if g is not None else np.zeros(len(lag))).tolist())
    write_table_csv(Path(args.out_dir) / "kernel.csv", rows, "kernel-table",
                    n_fft=grid.n_fft, pad_factor=grid.pad_factor)
    print(f"wrote {len(pairs)} kernel sequence(s) of {len(lag)} lags")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="halfspectral",
        description="Nonstationary half-spectral space-time covariance models.",
        epilog=CONFIG_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--out-dir", default=".", help="output directory [default: .]")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--threads", type=int, help="limit BLAS/FFT threads")
    common.add_argument("-v", "--verbose", action="count", default=0)

    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("fit", parents=[common], help="maximum likelihood fit",
                       epilog=CONFIG_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--data", required=True, help="time-height CSV")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", parents=[common], help="draw fields from the model",
                       epilog=CONFIG_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--data", help="copy the layout (times, altitudes, gaps) of this CSV")
    p.add_argument("--params", help="fit_result.json or parameter JSON")
    p.add_argument("--reps", type=int, help="override the config rep count")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("diagnose", parents=[common], help="spectral diagnostics",
                       epilog=CONFIG_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--data", required=True, help="time-height CSV")
    p.add_argument("--params", help="fit_result.json or parameter JSON")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("kernel-dump", parents=[common], help="tabulate kernel sequences",
                       epilog=CONFIG_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--params", help="fit_result.json or parameter JSON")
    p.add_argument("--n-lags", type=int, help="override the config n_lags")
    p.set_defaults(func=cmd_kernel_dump)
    return parser


def _thread_limit(n):
    if not n:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        Path(args.out_dir).mkdir(parents=True, exist_ok=True)
        with _thread_limit(args.threads):
            return args.func(args, cfg)
    except (InputError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericError, np.linalg.LinAlgError, HalfSpectralError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
