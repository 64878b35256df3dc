"""Reading and writing data, configuration and result files."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .covariance import ObservationLayout
from .errors import HalfSpectralError
from .params import ModelParams, check_names


class InputError(HalfSpectralError, ValueError):
    """A data or configuration file is missing or malformed."""


@dataclass
class DataFrame:
    """Time-height table: ``values[i, j]`` is the velocity at ``times[i]``, ``altitudes[j]``."""

    times: np.ndarray
    altitudes: np.ndarray
    values: np.ndarray

    def to_layout(self, sites=None):
        """Observation layout and data vector, dropping missing cells."""
        frame = self.select(sites) if sites is not None else self
        observed = np.isfinite(frame.values)
        layout = ObservationLayout.from_mask(frame.altitudes, frame.times, observed)
        y = frame.values.T[observed.T]
        return layout, y

    def select(self, sites) -> "DataFrame":
        cols = []
        for s in sites:
            hit = np.flatnonzero(np.isclose(self.altitudes, float(s)))
            if not len(hit):
                raise InputError(f"altitude {s} not present in data columns {self.altitudes.tolist()}")
            cols.append(hit[0])
        cols = sorted(set(cols))
        return DataFrame(self.times, self.altitudes[cols], self.values[:, cols])

    @classmethod
    def from_layout(cls, layout: ObservationLayout, y) -> "DataFrame":
        t0, t1 = layout.time_span
        times = np.arange(t0, t1 + 1)
        values = np.full((len(times), len(layout.site_altitudes)), np.nan)
        values[layout.time_index - t0, layout.site_index] = y
        keep = np.isfinite(values).any(axis=1)
        return cls(times[keep], layout.site_altitudes.copy(), values[keep])


def _open(path):
    path = Path(path)
    if not path.is_file():
        raise InputError(f"no such file: {path}")
    return path.open(newline="")


def _fmt_alt(x: float) -> str:
    return f"{x:g}"


def read_data_csv(path) -> DataFrame:
    """Read a ``time,<alt_1>,<alt_2>,...`` CSV; empty cells are missing, ``#`` lines are comments."""
    with _open(path) as fh:
        rows = [(i + 1, row) for i, row in enumerate(csv.reader(fh))
                if row and not row[0].lstrip().startswith("#")]
    if not rows:
        raise InputError(f"{path}: no header row")
    line, header = rows[0]
    if header[0].strip().lower() != "time":
        raise InputError(f"{path}:{line}:1: first column must be 'time', got {header[0]!r}")
    altitudes = []
    for col, cell in enumerate(header[1:], start=2):
        try:
            altitudes.append(float(cell))
        except ValueError:
            raise InputError(f"{path}:{line}:{col}: altitude header {cell!r} is not a number") from None
    if not altitudes:
        raise InputError(f"{path}:{line}: no altitude columns")
    times, values = [], []
    for line, row in rows[1:]:
        if len(row) != len(header):
            raise InputError(f"{path}:{line}: expected {len(header)} fields, got {len(row)}")
        try:
            t = float(row[0])
        except ValueError:
            raise InputError(f"{path}:{line}:1: time {row[0]!r} is not a number") from None
        if t != int(t):
            raise InputError(f"{path}:{line}:1: time index {row[0]!r} is not an integer")
        vals = []
        for col, cell in enumerate(row[1:], start=2):
            cell = cell.strip()
            if not cell or cell.lower() == "nan":
                vals.append(math.nan)
                continue
            try:
                vals.append(float(cell))
            except ValueError:
                raise InputError(f"{path}:{line}:{col}: value {cell!r} is not a number") from None
        times.append(int(t))
        values.append(vals)
    if not times:
        raise InputError(f"{path}: no data rows")
    times = np.array(times)
    if np.any(np.diff(times) <= 0):
        raise InputError(f"{path}: time indices must be strictly increasing")
    if times[0] < 0:
        raise InputError(f"{path}: time indices must be nonnegative")
    values = np.array(values, dtype=float)
    altitudes = np.array(altitudes)
    order = np.argsort(altitudes)
    if len(np.unique(altitudes)) != len(altitudes):
        raise InputError(f"{path}: duplicate altitude columns")
    altitudes, values = altitudes[order], values[:, order]
    keep = np.isfinite(values).any(axis=0)
    if not keep.any():
        raise InputError(f"{path}: every column is empty")
    return DataFrame(times, altitudes[keep], values[:, keep])


def header_comment(kind: str, **meta) -> str:
    extra = "".join(f" {k}={v}" for k, v in meta.items())
    return f"# halfspectral {__version__} {kind}{extra}\n"


def write_data_csv(path, frame: DataFrame, kind: str = "data", **meta):
    with Path(path).open("w", newline="") as fh:
        fh.write(header_comment(kind, **meta))
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["time"] + [_fmt_alt(a) for a in frame.altitudes])
        for t, row in zip(frame.times, frame.values):
            writer.writerow([int(t)] + ["" if not np.isfinite(v) else repr(float(v)) for v in row])


def write_table_csv(path, columns: dict, kind: str, **meta):
    """Write equal-length columns (name -> sequence) with a versioned comment line."""
    names = list(columns)
    data = [np.asarray(columns[n]) for n in names]
    with Path(path).open("w", newline="") as fh:
        fh.write(header_comment(kind, **meta))
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names)
        for row in zip(*data):
            writer.writerow([_cell(v) for v in row])


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return "" if not np.isfinite(v) else repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


# ---------------------------------------------------------------------------
# configuration

CONFIG_DEFAULTS = {
    "params": None,
    "freeze": [],
    "sites": None,
    "pad_factor": 7,
    "n_probes": 72,
    "seed": 0,
    "tolerance": 1e-6,
    "trust_region": {},
    "n_time": 128,
    "reps": 1,
    "n_lags": 64,
    "pairs": None,
    "gradients": [],
    "offsets": [3, 12],
    "n_tapers": 5,
}

CONFIG_HELP = """\
config file (JSON object; unknown keys are rejected):
  params        parameter values by name (theta0..theta3 or theta_knots, rho0,
                nu0, ..., eta_t, knot_times, knot_decay, nu_s_below,
                nu_s_above). fit: missing values come from a moment-matching
                heuristic; other commands: from built-in defaults. knot_times
                default to four knots spread evenly over the time window.
  freeze        parameter names held fixed during fit            [default: none]
  sites         altitude subset to use                           [default: all]
  pad_factor    FFT length / number of time points               [default: 7]
  n_probes      Rademacher probes for stochastic derivatives     [default: 72]
  seed          probe / simulation seed                          [default: 0]
  tolerance     relative objective change for convergence        [default: 1e-6]
  trust_region  {initial_radius: 1, max_radius: 100, min_radius: 1e-10,
                 accept_ratio: 0.1, shrink: 0.25, grow: 2, max_iter: 200,
                 gtol: 0}
  n_time        simulate: time points when no --data is given    [default: 128]
  reps          simulate: number of replicate fields             [default: 1]
  n_lags        kernel-dump: number of nonnegative lags          [default: 64]
  pairs         kernel-dump: [[x, x'], ...] altitude pairs       [default: all]
  gradients     kernel-dump: parameter names to differentiate    [default: none]
  offsets       diagnose: gate offsets for coherence curves      [default: 3, 12]
  n_tapers      diagnose: sine tapers                            [default: 5]
"""


@dataclass
class Config:
    params: dict | None = None
    freeze: list = field(default_factory=list)
    sites: list | None = None
    pad_factor: int = 7
    n_probes: int = 72
    seed: int = 0
    tolerance: float = 1e-6
    trust_region: dict = field(default_factory=dict)
    n_time: int = 128
    reps: int = 1
    n_lags: int = 64
    pairs: list | None = None
    gradients: list = field(default_factory=list)
    offsets: list = field(default_factory=lambda: [3, 12])
    n_tapers: int = 5

    def model_params(self, base: ModelParams | None = None) -> ModelParams:
        return ModelParams.from_dict(self.params or {}, base)


def parse_config(text: str, source: str = "<config>") -> Config:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise InputError(f"{source}: top level must be a JSON object")
    unknown = sorted(set(raw) - set(CONFIG_DEFAULTS))
    if unknown:
        raise InputError(f"{source}: unknown config key(s): {', '.join(unknown)}")
    cfg = Config(**raw)
    try:
        check_names(cfg.freeze)
        check_names(cfg.gradients)
        if cfg.params is not None:
            ModelParams.from_dict(cfg.params)
    except HalfSpectralError as exc:
        raise InputError(f"{source}: {exc}") from None
    return cfg


def load_config(path) -> Config:
    if path is None:
        return Config()
    with _open(path) as fh:
        return parse_config(fh.read(), str(path))


def load_params(path) -> dict:
    """Parameter mapping from a fit-result JSON (``estimates``) or a plain mapping."""
    with _open(path) as fh:
        text = fh.read()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if isinstance(raw, dict) and "estimates" in raw:
        raw = raw["estimates"]
    elif isinstance(raw, dict) and "params" in raw:
        raw = raw["params"]
    if not isinstance(raw, dict):
        raise InputError(f"{path}: expected a JSON object of parameters")
    return raw


def write_json(path, obj: dict, kind: str):
    payload = {"format": f"halfspectral-{kind}", "version": __version__}
    payload.update(obj)
    Path(path).write_text(json.dumps(payload, indent=2, allow_nan=False) + "\n")
