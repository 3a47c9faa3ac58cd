"""
Experiment orchestration: configuration, seeded substreams, single points,
grid sweeps and CSV / JSON-lines emission.

Every random draw comes from a Philox generator keyed by
``(seed, component, repetition)`` through :class:`numpy.random.SeedSequence`,
so a point's result does not depend on which other points ran or in what
order.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np
import yaml

from . import __version__
from .channel import ChannelConfig, apply_channel
from .cpr import ALGORITHMS, CprConfig, derotate, recover_frame, supervised_cycle_slip_correct
from .errors import ConfigurationError, DomainError
from .metrics import MetricsRecord, effective_snr_db, error_rates, mutual_information, phase_error_stats, q_factor_from_ber
from .shaping import build_qam, insert_pilots, lambda_for_rate, mb_prior, normalize, sample_source

log = logging.getLogger(__name__)

# "genie" derotates with the true phase: the perfect-CPR reference curve
HARNESS_ALGORITHMS = ALGORITHMS + ("genie",)

STREAM_TAGS = {"source": 0, "phase": 1, "noise": 2}

CSV_COLUMNS = (
    "algorithm", "order", "lambda", "snr_db", "linewidth_hz", "baud_hz", "n_symbols",
    "n_pilots", "pilot_period", "half_window", "n_test_phases", "pilot_window", "reanchor",
    "seed", "rep", "mi_bits", "ser", "ber", "q_db", "rms_phase_error", "cycle_slips",
    "snr_eff_db", "wall_s", "version",
)

_INT_COLUMNS = {"order", "n_symbols", "n_pilots", "pilot_period", "half_window",
                "n_test_phases", "pilot_window", "seed", "rep", "cycle_slips"}
_BOOL_COLUMNS = {"reanchor"}
_STR_COLUMNS = {"algorithm", "version"}

# file/CSV key -> dataclass attribute
_KEY_ALIASES = {"lambda": "lam"}


def substream(seed: int, tag: str, rep: int = 0) -> np.random.Generator:
    """Independent generator for one pipeline component and repetition."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(STREAM_TAGS[tag], int(rep)))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class ExperimentConfig:
    algorithm: str = "baps"
    order: int = 64
    lam: float = 0.0
    target_rate: Optional[float] = None
    snr_db: float = 12.0
    linewidth_hz: float = 200e3
    baud_hz: float = 50e9
    n_symbols: int = 2**18
    n_pilots: int = 50
    pilot_period: int = 2000
    half_window: int = 14
    n_test_phases: Optional[int] = None
    pilot_window: Union[int, list] = 64
    reanchor: bool = False
    sigma2_source: str = "estimated"
    seed: int = 0
    repetitions: int = 1

    def __post_init__(self):
        if self.algorithm not in HARNESS_ALGORITHMS:
            raise ConfigurationError(f"algorithm must be one of {HARNESS_ALGORITHMS}, got {self.algorithm!r}")
        if self.order not in (64, 256):
            raise ConfigurationError(f"unsupported order {self.order}")
        if self.lam < 0:
            raise ConfigurationError("lambda must be nonnegative")
        if self.linewidth_hz < 0 or self.baud_hz <= 0:
            raise ConfigurationError("linewidth must be >= 0 and baud rate > 0")
        if self.n_symbols < 1 or self.pilot_period < 1 or self.repetitions < 1:
            raise ConfigurationError("n_symbols, pilot_period and repetitions must be >= 1")
        if self.n_pilots < 2:
            raise ConfigurationError("n_pilots must be >= 2")
        if self.half_window < 0:
            raise ConfigurationError("half_window must be >= 0")
        if self.n_test_phases is not None and self.n_test_phases < 1:
            raise ConfigurationError("n_test_phases must be >= 1")
        for L in self.pilot_windows:
            if int(L) < 1:
                raise ConfigurationError("pilot_window entries must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigurationError("seed must be an unsigned 64-bit integer")
        if self.sigma2_source not in ("estimated", "true_value"):
            raise ConfigurationError("sigma2_source must be 'estimated' or 'true_value'")

    @property
    def pilot_windows(self) -> list:
        if isinstance(self.pilot_window, (list, tuple)):
            return list(self.pilot_window)
        return [self.pilot_window]

    @property
    def effective_lambda(self) -> float:
        if self.target_rate is None:
            return float(self.lam)
        return lambda_for_rate(build_qam(self.order), self.target_rate)

    @property
    def effective_test_phases(self) -> int:
        if self.n_test_phases is not None:
            return int(self.n_test_phases)
        return 240 if self.algorithm == "baps" else 60

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        kwargs = {}
        for key, value in data.items():
            attr = _KEY_ALIASES.get(key, key)
            if attr not in known:
                raise ConfigurationError(f"unknown config key {key!r}")
            kwargs[attr] = value
        try:
            return cls(**_coerce(kwargs))
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigurationError):
                raise
            raise ConfigurationError(str(exc)) from exc

    def with_overrides(self, overrides: dict) -> "ExperimentConfig":
        return ExperimentConfig.from_dict({**self.to_dict(), **overrides})


def _coerce(kwargs: dict) -> dict:
    out = dict(kwargs)
    for name in ("order", "n_symbols", "n_pilots", "pilot_period", "half_window", "seed", "repetitions"):
        if name in out:
            out[name] = _as_int(name, out[name])
    if out.get("n_test_phases") is not None:
        out["n_test_phases"] = _as_int("n_test_phases", out["n_test_phases"])
    if "pilot_window" in out:
        pw = out["pilot_window"]
        out["pilot_window"] = [_as_int("pilot_window", v) for v in pw] if isinstance(pw, (list, tuple)) \
            else _as_int("pilot_window", pw)
    for name in ("lam", "snr_db", "linewidth_hz", "baud_hz"):
        if name in out:
            out[name] = float(out[name])
    if out.get("target_rate") is not None:
        out["target_rate"] = float(out["target_rate"])
    if "reanchor" in out and not isinstance(out["reanchor"], bool):
        raise ConfigurationError("reanchor must be true or false")
    return out


def _as_int(name, value) -> int:
    if isinstance(value, bool):
        raise ConfigurationError(f"{name} must be an integer")
    if isinstance(value, float) and not value.is_integer():
        raise ConfigurationError(f"{name} must be an integer, got {value}")
    try:
        return int(value)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"{name} must be an integer, got {value!r}") from exc


def load_config(path) -> ExperimentConfig:
    try:
        data = yaml.safe_load(Path(path).read_text()) or {}
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"malformed config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigurationError(f"config {path} must be a key/value mapping")
    return ExperimentConfig.from_dict(data)


def save_config(config: ExperimentConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(config.to_dict(), sort_keys=False))


# ---------------------------------------------------------------------------
# single point
# ---------------------------------------------------------------------------


def run_point(config: ExperimentConfig, rep: int = 0, timing: bool = True) -> dict:
    """Run the full pipeline once and return a result row keyed by CSV column."""
    if len(config.pilot_windows) != 1:
        raise ConfigurationError("run_point needs a scalar pilot_window; use sweep for lists")
    t0 = time.perf_counter()
    try:
        metrics = _run_pipeline(config, rep)
    except ConfigurationError as exc:
        raise ConfigurationError(f"[{_describe(config, rep)}] {exc}") from exc
    except Exception as exc:
        raise RuntimeError(f"[{_describe(config, rep)}] {exc}") from exc
    wall = time.perf_counter() - t0 if timing else 0.0
    row = {
        "algorithm": config.algorithm,
        "order": config.order,
        "lambda": config.effective_lambda,
        "snr_db": config.snr_db,
        "linewidth_hz": config.linewidth_hz,
        "baud_hz": config.baud_hz,
        "n_symbols": config.n_symbols,
        "n_pilots": config.n_pilots,
        "pilot_period": config.pilot_period,
        "half_window": config.half_window,
        "n_test_phases": config.effective_test_phases,
        "pilot_window": int(config.pilot_windows[0]),
        "reanchor": config.reanchor,
        "seed": config.seed,
        "rep": rep,
        **metrics,
        "wall_s": wall,
        "version": __version__,
    }
    return row


def _describe(config: ExperimentConfig, rep: int) -> str:
    return (f"algorithm={config.algorithm} lambda={config.lam} snr_db={config.snr_db} "
            f"N={config.half_window} L={config.pilot_window} seed={config.seed} rep={rep}")


def _run_pipeline(config: ExperimentConfig, rep: int) -> dict:
    base = build_qam(config.order)
    prior = mb_prior(base, config.effective_lambda)
    const = normalize(base, prior)

    idx = sample_source(prior, config.n_symbols, substream(config.seed, "source", rep))
    frame = insert_pilots(const.points[idx], config.n_pilots, config.pilot_period,
                          const.corner_points(), idx)
    chan = ChannelConfig(config.snr_db, config.linewidth_hz, config.baud_hz)
    out = apply_channel(frame.symbols, chan, substream(config.seed, "phase", rep),
                        substream(config.seed, "noise", rep))

    payload = frame.payload_mask
    theta_true = out.true_phase[payload]
    rx = out.received[payload]
    if config.algorithm == "genie":
        theta_raw = theta_true
        theta_est = theta_true
    else:
        cpr_cfg = CprConfig(
            algorithm=config.algorithm,
            half_window=config.half_window,
            n_test_phases=config.effective_test_phases,
            pilot_window=int(config.pilot_windows[0]),
            reanchor=config.reanchor,
            sigma2_source=config.sigma2_source,
        )
        res = recover_frame(out.received, frame, const, prior, cpr_cfg, sigma2_true=out.sigma2_true)
        theta_raw = res.theta_est
        theta_est = theta_raw
        if config.algorithm in ("bps", "ps_bps"):
            theta_est = supervised_cycle_slip_correct(theta_raw, theta_true)

    y = derotate(rx, theta_est)
    mi = mutual_information(y, idx, prior, const)
    sigma2 = out.sigma2_true if out.sigma2_true > 0 else 1e-12
    ser, ber = error_rates(y, idx, prior, const, sigma2)
    try:
        q_db = q_factor_from_ber(ber)
    except DomainError:
        q_db = float("nan")
    rms, _ = phase_error_stats(theta_est, theta_true)
    # slips are counted before the genie correction so BPS failures stay visible
    _, slips = phase_error_stats(theta_raw, theta_true)
    rec = MetricsRecord(mi, ser, ber, q_db, rms, slips, effective_snr_db(y, const.points[idx]))
    return asdict(rec)


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------


def parse_grid(source) -> dict:
    """Grid from a dict, a YAML file path, or an inline YAML mapping string."""
    if isinstance(source, dict):
        data = source
    else:
        text = str(source)
        p = Path(text)
        try:
            data = yaml.safe_load(p.read_text() if p.is_file() else text)
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"malformed grid: {exc}") from exc
    if not isinstance(data, dict) or not data:
        raise ConfigurationError("grid must be a nonempty mapping of axis -> list of values")
    grid = {}
    for axis, values in data.items():
        if not isinstance(values, (list, tuple)):
            values = [values]
        if len(values) == 0:
            raise ConfigurationError(f"grid axis {axis!r} is empty")
        grid[axis] = list(values)
    return grid


def _axis_order(axis: str) -> tuple:
    return (CSV_COLUMNS.index(axis), axis) if axis in CSV_COLUMNS else (len(CSV_COLUMNS), axis)


def grid_points(config: ExperimentConfig, grid: dict) -> list[tuple[ExperimentConfig, int]]:
    """Cartesian product in CSV-column axis order, repetitions innermost."""
    grid = dict(grid)
    if "pilot_window" not in grid and len(config.pilot_windows) > 1:
        grid["pilot_window"] = config.pilot_windows
    axes = sorted(grid, key=_axis_order)
    points = []
    for combo in itertools.product(*(grid[a] for a in axes)):
        cfg = config.with_overrides(dict(zip(axes, combo)))
        for rep in range(cfg.repetitions):
            points.append((cfg, rep))
    return points


def _run_star(args):
    cfg, rep, timing = args
    return run_point(cfg, rep, timing)


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("BAPS_WORKERS", "1")))
    except ValueError:
        return 1


def sweep(
    config: ExperimentConfig,
    grid,
    out: Optional[Union[str, Path]] = None,
    workers: Optional[int] = None,
    fmt: Optional[str] = None,
    best_pilot_window: bool = False,
    timing: bool = True,
) -> list[dict]:
    grid = parse_grid(grid)
    if out is not None:
        _check_writable(out)
    points = grid_points(config, grid)
    workers = default_workers() if workers is None else max(1, int(workers))
    jobs = [(cfg, rep, timing) for cfg, rep in points]
    log.info("sweep: %d points on %d worker(s)", len(jobs), workers)
    if workers == 1:
        rows = [_run_star(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_star, jobs))
    if best_pilot_window:
        rows = best_over_pilot_window(rows)
    if out is not None:
        emit(rows, out, fmt)
    return rows


def best_over_pilot_window(rows: list[dict]) -> list[dict]:
    """Keep the highest-MI row per point, maximizing over pilot_window only."""
    skip = {"pilot_window", "mi_bits", "ser", "ber", "q_db", "rms_phase_error",
            "cycle_slips", "snr_eff_db", "wall_s"}
    best: dict = {}
    order = []
    for row in rows:
        key = tuple((k, row[k]) for k in CSV_COLUMNS if k not in skip)
        if key not in best:
            order.append(key)
            best[key] = row
        elif row["mi_bits"] > best[key]["mi_bits"]:
            best[key] = row
    return [best[k] for k in order]


# ---------------------------------------------------------------------------
# emission
# ---------------------------------------------------------------------------


def _check_writable(path) -> None:
    path = Path(path)
    try:
        existed = path.exists()
        with open(path, "a"):
            pass
        if not existed:
            path.unlink()
    except OSError as exc:
        raise OSError(f"cannot write output {path}: {exc}") from exc


def format_value(key: str, value: Any) -> str:
    if value is None:
        return ""
    if key in _BOOL_COLUMNS:
        return "true" if value else "false"
    if key in _INT_COLUMNS:
        return str(int(value))
    if key in _STR_COLUMNS:
        return str(value)
    v = float(value)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.9g}"


def parse_value(key: str, text: str) -> Any:
    if text == "":
        return None
    if key in _BOOL_COLUMNS:
        return text == "true"
    if key in _INT_COLUMNS:
        return int(text)
    if key in _STR_COLUMNS:
        return text
    return float(text)


def to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in rows:
        w.writerow([format_value(k, row[k]) for k in CSV_COLUMNS])
    return buf.getvalue()


def to_jsonl(rows: list[dict]) -> str:
    lines = []
    for row in rows:
        rec = {}
        for k in CSV_COLUMNS:
            text = format_value(k, row[k])
            val = parse_value(k, text)
            if isinstance(val, float) and not math.isfinite(val):
                val = text
            rec[k] = val
        lines.append(json.dumps(rec))
    return "".join(line + "\n" for line in lines)


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ConfigurationError(f"{path}: unexpected CSV header")
        return [{k: parse_value(k, r[k]) for k in CSV_COLUMNS} for r in reader]


def emit(rows: list[dict], path, fmt: Optional[str] = None) -> None:
    """Write rows as CSV (default) or JSON lines (``fmt='jsonl'`` or a .jsonl path)."""
    if not rows:
        raise ConfigurationError("emit needs at least one row")
    path = Path(path)
    if fmt is None:
        fmt = "jsonl" if path.suffix in (".jsonl", ".json") else "csv"
    if fmt not in ("csv", "jsonl"):
        raise ConfigurationError(f"unknown output format {fmt!r}")
    text = to_csv(rows) if fmt == "csv" else to_jsonl(rows)
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write output {path}: {exc}") from exc
