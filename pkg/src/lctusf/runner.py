"""Trial execution, experiment aggregation, table reproductions and sweeps."""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .config import FLOAT_FMT, ExperimentConfig
from .errors import ConfigError, LctError
from .lct import ComplexSignal
from .quantizer import (
    ModuloConfig,
    OneBitStream,
    encode,
    fold_count,
    lattice_round,
    msdq_front_end,
    true_residue,
)
from .recovery import RecoveryConfig, recover, sigma_delta_decode, synthesize_residue
from .simlab import (
    NoiseSpec,
    SignalSpec,
    add_awgn,
    gen_bandlimited,
    mse,
    td_baseline_recover,
    td_kernel_width,
)

MAX_DRAWS = 20000
# keeps noise draws independent of signal draws that share a trial seed
NOISE_SALT = 0x9E3779B97F4A7C15
# oversampling ratio at which the time-domain decoder is guaranteed to work
# for lambda = 1, ||g|| <= 4.5 and M = 10
H_TD = 8e-4


# --- trials -----------------------------------------------------------------


def trial_seed(seed: int, trial: int) -> int:
    return int(seed) ^ int(trial)


def _signal_spec(cfg: ExperimentConfig, seed: int) -> SignalSpec:
    return SignalSpec(cfg.params, cfg.M, cfg.norm, seed, real_valued=cfg.real_valued)


def _signal_key(cfg: ExperimentConfig) -> tuple:
    return (
        cfg.transform,
        cfg.M,
        cfg.h,
        cfg.tau,
        cfg.norm,
        cfg.lam,
        cfg.k_folds if cfg.condition_k else None,
        cfg.real_valued,
    )


@lru_cache(maxsize=256)
def _draw(key: tuple, seed: int) -> tuple[ComplexSignal, int, int]:
    transform, M, h, tau, norm, lam, k_cond, real_valued = key
    cfg = ExperimentConfig(transform, M, h, tau, norm, real_valued=real_valued)
    grid, params = cfg.grid, cfg.params
    for draw in range(MAX_DRAWS):
        # draw 0 uses the trial seed itself; retries live above the u64 range
        sig_seed = seed + (draw << 64)
        g = gen_bandlimited(_signal_spec(cfg, sig_seed), grid)
        if k_cond is None or fold_count(g, params, ModuloConfig(lam)) == k_cond:
            return g, sig_seed, draw + 1
    raise ConfigError(f"no signal with {k_cond} folds in {MAX_DRAWS} draws")


def draw_signal(cfg: ExperimentConfig, trial: int) -> tuple[ComplexSignal, int, int]:
    """Ground-truth signal for a trial: ``(signal, signal_seed, draws)``."""
    return _draw(_signal_key(cfg), trial_seed(cfg.seed, trial))


def recovery_config(cfg: ExperimentConfig, k: int) -> RecoveryConfig:
    return RecoveryConfig(
        k, cfg.first_index, cfg.m2, cfg.m3, estimator=cfg.estimator
    )


def _cyclic_jumps(eps: np.ndarray):
    d = eps - np.roll(eps, 1)
    loc = np.flatnonzero(np.abs(d) > 1e-9)
    return loc, d[loc]


@dataclass
class TrialResult:
    trial: int
    seed: int
    signal_seed: int
    draws: int
    mse: float
    overload: bool
    k_true: int | None = None
    k_used: int | None = None
    residue_mse: float | None = None
    amp_mse: float | None = None
    loc_mse: float | None = None
    loc_exact: bool | None = None
    failed: bool = False
    error: str | None = None
    oob_ratio: float | None = None
    td_mse: float | None = None


def acquire(cfg: ExperimentConfig, g: ComplexSignal, seed: int):
    """Noise, optional folding and one-bit encoding.

    Returns ``(noisy input, stream, trace)``.
    """
    params = cfg.params
    noisy = g
    if cfg.snr_db is not None:
        noisy = add_awgn(g, NoiseSpec(cfg.snr_db), seed ^ NOISE_SALT)
    if cfg.lam is None:
        stream, trace = encode(noisy, params, cfg.order, warn=False)
    else:
        stream, trace = msdq_front_end(noisy, params, ModuloConfig(cfg.lam), cfg.order, warn=False)
    return noisy, stream, trace


def decode(cfg: ExperimentConfig, stream: OneBitStream, k: int):
    """Transform-domain decode; falls back to the uncorrected sigma-delta
    reconstruction if the estimator fails. Returns ``(result or None,
    estimate, error name or None)``."""
    params = cfg.params
    try:
        res = recover(stream, params, recovery_config(cfg, k))
        return res, res.signal, None
    except (LctError, np.linalg.LinAlgError) as exc:
        return None, sigma_delta_decode(stream, params, cfg.M), type(exc).__name__


def run_trial(cfg: ExperimentConfig, trial: int) -> TrialResult:
    seed = trial_seed(cfg.seed, trial)
    g, sig_seed, draws = draw_signal(cfg, trial)
    noisy, stream, trace = acquire(cfg, g, seed)
    params = cfg.params

    if cfg.lam is None:
        est = sigma_delta_decode(stream, params, cfg.M)
        return TrialResult(trial, seed, sig_seed, draws, mse(g, est), trace.overload)

    eps = lattice_round(true_residue(noisy, params, ModuloConfig(cfg.lam)), cfg.lam)
    loc_true, amp_true = _cyclic_jumps(eps)
    k_true = int(loc_true.size)
    k = k_true if cfg.k_folds is None else cfg.k_folds
    res, est, err = decode(cfg, stream, k)
    out = TrialResult(
        trial, seed, sig_seed, draws, mse(g, est), trace.overload,
        k_true=k_true, k_used=k, failed=err is not None, error=err,
    )
    if res is not None:
        loc, amp = res.residue.locations, res.residue.amplitudes
        out.residue_mse = mse(eps, synthesize_residue(res.residue, eps.size))
        out.loc_exact = bool(np.array_equal(loc, loc_true))
        if loc.size == loc_true.size:
            out.loc_mse = float(np.mean((loc - loc_true) ** 2)) if loc.size else 0.0
            out.amp_mse = float(np.mean(np.abs(amp - amp_true) ** 2)) if amp.size else 0.0
        out.oob_ratio = res.oob_ratio
    else:
        out.loc_exact = False
    if cfg.baseline:
        width = td_kernel_width(cfg.lam, cfg.norm, cfg.grid.osr)
        try:
            out.td_mse = mse(g, td_baseline_recover(stream, cfg.lam, width, cfg.M))
        except ValueError:
            est = sigma_delta_decode(stream, params, cfg.M)
            out.td_mse = mse(g, est.with_samples(est.samples.real))
    return out


def _run_trial_args(args):
    return run_trial(*args)


# --- experiments ------------------------------------------------------------


def _mean(values):
    vals = [float(v) for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


@dataclass
class ExperimentResult:
    config: dict
    trials: list[TrialResult]
    averages: dict = field(default_factory=dict)
    wall_time: float = 0.0

    def __post_init__(self):
        if len(self.trials) != self.config["trials"]:
            raise ValueError("trial count does not match the config")

    def to_dict(self, include_time: bool = True) -> dict:
        d = {
            "config": self.config,
            "averages": self.averages,
            "trials": [asdict(t) for t in self.trials],
        }
        if include_time:
            d["wall_time"] = self.wall_time
        return _clean(d)

    def to_json(self, include_time: bool = True) -> str:
        return json.dumps(self.to_dict(include_time), indent=2, sort_keys=True, allow_nan=False)


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_clean(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    return obj


def summarize(trials: list[TrialResult]) -> dict:
    out = {"mse": _mean(t.mse for t in trials)}
    folded = [t for t in trials if t.k_true is not None]
    if folded:
        out.update(
            k_true=_mean(t.k_true for t in folded),
            residue_mse=_mean(t.residue_mse for t in folded),
            amp_mse=_mean(t.amp_mse for t in folded),
            loc_mse=_mean(t.loc_mse for t in folded),
            loc_exact_rate=_mean(t.loc_exact for t in folded),
            failure_rate=_mean(t.failed for t in folded),
        )
    if any(t.td_mse is not None for t in trials):
        out["td_mse"] = _mean(t.td_mse for t in trials)
    out["overload_rate"] = _mean(t.overload for t in trials)
    out["draws"] = int(sum(t.draws for t in trials))
    return out


def run_trials(cfg: ExperimentConfig, jobs: int = 1) -> list[TrialResult]:
    """All trials of ``cfg``; results come back in trial order."""
    tasks = [(cfg, i) for i in range(cfg.trials)]
    if jobs <= 1 or cfg.trials == 1:
        return [run_trial(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_trial_args, tasks))


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> ExperimentResult:
    start = time.perf_counter()
    trials = run_trials(cfg, jobs)
    meta = cfg.to_dict()
    meta["noise_redrawn_per_trial"] = cfg.snr_db is not None
    return ExperimentResult(meta, trials, summarize(trials), time.perf_counter() - start)


# --- CSV --------------------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return FLOAT_FMT % value
    return str(value)


class CsvSink:
    """CSV writer that flushes every row, so partial runs leave usable files."""

    def __init__(self, path: Path, columns: list[str]):
        self.path = Path(path)
        self.columns = list(columns)
        self._fh = open(self.path, "w", newline="")
        self._writer = csv.DictWriter(self._fh, fieldnames=self.columns, lineterminator="\n")
        self._writer.writeheader()
        self._fh.flush()

    def write(self, row: dict) -> None:
        self._writer.writerow({k: _fmt(row.get(k)) for k in self.columns})
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class JsonSink:
    """Collects rows and writes them as a JSON list on close."""

    def __init__(self, path: Path, columns: list[str]):
        self.path = Path(path)
        self.columns = list(columns)
        self.rows: list[dict] = []

    def write(self, row: dict) -> None:
        self.rows.append({k: _clean(row.get(k)) for k in self.columns})
        self.path.write_text(json.dumps(self.rows, indent=2, allow_nan=False))

    def close(self) -> None:
        self.path.write_text(json.dumps(self.rows, indent=2, allow_nan=False))

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def open_sink(path: Path, columns: list[str], fmt: str = "csv"):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        return CsvSink(Path(path).with_suffix(".csv"), columns)
    if fmt == "json":
        return JsonSink(Path(path).with_suffix(".json"), columns)
    raise ConfigError(f"unknown format {fmt!r}")


def config_columns(cfg: ExperimentConfig, keys) -> dict:
    row = cfg.to_row()
    return {k: row[k] for k in keys}


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# --- tables -----------------------------------------------------------------

LSDQ_ROWS = [
    ("ft", 10, 6.67e-3),
    ("frft:pi/3", 10, 6.67e-3),
    ("fresnel:1", 10, 6.67e-3),
    ("ft", 30, 5.00e-3),
    ("frft:pi/16", 30, 5.00e-3),
    ("fresnel:2", 30, 5.00e-3),
]

# transform, M2 - M1, M3 - M1, h, ||g||, lambda
MSDQ_ROWS = [
    ("ft", 400, 80, 2.86e-4, 1.90, 0.75),
    ("frft:pi/3", 500, 80, 2.50e-4, 2.73, 0.85),
    ("frft:pi/4", 500, 120, 2.00e-4, 3.74, 0.85),
    ("frft:pi/16", 800, 200, 1.25e-4, 6.69, 0.80),
    ("fresnel:1", 600, 150, 1.72e-4, 2.83, 0.80),
    ("fresnel:2", 750, 180, 1.25e-4, 3.83, 0.80),
    ("fresnel:3", 800, 200, 1.00e-4, 5.49, 0.80),
]

# K, M2 - M1, M3 - M1, h / H_TD, ||g||
UNDERSAMPLED_ROWS = [
    (2, 35, 7, 26.78, 2.0),
    (4, 110, 38, 20.89, 3.0),
    (8, 200, 32, 19.67, 4.5),
]

TABLES = ("lsdq", "msdq", "undersampled")


def lsdq_config(row: int, trials: int = 20, seed: int = 0) -> ExperimentConfig:
    transform, M, h = LSDQ_ROWS[row]
    return ExperimentConfig(
        transform, M, h, norm=1.0, order=1, trials=trials, seed=seed, real_valued=False
    )


def msdq_config(row: int, trials: int = 20, seed: int = 0, order: int = 1) -> ExperimentConfig:
    transform, nw, cw, h, norm, lam = MSDQ_ROWS[row]
    m1 = 11
    return ExperimentConfig(
        transform, 10, h, norm=norm, lam=lam, m1=m1, m2=m1 + nw, m3=m1 + cw,
        order=order, trials=trials, seed=seed,
    )


def undersampled_config(row: int, trials: int = 20, seed: int = 0) -> ExperimentConfig:
    k, nw, cw, ratio, norm = UNDERSAMPLED_ROWS[row]
    m1 = 11
    return ExperimentConfig(
        "ft", 10, ratio * H_TD, norm=norm, lam=1.0, k_folds=k, m1=m1, m2=m1 + nw,
        m3=m1 + cw, order=1, trials=trials, seed=seed, condition_k=True, baseline=True,
    )


def _frac_less(a: list[TrialResult], b: list[TrialResult]) -> float:
    return float(np.mean([x.mse < y.mse for x, y in zip(a, b)]))


def table_columns(name: str) -> list[str]:
    if name == "lsdq":
        return ["exp", "transform", "M", "h", "eps1", "eps2", "frac_eps2_lt_eps1",
                "norm", "real_valued", "trials", "seed"]
    if name == "msdq":
        return ["exp", "transform", "M", "m1", "m2", "m3", "h", "norm", "lambda", "K",
                "amp_mse1", "residue_mse1", "mse1", "amp_mse2", "residue_mse2", "mse2",
                "loc_exact1", "loc_exact2", "frac_mse2_lt_mse1", "trials", "seed"]
    if name == "undersampled":
        return ["exp", "k_folds", "m1", "m2", "m3", "h", "h_ratio", "td_mse", "fd_mse",
                "transform", "M", "norm", "lambda", "condition_k", "baseline", "trials", "seed"]
    raise ConfigError(f"unknown table {name!r}; choose from {TABLES}")


def table_row(name: str, row: int, trials: int, seed: int, jobs: int = 1) -> dict:
    """One reproduced table row as a flat mapping."""
    cols = table_columns(name)
    if name == "lsdq":
        c1 = lsdq_config(row, trials, seed)
        t1 = run_trials(c1, jobs)
        t2 = run_trials(c1.replace(order=2), jobs)
        out = config_columns(c1, [k for k in cols if k in c1.to_row()])
        out.update(
            eps1=_mean(t.mse for t in t1),
            eps2=_mean(t.mse for t in t2),
            frac_eps2_lt_eps1=_frac_less(t2, t1),
        )
    elif name == "msdq":
        c1 = msdq_config(row, trials, seed)
        t1 = run_trials(c1, jobs)
        t2 = run_trials(c1.replace(order=2), jobs)
        s1, s2 = summarize(t1), summarize(t2)
        out = config_columns(c1, [k for k in cols if k in c1.to_row()])
        out.update(
            K=s1["k_true"],
            amp_mse1=s1["amp_mse"], residue_mse1=s1["residue_mse"], mse1=s1["mse"],
            amp_mse2=s2["amp_mse"], residue_mse2=s2["residue_mse"], mse2=s2["mse"],
            loc_exact1=s1["loc_exact_rate"], loc_exact2=s2["loc_exact_rate"],
            frac_mse2_lt_mse1=_frac_less(t2, t1),
        )
    elif name == "undersampled":
        c = undersampled_config(row, trials, seed)
        s = summarize(run_trials(c, jobs))
        out = config_columns(c, [k for k in cols if k in c.to_row()])
        out.update(h_ratio=c.h / H_TD, td_mse=s["td_mse"], fd_mse=s["mse"])
    else:
        raise ConfigError(f"unknown table {name!r}; choose from {TABLES}")
    out["exp"] = row + 1
    return out


def run_table(name: str, out_dir, trials: int = 20, seed: int = 0, jobs: int = 1,
              fmt: str = "csv", rows=None) -> list[dict]:
    n_rows = {"lsdq": len(LSDQ_ROWS), "msdq": len(MSDQ_ROWS),
              "undersampled": len(UNDERSAMPLED_ROWS)}
    if name not in n_rows:
        raise ConfigError(f"unknown table {name!r}; choose from {TABLES}")
    rows = range(n_rows[name]) if rows is None else rows
    results = []
    with open_sink(Path(out_dir) / f"table_{name}", table_columns(name), fmt) as sink:
        for r in rows:
            row = table_row(name, r, trials, seed, jobs)
            sink.write(row)
            results.append(row)
    return results


# --- sweeps -----------------------------------------------------------------

DERIVED_AXES = ("n_width", "c_width", "ratio")
SWEEP_METRICS = ["mse", "residue_mse", "loc_exact_rate", "failure_rate", "k_true"]


def apply_axis(cfg: ExperimentConfig, name: str, value) -> ExperimentConfig:
    """Set one sweep coordinate. ``n_width`` and ``c_width`` set the window
    widths ``m2 - m1`` and ``m3 - m1``; ``ratio`` sets ``m3 - m1`` to that
    fraction of ``m2 - m1`` (at least ``k_folds``)."""
    m1 = cfg.first_index
    if name == "n_width":
        nw = int(value)
        return cfg.replace(m2=m1 + nw, m3=min(cfg.m3 or m1 + nw, m1 + nw))
    if name == "c_width":
        return cfg.replace(m3=m1 + int(value))
    if name == "ratio":
        if cfg.m2 is None:
            raise ConfigError("ratio axis needs m2")
        nw = cfg.m2 - m1
        cw = max(cfg.k_folds or 1, int(round(float(value) * nw)))
        return cfg.replace(m3=m1 + min(cw, nw))
    d = cfg.to_dict()
    if name not in d:
        raise ConfigError(f"unknown sweep axis {name!r}")
    d[name] = value
    return ExperimentConfig.from_dict(d)


def sweep_cells(cfg: ExperimentConfig, axes: list[tuple[str, list]]):
    """Cartesian product of two axes; ``ratio`` is applied after the other axis."""
    (a1, v1), (a2, v2) = axes
    for x in v1:
        for y in v2:
            pairs = [(a1, x), (a2, y)]
            pairs.sort(key=lambda p: p[0] == "ratio")
            c = cfg
            for name, value in pairs:
                c = apply_axis(c, name, value)
            yield x, y, c


def run_sweep(cfg: ExperimentConfig, axes, out_dir, jobs: int = 1, fmt: str = "csv") -> list[dict]:
    """Average metrics over a 2-D grid; one row per cell, flushed as it completes."""
    if len(axes) != 2:
        raise ConfigError("a sweep needs exactly two axes")
    (a1, _), (a2, _) = axes
    keys = list(cfg.to_row())
    cols = [a1, a2] + SWEEP_METRICS + [k for k in keys if k not in (a1, a2)]
    rows = []
    with open_sink(Path(out_dir) / f"sweep_{a1}_{a2}", cols, fmt) as sink:
        for x, y, c in sweep_cells(cfg, axes):
            s = summarize(run_trials(c, jobs))
            row = c.to_row()
            row.update({a1: x, a2: y})
            row.update({k: s.get(k) for k in SWEEP_METRICS})
            sink.write(row)
            rows.append(row)
    return rows


def sweep_argmin(rows: list[dict], a1: str, a2: str) -> dict:
    """For each value of ``a1`` the ``a2`` value with the smallest average MSE."""
    best: dict = {}
    for r in rows:
        x, y, v = r[a1], r[a2], float(r["mse"])
        if x not in best or v < best[x][1]:
            best[x] = (y, v)
    return {x: y for x, (y, _) in best.items()}
