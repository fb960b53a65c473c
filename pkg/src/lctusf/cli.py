"""Command-line front end.

Subcommands: ``encode``, ``recover``, ``experiment``, ``sweep``, ``table``.
Settings come from a JSON file (``--config``) and are overridden by flags
named after the config keys (``--M 30 --lambda 0.8 --transform frft:pi/3``).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .config import CONFIG_KEYS, ExperimentConfig, parse_number
from .errors import ConfigError, LctError
from .lct import ComplexSignal
from .quantizer import ModuloConfig, OneBitStream, lattice_round, true_residue
from .recovery import sigma_delta_decode
from .runner import (
    DERIVED_AXES,
    TABLES,
    CsvSink,
    acquire,
    decode,
    draw_signal,
    run_experiment,
    run_sweep,
    run_table,
    trial_seed,
)
from .simlab import mse

log = logging.getLogger("lctusf")

SEED_ENV = "UO_SEED"


def _default_jobs() -> int:
    return os.cpu_count() or 1


def _parse_axis(text: str):
    """``name=v1,v2,...`` or ``name=start:stop:step`` (inclusive stop)."""
    if "=" not in text:
        raise ConfigError(f"axis must look like name=values, got {text!r}")
    name, spec = text.split("=", 1)
    name = name.strip()
    if spec.count(":") == 2:
        lo, hi, step = (parse_number(s) for s in spec.split(":"))
        if step <= 0:
            raise ConfigError("axis step must be positive")
        n = int(np.floor((hi - lo) / step + 1e-9)) + 1
        values = [round(lo + i * step, 12) for i in range(n)]
    else:
        values = [parse_number(s) for s in spec.split(",") if s.strip()]
    if not values:
        raise ConfigError(f"axis {name!r} has no values")
    if name in ("n_width", "c_width", "M", "m1", "m2", "m3", "k_folds", "order", "trials"):
        values = [int(round(v)) for v in values]
    return name, values


def _add_common(p: argparse.ArgumentParser, with_config_flags: bool = True) -> None:
    p.add_argument("--config", type=Path, help="JSON config file")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")
    p.add_argument("--jobs", type=int, default=None, help="parallel trial workers")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--log-level", default="WARNING")
    if with_config_flags:
        for key in CONFIG_KEYS:
            p.add_argument(f"--{key}", dest=f"cfg_{key}", default=None, metavar="VALUE")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lctusf", description="One-bit modulo sigma-delta sampling experiments"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="acquire one trial and store the bit stream")
    _add_common(p)
    p.add_argument("--trial", type=int, default=0)

    p = sub.add_parser("recover", help="decode a stored bit stream")
    _add_common(p)
    p.add_argument("--input", type=Path, required=True, help="stream.npz from encode")

    p = sub.add_parser("experiment", help="run all trials of one config")
    _add_common(p)

    p = sub.add_parser("sweep", help="2-D parameter sweep")
    _add_common(p)
    p.add_argument("--axis1", help=f"name=values; derived axes: {', '.join(DERIVED_AXES)}")
    p.add_argument("--axis2", help="name=values")

    p = sub.add_parser("table", help="reproduce one of the experiment tables")
    _add_common(p, with_config_flags=False)
    p.add_argument("name", choices=TABLES)
    p.add_argument("--seed", type=str, default=None)
    p.add_argument("--trials", type=int, default=20)
    return parser


def _load_json(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return data


def _resolve_seed(flag, file_value=None) -> int:
    if flag is not None:
        return int(flag)
    if file_value is not None:
        return int(file_value)
    env = os.environ.get(SEED_ENV)
    return int(env) if env else 0


def resolve_config(args, data: dict | None = None) -> ExperimentConfig:
    """File values, then flag overrides; the seed falls back to ``UO_SEED``."""
    data = dict(_load_json(args.config) if data is None else data)
    data.pop("sweep", None)
    for key in CONFIG_KEYS:
        value = getattr(args, f"cfg_{key}", None)
        if value is not None:
            data[key] = value
    if getattr(args, "cfg_seed", None) is None and "seed" not in data:
        data["seed"] = _resolve_seed(None)
    return ExperimentConfig.from_dict(data)


def _write_json(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text + "\n")


def cmd_encode(args) -> int:
    cfg = resolve_config(args)
    g, sig_seed, draws = draw_signal(cfg, args.trial)
    seed = trial_seed(cfg.seed, args.trial)
    noisy, stream, trace = acquire(cfg, g, seed)
    args.out.mkdir(parents=True, exist_ok=True)
    extra = {}
    if cfg.lam is not None:
        extra["residue"] = lattice_round(true_residue(noisy, cfg.params, ModuloConfig(cfg.lam)), cfg.lam)
    np.savez_compressed(
        args.out / "stream.npz",
        bits=stream.bits,
        signal=g.samples,
        order=stream.order,
        config=json.dumps(cfg.to_dict(), sort_keys=True),
        **extra,
    )
    meta = {
        "config": cfg.to_dict(),
        "trial": args.trial,
        "seed": seed,
        "signal_seed": sig_seed,
        "draws": draws,
        "n_samples": cfg.grid.n_samples,
        "overload": trace.overload,
        "max_state": max(trace.max_re, trace.max_im),
    }
    _write_json(args.out / "result.json", json.dumps(meta, indent=2, sort_keys=True))
    return 0


def cmd_recover(args) -> int:
    try:
        blob = np.load(args.input)
    except OSError as exc:
        raise ConfigError(f"cannot read {args.input}: {exc}") from None
    data = json.loads(str(blob["config"]))
    data.update(_load_json(args.config))
    cfg = resolve_config(args, data)
    grid = cfg.grid
    if grid.n_samples != blob["bits"].size:
        raise ConfigError("stream length does not match the config grid")
    stream = OneBitStream(ComplexSignal(blob["bits"], grid), int(blob["order"]))
    truth = ComplexSignal(blob["signal"], grid)
    out = {"config": cfg.to_dict()}
    if cfg.lam is None:
        est = sigma_delta_decode(stream, cfg.params, cfg.M)
        out["mse"] = mse(truth, est)
    else:
        eps = blob["residue"]
        k_true = int(np.count_nonzero(np.abs(eps - np.roll(eps, 1)) > 1e-9))
        k = k_true if cfg.k_folds is None else cfg.k_folds
        res, est, err = decode(cfg, stream, k)
        out.update(mse=mse(truth, est), k_used=k, failed=err is not None, error=err)
        if res is not None:
            out["locations"] = res.residue.locations.tolist()
            out["amplitudes"] = [[a.real, a.imag] for a in res.residue.amplitudes]
    args.out.mkdir(parents=True, exist_ok=True)
    np.save(args.out / "estimate.npy", est.samples)
    _write_json(args.out / "result.json", json.dumps(out, indent=2, sort_keys=True))
    return 0


def cmd_experiment(args) -> int:
    cfg = resolve_config(args)
    result = run_experiment(cfg, args.jobs or _default_jobs())
    _write_json(args.out / "result.json", result.to_json())
    if args.format == "csv":
        rows = [asdict(t) for t in result.trials]
        with CsvSink(args.out / "trials.csv", list(rows[0])) as sink:
            for r in rows:
                sink.write(r)
    print(json.dumps(result.averages, sort_keys=True))
    return 0


def cmd_sweep(args) -> int:
    data = _load_json(args.config)
    sweep = data.get("sweep", {})
    axes = []
    for i, flag in ((1, args.axis1), (2, args.axis2)):
        if flag:
            axes.append(_parse_axis(flag))
        elif f"axis{i}" in sweep:
            spec = sweep[f"axis{i}"]
            axes.append(_parse_axis(f"{spec['name']}=" + ",".join(map(str, spec["values"]))))
        else:
            raise ConfigError(f"sweep needs axis{i}")
    cfg = resolve_config(args, data)
    args.out.mkdir(parents=True, exist_ok=True)
    run_sweep(cfg, axes, args.out, args.jobs or _default_jobs(), args.format)
    return 0


def cmd_table(args) -> int:
    seed = _resolve_seed(args.seed, _load_json(args.config).get("seed"))
    args.out.mkdir(parents=True, exist_ok=True)
    rows = run_table(args.name, args.out, args.trials, seed, args.jobs or _default_jobs(), args.format)
    for r in rows:
        print(json.dumps(r, default=str))
    return 0


COMMANDS = {
    "encode": cmd_encode,
    "recover": cmd_recover,
    "experiment": cmd_experiment,
    "sweep": cmd_sweep,
    "table": cmd_table,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING))
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except LctError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
