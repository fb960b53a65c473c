import json
import math

import numpy as np
import pytest

from lctusf import ConfigError
from lctusf.cli import _parse_axis, main
from lctusf.config import ExperimentConfig, format_transform, parse_number, parse_transform
from lctusf.runner import (
    apply_axis,
    read_csv,
    run_experiment,
    run_sweep,
    sweep_argmin,
    trial_seed,
)

SMALL = dict(
    transform="ft", M=5, h=5e-3, norm=1.5, lam=0.75, m2=106, m3=30, trials=3, seed=11
)


# --- parsing ----------------------------------------------------------------


@pytest.mark.parametrize(
    "text, value",
    [("2.5", 2.5), ("pi", math.pi), ("pi/3", math.pi / 3), ("2pi", 2 * math.pi),
     ("0.5*pi", 0.5 * math.pi), ("-pi/4", -math.pi / 4)],
)
def test_parse_number(text, value):
    assert parse_number(text) == pytest.approx(value, rel=1e-15)


@pytest.mark.parametrize("text", ["abc", "pi/x", "", "3pie"])
def test_parse_number_rejects(text):
    with pytest.raises(ConfigError):
        parse_number(text)


def test_parse_transform():
    assert parse_transform("ft").is_fourier
    p = parse_transform("frft:pi/3")
    assert (p.a, p.b) == pytest.approx((math.cos(math.pi / 3), math.sin(math.pi / 3)))
    assert parse_transform(" Fresnel:2 ").b == 2.0
    assert format_transform(" FRFT : pi/3") == "frft:pi/3"


@pytest.mark.parametrize("text", ["ft:1", "frft", "wavelet:1", "fresnel:0", "frft:0"])
def test_parse_transform_rejects(text):
    with pytest.raises(ConfigError):
        parse_transform(text)


@pytest.mark.parametrize(
    "bad",
    [
        {"M": 0},
        {"h": 2.0},
        {"order": 3},
        {"estimator": "music"},
        {"lam": 0.5},
        {"lam": 0.5, "m2": 50, "m3": 60},
        {"lam": 0.5, "m2": 5000, "m3": 60},
        {"condition_k": True},
        {"baseline": True, "lam": 0.5, "m2": 50, "m3": 20, "transform": "fresnel:1"},
        {"snr_db": float("nan")},
    ],
)
def test_config_rejects(bad):
    with pytest.raises(ConfigError):
        ExperimentConfig(**bad)


def test_from_dict_unknown_key():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"Mm": 3})
    assert ExperimentConfig.from_dict({"Mm": 3}, strict=False) == ExperimentConfig()


def test_from_dict_bad_values():
    for data in ({"M": "ten"}, {"M": 2.5}, {"seed": -1}, {"condition_k": "maybe"}, {"M": True}):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(data)


def test_from_json_errors():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json("{not json")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json("[1, 2]")


def test_lambda_key_and_infinite_snr():
    cfg = ExperimentConfig.from_dict({**_dict(SMALL), "snr_db": "inf"})
    assert cfg.lam == 0.75 and math.isinf(cfg.snr_db)
    d = cfg.to_dict()
    assert d["lambda"] == 0.75 and d["snr_db"] == "inf"
    assert ExperimentConfig.from_dict(json.loads(json.dumps(d))) == cfg


def _dict(kw):
    d = dict(kw)
    if "lam" in d:
        d["lambda"] = d.pop("lam")
    return d


def test_row_round_trip_is_fixed_point():
    cfg = ExperimentConfig(transform="frft:pi/3", M=10, h=2.5e-4, norm=2.73, lam=0.85,
                           k_folds=3, m2=400, m3=90, order=2, snr_db=25.0, seed=2**63 + 5,
                           real_valued=False)
    row = cfg.to_row()
    again = ExperimentConfig.from_row({**row, "mse": "1e-3"})
    assert again.to_row() == row
    assert again.transform == "frft:pi/3" and again.seed == 2**63 + 5


def test_grid_and_first_index():
    cfg = ExperimentConfig(M=10, h=6.67e-3)
    assert cfg.grid.n_samples == 2998
    assert cfg.first_index == 11
    assert ExperimentConfig(m1=15).first_index == 15


# --- runner -----------------------------------------------------------------


def test_trial_seed():
    assert trial_seed(5, 0) == 5 and trial_seed(5, 3) == 6


def test_experiment_reproducible_and_parallel_invariant():
    cfg = ExperimentConfig(**SMALL)
    a = run_experiment(cfg, jobs=1).to_json(include_time=False)
    b = run_experiment(cfg, jobs=1).to_json(include_time=False)
    c = run_experiment(cfg, jobs=2).to_json(include_time=False)
    assert a == b == c
    d = json.loads(a)
    assert len(d["trials"]) == 3 and "wall_time" not in d
    assert d["averages"]["mse"] < 1e-4


def test_noise_is_redrawn_per_trial():
    cfg = ExperimentConfig(**{**SMALL, "snr_db": 30.0})
    res = run_experiment(cfg)
    assert res.config["noise_redrawn_per_trial"] is True
    assert len({t.seed for t in res.trials}) == 3


def test_conditioned_draws_hit_fold_count():
    cfg = ExperimentConfig(**{**SMALL, "k_folds": 2, "condition_k": True})
    res = run_experiment(cfg)
    assert all(t.k_true == 2 for t in res.trials)


def test_apply_axis():
    cfg = ExperimentConfig(**SMALL)
    assert apply_axis(cfg, "n_width", 50).m2 == 56
    assert apply_axis(cfg, "c_width", 10).m3 == 16
    assert apply_axis(cfg, "ratio", 0.5).m3 == 56
    assert apply_axis(cfg, "norm", 1.2).norm == 1.2
    with pytest.raises(ConfigError):
        apply_axis(cfg, "bogus", 1)


def test_sweep_writes_rows(tmp_path):
    cfg = ExperimentConfig(**{**SMALL, "trials": 1})
    rows = run_sweep(cfg, [("n_width", [40, 80]), ("ratio", [0.3, 0.6])], tmp_path)
    assert len(rows) == 4
    disk = read_csv(tmp_path / "sweep_n_width_ratio.csv")
    assert [r["n_width"] for r in disk] == ["40", "40", "80", "80"]
    assert set(sweep_argmin(rows, "n_width", "ratio")) == {40, 80}


def test_parse_axis():
    assert _parse_axis("ratio=0.1:0.3:0.1") == ("ratio", [0.1, 0.2, 0.3])
    assert _parse_axis("n_width=100,200") == ("n_width", [100, 200])
    with pytest.raises(ConfigError):
        _parse_axis("ratio")
    with pytest.raises(ConfigError):
        _parse_axis("ratio=0:1:0")


# --- CLI --------------------------------------------------------------------


def _flags(kw):
    out = []
    for k, v in _dict(kw).items():
        out += [f"--{k}", str(v)]
    return out


def test_cli_experiment(tmp_path, capsys):
    assert main(["experiment", "--out", str(tmp_path), "--jobs", "1"] + _flags(SMALL)) == 0
    res = json.loads((tmp_path / "result.json").read_text())
    assert res["config"]["seed"] == 11
    assert len(read_csv(tmp_path / "trials.csv")) == 3
    assert "mse" in json.loads(capsys.readouterr().out)


def test_cli_config_file_and_override(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(_dict(SMALL)))
    out = tmp_path / "o"
    assert main(["experiment", "--config", str(path), "--trials", "1", "--out", str(out),
                 "--jobs", "1", "--format", "json"]) == 0
    res = json.loads((out / "result.json").read_text())
    assert res["config"]["trials"] == 1 and not (out / "trials.csv").exists()


def test_cli_seed_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("UO_SEED", "77")
    kw = {k: v for k, v in SMALL.items() if k != "seed"}
    assert main(["experiment", "--out", str(tmp_path), "--jobs", "1", "--trials", "1"] + _flags(kw)) == 0
    assert json.loads((tmp_path / "result.json").read_text())["config"]["seed"] == 77


def test_cli_encode_then_recover(tmp_path):
    enc = tmp_path / "enc"
    assert main(["encode", "--out", str(enc)] + _flags(SMALL)) == 0
    blob = np.load(enc / "stream.npz")
    assert set(np.unique(blob["bits"])) <= {1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j}
    rec = tmp_path / "rec"
    assert main(["recover", "--input", str(enc / "stream.npz"), "--out", str(rec)]) == 0
    res = json.loads((rec / "result.json").read_text())
    assert res["mse"] < 1e-4 and not res["failed"]
    assert np.load(rec / "estimate.npy").shape == blob["bits"].shape


def test_cli_sweep(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({**_dict(SMALL), "trials": 1,
                                "sweep": {"axis1": {"name": "n_width", "values": [40]},
                                          "axis2": {"name": "ratio", "values": [0.2, 0.5]}}}))
    assert main(["sweep", "--config", str(path), "--out", str(tmp_path), "--jobs", "1"]) == 0
    assert len(read_csv(tmp_path / "sweep_n_width_ratio.csv")) == 2


@pytest.mark.parametrize(
    "argv",
    [
        ["experiment", "--M", "0"],
        ["experiment", "--transform", "wavelet"],
        ["experiment", "--lambda", "0.5"],
        ["experiment", "--config", "/nonexistent.json"],
        ["sweep", "--axis1", "ratio=0.5"],
    ],
)
def test_cli_bad_config_exits_2(argv, tmp_path, capsys):
    assert main(argv + ["--out", str(tmp_path)]) == 2
    assert "error" in capsys.readouterr().err
