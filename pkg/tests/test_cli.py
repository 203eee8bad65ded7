import csv
import json

import numpy as np
import pytest

from crbrate.cli import EXIT_CONFIG, main
from crbrate.config import RunConfig
from crbrate.errors import ContractError
from crbrate.model import read_channels_csv


def _run(tmp_path, *args, config=None):
    argv = list(args)
    if config is not None:
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(config))
        argv += ["--config", str(path)]
    return main(argv)


def test_config_parsing(tmp_path):
    run = RunConfig.from_dict({"power_db": 10.0, "users": 5})
    assert run.system.power == pytest.approx(10.0)
    for bad in ({"bogus": 1}, {"points": 1}, {"schemes": ["magic"]}, {"n_tx": 1}, {"gamma_bar": -1}, []):
        with pytest.raises(ContractError):
            RunConfig.from_dict(bad)
    broken = tmp_path / "x.json"
    broken.write_text("{not json")
    with pytest.raises(ContractError):
        RunConfig.load(broken)


def test_endpoints_json(tmp_path):
    out = tmp_path / "e.json"
    assert _run(tmp_path, "endpoints", "--seed", "1", "--out", str(out)) == 0
    data = json.loads(out.read_text())
    assert data["crb_min"] == 0.25 and data["r_sen"] <= data["r_max"]
    assert data["crb_com"] == "inf"  # three users cannot fill four antennas


def test_config_errors_exit_2(tmp_path):
    assert _run(tmp_path, "endpoints", config={"bogus": 1}) == EXIT_CONFIG
    assert _run(tmp_path, "endpoints", "--config", str(tmp_path / "missing.json")) == EXIT_CONFIG
    # infinite CRB_com without an explicit upper limit
    assert _run(tmp_path, "sweep", "--out", str(tmp_path / "s.csv"), config={"users": 3}) == EXIT_CONFIG
    assert _run(tmp_path, "sweep", config={"users": 3, "gamma_lo": 0.1, "gamma_hi": 1.0}) == EXIT_CONFIG
    with pytest.raises(SystemExit):
        main(["nonsense"])


def test_sweep_csv(tmp_path):
    out = tmp_path / "s.csv"
    conf = {"users": 3, "gamma_lo": 0.25, "gamma_hi": 1.0, "points": 3}
    assert _run(tmp_path, "sweep", "--seed", "2", "--out", str(out), config=conf) == 0
    rows = list(csv.DictReader(out.open()))
    assert list(rows[0]) == [
        "gamma",
        "rate_optimal",
        "rate_beamforming",
        "rate_isotropic",
        "status_optimal",
        "status_beamforming",
        "status_isotropic",
    ]
    opt = [float(r["rate_optimal"]) for r in rows]
    bf = [float(r["rate_beamforming"]) for r in rows]
    iso = [float(r["rate_isotropic"]) for r in rows]
    assert all(r["status_optimal"] == "ok" for r in rows)
    assert all(b >= a - 1e-6 for a, b in zip(opt, opt[1:]))
    assert all(b <= o + 1e-6 for b, o in zip(bf, opt))
    # at CRB_min the optimal covariance is isotropic
    assert opt[0] == pytest.approx(iso[0], abs=1e-3)


def test_gen_channels_and_file_input(tmp_path):
    ch_path = tmp_path / "h.csv"
    assert _run(tmp_path, "gen-channels", "--seed", "4", "--out", str(ch_path), config={"users": 8}) == 0
    ch = read_channels_csv(ch_path)
    assert ch.channels.shape == (8, 4)
    out = tmp_path / "e.json"
    assert _run(tmp_path, "endpoints", "--channels", str(ch_path), "--out", str(out)) == 0
    assert json.loads(out.read_text())["crb_min"] == 0.25


def test_ksweep(tmp_path):
    out = tmp_path / "k.csv"
    conf = {"trials": 2, "schemes": ["optimal", "isotropic"]}
    assert _run(tmp_path, "ksweep", "--k", "2", "6", "--out", str(out), config=conf) == 0
    rows = list(csv.DictReader(out.open()))
    assert [r["k"] for r in rows] == ["2", "6"]
    assert list(rows[0]) == ["k", "rate_optimal", "rate_isotropic", "status_optimal", "status_isotropic"]
    assert float(rows[1]["rate_optimal"]) <= float(rows[0]["rate_optimal"])


def test_montecarlo(tmp_path):
    out = tmp_path / "m.json"
    assert _run(tmp_path, "montecarlo", "--seed", "3", "--out", str(out), config={"mc_trials": 200}) == 0
    rep = json.loads(out.read_text())
    assert rep["scheme"] == "isotropic" and 0.97 <= rep["ratio"] <= 1.10
    again = tmp_path / "m2.json"
    _run(tmp_path, "montecarlo", "--seed", "3", "--out", str(again), config={"mc_trials": 200})
    assert out.read_text() == again.read_text()
    opt = tmp_path / "o.json"
    conf = {"mc_trials": 200, "mc_scheme": "optimal", "gamma_bar": 0.5}
    assert _run(tmp_path, "montecarlo", "--out", str(opt), config=conf) == 0
    assert 0.97 <= json.loads(opt.read_text())["ratio"] <= 1.10


def test_log_file(tmp_path):
    log = tmp_path / "run.log"
    conf = {"users": 8, "points": 2, "schemes": ["optimal"], "gamma_hi": 1.0}
    assert _run(tmp_path, "sweep", "--out", str(tmp_path / "s.csv"), "--log", str(log), config=conf) == 0
    assert "sweep gamma" in log.read_text()
