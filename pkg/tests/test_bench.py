import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rofsim.bench import cli, runner
from rofsim.bench import pipelines as pl
from rofsim.bench.config import ConfigError, ScenarioConfig, config_from_dict, parse_config
from rofsim.bench.experiments import EXPERIMENTS, get_experiment
from rofsim.bench.metrics import EvmReport, PointResult, SweepResult, compute_evm, evm_db, meets_limit
from rofsim.modem import random_symbols

SMALL = {"waveform": {"n_symbols": 200}}


# --- EVM -------------------------------------------------------------------------------

def test_evm_identity_and_gain(rng):
    s = random_symbols(rng, 500).symbols
    assert compute_evm(s, s) == 0.0
    assert compute_evm(1.1 * s, s) == pytest.approx(0.0, abs=1e-12)
    assert compute_evm(0.3j * s, s) == pytest.approx(0.0, abs=1e-12)


def test_evm_orthogonal_perturbation(rng):
    s = random_symbols(rng, 1000).symbols
    e = rng.normal(size=s.size) + 1j * rng.normal(size=s.size)
    e -= np.vdot(s, e) / np.vdot(s, s) * s  # orthogonal to the reference
    e *= 0.1 * np.sqrt(np.mean(np.abs(s) ** 2) / np.mean(np.abs(e) ** 2))
    assert compute_evm(s + e, s) == pytest.approx(10.0, rel=1e-9)


@pytest.mark.parametrize("snr", [10, 20, 30])
def test_evm_awgn_self_consistency(snr):
    rng = np.random.default_rng(snr)
    s = random_symbols(rng, 200_000).symbols
    n = np.sqrt(np.mean(np.abs(s) ** 2) * 10 ** (-snr / 10) / 2) * (rng.normal(size=s.size) + 1j * rng.normal(size=s.size))
    assert compute_evm(s + n, s) == pytest.approx(100 * 10 ** (-snr / 20), rel=0.02)


def test_evm_errors():
    with pytest.raises(ValueError):
        compute_evm(np.ones(10), np.ones(10))
    with pytest.raises(ValueError):
        compute_evm(np.ones(20), np.zeros(20))
    with pytest.raises(ValueError):
        compute_evm(np.ones(20), np.ones(21))
    with pytest.raises(ValueError):
        EvmReport((-1.0,), 10)


def test_evm_helpers():
    assert evm_db(10.0) == pytest.approx(-20.0)
    assert meets_limit(12.5, "16QAM") and not meets_limit(12.6, "16QAM")
    assert meets_limit(17.0, "QPSK")


# --- configuration --------------------------------------------------------------------------

def test_minimal_file_gives_defaults(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("{}\n")
    cfg = parse_config(p)
    assert cfg == ScenarioConfig()
    assert cfg.waveform.n_symbols == 2000 and cfg.waveform.preamble_length == 64


def test_rolloff_out_of_range(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("waveform:\n  rolloff: 1.5\n")
    with pytest.raises(ConfigError, match="waveform.rolloff"):
        parse_config(p)


def test_sweep_registers_points(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("sweep:\n  - parameter: dither.power_dbm\n    values: [-12, -8, '-4.5', -1]\n")
    cfg = parse_config(p)
    assert len(runner.grid(cfg)) == 4
    assert cfg.sweep[0].values == (-12.0, -8.0, -4.5, -1.0)


@pytest.mark.parametrize("text, key", [
    ("bogus: 1\n", "bogus"),
    ("waveform:\n  bogus: 1\n", "waveform.bogus"),
    ("sweep:\n  - parameter: waveform.nothing\n    values: [1]\n", "waveform.nothing"),
    ("sweep:\n  - parameter: waveform\n    values: [1]\n", "section"),
    ("waveform:\n  n_symbols: many\n", "waveform.n_symbols"),
    ("link:\n  noise: 3\n", "link.noise"),
    ("repeats: 0\n", "repeats"),
    ("- 1\n- 2\n", "mapping"),
    ("a: [1,\n", "YAML"),
])
def test_config_errors_name_the_key(tmp_path, text, key):
    p = tmp_path / "c.yaml"
    p.write_text(text)
    with pytest.raises(ConfigError, match=key):
        parse_config(p)


def test_missing_file():
    with pytest.raises(ConfigError):
        parse_config("/nonexistent/config.yaml")


def test_overrides_and_fingerprint():
    a = ScenarioConfig()
    b = a.with_overrides({"waveform.symbol_rate": "20e6"})
    assert b.waveform.symbol_rate == 20e6
    assert a.fingerprint() != b.fingerprint()
    assert a.fingerprint() == ScenarioConfig().fingerprint()
    assert a.fingerprint(1) != a.fingerprint(2)
    with pytest.raises(ConfigError):
        a.with_overrides({"waveform.speed": 1})


# --- seeding and emission -------------------------------------------------------------------

def test_point_seed_is_stable():
    # frozen from an independent sha256 evaluation
    import hashlib
    want = int.from_bytes(hashlib.sha256(b"7:dither-sweep:3:1").digest()[:8], "big")
    assert runner.point_seed(7, "dither-sweep", 3, 1) == want
    assert runner.point_seed(7, "dither-sweep", 3, 1) != runner.point_seed(7, "dither-sweep", 3, 2)


@settings(max_examples=30)
@given(st.integers(0, 2**64 - 1), st.integers(0, 1000), st.integers(0, 50))
def test_point_seed_range(master, i, r):
    assert 0 <= runner.point_seed(master, "x", i, r) < 2**64


def _fake_result(n_ue=2, repeats=2):
    res = []
    for p, v in enumerate([1.0, 2.0]):
        for r in range(repeats):
            res.append(PointResult(p, r, 100 * p + r, (v,), EvmReport(tuple(1.0 + r + k for k in range(n_ue)), 100,
                                                                     extras={"x": 0.5})))
    return SweepResult("demo", ("link.sir_db",), tuple(res))


def test_csv_columns_and_std():
    text = runner.csv_text(_fake_result())
    lines = text.splitlines()
    assert lines[0] == "link.sir_db,repeat,seed,evm_ue1,evm_ue2,x,std_ue1,std_ue2"
    assert len(lines) == 5
    row = lines[1].split(",")
    assert float(row[-1]) == pytest.approx(math.sqrt(0.5))


def test_empty_sweep_gives_header_only():
    empty = SweepResult("demo", ("link.sir_db",), ())
    assert runner.csv_text(empty, ScenarioConfig(U=2)) == "link.sir_db,repeat,seed,evm_ue1,evm_ue2,std_ue1,std_ue2\n"


def test_emit_results(tmp_path):
    cfg = config_from_dict({"U": 2})
    res = _fake_result()
    res = SweepResult("downlink-p2p", res.axis_names, res.results,
                      annotations={"evm_limit_percent": 12.5})
    files = runner.emit_results(res, tmp_path / "out", cfg, dump_constellations=True)
    assert [f.name for f in files] == ["downlink-p2p.csv", "downlink-p2p.json"]
    summary = json.loads(files[1].read_text())
    assert summary["points"][0]["meets_evm_limit"] == [True, True]


def test_emit_unwritable(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OSError):
        runner.emit_results(_fake_result(), blocker / "sub")


def test_unknown_experiment_lists_names():
    with pytest.raises(KeyError, match="dither-sweep"):
        get_experiment("fig99")


def test_registered_experiments():
    assert set(EXPERIMENTS) == {"dither-sweep", "dynamic-range", "bandwidth", "sampling-rate",
                                "inband-interference", "oob-interference", "reciprocity-compare", "calibrate",
                                "dmimo-downlink", "dmimo-uplink", "downlink-p2p"}


# --- execution ---------------------------------------------------------------------------

def test_run_is_deterministic_and_repeats(tmp_path):
    cfg = config_from_dict({**SMALL, "repeats": 2, "master_seed": 5,
                            "sweep": [{"parameter": "link.input_power_dbm", "values": [-40, -30]}]},
                           runner.resolve_config(get_experiment("downlink-p2p")))
    a = runner.run_experiment("downlink-p2p", cfg)
    b = runner.run_experiment("downlink-p2p", cfg)
    assert len(a.results) == 4
    assert runner.csv_text(a, cfg) == runner.csv_text(b, cfg)
    c = runner.run_experiment("downlink-p2p", cfg, workers=2)
    assert runner.csv_text(a, cfg) == runner.csv_text(c, cfg)


def test_dither_below_symbol_rate_is_worse():
    base = config_from_dict({"waveform": {"n_symbols": 500}})
    low = pl.uplink_p2p(base.with_overrides({"dither.frequency": 2e6}), 3).evm[0]
    good = pl.uplink_p2p(base.with_overrides({"dither.frequency": 17e6}), 3).evm[0]
    assert low > 1.5 * good


# --- CLI -----------------------------------------------------------------------------------

def test_cli_list(capsys):
    assert cli.main(["list"]) == 0
    out = capsys.readouterr().out
    assert all(name in out for name in EXPERIMENTS)


def test_cli_run(tmp_path, capsys):
    conf = tmp_path / "c.yaml"
    conf.write_text("waveform:\n  n_symbols: 200\n")
    assert cli.main(["run", "downlink-p2p", "--config", str(conf), "--seed", "9", "--out", str(tmp_path / "o"),
                     "--constellations"]) == 0
    first = (tmp_path / "o" / "downlink-p2p.csv").read_text()
    assert first.startswith("repeat,seed,evm_ue1,std_ue1")
    assert list((tmp_path / "o" / "constellations").iterdir())
    assert cli.main(["run", "downlink-p2p", "--config", str(conf), "--seed", "9", "--out", str(tmp_path / "p")]) == 0
    assert (tmp_path / "p" / "downlink-p2p.csv").read_text() == first


@pytest.mark.parametrize("argv", [
    ["run", "nope", "--out", "x"],
    ["run", "downlink-p2p", "--config", "/nonexistent.yaml", "--out", "x"],
])
def test_cli_errors(argv, capsys):
    assert cli.main(argv) == 2
    assert "rofsim: error:" in capsys.readouterr().err


def test_cli_bad_seed():
    with pytest.raises(SystemExit) as e:
        cli.main(["run", "downlink-p2p", "--seed", "-1", "--out", "x"])
    assert e.value.code == 2
