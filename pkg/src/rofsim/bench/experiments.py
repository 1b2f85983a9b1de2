"""Registered experiments: default settings, sweep grid and per-point function."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from .config import ScenarioConfig
from .metrics import EvmReport
from .. import calibration as cal
from . import pipelines as pl


@dataclass(frozen=True)
class Experiment:
    name: str
    anchor: str  # what the experiment reproduces
    point: Callable[[ScenarioConfig, int], EvmReport]
    defaults: dict = field(default_factory=dict)
    # measured hardware figures shown next to simulated results, never used as targets
    reference: dict = field(default_factory=dict)


def _sweep(*axes) -> list:
    return [{"parameter": p, "values": list(v)} for p, v in axes]


MBD = 1e6


def _bandwidth_point(cfg: ScenarioConfig, seed: int) -> EvmReport:
    r = pl.uplink_p2p(cfg, seed, taps=(10,))
    ofdm = pl.uplink_ofdm(cfg, seed)
    extras = dict(r.extras, evm_ofdm=ofdm.evm[0])
    return EvmReport(r.evm, r.n_symbols, scheme=r.scheme, extras=extras, constellations=r.constellations)


def _inband_point(cfg: ScenarioConfig, seed: int) -> EvmReport:
    r = pl.uplink_p2p(cfg, seed)
    ideal = cfg.with_overrides({"link.quantize": False, "link.noise": False})
    ref = pl.uplink_p2p(ideal, seed)
    return EvmReport(r.evm, r.n_symbols, scheme=r.scheme, extras={"evm_ref": ref.evm[0]},
                     constellations=r.constellations)


def _calibrate_point(cfg: ScenarioConfig, seed: int) -> EvmReport:
    state = pl.dmimo_uplink(cfg, seed)
    Y = pl.calibration_sounding(cfg, seed, state)
    cm = cal.estimate_c(Y, cfg.calibration.tolerance, cfg.calibration.max_iterations)
    q = cal.calibration_quality(pl.effective_calibration(cfg, state), cm.c)
    extras = dict(q, iterations=cm.iterations)
    return EvmReport(state.uplink_evm, cfg.waveform.n_symbols, scheme=cfg.waveform.scheme, extras=extras)


_TAGS = {"downlink": "pdl", "uplink": "pul", "calibrated": "cal"}


def _dmimo_downlink_point(cfg: ScenarioConfig, seed: int) -> EvmReport:
    out = pl.dmimo_round(cfg, seed, ("downlink", "uplink", "calibrated"))
    primary = cfg.calibration.precoder
    extras = {}
    for kind, tag in _TAGS.items():
        for u, e in enumerate(out[kind][0]):
            extras[f"evm_{tag}_ue{u + 1}"] = e
    extras.update(out["calibration"])
    return EvmReport(out[primary][0], cfg.waveform.n_symbols, scheme=cfg.waveform.scheme, extras=extras,
                     constellations=out[primary][1])


def _dmimo_uplink_point(cfg: ScenarioConfig, seed: int) -> EvmReport:
    st = pl.dmimo_uplink(cfg, seed)
    return EvmReport(st.uplink_evm, cfg.waveform.n_symbols, scheme=cfg.waveform.scheme,
                     constellations=st.uplink_symbols)


EXPERIMENTS = {e.name: e for e in [
    Experiment(
        "dither-sweep", "EVM over dither frequency and power (heat map)", pl.uplink_p2p,
        {"sweep": _sweep(("dither.frequency", [2e6, 5e6, 10e6, 17e6, 25e6, 40e6]),
                         ("dither.power_dbm", [-12.0, -8.0, -4.5, -1.0, 2.0]))},
        {"measured_minimum_evm_percent": 4.5}),
    Experiment(
        "dynamic-range", "EVM versus input power with the AGC holding the RF level", pl.uplink_p2p,
        {"repeats": 10, "sweep": _sweep(("link.input_power_dbm", [float(p) for p in range(-70, -5, 5)]))},
        {"simulated_evm_percent": 2.7, "measured_evm_percent": 4.5}),
    Experiment(
        "bandwidth", "EVM versus symbol rate: single carrier with 1 and 10 taps, and OFDM", _bandwidth_point,
        {"dither": {"track_symbol_rate": True}, "frontend": {"bpf_enabled": False},
         "sweep": _sweep(("waveform.symbol_rate", [r * MBD for r in range(10, 100, 10)]))}),
    Experiment(
        "sampling-rate", "EVM over symbol rate and fronthaul sampling rate", pl.uplink_p2p,
        {"dither": {"track_symbol_rate": True}, "frontend": {"bpf_enabled": False},
         "sweep": _sweep(("waveform.symbol_rate", [10 * MBD, 30 * MBD, 50 * MBD, 70 * MBD, 100 * MBD]),
                         ("fronthaul.sample_rate", [10e9, 15e9, 20e9]))}),
    Experiment(
        "inband-interference", "co-channel interference: 1-bit EVM against the unquantized curve",
        _inband_point, {"sweep": _sweep(("link.sir_db", [0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0]))}),
    Experiment(
        "oob-interference", "two 4 MBd signals 5 MHz apart sharing one RRH", pl.uplink_two_carriers,
        {"waveform": {"symbol_rate": 4e6}, "dither": {"frequency": 12e6, "power_dbm": -6.0},
         "link": {"desired_offset": -2.5e6, "interferer_offset": 2.5e6},
         "sweep": _sweep(("link.sir_db", [0.0, 5.0, 10.0, 15.0]))}),
    Experiment(
        "reciprocity-compare", "uplink versus downlink channel phase per RRH, before and after calibration",
        pl.baseband_reciprocity, {"B": 3, "U": 2, "repeats": 10}),
    Experiment(
        "calibrate", "over-the-air calibration through the full RRH chains", _calibrate_point,
        {"B": 3, "U": 2}),
    Experiment(
        "dmimo-downlink", "distributed MIMO downlink with genie, uplink and calibrated precoders",
        _dmimo_downlink_point, {"B": 3, "U": 2}, {"measured_evm_percent": [6.4, 10.9]}),
    Experiment(
        "dmimo-uplink", "distributed MIMO uplink with ZF combining", _dmimo_uplink_point, {"B": 3, "U": 2}),
    Experiment(
        "downlink-p2p", "sigma-delta downlink through one RRH", pl.downlink_p2p, {},
        {"measured_evm_percent": 3.3}),
]}


def get_experiment(name: str) -> Experiment:
    try:
        return EXPERIMENTS[name]
    except KeyError:
        raise KeyError(f"unknown experiment {name!r}; registered: {', '.join(EXPERIMENTS)}") from None
