"""Scenario configuration: YAML file -> validated, immutable ScenarioConfig.

Layering, lowest first: built-in defaults, experiment defaults, the user's
file, then per-point sweep overrides. Every section rejects unknown keys.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, get_type_hints

import yaml

from ..modem import BITS_PER_SYMBOL


class ConfigError(ValueError):
    pass


def _require(cond: bool, key: str, constraint: str, value):
    if not cond:
        raise ConfigError(f"{key}: {constraint} (got {value!r})")


@dataclass(frozen=True)
class WaveformSection:
    kind: str = "sc"
    scheme: str = "16QAM"
    symbol_rate: float = 10e6
    rolloff: float = 0.2
    samples_per_symbol: int = 8
    span: int = 16
    n_symbols: int = 2000
    preamble_length: int = 64
    preamble_root: int = 25

    def __post_init__(self):
        _require(self.kind in ("sc", "ofdm"), "waveform.kind", "must be 'sc' or 'ofdm'", self.kind)
        _require(self.scheme in BITS_PER_SYMBOL, "waveform.scheme", f"must be one of {sorted(BITS_PER_SYMBOL)}",
                 self.scheme)
        _require(self.symbol_rate > 0, "waveform.symbol_rate", "must be > 0", self.symbol_rate)
        _require(0 <= self.rolloff <= 1, "waveform.rolloff", "must be in [0, 1]", self.rolloff)
        _require(self.samples_per_symbol >= 2, "waveform.samples_per_symbol", "must be >= 2",
                 self.samples_per_symbol)
        _require(self.n_symbols >= 16, "waveform.n_symbols", "must be >= 16", self.n_symbols)
        _require(self.preamble_length >= 8, "waveform.preamble_length", "must be >= 8", self.preamble_length)
        _require(math.gcd(self.preamble_root, self.preamble_length) == 1, "waveform.preamble_root",
                 "must be coprime with preamble_length", self.preamble_root)


@dataclass(frozen=True)
class OfdmSection:
    subcarrier_spacing: float = 60e3
    fft_size: int = 2048
    cyclic_prefix_length: int = 144
    occupied_subcarriers: int = 0  # 0: match the single-carrier bandwidth R_s (1 + alpha)
    delay_window: int = 20
    pilot_root: int = 25

    def __post_init__(self):
        _require(self.subcarrier_spacing > 0, "ofdm.subcarrier_spacing", "must be > 0", self.subcarrier_spacing)
        _require(self.fft_size >= 16, "ofdm.fft_size", "must be >= 16", self.fft_size)
        _require(0 <= self.cyclic_prefix_length < self.fft_size, "ofdm.cyclic_prefix_length",
                 "must be in [0, fft_size)", self.cyclic_prefix_length)
        _require(0 <= self.occupied_subcarriers < self.fft_size, "ofdm.occupied_subcarriers",
                 "must be in [0, fft_size)", self.occupied_subcarriers)
        _require(1 <= self.delay_window <= self.fft_size, "ofdm.delay_window", "must be in [1, fft_size]",
                 self.delay_window)


@dataclass(frozen=True)
class SdmSection:
    order: int = 4
    max_ntf_gain: float = 1.5
    drive_dbfs: float = -12.0
    stability_limit: float = 10.0

    def __post_init__(self):
        _require(self.order in (2, 4, 6, 8), "sdm.order", "bandpass order must be 2, 4, 6 or 8", self.order)
        _require(self.max_ntf_gain > 1, "sdm.max_ntf_gain", "must be > 1", self.max_ntf_gain)
        _require(self.drive_dbfs < 0, "sdm.drive_dbfs", "must be < 0", self.drive_dbfs)


@dataclass(frozen=True)
class FrontendSection:
    lna_gain: float = 24.0
    lna_nf: float = 1.5
    passive_loss: float = 7.5
    vga_nf: float = 12.5
    rf_amp_gain: float = 39.5
    rf_amp_nf: float = 2.7
    if_gain: float = 15.0
    agc_target: float = -30.0
    agc_gain_min: float = -30.0
    agc_gain_max: float = 15.0
    agc_hold: float = 1e-3
    equivalent_input_noise: float = -26.6
    noise_bandwidth: float = 100e6
    pa_gain: float = 35.8
    bpf_low: float = 2.3e9
    bpf_high: float = 2.4e9
    bpf_transition: float = 20e6
    bpf_enabled: bool = True
    lpf_cutoff: float = 180e6
    lpf_transition: float = 60e6
    stopband_db: float = 50.0

    def __post_init__(self):
        _require(self.agc_gain_min < self.agc_gain_max, "frontend.agc_gain_min",
                 "must be below agc_gain_max", self.agc_gain_min)
        for k in ("lna_nf", "vga_nf", "rf_amp_nf"):
            _require(getattr(self, k) >= 0, f"frontend.{k}", "must be >= 0", getattr(self, k))
        _require(0 < self.bpf_low < self.bpf_high, "frontend.bpf_low", "must be in (0, bpf_high)", self.bpf_low)
        _require(self.noise_bandwidth > 0, "frontend.noise_bandwidth", "must be > 0", self.noise_bandwidth)
        _require(self.agc_hold > 0, "frontend.agc_hold", "must be > 0", self.agc_hold)


@dataclass(frozen=True)
class DitherSection:
    frequency: float = 17e6
    power_dbm: float = -4.5
    enabled: bool = True
    sdm_order: int = 2
    track_symbol_rate: bool = False  # pick the frequency from the per-rate table
    table: str = "simulated"  # which per-rate table: "simulated" or "hardware"

    def __post_init__(self):
        _require(self.frequency > 0, "dither.frequency", "must be > 0", self.frequency)
        _require(self.table in ("simulated", "hardware"), "dither.table", "must be 'simulated' or 'hardware'",
                 self.table)
        _require(self.sdm_order in (1, 2, 3), "dither.sdm_order", "must be 1, 2 or 3", self.sdm_order)


@dataclass(frozen=True)
class FronthaulSection:
    sample_rate: float = 10e9
    carrier: float = 2.35e9
    impairment: bool = False
    rise_fall_time: float = 54e-12
    jitter_rms: float = 0.0
    oversampling: int = 4

    def __post_init__(self):
        _require(self.sample_rate > 2 * self.carrier, "fronthaul.sample_rate", "must exceed twice the carrier",
                 self.sample_rate)
        _require(self.oversampling >= 4 or not self.impairment, "fronthaul.oversampling",
                 "must be >= 4 with the impairment enabled", self.oversampling)
        _require(self.rise_fall_time > 0, "fronthaul.rise_fall_time", "must be > 0", self.rise_fall_time)
        _require(self.jitter_rms >= 0, "fronthaul.jitter_rms", "must be >= 0", self.jitter_rms)


@dataclass(frozen=True)
class LinkSection:
    input_power_dbm: float = -30.0
    sir_db: float = math.inf
    interferer_offset: float = 0.0  # Hz from the carrier
    desired_offset: float = 0.0
    equalizer_taps: int = 1
    noise: bool = True
    quantize: bool = True
    ue_noise_dbm: float = -87.0  # per 100 MHz at the UE receiver

    def __post_init__(self):
        _require(self.equalizer_taps >= 1, "link.equalizer_taps", "must be >= 1", self.equalizer_taps)
        _require(not math.isnan(self.sir_db), "link.sir_db", "must be a number or inf", self.sir_db)


@dataclass(frozen=True)
class ChannelSection:
    model: str = "los"
    gains: str = "random"
    gain_spread_db: float = 3.0
    distance: float = 2.0
    spacing: float = 1.0
    seed: int = -1  # -1: derive from the point seed

    def __post_init__(self):
        _require(self.model in ("los", "rayleigh"), "channel.model", "must be 'los' or 'rayleigh'", self.model)
        _require(self.gains in ("random", "identity"), "channel.gains", "must be 'random' or 'identity'",
                 self.gains)
        _require(self.distance > 0 and self.spacing > 0, "channel.distance", "distances must be > 0",
                 (self.distance, self.spacing))


@dataclass(frozen=True)
class CalibrationSection:
    sounding_snr_db: float = math.inf
    sounding_backoff_db: float = 26.0
    tolerance: float = 1e-10
    max_iterations: int = 10_000
    precoder: str = "calibrated"

    def __post_init__(self):
        _require(self.precoder in ("downlink", "uplink", "calibrated"), "calibration.precoder",
                 "must be 'downlink', 'uplink' or 'calibrated'", self.precoder)
        _require(self.max_iterations >= 1, "calibration.max_iterations", "must be >= 1", self.max_iterations)


@dataclass(frozen=True)
class SweepAxis:
    parameter: str
    values: tuple

    def __post_init__(self):
        for v in self.values:
            if isinstance(v, float) and math.isnan(v):
                raise ConfigError(f"sweep.{self.parameter}: values must not be NaN")


SECTIONS = {
    "waveform": WaveformSection, "ofdm": OfdmSection, "sdm": SdmSection, "frontend": FrontendSection,
    "dither": DitherSection, "fronthaul": FronthaulSection, "link": LinkSection, "channel": ChannelSection,
    "calibration": CalibrationSection,
}


@dataclass(frozen=True)
class ScenarioConfig:
    B: int = 1
    U: int = 1
    waveform: WaveformSection = field(default_factory=WaveformSection)
    ofdm: OfdmSection = field(default_factory=OfdmSection)
    sdm: SdmSection = field(default_factory=SdmSection)
    frontend: FrontendSection = field(default_factory=FrontendSection)
    dither: DitherSection = field(default_factory=DitherSection)
    fronthaul: FronthaulSection = field(default_factory=FronthaulSection)
    link: LinkSection = field(default_factory=LinkSection)
    channel: ChannelSection = field(default_factory=ChannelSection)
    calibration: CalibrationSection = field(default_factory=CalibrationSection)
    sweep: tuple = ()
    repeats: int = 1
    master_seed: int = 0
    output_dir: str = ""
    constellation_dump: bool = False

    def __post_init__(self):
        _require(self.B >= 1, "B", "must be >= 1", self.B)
        _require(self.U >= 1, "U", "must be >= 1", self.U)
        _require(self.repeats >= 1, "repeats", "must be >= 1", self.repeats)
        _require(0 <= self.master_seed < 2**64, "master_seed", "must be a u64", self.master_seed)
        for ax in self.sweep:
            _check_path(ax.parameter)

    def get(self, path: str):
        obj = self
        for part in path.split("."):
            obj = getattr(obj, part)
        return obj

    def with_overrides(self, overrides: dict) -> "ScenarioConfig":
        """New config with dotted-path values replaced (validated)."""
        cfg = self
        for path, value in overrides.items():
            cfg = _set(cfg, path.split("."), value, path)
        return cfg

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["sweep"] = [{"parameter": a.parameter, "values": list(a.values)} for a in self.sweep]
        return d

    def fingerprint(self, seed: int | None = None) -> str:
        payload = {"config": jsonable(self.to_dict()), "seed": self.master_seed if seed is None else seed}
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    if isinstance(x, dict):
        return {k: jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    return x


def _check_path(path: str):
    """Validate a dotted sweep path; returns the owning section class."""
    parts = path.split(".")
    cls = ScenarioConfig
    for i, part in enumerate(parts):
        names = {f.name for f in fields(cls)}
        if part not in names:
            raise ConfigError(f"sweep: unknown parameter {path!r}")
        hints = get_type_hints(cls)
        t = hints[part]
        if i < len(parts) - 1:
            if not dataclasses.is_dataclass(t):
                raise ConfigError(f"sweep: {path!r} does not name a scalar setting")
            cls = t
        elif dataclasses.is_dataclass(t):
            raise ConfigError(f"sweep: {path!r} names a section, not a setting")
    return cls


def _coerce(cls, name: str, value, key: str):
    t = get_type_hints(cls)[name]
    if t is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected true/false (got {value!r})")
        return value
    if t is int:
        if isinstance(value, bool):
            raise ConfigError(f"{key}: expected an integer (got {value!r})")
        if isinstance(value, float) and value.is_integer():
            return int(value)
        if isinstance(value, str):
            try:
                f = float(value)
            except ValueError:
                raise ConfigError(f"{key}: expected an integer (got {value!r})") from None
            if f.is_integer():
                return int(f)
        if not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer (got {value!r})")
        return value
    if t is float:
        if isinstance(value, bool):
            raise ConfigError(f"{key}: expected a number (got {value!r})")
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{key}: expected a number (got {value!r})") from None
    if t is str:
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected a string (got {value!r})")
        return value
    return value


def _set(obj, parts, value, key):
    name = parts[0]
    if name not in {f.name for f in fields(obj)}:
        raise ConfigError(f"{key}: unknown setting")
    if len(parts) == 1:
        return dataclasses.replace(obj, **{name: _coerce(type(obj), name, value, key)})
    return dataclasses.replace(obj, **{name: _set(getattr(obj, name), parts[1:], value, key)})


def _section(cls, data: dict, prefix: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix}: expected a mapping")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{prefix}.{unknown[0]}: unknown key (allowed: {', '.join(sorted(known))})")
    kw = {k: _coerce(cls, k, v, f"{prefix}.{k}") for k, v in data.items()}
    return cls(**kw)


def _sweep(data) -> tuple:
    if data is None:
        return ()
    items = data if isinstance(data, list) else [data]
    axes = []
    for i, item in enumerate(items):
        if not isinstance(item, dict) or set(item) - {"parameter", "values"} or "parameter" not in item:
            raise ConfigError(f"sweep[{i}]: expected a mapping with 'parameter' and 'values'")
        vals = item.get("values", [])
        if not isinstance(vals, list):
            raise ConfigError(f"sweep[{i}].values: expected a list")
        path = str(item["parameter"])
        owner = _check_path(path)
        leaf = path.split(".")[-1]
        parsed = [_coerce(owner, leaf, v, f"sweep.{path}") for v in vals]
        axes.append(SweepAxis(path, tuple(parsed)))
    return tuple(axes)


def config_from_dict(data: dict, base: ScenarioConfig | None = None) -> ScenarioConfig:
    """Merge a parsed mapping over ``base`` (defaults when None)."""
    base = base or ScenarioConfig()
    data = dict(data or {})
    top = {f.name for f in fields(ScenarioConfig)}
    unknown = sorted(set(data) - top)
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown key (allowed: {', '.join(sorted(top))})")
    kw: dict[str, Any] = {}
    for name, cls in SECTIONS.items():
        if name in data:
            merged = {**dataclasses.asdict(getattr(base, name)), **(data.pop(name) or {})}
            kw[name] = _section(cls, merged, name)
    if "sweep" in data:
        kw["sweep"] = _sweep(data.pop("sweep"))
    for k, v in data.items():
        kw[k] = _coerce(ScenarioConfig, k, v, k)
    return dataclasses.replace(base, **kw)


def parse_config(path, base: ScenarioConfig | None = None) -> ScenarioConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        data = yaml.safe_load(p.read_text()) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"{p}: not valid YAML: {e}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{p}: top level must be a mapping")
    return config_from_dict(data, base)
