"""Remote radio head: uplink analog chain, dither path and 1-bit fronthaul.

Voltages are referenced to 50 ohms. The dither is specified as generated at the
CU: a triangle in volts, encoded directly (encoder full scale is 1 V) and
reconstructed at the RRH with unit swing before the IF amplifier. The lumped
receiver noise is injected at the comparator plane, after the AGC and the RF
amplifier.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps
from scipy.special import erf

from . import sigma_delta as sd
from .sigcore import (BinaryStream, FilterSpec, PassbandSignal, SignalError, apply_filter,
                      db_to_amplitude, dbm_to_vrms, dbm_to_watts, design_fir, watts_to_dbm)

BOLTZMANN_DBM_HZ = -174.0  # kT at 290 K

# fronthaul levels are +-1 V, so encoder full scale maps to 1 V
FRONTHAUL_SWING = 1.0

NOISE_REFERENCE_BW = 100e6


@dataclass(frozen=True)
class DitherConfig:
    """Triangular dither as generated at the CU, before the IF amplifier."""

    frequency: float = 17e6
    power_dbm: float = -4.5
    shape: str = "triangular"
    sdm_order: int = 2
    phase: float = 0.0  # fraction of a period

    def __post_init__(self):
        if self.shape != "triangular":
            raise ValueError(f"unsupported dither shape {self.shape!r}")
        if not self.frequency > 0:
            raise ValueError("dither frequency must be positive")

    @property
    def rms(self) -> float:
        return float(dbm_to_vrms(self.power_dbm))

    @property
    def amplitude(self) -> float:
        return math.sqrt(3.0) * self.rms


def default_bpf() -> FilterSpec:
    return FilterSpec.bandpass(2.3e9, 2.4e9, 20e6, stopband_db=50.0)


def default_lpf() -> FilterSpec:
    return FilterSpec.lowpass(180e6, 60e6, stopband_db=50.0)


@dataclass(frozen=True)
class FrontendConfig:
    """Receive chain parameters.

    ``pre_agc_gain`` is the LNA gain less passive losses ahead of the VGA; it
    places the AGC's regulation range on the antenna-port power axis.
    ``rf_amp_gain`` lifts the AGC output to the comparator plane. The lumped
    noise has ``equivalent_input_noise`` dBm per 100 MHz at the comparator plane
    and occupies ``noise_bandwidth`` around the carrier.
    """

    bpf: FilterSpec = field(default_factory=default_bpf)
    lpf: FilterSpec = field(default_factory=default_lpf)
    lna_gain: float = 24.0
    lna_nf: float = 1.5
    passive_loss: float = 7.5
    vga_nf: float = 12.5
    rf_amp_gain: float = 39.5
    rf_amp_nf: float = 2.7
    if_gain: float = 15.0
    agc_target: float = -30.0
    agc_gain_range: tuple = (-30.0, 15.0)
    agc_hold: float = 1e-3
    equivalent_input_noise: float = -26.6
    noise_bandwidth: float = 100e6
    pa_gain: float = 35.8

    def __post_init__(self):
        lo, hi = self.agc_gain_range
        if not lo < hi:
            raise ValueError("AGC gain range is empty")
        for name in ("lna_nf", "vga_nf", "rf_amp_nf"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not self.agc_hold > 0:
            raise ValueError("agc_hold must be positive")

    @property
    def pre_agc_gain(self) -> float:
        return self.lna_gain - self.passive_loss

    @property
    def noise_power_dbm(self) -> float:
        """Total lumped noise power over ``noise_bandwidth``."""
        return self.equivalent_input_noise + 10 * math.log10(self.noise_bandwidth / NOISE_REFERENCE_BW)


@dataclass(frozen=True)
class FronthaulImpairment:
    """Band-limited optical link seen by the CU sampler."""

    enabled: bool = False
    rise_fall_time: float = 54e-12
    sampling_jitter_rms: float = 0.0
    oversampling: int = 4

    def __post_init__(self):
        if self.enabled and self.oversampling < 4:
            raise ValueError("internal oversampling M must be >= 4 when the impairment is enabled")
        if self.rise_fall_time <= 0 or self.sampling_jitter_rms < 0:
            raise ValueError("rise time must be positive and jitter non-negative")


@dataclass
class AgcState:
    """VGA setting; ``frozen`` keeps the gain fixed across calls."""

    gain_db: float = 0.0
    measured_dbm: float = float("nan")
    hold_remaining: float = 0.0
    frozen: bool = False
    trace: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# dither path
# ---------------------------------------------------------------------------

def triangle(n: int, rate: float, cfg: DitherConfig) -> np.ndarray:
    """Exact triangle samples with peak ``cfg.amplitude`` (zero mean)."""
    t = (np.arange(n) * (cfg.frequency / rate) + cfg.phase) % 1.0
    return cfg.amplitude * (4.0 * np.abs(t - 0.5) - 1.0)


def dither_encoder(fs: float, order: int = 2, lpf_edge: float = 180e6) -> sd.NtfSynthesis:
    """Lowpass loop used to carry the dither over the fronthaul."""
    return _dither_encoder(float(fs), int(order), float(lpf_edge))


_ENCODERS: dict = {}


def _dither_encoder(fs, order, edge):
    key = (fs, order, edge)
    if key not in _ENCODERS:
        _ENCODERS[key] = sd.synthesize_ntf(sd.SdmDesign(order, 0.0, sd.osr(fs, edge), 1.5, fs))
    return _ENCODERS[key]


def generate_dither(cfg: DitherConfig, fs: float, duration: float) -> tuple[PassbandSignal, BinaryStream]:
    """Triangle dither and its 1-bit lowpass sigma-delta encoding at ``fs``."""
    if not cfg.frequency < fs / 4:
        raise SignalError(f"dither frequency {cfg.frequency:g} Hz must be below fs/4")
    if cfg.amplitude > FRONTHAUL_SWING:
        raise SignalError(f"dither peak {cfg.amplitude:.3f} V exceeds encoder full scale "
                          f"{FRONTHAUL_SWING:g} V")
    n = int(round(duration * fs))
    tri = triangle(n, fs, cfg)
    stream, _ = sd.sdm_encode(tri / FRONTHAUL_SWING, dither_encoder(fs, cfg.sdm_order))
    return PassbandSignal(tri, fs), BinaryStream(stream.samples, fs)


def reconstruct_dither(encoded: BinaryStream, lpf: FilterSpec, if_gain: float,
                       swing: float = FRONTHAUL_SWING) -> PassbandSignal:
    """Lowpass the received dither stream and apply the IF amplifier (delay compensated)."""
    fir = design_fir(lpf, encoded.rate)
    y = apply_filter(encoded.as_passband(swing), fir, compensate_delay=True)
    return y.replace(y.samples * db_to_amplitude(if_gain))


# ---------------------------------------------------------------------------
# analog stages
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseBudget:
    noise_figure_db: float
    gain_db: float
    input_dbm: float
    output_dbm: float


def friis_cascade(stages, bandwidth: float) -> NoiseBudget:
    """Cascade noise figure and noise power over ``bandwidth``; ``stages`` is [(gain dB, NF dB), ...]."""
    stages = list(stages)
    if not stages:
        raise ValueError("at least one stage is required")
    f_total, g_lin = 0.0, 1.0
    for k, (g_db, nf_db) in enumerate(stages):
        f = 10 ** (nf_db / 10)
        f_total = f if k == 0 else f_total + (f - 1) / g_lin
        g_lin *= 10 ** (g_db / 10)
    nf = 10 * np.log10(f_total)
    gain = 10 * np.log10(g_lin)
    n_in = BOLTZMANN_DBM_HZ + 10 * np.log10(bandwidth) + nf
    return NoiseBudget(float(nf), float(gain), float(n_in), float(n_in + gain))


def agc(rf: PassbandSignal, cfg: FrontendConfig, state: AgcState | None = None):
    """Gain-controlled stage; returns (output, gain trace in dB per sample).

    Power is the true RMS over each hold window. A frozen ``state`` applies its
    stored gain unchanged.
    """
    st = state if state is not None else AgcState()
    lo, hi = cfg.agc_gain_range
    x = rf.samples
    gains = np.empty(x.size)
    win = max(1, int(round(cfg.agc_hold * rf.rate)))
    for start in range(0, x.size, win):
        seg = x[start:start + win]
        if not st.frozen:
            p = np.mean(seg**2)
            st.measured_dbm = float(watts_to_dbm(p / 50.0)) if p > 0 else -np.inf
            st.gain_db = float(np.clip(cfg.agc_target - st.measured_dbm, lo, hi))
            st.trace.append(st.gain_db)
        gains[start:start + win] = st.gain_db
    st.hold_remaining = cfg.agc_hold - (x.size % win) / rf.rate if x.size else cfg.agc_hold
    return rf.replace(x * 10 ** (gains / 20)), gains


def comparator_encode(rf: PassbandSignal, dither: PassbandSignal) -> BinaryStream:
    """Ideal comparator, non-inverting input ``rf``; ties resolve to +1."""
    if abs(rf.rate - dither.rate) > 1e-9 * rf.rate:
        raise SignalError(f"comparator rate mismatch: {rf.rate:g} vs {dither.rate:g}")
    if len(rf) != len(dither):
        raise SignalError(f"comparator length mismatch: {len(rf)} vs {len(dither)}")
    out = np.where(rf.samples >= dither.samples, 1, -1).astype(np.int8)
    return BinaryStream(out, rf.rate)


def edge_kernel(rise_time: float, rate: float) -> np.ndarray:
    """Unit-area Gaussian impulse response whose step response rises 10-90 % in ``rise_time``."""
    sigma = rise_time / 2.5631 * rate  # 10-90 % of a Gaussian edge is 2.5631 sigma
    half = max(1, int(math.ceil(5 * sigma)))
    k = np.arange(-half, half + 1)
    # integrate the Gaussian over each sample cell so narrow kernels keep unit area
    edges = (np.append(k, half + 1) - 0.5) / (sigma * math.sqrt(2))
    h = np.diff(0.5 * erf(edges))
    return h / h.sum()


def fronthaul_transport(stream: BinaryStream, imp: FronthaulImpairment, fs_cu: float,
                        rng: np.random.Generator | None = None) -> BinaryStream:
    """Carry a binary waveform to the CU sampler.

    The input may be at ``fs_cu`` (held for M fine samples) or already at
    M*fs_cu. The CU samples at the centre of each ``fs_cu`` cell, thresholds at
    zero and resolves ties to +1.
    """
    M = imp.oversampling
    if not imp.enabled:
        if abs(stream.rate - fs_cu) > 1e-9 * fs_cu:
            if abs(stream.rate - M * fs_cu) > 1e-9 * fs_cu:
                raise SignalError("stream rate must be fs_cu or M*fs_cu")
            return BinaryStream(stream.samples[M // 2::M], fs_cu)
        return stream
    if abs(stream.rate - fs_cu) <= 1e-9 * fs_cu:
        fine = np.repeat(stream.samples.astype(np.float64), M)
    elif abs(stream.rate - M * fs_cu) <= 1e-9 * fs_cu:
        fine = stream.samples.astype(np.float64)
    else:
        raise SignalError(f"stream rate {stream.rate:g} is neither fs_cu nor {M}*fs_cu")
    fine_rate = M * fs_cu
    h = edge_kernel(imp.rise_fall_time, fine_rate)
    half = h.size // 2
    # settled levels outside the record
    padded = np.concatenate([np.full(half, fine[0] if fine.size else 0.0), fine,
                             np.full(half, fine[-1] if fine.size else 0.0)])
    v = np.convolve(padded, h, mode="valid")
    n_out = fine.size // M
    t = np.arange(n_out) * M + (M - 1) / 2.0
    if imp.sampling_jitter_rms > 0:
        gen = rng if rng is not None else np.random.default_rng(0)
        t = t + gen.normal(0.0, imp.sampling_jitter_rms * fine_rate, n_out)
        t = np.clip(t, 0, fine.size - 1)
    vs = np.interp(t, np.arange(fine.size), v)
    return BinaryStream(np.where(vs >= 0, 1, -1).astype(np.int8), fs_cu)


def band_limited_noise(n: int, rate: float, power_dbm: float, bandwidth: float, center: float,
                       rng: np.random.Generator) -> np.ndarray:
    """Real Gaussian noise with ``power_dbm`` spread flat over ``bandwidth`` around ``center``."""
    if n == 0:
        return np.zeros(0)
    spec = rng.normal(size=n // 2 + 1) + 1j * rng.normal(size=n // 2 + 1)
    f = np.fft.rfftfreq(n, 1 / rate)
    mask = np.abs(f - center) <= bandwidth / 2
    if not mask.any():
        raise SignalError("noise band contains no frequency bins")
    spec[~mask] = 0.0
    x = np.fft.irfft(spec, n)
    return x * math.sqrt(dbm_to_watts(power_dbm) * 50.0 / np.mean(x**2))


# ---------------------------------------------------------------------------
# full receive chain
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UplinkOptions:
    noise: bool = True
    quantize: bool = True
    dither: bool = True
    bpf: bool = True
    center_frequency: float = 2.35e9


def comparator_plane(rf_at_antenna: PassbandSignal, frontend: FrontendConfig,
                     rng: np.random.Generator, options: UplinkOptions = UplinkOptions(),
                     agc_state: AgcState | None = None) -> PassbandSignal:
    """Analog RF at the comparator: BPF, LNA, AGC, RF amplifier and lumped noise."""
    x = rf_at_antenna
    if options.bpf:
        x = apply_filter(x, design_fir(frontend.bpf, x.rate), compensate_delay=True)
    x = x.replace(x.samples * db_to_amplitude(frontend.pre_agc_gain))
    x, _ = agc(x, frontend, agc_state)
    y = x.samples * db_to_amplitude(frontend.rf_amp_gain)
    if options.noise:
        y = y + band_limited_noise(y.size, x.rate, frontend.noise_power_dbm,
                                   frontend.noise_bandwidth, options.center_frequency, rng)
    return x.replace(y)


def uplink_rrh_chain(rf_at_antenna: PassbandSignal, frontend: FrontendConfig, dither: DitherConfig,
                     imp: FronthaulImpairment = FronthaulImpairment(), seed=0,
                     options: UplinkOptions = UplinkOptions(), agc_state: AgcState | None = None):
    """Antenna port to CU samples.

    Returns a :class:`BinaryStream` at the input rate, or the analog comparator
    input as a :class:`PassbandSignal` when ``options.quantize`` is False.
    """
    fs = rf_at_antenna.rate
    if len(rf_at_antenna) == 0:
        return BinaryStream(np.zeros(0, np.int8), fs) if options.quantize else rf_at_antenna
    rng = np.random.default_rng(seed)
    analog = comparator_plane(rf_at_antenna, frontend, rng, options, agc_state)
    if not options.quantize:
        return analog
    n = len(analog)
    if options.dither:
        _, enc = generate_dither(dither, fs, n / fs)
        d = reconstruct_dither(enc, frontend.lpf, frontend.if_gain).samples
    else:
        d = np.zeros(n)
    if imp.enabled:
        M = imp.oversampling
        rf_fine = sps.resample_poly(analog.samples, M, 1)
        d_fine = sps.resample_poly(d, M, 1)
        bits = comparator_encode(PassbandSignal(rf_fine, M * fs), PassbandSignal(d_fine, M * fs))
    else:
        bits = comparator_encode(analog, PassbandSignal(d, fs))
    return fronthaul_transport(bits, imp, fs, rng)
