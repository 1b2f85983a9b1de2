"""Signal pipelines shared by the experiments.

Every function takes a validated ScenarioConfig plus an integer seed and is
deterministic in both. Powers at the antenna are in dBm into 50 ohm.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from .. import calibration as cal
from .. import channel as chn
from .. import cu_dsp as cu
from .. import modem as md
from .. import rrh
from .. import sigma_delta as sd
from ..sigcore import (BasebandSignal, FilterSpec, PassbandSignal, apply_filter, db_to_amplitude,
                       dbm_to_watts, design_fir, downconvert, upconvert)
from .config import ScenarioConfig
from .metrics import EvmReport, compute_evm

# Dither frequency that minimized EVM per symbol rate on the hardware (Hz -> Hz).
# The 100 MBd entry is extrapolated from the trend of the others.
HARDWARE_DITHER_TABLE = ((10e6, 16e6), (20e6, 22e6), (30e6, 31e6), (40e6, 37e6), (50e6, 45e6),
                         (60e6, 61e6), (70e6, 69e6), (80e6, 77e6), (90e6, 81e6), (100e6, 90e6))

# The same search run on this simulator (benchmarks/dither_search.py, seeds 101-105,
# 4 MHz steps around the hardware values).
SIMULATED_DITHER_TABLE = ((10e6, 16e6), (20e6, 30e6), (30e6, 35e6), (40e6, 41e6), (50e6, 57e6),
                          (60e6, 65e6), (70e6, 69e6), (80e6, 85e6), (90e6, 89e6), (100e6, 98e6))

GUARD_SYMBOLS = 16


# ---------------------------------------------------------------------------
# config adapters
# ---------------------------------------------------------------------------

def frontend_config(cfg: ScenarioConfig) -> rrh.FrontendConfig:
    f = cfg.frontend
    bpf = FilterSpec.bandpass(f.bpf_low, f.bpf_high, f.bpf_transition, stopband_db=f.stopband_db)
    lpf = FilterSpec.lowpass(f.lpf_cutoff, f.lpf_transition, stopband_db=f.stopband_db)
    return rrh.FrontendConfig(
        bpf=bpf, lpf=lpf, lna_gain=f.lna_gain, lna_nf=f.lna_nf, passive_loss=f.passive_loss,
        vga_nf=f.vga_nf, rf_amp_gain=f.rf_amp_gain, rf_amp_nf=f.rf_amp_nf, if_gain=f.if_gain,
        agc_target=f.agc_target, agc_gain_range=(f.agc_gain_min, f.agc_gain_max), agc_hold=f.agc_hold,
        equivalent_input_noise=f.equivalent_input_noise, noise_bandwidth=f.noise_bandwidth,
        pa_gain=f.pa_gain)


def dither_frequency(cfg: ScenarioConfig, symbol_rate: float | None = None) -> float:
    if not cfg.dither.track_symbol_rate:
        return cfg.dither.frequency
    rs = cfg.waveform.symbol_rate if symbol_rate is None else symbol_rate
    table = SIMULATED_DITHER_TABLE if cfg.dither.table == "simulated" else HARDWARE_DITHER_TABLE
    x, y = zip(*table)
    return float(np.interp(rs, x, y))


def dither_config(cfg: ScenarioConfig, symbol_rate: float | None = None) -> rrh.DitherConfig:
    return rrh.DitherConfig(dither_frequency(cfg, symbol_rate), cfg.dither.power_dbm,
                            sdm_order=cfg.dither.sdm_order)


def impairment(cfg: ScenarioConfig) -> rrh.FronthaulImpairment:
    fh = cfg.fronthaul
    return rrh.FronthaulImpairment(fh.impairment, fh.rise_fall_time, fh.jitter_rms, fh.oversampling)


def uplink_options(cfg: ScenarioConfig) -> rrh.UplinkOptions:
    return rrh.UplinkOptions(noise=cfg.link.noise, quantize=cfg.link.quantize, dither=cfg.dither.enabled,
                             bpf=cfg.frontend.bpf_enabled, center_frequency=cfg.fronthaul.carrier)


def waveform(cfg: ScenarioConfig, symbol_rate: float | None = None) -> md.WaveformConfig:
    w = cfg.waveform
    return md.WaveformConfig(w.scheme, w.symbol_rate if symbol_rate is None else symbol_rate, w.rolloff,
                             w.samples_per_symbol, w.span)


def preamble(cfg: ScenarioConfig) -> np.ndarray:
    return md.zc_preamble(cfg.waveform.preamble_length, cfg.waveform.preamble_root)


def _seed(seed: int, *tags: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, *tags])


def _rng(seed: int, *tags: int) -> np.random.Generator:
    return np.random.default_rng(_seed(seed, *tags))


def _chain_seed(seed: int, *tags: int) -> int:
    return int(_seed(seed, *tags).generate_state(1, np.uint64)[0])


# ---------------------------------------------------------------------------
# single-carrier building blocks
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Burst:
    """Pulse-shaped burst: guard, preamble, data, guard."""

    signal: BasebandSignal
    data: np.ndarray
    preamble: np.ndarray


def sc_burst(wf: md.WaveformConfig, pre: np.ndarray, data: np.ndarray) -> Burst:
    z = np.zeros(GUARD_SYMBOLS, complex)
    bb = md.rrc_modulate(np.concatenate([z, pre, data, z]), wf)
    return Burst(bb, data, pre)


def scale_to_dbm(bb: BasebandSignal, power_dbm: float) -> BasebandSignal:
    """Scale so the passband version (sqrt(2) Re{.}) carries ``power_dbm``."""
    p = np.mean(np.abs(bb.samples) ** 2)
    return bb.replace(bb.samples * math.sqrt(dbm_to_watts(power_dbm) * 50.0 / p))


def receive_filter(wf: md.WaveformConfig) -> FilterSpec:
    w = wf.bandwidth
    return FilterSpec.lowpass(0.6 * w, max(0.8 * w, 10e6))


def sc_receive(rx, wf: md.WaveformConfig, carrier: float, pre, n_data: int, taps: int = 1) -> np.ndarray:
    """Downconvert, matched-filter and synchronize; returns equalized data symbols.

    With ``taps`` > 1 a symbol-spaced LS equalizer is trained on the preamble.
    ``pre`` may be a stack of simultaneous preambles; the first row is the
    wanted one.
    """
    bb = downconvert(rx, carrier, wf.sample_rate, receive_filter(wf))
    stack = np.atleast_2d(pre)
    L = stack.shape[1]
    frame = md.rrc_demodulate(bb, wf, preamble=stack, n_symbols=L + n_data).symbols
    if taps > 1:
        eq = cu.fit_equalizer(frame, stack[0], taps)
        frame = cu.apply_equalizer(frame, eq)
    return frame[L:]


# ---------------------------------------------------------------------------
# uplink point-to-point
# ---------------------------------------------------------------------------

def uplink_sc_capture(cfg: ScenarioConfig, seed: int, symbol_rate: float | None = None):
    """One UE (plus an optional co-channel interferer) through one RRH chain.

    Returns (CU record, waveform, preamble, transmitted data).
    """
    wf = waveform(cfg, symbol_rate)
    fs, fc = cfg.fronthaul.sample_rate, cfg.fronthaul.carrier
    pre = preamble(cfg)
    rng = _rng(seed, 1)
    n = cfg.waveform.n_symbols
    data = md.random_symbols(rng, n, wf.scheme).symbols
    bb = sc_burst(wf, pre, data).signal
    if not math.isinf(cfg.link.sir_db):
        # independent co-channel signal, no preamble of its own
        other = md.random_symbols(rng, n + pre.size, wf.scheme).symbols
        ib = sc_burst(wf, np.zeros(0, complex), other).signal
        ib = ib.replace(np.concatenate([ib.samples, np.zeros(len(bb) - len(ib), complex)]))
        bb = chn.add_interference(bb, ib, cfg.link.sir_db)
    pb = upconvert(scale_to_dbm(bb, cfg.link.input_power_dbm), fc, fs)
    out = rrh.uplink_rrh_chain(pb, frontend_config(cfg), dither_config(cfg, wf.symbol_rate), impairment(cfg),
                               _chain_seed(seed, 2), uplink_options(cfg))
    return out, wf, pre, data


def uplink_p2p(cfg: ScenarioConfig, seed: int, symbol_rate: float | None = None, taps=None) -> EvmReport:
    """Single-carrier uplink EVM; extra equalizer lengths in ``taps`` go to ``extras``."""
    out, wf, pre, data = uplink_sc_capture(cfg, seed, symbol_rate)
    fc = cfg.fronthaul.carrier
    sym = sc_receive(out, wf, fc, pre, data.size, cfg.link.equalizer_taps)
    extras = {}
    for L in taps or ():
        extras[f"evm_taps{L}"] = compute_evm(sc_receive(out, wf, fc, pre, data.size, L), data)
    return EvmReport((compute_evm(sym, data),), data.size, scheme=wf.scheme, extras=extras,
                     constellations=(sym,))


def uplink_two_carriers(cfg: ScenarioConfig, seed: int) -> EvmReport:
    """Two UEs on adjacent carriers sharing one RRH; SIR = P1 / P2."""
    wf = waveform(cfg)
    fs, fc = cfg.fronthaul.sample_rate, cfg.fronthaul.carrier
    offsets = (cfg.link.desired_offset, cfg.link.interferer_offset)
    pre = preamble(cfg)
    rng = _rng(seed, 1)
    n = cfg.waveform.n_symbols
    datas, pbs = [], []
    for k, off in enumerate(offsets):
        data = md.random_symbols(rng, n, wf.scheme).symbols
        p_dbm = cfg.link.input_power_dbm - (cfg.link.sir_db if k else 0.0)
        bb = scale_to_dbm(sc_burst(wf, pre, data).signal, p_dbm)
        datas.append(data)
        pbs.append(upconvert(bb, fc + off, fs).samples)
    pb = PassbandSignal(pbs[0] + pbs[1], fs)
    out = rrh.uplink_rrh_chain(pb, frontend_config(cfg), dither_config(cfg), impairment(cfg),
                               _chain_seed(seed, 2), uplink_options(cfg))
    evms, syms = [], []
    for off, data in zip(offsets, datas):
        sym = sc_receive(out, wf, fc + off, pre, n, cfg.link.equalizer_taps)
        evms.append(compute_evm(sym, data))
        syms.append(sym)
    return EvmReport(tuple(evms), n, scheme=wf.scheme, constellations=tuple(syms))


# ---------------------------------------------------------------------------
# OFDM uplink
# ---------------------------------------------------------------------------

def ofdm_config(cfg: ScenarioConfig, symbol_rate: float | None = None) -> md.OfdmConfig:
    o = cfg.ofdm
    n_occ = o.occupied_subcarriers
    if n_occ == 0:
        wf = waveform(cfg, symbol_rate)
        n_occ = int(round(wf.bandwidth / o.subcarrier_spacing))
    return md.OfdmConfig(o.subcarrier_spacing, o.fft_size, o.cyclic_prefix_length, n_occ, cfg.waveform.scheme)


def uplink_ofdm(cfg: ScenarioConfig, seed: int, symbol_rate: float | None = None) -> EvmReport:
    """OFDM burst with one full pilot symbol, LS estimate with delay windowing, one-tap equalizer."""
    oc = ofdm_config(cfg, symbol_rate)
    fs, fc = cfg.fronthaul.sample_rate, cfg.fronthaul.carrier
    rng = _rng(seed, 1)
    n_occ = oc.occupied_subcarriers
    n_data_sym = math.ceil(cfg.waveform.n_symbols / n_occ)
    pilot = md.zadoff_chu(cfg.ofdm.pilot_root if math.gcd(cfg.ofdm.pilot_root, n_occ) == 1 else 1, n_occ)
    data = md.random_symbols(rng, n_data_sym * n_occ, oc.scheme).symbols
    frame = md.ofdm_modulate(np.concatenate([pilot, data]), oc)
    guard = np.zeros(oc.symbol_length, complex)
    bb = frame.replace(np.concatenate([guard, frame.samples, guard]))
    bb = scale_to_dbm(bb, cfg.link.input_power_dbm)
    pb = upconvert(bb, fc, fs)
    out = rrh.uplink_rrh_chain(pb, frontend_config(cfg), dither_config(cfg, symbol_rate), impairment(cfg),
                               _chain_seed(seed, 2), uplink_options(cfg))
    half = oc.bandwidth / 2
    lpf = FilterSpec.lowpass(1.05 * half, max(0.5 * half, 10e6))
    rx = downconvert(out, fc, oc.sample_rate, lpf)
    start = oc.symbol_length
    first = frame.samples[: oc.symbol_length]
    start = md.ofdm_synchronize(rx, oc, first, nominal_start=start)
    advance = oc.cyclic_prefix_length // 2
    grid = md.ofdm_demodulate(rx, oc, 1 + n_data_sym, start, window_advance=advance)
    # undo the known linear phase of the advanced window
    grid = grid * np.exp(2j * np.pi * oc.subcarrier_indices() * advance / oc.fft_size)
    est = cu.ofdm_ls_estimate(grid[:1], pilot, oc, cfg.ofdm.delay_window, backoff=4)
    eq = grid[1:] / est.H
    sym = eq.ravel()[: data.size]
    return EvmReport((compute_evm(sym, data),), data.size, scheme=oc.scheme, constellations=(sym,))


# ---------------------------------------------------------------------------
# downlink
# ---------------------------------------------------------------------------

@functools.lru_cache(maxsize=16)
def _downlink_modulator(order: int, ratio: float, osr_: float, gain: float, fs: float) -> sd.NtfSynthesis:
    return sd.synthesize_ntf(sd.SdmDesign(order, ratio, osr_, gain, fs))


def downlink_modulator(cfg: ScenarioConfig, wf: md.WaveformConfig) -> sd.NtfSynthesis:
    fs = cfg.fronthaul.sample_rate
    return _downlink_modulator(cfg.sdm.order, cfg.fronthaul.carrier / fs, sd.osr(fs, wf.bandwidth),
                               cfg.sdm.max_ntf_gain, fs)


def drive_scale(signals, dbfs: float) -> float:
    """Common amplitude scale putting the strongest signal at ``dbfs``.

    0 dBFS is a full-scale sine, i.e. an RMS of 1/sqrt(2).
    """
    rms = max(math.sqrt(np.mean(np.square(s))) for s in signals)
    if rms == 0:
        raise ValueError("all downlink signals are zero")
    return 10 ** (dbfs / 20) / math.sqrt(2) / rms


def downlink_rrh(pb: np.ndarray, cfg: ScenarioConfig, synth: sd.NtfSynthesis, fe: rrh.FrontendConfig,
                 quantize: bool = True) -> np.ndarray:
    """Scaled RF (full-scale units) -> sigma-delta fronthaul -> BPF -> PA, volts at the antenna."""
    fs = cfg.fronthaul.sample_rate
    if quantize:
        stream, _ = sd.sdm_encode(pb, synth, limit=cfg.sdm.stability_limit)
        x = stream.as_passband(rrh.FRONTHAUL_SWING)
    else:
        x = PassbandSignal(pb * rrh.FRONTHAUL_SWING, fs)
    x = apply_filter(x, design_fir(fe.bpf, fs), compensate_delay=True)
    return x.samples * db_to_amplitude(fe.pa_gain)


def downlink_p2p(cfg: ScenarioConfig, seed: int) -> EvmReport:
    wf = waveform(cfg)
    fs, fc = cfg.fronthaul.sample_rate, cfg.fronthaul.carrier
    pre = preamble(cfg)
    n = cfg.waveform.n_symbols
    data = md.random_symbols(_rng(seed, 1), n, wf.scheme).symbols
    pb = upconvert(sc_burst(wf, pre, data).signal, fc, fs).samples
    pb = pb * drive_scale([pb], cfg.sdm.drive_dbfs)
    fe = frontend_config(cfg)
    tx = downlink_rrh(pb, cfg, downlink_modulator(cfg, wf), fe, cfg.link.quantize)
    if cfg.link.noise:
        tx = tx + _ue_noise(tx.size, cfg, _rng(seed, 3))
    sym = sc_receive(PassbandSignal(tx, fs), wf, fc, pre, n, cfg.link.equalizer_taps)
    return EvmReport((compute_evm(sym, data),), n, scheme=wf.scheme, constellations=(sym,))


def _ue_noise(n: int, cfg: ScenarioConfig, rng) -> np.ndarray:
    bw = cfg.frontend.noise_bandwidth
    p = cfg.link.ue_noise_dbm + 10 * math.log10(bw / rrh.NOISE_REFERENCE_BW)
    return rrh.band_limited_noise(n, cfg.fronthaul.sample_rate, p, bw, cfg.fronthaul.carrier, rng)


# ---------------------------------------------------------------------------
# distributed MIMO
# ---------------------------------------------------------------------------

def orthogonal_pilots(pre: np.ndarray, n: int) -> np.ndarray:
    """``n`` mutually orthogonal pilots from cyclic frequency shifts of one sequence."""
    L = pre.size
    if n > L:
        raise ValueError(f"cannot build {n} orthogonal pilots of length {L}")
    s = L // n
    k = np.arange(L)
    return np.vstack([pre * np.exp(2j * np.pi * u * s * k / L) for u in range(n)])


def draw_scenario_channel(cfg: ScenarioConfig, seed: int) -> chn.ChannelState:
    c = cfg.channel
    ch_seed = c.seed if c.seed >= 0 else _chain_seed(seed, 10)
    geo = chn.default_geometry(cfg.B, cfg.U, c.distance, c.spacing)
    ch = chn.draw_channel(c.model, cfg.B, cfg.U, ch_seed, geo, c.gains, c.gain_spread_db)
    if c.model == "rayleigh":
        # unit-variance fading around the free-space loss at the nominal distance
        fsl = abs(chn.free_space(np.array([c.distance]), geo.wavelength)[0])
        ch = ch.with_gains(H=ch.H * fsl, H_rrh=ch.H_rrh * fsl)
    return ch


@dataclass
class DmimoState:
    """Everything the CU learns in one TDD round."""

    channel: chn.ChannelState
    H_ul: np.ndarray  # B x U estimate from uplink pilots
    c_est: np.ndarray
    agc: list  # frozen AgcState per RRH
    ue_power_dbm: float
    uplink_evm: tuple
    uplink_symbols: tuple


def _ue_power(ch: chn.ChannelState, target_dbm: float) -> float:
    """UE transmit power giving a mean received power of ``target_dbm`` over all RRH/UE pairs."""
    g = np.mean(np.abs(ch.uplink_matrix) ** 2)
    return target_dbm - 10 * math.log10(g)


def _cu_symbols(out, wf, fc, n_total: int, timing: int | None, stack) -> tuple[np.ndarray, int]:
    bb = downconvert(out, fc, wf.sample_rate, receive_filter(wf))
    y = md.matched_filter(bb, wf)
    if timing is None:
        timing = md.find_timing(y, stack, wf.samples_per_symbol)
    idx = timing + np.arange(n_total) * wf.samples_per_symbol
    if idx[-1] >= y.size:
        raise md.SyncError("record too short after timing")
    return y[idx], timing


def dmimo_uplink(cfg: ScenarioConfig, seed: int, ch: chn.ChannelState | None = None) -> DmimoState:
    """UEs send orthogonal pilots then data; every RRH runs a full 1-bit chain.

    The AGC of each RRH settles on this burst and is frozen for the later
    calibration sounding so the receive gain stays part of one fixed R.
    """
    wf = waveform(cfg)
    fs, fc = cfg.fronthaul.sample_rate, cfg.fronthaul.carrier
    B, U, n = cfg.B, cfg.U, cfg.waveform.n_symbols
    ch = ch if ch is not None else draw_scenario_channel(cfg, seed)
    pilots = orthogonal_pilots(preamble(cfg), U)
    L = pilots.shape[1]
    rng = _rng(seed, 20)
    datas = [md.random_symbols(rng, n, wf.scheme).symbols for _ in range(U)]
    p_ue = _ue_power(ch, cfg.frontend.agc_target)
    pbs = [upconvert(scale_to_dbm(sc_burst(wf, pilots[u], datas[u]).signal, p_ue), fc, fs) for u in range(U)]
    rx_rf = chn.mix_passband(pbs, ch.uplink_matrix)
    fe, dc, opts = frontend_config(cfg), dither_config(cfg), uplink_options(cfg)
    Y = np.zeros((B, GUARD_SYMBOLS + L + n), complex)
    states, timing = [], None
    for b in range(B):
        st = rrh.AgcState()
        out = rrh.uplink_rrh_chain(rx_rf[b], fe, dc, impairment(cfg), _chain_seed(seed, 21, b), opts, st)
        st.frozen = True
        states.append(st)
        if timing is None:
            bb = downconvert(out, fc, wf.sample_rate, receive_filter(wf))
            timing = md.find_timing(md.matched_filter(bb, wf), pilots, wf.samples_per_symbol)
        Y[b], _ = _cu_symbols(out, wf, fc, Y.shape[1], timing, pilots)
    Y = Y[:, : L + n]
    H_ul = cu.ls_estimate(Y[:, :L], pilots).H
    W = cu.zf_combiner(H_ul)
    Z = W @ Y[:, L:]
    evm = tuple(compute_evm(Z[u], datas[u]) for u in range(U))
    return DmimoState(ch, H_ul, np.ones(B, complex), states, p_ue, evm, tuple(Z))


def _sounding_pilot(cfg: ScenarioConfig) -> np.ndarray:
    return md.zc_preamble(cfg.waveform.preamble_length, cfg.waveform.preamble_root)


def calibration_sounding(cfg: ScenarioConfig, seed: int, state: DmimoState) -> np.ndarray:
    """Directed RRH-to-RRH pilot exchange through the full downlink and uplink chains.

    One RRH transmits at a time, backed off by a common attenuation so the
    frozen receive gains do not overload. Returns the B x B sounding matrix.
    """
    wf = waveform(cfg)
    fs, fc = cfg.fronthaul.sample_rate, cfg.fronthaul.carrier
    B, ch = cfg.B, state.channel
    pilot = _sounding_pilot(cfg)
    L = pilot.size
    burst = sc_burst(wf, pilot, np.zeros(0, complex)).signal
    pb = upconvert(burst, fc, fs).samples
    pb = pb * drive_scale([pb], cfg.sdm.drive_dbfs)
    fe, dc, opts = frontend_config(cfg), dither_config(cfg), uplink_options(cfg)
    synth = downlink_modulator(cfg, wf)
    tx = downlink_rrh(pb, cfg, synth, fe, cfg.link.quantize) * db_to_amplitude(-cfg.calibration.sounding_backoff_db)
    tx_pb = PassbandSignal(tx, fs)
    snr = cfg.calibration.sounding_snr_db
    Y = np.zeros((B, B), complex)
    for j in range(B):
        # RRH transmitter gain t_j, propagation to every other RRH
        M = (ch.H_rrh[:, j] * ch.t_rrh[j] * ch.r_rrh)[:, None]
        rx_all = chn.mix_passband([tx_pb], M)
        for i in range(B):
            if i == j:
                continue
            rx = rx_all[i]
            if not math.isinf(snr):
                p = np.mean(rx.samples ** 2) / 50.0
                nd = 10 * math.log10(p / 1e-3) - snr
                rx = rx.replace(rx.samples + rrh.band_limited_noise(
                    len(rx), fs, nd, fe.noise_bandwidth, fc, _rng(seed, 30, i, j)))
            out = rrh.uplink_rrh_chain(rx, fe, dc, impairment(cfg), _chain_seed(seed, 31, i, j), opts,
                                       state.agc[i])
            sym, _ = _cu_symbols(out, wf, fc, L, None, pilot)
            Y[i, j] = cu.ls_estimate(sym[None, :], pilot[None, :]).H[0, 0]
    return Y


def precoder(cfg: ScenarioConfig, state: DmimoState, kind: str) -> np.ndarray:
    """Unnormalized ZF precoder (B x U) of the requested kind."""
    if kind == "downlink":
        # genie: true propagation and transmit gains
        return cu.zf_precoder(state.channel.downlink_matrix.T).P
    P_ul = cu.zf_precoder(state.H_ul, direction="uplink")
    if kind == "uplink":
        return P_ul.P
    if kind == "calibrated":
        return cu.apply_calibration(P_ul, state.c_est).P
    raise ValueError(f"unknown precoder {kind!r}")


def dmimo_downlink(cfg: ScenarioConfig, seed: int, state: DmimoState, P: np.ndarray) -> tuple:
    """Precoded downlink through B sigma-delta RRHs; returns (EVM per UE, symbols per UE)."""
    wf = waveform(cfg)
    fs, fc = cfg.fronthaul.sample_rate, cfg.fronthaul.carrier
    B, U, n = cfg.B, cfg.U, cfg.waveform.n_symbols
    ch = state.channel
    pilots = orthogonal_pilots(preamble(cfg), U)
    rng = _rng(seed, 40)
    datas = [md.random_symbols(rng, n, wf.scheme).symbols for _ in range(U)]
    X = np.vstack([sc_burst(wf, pilots[u], datas[u]).signal.samples for u in range(U)])
    S = P @ X
    pbs = [upconvert(BasebandSignal(S[b], wf.sample_rate), fc, fs).samples for b in range(B)]
    k = drive_scale(pbs, cfg.sdm.drive_dbfs)
    fe = frontend_config(cfg)
    synth = downlink_modulator(cfg, wf)
    tx = [PassbandSignal(downlink_rrh(p * k, cfg, synth, fe, cfg.link.quantize), fs) for p in pbs]
    rx = chn.mix_passband(tx, ch.downlink_matrix)
    evm, syms = [], []
    for u in range(U):
        r = rx[u]
        if cfg.link.noise:
            r = r.replace(r.samples + _ue_noise(len(r), cfg, _rng(seed, 41, u)))
        sym = sc_receive(r, wf, fc, pilots[u], n, cfg.link.equalizer_taps)
        evm.append(compute_evm(sym, datas[u]))
        syms.append(sym)
    return tuple(evm), tuple(syms)


def dmimo_round(cfg: ScenarioConfig, seed: int, kinds=("calibrated",)) -> dict:
    """Uplink pilots -> channel estimate -> sounding -> calibration -> precoded downlink."""
    state = dmimo_uplink(cfg, seed)
    need_cal = "calibrated" in kinds
    quality = {}
    if need_cal:
        Y = calibration_sounding(cfg, seed, state)
        cm = cal.estimate_c(Y, cfg.calibration.tolerance, cfg.calibration.max_iterations)
        state.c_est = cm.c
        quality = cal.calibration_quality(effective_calibration(cfg, state), cm.c)
    out = {"state": state, "calibration": quality}
    for kind in kinds:
        out[kind] = dmimo_downlink(cfg, seed, state, precoder(cfg, state, kind))
    return out


def effective_calibration(cfg: ScenarioConfig, state: DmimoState) -> np.ndarray:
    """t / r including the frozen AGC gains (the chains are otherwise identical)."""
    g = np.array([db_to_amplitude(s.gain_db) for s in state.agc])
    return state.channel.t_rrh / (state.channel.r_rrh * g)


def baseband_reciprocity(cfg: ScenarioConfig, seed: int) -> EvmReport:
    """Frequency-flat baseband TDD round without RRH chains.

    EVM columns use the uncalibrated uplink precoder; extras carry the genie
    and calibrated precoders plus the per-RRH reciprocity phase before and
    after calibration (relative to RRH 0).
    """
    wf = waveform(cfg)
    U, n = cfg.U, cfg.waveform.n_symbols
    ch = draw_scenario_channel(cfg, seed)
    snr = cfg.calibration.sounding_snr_db
    Y = cal.simulate_sounding(ch, snr_db=None if math.isinf(snr) else snr, seed=_chain_seed(seed, 50))
    c_est = cal.estimate_c(Y, cfg.calibration.tolerance, cfg.calibration.max_iterations).c
    state = DmimoState(ch, ch.uplink_matrix, c_est, [], 0.0, (), ())
    pilots = orthogonal_pilots(preamble(cfg), U)
    L = pilots.shape[1]
    rng = _rng(seed, 51)
    datas = [md.random_symbols(rng, n, wf.scheme).symbols for _ in range(U)]
    X = np.vstack([sc_burst(wf, pilots[u], datas[u]).signal.samples for u in range(U)])
    evm = {}
    for kind in ("uplink", "downlink", "calibrated"):
        R = chn.downlink_apply(precoder(cfg, state, kind) @ X, ch)
        evm[kind] = []
        for u in range(U):
            fr = md.rrc_demodulate(BasebandSignal(R[u], wf.sample_rate), wf, preamble=pilots[u],
                                   n_symbols=L + n, threshold=0.0).symbols
            evm[kind].append(compute_evm(fr[L:], datas[u]))
    c = ch.calibration
    extras = {}
    for u in range(U):
        extras[f"evm_pdl_ue{u + 1}"] = evm["downlink"][u]
        extras[f"evm_cal_ue{u + 1}"] = evm["calibrated"][u]
    for b in range(cfg.B):
        extras[f"phase_rrh{b + 1}_deg"] = float(np.degrees(np.angle(c[b] / c[0])))
        extras[f"residual_rrh{b + 1}_deg"] = float(np.degrees(np.angle((c[b] / c[0]) / (c_est[b] / c_est[0]))))
    return EvmReport(tuple(evm["uplink"]), n, scheme=wf.scheme, extras=extras)
