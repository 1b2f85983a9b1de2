import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rofsim import rrh
from rofsim import sigma_delta as sd
from rofsim.bench import pipelines as pl
from rofsim.bench.config import ScenarioConfig
from rofsim.sigcore import BinaryStream, PassbandSignal, SignalError, power_dbm

FS = 10e9


def tone(power, f=2.35e9, n=20000, rate=FS):
    amp = math.sqrt(2 * 50 * 10 ** ((power - 30) / 10))
    return PassbandSignal(amp * np.cos(2 * np.pi * f * np.arange(n) / rate), rate)


# --- configuration types -----------------------------------------------------

def test_dither_amplitude_from_power():
    d = rrh.DitherConfig(17e6, -4.5)
    rms = math.sqrt(10 ** ((-4.5 - 30) / 10) * 50)
    assert d.rms == pytest.approx(rms)
    assert d.amplitude == pytest.approx(math.sqrt(3) * rms)


@pytest.mark.parametrize("kw", [{"frequency": 0.0}, {"frequency": -1.0}, {"shape": "sine"}])
def test_dither_config_rejects(kw):
    with pytest.raises(ValueError):
        rrh.DitherConfig(**kw)


def test_frontend_and_impairment_validation():
    with pytest.raises(ValueError):
        rrh.FrontendConfig(agc_gain_range=(5.0, 5.0))
    with pytest.raises(ValueError):
        rrh.FrontendConfig(vga_nf=-1.0)
    with pytest.raises(ValueError):
        rrh.FronthaulImpairment(enabled=True, oversampling=2)
    assert rrh.FrontendConfig().pre_agc_gain == pytest.approx(16.5)


# --- dither path -----------------------------------------------------------------

def test_triangle_shape_and_rms():
    cfg = rrh.DitherConfig(17e6, -4.5)
    n = 170_000  # about 289 periods, so the partial last one barely moves the rms
    x = rrh.triangle(n, FS, cfg)
    assert np.max(np.abs(x)) <= cfg.amplitude + 1e-12
    assert np.sqrt(np.mean(x**2)) == pytest.approx(cfg.rms, rel=1e-3)


def test_generated_dither_reconstructs_within_minus_30db():
    cfg = rrh.DitherConfig(17e6, -4.5)
    tri, enc = rrh.generate_dither(cfg, FS, 4e-6)
    assert set(np.unique(enc.samples)) <= {-1, 1}
    y = rrh.reconstruct_dither(enc, rrh.default_lpf(), 0.0)
    core = slice(2000, len(tri) - 2000)
    err = y.samples[core] - tri.samples[core]
    assert 10 * np.log10(np.mean(err**2) / np.mean(tri.samples[core] ** 2)) <= -30


def test_dither_beyond_full_scale_raises():
    with pytest.raises(SignalError):
        rrh.generate_dither(rrh.DitherConfig(17e6, 10.0), FS, 1e-7)
    with pytest.raises(SignalError):
        rrh.generate_dither(rrh.DitherConfig(3e9, -10.0), FS, 1e-7)


def test_idle_pattern_reconstructs_near_zero():
    stream, _ = sd.sdm_encode(np.zeros(40_000), rrh.dither_encoder(FS))
    y = rrh.reconstruct_dither(BinaryStream(stream.samples, FS), rrh.default_lpf(), 0.0)
    core = y.samples[2000:-2000]
    # relative to a full-scale sine, rms 1/sqrt(2)
    assert 10 * np.log10(np.mean(core**2) / 0.5) <= -35


def test_if_gain_is_linear():
    _, enc = rrh.generate_dither(rrh.DitherConfig(17e6, -4.5), FS, 1e-6)
    a = rrh.reconstruct_dither(enc, rrh.default_lpf(), 0.0).samples
    b = rrh.reconstruct_dither(enc, rrh.default_lpf(), 15.0).samples
    assert np.sqrt(np.mean(b**2)) / np.sqrt(np.mean(a**2)) == pytest.approx(10 ** (15 / 20))


# --- analog stages -----------------------------------------------------------------

def test_friis_single_stage_identity():
    assert rrh.friis_cascade([(20.0, 1.5)], 1e6).noise_figure_db == pytest.approx(1.5)


def test_friis_two_stage_hand_value():
    nb = rrh.friis_cascade([(24.0, 1.5), (10.0, 12.5)], 100e6)
    f = 10 ** 0.15 + (10 ** 1.25 - 1) / 10 ** 2.4
    assert nb.noise_figure_db == pytest.approx(10 * math.log10(f), abs=0.01)
    assert nb.noise_figure_db == pytest.approx(1.70, abs=0.01)
    assert nb.gain_db == pytest.approx(34.0)


def test_friis_thermal_floor():
    nb = rrh.friis_cascade([(0.0, 0.0), (0.0, 0.0)], 100e6)
    assert nb.input_dbm == pytest.approx(-174 + 80)
    with pytest.raises(ValueError):
        rrh.friis_cascade([], 1e6)


@pytest.mark.parametrize("p_in, gain, p_out", [(-40, 10, -30), (-70, 15, -55), (-10, -20, -30), (5, -30, -25)])
# the upper clamp is +15 dB, so -50 dBm would need +20 dB and is clamped
def test_agc_regulation_and_clamps(p_in, gain, p_out):
    out, g = rrh.agc(tone(p_in), rrh.FrontendConfig())
    assert np.allclose(g, gain, atol=0.01)
    assert power_dbm(out.samples) == pytest.approx(p_out, abs=0.05)


def test_agc_frozen_state_keeps_gain():
    fe = rrh.FrontendConfig()
    st_ = rrh.AgcState()
    rrh.agc(tone(-45), fe, st_)
    st_.frozen = True
    _, g = rrh.agc(tone(-20), fe, st_)
    assert np.allclose(g, 15.0)


@settings(max_examples=30)
@given(st.floats(-120, 40))
def test_agc_gain_stays_in_range(p):
    fe = rrh.FrontendConfig()
    _, g = rrh.agc(tone(p, n=2000), fe)
    assert np.all((g >= -30) & (g <= 15))


def test_comparator_sign_rule_and_ties():
    rf = PassbandSignal(np.array([0.3, 0.1, -0.2, 0.05]), FS)
    d = PassbandSignal(np.array([0.1, 0.1, 0.0, 0.2]), FS)
    assert rrh.comparator_encode(rf, d).samples.tolist() == [1, 1, -1, -1]


def test_comparator_rate_mismatch():
    with pytest.raises(SignalError):
        rrh.comparator_encode(PassbandSignal(np.zeros(4), FS), PassbandSignal(np.zeros(4), 5e9))


def test_pwm_linearity():
    cfg = rrh.DitherConfig(10e6, -4.5)
    periods = 50
    n = int(periods * FS / cfg.frequency)
    tri = PassbandSignal(rrh.triangle(n, FS, cfg), FS)
    A = cfg.amplitude
    ds = np.linspace(-0.8, 0.8, 17) * A
    means = []
    for d in ds:
        m = rrh.comparator_encode(PassbandSignal(np.full(n, d), FS), tri).samples.mean()
        assert m == pytest.approx(d / A, abs=2 / periods)
        means.append(m)
    r = np.corrcoef(ds / A, means)[0, 1]
    assert r**2 > 0.999


def test_fronthaul_disabled_is_identity():
    x = np.random.default_rng(0).choice([-1, 1], 1000).astype(np.int8)
    s = BinaryStream(x, FS)
    assert np.array_equal(rrh.fronthaul_transport(s, rrh.FronthaulImpairment(), FS).samples, x)


def test_edge_kernel_rise_time():
    fine = 400e9
    h = rrh.edge_kernel(54e-12, fine)
    assert h.sum() == pytest.approx(1.0)
    step = np.cumsum(h)
    t10, t90 = np.interp([0.1, 0.9], step, np.arange(h.size))
    assert (t90 - t10) / fine == pytest.approx(54e-12, rel=0.02)


def test_fronthaul_pulse_widths():
    imp = rrh.FronthaulImpairment(enabled=True)
    # one 100 ps cell at 10 GS/s survives 54 ps edges
    x = -np.ones(100, np.int8)
    x[50] = 1
    y = rrh.fronthaul_transport(BinaryStream(x, FS), imp, FS)
    assert y.samples.tolist() == x.tolist()
    # a single 25 ps sliver on the M=4 grid never reaches the threshold
    for off in range(4):
        fine = -np.ones(400, np.int8)
        fine[200 + off] = 1
        assert np.all(rrh.fronthaul_transport(BinaryStream(fine, 4 * FS), imp, FS).samples == -1)
    # a 50 ps pulse away from the sampling instant is dropped
    fine = -np.ones(400, np.int8)
    fine[200:202] = 1
    assert np.all(rrh.fronthaul_transport(BinaryStream(fine, 4 * FS), imp, FS).samples == -1)


def test_fronthaul_output_alphabet_with_jitter():
    imp = rrh.FronthaulImpairment(enabled=True, sampling_jitter_rms=5e-12)
    x = np.random.default_rng(1).choice([-1, 1], 2000).astype(np.int8)
    y = rrh.fronthaul_transport(BinaryStream(x, FS), imp, FS, np.random.default_rng(2))
    assert set(np.unique(y.samples)) <= {-1, 1}
    assert len(y) == len(x)


def test_band_limited_noise_power_and_band():
    rng = np.random.default_rng(3)
    x = rrh.band_limited_noise(2**16, FS, -26.6, 100e6, 2.35e9, rng)
    assert power_dbm(x) == pytest.approx(-26.6, abs=0.01)
    X = np.abs(np.fft.rfft(x)) ** 2
    f = np.fft.rfftfreq(x.size, 1 / FS)
    assert X[np.abs(f - 2.35e9) > 51e6].sum() <= 1e-12 * X.sum()


# --- full chain --------------------------------------------------------------------

def test_chain_zero_length():
    out = rrh.uplink_rrh_chain(PassbandSignal(np.zeros(0), FS), rrh.FrontendConfig(), rrh.DitherConfig())
    assert len(out) == 0


def test_chain_deterministic_and_binary():
    sig = tone(-30, n=5000)
    a = rrh.uplink_rrh_chain(sig, rrh.FrontendConfig(), rrh.DitherConfig(), seed=5)
    b = rrh.uplink_rrh_chain(sig, rrh.FrontendConfig(), rrh.DitherConfig(), seed=5)
    c = rrh.uplink_rrh_chain(sig, rrh.FrontendConfig(), rrh.DitherConfig(), seed=6)
    assert np.array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, c.samples)
    assert set(np.unique(a.samples)) <= {-1, 1}


def test_chain_without_quantization_returns_analog():
    out = rrh.uplink_rrh_chain(tone(-50, n=5000), rrh.FrontendConfig(), rrh.DitherConfig(),
                               options=rrh.UplinkOptions(noise=False, quantize=False, bpf=False))
    # -50 dBm + 16.5 dB pre-gain hits the AGC target, then the RF amplifier
    assert power_dbm(out.samples) == pytest.approx(-30 + 39.5, abs=0.05)


def test_dither_helps_at_high_snr():
    base = ScenarioConfig().with_overrides({"waveform.n_symbols": 500, "link.noise": False})
    with_d = pl.uplink_p2p(base, 11).evm[0]
    without = pl.uplink_p2p(base.with_overrides({"dither.enabled": False}), 11).evm[0]
    assert without > with_d
