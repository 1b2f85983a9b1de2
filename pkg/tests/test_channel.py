import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rofsim import channel as chn
from rofsim.cu_dsp import zf_precoder
from rofsim.sigcore import BasebandSignal, PassbandSignal, SignalError, power_dbm


def test_identity_gains():
    ch = chn.draw_channel("rayleigh", 3, 2, seed=1, gains="identity")
    for v in (ch.r_rrh, ch.t_rrh, ch.r_ue, ch.t_ue):
        assert np.all(v == 1)
    assert np.array_equal(ch.uplink_matrix, ch.H)
    assert np.array_equal(ch.downlink_matrix, ch.uplink_matrix.T)


def test_random_gains_break_reciprocity():
    ch = chn.draw_channel("rayleigh", 3, 2, seed=1)
    assert not np.allclose(ch.downlink_matrix, ch.uplink_matrix.T)
    mags = 20 * np.log10(np.abs(np.concatenate([ch.r_rrh, ch.t_rrh, ch.r_ue, ch.t_ue])))
    assert np.all(np.abs(mags) <= 3.0)


def test_rayleigh_reproducible():
    a = chn.draw_channel("rayleigh", 3, 2, seed=9)
    b = chn.draw_channel("rayleigh", 3, 2, seed=9)
    assert np.array_equal(a.H, b.H) and np.array_equal(a.t_rrh, b.t_rrh)
    assert np.array_equal(a.H_rrh, a.H_rrh.T)


def test_free_space_distance_doubling():
    lam = chn.SPEED_OF_LIGHT / 2.35e9
    d = 1.37
    h1, h2 = chn.free_space(np.array([d, 2 * d]), lam)
    assert abs(h2) == pytest.approx(abs(h1) / 2)
    assert np.angle(h2 / h1) == pytest.approx(np.angle(np.exp(-2j * np.pi * d / lam)))


def test_coincident_nodes_raise():
    g = chn.Geometry(np.zeros((2, 3)), np.ones((1, 3)))
    with pytest.raises(SignalError):
        chn.draw_channel("los", 2, 1, geometry=g)
    g = chn.Geometry(np.array([[0.0, 0, 0], [1, 0, 0]]), np.array([[1.0, 0, 0]]))
    with pytest.raises(SignalError):
        chn.draw_channel("los", 2, 1, geometry=g)


def test_bad_arguments():
    with pytest.raises(ValueError):
        chn.draw_channel("tdl", 2, 1)
    with pytest.raises(ValueError):
        chn.draw_channel("los", 2, 1, gains="half")
    with pytest.raises(SignalError):
        chn.ChannelState(np.ones((2, 1)), np.ones(2), np.array([1, 0]), np.ones(1), np.ones(1))


def test_single_link_passthrough():
    ch = chn.ChannelState(np.ones((1, 1), complex), *(np.ones(1, complex) for _ in range(4)))
    x = np.exp(1j * np.arange(10))
    assert np.array_equal(chn.uplink_apply(x, ch), x[None, :])


def test_zero_channel_gives_noise_only():
    ch = chn.ChannelState(np.zeros((2, 1), complex), np.ones(2), np.ones(2), np.ones(1), np.ones(1))
    y = chn.uplink_apply(np.ones((1, 50000)), ch, chn.NoiseConfig(-40.0, 3))
    for row in y:
        assert power_dbm(row) == pytest.approx(-40.0, abs=0.2)


def test_dimension_mismatch():
    ch = chn.draw_channel("rayleigh", 3, 2, seed=0)
    with pytest.raises(SignalError):
        chn.uplink_apply(np.ones((3, 4)), ch)


def test_orthogonal_pilot_slots_separate():
    ch = chn.draw_channel("rayleigh", 3, 2, seed=2)
    tx = np.zeros((2, 20), complex)
    tx[0, :10] = 1
    tx[1, 10:] = 1
    y = chn.uplink_apply(tx, ch)
    assert np.allclose(y[:, :10], ch.uplink_matrix[:, [0]])
    assert np.allclose(y[:, 10:], ch.uplink_matrix[:, [1]])


def test_signal_objects_round_trip():
    ch = chn.draw_channel("rayleigh", 2, 2, seed=4)
    tx = [BasebandSignal(np.ones(8, complex), 1e6), BasebandSignal(np.arange(8) * 1j, 1e6)]
    out = chn.downlink_apply(tx, ch)
    assert len(out) == 2 and out[0].rate == 1e6
    assert np.allclose(np.vstack([o.samples for o in out]), ch.downlink_matrix @ np.vstack([t.samples for t in tx]))


def test_zf_precoded_downlink_is_leak_free():
    ch = chn.draw_channel("rayleigh", 3, 2, seed=6)
    P = zf_precoder(ch.downlink_matrix.T).P
    s = np.random.default_rng(0).normal(size=(2, 100)) + 0j
    y = chn.downlink_apply(P @ s, ch)
    leak = np.sum(np.abs(y - s) ** 2) / np.sum(np.abs(s) ** 2)
    assert 10 * np.log10(leak + 1e-300) <= -60


@settings(max_examples=30)
@given(st.integers(0, 2**31), st.integers(1, 4), st.integers(1, 4))
def test_linearity_and_reciprocity(seed, B, U):
    ch = chn.draw_channel("rayleigh", B, U, seed=seed)
    rng = np.random.default_rng(seed)
    x1 = rng.normal(size=(U, 16)) + 1j * rng.normal(size=(U, 16))
    x2 = rng.normal(size=(U, 16)) + 1j * rng.normal(size=(U, 16))
    assert np.allclose(chn.uplink_apply(x1 + x2, ch), chn.uplink_apply(x1, ch) + chn.uplink_apply(x2, ch))
    ident = ch.with_gains(r_rrh=np.ones(B), t_rrh=np.ones(B), r_ue=np.ones(U), t_ue=np.ones(U))
    assert np.array_equal(ident.uplink_matrix, ident.downlink_matrix.T)


def test_mix_passband_applies_complex_gain():
    n, rate = 4096, 1e9
    f = 100 * rate / n  # whole cycles so the analytic signal has no edge error
    x = PassbandSignal(np.cos(2 * np.pi * f * np.arange(n) / rate), rate)
    g = 0.5 * np.exp(1j * np.pi / 3)
    (y,) = chn.mix_passband([x], np.array([[g]]))
    ref = 0.5 * np.cos(2 * np.pi * f * np.arange(n) / rate + np.pi / 3)
    assert np.allclose(y.samples, ref, atol=1e-9)


@pytest.mark.parametrize("sir", [0.0, 15.0])
def test_add_interference_power_ratio(sir):
    rng = np.random.default_rng(0)
    d = BasebandSignal(rng.normal(size=10000) + 1j * rng.normal(size=10000), 1e6)
    i = BasebandSignal(3 * (rng.normal(size=10000) + 1j * rng.normal(size=10000)), 1e6)
    mixed = chn.add_interference(d, i, sir)
    added = mixed.samples - d.samples
    assert power_dbm(d.samples) - power_dbm(added) == pytest.approx(sir, abs=0.1)


def test_add_interference_edges():
    d = BasebandSignal(np.ones(10, complex), 1e6)
    assert chn.add_interference(d, BasebandSignal(np.zeros(10, complex), 1e6), np.inf) is d
    with pytest.raises(SignalError):
        chn.add_interference(d, BasebandSignal(np.zeros(10, complex), 1e6), 10.0)
