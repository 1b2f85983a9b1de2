import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rofsim import calibration as cal
from rofsim.channel import draw_channel


def test_identity_gains_give_symmetric_sounding():
    ch = draw_channel("rayleigh", 4, 1, seed=3, gains="identity")
    Y = cal.simulate_sounding(ch).Y
    off = ~np.eye(4, dtype=bool)
    assert np.allclose(Y[off], Y.T[off])


@settings(max_examples=30)
@given(st.integers(0, 2**31), st.integers(2, 6))
def test_pairwise_identity_holds_for_true_c(seed, B):
    ch = draw_channel("rayleigh", B, 1, seed=seed)
    Y = cal.simulate_sounding(ch).Y
    c = ch.calibration
    for i in range(B):
        for j in range(B):
            if i != j:
                assert c[i] * Y[i, j] == pytest.approx(c[j] * Y[j, i], rel=1e-9, abs=1e-12)
    assert abs(np.conj(c) @ cal.quadratic_form(Y) @ c) <= 1e-18 * B + 1e-12 * np.sum(np.abs(Y) ** 2)


def test_reciprocal_hardware_gives_unit_c():
    ch = draw_channel("rayleigh", 3, 1, seed=1, gains="identity")
    assert np.allclose(cal.estimate_c(cal.simulate_sounding(ch)).c, 1.0, atol=1e-9)


@settings(max_examples=40)
@given(st.integers(0, 2**31), st.integers(2, 6))
def test_noiseless_recovery(seed, B):
    ch = draw_channel("rayleigh", B, 1, seed=seed)
    est = cal.estimate_c(cal.simulate_sounding(ch))
    assert est.c[0] == pytest.approx(1)
    assert cal.calibration_quality(ch, est)["max_relative_error"] <= 1e-6


def test_scale_ambiguity_invariance():
    ch = draw_channel("rayleigh", 3, 1, seed=2)
    Y = cal.simulate_sounding(ch).Y
    a = cal.estimate_c(Y).c
    # scaling one RRH's transmit and receive together rescales its rows and columns, not c's ratios
    b = cal.estimate_c(Y * (0.3 - 2j)).c
    assert np.allclose(a, b, rtol=1e-8)


def test_thirty_db_sounding_median_error():
    errs = []
    for seed in range(100):
        ch = draw_channel("rayleigh", 3, 1, seed=seed)
        est = cal.estimate_c(cal.simulate_sounding(ch, snr_db=30.0, seed=seed))
        errs.append(cal.calibration_quality(ch, est)["max_relative_error"])
    assert np.median(errs) <= 0.05


def test_noise_scales_symmetry_residual():
    ch = draw_channel("rayleigh", 3, 1, seed=4, gains="identity")
    Y = cal.simulate_sounding(ch, pilot=np.ones(1), snr_db=30.0, seed=1).Y
    off = ~np.eye(3, dtype=bool)
    rel = np.mean(np.abs(Y - Y.T)[off] ** 2) / np.mean(np.abs(Y[off]) ** 2)
    # difference of two independent noise draws: twice the per-link noise
    assert 10 * np.log10(rel) == pytest.approx(-30 + 10 * np.log10(2), abs=6)


def test_errors():
    ch = draw_channel("rayleigh", 1, 1, seed=0)
    with pytest.raises(ValueError):
        cal.simulate_sounding(ch)
    with pytest.raises(ValueError):
        cal.estimate_c(np.ones((1, 1)))
    Y = np.ones((3, 3), complex)
    Y[2, :2] = 0
    Y[:2, 2] = 0
    with pytest.raises(cal.CalibrationError, match="RRH 2"):
        cal.estimate_c(Y)
    with pytest.raises(ValueError):
        cal.SoundingMatrix(np.ones((2, 3)))


def test_quality_report():
    c = np.array([1.0, 2j, -0.5])
    q = cal.calibration_quality(c, c)
    assert q["max_phase_error_deg"] == pytest.approx(0) and q["max_magnitude_error_db"] == pytest.approx(0)
    rot = c * np.exp(1j * np.radians([0, 10, 0]))
    assert cal.calibration_quality(c, rot)["max_phase_error_deg"] == pytest.approx(10)
    # a global scalar does not count
    assert cal.calibration_quality(c, 3j * c)["max_relative_error"] == pytest.approx(0, abs=1e-12)
