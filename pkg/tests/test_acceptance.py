"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line (shown in the terminal summary) before
asserting. Seeds are fixed so reruns are exact.
"""
import time

import numpy as np
import pytest

from rofsim import calibration as cal
from rofsim import cu_dsp as cu
from rofsim import sigma_delta as sd
from rofsim.bench import pipelines as pl
from rofsim.bench import runner
from rofsim.bench.config import config_from_dict
from rofsim.bench.experiments import EXPERIMENTS, _bandwidth_point, _inband_point
from rofsim.channel import draw_channel

SEEDS = (1, 2, 3, 4, 5)


def exp_config(name, **sections):
    return config_from_dict(sections, runner.resolve_config(EXPERIMENTS[name]))


def mean_evm(fn, cfg, seeds=SEEDS, stream=0):
    return float(np.mean([fn(cfg, s).evm[stream] for s in seeds]))


def baseline():
    return mean_evm(pl.uplink_p2p, exp_config("dynamic-range"))


def test_c01_uplink_baseline(verdict):
    cfg = exp_config("dynamic-range")
    evms, times = [], []
    for s in SEEDS:
        t0 = time.perf_counter()
        evms.append(pl.uplink_p2p(cfg, s).evm[0])
        times.append(time.perf_counter() - t0)
    m = float(np.mean(evms))
    ok = abs(m - 2.7) <= 0.7 and max(times) <= 300
    assert verdict(1, ok, f"mean EVM {m:.2f}% over {len(SEEDS)} seeds (2.7 +- 0.7), "
                          f"per seed {', '.join(f'{e:.2f}' for e in evms)}; slowest seed {max(times):.1f} s")


def test_c02_agc_plateau(verdict):
    cfg = exp_config("dynamic-range")
    plateau_p = [-60, -55, -50, -45, -40, -35, -30, -25, -20, -18]
    ev = {p: mean_evm(pl.uplink_p2p, cfg.with_overrides({"link.input_power_dbm": p}))
          for p in [-70, *plateau_p, -10]}
    plateau = [ev[p] for p in plateau_p]
    spread = max(plateau) - min(plateau)
    ok = spread <= 1.0 and ev[-70] > max(plateau) and ev[-10] > max(plateau)
    assert verdict(2, ok, f"plateau spread {spread:.3f} pp over [-60, -18] dBm (<= 1); "
                          f"-70 dBm {ev[-70]:.2f}%, -10 dBm {ev[-10]:.2f}%, plateau max {max(plateau):.2f}%")


def test_c03_inband_interference(verdict):
    cfg = exp_config("inband-interference")
    seeds = SEEDS[:3]
    base = mean_evm(pl.uplink_p2p, exp_config("dynamic-range"), seeds)
    lines, ok = [], True
    for sir in (0.0, 5.0, 10.0, 15.0):
        reps = [_inband_point(cfg.with_overrides({"link.sir_db": sir}), s) for s in seeds]
        q = np.mean([r.evm[0] for r in reps])
        ref = np.mean([r.extras["evm_ref"] for r in reps])
        gap = abs(20 * np.log10(q / ref))
        ok &= gap <= 1.0
        lines.append(f"SIR {sir:g}: {q:.1f}% vs {ref:.1f}% ({gap:.2f} dB)")
    for sir in (35.0, 40.0):
        q = mean_evm(pl.uplink_p2p, cfg.with_overrides({"link.sir_db": sir}), seeds)
        ok &= abs(q - base) <= 1.0
        lines.append(f"SIR {sir:g}: {q:.2f}% vs baseline {base:.2f}%")
    assert verdict(3, ok, "; ".join(lines))


def test_c04_out_of_band_interference(verdict):
    cfg = exp_config("oob-interference")
    res = {sir: np.mean([pl.uplink_two_carriers(cfg.with_overrides({"link.sir_db": sir}), s).evm for s in SEEDS],
                        axis=0)
           for sir in (0.0, 5.0, 10.0, 15.0)}
    weak = [res[s][1] for s in sorted(res)]
    equal = abs(res[0.0][0] - res[0.0][1])
    ok = equal <= 0.5 and all(b >= a for a, b in zip(weak, weak[1:]))
    assert verdict(4, ok, f"SIR 0 dB: {res[0.0][0]:.2f}% vs {res[0.0][1]:.2f}% (|diff| {equal:.2f} <= 0.5); "
                          f"weak signal over SIR 0..15: {', '.join(f'{w:.2f}' for w in weak)}")


def test_c05_sampling_rate(verdict):
    cfg = exp_config("sampling-rate")
    ev = {}
    for rs in (10e6, 100e6):
        for fs in (10e9, 20e9):
            ev[rs, fs] = mean_evm(pl.uplink_p2p, cfg.with_overrides({"waveform.symbol_rate": rs,
                                                                        "fronthaul.sample_rate": fs}))
    gain = ev[100e6, 10e9] - ev[100e6, 20e9]
    flat = abs(ev[10e6, 20e9] - ev[10e6, 10e9])
    ok = gain >= 1.0 and flat <= 0.5
    assert verdict(5, ok, f"100 MBd: {ev[100e6, 10e9]:.2f}% -> {ev[100e6, 20e9]:.2f}% (gain {gain:.2f} >= 1 pp); "
                          f"10 MBd: |diff| {flat:.2f} pp (<= 0.5)")


def test_c06_bandwidth_trend(verdict):
    cfg = exp_config("bandwidth")
    rates = [r * 1e6 for r in range(10, 100, 10)]
    sc, ofdm = [], []
    for rs in rates:
        reps = [_bandwidth_point(cfg.with_overrides({"waveform.symbol_rate": rs}), s) for s in SEEDS]
        sc.append(np.mean([r.evm[0] for r in reps]))
        ofdm.append(np.mean([r.extras["evm_ofdm"] for r in reps]))
    mono = all(b >= a for a, b in zip(sc, sc[1:]))
    above = all(o >= s for o, s in zip(ofdm, sc))
    assert verdict(6, mono and above, f"SC {', '.join(f'{v:.2f}' for v in sc)}; "
                                      f"OFDM {', '.join(f'{v:.2f}' for v in ofdm)} "
                                      f"(nondecreasing: {mono}, OFDM >= SC: {above})")


def _sndr(osr):
    fs, f0 = 10e9, 2.35e9
    s = sd.synthesize_ntf(sd.SdmDesign(4, f0 / fs, osr, 1.5, fs))
    n = 2**18
    w = fs / (2 * osr)
    f = round((f0 + w / 8) / (fs / n)) * fs / n
    u = 0.25 * np.cos(2 * np.pi * f * np.arange(n) / fs)
    bits, _ = sd.sdm_encode(u, s)
    return sd.inband_sndr(bits, (f0 - w / 2, f0 + w / 2), u, fs)


def test_c07_sigma_delta_properties(verdict):
    s = sd.synthesize_ntf(sd.SdmDesign(4, 0.235, 416.67, 1.5))
    f = np.arange(8192) / 16384
    z = np.exp(2j * np.pi * f)
    h = np.prod([1 - q / z for q in s.zeros], axis=0) / np.prod([1 - p / z for p in s.poles], axis=0)
    peak = float(np.max(np.abs(h)))
    center = float(20 * np.log10(abs(np.prod(1 - s.zeros / np.exp(2j * np.pi * 0.235))
                                     / np.prod(1 - s.poles / np.exp(2j * np.pi * 0.235)))))
    sndr = [_sndr(r) for r in (50, 100, 200, 400)]
    mono = all(b > a for a, b in zip(sndr, sndr[1:]))
    ok = peak <= 1.51 and center <= -60 and mono
    assert verdict(7, ok, f"max|NTF| {peak:.4f} (<= 1.51), |NTF(f0)| {center:.1f} dB (<= -60), "
                          f"SNDR at OSR 50/100/200/400: {', '.join(f'{v:.1f}' for v in sndr)} dB")


def test_c08_zf_exactness(verdict):
    rng = np.random.default_rng(2024)
    worst, failures = -np.inf, 0
    for _ in range(1000):
        H = (rng.normal(size=(3, 2)) + 1j * rng.normal(size=(3, 2))) / np.sqrt(2)
        for G in (cu.zf_combiner(H) @ H, H.T @ cu.zf_precoder(H).P):
            d = np.diag(G)
            leak = np.sum(np.abs(G - np.diag(d)) ** 2) / np.sum(np.abs(d) ** 2)
            leak_db = 10 * np.log10(leak) if leak > 0 else -np.inf
            worst = max(worst, leak_db)
            failures += leak_db > -60
    assert verdict(8, failures == 0, f"1000 random 3x2 trials, worst leakage {worst:.1f} dB, failures {failures}")


def test_c09_calibration(verdict):
    rel = max(cal.calibration_quality(ch, cal.estimate_c(cal.simulate_sounding(ch)))["max_relative_error"]
              for ch in (draw_channel(m, 3, 2, seed=s) for m in ("los", "rayleigh") for s in range(20)))
    cfg = exp_config("reciprocity-compare")
    gaps, uncal = [], []
    for s in range(1, 21):
        r = pl.baseband_reciprocity(cfg, s)
        for u in range(cfg.U):
            gaps.append(abs(r.extras[f"evm_cal_ue{u + 1}"] - r.extras[f"evm_pdl_ue{u + 1}"]))
            uncal.append(r.evm[u])
    med = float(np.median(uncal))
    ok = rel <= 1e-6 and max(gaps) <= 0.5 and med > 50
    assert verdict(9, ok, f"max relative error of C {rel:.1e} (<= 1e-6); calibrated vs genie EVM gap "
                          f"{max(gaps):.3f} pp (<= 0.5); uncalibrated P_UL median EVM {med:.1f}% (> 50) over 20 seeds")


def test_c10_dmimo_round_trip(verdict):
    cfg = exp_config("dmimo-downlink")
    worst, per = 0.0, []
    for s in (1, 2):
        out = pl.dmimo_round(cfg, s, ("calibrated",))
        per.append(out["calibrated"][0])
        worst = max(worst, *out["calibrated"][0])
    txt = "; ".join(", ".join(f"{e:.2f}" for e in p) for p in per)
    assert verdict(10, worst <= 12.5, f"per-UE EVM (calibrated precoder, seeds 1 and 2): {txt} (<= 12.5)")


def _reduced(name):
    exp = EXPERIMENTS[name]
    cfg = runner.resolve_config(exp)
    small = 64 if cfg.B > 1 else 200
    over = {"waveform": {"n_symbols": small}, "repeats": 2 if cfg.B == 1 else 1, "master_seed": 77}
    over["sweep"] = [{"parameter": ax.parameter, "values": list(ax.values[:2] if i == 0 else ax.values[:1])}
                     for i, ax in enumerate(cfg.sweep)]
    return config_from_dict(over, cfg)


def test_c11_determinism(verdict, tmp_path):
    bad = []
    for name in EXPERIMENTS:
        cfg = _reduced(name)
        a = runner.run_experiment(name, cfg, workers=1)
        b = runner.run_experiment(name, cfg, workers=2)
        fa = runner.emit_results(a, tmp_path / f"{name}-1", cfg)[0].read_bytes()
        fb = runner.emit_results(b, tmp_path / f"{name}-2", cfg)[0].read_bytes()
        if fa != fb:
            bad.append(name)
    assert verdict(11, not bad, f"{len(EXPERIMENTS)} experiments rerun at 1 and 2 workers; "
                                f"differing CSVs: {', '.join(bad) or 'none'}")
