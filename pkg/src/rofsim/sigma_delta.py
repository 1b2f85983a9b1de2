"""Noise-transfer-function synthesis and 1-bit sigma-delta loop simulation.

Loops are realized as a cascade of resonators (bandpass) or integrators
(lowpass, with small local feedback for the spread zeros), fed back from the
quantizer output at every stage. The loop filter sees the error ``u - v`` and
the input is also added at the quantizer, so the signal transfer is unity and
only quantization noise is shaped: ``v = u + NTF * e``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps

from . import kernels
from .sigcore import BinaryStream, PassbandSignal, SignalError


class NtfSynthesisError(RuntimeError):
    """Pole placement could not meet the requested out-of-band gain."""


def osr(fs: float, bandwidth: float) -> float:
    """Oversampling ratio fs / (2W)."""
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    if not fs > 2 * bandwidth:
        raise ValueError(f"fs = {fs:g} Hz is not above 2W = {2 * bandwidth:g} Hz (sub-Nyquist)")
    return fs / (2.0 * bandwidth)


@dataclass(frozen=True)
class SdmDesign:
    """Modulator specification.

    ``order`` counts NTF zeros (two per resonator). ``max_ntf_gain`` of None
    leaves the NTF unconstrained (FIR, all poles at the origin).
    """

    order: int
    center_frequency_ratio: float = 0.0
    osr: float = 64.0
    max_ntf_gain: float | None = 1.5
    sample_rate: float | None = None

    def __post_init__(self):
        if not 1 <= self.order <= 8:
            raise ValueError(f"order must be in 1..8, got {self.order}")
        if not 0 <= self.center_frequency_ratio < 0.5:
            raise ValueError("center frequency ratio f0/fs must be in [0, 0.5)")
        if self.bandpass and self.order % 2:
            raise ValueError("bandpass designs need an even order")
        if self.max_ntf_gain is not None and not self.max_ntf_gain > 1:
            raise ValueError("max_ntf_gain must exceed 1")
        if not self.osr > 1:
            raise ValueError("osr must exceed 1")

    @property
    def bandpass(self) -> bool:
        return self.center_frequency_ratio > 0

    @property
    def topology(self) -> str:
        return "cascade-of-resonators" if self.bandpass else "cascade-of-integrators"

    @property
    def band(self) -> tuple[float, float]:
        """Signal band as fractions of fs."""
        half = 0.25 / self.osr
        f0 = self.center_frequency_ratio
        return (max(f0 - half, 0.0), f0 + half) if self.bandpass else (0.0, 2 * half)


@dataclass(frozen=True, eq=False)
class LoopFilter:
    """State-space loop: x' = A x + bu u + bv v; y = c x + du u; v = sign(y)."""

    A: np.ndarray
    bu: np.ndarray
    bv: np.ndarray
    c: np.ndarray
    du: float = 1.0

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    def ntf(self, z):
        """NTF realized by this loop evaluated at complex ``z``."""
        return 1.0 / (1.0 - self._tf(self.bv, z))

    def _tf(self, b, z):
        z = np.atleast_1d(z)
        eye = np.eye(self.n_states)
        return np.array([self.c @ np.linalg.solve(zi * eye - self.A, b) for zi in z])


@dataclass(frozen=True, eq=False)
class NtfSynthesis:
    design: SdmDesign
    zeros: np.ndarray
    poles: np.ndarray
    loop: LoopFilter
    max_gain: float

    def response(self, freqs):
        """NTF magnitude response at normalized frequencies f/fs."""
        z = np.exp(2j * np.pi * np.asarray(freqs, dtype=float))
        num = np.prod(z[:, None] - self.zeros[None, :], axis=1)
        den = np.prod(z[:, None] - self.poles[None, :], axis=1)
        return num / den


@dataclass
class SdmState:
    """Loop state carried between calls; ``resets`` logs sample indices of overload resets."""

    x: np.ndarray
    overloads: int = 0
    resets: list = field(default_factory=list)
    samples: int = 0


# ---------------------------------------------------------------------------
# NTF synthesis
# ---------------------------------------------------------------------------

def optimal_zero_angles(design: SdmDesign) -> np.ndarray:
    """Zero angles (rad/sample) minimizing the in-band noise integral.

    The optimal normalized positions are the roots of the Legendre polynomial
    of the number of zeros spread across the band.
    """
    if design.bandpass:
        nodes, _ = np.polynomial.legendre.leggauss(design.order // 2)
        half = np.pi / (2 * design.osr)
        w = 2 * np.pi * design.center_frequency_ratio + nodes * half
        return np.concatenate([w, -w])
    nodes, _ = np.polynomial.legendre.leggauss(design.order)
    return nodes * np.pi / design.osr


def _poles(x: float, order: int, c0: float, lowpass: bool) -> np.ndarray:
    """Maximally flat pole set parameterized by ``x`` (0 -> unit circle, large -> origin)."""
    w = (2 * np.arange(1, order + 1) - 1) * np.pi / order
    if lowpass:
        mb2 = 1 - 0.5 * x ** (2.0 / order) * np.exp(1j * w)
    else:
        mb2 = c0 + 0.5 * x ** (2.0 / order) * np.exp(1j * w)
    p = mb2 - np.sqrt(mb2**2 - 1)
    out = np.abs(p) > 1
    p[out] = 1 / p[out]
    return p


_GRID = np.exp(2j * np.pi * np.linspace(0, 0.5, 32769))


def _max_gain(zeros, poles) -> float:
    num = np.prod(_GRID[:, None] - zeros[None, :], axis=1)
    den = np.prod(_GRID[:, None] - poles[None, :], axis=1)
    return float(np.max(np.abs(num / den)))


def synthesize_ntf(design: SdmDesign) -> NtfSynthesis:
    """Place zeros optimally in band and poles so that max|NTF| equals the gain bound."""
    zeros = np.exp(1j * optimal_zero_angles(design))
    fir_poles = np.zeros(design.order, dtype=complex)
    fir_gain = _max_gain(zeros, fir_poles)
    if design.max_ntf_gain is None or fir_gain <= design.max_ntf_gain:
        poles, gain = fir_poles, fir_gain
    else:
        target = design.max_ntf_gain
        c0 = np.cos(2 * np.pi * design.center_frequency_ratio)
        lowpass = not design.bandpass

        def g(logx):
            return _max_gain(zeros, _poles(np.exp(logx), design.order, c0, lowpass))

        # gain is not monotone near x -> 0 (poles on the unit circle); bracket by scanning down
        grid = np.linspace(30.0, -30.0, 241)
        gains = [g(v) for v in grid]
        below = [i for i, gv in enumerate(gains) if gv <= target]
        if not below or below[0] == 0:
            raise NtfSynthesisError(
                f"gain bound {target} not reachable (min {min(gains):.3f}) for {design}")
        i = below[0]
        lo, hi = grid[i], grid[i - 1]
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if g(mid) > target:
                hi = mid
            else:
                lo = mid
            if hi - lo < 1e-12:
                break
        poles = _poles(np.exp(lo), design.order, c0, lowpass)
        gain = g(lo)
        if gain > target + 1e-9:
            raise NtfSynthesisError(f"pole search ended at gain {gain:.6f} > {target}")
    poles = np.sort_complex(poles)
    loop = realize_loop(zeros, poles)
    loop = scale_loop(loop, design)
    return NtfSynthesis(design, zeros, poles, loop, gain)


# ---------------------------------------------------------------------------
# realization
# ---------------------------------------------------------------------------

def _structure(zeros: np.ndarray):
    """State matrix and per-integrator injection vectors for the cascade.

    Each resonator is a delaying integrator followed by a non-delaying one with
    local feedback g = 2 - 2 cos(theta), giving characteristic roots exp(+-j theta).
    A real zero at DC becomes a single integrator.
    """
    ang = np.angle(zeros)
    upper = np.sort(ang[ang > 1e-12])
    n_real = int(np.sum(np.abs(ang) <= 1e-12))
    stages = ["int"] * n_real + [("res", 2 - 2 * np.cos(t)) for t in upper]
    n = n_real + 2 * upper.size
    if n != zeros.size:
        raise SignalError("zeros must be conjugate pairs plus at most real zeros at DC")

    def step(x, inj):
        """One update; ``inj[i]`` is the injection at integrator i."""
        new = np.zeros(n)
        prev = 0.0
        i = 0
        for st in stages:
            if st == "int":
                new[i] = x[i] + prev + inj[i]
                prev = x[i]
                i += 1
            else:
                g = st[1]
                new[i] = x[i] - g * x[i + 1] + prev + inj[i]
                new[i + 1] = x[i + 1] + new[i] + inj[i + 1]
                prev = x[i + 1]
                i += 2
        return new

    A = np.column_stack([step(np.eye(n)[k], np.zeros(n)) for k in range(n)])
    B = np.column_stack([step(np.zeros(n), np.eye(n)[k]) for k in range(n)])
    c = np.zeros(n)
    c[-1] = 1.0
    return A, B, c


def realize_loop(zeros: np.ndarray, poles: np.ndarray) -> LoopFilter:
    """Solve the feedback coefficients so the loop's NTF matches zeros/poles exactly."""
    A, B, c = _structure(zeros)
    n = A.shape[0]
    # target: T(z) = 1/NTF - 1 = (P(z) - Z(z)) / Z(z)
    zp = np.real_if_close(np.poly(zeros)).real
    pp = np.real_if_close(np.poly(poles)).real
    num = pp - zp
    imp = np.zeros(n + 1)
    imp[0] = 1.0
    t = sps.lfilter(num, zp, imp)[1:]
    M = np.empty((n, n))
    Ak = np.eye(n)
    for k in range(n):
        M[k] = c @ Ak @ B
        Ak = A @ Ak
    a = np.linalg.solve(M, t)
    bw = B @ a
    # loop filter input is (u - v): bv = -bw, bu = +bw
    return LoopFilter(A, bw.copy(), -bw, c, 1.0)


def scale_loop(loop: LoopFilter, design: SdmDesign, amplitude: float = 0.5,
               n: int = 16384) -> LoopFilter:
    """Diagonal state scaling so a sinusoid of ``amplitude`` at band center keeps |x_i| <= 1."""
    f = design.center_frequency_ratio if design.bandpass else design.band[1] / 2
    k = np.arange(n)
    u = amplitude * np.sin(2 * np.pi * f * k)
    x = np.zeros(loop.n_states)
    traj = np.zeros((n, loop.n_states))
    A, bu, bv, c = loop.A, loop.bu, loop.bv, loop.c
    for i in range(n):
        y = c @ x + loop.du * u[i]
        v = 1.0 if y >= 0 else -1.0
        x = A @ x + bu * u[i] + bv * v
        traj[i] = x
    s = np.max(np.abs(traj), axis=0)
    s[s == 0] = 1.0
    S, Si = np.diag(s), np.diag(1 / s)
    return LoopFilter(Si @ A @ S, Si @ bu, Si @ bv, c @ S, loop.du)


# ---------------------------------------------------------------------------
# encoding
# ---------------------------------------------------------------------------

def new_state(synth: NtfSynthesis) -> SdmState:
    return SdmState(np.zeros(synth.loop.n_states))


def sdm_encode(sig, synth: NtfSynthesis, state: SdmState | None = None,
               limit: float = 10.0) -> tuple[BinaryStream, SdmState]:
    """Run the 1-bit loop sample by sample over a real signal in full-scale units.

    Quantizer ties (y == 0) give +1. If any state exceeds ``limit`` the states
    are zeroed, the overload counter increments and encoding continues.
    """
    if isinstance(sig, PassbandSignal):
        u, rate = sig.samples, sig.rate
    else:
        u, rate = np.asarray(sig, dtype=np.float64), synth.design.sample_rate or 1.0
    if np.iscomplexobj(u):
        raise SignalError("sigma-delta input must be real")
    sr = synth.design.sample_rate
    if isinstance(sig, PassbandSignal) and sr is not None and abs(sr - rate) > 1e-6 * sr:
        raise SignalError(f"input rate {rate:g} differs from loop design rate {sr:g}")
    st = state if state is not None else new_state(synth)
    x = np.array(st.x, dtype=np.float64)
    lp = synth.loop
    bits, resets = kernels.sdm_loop(np.ascontiguousarray(u, dtype=np.float64),
                                    np.ascontiguousarray(lp.A), lp.bu, lp.bv, lp.c,
                                    float(lp.du), float(limit), x)
    st = SdmState(x, st.overloads + len(resets), st.resets + [r + st.samples for r in resets],
                  st.samples + len(u))
    return BinaryStream(np.asarray(bits), rate), st


# ---------------------------------------------------------------------------
# in-band SNDR
# ---------------------------------------------------------------------------

def _spectrum(x: np.ndarray):
    w = sps.windows.blackmanharris(x.size, sym=False)
    return np.fft.fft(x * w)


def inband_sndr(stream, band, reference, rate: float | None = None,
                signal_threshold_db: float = -60.0) -> float:
    """In-band SNDR (dB) from a Blackman-Harris windowed FFT.

    Signal bins are the in-band bins where the reference spectrum lies within
    ``signal_threshold_db`` of its in-band peak; every other in-band bin is
    noise and distortion. ``band`` is in Hz; complex inputs use two-sided
    frequencies so the band may be negative.
    """
    x = stream.samples.astype(np.float64) if isinstance(stream, BinaryStream) else None
    if x is None:
        x = np.asarray(stream.samples if hasattr(stream, "samples") else stream)
    fs = rate if rate is not None else stream.rate
    r = np.asarray(reference.samples if hasattr(reference, "samples") else reference)
    if r.size != x.size:
        raise SignalError("reference and stream lengths differ")
    f1, f2 = band
    complex_in = np.iscomplexobj(x) or np.iscomplexobj(r)
    lo_lim = -fs / 2 if complex_in else 0.0
    if not (lo_lim <= f1 < f2 <= fs / 2):
        raise SignalError(f"band [{f1:g}, {f2:g}] Hz outside Nyquist range")
    freqs = np.fft.fftfreq(x.size, 1 / fs)
    if not complex_in:
        freqs = np.abs(freqs)
    inb = (freqs >= f1) & (freqs <= f2)
    X = np.abs(_spectrum(x)) ** 2
    R = np.abs(_spectrum(r)) ** 2
    if not complex_in:
        inb &= np.fft.fftfreq(x.size) >= 0
    if not inb.any() or R[inb].max() <= 0:
        raise SignalError("reference has no energy in the band")
    sig_bins = inb & (R >= R[inb].max() * 10 ** (signal_threshold_db / 10))
    noise_bins = inb & ~sig_bins
    if not noise_bins.any():
        raise SignalError("no noise bins left in band; band does not extend beyond the signal")
    return float(10 * np.log10(X[sig_bins].sum() / X[noise_bins].sum()))
