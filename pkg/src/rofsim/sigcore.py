"""Signal containers and the DSP primitives shared by every chain stage.

Power convention: every level is dBm into a 50-ohm reference. For real
passband buffers P = mean(v**2) / 50; complex baseband buffers carry the
same power as the passband signal they represent (P = mean(|v|**2) / 50),
which is why up/down-conversion scales by sqrt(2).
"""
from __future__ import annotations

import functools
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from math import gcd
from pathlib import Path

import numpy as np
from scipy import signal as sps

REFERENCE_OHMS = 50.0


class SignalError(ValueError):
    """Invalid signal, filter spec or conversion request."""


# ---------------------------------------------------------------------------
# power conversions
# ---------------------------------------------------------------------------

def dbm_to_watts(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def watts_to_dbm(watts):
    return 10.0 * np.log10(watts) + 30.0


def dbm_to_vrms(dbm):
    """RMS voltage across the 50-ohm reference for a power in dBm."""
    return np.sqrt(dbm_to_watts(dbm) * REFERENCE_OHMS)


def power_dbm(samples) -> float:
    x = np.asarray(samples)
    if x.size == 0:
        raise SignalError("power of an empty buffer is undefined")
    p = np.mean(np.abs(x) ** 2) / REFERENCE_OHMS
    return float(watts_to_dbm(p)) if p > 0 else float("-inf")


def db_to_amplitude(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 20.0)


# ---------------------------------------------------------------------------
# containers
# ---------------------------------------------------------------------------

def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PassbandSignal:
    """Real RF-rate waveform in volts.

    ``delay`` is the accumulated, uncompensated filter delay in seconds.
    """

    samples: np.ndarray
    rate: float
    delay: float = 0.0

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        if x.ndim != 1:
            raise SignalError("passband samples must be one-dimensional")
        if not self.rate > 0:
            raise SignalError(f"rate must be positive, got {self.rate}")
        if not np.all(np.isfinite(x)):
            raise SignalError("passband samples must be finite")
        object.__setattr__(self, "samples", _frozen(x))

    def __len__(self):
        return self.samples.size

    @property
    def power_dbm(self) -> float:
        return power_dbm(self.samples)

    @property
    def duration(self) -> float:
        return self.samples.size / self.rate

    def replace(self, samples=None, **kw) -> "PassbandSignal":
        return PassbandSignal(self.samples if samples is None else samples,
                              kw.get("rate", self.rate), kw.get("delay", self.delay))


@dataclass(frozen=True, eq=False)
class BasebandSignal:
    """Complex envelope. ``center_frequency`` is the carrier it was mixed from (0 if native)."""

    samples: np.ndarray
    rate: float
    center_frequency: float = 0.0
    delay: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.complex128)
        if x.ndim != 1:
            raise SignalError("baseband samples must be one-dimensional")
        if not self.rate > 0:
            raise SignalError(f"rate must be positive, got {self.rate}")
        if not np.all(np.isfinite(x)):
            raise SignalError("baseband samples must be finite")
        object.__setattr__(self, "samples", _frozen(x))

    def __len__(self):
        return self.samples.size

    @property
    def power_dbm(self) -> float:
        return power_dbm(self.samples)

    def replace(self, samples=None, **kw) -> "BasebandSignal":
        return BasebandSignal(self.samples if samples is None else samples,
                              kw.get("rate", self.rate),
                              kw.get("center_frequency", self.center_frequency),
                              kw.get("delay", self.delay),
                              kw.get("meta", self.meta))


@dataclass(frozen=True, eq=False)
class BinaryStream:
    """Two-level waveform at the fronthaul rate; samples are int8 in {-1, +1}."""

    samples: np.ndarray
    rate: float

    def __post_init__(self):
        x = np.asarray(self.samples)
        if x.ndim != 1:
            raise SignalError("binary samples must be one-dimensional")
        if not self.rate > 0:
            raise SignalError(f"rate must be positive, got {self.rate}")
        if x.size and not np.all((x == 1) | (x == -1)):
            raise SignalError("binary stream samples must be exactly +/-1")
        object.__setattr__(self, "samples", _frozen(x.astype(np.int8, copy=False)))

    def __len__(self):
        return self.samples.size

    def as_passband(self, swing: float = 1.0) -> PassbandSignal:
        """Electrical waveform with levels +/-``swing`` volts."""
        return PassbandSignal(self.samples.astype(np.float64) * swing, self.rate)


# ---------------------------------------------------------------------------
# FIR design and filtering
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FilterSpec:
    """Magnitude spec for a linear-phase FIR.

    ``edges`` is ``(f_pass,)`` for lowpass or ``(f_lo, f_hi)`` for bandpass;
    the stopband starts ``transition`` Hz outside each passband edge.
    """

    kind: str
    edges: tuple
    transition: float
    stopband_db: float = 40.0
    ripple_db: float = 0.1
    max_taps: int = 16385

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(float(e) for e in self.edges))
        if self.kind not in ("lowpass", "bandpass"):
            raise SignalError(f"filter kind must be lowpass or bandpass, got {self.kind!r}")
        want = 1 if self.kind == "lowpass" else 2
        if len(self.edges) != want:
            raise SignalError(f"{self.kind} filter needs {want} band edge(s)")
        if self.kind == "bandpass" and not self.edges[0] < self.edges[1]:
            raise SignalError("bandpass edges must be increasing")
        if self.stopband_db <= 0 or self.ripple_db <= 0 or self.transition <= 0:
            raise SignalError("stopband attenuation, ripple and transition must be positive")

    def validate(self, rate: float):
        lo = self.edges[0] - (self.transition if self.kind == "bandpass" else 0.0)
        hi = self.edges[-1] + self.transition
        if not (lo > 0 and hi < rate / 2):
            raise SignalError(
                f"filter band [{lo:g}, {hi:g}] Hz must lie inside (0, {rate / 2:g}) Hz")

    @classmethod
    def lowpass(cls, f_pass, transition, **kw):
        return cls("lowpass", (f_pass,), transition, **kw)

    @classmethod
    def bandpass(cls, f_lo, f_hi, transition, **kw):
        return cls("bandpass", (f_lo, f_hi), transition, **kw)


@dataclass(frozen=True, eq=False)
class FirFilter:
    taps: np.ndarray
    rate: float
    spec: FilterSpec | None = None

    @property
    def group_delay(self) -> float:
        """Group delay in samples, (N - 1) / 2."""
        return (self.taps.size - 1) / 2.0

    def response(self, freqs):
        """Complex frequency response at ``freqs`` (Hz)."""
        _, h = sps.freqz(self.taps, worN=np.asarray(freqs, dtype=float), fs=self.rate)
        return h


def _check_response(taps, spec: FilterSpec, rate: float, grid: int = 4096):
    f = np.linspace(0, rate / 2, grid)
    _, h = sps.freqz(taps, worN=f, fs=rate)
    mag = np.abs(h)
    if spec.kind == "lowpass":
        fp = spec.edges[0]
        pb = f <= fp
        sb = f >= fp + spec.transition
    else:
        lo, hi = spec.edges
        pb = (f >= lo) & (f <= hi)
        sb = (f <= lo - spec.transition) | (f >= hi + spec.transition)
    ripple = 20 * np.log10(mag[pb].max() / max(mag[pb].min(), 1e-300))
    atten = -20 * np.log10(max(mag[sb].max(), 1e-300)) if sb.any() else np.inf
    return ripple, atten


@functools.lru_cache(maxsize=64)
def design_fir(spec: FilterSpec, rate: float) -> FirFilter:
    """Kaiser-window linear-phase FIR verified against ``spec`` on a 4096-point grid.

    The tap count starts at the Kaiser estimate and grows until the grid check
    passes; exceeding ``spec.max_taps`` raises.
    """
    spec.validate(rate)
    delta_s = 10 ** (-spec.stopband_db / 20)
    delta_p = (10 ** (spec.ripple_db / 20) - 1) / (10 ** (spec.ripple_db / 20) + 1)
    atten = -20 * np.log10(min(delta_s, delta_p)) + 1.0
    numtaps, beta = sps.kaiserord(atten, spec.transition / (rate / 2))
    numtaps |= 1
    if spec.kind == "lowpass":
        cutoff = [spec.edges[0] + spec.transition / 2]
        pass_zero = True
    else:
        cutoff = [spec.edges[0] - spec.transition / 2, spec.edges[1] + spec.transition / 2]
        pass_zero = False
    if numtaps > spec.max_taps:
        raise SignalError(
            f"cannot meet {spec.kind} spec: {spec.stopband_db} dB stopband over a {spec.transition:g} Hz "
            f"transition needs about {numtaps} taps, cap is {spec.max_taps}")
    ripple = atten_got = None
    while numtaps <= spec.max_taps:
        taps = sps.firwin(numtaps, cutoff, window=("kaiser", beta), pass_zero=pass_zero, fs=rate)
        ripple, atten_got = _check_response(taps, spec, rate)
        if ripple <= spec.ripple_db and atten_got >= spec.stopband_db:
            taps.setflags(write=False)
            return FirFilter(taps, rate, spec)
        numtaps = (int(numtaps * 1.1) + 2) | 1
    raise SignalError(
        f"cannot meet {spec.kind} spec within {spec.max_taps} taps "
        f"(last ripple {ripple:.3f} dB vs {spec.ripple_db} dB, "
        f"stopband {atten_got:.1f} dB vs {spec.stopband_db} dB)")


def _convolve(x: np.ndarray, taps: np.ndarray) -> np.ndarray:
    if taps.size < 64 or x.size < 64:
        return np.convolve(x, taps)
    return sps.oaconvolve(x, taps)


def apply_filter(sig, taps, compensate_delay: bool = False):
    """Linear convolution of ``sig`` with ``taps`` (array or :class:`FirFilter`).

    Without compensation the full convolution is returned and the signal's
    ``delay`` grows by (N-1)/2 samples. With compensation the (N-1)/2 leading
    samples are trimmed and the output keeps the input length.
    """
    h = taps.taps if isinstance(taps, FirFilter) else np.asarray(taps)
    if h.size == 0:
        raise SignalError("filter has no taps")
    x = sig.samples
    if x.size == 0:
        raise SignalError("cannot filter an empty signal")
    if isinstance(sig, BinaryStream):
        sig = sig.as_passband()
        x = sig.samples
    y = _convolve(x, h)
    gd = (h.size - 1) / 2
    if compensate_delay:
        start = int(round(gd))
        y = y[start:start + x.size]
        delay = sig.delay
    else:
        delay = sig.delay + gd / sig.rate
    if isinstance(sig, PassbandSignal):
        return PassbandSignal(np.real(y) if np.isrealobj(h) else y, sig.rate, delay)
    return sig.replace(y, delay=delay)


# ---------------------------------------------------------------------------
# mixing and resampling
# ---------------------------------------------------------------------------

def carrier_phase(n: np.ndarray, freq: float, rate: float) -> np.ndarray:
    """Phase 2*pi*freq*n/rate reduced mod 2*pi without accumulated error.

    The ratio freq/rate is taken as an exact fraction; the integer product is
    reduced modulo the denominator before scaling.
    """
    ratio = Fraction(str(float(freq))) / Fraction(str(float(rate)))
    num, den = ratio.numerator, ratio.denominator
    n = np.asarray(n, dtype=np.int64)
    if den < 2**31 and abs(num) < 2**31:
        k = (n % den) * (num % den) % den
        return 2 * np.pi * k.astype(np.float64) / den
    frac = np.mod(n.astype(np.longdouble) * (np.longdouble(freq) / np.longdouble(rate)), 1)
    return (2 * np.pi * frac).astype(np.float64)


def _rate_ratio(out_rate: float, in_rate: float):
    r = Fraction(str(float(out_rate))) / Fraction(str(float(in_rate)))
    r = r.limit_denominator(1_000_000)
    return r.numerator, r.denominator


def resample_rational(sig, p: int, q: int):
    """Polyphase resampling by p/q; the output rate is rate*p/q."""
    p, q = int(p), int(q)
    if p < 1 or q < 1:
        raise SignalError("resampling factors must be >= 1")
    g = gcd(p, q)
    p, q = p // g, q // g
    if p == q:
        return sig
    y = sps.resample_poly(sig.samples, p, q)
    rate = sig.rate * p / q
    if isinstance(sig, PassbandSignal):
        return PassbandSignal(y, rate, sig.delay)
    return sig.replace(y, rate=rate)


def resample_to(sig, out_rate: float):
    p, q = _rate_ratio(out_rate, sig.rate)
    return resample_rational(sig, p, q)


def upconvert(bb: BasebandSignal, fc: float, out_rate: float) -> PassbandSignal:
    """Resample ``bb`` to ``out_rate`` and mix up to ``fc``: sqrt(2)*Re{x*exp(+j*2*pi*fc*t)}."""
    if fc + bb.rate / 2 >= out_rate / 2:
        raise SignalError(
            f"carrier {fc:g} Hz plus half the baseband span {bb.rate / 2:g} Hz "
            f"aliases at output rate {out_rate:g} Hz")
    x = resample_to(bb, out_rate)
    if x.samples.size == 0:
        return PassbandSignal(np.zeros(0), out_rate, x.delay)
    ph = carrier_phase(np.arange(x.samples.size), fc, out_rate)
    y = np.sqrt(2.0) * (x.samples.real * np.cos(ph) - x.samples.imag * np.sin(ph))
    return PassbandSignal(y, out_rate, x.delay)


def downconvert(pb, fc: float, out_rate: float, lpf: FilterSpec) -> BasebandSignal:
    """Mix ``pb`` down from ``fc``, lowpass (delay compensated) and resample to ``out_rate``."""
    if lpf.kind != "lowpass":
        raise SignalError("downconversion needs a lowpass filter spec")
    if lpf.edges[0] > out_rate / 2:
        raise SignalError(
            f"lowpass passband {lpf.edges[0]:g} Hz is wider than out_rate/2 = {out_rate / 2:g} Hz")
    if isinstance(pb, BinaryStream):
        pb = pb.as_passband()
    x = pb.samples
    ph = carrier_phase(np.arange(x.size), fc, pb.rate)
    mixed = np.sqrt(2.0) * x * np.exp(-1j * ph)
    fir = design_fir(lpf, pb.rate)
    bb = apply_filter(BasebandSignal(mixed, pb.rate, fc, pb.delay), fir, compensate_delay=True)
    return resample_to(bb, out_rate)


# ---------------------------------------------------------------------------
# spectral estimation
# ---------------------------------------------------------------------------

def welch_psd(sig, segment_length: int, overlap: float = 0.5, window: str = "hann"):
    """Welch PSD in V^2/Hz.

    Real input gives a one-sided estimate on [0, rate/2]; complex input a
    two-sided estimate on [-rate/2, rate/2) in ascending frequency order.
    """
    x = sig.samples
    if isinstance(sig, BinaryStream):
        x = x.astype(np.float64)
    if segment_length > x.size:
        raise SignalError(f"segment length {segment_length} exceeds signal length {x.size}")
    if not 0 <= overlap < 1:
        raise SignalError("overlap must be in [0, 1)")
    noverlap = int(segment_length * overlap)
    if np.iscomplexobj(x):
        f, p = sps.welch(x, fs=sig.rate, window=window, nperseg=segment_length,
                         noverlap=noverlap, return_onesided=False, detrend=False)
        f, p = np.fft.fftshift(f), np.fft.fftshift(p)
    else:
        f, p = sps.welch(x, fs=sig.rate, window=window, nperseg=segment_length,
                         noverlap=noverlap, detrend=False)
    return f, p


def occupied_bandwidth(freqs, psd, level_db: float = -30.0) -> float:
    """Width between the outermost frequencies where the PSD is within ``level_db`` of its peak."""
    ref = np.max(psd)
    idx = np.nonzero(psd >= ref * 10 ** (level_db / 10))[0]
    return float(freqs[idx[-1]] - freqs[idx[0]])


# ---------------------------------------------------------------------------
# debugging dumps
# ---------------------------------------------------------------------------

_KINDS = {PassbandSignal: 1, BasebandSignal: 2, BinaryStream: 3}
_MAGIC = b"RSIG"
_HEADER = struct.Struct("<4sBdQd")


def dump_signal(sig, path) -> None:
    """Write ``sig`` as: magic, kind byte, rate, length, center frequency, then LE float64 data.

    Complex samples are interleaved (re, im).
    """
    kind = _KINDS[type(sig)]
    fc = sig.center_frequency if isinstance(sig, BasebandSignal) else 0.0
    x = sig.samples
    if kind == 2:
        data = np.empty(2 * x.size, dtype="<f8")
        data[0::2], data[1::2] = x.real, x.imag
    else:
        data = x.astype("<f8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, kind, float(sig.rate), x.size, fc))
        fh.write(data.tobytes())


def load_signal(path):
    raw = Path(path).read_bytes()
    magic, kind, rate, length, fc = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise SignalError(f"{path}: not a signal dump")
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if kind == 1:
        return PassbandSignal(data[:length].copy(), rate)
    if kind == 2:
        return BasebandSignal(data[0::2][:length] + 1j * data[1::2][:length], rate, fc)
    if kind == 3:
        return BinaryStream(data[:length].astype(np.int8), rate)
    raise SignalError(f"{path}: unknown signal kind {kind}")
