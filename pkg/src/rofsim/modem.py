"""Symbol mapping, RRC single-carrier and OFDM modulation, pilot sequences."""
from __future__ import annotations

import functools
from dataclasses import dataclass, field
from math import gcd

import numpy as np

from .sigcore import BasebandSignal, SignalError


class SyncError(RuntimeError):
    """Timing recovery failed."""


# ---------------------------------------------------------------------------
# constellations
# ---------------------------------------------------------------------------

BITS_PER_SYMBOL = {"QPSK": 2, "16QAM": 4}


def _gray(n: int) -> np.ndarray:
    return np.arange(n) ^ (np.arange(n) >> 1)


@functools.lru_cache(maxsize=None)
def constellation(scheme: str) -> np.ndarray:
    """Unit-average-power points indexed by the integer value of their bit pattern (MSB first)."""
    if scheme not in BITS_PER_SYMBOL:
        raise ValueError(f"unknown modulation scheme {scheme!r}")
    k = BITS_PER_SYMBOL[scheme] // 2
    m = 2**k
    levels = 2 * np.arange(m) - (m - 1)          # -3 -1 1 3 for 16QAM
    pam = np.empty(m)
    pam[_gray(m)] = levels                       # bits -> level with Gray order
    pts = np.empty(m * m, dtype=complex)
    for hi in range(m):
        for lo in range(m):
            pts[hi * m + lo] = pam[hi] + 1j * pam[lo]
    pts /= np.sqrt(np.mean(np.abs(pts) ** 2))
    pts.setflags(write=False)
    return pts


@dataclass(frozen=True, eq=False)
class SymbolFrame:
    symbols: np.ndarray
    scheme: str = "16QAM"
    pilot_positions: np.ndarray | None = None
    pilot_values: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "symbols", np.asarray(self.symbols, dtype=complex))

    def __len__(self):
        return self.symbols.size


def map_symbols(bits, scheme: str = "16QAM") -> SymbolFrame:
    """Gray-map ``bits`` (MSB first within each symbol) onto a unit-power constellation."""
    bits = np.asarray(bits, dtype=np.int64).ravel()
    k = BITS_PER_SYMBOL.get(scheme)
    if k is None:
        raise ValueError(f"unknown modulation scheme {scheme!r}")
    if bits.size % k:
        raise ValueError(f"{bits.size} bits is not a multiple of {k} bits/symbol for {scheme}")
    if np.any((bits != 0) & (bits != 1)):
        raise ValueError("bits must be 0 or 1")
    idx = bits.reshape(-1, k) @ (1 << np.arange(k - 1, -1, -1))
    return SymbolFrame(constellation(scheme)[idx], scheme)


def demap_symbols(symbols, scheme: str = "16QAM") -> np.ndarray:
    """Minimum-distance hard decisions.

    Ties go to the lowest bit-pattern index, i.e. the lexicographically
    smallest bit pattern (argmin returns the first minimum).
    """
    pts = constellation(scheme)
    k = BITS_PER_SYMBOL[scheme]
    s = np.asarray(symbols, dtype=complex).ravel()
    d = np.abs(s[:, None] - pts[None, :]) ** 2
    # round to suppress float noise on exact ties
    idx = np.argmin(np.round(d, 12), axis=1)
    return ((idx[:, None] >> np.arange(k - 1, -1, -1)) & 1).astype(np.int8).ravel()


def random_symbols(rng: np.random.Generator, n: int, scheme: str = "16QAM") -> SymbolFrame:
    bits = rng.integers(0, 2, n * BITS_PER_SYMBOL[scheme])
    return map_symbols(bits, scheme)


# ---------------------------------------------------------------------------
# pilots
# ---------------------------------------------------------------------------

def zadoff_chu(root: int, length: int) -> np.ndarray:
    """Zadoff-Chu sequence; odd length uses n(n+1), even length n**2."""
    if length < 1:
        raise ValueError("length must be positive")
    if gcd(root, length) != 1:
        raise ValueError(f"root {root} and length {length} must be coprime")
    n = np.arange(length, dtype=np.int64)
    k = n * (n + 1) if length % 2 else n * n
    # exact reduction of root*k mod 2*length before scaling
    m = (root * k) % (2 * length)
    return np.exp(-1j * np.pi * m / length)


def zc_preamble(length: int = 64, root: int = 25) -> np.ndarray:
    return zadoff_chu(root, length)


# ---------------------------------------------------------------------------
# single carrier
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WaveformConfig:
    scheme: str = "16QAM"
    symbol_rate: float = 10e6
    rolloff: float = 0.2
    samples_per_symbol: int = 8
    span: int = 16

    def __post_init__(self):
        if self.scheme not in BITS_PER_SYMBOL:
            raise ValueError(f"unknown modulation scheme {self.scheme!r}")
        if not 0 <= self.rolloff <= 1:
            raise ValueError(f"rolloff must be in [0, 1], got {self.rolloff}")
        if self.symbol_rate <= 0:
            raise ValueError("symbol rate must be positive")
        if self.samples_per_symbol < 2:
            raise ValueError("samples_per_symbol must be >= 2")

    @property
    def bandwidth(self) -> float:
        """Occupied bandwidth R_s(1+alpha)."""
        return self.symbol_rate * (1 + self.rolloff)

    @property
    def sample_rate(self) -> float:
        return self.symbol_rate * self.samples_per_symbol


@functools.lru_cache(maxsize=32)
def rrc_taps(sps: int, rolloff: float, span: int = 16) -> np.ndarray:
    """Root-raised-cosine taps over ``span`` symbols with a raised-cosine taper on the outer half.

    Normalized to sum(h**2) == sps so unit-power symbols give a unit-power waveform.
    """
    n = span * sps
    t = (np.arange(n + 1) - n / 2) / sps
    a = rolloff
    h = np.empty_like(t)
    for i, ti in enumerate(t):
        if abs(ti) < 1e-12:
            h[i] = 1 - a + 4 * a / np.pi
        elif a > 0 and abs(abs(ti) - 1 / (4 * a)) < 1e-9:
            h[i] = (a / np.sqrt(2)) * ((1 + 2 / np.pi) * np.sin(np.pi / (4 * a))
                                      + (1 - 2 / np.pi) * np.cos(np.pi / (4 * a)))
        else:
            h[i] = (np.sin(np.pi * ti * (1 - a)) + 4 * a * ti * np.cos(np.pi * ti * (1 + a))) / (
                np.pi * ti * (1 - (4 * a * ti) ** 2))
    # raised-cosine taper over the outer half; a quarter leaves ISI near -41 dB
    taper = np.ones_like(t)
    edge = np.abs(t) > 0.5 * span / 2
    taper[edge] = 0.5 * (1 + np.cos(np.pi * (np.abs(t[edge]) - 0.5 * span / 2) / (0.5 * span / 2)))
    h *= taper
    h *= np.sqrt(sps / np.sum(h**2))
    h.setflags(write=False)
    return h


def rrc_modulate(frame, cfg: WaveformConfig) -> BasebandSignal:
    """Pulse-shape symbols; the output includes the full filter tails.

    Symbol k peaks at sample ``offset + k*sps`` where ``offset = span*sps/2``
    (stored in ``meta``).
    """
    s = frame.symbols if isinstance(frame, SymbolFrame) else np.asarray(frame, dtype=complex)
    sps = cfg.samples_per_symbol
    h = rrc_taps(sps, cfg.rolloff, cfg.span)
    up = np.zeros(s.size * sps, dtype=complex)
    up[::sps] = s
    y = np.convolve(up, h) if s.size else np.zeros(0, complex)
    meta = {"rrc_span": cfg.span, "rrc_taps": h.size, "first_symbol": (h.size - 1) // 2,
            "taper": "raised-cosine outer 50%", "symbols": s.size}
    return BasebandSignal(y, cfg.sample_rate, meta=meta)


def matched_filter(bb: BasebandSignal, cfg: WaveformConfig) -> np.ndarray:
    h = rrc_taps(cfg.samples_per_symbol, cfg.rolloff, cfg.span)
    return np.convolve(bb.samples, h[::-1].conj() / cfg.samples_per_symbol)


def find_timing(x: np.ndarray, preambles, sps: int, threshold: float = 0.5) -> int:
    """Sample index of the first preamble symbol in ``x``.

    ``preambles`` is one sequence or a stack of sequences sent simultaneously;
    the metric is the summed correlation energy. Raises :class:`SyncError`
    when the normalized peak is below ``threshold``.
    """
    pre = np.atleast_2d(np.asarray(preambles, dtype=complex))
    L = pre.shape[1]
    span = (L - 1) * sps + 1
    if x.size < span:
        raise SyncError("signal shorter than the preamble")
    metric = np.zeros(x.size - span + 1)
    energy = np.convolve(np.abs(x) ** 2, np.ones(span), mode="valid")
    for p in pre:
        up = np.zeros(span, dtype=complex)
        up[::sps] = p
        # correlate: sum_k conj(p_k) x[n + k*sps]
        c = np.convolve(x, up[::-1].conj(), mode="valid")
        metric += np.abs(c) ** 2
    # normalize by the energy of the samples on the symbol grid (approximated by sliding energy / sps)
    grid_energy = energy / sps
    pe = np.sum(np.abs(pre) ** 2, axis=1).max()
    norm = metric / np.maximum(grid_energy * pe, 1e-300)
    k = int(np.argmax(metric))
    if norm[k] < threshold**2:
        raise SyncError(f"preamble correlation peak {np.sqrt(norm[k]):.3f} below threshold {threshold}")
    return k


def rrc_demodulate(bb: BasebandSignal, cfg: WaveformConfig, preamble=None, n_symbols: int | None = None,
                   timing_offset: int | None = None, threshold: float = 0.5) -> SymbolFrame:
    """Matched filter and symbol-instant decimation.

    Timing comes from ``timing_offset`` (sample index of the first symbol in
    the matched-filter output) or, when a ``preamble`` is given, from the
    preamble correlation peak. The returned frame starts at the first
    preamble symbol.
    """
    sps = cfg.samples_per_symbol
    if abs(bb.rate / cfg.symbol_rate - sps) > 1e-9 * sps:
        raise ValueError(f"baseband rate {bb.rate:g} is not {sps} x symbol rate {cfg.symbol_rate:g}")
    y = matched_filter(bb, cfg)
    if timing_offset is None:
        if preamble is None:
            timing_offset = 2 * ((rrc_taps(sps, cfg.rolloff, cfg.span).size - 1) // 2)
        else:
            timing_offset = find_timing(y, preamble, sps, threshold)
    avail = (y.size - 1 - timing_offset) // sps + 1
    n = avail if n_symbols is None else min(n_symbols, avail)
    if n_symbols is not None and avail < n_symbols:
        raise SyncError(f"only {avail} symbols available after timing offset, {n_symbols} requested")
    sym = y[timing_offset + np.arange(n) * sps]
    return SymbolFrame(sym, cfg.scheme)


# ---------------------------------------------------------------------------
# OFDM
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OfdmConfig:
    subcarrier_spacing: float = 60e3
    fft_size: int = 2048
    cyclic_prefix_length: int = 144
    occupied_subcarriers: int = 1200
    scheme: str = "16QAM"

    def __post_init__(self):
        if not 0 < self.occupied_subcarriers < self.fft_size:
            raise ValueError("occupied_subcarriers must be in (0, fft_size)")
        if not 0 <= self.cyclic_prefix_length < self.fft_size:
            raise ValueError("cyclic prefix must be shorter than the FFT")

    @property
    def sample_rate(self) -> float:
        return self.subcarrier_spacing * self.fft_size

    @property
    def symbol_duration(self) -> float:
        """Useful symbol time, excluding the cyclic prefix."""
        return 1.0 / self.subcarrier_spacing

    @property
    def symbol_length(self) -> int:
        return self.fft_size + self.cyclic_prefix_length

    @property
    def bandwidth(self) -> float:
        return self.occupied_subcarriers * self.subcarrier_spacing

    def subcarrier_indices(self) -> np.ndarray:
        """Signed subcarrier indices, centered, DC skipped (odd counts put the extra one above DC)."""
        n = self.occupied_subcarriers
        neg = n // 2
        pos = n - neg
        return np.concatenate([np.arange(-neg, 0), np.arange(1, pos + 1)])


def ofdm_modulate(frame, cfg: OfdmConfig) -> BasebandSignal:
    """IFFT + cyclic prefix per OFDM symbol; unit average power over the useful part."""
    s = frame.symbols if isinstance(frame, SymbolFrame) else np.asarray(frame, dtype=complex)
    n_occ = cfg.occupied_subcarriers
    if s.size % n_occ:
        raise ValueError(f"{s.size} symbols is not a multiple of {n_occ} occupied subcarriers")
    grid = np.zeros((s.size // n_occ, cfg.fft_size), dtype=complex)
    grid[:, cfg.subcarrier_indices() % cfg.fft_size] = s.reshape(-1, n_occ)
    td = np.fft.ifft(grid, axis=1) * (cfg.fft_size / np.sqrt(n_occ))
    cp = cfg.cyclic_prefix_length
    out = np.concatenate([td[:, cfg.fft_size - cp:], td], axis=1).ravel()
    return BasebandSignal(out, cfg.sample_rate, meta={"ofdm_symbols": grid.shape[0]})


def ofdm_demodulate(bb, cfg: OfdmConfig, n_symbols: int | None = None, start: int = 0,
                    window_advance: int = 0) -> np.ndarray:
    """CP removal and FFT; returns an (n_symbols, occupied) array of subcarrier values.

    ``start`` is the index of the first cyclic prefix. ``window_advance``
    starts each FFT window that many samples inside the CP (0 <= advance <= CP).
    """
    x = bb.samples if isinstance(bb, BasebandSignal) else np.asarray(bb, dtype=complex)
    cp, N = cfg.cyclic_prefix_length, cfg.fft_size
    if not 0 <= window_advance <= cp:
        raise SyncError(f"FFT window advance {window_advance} outside the cyclic prefix of {cp}")
    L = cfg.symbol_length
    avail = (x.size - start) // L
    n = avail if n_symbols is None else n_symbols
    if n > avail or start < 0:
        raise SyncError(f"frame needs {n} OFDM symbols from sample {start}, only {avail} available")
    idx = start + np.arange(n)[:, None] * L + cp - window_advance + np.arange(N)[None, :]
    spec = np.fft.fft(x[idx], axis=1) * (np.sqrt(cfg.occupied_subcarriers) / N)
    return spec[:, cfg.subcarrier_indices() % N]


def ofdm_synchronize(bb, cfg: OfdmConfig, first_symbol_td: np.ndarray, nominal_start: int = 0,
                     search: int | None = None) -> int:
    """Locate the first CP by correlating against the known first OFDM symbol (with CP).

    Raises :class:`SyncError` if the detected start is more than a cyclic
    prefix away from ``nominal_start``.
    """
    x = bb.samples if isinstance(bb, BasebandSignal) else np.asarray(bb, dtype=complex)
    ref = np.asarray(first_symbol_td, dtype=complex)
    search = search if search is not None else 4 * cfg.symbol_length
    lo = max(0, nominal_start - search)
    seg = x[lo:nominal_start + search + ref.size]
    if seg.size < ref.size:
        raise SyncError("signal too short for OFDM synchronization")
    c = np.abs(np.convolve(seg, ref[::-1].conj(), mode="valid"))
    found = lo + int(np.argmax(c))
    if abs(found - nominal_start) > cfg.cyclic_prefix_length:
        raise SyncError(
            f"OFDM timing {found} is {found - nominal_start} samples from nominal; beyond the CP")
    return found
