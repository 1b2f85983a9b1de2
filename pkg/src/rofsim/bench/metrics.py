"""EVM metrology and result containers."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..modem import SymbolFrame

# 3GPP base-station EVM limits, percent
EVM_LIMITS = {"16QAM": 12.5, "QPSK": 17.5}


def compute_evm(rx, ref) -> float:
    """RMS EVM in percent after a single complex least-squares gain fit."""
    r = np.asarray(getattr(rx, "symbols", rx), dtype=complex).ravel()
    s = np.asarray(getattr(ref, "symbols", ref), dtype=complex).ravel()
    if r.size != s.size:
        raise ValueError(f"frame lengths differ: {r.size} vs {s.size}")
    if s.size < 16:
        raise ValueError(f"EVM needs at least 16 symbols, got {s.size}")
    p_ref = np.vdot(s, s).real
    if p_ref == 0:
        raise ValueError("reference frame has zero power")
    a = np.vdot(s, r) / p_ref
    if a == 0:
        return math.inf
    err = np.sum(np.abs(r - a * s) ** 2)
    return float(100.0 * math.sqrt(err / (abs(a) ** 2 * p_ref)))


def evm_db(percent: float) -> float:
    return 20.0 * math.log10(percent / 100.0) if percent > 0 else -math.inf


def meets_limit(percent: float, scheme: str) -> bool:
    return percent <= EVM_LIMITS[scheme]


@dataclass(frozen=True, eq=False)
class EvmReport:
    """Per-stream EVM for one sweep point and repeat."""

    evm: tuple  # percent, one per UE / stream
    n_symbols: int
    fingerprint: str = ""
    scheme: str = "16QAM"
    extras: dict = field(default_factory=dict)  # additional scalar columns
    constellations: tuple = ()  # optional equalized symbols per stream

    def __post_init__(self):
        if any(not (e >= 0) for e in self.evm):
            raise ValueError(f"EVM must be non-negative, got {self.evm}")

    @property
    def passes(self) -> tuple:
        return tuple(meets_limit(e, self.scheme) for e in self.evm)


@dataclass(frozen=True, eq=False)
class PointResult:
    point: int
    repeat: int
    seed: int
    axes: tuple  # values in sweep-axis order
    report: EvmReport


@dataclass(frozen=True, eq=False)
class SweepResult:
    experiment: str
    axis_names: tuple
    results: tuple  # PointResult, sorted by (point, repeat)
    fingerprint: str = ""
    annotations: dict = field(default_factory=dict)

    def std(self, point: int) -> tuple:
        """Per-stream standard deviation of EVM over the repeats of ``point`` (0 for one repeat)."""
        rows = np.array([r.report.evm for r in self.results if r.point == point], dtype=float)
        if rows.size == 0:
            return ()
        return tuple(float(v) for v in (rows.std(axis=0, ddof=1) if len(rows) > 1 else np.zeros(rows.shape[1])))

    def mean(self, point: int) -> tuple:
        rows = np.array([r.report.evm for r in self.results if r.point == point], dtype=float)
        return tuple(float(v) for v in rows.mean(axis=0)) if rows.size else ()

    def points(self) -> list[int]:
        return sorted({r.point for r in self.results})

    def axes_of(self, point: int) -> tuple:
        for r in self.results:
            if r.point == point:
                return r.axes
        raise KeyError(point)


def as_frame(symbols, scheme: str) -> SymbolFrame:
    return SymbolFrame(np.asarray(symbols, dtype=complex), scheme)
