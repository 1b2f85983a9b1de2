"""Central-unit processing: channel estimation, equalization, ZF precoding and combining.

Matrix functions accept a single B x U matrix or a stack (K, B, U), one per
subcarrier; the flat-channel formulas are applied independently per slice.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .modem import OfdmConfig

log = logging.getLogger(__name__)

RANK_TOL = 1e-10


class RankError(np.linalg.LinAlgError):
    """A matrix that must be inverted is (numerically) rank deficient."""


@dataclass(frozen=True, eq=False)
class ChannelEstimate:
    H: np.ndarray
    snr_db: float | None = None


@dataclass(frozen=True, eq=False)
class EqualizerTaps:
    taps: np.ndarray
    delay: int  # index of the reference tap

    @property
    def L(self) -> int:
        return self.taps.size


@dataclass(frozen=True, eq=False)
class PrecodeMatrix:
    P: np.ndarray
    scale: float = 1.0
    direction: str = "downlink"

    @property
    def scaled(self) -> np.ndarray:
        return self.scale * self.P


def _check_rank(M: np.ndarray, what: str):
    s = np.linalg.svd(M, compute_uv=False)
    smax = s[..., :1]
    if np.any(s[..., -1:] <= RANK_TOL * np.maximum(smax, 1e-300)):
        raise RankError(f"{what} is rank deficient (singular values {np.round(s, 12).tolist()})")


# ---------------------------------------------------------------------------
# estimation
# ---------------------------------------------------------------------------

def ls_estimate(rx_pilots: np.ndarray, pilots: np.ndarray) -> ChannelEstimate:
    """H = Y P^H (P P^H)^-1 for Y (B x L) and pilot rows P (U x L)."""
    Y = np.atleast_2d(np.asarray(rx_pilots, dtype=complex))
    P = np.atleast_2d(np.asarray(pilots, dtype=complex))
    if Y.shape[-1] != P.shape[-1]:
        raise ValueError(f"pilot length mismatch: {Y.shape[-1]} vs {P.shape[-1]}")
    G = P @ P.conj().T
    _check_rank(G, "pilot Gram matrix")
    H = np.linalg.solve(G.T, (Y @ P.conj().T).T).T
    resid = Y - H @ P
    dof = Y.shape[0] * max(P.shape[1] - P.shape[0], 1)
    n_pow = np.sum(np.abs(resid) ** 2) / dof
    s_pow = np.mean(np.abs(H @ P) ** 2)
    snr = 10 * math.log10(s_pow / n_pow) if n_pow > 0 and s_pow > 0 else None
    return ChannelEstimate(H, snr)


def delay_window(raw: np.ndarray, window: int, fft_size: int, backoff: int = 0) -> np.ndarray:
    """Smooth per-subcarrier estimates on a contiguous grid by delay-domain windowing.

    ``window`` and ``backoff`` are in samples at the full FFT rate; on a grid of
    K < fft_size bins they scale by K / fft_size. Taps at delays
    [-backoff, window) are kept; the last axis of ``raw`` is the grid.
    """
    K = raw.shape[-1]
    if window < 1 or window > fft_size:
        raise ValueError(f"delay window must be in [1, fft_size={fft_size}], got {window}")
    if K > fft_size:
        raise ValueError("grid longer than the FFT")
    w = max(1, math.ceil(window * K / fft_size))
    b = math.ceil(backoff * K / fft_size) if backoff > 0 else 0
    h = np.fft.ifft(raw, axis=-1)
    keep = np.zeros(K, dtype=bool)
    keep[:w] = True
    if b:
        keep[K - b:] = True
    h[..., ~keep] = 0
    return np.fft.fft(h, axis=-1)


def ofdm_ls_estimate(rx_sc: np.ndarray, pilot: np.ndarray, cfg: OfdmConfig, delay_window_len: int = 20,
                     backoff: int = 4) -> ChannelEstimate:
    """Per-subcarrier LS estimate from one full pilot symbol, smoothed in the delay domain.

    ``rx_sc`` has the occupied subcarriers on its last axis in the order of
    ``cfg.subcarrier_indices()``. Unused bins inside the occupied span (DC)
    are interpolated before the transform and dropped afterwards.
    """
    rx_sc = np.asarray(rx_sc, dtype=complex)
    pilot = np.asarray(pilot, dtype=complex)
    idx = cfg.subcarrier_indices()
    if rx_sc.shape[-1] != idx.size or pilot.shape[-1] != idx.size:
        raise ValueError("subcarrier count mismatch")
    raw = rx_sc / pilot
    grid_idx = np.arange(idx.min(), idx.max() + 1)
    pos = idx - idx.min()
    flat = raw.reshape(-1, idx.size)
    grid = np.empty((flat.shape[0], grid_idx.size), dtype=complex)
    for r in range(flat.shape[0]):
        grid[r] = (np.interp(grid_idx, idx, flat[r].real) + 1j * np.interp(grid_idx, idx, flat[r].imag))
    sm = delay_window(grid, delay_window_len, cfg.fft_size, backoff)
    H = sm[:, pos].reshape(raw.shape)
    return ChannelEstimate(H)


# ---------------------------------------------------------------------------
# equalization
# ---------------------------------------------------------------------------

def _conv_matrix(rx: np.ndarray, L: int, delay: int) -> np.ndarray:
    """Rows n: rx[n + delay - k] for k = 0..L-1 (zero outside the record)."""
    n = rx.size
    X = np.zeros((n, L), dtype=complex)
    for k in range(L):
        s = delay - k
        if s >= 0:
            X[: n - s, k] = rx[s:]
        else:
            X[-s:, k] = rx[: n + s]
    return X


def fit_equalizer(rx: np.ndarray, training: np.ndarray, L: int) -> EqualizerTaps:
    """Symbol-spaced LS equalizer minimizing sum |training - taps * rx|^2."""
    rx = np.asarray(rx, dtype=complex)
    tr = np.asarray(training, dtype=complex)
    if L < 1:
        raise ValueError("L must be >= 1")
    if tr.size < 4 * L or rx.size < tr.size:
        raise ValueError(f"training length {tr.size} must be >= 4L = {4 * L} and <= rx length")
    delay = L // 2
    X = _conv_matrix(rx[: tr.size], L, delay)
    _check_rank(X, "equalizer data matrix")
    w, *_ = np.linalg.lstsq(X, tr, rcond=None)
    return EqualizerTaps(w, delay)


def apply_equalizer(rx: np.ndarray, eq: EqualizerTaps) -> np.ndarray:
    rx = np.asarray(rx, dtype=complex)
    return _conv_matrix(rx, eq.L, eq.delay) @ eq.taps


# ---------------------------------------------------------------------------
# spatial processing
# ---------------------------------------------------------------------------

def _matrix(est) -> np.ndarray:
    H = est.H if isinstance(est, ChannelEstimate) else np.asarray(est, dtype=complex)
    if H.ndim < 2:
        raise ValueError("channel estimate must be at least 2-D")
    B, U = H.shape[-2:]
    if B < U:
        raise ValueError(f"need B >= U, got B={B}, U={U}")
    return H


def zf_precoder(est, direction: str = "downlink", power_budget: float | None = None,
                per_rrh_limit: float | None = None) -> PrecodeMatrix:
    """P = H* (H^T H*)^-1 so that H^T P = I.

    With ``power_budget`` the scale makes ||scale*P||_F^2 equal the budget
    (unit-power streams). Rows whose power then exceeds ``per_rrh_limit`` are
    reported with a warning.
    """
    if direction not in ("downlink", "uplink"):
        raise ValueError("direction must be 'downlink' or 'uplink'")
    H = _matrix(est)
    G = np.swapaxes(H, -1, -2) @ H.conj()
    _check_rank(G, "H^T H*")
    P = H.conj() @ np.linalg.inv(G)
    pm = PrecodeMatrix(P, 1.0, direction)
    return normalize_power(pm, power_budget, per_rrh_limit) if power_budget is not None else pm


def normalize_power(pm: PrecodeMatrix, budget: float, per_rrh_limit: float | None = None) -> PrecodeMatrix:
    total = float(np.sum(np.abs(pm.P) ** 2))
    if total == 0:
        raise RankError("precoder is all zero")
    scale = math.sqrt(budget / total)
    if per_rrh_limit is not None:
        rows = np.sum(np.abs(scale * pm.P) ** 2, axis=tuple(i for i in range(pm.P.ndim) if i != pm.P.ndim - 2))
        over = np.flatnonzero(rows > per_rrh_limit * (1 + 1e-12))
        if over.size:
            log.warning("per-RRH power limit %.3g exceeded at RRH %s", per_rrh_limit, over.tolist())
    return PrecodeMatrix(pm.P, scale, pm.direction)


def zf_combiner(est) -> np.ndarray:
    """W = (H^H H)^-1 H^H, so W H = I."""
    H = _matrix(est)
    Hh = np.conj(np.swapaxes(H, -1, -2))
    G = Hh @ H
    _check_rank(G, "H^H H")
    return np.linalg.solve(G, Hh)


def apply_calibration(pm: PrecodeMatrix, c: np.ndarray, power_budget: float | None = None) -> PrecodeMatrix:
    """C^-1 P with C = diag(c); renormalized to ``power_budget`` (default: the input's power)."""
    c = np.asarray(getattr(c, "c", c), dtype=complex)
    if c.shape[0] != pm.P.shape[-2]:
        raise ValueError(f"calibration has {c.shape[0]} entries, precoder has {pm.P.shape[-2]} rows")
    if np.any(np.abs(c) == 0):
        raise RankError("calibration matrix is singular")
    P = pm.P / c[:, None]
    budget = power_budget if power_budget is not None else float(np.sum(np.abs(pm.scaled) ** 2))
    return normalize_power(PrecodeMatrix(P, 1.0, pm.direction), budget)
