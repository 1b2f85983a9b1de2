"""Over-the-air reciprocity calibration among RRHs.

Every RRH pair (i, j) is measured in both directions. With Y[i, j] = r_i h_ij t_j
and a symmetric h, the diagonal c = t / r satisfies c_i Y[i, j] = c_j Y[j, i],
so c is found as the minimizer of sum_{i<j} |c_i Y[i, j] - c_j Y[j, i]|^2 on
the sphere ||c|| = sqrt(B).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelState, complex_noise
from .cu_dsp import ls_estimate
from .modem import zadoff_chu


class CalibrationError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class SoundingMatrix:
    """Y[i, j]: measurement at RRH i while RRH j transmits; the diagonal is ignored."""

    Y: np.ndarray

    def __post_init__(self):
        Y = self.Y
        if Y.ndim != 2 or Y.shape[0] != Y.shape[1]:
            raise ValueError("sounding matrix must be square")
        off = ~np.eye(Y.shape[0], dtype=bool)
        if not np.all(np.isfinite(Y[off])):
            raise ValueError("sounding matrix has non-finite off-diagonal entries")

    @property
    def B(self) -> int:
        return self.Y.shape[0]


@dataclass(frozen=True, eq=False)
class CalibrationMatrix:
    c: np.ndarray
    cost: float = 0.0
    iterations: int = 0

    @property
    def matrix(self) -> np.ndarray:
        return np.diag(self.c)


def simulate_sounding(ch: ChannelState, pilot: np.ndarray | None = None, snr_db: float | None = None,
                      noise_power_dbm: float | None = None, seed: int = 0) -> SoundingMatrix:
    """Directed pilot exchange over the inter-RRH channel, LS-estimated per link.

    ``snr_db`` sets noise relative to the mean received pilot power over all
    links; ``noise_power_dbm`` sets it absolutely. Neither gives a noiseless run.
    """
    if ch.H_rrh is None:
        raise ValueError("channel state has no inter-RRH propagation matrix")
    B = ch.B
    if B < 2:
        raise ValueError("calibration needs at least two RRHs")
    G = ch.H_rrh
    if not np.allclose(G, G.T):
        raise ValueError("inter-RRH propagation must be symmetric")
    p = zadoff_chu(25, 63) if pilot is None else np.asarray(pilot, dtype=complex)
    clean = ch.r_rrh[:, None] * G * ch.t_rrh[None, :]
    off = ~np.eye(B, dtype=bool)
    rng = np.random.default_rng(seed)
    if snr_db is not None:
        sig = np.mean(np.abs(clean[off]) ** 2) * np.mean(np.abs(p) ** 2)
        n_var = sig * 10 ** (-snr_db / 10)
    elif noise_power_dbm is not None:
        n_var = None
    else:
        n_var = 0.0
    Y = np.zeros((B, B), dtype=complex)
    for i in range(B):
        for j in range(B):
            if i == j:
                continue
            rx = clean[i, j] * p
            if n_var is None:
                rx = rx + complex_noise(p.shape, noise_power_dbm, rng)
            elif n_var > 0:
                rx = rx + np.sqrt(n_var / 2) * (rng.normal(size=p.size) + 1j * rng.normal(size=p.size))
            Y[i, j] = ls_estimate(rx[None, :], p[None, :]).H[0, 0]
    return SoundingMatrix(Y)


def quadratic_form(Y: np.ndarray) -> np.ndarray:
    """Hermitian Q with c^H Q c = sum_{i<j} |c_i Y[i, j] - c_j Y[j, i]|^2."""
    B = Y.shape[0]
    Q = np.zeros((B, B), dtype=complex)
    for i in range(B):
        for j in range(i + 1, B):
            a, b = Y[i, j], Y[j, i]
            Q[i, i] += abs(a) ** 2
            Q[j, j] += abs(b) ** 2
            Q[i, j] += -np.conj(a) * b
            Q[j, i] += -a * np.conj(b)
    return Q


def _cost(Q, c) -> float:
    return float(np.real(np.conj(c) @ Q @ c))


def estimate_c(Y, tol: float = 1e-10, max_iter: int = 10_000, noise_floor: float | None = None) -> CalibrationMatrix:
    """Calibration diagonal from a sounding matrix, normalized to c[0] = 1.

    The smallest eigenvector of the quadratic form starts a projected gradient
    descent on ||c|| = sqrt(B); iteration stops when the relative cost change
    drops below ``tol``.
    """
    Y = Y.Y if isinstance(Y, SoundingMatrix) else np.asarray(Y, dtype=complex)
    B = Y.shape[0]
    if B < 2:
        raise ValueError("calibration needs at least two RRHs")
    off = ~np.eye(B, dtype=bool)
    floor = noise_floor if noise_floor is not None else 1e-12 * np.max(np.abs(Y[off]))
    for i in range(B):
        links = np.abs(np.concatenate([np.delete(Y[i], i), np.delete(Y[:, i], i)]))
        if np.all(links <= floor):
            raise CalibrationError(f"RRH {i} is isolated: no sounding link above the noise floor")
    Q = quadratic_form(Y)
    w, V = np.linalg.eigh(Q)
    c = V[:, 0] * np.sqrt(B)
    step = 1.0 / max(w[-1], 1e-300)
    cost = _cost(Q, c)
    it = 0
    for it in range(1, max_iter + 1):
        c_new = c - step * (Q @ c)
        c_new *= np.sqrt(B) / np.linalg.norm(c_new)
        new_cost = _cost(Q, c_new)
        change = abs(cost - new_cost) / max(cost, 1e-300)
        c, cost = c_new, new_cost
        if change < tol or cost <= 1e-300:
            break
    if abs(c[0]) == 0:
        raise CalibrationError("reference RRH 0 has a zero calibration coefficient")
    return CalibrationMatrix(c / c[0], cost, it)


def align(c_est: np.ndarray, c_true: np.ndarray) -> np.ndarray:
    """Remove the global complex scalar by matching the first entries."""
    return c_est * (c_true[0] / c_est[0])


def calibration_quality(ch, c_est) -> dict:
    """Maximum phase (deg), magnitude (dB) and relative error of an estimate after alignment."""
    c_true = ch.calibration if isinstance(ch, ChannelState) else np.asarray(ch, dtype=complex)
    c = np.asarray(getattr(c_est, "c", c_est), dtype=complex)
    a = align(c, c_true)
    ratio = a / c_true
    return {
        "max_phase_error_deg": float(np.max(np.abs(np.degrees(np.angle(ratio))))),
        "max_magnitude_error_db": float(np.max(np.abs(20 * np.log10(np.abs(ratio))))),
        "max_relative_error": float(np.max(np.abs(a - c_true) / np.abs(c_true))),
    }
