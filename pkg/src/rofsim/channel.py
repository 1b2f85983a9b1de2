"""Reciprocal propagation with non-reciprocal transceiver gains.

The effective uplink is ``R_rrh @ H @ T_ue`` and the effective downlink
(transposed) is ``R_ue @ H.T @ T_rrh``. Gains are stored as diagonals.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import hilbert

from .sigcore import PassbandSignal, SignalError, dbm_to_watts

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True, eq=False)
class ChannelState:
    H: np.ndarray
    r_rrh: np.ndarray
    t_rrh: np.ndarray
    r_ue: np.ndarray
    t_ue: np.ndarray
    H_rrh: np.ndarray | None = None  # symmetric inter-RRH propagation, diagonal unused

    def __post_init__(self):
        B, U = self.H.shape
        for name, n in (("r_rrh", B), ("t_rrh", B), ("r_ue", U), ("t_ue", U)):
            v = getattr(self, name)
            if v.shape != (n,):
                raise SignalError(f"{name} must have length {n}")
            if np.any(v == 0):
                raise SignalError(f"{name} has a zero gain")
        if self.H_rrh is not None and self.H_rrh.shape != (B, B):
            raise SignalError("inter-RRH matrix must be B x B")

    @property
    def B(self) -> int:
        return self.H.shape[0]

    @property
    def U(self) -> int:
        return self.H.shape[1]

    @property
    def uplink_matrix(self) -> np.ndarray:
        return self.r_rrh[:, None] * self.H * self.t_ue[None, :]

    @property
    def downlink_matrix(self) -> np.ndarray:
        """U x B matrix mapping RRH transmissions to UE receptions."""
        return self.r_ue[:, None] * self.H.T * self.t_rrh[None, :]

    @property
    def calibration(self) -> np.ndarray:
        """True diagonal of C = T_rrh R_rrh^-1."""
        return self.t_rrh / self.r_rrh

    def with_gains(self, **kw) -> "ChannelState":
        d = dict(H=self.H, r_rrh=self.r_rrh, t_rrh=self.t_rrh, r_ue=self.r_ue, t_ue=self.t_ue,
                 H_rrh=self.H_rrh)
        d.update(kw)
        return ChannelState(**d)


@dataclass(frozen=True)
class NoiseConfig:
    """Complex AWGN per receiver; ``power_dbm`` None disables noise."""

    power_dbm: float | None = None
    seed: int = 0


@dataclass(frozen=True)
class Geometry:
    rrh_positions: np.ndarray
    ue_positions: np.ndarray
    wavelength: float = SPEED_OF_LIGHT / 2.35e9


def default_geometry(B: int, U: int, distance: float = 2.0, spacing: float = 1.0,
                     wavelength: float = SPEED_OF_LIGHT / 2.35e9) -> Geometry:
    """RRHs on a line, UEs on a parallel line ``distance`` metres away."""
    rrh = np.column_stack([np.arange(B) * spacing - (B - 1) * spacing / 2, np.zeros(B), np.zeros(B)])
    ue_sp = spacing * 0.7
    ue = np.column_stack([np.arange(U) * ue_sp - (U - 1) * ue_sp / 2, np.full(U, distance), np.zeros(U)])
    return Geometry(rrh, ue, wavelength)


def free_space(d: np.ndarray, wavelength: float) -> np.ndarray:
    """h = (lambda / (4 pi d)) exp(-j 2 pi d / lambda)."""
    if np.any(d <= 0):
        raise SignalError("coincident node positions")
    return wavelength / (4 * np.pi * d) * np.exp(-2j * np.pi * d / wavelength)


def _distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.linalg.norm(a[:, None, :] - b[None, :, :], axis=-1)


def random_gains(rng: np.random.Generator, n: int, spread_db: float = 3.0) -> np.ndarray:
    """Magnitudes log-uniform in +-spread_db, phases uniform."""
    mag = 10 ** (rng.uniform(-spread_db, spread_db, n) / 20)
    return mag * np.exp(2j * np.pi * rng.uniform(0, 1, n))


def draw_channel(model: str, B: int, U: int, seed: int = 0, geometry: Geometry | None = None,
                 gains: str = "random", gain_spread_db: float = 3.0) -> ChannelState:
    """Draw H, the inter-RRH channel and the transceiver gains.

    ``model`` is "los" (free-space from node positions) or "rayleigh"
    (unit-variance circular Gaussian). ``gains`` is "random" or "identity".
    """
    if B < 1 or U < 1:
        raise ValueError("B and U must be >= 1")
    rng = np.random.default_rng(seed)
    model = model.lower()
    if model == "los":
        g = geometry or default_geometry(B, U)
        if g.rrh_positions.shape[0] != B or g.ue_positions.shape[0] != U:
            raise ValueError("geometry does not match B, U")
        H = free_space(_distances(g.rrh_positions, g.ue_positions), g.wavelength)
        d_rr = _distances(g.rrh_positions, g.rrh_positions)
        np.fill_diagonal(d_rr, np.inf)
        if np.any(d_rr <= 0):
            raise SignalError("coincident node positions")
        H_rr = free_space(np.where(np.isinf(d_rr), 1.0, d_rr), g.wavelength)
        np.fill_diagonal(H_rr, 0)
    elif model == "rayleigh":
        H = (rng.normal(size=(B, U)) + 1j * rng.normal(size=(B, U))) / np.sqrt(2)
        G = (rng.normal(size=(B, B)) + 1j * rng.normal(size=(B, B))) / np.sqrt(2)
        H_rr = np.triu(G, 1) + np.triu(G, 1).T
    else:
        raise ValueError(f"unknown channel model {model!r}; expected 'los' or 'rayleigh'")
    if gains == "identity":
        r_rrh, t_rrh, r_ue, t_ue = np.ones(B, complex), np.ones(B, complex), np.ones(U, complex), np.ones(U, complex)
    elif gains == "random":
        r_rrh, t_rrh = random_gains(rng, B, gain_spread_db), random_gains(rng, B, gain_spread_db)
        r_ue, t_ue = random_gains(rng, U, gain_spread_db), random_gains(rng, U, gain_spread_db)
    else:
        raise ValueError(f"gains must be 'random' or 'identity', got {gains!r}")
    return ChannelState(H, r_rrh, t_rrh, r_ue, t_ue, H_rr)


# ---------------------------------------------------------------------------
# application
# ---------------------------------------------------------------------------

def _stack(tx):
    if isinstance(tx, np.ndarray):
        return np.atleast_2d(tx).astype(complex), None
    tx = list(tx)
    if not tx:
        raise SignalError("no streams")
    lens = {len(s) for s in tx}
    if len(lens) != 1:
        raise SignalError(f"streams have unequal lengths {sorted(lens)}")
    return np.vstack([np.asarray(s.samples, dtype=complex) for s in tx]), tx[0]


def complex_noise(shape, power_dbm: float, rng: np.random.Generator) -> np.ndarray:
    """Circular Gaussian noise with mean |n|^2 / 50 ohm equal to ``power_dbm``."""
    var = dbm_to_watts(power_dbm) * 50.0
    return np.sqrt(var / 2) * (rng.normal(size=shape) + 1j * rng.normal(size=shape))


def _apply(M: np.ndarray, tx, noise: NoiseConfig | None):
    X, proto = _stack(tx)
    if X.shape[0] != M.shape[1]:
        raise SignalError(f"expected {M.shape[1]} input streams, got {X.shape[0]}")
    Y = M @ X
    if noise is not None and noise.power_dbm is not None:
        Y = Y + complex_noise(Y.shape, noise.power_dbm, np.random.default_rng(noise.seed))
    if proto is None:
        return Y
    return [proto.replace(y) for y in Y]


def uplink_apply(tx, ch: ChannelState, noise: NoiseConfig | None = None):
    """U baseband streams to B receptions through R_rrh H T_ue (frequency flat)."""
    return _apply(ch.uplink_matrix, tx, noise)


def downlink_apply(tx, ch: ChannelState, noise: NoiseConfig | None = None):
    """B baseband streams to U receptions through R_ue H^T T_rrh (frequency flat)."""
    return _apply(ch.downlink_matrix, tx, noise)


def mix_passband(signals, M: np.ndarray) -> list[PassbandSignal]:
    """Apply complex gains ``M`` (outputs x inputs) to real RF signals.

    Each gain acts on the analytic signal, so a complex baseband factor g maps
    to Re{g * analytic(x)} at passband.
    """
    signals = list(signals)
    if M.shape[1] != len(signals):
        raise SignalError(f"gain matrix expects {M.shape[1]} inputs, got {len(signals)}")
    n = {len(s) for s in signals}
    if len(n) != 1:
        raise SignalError("passband signals have unequal lengths")
    A = np.vstack([hilbert(s.samples) for s in signals])
    Y = np.real(M @ A)
    return [signals[0].replace(y) for y in Y]


def add_interference(desired, interferer, sir: float):
    """Scale ``interferer`` so P_desired / P_interferer equals ``sir`` dB and add it.

    ``sir`` of +inf returns ``desired`` unchanged.
    """
    if np.isposinf(sir):
        return desired
    if abs(desired.rate - interferer.rate) > 1e-9 * desired.rate:
        raise SignalError("desired and interferer rates differ")
    if len(desired) != len(interferer):
        raise SignalError("desired and interferer lengths differ")
    p_i = np.mean(np.abs(interferer.samples) ** 2)
    if p_i == 0:
        raise SignalError("interferer has zero power")
    p_d = np.mean(np.abs(desired.samples) ** 2)
    g = np.sqrt(p_d / p_i * 10 ** (-sir / 10))
    return desired.replace(desired.samples + g * interferer.samples)
