"""Gauss-Markov SNR process and the SNR -> CQI -> MCS/BLER/capacity chain."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CQI_EFFICIENCY = np.array([
    0.0, 0.1523, 0.2344, 0.3770, 0.6016, 0.8770, 1.1758, 1.4766,
    1.9141, 2.4063, 2.7305, 3.3223, 3.9023, 4.5234, 5.1152, 5.5547,
])

SUBCARRIERS_PER_PRB = 12
SYMBOLS_PER_SLOT = 14
SLOT_MS = 0.5  # 30 kHz subcarrier spacing

# BLER curve offset (dB); see ``bler_probability``.
DEFAULT_BLER_OFFSET_DB = -8.0
BLER_SLOPE_DB = 1.5


def snr_to_cqi(snr_db):
    """Monotone SNR -> CQI map, clamped to 0..15. Works on scalars and arrays."""
    cqi = np.clip(np.floor((np.asarray(snr_db, dtype=np.float64) + 6.0) / 2.2), 0, 15)
    return cqi.astype(np.int64) if np.ndim(cqi) else int(cqi)


def cqi_to_mcs(cqi):
    mcs = np.clip(2 * np.asarray(cqi, dtype=np.int64) - 2, 0, 28)
    return mcs if np.ndim(mcs) else int(mcs)


def cqi_to_efficiency(cqi):
    c = np.asarray(cqi)
    if np.any(c < 0) or np.any(c > 15):
        raise IndexError(f"CQI index out of range 0..15: {cqi}")
    eff = CQI_EFFICIENCY[c]
    return eff if np.ndim(eff) else float(eff)


def bler_threshold(mcs, offset_db: float = DEFAULT_BLER_OFFSET_DB):
    return offset_db + 1.1 * np.asarray(mcs, dtype=np.float64)


def bler_probability(snr_db, mcs, offset_db: float = DEFAULT_BLER_OFFSET_DB):
    """Logistic block error probability around an MCS-dependent SNR threshold."""
    x = (np.asarray(snr_db, dtype=np.float64) - bler_threshold(mcs, offset_db)) / BLER_SLOPE_DB
    p = 0.5 * (1.0 - np.tanh(0.5 * x))  # 1 / (1 + e^x), overflow-free
    return p if np.ndim(p) else float(p)


def prb_capacity(efficiency, round_ms: float, dl_fraction: float = 0.7,
                 overhead: float = 0.14, layers: int = 1):
    """Bits one PRB carries over a round of ``round_ms`` milliseconds."""
    slots = round_ms / SLOT_MS
    return (np.asarray(efficiency, dtype=np.float64) * SUBCARRIERS_PER_PRB * SYMBOLS_PER_SLOT
            * slots * dl_fraction * (1.0 - overhead) * layers)


@dataclass(frozen=True)
class ChannelState:
    snr_db: float
    mean_snr_db: float
    correlation: float = 0.9
    noise_db: float = 1.5
    cqi: int = 0
    mcs: int = 0
    bler_prob: float = 0.0

    @classmethod
    def at(cls, snr_db: float, mean_snr_db: float, correlation: float = 0.9,
           noise_db: float = 1.5, offset_db: float = DEFAULT_BLER_OFFSET_DB) -> "ChannelState":
        cqi = snr_to_cqi(snr_db)
        mcs = cqi_to_mcs(cqi)
        return cls(snr_db, mean_snr_db, correlation, noise_db, cqi, mcs,
                   bler_probability(snr_db, mcs, offset_db))


def step_channel(state: ChannelState, rng: np.random.Generator,
                 offset_db: float = DEFAULT_BLER_OFFSET_DB) -> ChannelState:
    """One AR(1) step of the SNR around its mean, with derived fields refreshed."""
    if not 0.0 <= state.correlation < 1.0:
        raise ValueError("channel correlation must lie in [0, 1)")
    xi = rng.standard_normal()
    snr = (state.mean_snr_db + state.correlation * (state.snr_db - state.mean_snr_db)
           + state.noise_db * xi)
    return ChannelState.at(snr, state.mean_snr_db, state.correlation, state.noise_db, offset_db)


def stationary_std(correlation: float, noise_db: float) -> float:
    return noise_db / np.sqrt(1.0 - correlation ** 2)
