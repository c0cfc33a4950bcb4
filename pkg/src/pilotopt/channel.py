"""Frequency-selective MIMO-OFDM channel synthesis.

Uniform-linear-array steering vectors, per-subcarrier delay responses,
Rician path sampling, and assembly of per-subcarrier channel matrices into
the stacked channel vector consumed by the sparse-recovery pipeline.

Conventions used throughout the package: all indices are 0-based and
vectorization is column-major (``ravel(order="F")``), i.e. the receive
antenna index varies fastest, then the transmit antenna, then the
subcarrier.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SystemConfig",
    "ChannelRealization",
    "ChannelVector",
    "steering_vector",
    "delay_response",
    "subcarrier_offsets",
    "sample_channel",
    "assemble_channel",
]


@dataclass(frozen=True)
class SystemConfig:
    """MIMO-OFDM link and pilot-budget parameters.

    ``seq_len`` is the number of pilot symbols per subcarrier and
    ``total_power`` the power budget shared by all pilot blocks.
    """

    carrier_freq_hz: float
    bandwidth_hz: float
    num_subcarriers: int
    num_tx: int
    num_rx: int
    seq_len: int
    total_power: float
    num_delay_taps: int
    tx_spacing_wavelengths: float = 0.5
    rx_spacing_wavelengths: float = 0.5

    def __post_init__(self) -> None:
        if self.carrier_freq_hz <= 0 or self.bandwidth_hz <= 0:
            raise ValueError("carrier frequency and bandwidth must be positive")
        if self.num_subcarriers < 1:
            raise ValueError("num_subcarriers must be >= 1")
        if self.num_tx < 1 or self.num_rx < 1:
            raise ValueError("antenna counts must be >= 1")
        if self.seq_len < 1:
            raise ValueError("seq_len must be >= 1")
        if self.total_power <= 0:
            raise ValueError("total_power must be positive")
        if self.tx_spacing_wavelengths <= 0 or self.rx_spacing_wavelengths <= 0:
            raise ValueError("antenna spacings must be positive")
        if not 1 <= self.num_delay_taps <= self.num_subcarriers:
            raise ValueError("num_delay_taps must be in [1, num_subcarriers]")

    @property
    def max_delay_s(self) -> float:
        """Largest resolvable path delay, (num_delay_taps - 1) / bandwidth."""
        return (self.num_delay_taps - 1) / self.bandwidth_hz


@dataclass(frozen=True)
class ChannelRealization:
    """One draw of the multipath channel: per-path angles, delays, gains."""

    aoas: np.ndarray
    aods: np.ndarray
    delays: np.ndarray
    gains: np.ndarray

    def __post_init__(self) -> None:
        n = len(self.aoas)
        if n < 1:
            raise ValueError("a realization needs at least one path")
        if not (len(self.aods) == len(self.delays) == len(self.gains) == n):
            raise ValueError("path arrays must share one length")
        if np.any(self.delays < 0):
            raise ValueError("delays must be non-negative")
        for name in ("aoas", "aods", "delays"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} must be finite")
        if not np.all(np.isfinite(self.gains)):
            raise ValueError("gains must be finite")

    @property
    def num_paths(self) -> int:
        return len(self.gains)


@dataclass(frozen=True)
class ChannelVector:
    """Per-subcarrier channel matrices plus their stacked vectorization.

    ``stacked[k*Nr*Nt + t*Nr + r] == per_subcarrier[k, r, t]`` (column-major
    vec of each Nr x Nt matrix, concatenated over subcarriers).
    """

    per_subcarrier: np.ndarray  # (K, Nr, Nt) complex
    stacked: np.ndarray  # (Nr*Nt*K,) complex

    def __post_init__(self) -> None:
        k, nr, nt = self.per_subcarrier.shape
        if self.stacked.shape != (k * nr * nt,):
            raise ValueError("stacked length inconsistent with per-subcarrier shape")


def steering_vector(angle: float, n: int, spacing: float) -> np.ndarray:
    """ULA array response: element i is exp(j*2*pi*spacing*i*sin(angle)).

    ``spacing`` is the antenna spacing in carrier wavelengths.
    """
    if n < 1:
        raise ValueError("antenna count must be >= 1")
    if not math.isfinite(angle):
        raise ValueError("angle must be finite")
    phase = 2.0 * np.pi * spacing * np.arange(n) * np.sin(angle)
    return np.exp(1j * phase)


def subcarrier_offsets(config: SystemConfig) -> np.ndarray:
    """Baseband frequency offsets: -B/2 + k*B/K for k = 0..K-1."""
    k = np.arange(config.num_subcarriers)
    return -config.bandwidth_hz / 2.0 + k * config.bandwidth_hz / config.num_subcarriers


def delay_response(delay: float, config: SystemConfig) -> np.ndarray:
    """Per-subcarrier phase ramp exp(-j*2*pi*offset_k*delay), length K."""
    if delay < 0:
        raise ValueError("delay must be non-negative")
    return np.exp(-2j * np.pi * subcarrier_offsets(config) * delay)


def sample_channel(
    config: SystemConfig,
    num_paths: int,
    rician_k_db: float,
    rng_seed,
) -> ChannelRealization:
    """Draw a Rician multipath realization.

    Angles are uniform on [-pi/2, pi/2), delays uniform on
    [0, max_delay_s). Path 0 is the LoS path with gain variance
    Kf/(Kf+1); the remaining paths share variance 1/((Kf+1)(L-1)),
    so the total expected power is 1.
    """
    if num_paths < 1:
        raise ValueError("num_paths must be >= 1")
    rng = np.random.default_rng(rng_seed)
    aoas = rng.uniform(-np.pi / 2, np.pi / 2, num_paths)
    aods = rng.uniform(-np.pi / 2, np.pi / 2, num_paths)
    delays = rng.uniform(0.0, config.max_delay_s, num_paths)

    k_factor = 10.0 ** (rician_k_db / 10.0)
    variances = np.empty(num_paths)
    variances[0] = k_factor / (k_factor + 1.0)
    if num_paths > 1:
        variances[1:] = 1.0 / ((k_factor + 1.0) * (num_paths - 1))
    scale = np.sqrt(variances / 2.0)
    gains = scale * (rng.standard_normal(num_paths) + 1j * rng.standard_normal(num_paths))
    return ChannelRealization(aoas=aoas, aods=aods, delays=delays, gains=gains)


def assemble_channel(realization: ChannelRealization, config: SystemConfig) -> ChannelVector:
    """Build per-subcarrier matrices and the stacked channel vector.

    The per-subcarrier route multiplies steering matrices around a diagonal
    of gain-weighted delay phases; the stacked route sums Kronecker columns
    (the Khatri-Rao form). Both describe the same channel and are kept as
    independent code paths so tests can cross-check them.
    """
    a_r = np.stack(
        [steering_vector(t, config.num_rx, config.rx_spacing_wavelengths) for t in realization.aoas],
        axis=1,
    )
    a_t = np.stack(
        [steering_vector(p, config.num_tx, config.tx_spacing_wavelengths) for p in realization.aods],
        axis=1,
    )
    b = np.stack([delay_response(d, config) for d in realization.delays], axis=1)

    gains = realization.gains
    per_subcarrier = np.empty(
        (config.num_subcarriers, config.num_rx, config.num_tx), dtype=complex
    )
    for k in range(config.num_subcarriers):
        per_subcarrier[k] = a_r @ np.diag(gains * b[k, :]) @ a_t.conj().T

    # Khatri-Rao route: one Kronecker column b(tau) x conj(a_t) x a_r per path.
    stacked = np.einsum("kl,tl,rl,l->ktr", b, a_t.conj(), a_r, gains).ravel()
    return ChannelVector(per_subcarrier=per_subcarrier, stacked=stacked)
