"""Sparse channel estimation from noisy pilot measurements.

Synthesizes the stacked received pilot vector, recovers the virtual path
gains with orthogonal matching pursuit against the structured sensing
operator, and rebuilds the full channel vector from the recovered support.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .channel import ChannelVector
from .coherence import PilotDesign, SensingOperator
from .dictionary import DictionarySet, decode_grid_index
from .errors import DegenerateInputError

__all__ = [
    "MeasurementSet",
    "SparseEstimate",
    "SOLVERS",
    "synthesize_measurement",
    "omp_solve",
    "reconstruct_channel",
    "nmse",
    "snr_sigma2",
]

logger = logging.getLogger(__name__)

# Residuals below this fraction of ||y|| count as exactly recovered.
_RESIDUAL_REL_FLOOR = 1e-12


@dataclass(frozen=True)
class MeasurementSet:
    """Stacked noisy pilot observation and its provenance."""

    y: np.ndarray  # (Nr * M * Q,) complex
    sigma2: float
    allocation: tuple[int, ...]
    design: PilotDesign

    def __post_init__(self) -> None:
        q = len(self.allocation)
        m = self.design.seq_len
        if q and self.y.size % (m * q) != 0:
            raise ValueError("measurement length inconsistent with M and Q")


@dataclass(frozen=True)
class SparseEstimate:
    """OMP output: selected grid atoms, their least-squares gains, residual."""

    support: tuple[int, ...]
    coefficients: np.ndarray
    residual_norm: float

    def __post_init__(self) -> None:
        if len(set(self.support)) != len(self.support):
            raise ValueError("support indices must be unique")
        if len(self.support) != len(self.coefficients):
            raise ValueError("support and coefficients must align")


def synthesize_measurement(
    h: ChannelVector, design: PilotDesign, sigma2: float, rng_seed
) -> MeasurementSet:
    """Stack vec(H_k X_k) over allocated subcarriers and add CN(0, sigma2) noise.

    Subcarrier selection is done by index gathering; no binary selection
    matrix is ever materialized. Deterministic for a fixed seed.
    """
    if sigma2 < 0:
        raise ValueError("sigma2 must be non-negative")
    if not design.allocation:
        raise ValueError("design has an empty allocation")
    k_total, n_r, n_t = h.per_subcarrier.shape
    if k_total != design.num_subcarriers or n_t != design.num_tx:
        raise ValueError("channel and design dimensions do not match")
    parts = [
        (h.per_subcarrier[k] @ design.blocks[k]).ravel(order="F") for k in design.allocation
    ]
    y = np.concatenate(parts)
    if sigma2 > 0:
        rng = np.random.default_rng(rng_seed)
        noise = np.sqrt(sigma2 / 2.0) * (
            rng.standard_normal(y.size) + 1j * rng.standard_normal(y.size)
        )
        y = y + noise
    return MeasurementSet(y=y, sigma2=float(sigma2), allocation=design.allocation, design=design)


def omp_solve(
    y: np.ndarray,
    operator: SensingOperator,
    max_sparsity: int,
    residual_tol: float = 0.0,
) -> SparseEstimate:
    """Orthogonal matching pursuit with norm-normalized correlations.

    Selects at most ``max_sparsity`` distinct atoms, re-solving the least
    squares fit on the active set each iteration, and stops early once the
    residual drops to ``residual_tol`` (or to the numerical floor relative
    to ``||y||``). The residual norm is checked to be non-increasing at
    every step.
    """
    y = np.asarray(y, dtype=complex)
    n_obs, n_atoms = operator.shape
    if y.shape != (n_obs,):
        raise ValueError(f"expected measurement of length {n_obs}, got {y.shape}")
    if max_sparsity < 1:
        raise ValueError("max_sparsity must be >= 1")
    if max_sparsity > n_obs:
        raise ValueError("max_sparsity cannot exceed the number of observations")

    norms = operator.column_norms()
    usable = norms > 0
    y_norm = float(np.linalg.norm(y))
    floor = max(residual_tol, _RESIDUAL_REL_FLOOR * y_norm)

    support: list[int] = []
    coefficients = np.zeros(0, dtype=complex)
    residual = y
    residual_norm = y_norm

    while len(support) < max_sparsity and residual_norm > floor:
        corr = np.abs(operator.rmatvec(residual))
        corr = np.where(usable, corr / np.where(usable, norms, 1.0), -1.0)
        if support:
            corr[np.asarray(support)] = -1.0
        g = int(np.argmax(corr))
        support.append(g)
        basis = np.column_stack([operator.column(s) for s in support])
        coefficients, _, rank, _ = np.linalg.lstsq(basis, y, rcond=None)
        if rank < len(support):
            logger.warning(
                "OMP active set is rank-deficient (rank %d < %d); using the "
                "minimum-norm least-squares solution",
                rank,
                len(support),
            )
        residual = y - basis @ coefficients
        new_norm = float(np.linalg.norm(residual))
        if new_norm > residual_norm * (1.0 + 1e-9) + 1e-15:
            raise FloatingPointError(
                f"OMP residual increased from {residual_norm} to {new_norm}"
            )
        residual_norm = new_norm

    return SparseEstimate(
        support=tuple(support), coefficients=coefficients, residual_norm=residual_norm
    )


def reconstruct_channel(estimate: SparseEstimate, dicts: DictionarySet) -> ChannelVector:
    """Rebuild the stacked channel from recovered atoms and gains.

    Each support index decodes to a (delay, AoD, AoA) grid triple whose
    Kronecker column, weighted by the estimated gain, contributes to the
    channel vector over all subcarriers.
    """
    spec = dicts.spec
    n_r, n_t, k = dicts.num_rx, dicts.num_tx, dicts.num_subcarriers
    stacked = np.zeros(n_r * n_t * k, dtype=complex)
    for coeff, g in zip(estimate.coefficients, estimate.support):
        g_tau, g_phi, g_theta = decode_grid_index(int(g), spec)
        col = np.einsum(
            "k,t,r->ktr",
            dicts.b[:, g_tau],
            dicts.a_t[:, g_phi].conj(),
            dicts.a_r[:, g_theta],
        ).ravel()
        stacked += coeff * col
    per_subcarrier = np.transpose(
        stacked.reshape(k, n_t, n_r), (0, 2, 1)
    )  # block k is vec^{-1} (column-major) of its Nr*Nt slice
    return ChannelVector(per_subcarrier=per_subcarrier, stacked=stacked)


def nmse(h_true: np.ndarray, h_est: np.ndarray) -> float:
    """Normalized squared error ||h - h_est||^2 / ||h||^2."""
    h_true = np.asarray(h_true)
    h_est = np.asarray(h_est)
    denom = float(np.linalg.norm(h_true) ** 2)
    if denom == 0.0:
        raise DegenerateInputError("true channel vector is zero")
    return float(np.linalg.norm(h_true - h_est) ** 2) / denom


def snr_sigma2(
    total_power: float, num_tx: int, seq_len: int, allocation_size: int, snr_db: float
) -> float:
    """Noise variance for a target SNR: (Pt / (Nt M Q)) / 10^(SNR/10)."""
    if min(num_tx, seq_len, allocation_size) < 1:
        raise ValueError("dimensions must be positive")
    if total_power <= 0:
        raise ValueError("total_power must be positive")
    per_entry = total_power / (num_tx * seq_len * allocation_size)
    return per_entry / 10.0 ** (snr_db / 10.0)


# Sparse-recovery solvers share the signature (y, operator, max_sparsity) ->
# SparseEstimate; registering a new one here makes it harness-selectable.
SOLVERS = {"omp": omp_solve}
