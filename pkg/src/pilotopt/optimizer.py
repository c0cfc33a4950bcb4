"""Joint pilot allocation and sequence design by coherence minimization.

Minimizes the scale-invariant loss

    L(X) = f(X) / ||X||_F^2  +  lambda_bar * g(X) / ||X||_F

where ``f`` is the coherence objective on the pilot factor and ``g`` the
block-sparse penalty over subcarriers. Both quotients are homogeneous of
degree zero, so the power constraint is enforced only once at the end by
rescaling to the total budget. Descent uses the conjugate-variable
(Wirtinger) gradient with Adam updates; the second moment tracks squared
gradient magnitudes so updates are equivariant to global phase rotations.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .coherence import CoherenceEngine, PilotDesign, mutual_coherence, build_sensing_matrix
from .dictionary import DictionarySet
from .errors import DegenerateDesignError, DegenerateInputError, OptimizationDivergenceError

__all__ = [
    "OptimizerConfig",
    "OptimizationTrace",
    "SweepRow",
    "SweepOutcome",
    "block_penalty",
    "loss",
    "loss_gradient",
    "optimize",
    "extract_allocation",
    "gaussian_init",
    "sweep_lambda",
]

# Smoothing floor inside 1/||X_k|| factors of the penalty gradient.
_BLOCK_NORM_FLOOR = 1e-12


@dataclass(frozen=True)
class OptimizerConfig:
    """Hyper-parameters of the design loop (Adam defaults)."""

    p: int = 4
    q: float = 1.0
    lambda_bar: float = 0.0
    learning_rate: float = 1e-3
    iterations: int = 20_000
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    zero_threshold_rel: float = 1e-3

    def __post_init__(self) -> None:
        if self.p < 2 or self.p % 2 != 0:
            raise ValueError("p must be an even integer >= 2")
        if not 0.0 < self.q <= 1.0:
            raise ValueError("q must lie in (0, 1]")
        if self.lambda_bar < 0:
            raise ValueError("lambda_bar must be non-negative")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.zero_threshold_rel <= 0:
            raise ValueError("zero_threshold_rel must be positive")


@dataclass
class OptimizationTrace:
    """Recorded loss terms per iteration plus run metadata."""

    iterations: np.ndarray
    loss: np.ndarray
    f_term: np.ndarray
    g_term: np.ndarray
    grad_norm: np.ndarray
    elapsed_s: float = 0.0


def block_penalty(blocks: np.ndarray, q: float) -> float:
    """Block-sparse penalty (sum_k ||X_k||_F^q)^(1/q)."""
    if not 0.0 < q <= 1.0:
        raise ValueError("q must lie in (0, 1]")
    norms = np.linalg.norm(blocks, axis=(1, 2))
    return float(np.sum(norms**q) ** (1.0 / q))


def _loss_terms(
    blocks: np.ndarray, engine: CoherenceEngine, cfg: OptimizerConfig
) -> tuple[float, float, float]:
    """(loss, f term, penalty term) of the power-normalized objective."""
    total = float(np.linalg.norm(blocks))
    if total == 0.0:
        raise DegenerateInputError("pilot variable is identically zero")
    f_val = engine.f_value(blocks, cfg.p)
    f_term = f_val / total**2
    g_term = cfg.lambda_bar * block_penalty(blocks, cfg.q) / total
    return f_term + g_term, f_term, g_term


def loss(blocks: np.ndarray, dicts: DictionarySet, cfg: OptimizerConfig) -> float:
    """Scale-invariant design loss L(X) at the given pilot blocks."""
    return _loss_terms(np.asarray(blocks, dtype=complex), CoherenceEngine(dicts), cfg)[0]


def _gradient(
    blocks: np.ndarray, engine: CoherenceEngine, cfg: OptimizerConfig
) -> tuple[np.ndarray, float, float, float]:
    """Wirtinger gradient dL/dconj(X) plus the current loss terms."""
    total_sq = float(np.vdot(blocks, blocks).real)
    if total_sq == 0.0:
        raise DegenerateInputError("pilot variable is identically zero")
    total = np.sqrt(total_sq)

    f_val, v_p, vgrad = engine.f_value_and_vgrad(blocks, cfg.p)
    f_term = f_val / total_sq
    grad = f_term * (vgrad / (cfg.p * v_p) - blocks / total_sq)

    g_term = 0.0
    if cfg.lambda_bar > 0:
        norms = np.linalg.norm(blocks, axis=(1, 2))
        g_val = float(np.sum(norms**cfg.q) ** (1.0 / cfg.q))
        g_term = cfg.lambda_bar * g_val / total
        safe = np.maximum(norms, _BLOCK_NORM_FLOOR)
        # Minimal-norm subgradient: exactly-zero blocks contribute nothing.
        ratio = np.where(norms > 0, (safe / g_val) ** cfg.q / safe**2, 0.0)
        coeff = (ratio - 1.0 / total_sq) * (g_val / (2.0 * total))
        grad = grad + cfg.lambda_bar * coeff[:, None, None] * blocks

    return grad, f_term + g_term, f_term, g_term


def loss_gradient(
    blocks: np.ndarray, dicts: DictionarySet, cfg: OptimizerConfig
) -> np.ndarray:
    """Per-block conjugate-variable gradient of the design loss."""
    grad, _, _, _ = _gradient(np.asarray(blocks, dtype=complex), CoherenceEngine(dicts), cfg)
    return grad


def extract_allocation(
    blocks: np.ndarray, zero_threshold_rel: float, total_power: float
) -> PilotDesign:
    """Threshold dead subcarriers and renormalize power onto the survivors.

    A subcarrier stays allocated iff its block Frobenius norm exceeds
    ``zero_threshold_rel`` times the largest block norm. Discarded blocks
    are hard-zeroed and the remaining blocks rescaled so their total power
    equals ``total_power``.
    """
    blocks = np.asarray(blocks, dtype=complex)
    if not np.all(np.isfinite(blocks)):
        raise ValueError("pilot blocks must be finite")
    norms = np.linalg.norm(blocks, axis=(1, 2))
    peak = float(norms.max()) if norms.size else 0.0
    if peak == 0.0:
        raise DegenerateDesignError("every pilot block is zero")
    keep = norms > zero_threshold_rel * peak
    allocation = tuple(int(k) for k in np.flatnonzero(keep))
    trimmed = np.where(keep[:, None, None], blocks, 0.0)
    live_power = float(np.sum(np.abs(trimmed) ** 2))
    trimmed *= np.sqrt(total_power / live_power)
    return PilotDesign(blocks=trimmed, allocation=allocation, total_power=total_power)


def gaussian_init(
    num_subcarriers: int, num_tx: int, seq_len: int, seed
) -> np.ndarray:
    """i.i.d. unit-variance complex Gaussian starting point, shape (K, Nt, M)."""
    rng = np.random.default_rng(seed)
    shape = (num_subcarriers, num_tx, seq_len)
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def optimize(
    initial_blocks: np.ndarray,
    dicts: DictionarySet,
    cfg: OptimizerConfig,
    total_power: float,
    trace_every: int = 1,
) -> tuple[PilotDesign, OptimizationTrace]:
    """Run Adam on the Wirtinger gradient and return the final design.

    The loop is scale-free; the power budget enters only through the final
    rescaling ``X = sqrt(Pt) * X / ||X||_F`` before thresholding. Raises
    :class:`OptimizationDivergenceError` if the loss or gradient turns
    non-finite, carrying the iteration index.
    """
    x = np.array(initial_blocks, dtype=complex)
    if x.ndim != 3:
        raise ValueError("initial blocks must have shape (K, Nt, M)")
    if float(np.linalg.norm(x)) == 0.0:
        raise DegenerateInputError("initial pilot variable is identically zero")
    engine = CoherenceEngine(dicts)

    m = np.zeros_like(x)
    v = np.zeros(x.shape)
    rec_it: list[int] = []
    rec_loss: list[float] = []
    rec_f: list[float] = []
    rec_g: list[float] = []
    rec_gn: list[float] = []
    start = time.perf_counter()

    for t in range(cfg.iterations):
        grad, loss_val, f_term, g_term = _gradient(x, engine, cfg)
        if not np.isfinite(loss_val):
            raise OptimizationDivergenceError(t, "loss is not finite")
        if not np.all(np.isfinite(grad)):
            raise OptimizationDivergenceError(t, "gradient is not finite")
        if t % trace_every == 0 or t == cfg.iterations - 1:
            rec_it.append(t)
            rec_loss.append(loss_val)
            rec_f.append(f_term)
            rec_g.append(g_term)
            rec_gn.append(float(np.linalg.norm(grad)))
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * np.abs(grad) ** 2
        m_hat = m / (1.0 - cfg.beta1 ** (t + 1))
        v_hat = v / (1.0 - cfg.beta2 ** (t + 1))
        x = x - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)

    # Final state, recorded at index T.
    grad, loss_val, f_term, g_term = _gradient(x, engine, cfg)
    if not np.isfinite(loss_val):
        raise OptimizationDivergenceError(cfg.iterations, "loss is not finite")
    rec_it.append(cfg.iterations)
    rec_loss.append(loss_val)
    rec_f.append(f_term)
    rec_g.append(g_term)
    rec_gn.append(float(np.linalg.norm(grad)))

    scaled = np.sqrt(total_power) / float(np.linalg.norm(x)) * x
    design = extract_allocation(scaled, cfg.zero_threshold_rel, total_power)
    trace = OptimizationTrace(
        iterations=np.asarray(rec_it),
        loss=np.asarray(rec_loss),
        f_term=np.asarray(rec_f),
        g_term=np.asarray(rec_g),
        grad_norm=np.asarray(rec_gn),
        elapsed_s=time.perf_counter() - start,
    )
    return design, trace


@dataclass(frozen=True)
class SweepRow:
    """Outcome of one penalty-weight setting."""

    lambda_bar: float
    allocation_size: int
    coherence: float
    design: PilotDesign
    trace: OptimizationTrace


@dataclass(frozen=True)
class SweepOutcome:
    rows: tuple[SweepRow, ...]
    selected: SweepRow | None


def sweep_lambda(
    lambda_values,
    dicts: DictionarySet,
    cfg: OptimizerConfig,
    total_power: float,
    seq_len: int,
    target_allocation_size: int | None = None,
    trace_every: int = 1,
) -> SweepOutcome:
    """Optimize once per penalty weight, with per-run derived seeds.

    When ``target_allocation_size`` is given, ``selected`` is the row whose
    allocation size is closest (ties broken by smaller sensing-matrix
    coherence).
    """
    values = [float(v) for v in lambda_values]
    if not values:
        raise ValueError("lambda_values must be non-empty")
    rows = []
    for i, lam in enumerate(values):
        run_cfg = OptimizerConfig(
            p=cfg.p,
            q=cfg.q,
            lambda_bar=lam,
            learning_rate=cfg.learning_rate,
            iterations=cfg.iterations,
            beta1=cfg.beta1,
            beta2=cfg.beta2,
            eps=cfg.eps,
            seed=cfg.seed,
            zero_threshold_rel=cfg.zero_threshold_rel,
        )
        x0 = gaussian_init(dicts.num_subcarriers, dicts.num_tx, seq_len, (cfg.seed, i))
        design, trace = optimize(x0, dicts, run_cfg, total_power, trace_every=trace_every)
        mu = mutual_coherence(build_sensing_matrix(design, dicts))
        rows.append(
            SweepRow(
                lambda_bar=lam,
                allocation_size=len(design.allocation),
                coherence=mu,
                design=design,
                trace=trace,
            )
        )
    selected = None
    if target_allocation_size is not None:
        selected = min(
            rows, key=lambda r: (abs(r.allocation_size - target_allocation_size), r.coherence)
        )
    return SweepOutcome(rows=tuple(rows), selected=selected)
