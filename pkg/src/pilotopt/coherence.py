"""Sensing-matrix construction and coherence metrics.

The sensing matrix of the pilot measurement factorizes as
``Psi = Omega kron A_r`` where ``Omega`` collects the pilot-dependent
delay/AoD part and ``A_r`` is the AoA dictionary. Every hot-path
evaluation here works on the small ``Omega`` factor only; dense forms of
``Psi`` exist solely as test oracles behind a memory cap.

Column inner products of ``Omega`` obey

    c(gt, gt', gf, gf') = sum_k conj(b_k[gt]) * b_k[gt'] * <r_k(gf), r_k(gf')>

with ``r_k(gf) = X_k^T conj(a_t(gf))``, which is what the gradient engine
accumulates as a (G_tau^2, G_phi^2) tensor via one matrix product.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dictionary import DictionarySet
from .errors import CapacityError, DegenerateInputError

__all__ = [
    "DENSE_ENTRY_CAP",
    "PAIR_COUNT_CAP",
    "PAIR_SUBSAMPLE_SIZE",
    "PilotDesign",
    "CoherenceReport",
    "SensingOperator",
    "build_omega",
    "build_sensing_matrix",
    "CoherenceEngine",
    "c_omega",
    "f_omega",
    "f_psi_reference",
    "t_p_dictionary",
    "mutual_coherence",
    "generalized_coherence",
    "welch_bound",
    "coherence_report",
]

# Dense materializations (test oracles, Gram blocks) refuse above this many
# complex entries (~64 MiB at complex128).
DENSE_ENTRY_CAP = 1 << 22
# Off-diagonal pair budget before report CDFs switch to seeded subsampling.
PAIR_COUNT_CAP = 10_000_000
PAIR_SUBSAMPLE_SIZE = 1_000_000
_PAIR_SAMPLE_SEED = 0x5EED


def _require_even_p(p: int) -> None:
    if p < 2 or p % 2 != 0:
        raise ValueError("p must be an even integer >= 2")


@dataclass(frozen=True)
class PilotDesign:
    """Pilot blocks over all subcarriers plus the sparse allocation.

    ``blocks[k]`` is the Nt x M pilot matrix of subcarrier ``k``;
    subcarriers outside ``allocation`` carry hard-zeroed blocks.
    """

    blocks: np.ndarray  # (K, Nt, M) complex
    allocation: tuple[int, ...]  # sorted, 0-based
    total_power: float

    def __post_init__(self) -> None:
        blocks = np.asarray(self.blocks, dtype=complex)
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "allocation", tuple(int(k) for k in self.allocation))
        if blocks.ndim != 3:
            raise ValueError("blocks must have shape (K, Nt, M)")
        alloc = self.allocation
        if len(set(alloc)) != len(alloc):
            raise ValueError("allocation indices must be unique")
        if alloc and (alloc[0] < 0 or alloc[-1] >= blocks.shape[0]):
            raise ValueError("allocation index out of range")
        if tuple(sorted(alloc)) != alloc:
            raise ValueError("allocation must be sorted")
        if self.total_power <= 0:
            raise ValueError("total_power must be positive")

    @property
    def num_subcarriers(self) -> int:
        return self.blocks.shape[0]

    @property
    def num_tx(self) -> int:
        return self.blocks.shape[1]

    @property
    def seq_len(self) -> int:
        return self.blocks.shape[2]

    def full_matrix(self) -> np.ndarray:
        """Blocks concatenated along symbols: Nt x (M*K)."""
        k, nt, m = self.blocks.shape
        return self.blocks.transpose(1, 0, 2).reshape(nt, k * m)

    def block_norms(self) -> np.ndarray:
        return np.linalg.norm(self.blocks, axis=(1, 2))


def _blocks_of(design) -> np.ndarray:
    return design.blocks if isinstance(design, PilotDesign) else np.asarray(design, dtype=complex)


def build_omega(design, dicts: DictionarySet) -> np.ndarray:
    """Dense pilot-dependent factor, shape (M*K, G_tau*G_phi).

    Column ``j = g_tau * G_phi + g_phi`` stacks, over the K subcarriers,
    the M-vectors ``b_k(tau) * X_k^T conj(a_t(phi))``. All K subcarriers
    participate (the selection matrix is the identity during design);
    zeroed blocks simply contribute zero rows.
    """
    blocks = _blocks_of(design)
    k, nt, m = blocks.shape
    if nt != dicts.num_tx or k != dicts.num_subcarriers:
        raise ValueError("design dimensions do not match the dictionaries")
    # r[k, gf, :] = X_k^T conj(a_t(gf))
    r = np.matmul(dicts.a_t.conj().T[None, :, :], blocks)  # (K, G_phi, M)
    omega = np.einsum("kc,kfm->kmcf", dicts.b, r)
    g_tau = dicts.b.shape[1]
    g_phi = dicts.a_t.shape[1]
    return omega.reshape(k * m, g_tau * g_phi)


class SensingOperator:
    """Matrix-free ``Psi = Omega kron A_r`` on the selected subcarriers.

    ``Omega`` rows cover the selected subcarriers in ascending order (all K
    when unrestricted), so ``shape = (Nr*M*Q, G)``.
    """

    def __init__(self, omega: np.ndarray, a_r: np.ndarray, selection: tuple[int, ...]):
        self.omega = omega
        self.a_r = a_r
        self.selection = selection
        self._col_norms: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return (self.omega.shape[0] * self.a_r.shape[0], self.omega.shape[1] * self.a_r.shape[1])

    def matvec(self, x: np.ndarray) -> np.ndarray:
        n_theta = self.a_r.shape[1]
        cube = np.asarray(x).reshape(self.omega.shape[1], n_theta)
        return (self.omega @ cube @ self.a_r.T).ravel()

    def rmatvec(self, y: np.ndarray) -> np.ndarray:
        """Adjoint product ``Psi^H y``."""
        n_r = self.a_r.shape[0]
        mat = np.asarray(y).reshape(self.omega.shape[0], n_r)
        return (self.omega.conj().T @ mat @ self.a_r.conj()).ravel()

    def column(self, g: int) -> np.ndarray:
        n_theta = self.a_r.shape[1]
        j, i = divmod(int(g), n_theta)
        return np.outer(self.omega[:, j], self.a_r[:, i]).ravel()

    def column_norms(self) -> np.ndarray:
        """Norms of all columns: ||omega_j||_2 * sqrt(Nr), per the Kronecker split."""
        if self._col_norms is None:
            omega_norms = np.linalg.norm(self.omega, axis=0)
            a_norms = np.linalg.norm(self.a_r, axis=0)
            self._col_norms = np.kron(omega_norms, a_norms)
        return self._col_norms

    def to_dense(self, entry_cap: int = DENSE_ENTRY_CAP) -> np.ndarray:
        n, g = self.shape
        if n * g > entry_cap:
            raise CapacityError(
                f"dense sensing matrix would need {n * g} entries (cap {entry_cap})"
            )
        return np.kron(self.omega, self.a_r)


def build_sensing_matrix(
    design: PilotDesign, dicts: DictionarySet, restrict_to_allocation: bool = True
) -> SensingOperator:
    """Assemble the structured sensing operator for a pilot design."""
    if restrict_to_allocation:
        if not design.allocation:
            raise ValueError("design has an empty allocation")
        selection = design.allocation
    else:
        selection = tuple(range(design.num_subcarriers))
    sel = np.asarray(selection)
    sub = PilotDesign(
        blocks=design.blocks[sel],
        allocation=tuple(range(len(selection))),
        total_power=design.total_power,
    )
    sub_dicts = DictionarySet(
        theta_grid=dicts.theta_grid,
        phi_grid=dicts.phi_grid,
        tau_grid=dicts.tau_grid,
        a_r=dicts.a_r,
        a_t=dicts.a_t,
        b=dicts.b[sel, :],
    )
    omega = build_omega(sub, sub_dicts)
    return SensingOperator(omega=omega, a_r=dicts.a_r, selection=selection)


class CoherenceEngine:
    """Shared precomputation for repeated coherence/gradient evaluations.

    Holds the delay-pair weights ``W[k, a, b] = conj(b_k[a]) * b_k[b]``
    flattened to (K, G_tau^2); only the pilot-dependent pieces are rebuilt
    per evaluation.
    """

    def __init__(self, dicts: DictionarySet):
        self.dicts = dicts
        self.g_tau = dicts.b.shape[1]
        self.g_phi = dicts.a_t.shape[1]
        k = dicts.num_subcarriers
        w = dicts.b.conj()[:, :, None] * dicts.b[:, None, :]  # (K, G_tau, G_tau)
        self._w_mat = w.reshape(k, self.g_tau * self.g_tau)
        self._at_h = dicts.a_t.conj().T  # (G_phi, Nt)

    def gram_tensor(self, blocks: np.ndarray) -> np.ndarray:
        """All Omega-column inner products as a (G_tau^2, G_phi^2) matrix."""
        r = np.matmul(self._at_h[None, :, :], blocks)  # (K, G_phi, M)
        p_mat = np.matmul(r.conj(), r.transpose(0, 2, 1))  # (K, G_phi, G_phi)
        k = blocks.shape[0]
        return self._w_mat.T @ p_mat.reshape(k, self.g_phi * self.g_phi)

    @staticmethod
    def _abs_sq(c: np.ndarray) -> np.ndarray:
        # |c|^2 without the sqrt of np.abs; the hot loop is bandwidth-bound.
        return c.real**2 + c.imag**2

    def f_value(self, blocks: np.ndarray, p: int) -> float:
        """Coherence objective: (sum over all index tuples of |c|^p)^(1/p)."""
        _require_even_p(p)
        a2 = self._abs_sq(self.gram_tensor(blocks))
        half = p // 2
        if half == 2:
            flat = a2.ravel()
            v_p = float(flat @ flat)
        else:
            v_p = float(np.sum(a2**half))
        return float(v_p ** (1.0 / p))

    def f_value_and_vgrad(self, blocks: np.ndarray, p: int) -> tuple[float, float, np.ndarray]:
        """Return (f, v_p, dv_p/dconj(X)) for the coherence sum v_p = f^p.

        The gradient blocks follow the closed form: contract the tensor
        ``T = (p/2) |c|^(p-2) c`` against the delay-pair weights, wrap the
        result in the AoD dictionary, and apply the Hermitian-symmetrized
        matrix to each pilot block.
        """
        _require_even_p(p)
        c = self.gram_tensor(blocks)
        a2 = self._abs_sq(c)
        half = p // 2
        if half == 1:
            v_p = float(np.sum(a2))
            t_mat = c
        elif half == 2:
            flat = a2.ravel()
            v_p = float(flat @ flat)
            t_mat = (p / 2.0) * a2 * c
        else:
            pw = a2 ** (half - 1)
            v_p = float(np.sum(pw * a2))
            t_mat = (p / 2.0) * pw * c
        k = blocks.shape[0]
        f_kphi = (self._w_mat.conj() @ t_mat).reshape(k, self.g_phi, self.g_phi)
        a_t = self.dicts.a_t
        s1 = np.matmul(np.matmul(a_t, f_kphi.transpose(0, 2, 1)), a_t.conj().T)
        vgrad = np.matmul(s1 + s1.conj().transpose(0, 2, 1), blocks)
        return float(v_p ** (1.0 / p)), v_p, vgrad


def c_omega(
    design, dicts: DictionarySet, g_tau: int, g_tau2: int, g_phi: int, g_phi2: int
) -> complex:
    """One Omega Gram entry via the subcarrier-sum formula.

    Computes ``a_t^T(phi) (sum_k conj(b_k) X_k* X_k^T b_k') conj(a_t(phi'))``
    directly, without building Omega.
    """
    blocks = _blocks_of(design)
    n_tau = dicts.b.shape[1]
    n_phi = dicts.a_t.shape[1]
    if not (0 <= g_tau < n_tau and 0 <= g_tau2 < n_tau):
        raise ValueError("delay grid index out of range")
    if not (0 <= g_phi < n_phi and 0 <= g_phi2 < n_phi):
        raise ValueError("AoD grid index out of range")
    weights = dicts.b[:, g_tau].conj() * dicts.b[:, g_tau2]  # (K,)
    middle = np.einsum("k,knm,kpm->np", weights, blocks.conj(), blocks)
    a = dicts.a_t[:, g_phi]
    a2 = dicts.a_t[:, g_phi2]
    return complex(a.T @ middle @ a2.conj())


def f_omega(design, dicts: DictionarySet, p: int) -> float:
    """Coherence objective on the Omega factor (diagonal tuples included)."""
    return CoherenceEngine(dicts).f_value(_blocks_of(design), p)


def t_p_dictionary(a_r: np.ndarray, p: int) -> float:
    """AoA dictionary coherence: (sum over all column pairs of |a^H a'|^p)^(1/p)."""
    _require_even_p(p)
    gram = a_r.conj().T @ a_r
    return float(np.sum(np.abs(gram) ** p) ** (1.0 / p))


def f_psi_reference(
    design, dicts: DictionarySet, p: int, entry_cap: int = DENSE_ENTRY_CAP
) -> float:
    """Full-sensing-matrix objective, computed densely (test oracle).

    Builds ``Psi`` over all K subcarriers and sums |psi_i^H psi_j|^p over
    every column pair, diagonal included. Refuses configurations whose
    dense matrix or Gram would exceed ``entry_cap`` entries.
    """
    _require_even_p(p)
    blocks = _blocks_of(design)
    if not isinstance(design, PilotDesign):
        design = PilotDesign(
            blocks=blocks, allocation=tuple(range(blocks.shape[0])), total_power=1.0
        )
    op = build_sensing_matrix(design, dicts, restrict_to_allocation=False)
    n, g = op.shape
    if g * g > entry_cap:
        raise CapacityError(f"dense Gram would need {g * g} entries (cap {entry_cap})")
    psi = op.to_dense(entry_cap)
    gram = psi.conj().T @ psi
    return float(np.sum(np.abs(gram) ** p) ** (1.0 / p))


def _column_norms_checked(matrix: np.ndarray, what: str) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=0)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise DegenerateInputError(f"column {int(zero[0])} of {what} has zero norm")
    return norms


def _gram_scan(matrix: np.ndarray, norms: np.ndarray, p: int | None) -> tuple[float, float]:
    """Blockwise pass over the normalized Gram.

    Returns ``(max off-diagonal value, sum of p-th powers over all pairs
    including the diagonal)``; the power sum is 0.0 when ``p`` is None.
    Memory stays below DENSE_ENTRY_CAP entries per block.
    """
    n = matrix.shape[1]
    chunk = max(1, min(n, DENSE_ENTRY_CAP // max(n, 1)))
    ah = matrix.conj().T
    mu = 0.0
    total = 0.0
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        block = np.abs(ah[start:stop] @ matrix)
        block /= np.outer(norms[start:stop], norms)
        if p is not None:
            total += float(np.sum(block**p))
        block[np.arange(start, stop) - start, np.arange(start, stop)] = 0.0
        mu = max(mu, float(block.max()))
    return mu, total


def mutual_coherence(matrix_or_operator) -> float:
    """Largest normalized inner product between distinct columns.

    Accepts a dense matrix or a :class:`SensingOperator`; the operator case
    exploits ``Psi = Omega kron A_r``, whose normalized Gram is the
    Kronecker product of the factor Grams, so the maximum is the larger of
    the two factor coherences.
    """
    if isinstance(matrix_or_operator, SensingOperator):
        op = matrix_or_operator
        mu_omega, _ = _gram_scan(op.omega, _column_norms_checked(op.omega, "the pilot factor"), None)
        mu_ar, _ = _gram_scan(op.a_r, _column_norms_checked(op.a_r, "the AoA dictionary"), None)
        return min(max(mu_omega, mu_ar), 1.0)
    matrix = np.asarray(matrix_or_operator)
    mu, _ = _gram_scan(matrix, _column_norms_checked(matrix, "the matrix"), None)
    return min(mu, 1.0)


def generalized_coherence(matrix: np.ndarray, p: int) -> float:
    """l_p aggregation of the off-diagonal normalized inner products."""
    _require_even_p(p)
    matrix = np.asarray(matrix)
    norms = _column_norms_checked(matrix, "the matrix")
    _, total = _gram_scan(matrix, norms, p)
    off = max(total - matrix.shape[1], 0.0)  # diagonal entries are exactly 1
    return float(off ** (1.0 / p))


def welch_bound(n_obs: int, n_atoms: int) -> float:
    """Lower bound sqrt((G - N) / (N (G - 1))) on mutual coherence; 0 if G <= N."""
    if n_atoms < 2:
        raise ValueError("the bound needs at least two columns")
    if n_obs < 1:
        raise ValueError("n_obs must be positive")
    if n_atoms <= n_obs:
        return 0.0
    return float(np.sqrt((n_atoms - n_obs) / (n_obs * (n_atoms - 1))))


@dataclass(frozen=True)
class CoherenceReport:
    """Summary metrics plus CDF samples of the Omega-factor geometry."""

    mutual_coherence: float
    generalized: float
    p: int
    welch: float
    n_obs: int
    n_atoms: int
    inner_product_cdf: np.ndarray  # sorted normalized |<w_i, w_j>|, i != j
    column_norm_cdf: np.ndarray  # sorted ||w_j||_2

    def summary_dict(self) -> dict:
        return {
            "mutual": self.mutual_coherence,
            "generalized_p": self.generalized,
            "p": self.p,
            "welch_bound": self.welch,
            "N": self.n_obs,
            "G": self.n_atoms,
        }


def _psi_generalized_from_factors(
    omega: np.ndarray, a_r: np.ndarray, p: int
) -> float:
    """nu_p of the Kronecker product from factor Grams.

    With normalized Grams the all-pairs power sum factorizes; subtracting
    the G diagonal ones leaves the off-diagonal sum.
    """
    _, total_omega = _gram_scan(omega, _column_norms_checked(omega, "the pilot factor"), p)
    _, total_ar = _gram_scan(a_r, _column_norms_checked(a_r, "the AoA dictionary"), p)
    g_total = omega.shape[1] * a_r.shape[1]
    off = max(total_omega * total_ar - g_total, 0.0)
    return float(off ** (1.0 / p))


def _sampled_pair_values(omega: np.ndarray, norms: np.ndarray) -> np.ndarray:
    """Seeded uniform subsample of normalized off-diagonal inner products."""
    n_cols = omega.shape[1]
    rng = np.random.default_rng(_PAIR_SAMPLE_SEED)
    i = rng.integers(0, n_cols, PAIR_SUBSAMPLE_SIZE)
    j = rng.integers(0, n_cols - 1, PAIR_SUBSAMPLE_SIZE)
    j = np.where(j >= i, j + 1, j)  # uniform over ordered pairs i != j
    out = np.empty(PAIR_SUBSAMPLE_SIZE)
    chunk = max(1, DENSE_ENTRY_CAP // (4 * max(omega.shape[0], 1)))
    for start in range(0, PAIR_SUBSAMPLE_SIZE, chunk):
        stop = min(start + chunk, PAIR_SUBSAMPLE_SIZE)
        ii = i[start:stop]
        jj = j[start:stop]
        vals = np.abs(np.einsum("nk,nk->k", omega[:, ii].conj(), omega[:, jj]))
        out[start:stop] = vals / (norms[ii] * norms[jj])
    return out


def coherence_report(design: PilotDesign, dicts: DictionarySet, p: int) -> CoherenceReport:
    """Evaluate a design: sensing-matrix metrics plus Omega CDF samples.

    The CDFs cover all off-diagonal column pairs of Omega, or a seeded
    uniform subsample of ``PAIR_SUBSAMPLE_SIZE`` pairs when the pair count
    exceeds ``PAIR_COUNT_CAP``.
    """
    _require_even_p(p)
    op = build_sensing_matrix(design, dicts, restrict_to_allocation=True)
    omega = op.omega
    n_cols = omega.shape[1]
    norms = _column_norms_checked(omega, "the pilot factor")

    n_pairs = n_cols * (n_cols - 1) // 2
    if n_pairs <= PAIR_COUNT_CAP and n_cols * n_cols <= DENSE_ENTRY_CAP:
        normalized = np.abs(omega.conj().T @ omega) / np.outer(norms, norms)
        iu = np.triu_indices(n_cols, k=1)
        inner = np.sort(normalized[iu])
    else:
        inner = np.sort(_sampled_pair_values(omega, norms))

    mu = mutual_coherence(op)
    nu = _psi_generalized_from_factors(omega, dicts.a_r, p)
    n_obs, n_atoms = op.shape
    return CoherenceReport(
        mutual_coherence=mu,
        generalized=nu,
        p=p,
        welch=welch_bound(n_obs, n_atoms),
        n_obs=n_obs,
        n_atoms=n_atoms,
        inner_product_cdf=inner,
        column_norm_cdf=np.sort(norms),
    )
