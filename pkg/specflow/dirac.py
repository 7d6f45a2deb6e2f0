"""
Spectral Flow Toolkit - Dirac Operator

Twisted Dirac operator D = sum_j cl(dx_j) (d_j + (A_F)_j) on T^n, n in {1, 3},
in the truncated Fourier basis |k_j| <= K with periodic spin structure.

Directions in which the connection's oscillatory part has no Fourier
dependence carry conserved momenta, so the operator splits into blocks
labelled by those momenta. Blocks share one coupling matrix and differ only
in their momentum-diagonal cells, which lets whole batches go through a
single stacked eigh call.
"""

import logging
import math
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import linalg as sla
from scipy import optimize

from .cache import get_eigen_cache
from .errors import CertificateError, DiracError
from .forms import Connection, TrigPolyForm, ext_d, wedge
from .parallel import parallel_map

logger = logging.getLogger(__name__)

HERMITICITY_TOL = 1e-12
RESIDUAL_TOL = 1e-9
ORTHOGONALITY_TOL = 1e-9
PAIRING_TOL = 1e-10
CUTOFF_TOL = 1e-8
# Complex entries per stacked eigh call
BATCH_ENTRIES = 2_000_000
FALLBACK_DRIVERS = ("evr", "ev")

_PAULI = (
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


def trusted_window(K: int) -> float:
    """Eigenvalues with |lambda| <= 2 pi K / 4 are stable under K -> K + 4."""
    return 2 * math.pi * K / 4


@dataclass(frozen=True, eq=False)
class CliffordRep:
    """Anti-hermitian gamma matrices with c_j c_k + c_k c_j = -2 delta_jk."""

    n: int
    gamma: tuple

    def __post_init__(self):
        gamma = tuple(np.asarray(g, dtype=complex) for g in self.gamma)
        object.__setattr__(self, "gamma", gamma)
        if len(gamma) != self.n:
            raise DiracError(f"need {self.n} gamma matrices, got {len(gamma)}")
        rank = gamma[0].shape[0]
        eye = np.eye(rank)
        for j, g in enumerate(gamma):
            if g.shape != (rank, rank):
                raise DiracError(f"gamma {j} has shape {g.shape}, expected {(rank, rank)}")
            if np.max(np.abs(g + g.conj().T)) > HERMITICITY_TOL:
                raise DiracError(f"gamma {j} is not anti-hermitian")
            for k in range(j, self.n):
                target = -2 * eye if j == k else 0 * eye
                if np.max(np.abs(g @ gamma[k] + gamma[k] @ g - target)) > HERMITICITY_TOL:
                    raise DiracError(f"gammas {j}, {k} violate the Clifford relation")

    @classmethod
    def standard(cls, n: int) -> "CliffordRep":
        """cl(dx_1) = -i on T^1; cl(dx_j) = i sigma_j on T^3."""
        if n == 1:
            return cls(1, (np.array([[-1j]]),))
        if n == 3:
            return cls(3, tuple(1j * s for s in _PAULI))
        raise DiracError(f"no operator representation for n={n}")

    @property
    def rank(self) -> int:
        return self.gamma[0].shape[0]

    def flipped(self, j: int) -> "CliffordRep":
        """Same representation with gamma j negated (still Clifford, opposite orientation)."""
        return CliffordRep(self.n, tuple(-g if i == j else g for i, g in enumerate(self.gamma)))

    def stack(self) -> np.ndarray:
        return np.stack(self.gamma)


def conserved_mask(n: int, *forms: TrigPolyForm) -> tuple[bool, ...]:
    """Directions in which none of the given forms has Fourier dependence."""
    mask = [True] * n
    for form in forms:
        for k, _ in form.terms:
            for j, kj in enumerate(k):
                if kj:
                    mask[j] = False
    return tuple(mask)


def _momentum_grid(K: int, dims: int) -> np.ndarray:
    if dims == 0:
        return np.zeros((1, 0), dtype=np.int64)
    axes = np.meshgrid(*([np.arange(-K, K + 1)] * dims), indexing="ij")
    return np.stack([a.ravel() for a in axes], axis=1)


class DiracBlocks:
    """
    Lazily assembled block decomposition of the truncated Dirac operator.

    Block b is labelled by labels[b], the momenta along the conserved
    directions; its basis is free_momenta x spinor index (spinor fastest).
    """

    def __init__(
        self,
        conn: Connection,
        K: int,
        mask: Optional[Sequence[bool]] = None,
        clifford: Optional[CliffordRep] = None,
    ):
        if conn.n not in (1, 3):
            raise DiracError(f"operator assembly supports n = 1, 3; got n={conn.n}")
        if conn.fiber != 1:
            raise DiracError(f"operator spectra are computed for line bundles only, fiber={conn.fiber}")
        if K < 1:
            raise DiracError(f"cutoff K must be >= 1, got {K}")
        radius = conn.osc.support_radius()
        if radius > K:
            raise DiracError(f"oscillatory support radius {radius} exceeds cutoff K={K} (would alias)")

        self.conn = conn
        self.n = conn.n
        self.K = K
        self.clifford = clifford or CliffordRep.standard(conn.n)
        self.mask = tuple(bool(m) for m in mask) if mask is not None else conserved_mask(conn.n, conn.osc)
        if len(self.mask) != self.n:
            raise DiracError(f"mask has length {len(self.mask)}, expected {self.n}")

        self.conserved_dims = tuple(j for j in range(self.n) if self.mask[j])
        self.free_dims = tuple(j for j in range(self.n) if not self.mask[j])
        self.labels = _momentum_grid(K, len(self.conserved_dims))
        self.free_momenta = _momentum_grid(K, len(self.free_dims))
        self.spin = self.clifford.rank
        self.size = len(self.free_momenta) * self.spin
        self._gamma = self.clifford.stack()
        self._theta = np.asarray(conn.hol, dtype=float)
        self._coupling = self.clifford_matrix(conn.osc)

    @property
    def num_blocks(self) -> int:
        return len(self.labels)

    def __repr__(self) -> str:
        return f"DiracBlocks(n={self.n}, K={self.K}, blocks={self.num_blocks}, size={self.size})"

    def _flat_free_index(self, momenta: np.ndarray) -> np.ndarray:
        if not self.free_dims:
            return np.zeros(len(momenta), dtype=np.int64)
        side = 2 * self.K + 1
        return np.ravel_multi_index(tuple((momenta + self.K).T), (side,) * len(self.free_dims))

    def block_index(self, label: Iterable[int]) -> int:
        label = np.asarray(tuple(label), dtype=np.int64)
        if not self.conserved_dims:
            return 0
        if np.any(np.abs(label) > self.K):
            raise DiracError(f"label {label.tolist()} outside cutoff K={self.K}")
        side = 2 * self.K + 1
        return int(np.ravel_multi_index(tuple(label + self.K), (side,) * len(self.conserved_dims)))

    def momenta(self, b: int) -> np.ndarray:
        """Full momenta (M, n) of block b's basis, in basis order."""
        full = np.zeros((len(self.free_momenta), self.n), dtype=np.int64)
        full[:, list(self.conserved_dims)] = self.labels[b]
        full[:, list(self.free_dims)] = self.free_momenta
        return full

    def clifford_matrix(self, form: TrigPolyForm) -> np.ndarray:
        """
        Block matrix of cl(form) = sum_j form_j c_j; identical for every block.

        The form may only depend on the free directions.
        """
        if form.n != self.n or form.degree != 1:
            raise DiracError("Clifford multiplication needs a 1-form on the same torus")
        if form.fiber != 1:
            raise DiracError(f"Clifford multiplication needs a scalar 1-form, got fiber {form.fiber}")
        M, s = len(self.free_momenta), self.spin
        out = np.zeros((M, s, M, s), dtype=complex)
        for (q, (j,)), coeff in form.items():
            if any(q[d] for d in self.conserved_dims):
                raise DiracError(f"mode {q} couples conserved momenta; rebuild blocks with a smaller mask")
            shift = np.asarray([q[d] for d in self.free_dims], dtype=np.int64)
            target = self.free_momenta + shift
            valid = np.all(np.abs(target) <= self.K, axis=1)
            src = np.nonzero(valid)[0]
            dst = self._flat_free_index(target[valid])
            out[dst, :, src, :] += coeff[0, 0] * self._gamma[j]
        return out.reshape(M * s, M * s)

    def _diagonal_cells(self, indices: np.ndarray) -> np.ndarray:
        M = len(self.free_momenta)
        k = np.zeros((len(indices), M, self.n))
        k[:, :, list(self.conserved_dims)] = self.labels[indices][:, None, :]
        k[:, :, list(self.free_dims)] = self.free_momenta[None, :, :]
        v = 2 * math.pi * k + self._theta
        return np.einsum("bmj,jac->bmac", 1j * v, self._gamma)

    def batch(self, indices: Sequence[int]) -> np.ndarray:
        """Stacked dense matrices (len(indices), size, size)."""
        indices = np.asarray(indices, dtype=np.int64)
        M, s = len(self.free_momenta), self.spin
        H = np.repeat(self._coupling[None, :, :], len(indices), axis=0)
        view = H.reshape(len(indices), M, s, M, s)
        m = np.arange(M)
        view[:, m, :, m, :] += self._diagonal_cells(indices).transpose(1, 0, 2, 3)
        return H

    def matrix(self, b: int) -> np.ndarray:
        return self.batch([b])[0]


def assemble(
    conn: Connection,
    K: int,
    mask: Optional[Sequence[bool]] = None,
    clifford: Optional[CliffordRep] = None,
) -> DiracBlocks:
    return DiracBlocks(conn, K, mask=mask, clifford=clifford)


@dataclass(eq=False)
class EigenSystem:
    """
    Windowed eigen-data of every solved block, merged into flat arrays sorted
    by (eigenvalue, block). Per-block certificates cover the full block.
    """

    n: int
    K: int
    window: float
    mask: tuple
    spin: int
    fingerprint: str
    labels: np.ndarray  # (B, #conserved)
    free_momenta: np.ndarray  # (M, #free)
    solved: np.ndarray  # block indices that were solved
    values: np.ndarray  # (L,)
    block: np.ndarray  # (L,)
    vectors: Optional[np.ndarray]  # (L, size) or None
    residual: np.ndarray  # per solved block
    orthogonality: np.ndarray  # per solved block
    negative_counts: np.ndarray  # per solved block, full truncated spectrum

    @property
    def conserved_dims(self) -> tuple[int, ...]:
        return tuple(j for j in range(self.n) if self.mask[j])

    @property
    def free_dims(self) -> tuple[int, ...]:
        return tuple(j for j in range(self.n) if not self.mask[j])

    def __len__(self) -> int:
        return len(self.values)

    def select(self, lam: float) -> np.ndarray:
        """Indices of eigenpairs with |lambda| <= lam."""
        return np.nonzero(np.abs(self.values) <= lam)[0]

    def in_block(self, b: int) -> np.ndarray:
        return np.nonzero(self.block == b)[0]

    def negative_count(self, b: int) -> int:
        pos = np.searchsorted(self.solved, b)
        if pos >= len(self.solved) or self.solved[pos] != b:
            raise DiracError(f"block {b} was not solved")
        return int(self.negative_counts[pos])

    def min_abs(self) -> float:
        return float(np.min(np.abs(self.values))) if len(self.values) else math.inf

    def max_residual(self) -> float:
        return float(np.max(self.residual)) if len(self.residual) else 0.0

    def summary_rows(self) -> list[tuple]:
        """(eigenvalue, block, *label) rows for CSV export."""
        return [
            (float(v), int(b), *self.labels[b].tolist()) for v, b in zip(self.values, self.block)
        ]


def _certificates(H: np.ndarray, w: np.ndarray, V: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    residual = H @ V - V * w[:, None, :]
    diag = np.abs(np.diagonal(H, axis1=1, axis2=2)).max(axis=1)
    scale = np.maximum(np.maximum(diag, np.abs(w).max(axis=1)), np.finfo(float).tiny)
    res = np.linalg.norm(residual, axis=1).max(axis=1) / scale
    eye = np.eye(H.shape[-1])
    orth = np.abs(np.conj(V.transpose(0, 2, 1)) @ V - eye).max(axis=(1, 2))
    return res, orth


def _retry(H: np.ndarray, label: list, b: int) -> tuple[np.ndarray, np.ndarray, float, float]:
    for driver in FALLBACK_DRIVERS:
        w, V = sla.eigh(H, driver=driver)
        res, orth = _certificates(H[None], w[None], V[None])
        if res[0] <= RESIDUAL_TOL and orth[0] <= ORTHOGONALITY_TOL:
            logger.info("Block %d (label %s) certified with LAPACK driver %s", b, label, driver)
            return w, V, float(res[0]), float(orth[0])
    raise CertificateError(
        f"block {b} (label {label}): residual {res[0]:.3e} / orthogonality {orth[0]:.3e} "
        f"above {RESIDUAL_TOL:.0e} after drivers {FALLBACK_DRIVERS}"
    )


def _solve_chunk(blocks: DiracBlocks, chunk: np.ndarray, window: float, vectors: bool):
    H = blocks.batch(chunk)
    scale = np.maximum(np.abs(H).max(axis=(1, 2)), 1.0)
    herm = np.abs(H - np.conj(H.transpose(0, 2, 1))).max(axis=(1, 2)) / scale
    bad = np.nonzero(herm > HERMITICITY_TOL)[0]
    if len(bad):
        b = int(chunk[bad[0]])
        raise CertificateError(f"block {b} (label {blocks.labels[b].tolist()}) not hermitian: {herm[bad[0]]:.3e}")

    w, V = np.linalg.eigh(H)
    res, orth = _certificates(H, w, V)
    for i in np.nonzero((res > RESIDUAL_TOL) | (orth > ORTHOGONALITY_TOL))[0]:
        b = int(chunk[i])
        w[i], V[i], res[i], orth[i] = _retry(H[i], blocks.labels[b].tolist(), b)

    keep = np.abs(w) <= window
    values = w[keep]
    block = np.broadcast_to(chunk[:, None], w.shape)[keep]
    vecs = V.transpose(0, 2, 1)[keep] if vectors else None
    return values, block, vecs, res, orth, (w < 0).sum(axis=1)


def eig(
    blocks: DiracBlocks,
    window: Optional[float] = None,
    vectors: bool = True,
    block_indices: Optional[Iterable[int]] = None,
) -> EigenSystem:
    """
    Certified decomposition of the selected blocks (all by default), keeping
    eigenpairs with |lambda| <= window (the trusted window by default).
    """
    window = trusted_window(blocks.K) if window is None else window
    if block_indices is None:
        solved = np.arange(blocks.num_blocks, dtype=np.int64)
    else:
        solved = np.unique(np.asarray(list(block_indices), dtype=np.int64))
    step = max(1, BATCH_ENTRIES // max(1, blocks.size**2))
    chunks = [solved[i : i + step] for i in range(0, len(solved), step)]
    parts = parallel_map(lambda c: _solve_chunk(blocks, c, window, vectors), chunks)

    values = np.concatenate([p[0] for p in parts])
    block = np.concatenate([p[1] for p in parts]).astype(np.int64)
    order = np.lexsort((block, values))
    vecs = np.concatenate([p[2] for p in parts])[order] if vectors else None
    system = EigenSystem(
        n=blocks.n,
        K=blocks.K,
        window=window,
        mask=blocks.mask,
        spin=blocks.spin,
        fingerprint=blocks.conn.fingerprint(),
        labels=blocks.labels,
        free_momenta=blocks.free_momenta,
        solved=solved,
        values=values[order],
        block=block[order],
        vectors=vecs,
        residual=np.concatenate([p[3] for p in parts]),
        orthogonality=np.concatenate([p[4] for p in parts]),
        negative_counts=np.concatenate([p[5] for p in parts]).astype(np.int64),
    )
    logger.debug(
        "eig: %d blocks of size %d, %d pairs in window %.3f, max residual %.2e",
        len(solved), blocks.size, len(system), window, system.max_residual(),
    )
    return system


def solve(
    conn: Connection,
    K: int,
    mask: Optional[Sequence[bool]] = None,
    window: Optional[float] = None,
    vectors: bool = True,
    block_indices: Optional[Iterable[int]] = None,
    use_cache: bool = True,
) -> EigenSystem:
    """assemble + eig through the shared eigensystem cache."""
    mask = tuple(mask) if mask is not None else conserved_mask(conn.n, conn.osc)
    window = trusted_window(K) if window is None else float(window)
    selection = tuple(sorted(set(int(b) for b in block_indices))) if block_indices is not None else None
    key = (conn.fingerprint(), K, mask, round(window, 12), vectors, selection)
    cache = get_eigen_cache()
    if use_cache:
        cached = cache.get(key)
        if cached is not None:
            return cached
    system = eig(assemble(conn, K, mask), window=window, vectors=vectors, block_indices=selection)
    if use_cache:
        cache.set(key, system)
    return system


def cl_pairing(v: np.ndarray, b: TrigPolyForm, blocks: DiracBlocks) -> float:
    """<v, cl(b) v> in the block basis."""
    value = complex(np.vdot(v, blocks.clifford_matrix(b) @ v))
    if abs(value.imag) > PAIRING_TOL * max(1.0, abs(value)):
        raise CertificateError(f"cl pairing has imaginary part {value.imag:.3e}; Clifford convention broken")
    return value.real


def cl_pairings(vectors: np.ndarray, b: TrigPolyForm, blocks: DiracBlocks) -> np.ndarray:
    """cl_pairing for every row of ``vectors`` at once."""
    if len(vectors) == 0:
        return np.zeros(0)
    values = np.einsum("li,ij,lj->l", np.conj(vectors), blocks.clifford_matrix(b), vectors)
    worst = np.max(np.abs(values.imag) / np.maximum(1.0, np.abs(values)))
    if worst > PAIRING_TOL:
        raise CertificateError(f"cl pairing has relative imaginary part {worst:.3e}; Clifford convention broken")
    return values.real


# Weitzenboeck self-check


def _roll(psi: np.ndarray, q: Sequence[int], n: int) -> np.ndarray:
    return np.roll(psi, shift=tuple(int(x) for x in q), axis=tuple(range(n)))


def _covariant(conn: Connection, j: int, psi: np.ndarray, Kb: int) -> np.ndarray:
    n = conn.n
    shape = [1] * n + [1]
    shape[j] = 2 * Kb + 1
    k = np.arange(-Kb, Kb + 1).reshape(shape)
    out = 1j * (2 * math.pi * k + conn.hol[j]) * psi
    for (q, (i,)), coeff in conn.osc.items():
        if i == j:
            out = out + coeff[0, 0] * _roll(psi, q, n)
    return out


def _apply_twice(blocks: DiracBlocks, psi: np.ndarray, inner: int) -> np.ndarray:
    out = np.zeros_like(psi)
    Kb = blocks.K
    for b, label in enumerate(blocks.labels):
        if np.any(np.abs(label) > inner):
            continue
        index: list = [slice(None)] * blocks.n
        for d, value in zip(blocks.conserved_dims, label):
            index[d] = int(value) + Kb
        index = tuple(index)
        part = psi[index]
        H = blocks.matrix(b)
        out[index] = (H @ (H @ part.reshape(-1))).reshape(part.shape)
    return out


def weitzenbock_residual(
    conn: Connection,
    K: int,
    trials: int = 4,
    seed: int = 0,
    curvature_rep: Optional[CliffordRep] = None,
) -> float:
    """
    max over random trial sections psi (modes |k_j| <= K/2) of
    ||D^2 psi - (nabla^* nabla psi + cl(F_{A_F}) psi)|| / ||psi||.

    D^2 uses the assembled blocks; the right side is applied matrix-free.
    ``curvature_rep`` replaces the gammas in cl(F) only (negative control).
    """
    n = conn.n
    inner = max(1, K // 2)
    Kb = inner + 2 * conn.osc.support_radius()
    blocks = DiracBlocks(conn, Kb)
    gamma = (curvature_rep or blocks.clifford).stack()
    F = conn.curvature()
    rng = np.random.default_rng(seed)
    side = 2 * Kb + 1
    box = (slice(Kb - inner, Kb + inner + 1),) * n

    worst = 0.0
    for _ in range(trials):
        psi = np.zeros((side,) * n + (blocks.spin,), dtype=complex)
        shape = psi[box].shape
        psi[box] = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)

        lhs = _apply_twice(blocks, psi, inner)
        rhs = np.zeros_like(psi)
        for j in range(n):
            rhs -= _covariant(conn, j, _covariant(conn, j, psi, Kb), Kb)
        if not F.overflow:
            for (q, (j, l)), coeff in F.items():
                rhs += coeff[0, 0] * np.einsum("ab,...b->...a", gamma[j] @ gamma[l], _roll(psi, q, n))
        worst = max(worst, float(np.linalg.norm(lhs - rhs) / np.linalg.norm(psi)))
    return worst


# Curvature scale r(A)


def curvature_sup_norms(conn: Connection, grid: Optional[int] = None) -> list[float]:
    """
    Sup-norms of F_A, nabla F_A, ..., nabla^{(n-1)/2} F_A on a uniform grid.

    F_A is rebuilt from the stored spinor-level curvature by doubling its
    central part; the derivatives are exact Fourier derivatives.
    """
    n = conn.n
    top = (n - 1) // 2
    F = conn.curvature()
    if F.overflow or F.is_zero:
        return [0.0] * (top + 1)

    k = conn.fiber
    central = TrigPolyForm(
        n, 2, {key: c[0, 0] / k * np.eye(k) for key, c in F.trace().items()}, fiber=k
    )
    FA = F + central
    radius = max(FA.support_radius(), conn.osc.support_radius())
    minimum = 4 * (radius + 1)
    grid = 2 * minimum if grid is None else grid
    if grid < minimum:
        raise DiracError(f"grid {grid} below 4x the Fourier support ({minimum})")

    axes = np.meshgrid(*([np.arange(grid) / grid] * n), indexing="ij")
    points = np.stack([a.ravel() for a in axes], axis=1)
    potential = [conn.form().component((m,)) for m in range(n)]
    tensors = {(pair,): FA.component(pair) for pair in combinations(range(n), 2)}

    norms = []
    for order in range(top + 1):
        total = np.zeros(len(points))
        for comp in tensors.values():
            if not comp.is_zero:
                values = comp.evaluate(points)[()]
                total += np.sum(np.abs(values) ** 2, axis=(1, 2))
        norms.append(float(np.sqrt(total.max())))
        if order < top:
            tensors = {
                idx + (m,): ext_d(T).component((m,)) + wedge(potential[m], T) - wedge(T, potential[m])
                for idx, T in tensors.items()
                for m in range(n)
            }
    return norms


def curvature_scale(sup_norms: Sequence[float]) -> float:
    """Infimum rho >= 1 with sum_j rho^{-(1 + j/2)} S_j <= 1."""

    def excess(rho: float) -> float:
        return sum(s * rho ** -(1 + j / 2) for j, s in enumerate(sup_norms)) - 1.0

    if excess(1.0) <= 0:
        return 1.0
    hi = 2.0
    while excess(hi) > 0:
        hi *= 2.0
    return float(optimize.bisect(excess, 1.0, hi, xtol=1e-10, rtol=4 * np.finfo(float).eps))


def r_of_A(conn: Connection, grid: Optional[int] = None) -> float:
    return curvature_scale(curvature_sup_norms(conn, grid))


# Cutoff diagnostics


def window_match(a: np.ndarray, b: np.ndarray, lam: float, margin: float = 1e-6) -> float:
    """Max deviation between the sorted spectra inside |lambda| <= lam (inf on count mismatch)."""
    for edge in (lam, lam - margin):
        x = np.sort(a[np.abs(a) <= edge])
        y = np.sort(b[np.abs(b) <= edge])
        if len(x) == len(y):
            return float(np.max(np.abs(x - y))) if len(x) else 0.0
    return math.inf


def cutoff_drift(
    conn: Connection, K: int, mask: Optional[Sequence[bool]] = None, step: int = 4
) -> float:
    window = trusted_window(K)
    coarse = solve(conn, K, mask, window=window + 1.0, vectors=False)
    fine = solve(conn, K + step, mask, window=window + 1.0, vectors=False)
    return window_match(coarse.values, fine.values, window)


def check_cutoff_stability(
    conn: Connection, K: int, mask: Optional[Sequence[bool]] = None, step: int = 4, tol: float = CUTOFF_TOL
) -> float:
    drift = cutoff_drift(conn, K, mask, step)
    if drift > tol:
        raise CertificateError(
            f"trusted-window eigenvalues moved by {drift:.3e} when K {K} -> {K + step} "
            f"(window {trusted_window(K):.3f}); raise K"
        )
    return drift
