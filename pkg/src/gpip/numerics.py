"""Dense complex Hermitian linear-algebra kernels.

Everything here is deterministic (no randomized pivoting) and pure: identical
inputs give bit-identical outputs. Inverses are never materialized for solves;
only the rank-one update path carries explicit inverses, because its recursion
needs them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DenominatorUnderflow, DimensionMismatch, EigenFailure, NotPositiveDefinite

# A pivot at or below this fraction of the largest diagonal entry is treated
# as a non-PD input. Relative, so the check is invariant to the physical
# units of channel gains. Effective-channel matrices always carry a noise
# ridge, so genuine solver inputs stay clear.
PIVOT_TOL = 1e-12
# Eigenvalues below this fraction of the largest are clipped to zero in PSD
# square roots; small-angular-spread correlation matrices are rank-deficient.
EIG_CLIP_REL = 1e-12
SM_DENOM_TOL = 1e-14


def hermitize(m: np.ndarray) -> np.ndarray:
    """Return the Hermitian part (m + m^H)/2."""
    m = np.asarray(m)
    return 0.5 * (m + m.conj().T)


def cholesky_factor(m: np.ndarray, pivot_tol: float = PIVOT_TOL) -> np.ndarray:
    """Lower-triangular L with L @ L^H = m for Hermitian positive-definite m.

    Raises NotPositiveDefinite if any pivot is <= pivot_tol times the largest
    diagonal entry, which signals a degenerate input: the caller must add a
    ridge or reject it.
    """
    a = np.asarray(m, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    n = a.shape[0]
    scale = float(np.max(a.diagonal().real, initial=0.0))
    if scale <= 0.0:
        raise NotPositiveDefinite("no positive diagonal entry")
    threshold = pivot_tol * scale
    low = np.zeros((n, n), dtype=np.complex128)
    for j in range(n):
        pivot = a[j, j].real - np.sum(np.abs(low[j, :j]) ** 2)
        if not pivot > threshold:
            raise NotPositiveDefinite(
                f"pivot {pivot:.3e} at column {j} (threshold {threshold:.1e})"
            )
        low[j, j] = np.sqrt(pivot)
        if j + 1 < n:
            low[j + 1 :, j] = (a[j + 1 :, j] - low[j + 1 :, :j] @ low[j, :j].conj()) / low[j, j]
    return low


def solve_hermitian(m: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve m @ x = rhs for Hermitian positive-definite m via Cholesky."""
    low = cholesky_factor(m)
    y = solve_triangular(low, rhs, lower=True, check_finite=False)
    return solve_triangular(low.conj().T, y, lower=False, check_finite=False)


def rank1_inverse_update(inv: np.ndarray, u: np.ndarray, c: float) -> np.ndarray:
    """Given inv = M^-1, return (M + c * u u^H)^-1 by the Sherman-Morrison identity.

    Raises DenominatorUnderflow when 1/c + u^H inv u falls below tolerance in
    magnitude, which would make the update numerically meaningless.
    """
    if c <= 0:
        raise ValueError("update scale c must be positive")
    u = np.asarray(u, dtype=np.complex128)
    v = inv @ u
    denom = 1.0 / c + np.real(u.conj() @ v)
    if abs(denom) < SM_DENOM_TOL:
        raise DenominatorUnderflow(f"Sherman-Morrison denominator {denom:.3e}")
    return hermitize(inv - np.outer(v, v.conj()) / denom)


def hermitian_sqrt(m: np.ndarray, clip_rel: float = EIG_CLIP_REL) -> np.ndarray:
    """Hermitian PSD square root S with S @ S^H = m.

    Eigenvalues below clip_rel times the largest are clipped to zero, so
    numerically rank-deficient PSD inputs are handled without complex noise.
    """
    a = hermitize(np.asarray(m, dtype=np.complex128))
    try:
        w, u = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(str(exc)) from exc
    top = w[-1] if w.size else 0.0
    w = np.where(w < clip_rel * max(top, 0.0), 0.0, w)
    return (u * np.sqrt(w)) @ u.conj().T


@dataclass(frozen=True)
class BlockDiagonal:
    """Block-diagonal Hermitian matrix stored as stacked equal-size blocks.

    Off-block entries are implicitly zero and never materialized. `blocks`
    has shape (n_blocks, n, n); the total dimension is n_blocks * n.
    """

    blocks: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.blocks, dtype=np.complex128)
        if b.ndim != 3 or b.shape[1] != b.shape[2]:
            raise DimensionMismatch(f"expected (k, n, n) blocks, got shape {b.shape}")
        object.__setattr__(self, "blocks", b)

    @property
    def n_blocks(self) -> int:
        return self.blocks.shape[0]

    @property
    def block_dim(self) -> int:
        return self.blocks.shape[1]

    @property
    def dim(self) -> int:
        return self.n_blocks * self.block_dim

    def _split(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f)
        if f.shape != (self.dim,):
            raise DimensionMismatch(f"vector length {f.shape} != {self.dim}")
        return f.reshape(self.n_blocks, self.block_dim)

    def matvec(self, f: np.ndarray) -> np.ndarray:
        parts = self._split(f)
        return np.einsum("knm,km->kn", self.blocks, parts).reshape(-1)

    def quad(self, f: np.ndarray) -> float:
        """Real quadratic form f^H M f."""
        parts = self._split(f)
        return float(np.real(np.einsum("kn,knm,km->", parts.conj(), self.blocks, parts)))

    def solve(self, f: np.ndarray) -> np.ndarray:
        """Per-block Cholesky solve; never factors the dense matrix."""
        parts = self._split(f)
        out = np.empty_like(parts)
        for k in range(self.n_blocks):
            out[k] = solve_hermitian(self.blocks[k], parts[k])
        return out.reshape(-1)

    def dense(self) -> np.ndarray:
        n, d = self.block_dim, self.dim
        out = np.zeros((d, d), dtype=np.complex128)
        for k in range(self.n_blocks):
            out[k * n : (k + 1) * n, k * n : (k + 1) * n] = self.blocks[k]
        return out
