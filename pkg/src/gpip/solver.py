"""Joint user selection, power allocation, and precoding for one cell.

The weighted sum of rate lower bounds over K users equals the base-2 log of a
product of Rayleigh quotients of the stacked per-user precoder f (length N*K):

    objective(f) = prod_k [ f^H A_k f / f^H B_k f ]^(w_k)

where A_k repeats the user-k effective channel block (outer product of the
estimate, plus its error covariance, plus the noise-over-power ridge) down the
diagonal, and B_k is A_k with the desired rank-one term removed from block k.
A stationary point satisfies the self-consistent pencil equation
Abar(f) f = objective(f) * Bbar(f) f, and the solver finds one by power
iteration: f <- normalize(Bbar(f)^-1 Abar(f) f). Selection, powers, and beam
directions are all read off the per-user segments of the converged stack.

Block structure is exploited throughout: Abar has K identical diagonal blocks
and every block of Bbar is that shared matrix minus one rank-one term, so one
iteration costs K Cholesky solves of size N, never a dense N*K factorization.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch
from .numerics import BlockDiagonal, rank1_inverse_update, solve_hermitian

DEFAULT_TOL = 0.01
DEFAULT_MAX_ITER = 100
DEFAULT_SELECT_THRESHOLD = 0.01


@dataclass(frozen=True)
class EffectivePair:
    """The pair of lifted matrices defining user k's Rayleigh quotient."""

    user: int
    n_users: int
    estimate: np.ndarray  # (N,)
    error_cov: np.ndarray  # (N, N)
    noise_ratio: float  # effective noise variance over transmit power

    @property
    def n_antennas(self) -> int:
        return self.estimate.shape[0]

    def signal_block(self) -> np.ndarray:
        """One diagonal block of A: estimate outer product + error cov + ridge."""
        n = self.n_antennas
        return (
            np.outer(self.estimate, self.estimate.conj())
            + self.error_cov
            + self.noise_ratio * np.eye(n)
        )

    @property
    def a(self) -> BlockDiagonal:
        blk = self.signal_block()
        return BlockDiagonal(np.broadcast_to(blk, (self.n_users, *blk.shape)).copy())

    @property
    def b(self) -> BlockDiagonal:
        blk = self.signal_block()
        blocks = np.broadcast_to(blk, (self.n_users, *blk.shape)).copy()
        blocks[self.user] -= np.outer(self.estimate, self.estimate.conj())
        return BlockDiagonal(blocks)


def build_effective_pair(
    estimates: np.ndarray, error_covs, user: int, noise_ratio
) -> EffectivePair:
    """Lift user `user`'s quotient from the cell's estimates and error covariances."""
    est, cov, nr = _as_cell_arrays(estimates, error_covs, noise_ratio)
    if not 0 <= user < est.shape[0]:
        raise DimensionMismatch(f"user index {user} out of range")
    return EffectivePair(user, est.shape[0], est[user], cov[user], float(nr[user]))


def build_effective_pairs(estimates, error_covs=None, noise_ratio=1.0) -> list[EffectivePair]:
    """One EffectivePair per user of the cell."""
    est, _, _ = _as_cell_arrays(estimates, error_covs, noise_ratio)
    return [build_effective_pair(estimates, error_covs, k, noise_ratio) for k in range(est.shape[0])]


def _as_cell_arrays(estimates, error_covs, noise_ratio):
    est = np.asarray(estimates, dtype=np.complex128)
    if est.ndim != 2:
        raise DimensionMismatch(f"estimates must be (K, N), got {est.shape}")
    k, n = est.shape
    if error_covs is None:
        cov = np.zeros((k, n, n), dtype=np.complex128)
    else:
        cov = np.asarray(error_covs, dtype=np.complex128)
        if cov.shape != (k, n, n):
            raise DimensionMismatch(f"error covariances must be (K, N, N), got {cov.shape}")
    nr = np.broadcast_to(np.asarray(noise_ratio, dtype=float), (k,))
    return est, cov, nr


def _unpack_pairs(pairs: list[EffectivePair]):
    k = len(pairs)
    if k == 0:
        raise DimensionMismatch("need at least one quotient pair")
    if sorted(p.user for p in pairs) != list(range(k)) or any(p.n_users != k for p in pairs):
        raise DimensionMismatch("pairs must cover users 0..K-1 exactly once")
    ordered = sorted(pairs, key=lambda p: p.user)
    est = np.array([p.estimate for p in ordered])
    cov = np.array([p.error_cov for p in ordered])
    nr = np.array([p.noise_ratio for p in ordered])
    return est, cov, nr


def _as_weights(weights, k: int) -> np.ndarray:
    if weights is None:
        return np.ones(k)
    w = np.asarray(weights, dtype=float)
    if w.shape != (k,):
        raise DimensionMismatch(f"weights must have shape ({k},)")
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    return w


class _CellProblem:
    """Precomputed per-cell quantities shared by every iteration."""

    def __init__(self, est, cov, nr):
        self.est = est  # (K, N)
        self.cov = cov  # (K, N, N)
        self.nr = nr  # (K,)
        self.k, self.n = est.shape
        self.rank1 = np.einsum("kn,km->knm", est, est.conj())
        self.g0 = self.rank1 + cov  # per-user block without the ridge
        self.has_cov = bool(np.any(cov))

    def quad_forms(self, f_users: np.ndarray):
        """f^H A_k f and f^H B_k f for all k, for per-user rows f_users (K, N)."""
        norm2 = float(np.sum(np.abs(f_users) ** 2))
        inner = self.est.conj() @ f_users.T  # inner[k, i] = est_k^H f_i
        sig = np.sum(np.abs(inner) ** 2, axis=1)
        if self.has_cov:
            sig = sig + np.real(
                np.einsum("in,knm,im->k", f_users.conj(), self.cov, f_users)
            )
        qa = sig + self.nr * norm2
        qb = qa - np.abs(np.diagonal(inner)) ** 2
        return qa, qb

    def coefficients(self, qa, qb, w):
        """Log-domain quotient weights, re-centered by the shared max exponent.

        Products of K quadratic forms overflow doubles well before K hits the
        sizes the solver targets, so both coefficient families are accumulated
        as log sums and exponentiated after subtracting one shared maximum,
        which fixes the common positive scale of Abar and Bbar.
        """
        log_c = np.log(w) - np.log(qa) + np.sum(w * np.log(qa))
        log_d = np.log(w) - np.log(qb) + np.sum(w * np.log(qb))
        shift = max(log_c.max(), log_d.max())
        return np.exp(log_c - shift), np.exp(log_d - shift)

    def abar_block(self, c):
        """The one distinct diagonal block of Abar."""
        return np.tensordot(c, self.g0, axes=1) + float(np.sum(c * self.nr)) * np.eye(self.n)

    def bbar_shared(self, d):
        """Shared part of Bbar's blocks; block j subtracts d_j * rank1_j."""
        return np.tensordot(d, self.g0, axes=1) + float(np.sum(d * self.nr)) * np.eye(self.n)


def objective_log2(pairs: list[EffectivePair], weights, f_users: np.ndarray) -> float:
    """log2 of the Rayleigh-quotient product; equals the weighted rate bound sum."""
    est, cov, nr = _unpack_pairs(pairs)
    prob = _CellProblem(est, cov, nr)
    w = _as_weights(weights, prob.k)
    qa, qb = prob.quad_forms(np.asarray(f_users, dtype=np.complex128))
    return float(np.sum(w * (np.log2(qa) - np.log2(qb))))


def objective_lambda(pairs: list[EffectivePair], weights, f_users: np.ndarray) -> float:
    """The Rayleigh-quotient product itself (may overflow for very large K)."""
    return float(2.0 ** objective_log2(pairs, weights, f_users))


def build_weighted_pair(
    pairs: list[EffectivePair], weights, f_users: np.ndarray
) -> tuple[BlockDiagonal, BlockDiagonal]:
    """The linearized pencil (Abar(f), Bbar(f)) at the given stack.

    Both matrices are defined up to one common positive scale, fixed here by
    the shared-max-exponent normalization of the coefficients.
    """
    est, cov, nr = _unpack_pairs(pairs)
    prob = _CellProblem(est, cov, nr)
    w = _as_weights(weights, prob.k)
    f_users = np.asarray(f_users, dtype=np.complex128)
    qa, qb = prob.quad_forms(f_users)
    c, d = prob.coefficients(qa, qb, w)
    a_blk = prob.abar_block(c)
    shared = prob.bbar_shared(d)
    a_blocks = np.broadcast_to(a_blk, (prob.k, prob.n, prob.n)).copy()
    b_blocks = shared[None, :, :] - d[:, None, None] * prob.rank1
    return BlockDiagonal(a_blocks), BlockDiagonal(b_blocks)


def kkt_residual(pairs: list[EffectivePair], weights, f_users: np.ndarray) -> float:
    """|| Abar f - objective * Bbar f || / || Abar f ||, zero at stationarity."""
    abar, bbar = build_weighted_pair(pairs, weights, f_users)
    lam = objective_lambda(pairs, weights, f_users)
    f = np.asarray(f_users, dtype=np.complex128).reshape(-1)
    af = abar.matvec(f)
    bf = bbar.matvec(f)
    return float(np.linalg.norm(af - lam * bf) / np.linalg.norm(af))


def mrt_stack(estimates: np.ndarray) -> np.ndarray:
    """Matched-filter initial stack: the estimates themselves, jointly normalized."""
    est = np.asarray(estimates, dtype=np.complex128)
    return est / np.linalg.norm(est)


def extract_schedule(
    f_users: np.ndarray,
    activity_threshold: float = DEFAULT_SELECT_THRESHOLD,
    total_power: float = 1.0,
) -> tuple[list[int], np.ndarray]:
    """Active users and their transmit powers, read off the per-user norms.

    User k is scheduled iff ||f_k||_2 >= activity_threshold; its power is
    total_power * ||f_k||_2^2.
    """
    f_users = np.asarray(f_users)
    norms = np.linalg.norm(f_users, axis=1)
    active = [int(k) for k in np.nonzero(norms >= activity_threshold)[0]]
    return active, total_power * norms**2


@dataclass
class GpipResult:
    """Converged (or best-found) solution of the fixed-point iteration."""

    precoder: np.ndarray  # (K, N) per-user rows, unit total power
    objective_log2: float
    iterations: int
    converged: bool
    kkt_residual: float
    schedule: list[int]
    per_user_power: np.ndarray
    trajectory: list[float] = field(default_factory=list)  # objective_log2 per iterate

    @property
    def stacked(self) -> np.ndarray:
        return self.precoder.reshape(-1)

    def csv_row(self, seed, snr_db) -> list:
        k, n = self.precoder.shape
        row = [seed, n, k, snr_db, self.iterations, repr(self.objective_log2),
               repr(self.kkt_residual), len(self.schedule)]
        row.extend(repr(float(p)) for p in self.per_user_power)
        return row

    @staticmethod
    def csv_header(n_users: int) -> list[str]:
        base = ["seed", "N", "K", "SNR_dB", "iterations", "objective_log2",
                "kkt_residual", "active_count"]
        return base + [f"power_{k}" for k in range(n_users)]


def _finish(w, pairs, best_f, best_obj, iterations, converged, traj,
            select_threshold) -> GpipResult:
    res = kkt_residual(pairs, w, best_f)
    active, powers = extract_schedule(best_f, select_threshold)
    return GpipResult(
        precoder=best_f,
        objective_log2=best_obj,
        iterations=iterations,
        converged=converged,
        kkt_residual=res,
        schedule=active,
        per_user_power=powers,
        trajectory=traj,
    )


def gpip_iterate(
    pairs: list[EffectivePair],
    weights=None,
    init: np.ndarray | None = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    select_threshold: float = DEFAULT_SELECT_THRESHOLD,
) -> GpipResult:
    """Power iteration on the self-consistent pencil until the stack settles.

    Each sweep rebuilds the pencil at the current stack, applies the shared
    Abar block, solves the K rank-one-perturbed Bbar blocks by Cholesky, and
    renormalizes. The normalized update runs first and the stopping distance
    compares successive unit-norm stacks, so `tol` is scale-free. The iterate
    with the best objective seen (including the start) is returned, so the
    result never falls below its initialization.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    est, cov, nr = _unpack_pairs(pairs)
    prob = _CellProblem(est, cov, nr)
    w = _as_weights(weights, prob.k)
    f = mrt_stack(est) if init is None else np.asarray(init, dtype=np.complex128).copy()
    if f.shape == (prob.k * prob.n,):
        f = f.reshape(prob.k, prob.n)
    if f.shape != (prob.k, prob.n):
        raise DimensionMismatch(f"init must be (K, N) or (K*N,), got {f.shape}")
    if not np.linalg.norm(f) > 0:
        raise ValueError("init must be nonzero")
    f = f / np.linalg.norm(f)

    def log2_obj(fu, qa=None, qb=None):
        if qa is None:
            qa, qb = prob.quad_forms(fu)
        return float(np.sum(w * (np.log2(qa) - np.log2(qb))))

    best_f = f.copy()
    best_obj = log2_obj(f)
    traj = [best_obj]
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        qa, qb = prob.quad_forms(f)
        c, d = prob.coefficients(qa, qb, w)
        a_blk = prob.abar_block(c)
        shared = prob.bbar_shared(d)
        rhs = f @ a_blk.T  # row j is a_blk @ f_j
        f_new = np.empty_like(f)
        for j in range(prob.k):
            block = shared - d[j] * prob.rank1[j]
            f_new[j] = solve_hermitian(block, rhs[j])
        f_new /= np.linalg.norm(f_new)
        step = float(np.linalg.norm(f_new - f))
        f = f_new
        obj = log2_obj(f)
        traj.append(obj)
        if obj > best_obj:
            best_obj, best_f = obj, f.copy()
        if step <= tol:
            converged = True
            break
    return _finish(w, pairs, best_f, best_obj, iterations, converged, traj,
                   select_threshold)


def covfree_block_inverses(
    estimates: np.ndarray, d: np.ndarray, delta: float
) -> np.ndarray:
    """Inverses of every Bbar block when all error covariances are scalar.

    Block j is delta * I + sum_{i != j} d_i * est_i est_i^H; its inverse is
    built from (1/delta) I by chaining K-1 rank-one inverse updates, one per
    interfering estimate, replacing the Cholesky factorization with vector
    arithmetic.
    """
    est = np.asarray(estimates, dtype=np.complex128)
    k, n = est.shape
    out = np.empty((k, n, n), dtype=np.complex128)
    for j in range(k):
        inv = (1.0 / delta) * np.eye(n)
        for i in range(k):
            if i != j:
                inv = rank1_inverse_update(inv, est[i], float(d[i]))
        out[j] = inv
    return out


def gpip_covfree(
    estimates: np.ndarray,
    error_scales,
    noise_ratio,
    weights=None,
    init: np.ndarray | None = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    select_threshold: float = DEFAULT_SELECT_THRESHOLD,
) -> GpipResult:
    """gpip_iterate for scalar error covariances, with recursive block inverses.

    `error_scales` holds the per-user scalar error variances alpha_k (the
    error covariance is alpha_k * I). Iteration semantics are identical to
    gpip_iterate; only the block inversion path differs, so the two agree to
    solver tolerance on the same inputs.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    est = np.asarray(estimates, dtype=np.complex128)
    k, n = est.shape
    alphas = np.broadcast_to(np.asarray(error_scales, dtype=float), (k,))
    nr = np.broadcast_to(np.asarray(noise_ratio, dtype=float), (k,))
    cov = alphas[:, None, None] * np.eye(n)[None, :, :]
    pairs = [EffectivePair(j, k, est[j], cov[j], float(nr[j])) for j in range(k)]
    prob = _CellProblem(est, cov.astype(np.complex128), nr)
    w = _as_weights(weights, k)
    f = mrt_stack(est) if init is None else np.asarray(init, dtype=np.complex128).copy()
    if f.shape == (k * n,):
        f = f.reshape(k, n)
    f = f / np.linalg.norm(f)

    def log2_obj(fu):
        qa, qb = prob.quad_forms(fu)
        return float(np.sum(w * (np.log2(qa) - np.log2(qb))))

    best_f = f.copy()
    best_obj = log2_obj(f)
    traj = [best_obj]
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        qa, qb = prob.quad_forms(f)
        c, d = prob.coefficients(qa, qb, w)
        a_blk = prob.abar_block(c)
        delta = float(np.sum(d * (alphas + nr)))
        inverses = covfree_block_inverses(est, d, delta)
        rhs = f @ a_blk.T
        f_new = np.einsum("jnm,jm->jn", inverses, rhs)
        f_new /= np.linalg.norm(f_new)
        step = float(np.linalg.norm(f_new - f))
        f = f_new
        obj = log2_obj(f)
        traj.append(obj)
        if obj > best_obj:
            best_obj, best_f = obj, f.copy()
        if step <= tol:
            converged = True
            break
    return _finish(w, pairs, best_f, best_obj, iterations, converged, traj,
                   select_threshold)
