"""Reference precoders and user-selection schemes.

All functions take per-user channel rows (K, N) and return per-user precoder
rows (K, N) normalized to unit total power (sum over users of squared norms),
plus selection metadata where applicable. `noise_ratio` is always the
effective noise variance divided by the total transmit power.
"""

from __future__ import annotations

import numpy as np

from .errors import NotPositiveDefinite, RankDeficient
from .numerics import solve_hermitian

DEFAULT_SUS_ALPHA = 0.3


def mrt(estimates: np.ndarray) -> np.ndarray:
    """Matched filtering: beams along the estimates, channel-strength powers."""
    est = np.asarray(estimates, dtype=np.complex128)
    return est / np.linalg.norm(est)


def _zf_directions(est: np.ndarray) -> np.ndarray:
    """Unit-norm zero-forcing beam rows for full-column-rank channel rows."""
    k, n = est.shape
    if k > n:
        raise RankDeficient(f"{k} users exceed {n} antennas")
    h = est.T  # (N, K) columns
    gram = h.conj().T @ h  # (K, K)
    try:
        cols = solve_hermitian(gram, h.conj().T).conj().T  # h @ gram^-1, (N, K)
    except NotPositiveDefinite as exc:
        raise RankDeficient(f"channel rows are linearly dependent: {exc}") from exc
    dirs = cols / np.linalg.norm(cols, axis=0, keepdims=True)
    return dirs.T  # (K, N) rows


def zf(estimates: np.ndarray) -> np.ndarray:
    """Zero forcing with equal per-user power."""
    est = np.asarray(estimates, dtype=np.complex128)
    dirs = _zf_directions(est)
    return dirs / np.sqrt(est.shape[0])


def rrzf(estimates: np.ndarray, error_covs, noise_ratio: float, ridge_scale: float = 1.0) -> np.ndarray:
    """Regularized zero forcing robustified by the summed error covariances.

    Beam rows solve (H^H H_cov + sum_k Phi_k + ridge_scale*noise_ratio*I) x_k
    = est_k, where the first term is the N x N outer-product sum of the
    estimates; the result is normalized to unit total power. With zero error
    covariances this is plain RZF. noise_ratio is one scalar: the shared
    inverse admits a single regularization level.
    """
    est = np.asarray(estimates, dtype=np.complex128)
    k, n = est.shape
    gram = est.T @ est.conj()  # sum_k est_k est_k^H, (N, N)
    if error_covs is not None:
        gram = gram + np.sum(np.asarray(error_covs, dtype=np.complex128), axis=0)
    gram = gram + ridge_scale * float(noise_ratio) * np.eye(n)
    cols = solve_hermitian(gram, est.T)  # (N, K)
    f = cols.T
    return f / np.linalg.norm(f)


def rzf(estimates: np.ndarray, noise_ratio: float, ridge_scale: float = 1.0) -> np.ndarray:
    """Regularized zero forcing; the zero-error-covariance case of rrzf."""
    return rrzf(estimates, None, noise_ratio, ridge_scale)


def waterfill(gains, total_power: float, noise_var: float = 1.0) -> np.ndarray:
    """Power allocation p_k = max(0, mu - noise_var/gains_k) summing to total_power.

    The water level mu is located by bisection; a final equal spread of the
    (tiny) bisection residue over the active channels pins the sum exactly.
    """
    g = np.asarray(gains, dtype=float)
    noise_var = float(noise_var)
    if g.size == 0 or np.all(g <= 0):
        raise ValueError("need at least one positive gain")
    floors = np.where(g > 0, noise_var / np.maximum(g, 1e-300), np.inf)
    lo = float(np.min(floors))
    hi = lo + total_power + 1e-12

    def allocated(mu):
        return float(np.sum(np.maximum(0.0, mu - floors[np.isfinite(floors)])))

    while allocated(hi) < total_power:
        hi = lo + 2 * (hi - lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if allocated(mid) < total_power:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15 * max(1.0, hi):
            break
    mu = 0.5 * (lo + hi)
    p = np.where(np.isfinite(floors), np.maximum(0.0, mu - floors), 0.0)
    active = p > 0
    if np.any(active):
        p[active] += (total_power - p.sum()) / np.count_nonzero(active)
    return p


def sus_zf(
    estimates: np.ndarray, noise_ratio: float, alpha_sus: float = DEFAULT_SUS_ALPHA
) -> tuple[list[int], np.ndarray]:
    """Semi-orthogonal user selection, then zero forcing with water-filled powers.

    Greedy: pick the user whose component orthogonal to the span of those
    already selected is largest, then drop every remaining candidate whose
    normalized projection onto the newest direction exceeds alpha_sus. Stops
    at N users or when no candidate survives. Water-filling runs over the
    selected users' effective beam gains.
    """
    est = np.asarray(estimates, dtype=np.complex128)
    noise_ratio = float(noise_ratio)
    k, n = est.shape
    candidates = list(range(k))
    selected: list[int] = []
    basis: list[np.ndarray] = []
    while candidates and len(selected) < n:
        best, best_norm, best_res = None, -1.0, None
        for i in candidates:
            res = est[i].copy()
            for b in basis:
                res -= (b.conj() @ est[i]) * b
            norm = np.linalg.norm(res)
            if norm > best_norm:
                best, best_norm, best_res = i, norm, res
        if best_norm <= 1e-12:
            break
        selected.append(best)
        new_dir = best_res / best_norm
        basis.append(new_dir)
        kept = []
        for i in candidates:
            if i == best:
                continue
            coh = abs(est[i].conj() @ new_dir) / max(np.linalg.norm(est[i]), 1e-300)
            if coh <= alpha_sus:
                kept.append(i)
        candidates = kept
    f = np.zeros_like(est)
    dirs = _zf_directions(est[selected])
    gains = np.abs(np.einsum("sn,sn->s", est[selected].conj(), dirs)) ** 2
    powers = waterfill(gains, 1.0, noise_ratio)
    for row, i in enumerate(selected):
        f[i] = np.sqrt(powers[row]) * dirs[row]
    return selected, f


def zf_dpc_waterfilling(
    channels: np.ndarray, noise_ratio: float
) -> tuple[list[int], np.ndarray, float]:
    """Successive zero-forcing encoding bound with water-filled powers.

    Users are ordered greedily by largest residual norm after projecting out
    already-encoded channels; user i's effective gain is that squared
    residual norm. Returns (ordering, powers over the ordering, sum rate):
    rate = sum_i log2(1 + p_i * gain_i / noise_ratio). Serves as the
    spectral-efficiency upper reference for linear schemes.
    """
    h = np.asarray(channels, dtype=np.complex128)
    noise_ratio = float(noise_ratio)
    k, n = h.shape
    remaining = list(range(k))
    basis: list[np.ndarray] = []
    ordering: list[int] = []
    gains: list[float] = []
    for _ in range(min(k, n)):
        best, best_norm, best_res = None, -1.0, None
        for i in remaining:
            res = h[i].copy()
            for b in basis:
                res -= (b.conj() @ h[i]) * b
            norm = np.linalg.norm(res)
            if norm > best_norm:
                best, best_norm, best_res = i, norm, res
        if best_norm <= 1e-12:
            break
        ordering.append(best)
        gains.append(best_norm**2)
        basis.append(best_res / best_norm)
        remaining.remove(best)
    if not ordering:
        raise RankDeficient("no user has a nonzero channel")
    gains_arr = np.asarray(gains)
    powers = waterfill(gains_arr, 1.0, noise_ratio)
    rate = float(np.sum(np.log2(1.0 + powers * gains_arr / noise_ratio)))
    return ordering, powers, rate


def _zf_equal_power_rate(est: np.ndarray, subset: list[int], noise_ratio: float) -> float:
    dirs = _zf_directions(est[subset])
    gains = np.abs(np.einsum("sn,sn->s", est[subset].conj(), dirs)) ** 2
    p = 1.0 / len(subset)
    return float(np.sum(np.log2(1.0 + p * gains / noise_ratio)))


def rank_adaptive_zf(
    estimates: np.ndarray, noise_ratio: float
) -> tuple[list[int], np.ndarray]:
    """Greedy user adding under zero forcing with equal powers.

    Starts from the single user with the largest single-user rate, then keeps
    adding whichever user raises the equal-power ZF sum rate the most,
    stopping when no candidate improves it (or ZF runs out of rank).
    """
    est = np.asarray(estimates, dtype=np.complex128)
    noise_ratio = float(noise_ratio)
    k, n = est.shape
    norms = np.linalg.norm(est, axis=1)
    selected = [int(np.argmax(norms))]
    best_rate = float(np.log2(1.0 + norms[selected[0]] ** 2 / noise_ratio))
    while len(selected) < min(k, n):
        best_cand, best_cand_rate = None, best_rate
        for i in range(k):
            if i in selected:
                continue
            try:
                rate = _zf_equal_power_rate(est, selected + [i], noise_ratio)
            except RankDeficient:
                continue
            if rate > best_cand_rate:
                best_cand, best_cand_rate = i, rate
        if best_cand is None:
            break
        selected.append(best_cand)
        best_rate = best_cand_rate
    f = np.zeros_like(est)
    dirs = _zf_directions(est[selected])
    for row, i in enumerate(selected):
        f[i] = dirs[row] / np.sqrt(len(selected))
    return selected, f
