"""Rate evaluation and Monte Carlo averaging.

True-channel SINRs measure what users actually receive from the designed
precoders; the estimate-based lower-bound rates are what a transmitter can
promise from its imperfect knowledge. Both live here, together with the
seeded single-cell Monte Carlo engine, proportional-fairness weighting, and
empirical CDFs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import baselines, channel, solver
from .errors import ConfigInvalid, DimensionMismatch


@dataclass
class RateReport:
    """Per-user SINRs (linear) and rates (bits/s/Hz) plus their aggregates."""

    sinr: np.ndarray  # (L, K)
    rate: np.ndarray  # (L, K)
    sum_rate: float
    weighted_sum_rate: float


def true_sinr(
    true_h: np.ndarray, precoders: np.ndarray, noise_ratio: float, weights=None
) -> RateReport:
    """Ground-truth SINRs of every user under all cells' actual precoders.

    true_h has shape (L, L, K, N) indexed [bs, user_cell, user]; precoders
    has shape (L, K, N) with unit total power per cell. noise_ratio is the
    receiver noise variance over the per-cell transmit power. The denominator
    collects same-cell interference, other-cell interference, and noise.
    """
    h = np.asarray(true_h, dtype=np.complex128)
    f = np.asarray(precoders, dtype=np.complex128)
    if h.ndim != 4 or h.shape[0] != h.shape[1]:
        raise DimensionMismatch(f"true_h must be (L, L, K, N), got {h.shape}")
    n_cells, _, n_users, _ = h.shape
    if f.shape != (n_cells, n_users, h.shape[3]):
        raise DimensionMismatch(f"precoders must be (L, K, N), got {f.shape}")
    # inner[j, l, k, i] = h(BS j -> user (l,k))^H f_{j,i}
    inner = np.einsum("jlkn,jin->jlki", h.conj(), f)
    power = np.abs(inner) ** 2
    sinr = np.empty((n_cells, n_users))
    for l in range(n_cells):
        for k in range(n_users):
            desired = power[l, l, k, k]
            iui = power[l, l, k].sum() - desired
            ici = power[:, l, k].sum() - power[l, l, k].sum()
            sinr[l, k] = desired / (iui + ici + noise_ratio)
    rate = np.log2(1.0 + sinr)
    w = np.ones_like(rate) if weights is None else np.asarray(weights, dtype=float)
    return RateReport(sinr, rate, float(rate.sum()), float((w * rate).sum()))


def gmi_rate_lb(
    estimates: np.ndarray, error_covs, precoders: np.ndarray, noise_ratio
) -> np.ndarray:
    """Single-cell per-user rate lower bounds from imperfect knowledge.

    rate_k = log2(1 + |est_k^H f_k|^2 / (sum_{i != k} |est_k^H f_i|^2
             + sum_i f_i^H Phi_k f_i + noise_ratio_k)).
    """
    est = np.asarray(estimates, dtype=np.complex128)
    f = np.asarray(precoders, dtype=np.complex128)
    k = est.shape[0]
    nr = np.broadcast_to(np.asarray(noise_ratio, dtype=float), (k,))
    inner = est.conj() @ f.T  # inner[k, i]
    power = np.abs(inner) ** 2
    if error_covs is None:
        leak = np.zeros(k)
    else:
        cov = np.asarray(error_covs, dtype=np.complex128)
        leak = np.real(np.einsum("in,knm,im->k", f.conj(), cov, f))
    desired = np.diagonal(power)
    interference = power.sum(axis=1) - desired
    return np.log2(1.0 + desired / (interference + leak + nr))


def pf_weights(long_term_rates, smoothing: float = 0.1, floor: float = 1e-3) -> np.ndarray:
    """Proportional-fairness weights: inverse smoothed rates, mean-normalized.

    `smoothing` is only recorded for callers updating the averages as
    T <- (1 - smoothing) T + smoothing * r; the weights themselves are
    1 / max(T, floor) scaled to mean one.
    """
    del smoothing
    t = np.maximum(np.asarray(long_term_rates, dtype=float), floor)
    w = 1.0 / t
    return w / w.mean()


def update_pf_averages(averages, served_rates, smoothing: float = 0.1) -> np.ndarray:
    """Exponentially smoothed served-rate tracker for PF weighting."""
    t = np.asarray(averages, dtype=float)
    r = np.asarray(served_rates, dtype=float)
    return (1.0 - smoothing) * t + smoothing * r


@dataclass
class CdfCurve:
    """Empirical distribution: sorted sample values with quantiles (i+1)/n."""

    values: np.ndarray
    quantiles: np.ndarray


def rate_cdf(samples) -> CdfCurve:
    s = np.sort(np.asarray(samples, dtype=float))
    if s.size == 0:
        raise ValueError("need at least one sample")
    q = np.arange(1, s.size + 1) / s.size
    return CdfCurve(s, q)


# ---------------------------------------------------------------------------
# Single-cell Monte Carlo engine
# ---------------------------------------------------------------------------


def _link_correlations(config) -> np.ndarray:
    """(K, N, N) one-ring correlations for the single-cell layout.

    Users sit at evenly spaced azimuths 2*pi*k/K with the configured angular
    spread and unit gain; antennas form a half-wavelength circular array.
    """
    geom = channel.uniform_circular_array(config.n_antennas, wavelength=1.0)
    corr = np.empty((config.n_users, config.n_antennas, config.n_antennas), dtype=np.complex128)
    for k in range(config.n_users):
        theta = 2.0 * np.pi * (k + 1) / config.n_users
        params = channel.OneRingParams(theta, config.angular_spread, 1.0)
        corr[k] = channel.one_ring_correlation(geom, params)
    return corr


def _draw_link_csit(config, corr, rng):
    """(true (K,N), est (K,N), cov (K,N,N) or None) for one fading block."""
    k, n = config.n_users, config.n_antennas
    true = np.empty((k, n), dtype=np.complex128)
    est = np.empty((k, n), dtype=np.complex128)
    cov = np.zeros((k, n, n), dtype=np.complex128)
    model = config.csit_model
    for u in range(k):
        if model == "perfect":
            h = channel.sample_channel(corr[u], rng)
            true[u], est[u] = h, h
        elif model == "additive":
            h = channel.sample_channel(corr[u], rng)
            phi = config.csit_error_var * np.eye(n)
            est[u], cov[u] = channel.additive_error_csit(h, phi, rng)
            true[u] = h
        elif model == "tdd":
            # single-cell uplink training: no co-pilot cells, quality set by
            # the configured noise-to-pilot-energy ratio
            h, hhat, phi = channel.mmse_csit_tdd(
                corr[u], [], config.uplink_noise_over_pilot(), 1.0, 1.0, rng
            )
            true[u], est[u], cov[u] = h, hhat, phi
        elif model == "fdd":
            h, hhat, phi = channel.fdd_quantized_csit(corr[u], config.fdd_kappa, rng)
            true[u], est[u], cov[u] = h, hhat, phi
        else:
            raise ConfigInvalid(f"csit_model: unknown model {model!r}")
    return true, est, (None if model == "perfect" else cov)


def _known_cov(config, cov, n):
    """Error covariance as the transmitter knows it, per the knowledge setting."""
    if cov is None or config.cov_knowledge == "none":
        return None, None
    if config.cov_knowledge == "full":
        return cov, None
    if config.cov_knowledge == "scalar":
        alphas = np.real(np.trace(cov, axis1=1, axis2=2)) / n
        scal = alphas[:, None, None] * np.eye(n)[None, :, :]
        return scal, alphas
    raise ConfigInvalid(f"cov_knowledge: unknown setting {config.cov_knowledge!r}")


def design_precoders(
    algorithm: str, est: np.ndarray, known_cov, noise_ratio, config, alphas=None,
    weights=None,
):
    """Run one algorithm on one block's knowledge; returns (precoder, extras).

    The precoder is a (K, N) row stack with unit total power (zero rows for
    unscheduled users). `extras` carries solver diagnostics when available.
    noise_ratio may be per-user; the joint-design algorithms use it as given,
    while the one-shot baselines take its mean (they admit one noise level).
    """
    nr_scalar = float(np.mean(noise_ratio))
    if algorithm == "gpip":
        pairs = solver.build_effective_pairs(est, known_cov, noise_ratio)
        res = solver.gpip_iterate(
            pairs, weights=weights, tol=config.tol, max_iter=config.max_iter,
            select_threshold=config.sel_threshold,
        )
        return res.precoder, res
    if algorithm == "gpip-covfree":
        if alphas is None:
            alphas = np.zeros(est.shape[0])
        res = solver.gpip_covfree(
            est, alphas, noise_ratio, weights=weights, tol=config.tol,
            max_iter=config.max_iter, select_threshold=config.sel_threshold,
        )
        return res.precoder, res
    if algorithm == "mrt":
        return baselines.mrt(est), None
    if algorithm == "zf":
        return baselines.zf(est), None
    if algorithm == "rzf":
        return baselines.rzf(est, nr_scalar), None
    if algorithm == "rrzf":
        return baselines.rrzf(est, known_cov, nr_scalar), None
    if algorithm == "sus-zf":
        _, f = baselines.sus_zf(est, nr_scalar, config.sus_alpha)
        return f, None
    if algorithm == "rank-zf":
        _, f = baselines.rank_adaptive_zf(est, nr_scalar)
        return f, None
    raise ConfigInvalid(f"algorithms: unknown algorithm {algorithm!r}")


def link_trial(
    config, snr_db: float, algorithms, rng, corr=None, weights=None, metric: str = "true"
) -> dict:
    """One fading block: draw channels once, run every algorithm on them.

    Returns {algorithm: (per-user rates, extras)}; the shared draw makes
    cross-algorithm comparisons paired. `metric` selects what the rates
    measure: "true" evaluates the designed precoders on the actual channels
    (what users receive), "estimated" reports the transmitter-side lower
    bounds computed from its own imperfect knowledge.
    """
    if corr is None:
        corr = _link_correlations(config)
    noise_ratio = 10.0 ** (-snr_db / 10.0)
    true, est, cov = _draw_link_csit(config, corr, rng)
    known_cov, alphas = _known_cov(config, cov, config.n_antennas)
    out = {}
    for alg in algorithms:
        if alg == "zf-dpc":
            _, _, rate = baselines.zf_dpc_waterfilling(est, noise_ratio)
            out[alg] = (np.array([rate]), None)
            continue
        f, extras = design_precoders(alg, est, known_cov, noise_ratio, config, alphas, weights)
        if metric == "estimated":
            rates = gmi_rate_lb(est, known_cov, f, noise_ratio)
        else:
            rates = true_sinr(true[None, None], f[None], noise_ratio).rate[0]
        out[alg] = (rates, extras)
    return out


def ergodic_sum_se(
    config, algorithm: str, snr_db: float | None = None,
    n_trials: int | None = None, seed: int | None = None, metric: str = "true",
) -> tuple[float, float]:
    """Monte Carlo mean sum spectral efficiency with a 95% half-width.

    Deterministic per (config, seed): trial t uses the substream
    (seed, link-domain, t), so results do not depend on execution order.
    The default metric averages true-channel rates; metric="estimated"
    averages the transmitter's own rate bounds instead.
    """
    snr = config.snr_db[0] if snr_db is None else snr_db
    trials = config.n_trials if n_trials is None else n_trials
    master = config.seed if seed is None else seed
    if trials < 1:
        raise ConfigInvalid("n_trials: must be >= 1")
    corr = _link_correlations(config)
    sums = np.empty(trials)
    for t in range(trials):
        rng = trial_rng(master, 0, t)
        rates, _ = link_trial(config, snr, [algorithm], rng, corr, metric=metric)[algorithm]
        sums[t] = rates.sum()
    return monte_carlo_mean(sums)


def monte_carlo_mean(samples: np.ndarray) -> tuple[float, float]:
    """(mean, 1.96 * stderr) normal-approximation confidence half-width."""
    s = np.asarray(samples, dtype=float)
    if s.size <= 1:
        return float(s.mean()), float("inf") if s.size else float("nan")
    half = 1.96 * s.std(ddof=1) / np.sqrt(s.size)
    return float(s.mean()), float(half)


def trial_rng(master_seed: int, domain: int, index: int) -> np.random.Generator:
    """Independent, reproducible substream for one Monte Carlo unit."""
    return np.random.default_rng(
        np.random.SeedSequence(entropy=master_seed, spawn_key=(domain, index))
    )
