"""Topology, spatial correlation, fading realizations, and imperfect CSIT.

Channel vectors follow a one-ring scattering geometry: the correlation
between two antennas is the average phase difference of plane waves arriving
from a uniform angular sector around the user's azimuth. All generation is
deterministic per (inputs, seed).

Conventions: a channel or precoder "vector" is a length-N complex array;
per-user collections are arrays of shape (K, N) with row k belonging to
user k. Multi-cell true channels live in an (L, L, K, N) array indexed as
[serving_or_interfering_bs, user_cell, user, antenna].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BelowMinimumDistance, DimensionMismatch
from .numerics import hermitian_sqrt, hermitize, solve_hermitian

QUAD_NODES = 512
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(QUAD_NODES)

PATHLOSS_INTERCEPT_DB = 135.1047
PATHLOSS_SLOPE_DB = 35.0413
MIN_DISTANCE_KM = 0.04


def as_rng(seed) -> np.random.Generator:
    """Accept an int seed, a SeedSequence, or a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class ArrayGeometry:
    """Antenna positions (meters) and carrier wavelength for one site."""

    positions: np.ndarray  # (N, 2)
    wavelength: float

    @property
    def n_antennas(self) -> int:
        return self.positions.shape[0]


def uniform_circular_array(n_antennas: int, wavelength: float = 1.0) -> ArrayGeometry:
    """Circle of isotropic antennas with half-wavelength adjacent spacing.

    The radius is wavelength * 0.5 / sqrt((1 - cos(2*pi/N))^2 + sin(2*pi/N)^2),
    which makes neighboring elements exactly wavelength/2 apart.
    """
    if n_antennas < 1:
        raise ValueError("n_antennas must be >= 1")
    if n_antennas == 1:
        return ArrayGeometry(np.zeros((1, 2)), wavelength)
    step = 2 * np.pi / n_antennas
    scale = 0.5 / np.hypot(1.0 - np.cos(step), np.sin(step))
    angles = step * np.arange(n_antennas)
    pos = wavelength * scale * np.column_stack([np.cos(angles), np.sin(angles)])
    return ArrayGeometry(pos, wavelength)


@dataclass(frozen=True)
class OneRingParams:
    """Azimuth, angular spread (radians), and large-scale linear power gain."""

    azimuth: float
    angular_spread: float
    gain: float = 1.0

    def __post_init__(self):
        if self.angular_spread <= 0:
            raise ValueError("angular_spread must be positive")
        if self.gain <= 0:
            raise ValueError("gain must be positive")


def one_ring_correlation(geom: ArrayGeometry, params: OneRingParams) -> np.ndarray:
    """Antenna correlation matrix of a scatterer ring around the user.

    Entry (n, m) is the gain times the average over arrival angles
    alpha in [azimuth - spread, azimuth + spread] of
    exp(-j * 2*pi/wavelength * [cos a, sin a] . (r_n - r_m)).

    Evaluated with a fixed 512-node Gauss-Legendre rule, which keeps the
    result PSD by construction (positive quadrature weights turn the matrix
    into a convex combination of steering outer products) and is accurate to
    ~1e-9 for N <= 64 at half-wavelength spacing.
    """
    alphas = params.azimuth + params.angular_spread * _GL_NODES
    weights = 0.5 * _GL_WEIGHTS  # normalizes the sector average to 1
    k_wave = 2 * np.pi / geom.wavelength
    phase = -k_wave * (
        np.cos(alphas)[:, None] * geom.positions[None, :, 0]
        + np.sin(alphas)[:, None] * geom.positions[None, :, 1]
    )
    steer = np.exp(1j * phase)  # (nodes, N)
    r = params.gain * np.einsum("m,mn,mk->nk", weights, steer, steer.conj())
    return hermitize(r)


def sample_channel(corr: np.ndarray, rng) -> np.ndarray:
    """Draw h = corr^(1/2) g with g standard circularly-symmetric Gaussian."""
    rng = as_rng(rng)
    n = corr.shape[0]
    root = hermitian_sqrt(corr)
    g = standard_complex_gaussian(rng, n)
    return root @ g


def standard_complex_gaussian(rng: np.random.Generator, *shape: int) -> np.ndarray:
    """Unit-variance circularly-symmetric complex Gaussian samples."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def okumura_hata_pathloss(distance_km: float) -> float:
    """Urban macro path loss in dB; valid from 40 m outward."""
    if distance_km < MIN_DISTANCE_KM:
        raise BelowMinimumDistance(f"distance {distance_km} km < {MIN_DISTANCE_KM} km")
    return PATHLOSS_INTERCEPT_DB + PATHLOSS_SLOPE_DB * np.log10(distance_km)


def gain_from_pathloss(loss_db: float, shadow_db: float = 0.0) -> float:
    """Linear power gain from a path loss and an optional shadowing term (dB)."""
    return 10.0 ** ((-loss_db + shadow_db) / 10.0)


# ---------------------------------------------------------------------------
# Imperfect CSIT models
# ---------------------------------------------------------------------------


def mmse_csit_tdd(
    r_serving: np.ndarray,
    r_interferers: list[np.ndarray],
    noise_var: float,
    pilot_len: float,
    pilot_power: float,
    rng,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Uplink-pilot MMSE estimation with co-pilot contamination.

    Returns (true_h, estimate, error_cov). The error covariance is

        phi = R - R (R + sum_j R_j + noise_var/(pilot_len*pilot_power) I)^-1 R

    with the sum over the interfering co-pilot covariances. The estimate and
    the error are drawn jointly and independently from CN(0, R - phi) and
    CN(0, phi); the true channel is their sum, which makes the pair exactly
    consistent with MMSE estimation (the estimate never carries more
    uncertainty than the prior).
    """
    rng = as_rng(rng)
    if pilot_len * pilot_power <= 0:
        raise ValueError("pilot_len * pilot_power must be positive")
    r = hermitize(np.asarray(r_serving, dtype=np.complex128))
    n = r.shape[0]
    total = r.copy()
    for ri in r_interferers:
        if ri.shape != r.shape:
            raise DimensionMismatch("interferer covariance shape mismatch")
        total = total + np.asarray(ri, dtype=np.complex128)
    total = hermitize(total) + (noise_var / (pilot_len * pilot_power)) * np.eye(n)
    phi = hermitize(r - r @ solve_hermitian(total, r))
    est_cov = hermitize(r - phi)
    est = hermitian_sqrt(est_cov) @ standard_complex_gaussian(rng, n)
    err = hermitian_sqrt(phi) @ standard_complex_gaussian(rng, n)
    return est + err, est, phi


def covfree_error_scale(beta_serving: float, beta_all: np.ndarray, noise_over_pilot: float) -> float:
    """Scalar error variance used when covariance matrices are unknown.

    alpha = beta * (1 - beta / (sum_j beta_j + noise_over_pilot)), the
    white-covariance analogue of the MMSE error power.
    """
    return beta_serving * (1.0 - beta_serving / (float(np.sum(beta_all)) + noise_over_pilot))


def fdd_quantized_csit(
    corr: np.ndarray, kappa: float, rng
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Quantized-feedback CSIT of tunable quality kappa in [0, 1].

    Returns (true_h, estimate, error_cov). With S the PSD square root of the
    correlation matrix, the true channel is S g and the estimate is
    S (sqrt(1 - kappa^2) g + kappa v) for independent standard Gaussians
    g, v: kappa = 0 is perfect, kappa = 1 is useless. The reported error
    covariance is the kappa^2-scaled correlation matrix (the colored variance
    of the v term), which is the identification the rest of the pipeline
    uses for robustness terms.
    """
    if not 0.0 <= kappa <= 1.0:
        raise ValueError("kappa must lie in [0, 1]")
    rng = as_rng(rng)
    n = corr.shape[0]
    root = hermitian_sqrt(corr)
    g = standard_complex_gaussian(rng, n)
    v = standard_complex_gaussian(rng, n)
    true_h = root @ g
    est = root @ (np.sqrt(1.0 - kappa**2) * g + kappa * v)
    phi = (kappa**2) * hermitize(np.asarray(corr, dtype=np.complex128))
    return true_h, est, phi


def additive_error_csit(
    true_h: np.ndarray, error_cov: np.ndarray, rng
) -> tuple[np.ndarray, np.ndarray]:
    """Estimate = true channel plus CN(0, error_cov) noise; returns (estimate, error_cov)."""
    rng = as_rng(rng)
    true_h = np.asarray(true_h, dtype=np.complex128)
    err = hermitian_sqrt(error_cov) @ standard_complex_gaussian(rng, true_h.shape[0])
    return true_h + err, np.asarray(error_cov, dtype=np.complex128)


# ---------------------------------------------------------------------------
# Multi-cell topology
# ---------------------------------------------------------------------------

_HEX_DIRECTIONS = [(1, -1, 0), (0, -1, 1), (-1, 0, 1), (-1, 1, 0), (0, 1, -1), (1, 0, -1)]


def hex_cell_centers(n_cells: int, inter_site: float) -> np.ndarray:
    """Centers of a hexagonal grid, spiraling outward from the origin."""
    if n_cells < 1:
        raise ValueError("n_cells must be >= 1")
    coords = [(0, 0, 0)]
    ring = 1
    while len(coords) < n_cells:
        cube = tuple(ring * c for c in _HEX_DIRECTIONS[4])
        for side in range(6):
            for _ in range(ring):
                coords.append(cube)
                d = _HEX_DIRECTIONS[side]
                cube = (cube[0] + d[0], cube[1] + d[1], cube[2] + d[2])
        ring += 1
    coords = coords[:n_cells]
    out = np.empty((n_cells, 2))
    for i, (q, r, _s) in enumerate(coords):
        out[i] = (inter_site * (q + r / 2.0), inter_site * np.sqrt(3.0) / 2.0 * r)
    return out


def _in_hexagon(points: np.ndarray, half_width: float) -> np.ndarray:
    """Membership test for the Voronoi hexagon of a triangular lattice site."""
    angles = np.arange(6) * np.pi / 3.0
    dirs = np.column_stack([np.cos(angles), np.sin(angles)])
    proj = points @ dirs.T
    return np.all(proj <= half_width + 1e-12, axis=1)


@dataclass(frozen=True)
class Topology:
    """Cell sites and user drop positions (meters)."""

    cell_xy: np.ndarray  # (L, 2)
    user_xy: np.ndarray  # (L, K, 2)
    inter_site: float
    min_distance: float

    @property
    def n_cells(self) -> int:
        return self.cell_xy.shape[0]

    @property
    def n_users(self) -> int:
        return self.user_xy.shape[1]

    def distances_km(self) -> np.ndarray:
        """(L_bs, L_cell, K) distances from every BS to every user, in km."""
        diff = self.user_xy[None, :, :, :] - self.cell_xy[:, None, None, :]
        return np.linalg.norm(diff, axis=-1) / 1000.0


def drop_users(
    n_cells: int, n_users: int, inter_site: float, min_distance: float, rng
) -> Topology:
    """Uniform user positions inside each cell's hexagon, seeded.

    Users are rejected until they are at least min_distance from every BS.
    """
    rng = as_rng(rng)
    centers = hex_cell_centers(n_cells, inter_site)
    half_width = inter_site / 2.0
    circum = inter_site / np.sqrt(3.0)
    users = np.empty((n_cells, n_users, 2))
    for l in range(n_cells):
        placed = 0
        while placed < n_users:
            cand = rng.uniform(-circum, circum, size=(4 * n_users, 2))
            ok = _in_hexagon(cand, half_width)
            cand = cand[ok] + centers[l]
            if cand.size == 0:
                continue
            dist = np.linalg.norm(cand[:, None, :] - centers[None, :, :], axis=-1)
            cand = cand[np.all(dist >= min_distance, axis=1)]
            take = min(n_users - placed, cand.shape[0])
            users[l, placed : placed + take] = cand[:take]
            placed += take
    return Topology(centers, users, inter_site, min_distance)


# ---------------------------------------------------------------------------
# Channel-set container
# ---------------------------------------------------------------------------


@dataclass
class ChannelSet:
    """All links of one coherence block.

    true_h[j, l, k] is the channel from BS j to user k of cell l. Estimates
    and error covariances are populated only where `known[j, l, k]` is True
    (a BS can only estimate links it received pilots on); elsewhere they are
    zero-filled placeholders.
    """

    true_h: np.ndarray  # (L, L, K, N) complex
    est_h: np.ndarray  # (L, L, K, N) complex
    err_cov: np.ndarray  # (L, L, K, N, N) complex
    known: np.ndarray = field(default=None)  # (L, L, K) bool

    def __post_init__(self):
        if self.known is None:
            self.known = np.ones(self.true_h.shape[:3], dtype=bool)

    @property
    def n_cells(self) -> int:
        return self.true_h.shape[0]

    @property
    def n_users(self) -> int:
        return self.true_h.shape[2]

    @property
    def n_antennas(self) -> int:
        return self.true_h.shape[3]

    def serving_estimates(self, cell: int) -> np.ndarray:
        """(K, N) estimates BS `cell` holds for its own users."""
        return self.est_h[cell, cell]

    def serving_err_cov(self, cell: int) -> np.ndarray:
        return self.err_cov[cell, cell]


def dump_channels_csv(channels: ChannelSet, path) -> None:
    """Write every link as one CSV row of interleaved re/im antenna entries."""
    n = channels.n_antennas
    header = ["bs", "cell", "user", "kind"] + [
        f"{p}{i}" for i in range(n) for p in ("re", "im")
    ]
    lines = [",".join(header)]
    for kind, arr in (("true", channels.true_h), ("estimate", channels.est_h)):
        for j in range(channels.n_cells):
            for l in range(channels.n_cells):
                for k in range(channels.n_users):
                    if kind == "estimate" and not channels.known[j, l, k]:
                        continue
                    vec = arr[j, l, k]
                    vals = []
                    for i in range(n):
                        vals.extend((repr(vec[i].real), repr(vec[i].imag)))
                    lines.append(",".join([str(j), str(l), str(k), kind] + vals))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
