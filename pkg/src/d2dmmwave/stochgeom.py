"""Point-process samplers and link-distance densities.

The single-realisation samplers (``sample_*``) are thin wrappers over batched
versions that draw a whole block of independent trials at once; the simulator
uses the batched forms directly.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import i0e

from .params import CELLULAR, D2D, LOS, NLOS, NetworkParams


@dataclass(frozen=True)
class Window:
    """Disc of the given radius (m) centred on the typical receiver."""

    radius: float = 1000.0

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("window radius must be positive")

    @property
    def area(self) -> float:
        return math.pi * self.radius**2

    def check(self, params: NetworkParams) -> None:
        reach = max(params.los_ball_c.radius, params.los_ball_d.radius)
        if self.radius < 5 * reach:
            warnings.warn(f"window radius {self.radius} m is below 5x the largest LOS ball "
                          f"({reach} m); truncation bias may be visible", stacklevel=2)


def default_window(params: NetworkParams) -> Window:
    return Window(10 * max(params.los_ball_c.radius, params.los_ball_d.radius))


@dataclass
class ClusterRealization:
    center: np.ndarray
    member_offsets: np.ndarray
    active_tx_indices: np.ndarray
    mode_flags: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype="<U8"))

    @property
    def d2d_positions(self) -> np.ndarray:
        idx = self.active_tx_indices[self.mode_flags == D2D]
        return self.center + self.member_offsets[idx]


# --- batched samplers ------------------------------------------------------------

def ppp_batch(rng, density, radius, n_trials):
    """Homogeneous PPP on a disc for `n_trials` independent trials.

    Returns (counts, xy) with points of trial k in xy[offsets[k]:offsets[k+1]].
    """
    counts = rng.poisson(density * math.pi * radius**2, n_trials)
    total = int(counts.sum())
    rho = radius * np.sqrt(rng.random(total))
    phi = 2 * math.pi * rng.random(total)
    return counts, np.column_stack([rho * np.cos(phi), rho * np.sin(phi)])


def ppp_radii_batch(rng, density, radius, n_trials):
    """Distances to the origin of a disc PPP (angles are not needed)."""
    counts = rng.poisson(density * math.pi * radius**2, n_trials)
    return counts, radius * np.sqrt(rng.random(int(counts.sum())))


def truncated_poisson(rng, mean, cap, size):
    """Poisson(mean) conditioned on being < cap, by rejection."""
    k = rng.poisson(mean, size)
    if cap <= 0:
        raise ValueError("truncation cap must be positive")
    bad = k >= cap
    while bad.any():
        k[bad] = rng.poisson(mean, int(bad.sum()))
        bad = k >= cap
    return k


def los_marks(rng, dist, link_kind, params):
    p_los, radius = params.los_ball(link_kind)
    return (dist <= radius) & (rng.random(dist.shape) < p_los)


def uplink_interferers_batch(rng, params: NetworkParams, radius, n_trials, q_thinning=True):
    """Cellular-UE interferers around a BS at the origin.

    Homogeneous PPP(lambda_b), LOS marks from the cellular LOS ball, and (when
    `q_thinning`) retention with probability Q(t**alpha) so that a UE at t has a
    better BS elsewhere.  Returns (counts, dist, los).
    """
    counts, dist = ppp_radii_batch(rng, params.lambda_b, radius, n_trials)
    los = los_marks(rng, dist, CELLULAR, params)
    if q_thinning:
        alpha = np.where(los, params.alpha.los_c, params.alpha.nlos_c)
        keep = rng.random(dist.shape) < q_function(dist**alpha, params)
        owner = np.repeat(np.arange(n_trials), counts)
        counts = np.bincount(owner[keep], minlength=n_trials)
        dist, los = dist[keep], los[keep]
    return counts, dist, los


def cluster_tx_batch(rng, params: NetworkParams, radius, n_trials, p_d2d):
    """D2D-mode transmitters of a Thomas cluster field (centres in the disc).

    Active transmitters per cluster ~ Poisson(n_bar) conditioned on < N/2, each
    in D2D mode with probability `p_d2d`.  Returns (counts per trial, xy).
    """
    n_clusters, centers = ppp_batch(rng, params.lambda_c, radius, n_trials)
    active = truncated_poisson(rng, params.n_bar, params.n_total / 2, centers.shape[0])
    n_d2d = rng.binomial(active, p_d2d)
    xy = np.repeat(centers, n_d2d, axis=0)
    xy += rng.normal(0.0, params.sigma_d, xy.shape)
    cluster_owner = np.repeat(np.arange(n_trials), n_clusters)
    counts = np.bincount(cluster_owner, weights=n_d2d, minlength=n_trials).astype(int)
    return counts, xy


# --- single-realisation samplers -------------------------------------------------

def sample_ppp(density, window: Window, rng) -> np.ndarray:
    """Homogeneous PPP on the window disc, as an (n, 2) array."""
    if density < 0:
        raise ValueError("density must be >= 0")
    _, xy = ppp_batch(rng, density, window.radius, 1)
    return xy


def sample_thomas_cluster(center, sigma_d, count, rng) -> np.ndarray:
    """`count` i.i.d. points at `center` plus isotropic Gaussian offsets of std `sigma_d`."""
    if count < 0 or sigma_d <= 0:
        raise ValueError("need count >= 0 and sigma_d > 0")
    return np.asarray(center, float) + rng.normal(0.0, sigma_d, (int(count), 2))


def sample_uplink_interferers(params: NetworkParams, window: Window, rng):
    """One realisation of the thinned uplink interferer process.

    Returns (points (n, 2), los (n,) bool).
    """
    _, dist, los = uplink_interferers_batch(rng, params, window.radius, 1)
    phi = 2 * math.pi * rng.random(dist.size)
    return np.column_stack([dist * np.cos(phi), dist * np.sin(phi)]), los


def sample_cluster_field(params: NetworkParams, window: Window, p_d2d, rng):
    if not 0 <= p_d2d <= 1:
        raise ValueError("p_d2d must lie in [0, 1]")
    centers = sample_ppp(params.lambda_c, window, rng)
    out = []
    for c in centers:
        members = sample_thomas_cluster((0.0, 0.0), params.sigma_d, params.n_total, rng)
        k = int(truncated_poisson(rng, params.n_bar, params.n_total / 2, 1)[0])
        # first N/2 members are the potential transmitters
        active = rng.choice(params.n_total // 2, size=k, replace=False)
        flags = np.where(rng.random(k) < p_d2d, D2D, CELLULAR)
        out.append(ClusterRealization(c, members, np.sort(active), flags))
    return out


# --- densities -------------------------------------------------------------------

def rice_pdf(a, b, sigma_d_sq):
    """Rician density of a at offset b, evaluated with the exponentially scaled I0.

    a/s^2 exp(-(a^2+b^2)/2s^2) I0(ab/s^2) == a/s^2 exp(-(a-b)^2/2s^2) i0e(ab/s^2)
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = a / sigma_d_sq * np.exp(-((a - b) ** 2) / (2 * sigma_d_sq)) * i0e(a * b / sigma_d_sq)
    return float(out) if out.ndim == 0 else out


def rayleigh_pdf(w, sigma_d_sq):
    w = np.asarray(w, dtype=float)
    out = w / sigma_d_sq * np.exp(-(w**2) / (2 * sigma_d_sq))
    return float(out) if out.ndim == 0 else out


def psi(r, state: str, params: NetworkParams):
    """Integral of x * p_{state,c}(x) over [0, r] under the cellular LOS ball."""
    p_los, radius = params.los_ball_c
    r = np.asarray(r, dtype=float)
    inner = 0.5 * np.minimum(r, radius) ** 2
    if state == LOS:
        out = p_los * inner
    else:
        out = (1 - p_los) * inner + 0.5 * np.maximum(r**2 - radius**2, 0.0)
    return float(out) if out.ndim == 0 else out


def coverage_mass(state: str, params: NetworkParams) -> float:
    """Probability that at least one BS of this blockage state exists."""
    if state == NLOS:
        return 1.0
    p_los, radius = params.los_ball_c
    return -math.expm1(-math.pi * params.lambda_b * p_los * radius**2)


def nearest_bs_pdf(r, state: str, params: NetworkParams):
    """Density of the distance to the nearest BS of the given state, given one exists."""
    mass = coverage_mass(state, params)
    r = np.asarray(r, dtype=float)
    if mass == 0:
        out = np.zeros_like(r)
    else:
        p_los, radius = params.los_ball_c
        p_state = np.where(r <= radius, p_los if state == LOS else 1 - p_los,
                           0.0 if state == LOS else 1.0)
        out = (2 * math.pi * params.lambda_b * r * p_state
               * np.exp(-2 * math.pi * params.lambda_b * psi(r, state, params)) / mass)
    return float(out) if out.ndim == 0 else out


def q_function(y, params: NetworkParams):
    """Probability that some BS has path loss (r**alpha) below y."""
    y = np.asarray(y, dtype=float)
    a_l, a_n = params.alpha.los_c, params.alpha.nlos_c
    with np.errstate(over="ignore"):
        expo = psi(y ** (1 / a_l), LOS, params) + psi(y ** (1 / a_n), NLOS, params)
    out = -np.expm1(-2 * math.pi * params.lambda_b * np.asarray(expo))
    return float(out) if out.ndim == 0 else out
