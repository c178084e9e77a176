"""Monte Carlo estimates of the analysed quantities.

Trials are drawn in fixed-size blocks.  Block ``k`` of stream ``s`` gets its
own Philox generator seeded from ``SeedSequence(seed, spawn_key=(s, k))`` and
per-trial outcomes are concatenated in block order, so an estimate depends
only on ``(seed, trials, params)`` and never on how blocks are scheduled.
Threshold lists (SINR or Laplace argument) share the same realisations.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from .analysis import LaplaceKind
from .channel import aligned_gain, interferer_gain_pmf, serving_gain_pmf
from .params import CELLULAR, D2D, NetworkParams
from .stochgeom import Window, los_marks, q_function, truncated_poisson

BLOCK_SIZE = 1000

# stream ids keep the quantities' random numbers disjoint for one seed
_STREAMS = {"p_d2d": 0, "cellular": 1, "d2d": 2, "laplace": 3}


@dataclass(frozen=True)
class McSettings:
    trials: int = 10_000
    seed: int = 0
    window: Window = field(default_factory=Window)
    min_distance_epsilon: float = 0.1
    workers: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.min_distance_epsilon > 0:
            raise ValueError("min_distance_epsilon must be > 0")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_err: float
    trials: int
    degenerate: int = 0

    @classmethod
    def from_samples(cls, x: np.ndarray, degenerate: int = 0) -> "McEstimate":
        x = np.asarray(x, dtype=float)
        n = x.size
        se = float(np.std(x, ddof=1) / math.sqrt(n)) if n > 1 else float("nan")
        return cls(float(np.mean(x)), se, n, int(degenerate))


def _block_rng(seed: int, stream: int, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(stream, block))
    return np.random.Generator(np.random.Philox(ss))


def _run_blocks(job, mc: McSettings, stream: str):
    """Run ``job(rng, n) -> (samples (n, ...), degenerate count)`` over all blocks."""
    sizes = [min(BLOCK_SIZE, mc.trials - start) for start in range(0, mc.trials, BLOCK_SIZE)]
    tasks = [(mc.seed, _STREAMS[stream], k, n) for k, n in enumerate(sizes)]
    runner = partial(_run_one, job)
    if mc.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=mc.workers) as pool:
            results = list(pool.map(runner, tasks))
    else:
        results = [runner(t) for t in tasks]
    samples = np.concatenate([r[0] for r in results], axis=0)
    return samples, sum(r[1] for r in results)


def _run_one(job, task):
    seed, stream, block, n = task
    return job(_block_rng(seed, stream, block), n)


def _estimates(samples, degenerate):
    samples = samples.reshape(samples.shape[0], -1)
    return [McEstimate.from_samples(samples[:, j], degenerate) for j in range(samples.shape[1])]


# --- geometric building blocks -------------------------------------------------------------

def _owner(counts):
    return np.repeat(np.arange(counts.size), counts)


def _disc_radii(rng, density, radius, n_trials, eps):
    """Distances to the origin of a disc PPP, conditioned on being >= eps."""
    counts = rng.poisson(density * math.pi * radius**2, n_trials)
    r = radius * np.sqrt(rng.random(int(counts.sum())))
    bad = r < eps
    touched = bad.copy()
    while bad.any():
        r[bad] = radius * np.sqrt(rng.random(int(bad.sum())))
        bad = r < eps
    hit = np.zeros(n_trials, dtype=bool)
    hit[_owner(counts)[touched]] = True
    return counts, r, hit


def _nearest_path_losses(rng, params: NetworkParams, window: Window, n, eps):
    """Smallest LOS and NLOS cellular path loss (r**alpha) seen from n typical UEs.

    Returns (best_los, best_nlos, degenerate) with inf where no such BS exists.
    """
    counts, r, hit = _disc_radii(rng, params.lambda_b, window.radius, n, eps)
    los = los_marks(rng, r, CELLULAR, params)
    owner = _owner(counts)
    best = {}
    for mark, alpha in ((True, params.alpha.los_c), (False, params.alpha.nlos_c)):
        out = np.full(n, np.inf)
        sel = los == mark
        np.minimum.at(out, owner[sel], r[sel] ** alpha)
        best[mark] = out
    return best[True], best[False], hit


def _gaussian_offsets_outside(rng, center, sigma, eps):
    """Gaussian offsets y so that |center + y| >= eps (rejection); returns (y, resampled)."""
    y = rng.normal(0.0, sigma, center.shape)
    bad = np.hypot(*(center + y).T) < eps
    touched = bad.copy()
    while bad.any():
        y[bad] = rng.normal(0.0, sigma, (int(bad.sum()), 2))
        bad = np.hypot(*(center + y).T) < eps
        touched |= bad
    return y, touched


def _cluster_field_power(rng, params: NetworkParams, window: Window, n, p_d2d, pmf,
                         eps):
    """Aggregate received D2D interference (before Laplace/SINR use) at the origin.

    Cluster centres: PPP(lambda_c) on the window disc; active transmitters per
    cluster Poisson(n_bar) conditioned on < N/2, each in D2D mode w.p. p_d2d.
    """
    n_clusters = rng.poisson(params.lambda_c * window.area, n)
    total = int(n_clusters.sum())
    rho = window.radius * np.sqrt(rng.random(total))
    phi = 2 * math.pi * rng.random(total)
    centers = np.column_stack([rho * np.cos(phi), rho * np.sin(phi)])
    active = truncated_poisson(rng, params.n_bar, params.n_total / 2, total)
    n_d2d = rng.binomial(active, p_d2d)
    tx_centers = np.repeat(centers, n_d2d, axis=0)
    y, touched = _gaussian_offsets_outside(rng, tx_centers, params.sigma_d, eps)
    dist = np.hypot(*(tx_centers + y).T)
    trial = np.repeat(np.repeat(np.arange(n), n_clusters), n_d2d)
    power = _received(rng, dist, D2D, params.p_d, pmf, params)
    degenerate = np.zeros(n, dtype=bool)
    degenerate[trial[touched]] = True
    return np.bincount(trial, weights=power, minlength=n), degenerate


def _received(rng, dist, link_kind, tx_power, pmf, params: NetworkParams):
    """Faded received power from transmitters at the given distances."""
    los = los_marks(rng, dist, link_kind, params)
    alpha = np.where(los, params.exponent("L", link_kind), params.exponent("N", link_kind))
    gain = pmf.sample(rng, dist.shape)
    fading = rng.exponential(1.0, dist.shape)
    return tx_power * gain * fading * dist ** (-alpha)


def _uplink_field_power(rng, params: NetworkParams, window: Window, n, pmf, q_thinning, eps):
    """Aggregate cellular-UE interference at the origin (receiver gains from ``pmf``)."""
    counts, r, hit = _disc_radii(rng, params.lambda_b, window.radius, n, eps)
    los = los_marks(rng, r, CELLULAR, params)
    owner = _owner(counts)
    if q_thinning:
        alpha = np.where(los, params.alpha.los_c, params.alpha.nlos_c)
        keep = rng.random(r.shape) < q_function(r**alpha, params)
        r, los, owner = r[keep], los[keep], owner[keep]
    alpha = np.where(los, params.alpha.los_c, params.alpha.nlos_c)
    power = params.p_c * pmf.sample(rng, r.shape) * rng.exponential(1.0, r.shape) * r ** (-alpha)
    return np.bincount(owner, weights=power, minlength=n), hit


def _intra_cluster_power(rng, params: NetworkParams, centers, p_d2d, eps):
    """Interference from the other D2D transmitters of the receiver's own cluster."""
    n = centers.shape[0]
    mean = max(params.n_bar * p_d2d - 1.0, 0.0)
    cap = params.n_total / 2 - 1
    if mean == 0 or cap <= 0:
        return np.zeros(n), np.zeros(n, dtype=bool)
    k = truncated_poisson(rng, mean, cap, n)
    tx_centers = np.repeat(centers, k, axis=0)
    y, touched = _gaussian_offsets_outside(rng, tx_centers, params.sigma_d, eps)
    dist = np.hypot(*(tx_centers + y).T)
    trial = np.repeat(np.arange(n), k)
    power = _received(rng, dist, D2D, params.p_d, interferer_gain_pmf(D2D, params), params)
    degenerate = np.zeros(n, dtype=bool)
    degenerate[trial[touched]] = True
    return np.bincount(trial, weights=power, minlength=n), degenerate


def _serving_gains(rng, link_kind, params: NetworkParams, n):
    if params.sigma_be == 0:
        return np.full(n, aligned_gain(link_kind, params))
    return serving_gain_pmf(link_kind, params.sigma_be, params).sample(rng, n)


# --- mode selection ----------------------------------------------------------------------------

def _p_d2d_job(params: NetworkParams, mc: McSettings, variant, rng, n):
    eps = mc.min_distance_epsilon
    if params.t_d == 0:
        return np.zeros(n), 0
    centre = rng.normal(0.0, params.sigma_d, (n, 2))
    y, touched = _gaussian_offsets_outside(rng, centre, params.sigma_d, eps)
    r_d = np.hypot(*(centre + y).T)
    los_d = los_marks(rng, r_d, D2D, params)
    alpha_d = np.where(los_d, params.alpha.los_d, params.alpha.nlos_d)
    threshold = r_d**alpha_d / params.t_d
    best_los, best_nlos, hit = _nearest_path_losses(rng, params, mc.window, n, eps)
    if variant == "partitioned":
        out = (np.minimum(best_los, best_nlos) >= threshold).astype(float)
    elif variant == "printed":
        # each serving branch's ccdf term counted on its own, as in the printed sum
        out = (best_los >= threshold).astype(float) + (best_nlos >= threshold)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return out, int(np.count_nonzero(touched | hit))


def simulate_p_d2d(params: NetworkParams, mc: McSettings, variant: str = "partitioned"):
    """Frequency with which the biased D2D link beats the best cellular link.

    The ``printed`` variant scores LOS and NLOS candidates separately and adds
    them (values up to 2), mirroring the printed formula.
    """
    samples, deg = _run_blocks(partial(_p_d2d_job, params, mc, variant), mc, "p_d2d")
    return McEstimate.from_samples(samples, deg)


# --- outage ------------------------------------------------------------------------------------

def _cellular_job(params, mc, p_d2d, gammas, variant, rng, n):
    eps = mc.min_distance_epsilon
    best_los, best_nlos, hit = _nearest_path_losses(rng, params, mc.window, n, eps)
    gain = _serving_gains(rng, CELLULAR, params, n)
    interference, deg_u = _uplink_field_power(rng, params, mc.window, n,
                                              interferer_gain_pmf(CELLULAR, params), True, eps)
    deg = hit | deg_u
    if params.beta:
        dc, deg_c = _cluster_field_power(rng, params, mc.window, n, p_d2d,
                                         interferer_gain_pmf(CELLULAR, params), eps)
        interference = interference + dc
        deg |= deg_c
    denom = params.noise + interference
    scale = params.p_c * gain / denom
    g = np.asarray(gammas)[None, :]
    if variant == "partitioned":
        sinr = scale * rng.exponential(1.0, n) / np.minimum(best_los, best_nlos)
        out = (sinr[:, None] < g).astype(float)
    else:
        covered = np.zeros((n, g.size))
        for best in (best_los, best_nlos):
            sinr = scale * rng.exponential(1.0, n) / best
            covered += sinr[:, None] >= g
        out = 1.0 - covered
    return out, int(np.count_nonzero(deg))


def _d2d_job(params, mc, p_d2d, gammas, cd_q_factor, rng, n):
    eps = mc.min_distance_epsilon
    sigma = params.sigma_d
    centre = rng.normal(0.0, sigma, (n, 2))
    y0, deg = _gaussian_offsets_outside(rng, centre, sigma, eps)
    r0 = np.hypot(*(centre + y0).T)
    los0 = los_marks(rng, r0, D2D, params)
    alpha0 = np.where(los0, params.alpha.los_d, params.alpha.nlos_d)
    signal = params.p_d * _serving_gains(rng, D2D, params, n) * rng.exponential(1.0, n) \
        * r0 ** (-alpha0)
    intra, deg_i = _intra_cluster_power(rng, params, centre, p_d2d, eps)
    inter, deg_o = _cluster_field_power(rng, params, mc.window, n, p_d2d,
                                        interferer_gain_pmf(D2D, params), eps)
    interference = intra + inter
    deg = deg | deg_i | deg_o
    if params.beta:
        cd, deg_c = _uplink_field_power(rng, params, mc.window, n,
                                        interferer_gain_pmf(D2D, params), cd_q_factor, eps)
        interference = interference + cd
        deg |= deg_c
    sinr = signal / (params.noise + interference)
    return (sinr[:, None] < np.asarray(gammas)[None, :]).astype(float), int(np.count_nonzero(deg))


def simulate_outage_curve(mode: str, gammas, params: NetworkParams, p_d2d_value: float,
                          mc: McSettings, *, variant: str = "partitioned",
                          cd_q_factor: bool = False) -> list[McEstimate]:
    """Outage frequency at every threshold in ``gammas`` from one set of realisations."""
    gammas = [float(g) for g in np.atleast_1d(gammas)]
    if mode in ("cellular", "c"):
        job = partial(_cellular_job, params, mc, p_d2d_value, gammas, variant)
        stream = "cellular"
    elif mode in ("d2d", "d"):
        job = partial(_d2d_job, params, mc, p_d2d_value, gammas, cd_q_factor)
        stream = "d2d"
    else:
        raise ValueError("mode must be 'cellular' or 'd2d'")
    return _estimates(*_run_blocks(job, mc, stream))


def simulate_outage(mode: str, gamma: float, params: NetworkParams, p_d2d_value: float,
                    mc: McSettings, **kw) -> McEstimate:
    return simulate_outage_curve(mode, [gamma], params, p_d2d_value, mc, **kw)[0]


# --- Laplace transforms ------------------------------------------------------------------------

def _laplace_job(kind, params, mc, p_d2d, vs, w0, cd_q_factor, rng, n):
    eps = mc.min_distance_epsilon
    if kind is LaplaceKind.CC:
        i, deg = _uplink_field_power(rng, params, mc.window, n,
                                     interferer_gain_pmf(CELLULAR, params), True, eps)
    elif kind is LaplaceKind.CD:
        i, deg = _uplink_field_power(rng, params, mc.window, n,
                                     interferer_gain_pmf(D2D, params), cd_q_factor, eps)
    elif kind is LaplaceKind.DC:
        i, deg = _cluster_field_power(rng, params, mc.window, n, p_d2d,
                                      interferer_gain_pmf(CELLULAR, params), eps)
    elif kind is LaplaceKind.DD_INTER:
        i, deg = _cluster_field_power(rng, params, mc.window, n, p_d2d,
                                      interferer_gain_pmf(D2D, params), eps)
    else:
        centre = np.zeros((n, 2))
        centre[:, 0] = w0
        i, deg = _intra_cluster_power(rng, params, centre, p_d2d, eps)
    return np.exp(-np.asarray(vs)[None, :] * i[:, None]), int(np.count_nonzero(deg))


def simulate_laplace_curve(kind, vs, params: NetworkParams, p_d2d_value: float, mc: McSettings,
                           w0=None, *, cd_q_factor: bool = False) -> list[McEstimate]:
    """Empirical E[exp(-v I)] of one interference component at each v in ``vs``."""
    kind = LaplaceKind.parse(kind)
    if kind is LaplaceKind.DD_INTRA and w0 is None:
        raise ValueError("DD_INTRA needs the conditioning distance w0")
    vs = [float(v) for v in np.atleast_1d(vs)]
    job = partial(_laplace_job, kind, params, mc, p_d2d_value, vs, w0, cd_q_factor)
    return _estimates(*_run_blocks(job, mc, "laplace"))


def simulate_laplace(kind, v, params: NetworkParams, p_d2d_value: float, mc: McSettings,
                     w0=None, **kw) -> McEstimate:
    return simulate_laplace_curve(kind, [v], params, p_d2d_value, mc, w0, **kw)[0]


# --- area spectral efficiency ----------------------------------------------------------------

def simulate_ase(gamma: float, params: NetworkParams, sharing: str, delta, p_d2d_value: float,
                 mc: McSettings) -> McEstimate:
    """ASE from simulated outages; the standard error combines both independent runs."""
    if sharing == "overlay":
        params = params.replace(beta=0)
        w_cell, w_d2d = 1 - delta, delta
    elif sharing == "underlay":
        w_cell, w_d2d = 1.0, 1.0
    else:
        raise ValueError("sharing must be 'underlay' or 'overlay'")
    bits = math.log2(1 + gamma)
    oc = simulate_outage("cellular", gamma, params, p_d2d_value, mc)
    od = simulate_outage("d2d", gamma, params, p_d2d_value, mc)
    a = w_cell * params.lambda_b * bits
    b = w_d2d * params.n_bar * p_d2d_value * params.lambda_c * bits
    mean = a * (1 - oc.mean) + b * (1 - od.mean)
    se = math.hypot(a * oc.std_err, b * od.std_err)
    return McEstimate(mean, se, mc.trials, oc.degenerate + od.degenerate)
