"""Quadrature evaluation of the closed-form performance expressions.

Everything here is deterministic given ``(params, settings)``.  The most
expensive object is the Laplace functional of a clustered (Thomas) interferer
field, a triple integral once it sits inside an outage integral; all integrands
are vectorised over the Laplace argument so one adaptive pass serves a whole
batch of ``v`` values.

Variants
--------
Mode selection and the cellular outage come in two flavours:

``partitioned`` (default)
    The cellular link goes to the base station with the smallest path loss,
    so the LOS and NLOS serving branches are mutually exclusive and their
    weights sum to one.
``printed``
    Sums the full per-branch terms; kept for comparison.  It overshoots (mode
    selection tends to 2 under a huge bias, cellular coverage to about 1.27 at
    vanishing threshold), so these results are clamped and flagged.

Clustered-field transforms (DC, DD_INTER) have three variants: ``exact``
(per-interferer gain and blockage marks inside the cluster PGFL), ``printed``
(gain/blockage sums outside the cluster term) and ``approx`` (first-order
expansion, i.e. a PPP of density lambda_c * n_bar * p_d2d).
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .channel import GainPmf, aligned_gain, interferer_gain_pmf, serving_gain_pmf
from .params import CELLULAR, D2D, LOS, NLOS, NetworkParams
from .quadrature import QuadratureSettings, integrate
from .stochgeom import psi, q_function, rayleigh_pdf, rice_pdf

TWO_PI = 2.0 * math.pi
# Gaussian offsets beyond this many sigma carry < e^-50 of the mass
_SPREAD = 10.0
# decay (in e-folds of the integrand) covered by the log-spaced tail before truncation
_TAIL_EFOLDS = 40.0
# batch x nodes per call at levels whose integrand itself integrates
_NESTED_CHUNK = 20_000
_TINY = np.finfo(float).tiny

CELLULAR_VARIANTS = ("partitioned", "printed")
CLUSTER_VARIANTS = ("exact", "printed", "approx")


class LaplaceKind(enum.Enum):
    CC = "cc"              # cellular interferers at the BS
    DC = "dc"              # D2D interferers at the BS
    CD = "cd"              # cellular interferers at a D2D receiver
    DD_INTRA = "dd_intra"  # same-cluster D2D interferers at a D2D receiver
    DD_INTER = "dd_inter"  # other clusters' D2D interferers at a D2D receiver

    @classmethod
    def parse(cls, name) -> "LaplaceKind":
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).lower())
        except ValueError:
            raise ValueError(f"unknown Laplace kind {name!r}; expected one of "
                             f"{[k.value for k in cls]}") from None


class ClampWarning(UserWarning):
    """A formula variant produced a probability outside [0, 1]."""


class DegenerateRateError(ValueError):
    pass


@dataclass(frozen=True)
class ModeSelection:
    value: float
    unclamped: float
    variant: str

    @property
    def clamped(self) -> bool:
        return self.value != self.unclamped


@dataclass(frozen=True)
class OutageResult:
    value: float
    method: str
    gamma: float
    # coverage contributed by each serving branch ("L", "N")
    breakdown: dict = field(default_factory=dict)
    unclamped: float | None = None

    @property
    def clamped(self) -> bool:
        return self.unclamped is not None and self.unclamped != self.value


@dataclass(frozen=True)
class AseResult:
    value: float
    cellular_term: float
    d2d_term: float
    outage_cellular: float
    outage_d2d: float
    sharing: str
    delta: float


def _settings(settings):
    return settings if settings is not None else QuadratureSettings()


def _clip_probability(raw: float, what: str) -> float:
    value = min(max(raw, 0.0), 1.0)
    if value != raw and abs(value - raw) > 1e-9:
        warnings.warn(f"{what} evaluated to {raw:.6g}; clamped to {value}", ClampWarning,
                      stacklevel=3)
    return value


def _ratio(a, x):
    # a / (x + a), the interference kernel 1 - 1/(1 + a x^-1); 0 where a == 0
    return a / np.maximum(x + a, _TINY)


def _atoms(pmf: GainPmf, power: float):
    return [(power * g, p) for g, p in zip(pmf.gains, pmf.probs) if p > 0]


def _integrate_tail(f, t_split, alpha_tail, *, points=(), scale=0.0, settings, chunk=None):
    """Integrate f over [t_split, inf) on log-spaced panels.

    ``f`` must decay like t**(1 - alpha_tail); ``scale`` marks where it turns
    over (a**(1/alpha) for a kernel a/(t^alpha + a)).  The remainder past the
    truncation point is below e^-40 of the integrand's scale and is dropped.
    """
    kw = {"settings": settings} if chunk is None else {"settings": settings, "chunk": chunk}
    t_star = max(t_split, float(scale))
    x_max = math.log(t_star / t_split) + _TAIL_EFOLDS / (alpha_tail - 2.0)
    log_points = [math.log(p / t_split) for p in points if p > t_split]

    def g(x):
        t = t_split * np.exp(x)
        return f(t) * t

    return integrate(g, 0.0, x_max, points=log_points, **kw)[0]


def _integrate_radial(f, t_split, *, points=(), alpha_tail, scale=0.0, settings, chunk=None):
    """Integrate f over [0, inf): linear panels up to t_split, log-spaced beyond."""
    kw = {"settings": settings} if chunk is None else {"settings": settings, "chunk": chunk}
    head = integrate(f, 0.0, t_split, points=[p for p in points if p < t_split], **kw)[0]
    return head + _integrate_tail(f, t_split, alpha_tail, points=points, scale=scale,
                                  settings=settings, chunk=chunk)


# --- uplink (homogeneous BS-anchored) fields -----------------------------------------

def _uplink_exponent(v, pmf: GainPmf, power, params: NetworkParams, with_q: bool, settings):
    """-log of the Laplace transform of cellular-UE interference, for a 1-D array v."""
    v = np.asarray(v, dtype=float)
    p_los, radius = params.los_ball_c
    a_los, a_nlos = params.alpha.los_c, params.alpha.nlos_c
    atoms = _atoms(pmf, power)

    def make(states):
        def f(t):
            acc = 0.0
            for alpha, weight in states:
                ta = t**alpha
                q = q_function(ta, params) if with_q else 1.0
                for gain, prob in atoms:
                    acc = acc + (weight * prob) * _ratio(v[:, None] * gain, ta) * q
            return acc * t
        return f

    kinks = []
    if with_q:
        for a_j in (a_los, a_nlos):
            kinks += [radius ** (a_k / a_j) for a_k in (a_los, a_nlos)]
    inner = [k for k in kinks if 0 < k < radius]
    states = [(a, w) for a, w in ((a_los, p_los), (a_nlos, 1 - p_los)) if w > 0]
    total = integrate(make(states), 0.0, radius, points=inner, settings=settings)[0]
    a_max = float(v.max(initial=0.0)) * max(g for g, _ in atoms)
    total = total + _integrate_tail(make([(a_nlos, 1.0)]), radius, a_nlos,
                                    points=[k for k in kinks if k > radius],
                                    scale=a_max ** (1 / a_nlos), settings=settings)
    return TWO_PI * params.lambda_b * total


# --- clustered D2D fields -------------------------------------------------------------

def _kernel_pieces(params: NetworkParams):
    p_los, radius = params.los_ball_d
    a_los, a_nlos = params.alpha.los_d, params.alpha.nlos_d
    inside = [(a, w) for a, w in ((a_los, p_los), (a_nlos, 1 - p_los)) if w > 0]
    return radius, inside, [(a_nlos, 1.0)]


def cluster_kernel(v, t, pmf: GainPmf, power, params: NetworkParams, settings=None,
                   per_combo=False):
    """Mean of a/(u^alpha + a) over one D2D interferer whose cluster centre is at distance t.

    The interferer's distance u is Rician(t, sigma_d); its blockage state and
    gain atom are averaged inside.  ``v`` and ``t`` broadcast together.  With
    ``per_combo`` the (state, gain) terms are returned separately (leading axis)
    with gain probabilities left out, as the printed cluster formula needs.
    """
    settings = _settings(settings)
    v = np.asarray(v, dtype=float)
    t = np.asarray(t, dtype=float)
    shape = np.broadcast_shapes(v.shape, t.shape)
    # the distance kernel depends on t only; keep it unbroadcast over v
    t = t.reshape((1,) * (len(shape) - t.ndim) + t.shape)
    v = v.reshape((1,) * (len(shape) - v.ndim) + v.shape)
    var = params.sigma_d_sq
    sig = params.sigma_d
    radius, inside, outside = _kernel_pieces(params)
    atoms = _atoms(pmf, power)
    lo = np.maximum(0.0, t - _SPREAD * sig)
    hi = t + _SPREAD * sig
    combos = [(a, g) for a in sorted({params.alpha.los_d, params.alpha.nlos_d})
              for g, _ in atoms]
    total = np.zeros(((len(combos),) if per_combo else ()) + shape)
    for start, stop, states in ((lo, np.minimum(hi, radius), inside),
                                (np.maximum(lo, radius), hi, outside)):
        width = np.maximum(stop - start, 0.0)
        if not states or not width.any():
            continue

        def f(s, start=start, width=width, states=states):
            u = start[..., None] + width[..., None] * s
            k = rice_pdf(u, t[..., None], var) * width[..., None]
            vv = v[..., None]
            if per_combo:
                out = np.zeros((len(combos),) + shape + (s.size,))
                for alpha, weight in states:
                    ua = u**alpha
                    for c, (a_c, gain) in enumerate(combos):
                        if a_c == alpha:
                            out[c] += weight * _ratio(vv * gain, ua)
                return out * k
            acc = np.zeros(shape + (s.size,))
            for alpha, weight in states:
                ua = u**alpha
                for gain, prob in atoms:
                    acc += (weight * prob) * _ratio(vv * gain, ua)
            return acc * k

        total = total + integrate(f, 0.0, 1.0, settings=settings)[0]
    if per_combo:
        probs = {g: p for g, p in atoms}
        return total, [probs[g] for _, g in combos]
    return total


def _cluster_exponent(v, pmf: GainPmf, power, params: NetworkParams, mean_active,
                      variant, settings):
    """-log of the Laplace transform of a Thomas field of D2D interferers (1-D v)."""
    v = np.asarray(v, dtype=float)
    if mean_active <= 0 or params.lambda_c == 0 or not v.any():
        return np.zeros_like(v)
    radius, inside, outside = _kernel_pieces(params)
    a_nlos = params.alpha.nlos_d
    atoms = _atoms(pmf, power)
    a_max = float(v.max()) * max(g for g, _ in atoms)
    scale = a_max ** (1 / a_nlos)

    if variant == "approx":
        def f(u):
            acc = 0.0
            for states, mask in ((inside, u <= radius), (outside, u > radius)):
                for alpha, weight in states:
                    ua = u**alpha
                    for gain, prob in atoms:
                        acc = acc + np.where(mask, weight * prob * _ratio(v[:, None] * gain, ua), 0.0)
            return acc * u
        total = _integrate_radial(f, radius, alpha_tail=a_nlos, scale=scale, settings=settings)
        return TWO_PI * params.lambda_c * mean_active * total

    inner = settings.inner()
    t_split = radius + _SPREAD * params.sigma_d
    if variant == "exact":
        def f(t):
            h = cluster_kernel(v[:, None], t[None, :], pmf, power, params, inner)
            return -np.expm1(-mean_active * h) * t
    elif variant == "printed":
        def f(t):
            h, probs = cluster_kernel(v[:, None], t[None, :], pmf, power, params, inner,
                                      per_combo=True)
            w = np.asarray(probs)[:, None, None]
            return np.sum(w * -np.expm1(-mean_active * h), axis=0) * t
    else:
        raise ValueError(f"unknown cluster variant {variant!r}; expected {CLUSTER_VARIANTS}")
    total = _integrate_radial(f, t_split, points=[radius], alpha_tail=a_nlos, scale=scale,
                              settings=settings, chunk=_NESTED_CHUNK)
    return TWO_PI * params.lambda_c * total


def _intra_exponent(v, w0, params: NetworkParams, p_d2d_value, settings):
    """-log of the intra-cluster transform given the receiver's cluster-centre distance w0."""
    others = max(params.n_bar * p_d2d_value - 1.0, 0.0)
    v, w0 = np.broadcast_arrays(np.asarray(v, float), np.asarray(w0, float))
    if others == 0 or not v.any():
        return np.zeros(v.shape)
    h = cluster_kernel(v, w0, interferer_gain_pmf(D2D, params), params.p_d, params, settings)
    return others * h


# --- public Laplace entry point -----------------------------------------------------------

def laplace(kind, v, params: NetworkParams, p_d2d_value: float, w0=None, *,
            variant: str = "exact", cd_q_factor: bool = False, settings=None):
    """Laplace transform E[exp(-v I)] of one interference component.

    ``v`` may be a scalar or array; ``w0`` (required for DD_INTRA only) is the
    distance from the typical D2D receiver to its own cluster centre and
    broadcasts against ``v``.  ``variant`` selects the DC / DD_INTER form.
    """
    kind = LaplaceKind.parse(kind)
    settings = _settings(settings)
    v_arr = np.asarray(v, dtype=float)
    if np.any(v_arr < 0):
        raise ValueError("Laplace argument must be >= 0")
    if kind is LaplaceKind.DD_INTRA:
        if w0 is None:
            raise ValueError("DD_INTRA needs the conditioning distance w0")
        if np.any(np.asarray(w0) < 0):
            raise ValueError("w0 must be >= 0")
        expo = _intra_exponent(v_arr, w0, params, p_d2d_value, settings.inner())
        out = np.exp(-expo)
    else:
        flat = v_arr.ravel()
        expo = _exponent(kind, flat, params, p_d2d_value, variant, cd_q_factor, settings)
        out = np.exp(-expo).reshape(v_arr.shape)
    return float(out) if np.ndim(out) == 0 else out


def _exponent(kind, flat_v, params, p_d2d_value, variant, cd_q_factor, settings):
    mean_active = params.n_bar * p_d2d_value
    if kind is LaplaceKind.CC:
        return _uplink_exponent(flat_v, interferer_gain_pmf(CELLULAR, params), params.p_c,
                                params, True, settings)
    if kind is LaplaceKind.CD:
        return _uplink_exponent(flat_v, interferer_gain_pmf(D2D, params), params.p_c,
                                params, cd_q_factor, settings)
    if kind is LaplaceKind.DC:
        return _cluster_exponent(flat_v, interferer_gain_pmf(CELLULAR, params), params.p_d,
                                 params, mean_active, variant, settings)
    if kind is LaplaceKind.DD_INTER:
        return _cluster_exponent(flat_v, interferer_gain_pmf(D2D, params), params.p_d,
                                 params, mean_active, variant, settings)
    raise ValueError(f"{kind} needs w0")


# --- mode selection -----------------------------------------------------------------------

def _mode_selection_raw(params: NetworkParams, variant: str, settings) -> float:
    if params.t_d == 0:
        return 0.0
    sig = params.sigma_d
    var = params.sigma_d_sq
    p_los_d, r_d = params.los_ball_d
    _, r_c = params.los_ball_c
    a_ld, a_nd = params.alpha.los_d, params.alpha.nlos_d
    a_lc, a_nc = params.alpha.los_c, params.alpha.nlos_c
    lam = params.lambda_b
    t_d = params.t_d
    d2d_states = [(a, w) for a, w in ((a_ld, p_los_d), (a_nd, 1 - p_los_d)) if w > 0]
    r_max = 2 * _SPREAD * sig

    def bias_threshold(r, a_d):
        # cellular path loss above which the biased D2D link wins
        return r**a_d / t_d

    if variant == "partitioned":
        def accept(r, a_d):
            return 1.0 - q_function(bias_threshold(r, a_d), params)
    elif variant == "printed":
        def accept(r, a_d):
            y = bias_threshold(r, a_d)
            with np.errstate(over="ignore"):
                return (np.exp(-TWO_PI * lam * psi(y ** (1 / a_lc), LOS, params))
                        + np.exp(-TWO_PI * lam * psi(y ** (1 / a_nc), NLOS, params)))
    else:
        raise ValueError(f"unknown mode-selection variant {variant!r}")

    breaks = {r_d}
    for a_d in (a_ld, a_nd):
        for a_c in (a_lc, a_nc):
            breaks.add((t_d * r_c**a_c) ** (1 / a_d))
    breaks = sorted(b for b in breaks if 0 < b < r_max)
    inner = settings.inner()

    def integrand_r(r, omega):
        inside = r <= r_d
        acc = 0.0
        for alpha, _ in d2d_states:
            p = np.where(inside, p_los_d if alpha == a_ld else 1 - p_los_d,
                         0.0 if alpha == a_ld else 1.0)
            acc = acc + p * accept(r, alpha)
        return acc * rice_pdf(r, omega, var)

    def f_omega(omega):
        val, _ = integrate(lambda r: integrand_r(r[None, :], omega[:, None]), 0.0, r_max,
                           points=breaks, settings=inner)
        return val * rayleigh_pdf(omega, var)

    value, _ = integrate(f_omega, 0.0, _SPREAD * sig, settings=settings)
    return float(value)


def mode_selection(params: NetworkParams, variant: str = "partitioned",
                   settings=None) -> ModeSelection:
    raw = _mode_selection_raw(params, variant, _settings(settings))
    return ModeSelection(_clip_probability(raw, f"D2D mode probability ({variant})"), raw,
                         variant)


def p_d2d(params: NetworkParams, variant: str = "partitioned", settings=None) -> float:
    """Probability that a potential D2D transmitter picks D2D mode."""
    return mode_selection(params, variant, settings).value


def _resolve_p_d2d(params, p_d2d_value, settings):
    if p_d2d_value is None:
        return p_d2d(params, settings=settings)
    if not 0 <= p_d2d_value <= 1:
        raise ValueError("p_d2d_value must lie in [0, 1]")
    return float(p_d2d_value)


# --- outage ---------------------------------------------------------------------------------

def _serving_weight(r, s, weight, params: NetworkParams, variant):
    """Density of the serving cellular link being of state s at distance r (times its p_s)."""
    lam = params.lambda_b
    out = TWO_PI * lam * r * weight * np.exp(-TWO_PI * lam * psi(r, s, params))
    if variant == "partitioned":
        other = NLOS if s == LOS else LOS
        a_s = params.exponent(s, CELLULAR)
        a_o = params.exponent(other, CELLULAR)
        out = out * np.exp(-TWO_PI * lam * psi(r ** (a_s / a_o), other, params))
    return out


def _branch_regions(p_los, radius, r_max):
    """(state, lo, hi, weight) panels of constant LOS/NLOS probability."""
    regions = []
    head = min(radius, r_max)
    if p_los > 0:
        regions.append((LOS, 0.0, head, p_los))
    if p_los < 1:
        regions.append((NLOS, 0.0, head, 1.0 - p_los))
    if r_max > radius:
        regions.append((NLOS, radius, r_max, 1.0))
    return regions


def _cellular_coverage(gammas, params: NetworkParams, p_d2d_value, variant, laplace_variant,
                       serving_gain, settings):
    gammas = np.atleast_1d(np.asarray(gammas, dtype=float))
    p_los, radius = params.los_ball_c
    r_max = math.sqrt(radius**2 + 50.0 / (math.pi * params.lambda_b))
    mean_active = params.n_bar * p_d2d_value
    include_dc = params.beta != 0 and mean_active > 0 and params.lambda_c > 0
    cc_pmf = interferer_gain_pmf(CELLULAR, params)
    dc_pmf = interferer_gain_pmf(CELLULAR, params)
    scale = params.p_c * serving_gain
    cover = {LOS: np.zeros(gammas.size), NLOS: np.zeros(gammas.size)}
    for s, lo, hi, weight in _branch_regions(p_los, radius, r_max):
        alpha = params.exponent(s, CELLULAR)

        def f(r, s=s, weight=weight, alpha=alpha):
            v = gammas[:, None] * r[None, :] ** alpha / scale
            flat = v.ravel()
            log_l = -_uplink_exponent(flat, cc_pmf, params.p_c, params, True, settings)
            if include_dc:
                log_l = log_l - _cluster_exponent(params.beta * flat, dc_pmf, params.p_d, params,
                                                  mean_active, laplace_variant, settings)
            log_l = log_l.reshape(v.shape) - v * params.noise
            return np.exp(log_l) * _serving_weight(r, s, weight, params, variant)[None, :]

        other = NLOS if s == LOS else LOS
        kink = radius ** (params.exponent(other, CELLULAR) / alpha)
        points = [kink] if lo < kink < hi else []
        cover[s] += integrate(f, lo, hi, points=points, settings=settings,
                              chunk=_NESTED_CHUNK)[0]
    return cover


def _d2d_coverage(gammas, params: NetworkParams, p_d2d_value, laplace_variant, serving_gain,
                  cd_q_factor, settings):
    gammas = np.atleast_1d(np.asarray(gammas, dtype=float))
    sig = params.sigma_d
    var = params.sigma_d_sq
    p_los, radius = params.los_ball_d
    r_max = 14.0 * sig
    mean_active = params.n_bar * p_d2d_value
    others = max(mean_active - 1.0, 0.0)
    ue_pmf = interferer_gain_pmf(D2D, params)
    include_cd = params.beta != 0
    scale = params.p_d * serving_gain
    inner = settings.inner()
    cover = {LOS: np.zeros(gammas.size), NLOS: np.zeros(gammas.size)}

    def link_density(r, v):
        # joint density of the serving distance, averaged over the own-cluster
        # geometry with the intra-cluster interference folded in
        if others == 0:
            return np.broadcast_to(rayleigh_pdf(r, 2 * var), v.shape)

        def g(w0):
            h = cluster_kernel(v[..., None], w0, ue_pmf, params.p_d, params, inner.inner())
            return (np.exp(-others * h) * rice_pdf(r[..., None], w0, var)
                    * rayleigh_pdf(w0, var))

        return integrate(g, 0.0, _SPREAD * sig, settings=inner, chunk=_NESTED_CHUNK)[0]

    for s, lo, hi, weight in _branch_regions(p_los, radius, r_max):
        alpha = params.exponent(s, D2D)

        def f(r, weight=weight, alpha=alpha):
            v = gammas[:, None] * r[None, :] ** alpha / scale
            flat = v.ravel()
            log_l = -_cluster_exponent(flat, ue_pmf, params.p_d, params, mean_active,
                                       laplace_variant, settings)
            if include_cd:
                log_l = log_l - _uplink_exponent(params.beta * flat, ue_pmf, params.p_c, params,
                                                 cd_q_factor, settings)
            log_l = log_l.reshape(v.shape) - v * params.noise
            rr = np.broadcast_to(r[None, :], v.shape)
            return weight * np.exp(log_l) * link_density(rr, v)

        cover[s] += integrate(f, lo, hi, settings=settings, chunk=_NESTED_CHUNK)[0]
    return cover


def _finish(cover, gammas, method, variant_label):
    total = cover[LOS] + cover[NLOS]
    out = []
    for k, gamma in enumerate(np.atleast_1d(gammas)):
        raw = 1.0 - float(total[k])
        value = _clip_probability(raw, f"outage ({variant_label})")
        out.append(OutageResult(value, method, float(gamma),
                                {LOS: float(cover[LOS][k]), NLOS: float(cover[NLOS][k])},
                                raw))
    return out


def outage_cellular_curve(gammas, params: NetworkParams, p_d2d_value=None, *,
                          variant="partitioned", laplace_variant="exact", serving_gain=None,
                          settings=None) -> list[OutageResult]:
    """Cellular uplink outage at each linear SINR threshold in ``gammas``."""
    if variant not in CELLULAR_VARIANTS:
        raise ValueError(f"unknown cellular variant {variant!r}; expected {CELLULAR_VARIANTS}")
    gammas = np.atleast_1d(np.asarray(gammas, dtype=float))
    if np.any(gammas <= 0):
        raise ValueError("SINR threshold must be > 0")
    settings = _settings(settings)
    p_val = _resolve_p_d2d(params, p_d2d_value, settings)
    g0 = aligned_gain(CELLULAR, params) if serving_gain is None else serving_gain
    cover = _cellular_coverage(gammas, params, p_val, variant, laplace_variant, g0, settings)
    return _finish(cover, gammas, f"analytic-{variant}-{laplace_variant}", variant)


def outage_cellular(gamma, params: NetworkParams, p_d2d_value=None, **kw) -> OutageResult:
    return outage_cellular_curve([gamma], params, p_d2d_value, **kw)[0]


def outage_d2d_curve(gammas, params: NetworkParams, p_d2d_value=None, *,
                     laplace_variant="exact", serving_gain=None, cd_q_factor=False,
                     settings=None) -> list[OutageResult]:
    """D2D link outage at each linear SINR threshold in ``gammas``."""
    gammas = np.atleast_1d(np.asarray(gammas, dtype=float))
    if np.any(gammas <= 0):
        raise ValueError("SINR threshold must be > 0")
    settings = _settings(settings)
    p_val = _resolve_p_d2d(params, p_d2d_value, settings)
    g0 = aligned_gain(D2D, params) if serving_gain is None else serving_gain
    cover = _d2d_coverage(gammas, params, p_val, laplace_variant, g0, cd_q_factor, settings)
    return _finish(cover, gammas, f"analytic-{laplace_variant}", "d2d")


def outage_d2d(gamma, params: NetworkParams, p_d2d_value=None, **kw) -> OutageResult:
    return outage_d2d_curve([gamma], params, p_d2d_value, **kw)[0]


def outage_with_beam_error(gamma, mode: str, params: NetworkParams, p_d2d_value=None, *,
                           settings=None, **kw) -> OutageResult:
    """Outage averaged over the serving-gain mixture induced by steering error."""
    kind = CELLULAR if mode in ("cellular", "c") else D2D if mode in ("d2d", "d") else None
    if kind is None:
        raise ValueError("mode must be 'cellular' or 'd2d'")
    settings = _settings(settings)
    p_val = _resolve_p_d2d(params, p_d2d_value, settings)
    pmf = serving_gain_pmf(kind, params.sigma_be, params)
    fn = outage_cellular if kind == CELLULAR else outage_d2d
    value = 0.0
    breakdown = {LOS: 0.0, NLOS: 0.0}
    method = None
    for gain, weight in zip(pmf.gains, pmf.probs):
        if weight == 0:
            continue
        res = fn(gamma, params, p_val, serving_gain=gain, settings=settings, **kw)
        if weight == 1.0:
            return res
        value += weight * res.value
        for s in breakdown:
            breakdown[s] += weight * res.breakdown[s]
        method = res.method + "+beam-error"
    return OutageResult(value, method, float(gamma), breakdown)


# --- area spectral efficiency and spectrum partition ----------------------------------------

def link_rates(gamma, params: NetworkParams, p_d2d_value=None, settings=None, **kw):
    """(cellular, D2D) successful-link densities times log2(1 + gamma), per m^2."""
    settings = _settings(settings)
    p_val = _resolve_p_d2d(params, p_d2d_value, settings)
    oc = outage_cellular(gamma, params, p_val, settings=settings, **kw).value
    od = outage_d2d(gamma, params, p_val, settings=settings).value
    bits = math.log2(1.0 + gamma)
    cell = params.lambda_b * (1.0 - oc) * bits
    d2d = params.n_bar * p_val * params.lambda_c * (1.0 - od) * bits
    return cell, d2d, oc, od


def ase(gamma, params: NetworkParams, sharing: str = "underlay", delta=None,
        p_d2d_value=None, settings=None) -> AseResult:
    """Area spectral efficiency in bit/s/Hz/m^2 for underlay or overlay sharing."""
    if sharing not in ("underlay", "overlay"):
        raise ValueError("sharing must be 'underlay' or 'overlay'")
    if sharing == "overlay" and delta is not None and not 0 <= delta <= 1:
        raise ValueError("delta must lie in [0, 1]")
    settings = _settings(settings)
    p_val = _resolve_p_d2d(params, p_d2d_value, settings)
    link_params = params if sharing == "underlay" else params.replace(beta=0)
    oc = outage_cellular(gamma, link_params, p_val, settings=settings).value
    od = outage_d2d(gamma, link_params, p_val, settings=settings).value
    return ase_from_outages(gamma, params, p_val, oc, od, sharing, delta)


def ase_from_outages(gamma, params: NetworkParams, p_d2d_value, outage_c, outage_d,
                     sharing: str = "underlay", delta=None) -> AseResult:
    """ASE from already computed outages (overlay callers must pass beta = 0 outages)."""
    bits = math.log2(1.0 + gamma)
    cell = params.lambda_b * (1.0 - outage_c) * bits
    d2d = params.n_bar * p_d2d_value * params.lambda_c * (1.0 - outage_d) * bits
    if sharing == "underlay":
        return AseResult(cell + d2d, cell, d2d, outage_c, outage_d, sharing, float("nan"))
    if sharing != "overlay":
        raise ValueError("sharing must be 'underlay' or 'overlay'")
    delta = params.delta if delta is None else float(delta)
    if not 0 <= delta <= 1:
        raise ValueError("delta must lie in [0, 1]")
    cell_term = (1 - delta) * cell
    d2d_term = delta * d2d
    return AseResult(cell_term + d2d_term, cell_term, d2d_term, outage_c, outage_d, sharing,
                     delta)


def ase_overlay_from_rates(cell_rate, d2d_rate, delta):
    return (1 - delta) * cell_rate + delta * d2d_rate


def optimal_partition_greedy(gamma, params: NetworkParams, p_d2d_value=None,
                             settings=None) -> int:
    """Partition factor maximising overlay ASE: all spectrum to one mode (ties -> D2D)."""
    cell, d2d, _, _ = link_rates(gamma, params.replace(beta=0), p_d2d_value, settings)
    return 0 if cell > d2d else 1


def pf_objective(delta, cell_rate, d2d_rate, w_c, w_d):
    """Weighted proportional-fair utility of splitting the band as (1 - delta, delta)."""
    delta = np.asarray(delta, dtype=float)
    with np.errstate(divide="ignore"):
        out = w_c * np.log((1 - delta) * cell_rate) + w_d * np.log(delta * d2d_rate)
    return float(out) if out.ndim == 0 else out


def optimal_partition_proportional_fair(params: NetworkParams, gamma=None, *, cell_rate=None,
                                        d2d_rate=None, p_d2d_value=None, settings=None):
    """Return (delta_star, objective) for the weighted proportional-fair partition.

    The optimum is the D2D weight itself; the rates only matter for the
    objective, which is returned for grid checks.  Pass the rates directly or a
    threshold ``gamma`` to compute them (overlay, so without cross-mode terms).
    """
    if abs(params.w_c + params.w_d - 1.0) > 1e-12:
        raise ValueError("w_c + w_d must equal 1")
    if cell_rate is None or d2d_rate is None:
        gamma = params.gamma if gamma is None else gamma
        cell_rate, d2d_rate, _, _ = link_rates(gamma, params.replace(beta=0), p_d2d_value,
                                               settings)
    if cell_rate <= 0 or d2d_rate <= 0:
        raise DegenerateRateError("proportional-fair partition undefined: a rate density is 0")

    def objective(delta):
        return pf_objective(delta, cell_rate, d2d_rate, params.w_c, params.w_d)

    return params.w_d, objective
