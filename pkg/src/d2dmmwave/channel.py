"""Per-link physics: LOS-ball blockage, power-law path loss, sectored antenna
gains (with and without steering error) and Rayleigh fading."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .params import CELLULAR, LOS, NetworkParams


@dataclass(frozen=True)
class GainPmf:
    """Four-atom effective antenna gain distribution, atoms sorted by gain (descending)."""

    gains: tuple[float, ...]
    probs: tuple[float, ...]

    @classmethod
    def from_atoms(cls, gains, probs) -> "GainPmf":
        order = sorted(range(len(gains)), key=lambda i: -gains[i])
        return cls(tuple(float(gains[i]) for i in order), tuple(float(probs[i]) for i in order))

    def mean(self) -> float:
        return sum(g * p for g, p in zip(self.gains, self.probs))

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        idx = np.searchsorted(np.cumsum(self.probs), rng.random(size), side="right")
        return np.asarray(self.gains)[np.minimum(idx, len(self.gains) - 1)]


@dataclass(frozen=True)
class LinkGeometry:
    distance: float
    los: str
    link_kind: str

    def __post_init__(self):
        if not self.distance > 0:
            raise ValueError("link distance must be positive")


def los_probabilities(r, link_kind: str, params: NetworkParams):
    """LOS and NLOS probabilities of a link of length r (r = R_B counts as inside)."""
    p_los, radius = params.los_ball(link_kind)
    inside = np.asarray(r) <= radius
    p_l = np.where(inside, p_los, 0.0)
    p_n = np.where(inside, 1.0 - p_los, 1.0)
    if np.ndim(r) == 0:
        return float(p_l), float(p_n)
    return p_l, p_n


def los_probability(state: str, r, link_kind: str, params: NetworkParams):
    p_l, p_n = los_probabilities(r, link_kind, params)
    return p_l if state == LOS else p_n


def path_loss(geom: LinkGeometry, params: NetworkParams) -> float:
    """Linear attenuation r**-alpha for the link's blockage state and kind."""
    return geom.distance ** -params.exponent(geom.los, geom.link_kind)


def _patterns(link_kind: str, params: NetworkParams):
    # receiver side of a cellular link is a BS, of a D2D link a UE
    rx = params.antenna_bs if link_kind == CELLULAR else params.antenna_ue
    return rx, params.antenna_ue


def interferer_gain_pmf(link_kind: str, params: NetworkParams) -> GainPmf:
    """Gain seen from an interferer with a uniformly random beam direction."""
    rx, ue = _patterns(link_kind, params)
    a = rx.beamwidth / (2 * math.pi)
    b = ue.beamwidth / (2 * math.pi)
    gains = (rx.main_gain * ue.main_gain, rx.main_gain * ue.side_gain,
             rx.side_gain * ue.main_gain, rx.side_gain * ue.side_gain)
    probs = (a * b, a * (1 - b), (1 - a) * b, (1 - a) * (1 - b))
    return GainPmf.from_atoms(gains, probs)


def misalignment_cdf(x: float, sigma_be: float) -> float:
    """CDF of the half-normal absolute steering error."""
    if sigma_be == 0:
        return 1.0 if x >= 0 else 0.0
    return float(erf(x / (math.sqrt(2.0) * sigma_be)))


def serving_gain_pmf(link_kind: str, sigma_be: float, params: NetworkParams) -> GainPmf:
    """Serving-link gain when both ends steer with Gaussian error of std `sigma_be`."""
    if sigma_be < 0:
        raise ValueError("sigma_be must be >= 0")
    rx, ue = _patterns(link_kind, params)
    f_rx = misalignment_cdf(rx.beamwidth / 2, sigma_be)
    f_ue = misalignment_cdf(ue.beamwidth / 2, sigma_be)
    gains = (rx.main_gain * ue.main_gain, rx.main_gain * ue.side_gain,
             rx.side_gain * ue.main_gain, rx.side_gain * ue.side_gain)
    probs = (f_rx * f_ue, f_rx * (1 - f_ue), (1 - f_rx) * f_ue, (1 - f_rx) * (1 - f_ue))
    return GainPmf.from_atoms(gains, probs)


def aligned_gain(link_kind: str, params: NetworkParams) -> float:
    rx, ue = _patterns(link_kind, params)
    return rx.main_gain * ue.main_gain


def draw_fading(rng: np.random.Generator, size=None):
    """Unit-mean exponential power gain (Rayleigh fading)."""
    return rng.exponential(1.0, size)
