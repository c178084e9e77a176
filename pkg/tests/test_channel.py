import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from d2dmmwave.channel import (GainPmf, LinkGeometry, aligned_gain, draw_fading,
                               interferer_gain_pmf, los_probabilities, misalignment_cdf,
                               path_loss, serving_gain_pmf)
from d2dmmwave.params import CELLULAR, D2D, LOS, NLOS, default_params, with_overrides


def test_los_ball_boundary_counts_as_inside():
    p = default_params().replace(los_ball_c=(0.7, 100.0))
    assert los_probabilities(100.0, CELLULAR, p) == (0.7, pytest.approx(0.3))
    assert los_probabilities(100.0 + 1e-9, CELLULAR, p) == (0.0, 1.0)
    pl, pn = los_probabilities(np.array([10.0, 60.0]), D2D, p)
    assert pl.tolist() == [1.0, 0.0] and pn.tolist() == [0.0, 1.0]


def test_path_loss():
    p = default_params()
    assert path_loss(LinkGeometry(10.0, LOS, CELLULAR), p) == pytest.approx(1e-2)
    assert path_loss(LinkGeometry(10.0, NLOS, D2D), p) == pytest.approx(1e-4)
    with pytest.raises(ValueError):
        LinkGeometry(0.0, LOS, D2D)


@pytest.mark.parametrize("kind", [CELLULAR, D2D])
def test_interferer_pmf(kind):
    p = default_params()
    pmf = interferer_gain_pmf(kind, p)
    assert abs(sum(pmf.probs) - 1) <= 1e-12
    q = 1 / 12
    assert pmf.gains == pytest.approx((1e4, 10.0, 10.0, 0.01))
    assert pmf.probs == pytest.approx((q * q, q * (1 - q), (1 - q) * q, (1 - q) ** 2))
    assert list(pmf.gains) == sorted(pmf.gains, reverse=True)


def test_receiver_pattern_depends_on_link():
    p = with_overrides(default_params(), {"m_bs_db": 30})
    assert max(interferer_gain_pmf(CELLULAR, p).gains) == pytest.approx(1e5)
    assert max(interferer_gain_pmf(D2D, p).gains) == pytest.approx(1e4)
    assert aligned_gain(CELLULAR, p) == pytest.approx(1e5)
    assert aligned_gain(D2D, p) == pytest.approx(1e4)


def test_serving_pmf_without_error_is_aligned():
    p = default_params()
    pmf = serving_gain_pmf(CELLULAR, 0.0, p)
    assert pmf.probs[0] == 1.0 and pmf.gains[0] == pytest.approx(1e4)
    with pytest.raises(ValueError):
        serving_gain_pmf(CELLULAR, -0.1, p)


def test_misalignment_cdf_half_normal():
    # P(|e| <= sigma) for e ~ N(0, sigma^2)
    assert misalignment_cdf(0.3, 0.3) == pytest.approx(0.682689492, abs=1e-9)
    assert misalignment_cdf(0.0, 0.0) == 1.0


@settings(max_examples=50, deadline=None)
@given(sigma_deg=st.floats(0, 90), kind=st.sampled_from([CELLULAR, D2D]))
def test_serving_pmf_is_a_distribution(sigma_deg, kind):
    p = default_params()
    pmf = serving_gain_pmf(kind, math.radians(sigma_deg), p)
    assert abs(sum(pmf.probs) - 1) <= 1e-12
    assert all(x >= 0 for x in pmf.probs)


def test_aligned_mass_decreases_with_error():
    p = default_params()
    top = [serving_gain_pmf(D2D, math.radians(s), p).probs[0] for s in (0, 5, 10, 20, 40)]
    assert all(a >= b for a, b in zip(top, top[1:]))


def test_gain_sampling_frequencies():
    pmf = GainPmf.from_atoms([1.0, 4.0, 2.0, 3.0], [0.1, 0.2, 0.3, 0.4])
    assert pmf.gains == (4.0, 3.0, 2.0, 1.0)
    assert pmf.mean() == pytest.approx(0.1 + 0.8 + 0.6 + 1.2)
    x = pmf.sample(np.random.default_rng(1), 200_000)
    for g, prob in zip(pmf.gains, pmf.probs):
        freq = np.mean(x == g)
        assert abs(freq - prob) < 4 * math.sqrt(prob * (1 - prob) / x.size)


def test_fading_has_unit_mean():
    h = draw_fading(np.random.default_rng(2), 200_000)
    assert abs(h.mean() - 1) < 4 / math.sqrt(h.size)
    assert h.min() >= 0
