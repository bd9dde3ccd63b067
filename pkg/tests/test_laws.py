import math

import numpy as np
import pytest

from rcmwalk import laws


def test_probabilities_must_sum_to_one():
    with pytest.raises(laws.LawError):
        laws.custom_table([0.5, 1.0], [0.5, 0.6])
    with pytest.raises(laws.LawError):
        laws.custom_table([0.5, 2.0], [0.5, 0.5])  # value outside [0,1]


def test_homogeneous_and_bernoulli():
    h = laws.homogeneous(0.3)
    assert h.values == (0.3,) and h.probs == (1.0,)
    b = laws.bernoulli_perc(0.7)
    assert b.p_one == 0.7
    assert laws.bernoulli_perc(1.0).values == (1.0,)
    with pytest.raises(laws.LawError):
        laws.homogeneous(0.0)


def test_dyadic_polylog_normalization():
    # oracle: direct partial sum of the zeta-like series
    eps = 0.5
    partial = sum(n ** -(1.0 + eps) for n in range(1, 2_000_000))
    # integral tail bound: sum_{n>=N} n^-1.5 in [2/sqrt(N), 2/sqrt(N-1)]
    tail_lo = 2.0 / math.sqrt(2_000_000)
    zeta_est = partial + tail_lo
    c_expected = 0.3 / zeta_est
    law = laws.dyadic_polylog(0.7, eps)
    assert law.prob_of_value(1.0) == 0.7
    assert law.prob_of_value(0.5) == pytest.approx(c_expected, rel=2e-3)
    assert law.prob_of_value(0.5) == pytest.approx(0.11484, rel=1e-3)
    assert abs(sum(law.probs) - 1.0) < 1e-12
    assert all(0.0 <= v <= 1.0 for v in law.values)


def test_two_value():
    law = laws.two_value(0.7, 10)
    assert law.values == (1.0, 0.1)
    assert law.probs == (0.7, pytest.approx(0.3))
    assert abs(sum(law.probs) - 1.0) < 1e-12


def test_sparse_scales_constraints():
    qs = [4.0, 10.0, 25.0]
    law = laws.sparse_scales([10, 100, 1000], qs)
    assert law.values[0] == 1.0
    assert law.probs[0] == 1.0 - 1.0 / 4.0
    assert law.probs[1] == pytest.approx(1 / 4 - 1 / 10)
    assert law.probs[-1] == pytest.approx(1 / 25)
    assert abs(sum(law.probs) - 1.0) < 1e-12
    with pytest.raises(laws.LawError):
        laws.sparse_scales([10, 100], [4.0, 7.0])  # q2 <= 2 q1
    with pytest.raises(laws.LawError):
        laws.sparse_scales([9, 100], [4.0, 10.0])  # odd n_k


def test_q_from_lambda_formula():
    lam, d = 1e6, 5
    q = laws.q_from_lambda(lam, d)
    assert q == pytest.approx((0.5 * math.log(lam) / math.log(2 * d)) ** 0.25)


def test_subcritical_warning_not_error():
    law = laws.bernoulli_perc(0.4)
    with pytest.warns(UserWarning):
        law.warn_if_subcritical(2)


def test_descriptor_round_trip():
    for law in (
        laws.homogeneous(1.0),
        laws.bernoulli_perc(0.6),
        laws.dyadic_polylog(0.7, 0.5),
        laws.two_value(0.8, 50),
        laws.wedge_min([0.2, 1.0], [0.5, 0.5]),
        laws.sparse_scales([10, 100], [4.0, 9.0]),
    ):
        back = laws.ConductanceLaw.from_json(law.to_json())
        assert back == law


def test_occupancy_shortcut_matches_sampling():
    law = laws.two_value(0.7, 10)
    u = np.linspace(0.0, 0.999999, 10_001)
    occ = law.occupied_from_uniform(u)
    vals = law.sample_from_uniform(u)
    assert np.array_equal(occ, vals == 1.0)
