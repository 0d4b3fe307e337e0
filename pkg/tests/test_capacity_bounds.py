import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from icbounds.capacity_bounds import (
    BoundsReport,
    HypothesisError,
    is_epsilon_bottleneck,
    link_rates,
    lower_bound_ia,
    per_link_rate,
    single_user_bound,
    single_user_report,
    tail_bound,
    tail_bound_fading,
    two_user_bottleneck_bound,
)
from icbounds.net_model import AttenuationModel, Domain, SeparationParams, derive_separation_params

positive = st.floats(0.0, 1e6, allow_nan=False)


@pytest.mark.parametrize("inr, rate", [(0.0, 0.0), (1.5, 1.0), (0.5, 0.5)])
def test_per_link_rate(inr, rate):
    assert per_link_rate(inr) == rate


def test_per_link_rate_rejects_negative():
    with pytest.raises(ValueError):
        per_link_rate(-0.1)


def test_link_rates_matrix():
    np.testing.assert_allclose(link_rates([[1.5, 0.5], [0.0, 4.0]]), [[1.0, 0.5], [0.0, 0.5 * math.log2(9)]])


@pytest.mark.parametrize(
    "snr, expected",
    [([1.5, 1.5], 2.0), ([0.0], 0.0), ([1.5, 0.5, 4.0], 1.5 + 0.5 * math.log2(9))],
)
def test_lower_bound_ia(snr, expected):
    report = lower_bound_ia(np.array(snr))
    assert report.lower == pytest.approx(expected, rel=1e-12)
    assert [label for label, _ in report.contributions] == [(i,) for i in range(len(snr))]
    report.check()


def test_two_user_examples():
    assert two_user_bottleneck_bound(1.5, 0.5, 1.0) == pytest.approx(math.log2(3.5), rel=1e-12)
    assert two_user_bottleneck_bound(1, 1, 1) == pytest.approx(math.log2(3), rel=1e-12)
    with pytest.raises(HypothesisError):
        two_user_bottleneck_bound(1, 2, 1)


@given(positive)
def test_bottleneck_exactness(s):
    value = two_user_bottleneck_bound(s, s, s)
    assert value == pytest.approx(math.log2(1 + 2 * s), rel=1e-12)
    assert value == pytest.approx(2 * per_link_rate(s), rel=1e-12, abs=1e-300)


@given(st.floats(0, 1e3), st.floats(0, 1e3), st.floats(1e-3, 1e3))
def test_two_user_increasing(snr_i, inr, delta):
    snr_j = 0.0
    base = two_user_bottleneck_bound(snr_i, snr_j, inr)
    assert two_user_bottleneck_bound(snr_i + delta, snr_j, inr) > base
    assert two_user_bottleneck_bound(snr_i, snr_j, inr + delta) > base


@pytest.mark.parametrize("snr, expected", [(3, 2.0), (0, 0.0), (1, 1.0)])
def test_single_user(snr, expected):
    assert single_user_bound(snr) == expected


def test_epsilon_bottleneck():
    assert is_epsilon_bottleneck(1, 1, 1, 0.01)
    assert not is_epsilon_bottleneck(1, 1, 3, 0.01)
    assert not is_epsilon_bottleneck(1, 2, 1, 1.0)


def test_tail_bound_constants_cancel():
    # C_dec = 1/3 makes (3 C_dec) = 1; D_sep = alpha leaves e^{-2u}
    sep = SeparationParams(1.0, 4.0)
    att = AttenuationModel(4.0, 1.0 / 3.0)
    assert tail_bound(1.0, sep, att) == pytest.approx(math.exp(-2), rel=1e-12)


def test_tail_bound_square_value():
    sep = SeparationParams(math.pi, 2.0)
    att = AttenuationModel(4.0, 1.0)
    assert tail_bound(2.0, sep, att) == pytest.approx(math.pi * math.sqrt(3) * math.exp(-2), rel=1e-12)
    assert tail_bound(2.0, sep, att) == pytest.approx(0.736413, rel=1e-5)


def test_tail_bound_bits_conversion():
    sep = SeparationParams(math.pi, 2.0)
    att = AttenuationModel(4.0, 1.0)
    assert tail_bound(3.0, sep, att, units="bits") == pytest.approx(
        math.pi * math.sqrt(3) * math.exp(-3.0 * math.log(2)), rel=1e-12
    )
    with pytest.raises(ValueError):
        tail_bound(2.0, sep, att, units="decibels")


def test_tail_bound_decreases_to_zero():
    sep = SeparationParams(math.pi, 2.0)
    att = AttenuationModel(4.0, 1.0)
    values = [tail_bound(u, sep, att) for u in np.linspace(1, 200, 50)]
    assert all(a > b for a, b in zip(values, values[1:]))
    assert values[-1] < 1e-80


def test_tail_bound_domain():
    with pytest.raises(ValueError):
        tail_bound(0.5, SeparationParams(1, 1), AttenuationModel(1.0))


def _direct_rates_nats(n, seed, fading=False):
    rng = np.random.default_rng(seed)
    dom = Domain.unit_cube(2)
    d = np.linalg.norm(dom.sample(rng, n, "tx") - dom.sample(rng, n, "rx"), axis=1)
    snr = AttenuationModel(4.0)(d)
    if fading:
        snr = snr * rng.uniform(0, 2, n)
    return 0.5 * np.log(1 + 2 * snr)


def test_tail_bound_holds_empirically():
    sep = derive_separation_params(Domain.unit_cube(2))
    att = AttenuationModel(4.0)
    s = _direct_rates_nats(200_000, 5)
    for u in (1.0, 1.5, 2.0, 3.0, 4.0, 5.0):
        p = np.mean(s >= u)
        assert p <= tail_bound(u, sep, att) + 3 * math.sqrt(p * (1 - p) / s.size)


def test_divided_constant_is_too_small():
    # with (C_dec/3) in place of (3 C_dec) the tail estimate fails on the unit square
    sep = derive_separation_params(Domain.unit_cube(2))
    s = _direct_rates_nats(200_000, 6)
    u = 1.0
    p = np.mean(s >= u)
    divided = sep.c_sep * (1.0 / 3.0) ** 0.5 * math.exp(-2 * u * 0.5)
    assert p > divided + 3 * math.sqrt(p * (1 - p) / s.size)


def test_fading_tail_bound_formula_and_validity():
    sep = derive_separation_params(Domain.unit_cube(2))
    att = AttenuationModel(4.0)
    u = 2.0
    expected = math.sqrt(3) * math.exp(-u) + math.pi * math.sqrt(math.sqrt(3)) * math.exp(-u / 2)
    assert tail_bound_fading(u, sep, att, 1.0) == pytest.approx(expected, rel=1e-12)
    s = _direct_rates_nats(200_000, 7, fading=True)
    for u in (1.0, 2.0, 4.0, 6.0):
        p = np.mean(s >= u)
        assert p <= tail_bound_fading(u, sep, att, 1.0) + 3 * math.sqrt(p * (1 - p) / s.size)


def test_report_invariants_and_json():
    report = single_user_report(np.array([3.0, 1.0]))
    assert report.upper == 3.0
    assert report.lower <= report.upper
    report.check()
    data = json.loads(report.to_json())
    assert data["method"] == "single_user"
    assert [c["links"] for c in data["contributions"]] == [[0], [1]]


def test_report_check_catches_bad_sum():
    bad = BoundsReport(lower=1.0, upper=2.0, method="box", contributions=[((0,), 1.5)])
    with pytest.raises(AssertionError):
        bad.check()
    with pytest.raises(ValueError):
        BoundsReport(lower=0.0, upper=0.0, method="nope")
