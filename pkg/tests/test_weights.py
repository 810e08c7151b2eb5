"""Edge-weight distribution round trips and frozen values."""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fpplab import weights


KINDS = {
    "exponential": weights.exponential(1.0),
    "exponential_fast": weights.exponential(2.5),
    "shifted": weights.shifted_exponential(2.0),
    "power_flat": weights.power_exponential(0.5),
    "power_steep": weights.power_exponential(2.0),
    "uniform": weights.uniform(2.0),
}


def test_exponential_cdf_frozen():
    d = weights.exponential(1.0)
    # 1 - exp(-1), computed independently
    assert d.cdf(1.0) == pytest.approx(0.6321205588285577, abs=1e-15)
    assert d.cdf(0.0) == 0.0
    assert d.density(0.0) == pytest.approx(1.0)


def test_exponential_rate_scales_quantiles():
    slow = weights.exponential(1.0)
    fast = weights.exponential(4.0)
    for u in (0.1, 0.5, 0.9):
        assert fast.quantile(u) == pytest.approx(slow.quantile(u) / 4.0, rel=1e-12)


def test_shifted_exponential_support_starts_at_one():
    d = weights.shifted_exponential(2.0)
    assert d.support_lo == 1.0
    assert d.cdf(1.0) == 0.0
    assert d.cdf(0.5) == 0.0
    assert d.density(0.5) == 0.0
    # G(1 + x) = 1 - exp(-k x): at x = 0.5, k = 2 this is 1 - exp(-1)
    assert d.cdf(1.5) == pytest.approx(0.6321205588285577, abs=1e-15)
    assert d.quantile(0.6321205588285577) == pytest.approx(1.5, rel=1e-10)


def test_power_exponential_s_one_is_standard_exponential():
    p = weights.power_exponential(1.0)
    e = weights.exponential(1.0)
    for x in (0.1, 0.7, 2.3, 5.0):
        assert p.cdf(x) == pytest.approx(e.cdf(x), rel=1e-12)
        assert p.density(x) == pytest.approx(e.density(x), rel=1e-12)


def test_power_exponential_density_at_origin():
    # G(x) = 1 - exp(-x^(1/s)): the density at 0 vanishes for s < 1 and
    # blows up for s > 1; both ends must be represented honestly.
    assert weights.power_exponential(0.5).density(0.0) == 0.0
    assert weights.power_exponential(2.0).density(0.0) == math.inf


def test_uniform_quantile_is_linear():
    d = weights.uniform(2.0)
    for u in (0.0, 0.25, 0.5, 1.0):
        assert d.quantile(u) == pytest.approx(2.0 * u, abs=1e-15)
    assert d.density(1.0) == pytest.approx(0.5)
    assert d.density(2.5) == 0.0


@pytest.mark.parametrize("name", sorted(KINDS))
def test_quantile_cdf_round_trip(name):
    d = KINDS[name]
    for u in (0.001, 0.1, 0.5, 0.9, 0.999):
        x = d.quantile(u)
        assert d.cdf(x) == pytest.approx(u, abs=1e-9)


@given(u=st.floats(min_value=1e-6, max_value=1 - 1e-6))
def test_quantile_monotone_under_cdf(u):
    d = KINDS["power_steep"]
    x = d.quantile(u)
    assert d.cdf(x) == pytest.approx(u, abs=1e-8)


def test_from_spec_round_trip():
    for d in KINDS.values():
        kind, params = d.spec()
        again = weights.from_spec(kind, params)
        assert again.spec() == (kind, params)
        for u in (0.2, 0.8):
            assert again.quantile(u) == pytest.approx(d.quantile(u), rel=1e-12)


def test_from_spec_rejects_unknown_kind():
    with pytest.raises(weights.WeightModelError):
        weights.from_spec("cauchy", (1.0,))


def test_from_spec_rejects_bad_params():
    with pytest.raises(weights.WeightModelError):
        weights.exponential(-1.0)
    with pytest.raises(weights.WeightModelError):
        weights.uniform(0.0)
    with pytest.raises(weights.WeightModelError):
        weights.power_exponential(0.0)


def test_user_table_interpolates():
    # piecewise-linear quantile through (0,0) (0.4,1) (1,3)
    d = weights.user_table((0.0, 0.4, 1.0), (0.0, 1.0, 3.0))
    assert d.quantile(0.2) == pytest.approx(0.5)
    assert d.quantile(0.7) == pytest.approx(2.0)
    assert d.cdf(0.5) == pytest.approx(0.2)
    assert d.cdf(2.0) == pytest.approx(0.7)
    assert d.support_lo == 0.0
    assert d.support_hi == 3.0


def test_user_table_validation():
    with pytest.raises(weights.WeightModelError):
        weights.user_table((0.0, 0.5, 0.9), (0.0, 1.0, 2.0))   # levels stop short of 1
    with pytest.raises(weights.WeightModelError):
        weights.user_table((0.0, 0.6, 0.4, 1.0), (0.0, 1.0, 2.0, 3.0))
    with pytest.raises(weights.WeightModelError):
        weights.user_table((0.0, 0.5, 1.0), (0.0, 2.0, 1.0))   # values not sorted


def test_save_load_table_round_trip(tmp_path):
    d = weights.exponential(1.0)
    path = tmp_path / "table.tsv"
    weights.save_table(d, path, n_rows=513)
    back = weights.load_table(path)
    for u in (0.05, 0.3, 0.6, 0.95):
        assert back.quantile(u) == pytest.approx(d.quantile(u), rel=5e-3)


def test_sample_is_inverse_cdf_of_uniforms():
    # the sampling contract: one uniform per variate, transformed by the
    # quantile function, so draws are reproducible from the generator alone
    d = weights.exponential(1.0)
    got = weights.sample(d, np.random.Generator(np.random.Philox(key=99)), size=64)
    u = np.random.Generator(np.random.Philox(key=99)).random(64)
    want = np.array([d.quantile(v) for v in u])
    np.testing.assert_allclose(got, want, rtol=1e-12)


def test_sample_deterministic_and_positive():
    d = KINDS["power_flat"]
    a = weights.sample(d, np.random.Generator(np.random.Philox(key=7)), size=200)
    b = weights.sample(d, np.random.Generator(np.random.Philox(key=7)), size=200)
    np.testing.assert_array_equal(a, b)
    assert (a > 0).all()


def test_sample_mean_matches_exponential():
    d = weights.exponential(2.0)
    x = weights.sample(d, np.random.Generator(np.random.Philox(key=3)), size=20000)
    # mean 1/2, sd 1/2: 5 sigma of the sample mean is about 0.018
    assert abs(x.mean() - 0.5) < 0.018


def test_evaluate_rejects_negative_argument():
    with pytest.raises(weights.WeightModelError):
        weights.evaluate(KINDS["exponential"], -0.5)
