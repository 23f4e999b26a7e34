import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nlsbranch.errors import DomainError, InadmissibleModel
from nlsbranch.model import (NonlinearityModel, admissibility, arithmetic_facts,
                             cond1_bound, cond2_bound, critical_exponents,
                             region_boundary, region_csv, sigma, sphere_area)


def test_sphere_areas():
    assert sphere_area(1) == pytest.approx(2.0)
    assert sphere_area(2) == pytest.approx(2 * math.pi)
    assert sphere_area(3) == pytest.approx(4 * math.pi)


def test_critical_exponents():
    ce = critical_exponents(3)
    assert ce.m_c == pytest.approx(1 + 4 / 3)
    assert ce.m_max == pytest.approx(5.0)
    assert math.isinf(critical_exponents(2).m_max)


def test_cubic_3d_is_admissible():
    rep = admissibility(3, 3, 3)
    assert rep.admissible
    assert rep.sigma_p == pytest.approx(0.75)
    assert rep.sigma_q == pytest.approx(0.75)
    assert rep.mu == pytest.approx(0.5)
    assert rep.q == pytest.approx(4.0)
    assert all(ok for _, ok in arithmetic_facts(rep))


def test_quadratic_3d_is_not():
    rep = admissibility(3, 2, 2)
    assert not rep.admissible
    assert rep.reasons


def test_cond1_bound_at_cubic():
    assert cond1_bound(3, 3.0) == pytest.approx(13 / 6)


def test_cond2_bound_closed_forms():
    # m1 >= 2 branch: 1 + (2/N)(5/3); m1 < 2 branch: the quadratic root
    assert cond2_bound(3) == pytest.approx(1 + (2 / 3) * (5 / 3), abs=1e-8)
    assert cond2_bound(4) == pytest.approx((1 + math.sqrt(16 + 24 + 1)) / 4, abs=1e-8)


def test_supercritical_rejected():
    with pytest.raises(InadmissibleModel):
        NonlinearityModel.pure_power(3, 5)
    with pytest.raises(InadmissibleModel):
        admissibility(3, 3, 5)
    with pytest.raises(InadmissibleModel):
        NonlinearityModel.pure_power(3, 1.0)


def test_low_dimension_has_no_q():
    rep = admissibility(1, 3, 3)
    assert not rep.admissible
    assert "q selection requires N >= 2" in rep.reasons
    with pytest.raises(DomainError, match="N >= 2"):
        region_boundary(1, [3.0])


def test_region_curves_monotone():
    for N in (2, 3, 4):
        hi = critical_exponents(N).m_max
        hi = hi if math.isfinite(hi) else 1 + 4 / N + 4
        m2 = np.linspace(1 + 4 / N, hi, 40)[1:-1]
        rows = region_boundary(N, m2)
        b1 = [r.bound1 for r in rows]
        assert np.all(np.diff(b1) > 0)
        assert len({r.bound2 for r in rows}) == 1


def test_region_csv_format():
    text = region_csv(3, region_boundary(3, [3.0]))
    lines = text.split("\r\n")
    assert lines[0] == "N,m2,bound1,bound2"
    assert lines[1].startswith("3,3.0,2.1666")


def test_model_roundtrip():
    m = NonlinearityModel.two_term(2, 1.0, 3.0, -0.5, 5.0)
    assert NonlinearityModel.from_dict(m.to_dict()) == m
    assert m.m1 == 3.0 and m.m2 == 5.0


def test_G_domain():
    m = NonlinearityModel.pure_power(3, 3)
    with pytest.raises(DomainError):
        m.G(-1.0)


models = st.sampled_from([NonlinearityModel.pure_power(3, 3),
                          NonlinearityModel.pure_power(3, 2.5),
                          NonlinearityModel.two_term(2, 1.0, 3.0, -0.3, 5.0),
                          NonlinearityModel.pure_power(1, 7)])


@settings(max_examples=50, deadline=None)
@given(models, st.floats(0.05, 4.0))
def test_F_is_antiderivative_of_f(model, s):
    h = 1e-5 * s
    fd = (model.F(s + h) - model.F(s - h)) / (2 * h)
    assert fd == pytest.approx(float(model.f(s)), rel=1e-6)


@settings(max_examples=50, deadline=None)
@given(models, st.floats(0.05, 3.0))
def test_dg_is_derivative_of_g(model, x):
    h = 1e-6 * x
    fd = (model.g(x + h) - model.g(x - h)) / (2 * h)
    assert fd == pytest.approx(float(model.dg(x)), rel=1e-6)
    fd2 = (model.dg(x + h) - model.dg(x - h)) / (2 * h)
    assert fd2 == pytest.approx(float(model.d2g(x)), rel=1e-5)
    # G(x) = F(x^2) / 2
    assert float(model.G(x)) == pytest.approx(0.5 * float(model.F(x * x)), rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 6), st.floats(1.05, 1.95))
def test_sigma_bounds(N, frac):
    m2 = 1 + 4 / N + frac
    ce = critical_exponents(N)
    if m2 >= ce.m_max:
        return
    s = sigma(N, m2 + 1)
    assert 0 < s < N / 2
