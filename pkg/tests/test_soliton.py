import math

import numpy as np
import pytest

from nlsbranch.errors import DomainError
from nlsbranch.grid import RadialGrid, inner
from nlsbranch.model import NonlinearityModel
from nlsbranch.soliton import (SolitonBranch, Stability, domega_profile,
                               one_dim_amplitude, profile_residual,
                               shoot_amplitude, solve_profile,
                               stability_classification, tail_slope)
from nlsbranch.spectral import build_operators


def test_one_dim_closed_form(cubic1):
    g = RadialGrid.from_radius(1, 20.0, 20000)
    prof = solve_profile(cubic1, 1.0, g)
    exact = math.sqrt(2) / np.cosh(g.r)
    assert np.max(np.abs(prof.phi - exact)) <= 1e-6
    assert prof.phi0 == pytest.approx(math.sqrt(2), abs=1e-6)


def test_one_dim_amplitude_formula(cubic1):
    # G(a) = omega a^2 / 2 gives a = sqrt(2 omega) for the cubic
    for om in (0.5, 1.0, 3.0):
        assert one_dim_amplitude(cubic1, om) == pytest.approx(math.sqrt(2 * om))


def test_shooting_amplitude_3d(cubic3):
    assert shoot_amplitude(cubic3, 1.0, 20.0)[0] == pytest.approx(4.3374, abs=2e-4)


def test_profile_is_positive_decreasing(branch3):
    phi = branch3.profile(1.0).phi
    assert np.all(phi > 0)
    assert np.all(np.diff(phi) < 0)


def test_profile_residual_small(branch3, cubic3, grid3):
    phi = branch3.profile(1.0).phi
    assert np.max(np.abs(profile_residual(cubic3, 1.0, grid3, phi))) < 1e-8


def test_tail_decays_like_exp(branch3):
    # the K_{1/2} tail is r^{-1} e^{-r}; the fitted log-slope sits near -1
    assert tail_slope(branch3.profile(1.0)) == pytest.approx(-1.0, abs=0.1)


def test_scaling_law_converges(cubic3):
    # ||phi_omega|| / ||phi_1|| = omega^(-1/4); the discrete ratio error is O(h^2)
    errs = []
    for M in (256, 512):
        b = SolitonBranch(cubic3, RadialGrid.from_radius(3, 16.0, M), (0.4, 2.5))
        n1 = math.sqrt(b.profile(1.0).mass())
        errs.append(abs(math.sqrt(b.profile(2.0).mass()) / n1 - 2 ** -0.25))
    assert errs[1] < 2e-3
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.2)


def test_kernel_relations(branch3, cubic3, grid3):
    bp = branch3.point(1.0)
    ops = build_operators(bp, cubic3, grid3)
    nphi = math.sqrt(inner(grid3, bp.phi, bp.phi))
    lm = ops.L_minus(bp.phi)
    assert math.sqrt(inner(grid3, lm, lm)) / nphi < 1e-6
    lp = ops.L_plus(bp.dphi) + bp.phi
    assert math.sqrt(inner(grid3, lp, lp)) / nphi < 1e-10


def test_domega_routes_agree(branch3):
    res = domega_profile(branch3, 1.0)
    assert res.agreement < 1e-4
    g = branch3.grid
    rel2 = math.sqrt(inner(g, res.d2phi - res.d2phi_fd, res.d2phi - res.d2phi_fd)
                     / inner(g, res.d2phi, res.d2phi))
    assert rel2 < 1e-3


def test_slope_matches_mass_derivative(branch3):
    h = 1e-3
    dm = (branch3.profile(1 + h).mass() - branch3.profile(1 - h).mass()) / (2 * h)
    assert branch3.slope(1.0) == pytest.approx(dm, rel=1e-5)


def test_stability_classes(cubic1, branch3):
    g1 = RadialGrid.from_radius(1, 20.0, 1000)
    b1 = SolitonBranch(cubic1, g1, (0.5, 2.0))
    assert stability_classification(b1, 1.0) is Stability.STABLE
    assert stability_classification(branch3, 1.0) is Stability.UNSTABLE


def test_dimension_mismatch(cubic1, grid3):
    with pytest.raises(DomainError):
        SolitonBranch(cubic1, grid3)


def test_branch_cache_consistent(branch3):
    a = branch3.profile(1.1).phi
    b = branch3.profile(1.1).phi
    assert a is b
    fresh = solve_profile(branch3.model, 1.1, branch3.grid).phi
    assert np.max(np.abs(a - fresh)) < 1e-8
