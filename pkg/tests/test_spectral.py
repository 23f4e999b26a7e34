import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nlsbranch.errors import DegenerateSlope, NoRealEigenvalue
from nlsbranch.grid import RadialGrid, inner
from nlsbranch.soliton import BranchPoint, SolitonBranch
from nlsbranch.spectral import (J, Projections, block_eigenvalues,
                                build_operators, pair, project,
                                refine_eigenpair, unstable_eigenpair)


@pytest.fixture(scope="module")
def ops3(branch3, cubic3, grid3):
    return build_operators(branch3.point(1.0), cubic3, grid3)


@pytest.fixture(scope="module")
def spec3(ops3):
    return unstable_eigenpair(ops3)


@pytest.fixture(scope="module")
def proj3(branch3, spec3, grid3):
    return Projections(grid3, branch3.point(1.0), spec3)


def test_eigen_relations(ops3, spec3):
    e = spec3.e_plus
    assert e > 0 and spec3.e_minus == -e
    assert np.max(np.abs(ops3.L_minus(spec3.Y_im) - e * spec3.Y_re)) < 1e-9
    assert np.max(np.abs(ops3.L_plus(spec3.Y_re) + e * spec3.Y_im)) < 1e-9


def test_normalization_and_sign(spec3, grid3):
    assert spec3.pre_normalization > 0
    assert 2 * inner(grid3, spec3.Y_re, spec3.Y_im) == pytest.approx(1.0, abs=1e-12)
    assert spec3.Y_re[0] > 0


def test_conjugate_is_stable_direction(ops3, spec3):
    e = spec3.e_plus
    assert np.max(np.abs(ops3.JL(spec3.Y_plus) - e * spec3.Y_plus)) < 1e-9
    assert np.max(np.abs(ops3.JL(spec3.Y_minus) + e * spec3.Y_minus)) < 1e-9


def test_block_oracle_agrees(ops3, spec3):
    ev = block_eigenvalues(ops3)
    real = ev[np.abs(ev.imag) < 1e-8]
    top = real.real.max()
    assert top == pytest.approx(spec3.e_plus, rel=1e-10)
    assert np.sum(real.real > 1e-3) == 1       # one simple unstable pair
    others = ev[np.abs(np.abs(ev.real) - spec3.e_plus) > 1e-6]
    kernel = others[np.abs(others) < 1e-3]
    cont = others[np.abs(others) >= 1e-3]
    assert len(kernel) == 2
    assert np.max(np.abs(cont.real)) < 1e-6 * spec3.e_plus
    assert np.min(np.abs(cont.imag)) >= 1.0 - 1e-3


def test_gap_to_continuum(spec3):
    assert spec3.gap_to_continuum >= 1.0 - 1e-3
    assert spec3.gap_ratio > 1e3


def test_kernel_vectors(ops3, branch3):
    bp = branch3.point(1.0)
    k_theta = 1j * bp.phi
    k_omega = bp.dphi.astype(complex)
    # JL (0, phi) = 0 and JL (dphi, 0) = (0, phi) in complex storage
    assert np.max(np.abs(ops3.JL(k_theta))) < 1e-6
    assert np.max(np.abs(ops3.JL(k_omega) - J(-1j * k_theta) * 0 - k_theta)) < 1e-9


def test_stable_branch_has_no_real_eigenvalue(cubic1):
    g = RadialGrid.from_radius(1, 20.0, 400)
    b = SolitonBranch(cubic1, g, (0.5, 2.0))
    with pytest.raises(NoRealEigenvalue):
        unstable_eigenpair(build_operators(b.point(1.0), cubic1, g))


def test_refinement_and_grid_transfer(cubic3):
    vals = []
    prev = None
    for M in (256, 512, 1024):
        g = RadialGrid.from_radius(3, 16.0, M)
        b = SolitonBranch(cubic3, g, (0.5, 2.0))
        ops = build_operators(b.point(1.0), cubic3, g)
        s = (unstable_eigenpair(ops) if prev is None else
             unstable_eigenpair(ops, guess=prev[0], guess_grid=prev[1]))
        vals.append(s.e_plus)
        prev = (s, g)
    d1, d2 = vals[0] - vals[1], vals[1] - vals[2]
    assert d1 / d2 == pytest.approx(4.0, rel=0.15)     # second order in h


def test_continuation_matches_dense(branch3, spectra3, cubic3, grid3):
    cont = spectra3.at(1.05)
    dense = unstable_eigenpair(build_operators(branch3.point(1.05), cubic3, grid3))
    assert cont.e_plus == pytest.approx(dense.e_plus, rel=1e-10)
    assert np.max(np.abs(cont.Y_re - dense.Y_re)) < 1e-8


def test_eigenvalue_scaling(spectra3):
    # e_+(omega) = omega e_+(1) up to discretization
    assert spectra3.at(1.1).e_plus / spectra3.at(1.0).e_plus == pytest.approx(1.1, rel=5e-3)


def _random_fields(seed, M, n):
    r = np.random.default_rng(seed)
    return r.standard_normal((n, M)) + 1j * r.standard_normal((n, M))


def test_projection_algebra(proj3, grid3):
    for f in _random_fields(7, grid3.M, 20):
        nf = math.sqrt(inner(grid3, f, f))
        p0, p1, pc = proj3.P0(f), proj3.P1(f), proj3.Pc(f)
        s = p0 + p1 + pc - f
        assert math.sqrt(inner(grid3, s, s)) <= 1e-10 * nf
        for P, pf in ((proj3.P0, p0), (proj3.P1, p1), (proj3.Pc, pc)):
            d = P(pf) - pf
            assert math.sqrt(inner(grid3, d, d)) <= 1e-10 * nf
        assert np.max(np.abs(proj3.orthogonality(pc))) <= 1e-10 * nf
        # the projections are mutually annihilating
        assert math.sqrt(inner(grid3, proj3.P0(p1), proj3.P0(p1))) <= 1e-10 * nf


@settings(max_examples=25, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1))
def test_projections_recover_components(proj3, a, c, bp, bm):
    f = a * proj3.k_omega + c * proj3.k_theta + bp * proj3.Yp + bm * proj3.Ym
    got = proj3.coefficients(f)
    assert np.allclose(got, (a, c, bp, bm), atol=1e-10)


def test_project_dispatch(proj3):
    f = proj3.Yp * 0.3
    assert np.allclose(project(proj3, f, "P1"), f)
    assert np.allclose(project(proj3, f, "Pc"), 0, atol=1e-12)


def test_biorthogonality(proj3, grid3):
    assert pair(grid3, proj3.Ym, J(proj3.Yp)) == pytest.approx(1.0, abs=1e-12)
    assert pair(grid3, proj3.Yp, J(proj3.Ym)) == pytest.approx(-1.0, abs=1e-12)
    for k in (proj3.k_omega, proj3.k_theta):
        assert abs(pair(grid3, k, J(proj3.Yp))) < 1e-10


def test_degenerate_slope(grid3, spec3, branch3):
    bp = branch3.point(1.0)
    flat = BranchPoint(1.0, bp.phi, bp.dphi, bp.d2phi, 0.0, 0.0)
    with pytest.raises(DegenerateSlope):
        Projections(grid3, flat, spec3)


def test_refine_is_idempotent(ops3, spec3):
    again = refine_eigenpair(ops3, spec3)
    assert again.e_plus == pytest.approx(spec3.e_plus, rel=1e-13)
