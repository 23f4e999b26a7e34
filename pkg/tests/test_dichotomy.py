import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nlsbranch.dichotomy import (Classification, ExperimentConfig, RunOutcome,
                                 Setup, branch_distance, config_hash,
                                 exit_time_bound, exit_time_check, growth_fit,
                                 prepare_data, run_experiment, sweep)
from nlsbranch.errors import DomainError, UnachievableAlpha, WindowTooShort
from nlsbranch.grid import h1_l1_norm
from nlsbranch.modulation import decompose

CUBIC3 = {"N": 3, "m": 3.0}
GRID = {"R": 20.0, "M": 512}


def _cfg(**kw):
    base = dict(model=CUBIC3, grid=GRID, T_max=5.0, dt=2e-3, stride=5)
    base.update(kw)
    return ExperimentConfig(**base)


@pytest.fixture(scope="module")
def setup3():
    return Setup(_cfg())


def test_zero_perturbation_rejected(setup3):
    with pytest.raises(UnachievableAlpha):
        prepare_data(_cfg(), setup3)


def test_alpha_must_be_below_alpha0(setup3):
    with pytest.raises(UnachievableAlpha):
        prepare_data(_cfg(c_plus=1.0), setup3)


def test_alpha_rescaling(setup3):
    cfg = _cfg(c_plus=1.0, c_r=0.5, alpha=5e-4)
    state, alpha = prepare_data(cfg, setup3)
    assert alpha == pytest.approx(5e-4, rel=1e-2)
    phi = setup3.branch.point(1.0).phi
    assert h1_l1_norm(setup3.grid, state.u - phi) == pytest.approx(alpha, rel=1e-12)


def test_unstable_data_decomposes(setup3):
    cfg = _cfg(c_plus=1e-4)
    state, _ = prepare_data(cfg, setup3)
    ms = decompose(state.u, (0.0, 1.0), setup3.branch, setup3.spectra)
    assert ms.b_plus == pytest.approx(1e-4, abs=1e-9)
    assert np.max(np.abs(ms.eta)) < 1e-9


def test_radiation_only_has_no_discrete_part(setup3):
    state, _ = prepare_data(_cfg(c_r=1e-4), setup3)
    ms = decompose(state.u, (0.0, 1.0), setup3.branch, setup3.spectra)
    assert abs(ms.b_plus) < 1e-8 and abs(ms.b_minus) < 1e-8


def test_config_validation():
    with pytest.raises(DomainError):
        _cfg(omega0=3.0)
    with pytest.raises(DomainError):
        _cfg(omega0=0.505)             # within alpha0 of the interval end
    with pytest.raises(DomainError):
        _cfg(dt=0.0)


def test_config_roundtrip_and_hash():
    cfg = _cfg(c_plus=1e-4, name="x")
    d = cfg.to_dict()
    again = ExperimentConfig.from_dict(d)
    assert again == cfg and again.hash() == cfg.hash()
    shuffled = dict(reversed(list(d.items())))
    assert config_hash(shuffled) == cfg.hash()
    assert _cfg(c_plus=2e-4).hash() != cfg.hash()


# --- fits and bounds ---------------------------------------------------------------

@settings(max_examples=20, deadline=None)
@given(st.floats(0.5, 10.0))
def test_growth_fit_exact_exponential(e2):
    t = np.linspace(0, 3.0 / e2, 40)
    assert growth_fit(t, 1e-6 * np.exp(e2 * t)) == pytest.approx(e2, rel=1e-10)


def test_growth_fit_rejects_noise(rng):
    t = np.linspace(0, 1, 50)
    with pytest.raises(WindowTooShort):
        growth_fit(t, 1e-6 * (1 + 0.1 * rng.standard_normal(50)))
    with pytest.raises(WindowTooShort):
        growth_fit(t[:2], [1.0, 100.0])
    with pytest.raises(WindowTooShort):
        growth_fit(t, np.exp(-5 * t))


def test_exit_bound_formula():
    e2 = 5.5
    assert exit_time_bound(0.0, 1e-2, 1e-2, e2) == pytest.approx(5 / (4 * e2) * math.log(3))
    b = [exit_time_bound(0.0, a, 1e-2, e2) for a in (1e-3, 1e-4, 1e-5)]
    assert np.allclose(np.diff(b), 5 / (4 * e2) * math.log(10))


def test_exit_check_needs_escape():
    out = RunOutcome(Classification.CONVERGED, 1e-3, 1e-2, 5.5)
    with pytest.raises(DomainError):
        exit_time_check(out)


def test_branch_distance_of_member(setup3):
    phi = setup3.branch.point(1.3).phi
    d, om, th = branch_distance(phi * np.exp(0.5j), setup3.branch, 10.0)
    assert d < 1e-6
    assert om == pytest.approx(1.3, abs=1e-4)
    assert th == pytest.approx(0.5, abs=1e-10)


# --- runs --------------------------------------------------------------------------

@pytest.fixture(scope="module")
def escape_runs(setup3):
    return {s: run_experiment(_cfg(c_plus=s * 1e-4), setup3) for s in (1, -1)}


def test_escape_both_signs(escape_runs):
    for out in escape_runs.values():
        assert out.classification is Classification.ESCAPED
        assert out.T_crit < out.T_exit <= 5.0
        assert 0.8 * out.e2 <= out.growth_exponent <= 1.2 * out.e2
        assert out.distance_exit >= 2 * out.alpha0
        chk = exit_time_check(out)
        assert chk["satisfied"], chk


def test_escape_b_plus_monotone(escape_runs):
    b = np.abs([m.b_plus for m in escape_runs[1].series])
    assert np.all(np.diff(b) > 0)
    # b_+(T_exit) comparable to 3 alpha0
    assert 1.5 * 1e-2 <= b[-1] <= 6 * 1e-2


def test_exit_time_grows_with_log_inverse_size(setup3, escape_runs):
    small = run_experiment(_cfg(c_plus=1e-5), setup3)
    assert small.classification is Classification.ESCAPED
    gap = small.T_exit - escape_runs[1].T_exit
    assert gap == pytest.approx(math.log(10) / small.e2, rel=0.3)


def test_stable_control_converges():
    cfg = ExperimentConfig(model={"N": 1, "m": 3.0},
                           grid={"R": 40.0, "M": 800}, c_r=1e-3, dt=5e-3,
                           T_max=10.0, stride=20, sponge=5.0, R0=10.0)
    out = run_experiment(cfg)
    assert math.isnan(out.e_plus0)
    assert all(m.b_plus == 0 and m.b_minus == 0 for m in out.series)
    assert out.classification is Classification.CONVERGED
    assert out.mu_hat < 0


def test_summary_is_json_ready(escape_runs):
    import json
    s = escape_runs[1].summary()
    assert s["classification"] == "Escaped"
    json.dumps(s)


def test_empty_sweep():
    assert sweep([]) == []


def test_sweep_captures_row_errors():
    good = _cfg(c_plus=1e-4, T_max=3.0)
    bad = _cfg().to_dict()          # alpha = 0
    rows = sweep([good, bad])
    assert rows[0]["classification"] == "Escaped" and rows[0]["error"] is None
    assert rows[1]["classification"] is None
    assert rows[1]["error"].startswith("UnachievableAlpha")
    assert rows[0]["config_hash"] == good.hash()


def test_run_is_deterministic(setup3):
    a = run_experiment(_cfg(c_plus=1e-4, T_max=1.0), setup3)
    b = run_experiment(_cfg(c_plus=1e-4, T_max=1.0), setup3)
    assert [m.b_plus for m in a.series] == [m.b_plus for m in b.series]
