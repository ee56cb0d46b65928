import json

import numpy as np
import pytest

from conftest import operator
from rieszflow import (ConfigurationError, ModelParams, ParameterError, RadialGrid, RegimeError,
                       SolverConfig, estimate_Hstar, estimate_Mc, hls_extremal, solve_el)
from rieszflow.energy import el_constant_minimizer
from rieszflow.steady import critical_mass_check, default_init, random_profile, sample_quotients

M3 = ModelParams(1, 0.4, 2.0, 3.0, 1.0, 1.0)


@pytest.fixture(scope="module")
def small_state():
    return solve_el(M3, None, operator(1, 256, 4.0, 0.2))


def test_solver_config_lists_all_violations():
    with pytest.raises(ParameterError) as info:
        SolverConfig(tau=0.0, max_iters=0, fp_tol=-1.0, bisect_tol=0.0, init="square")
    assert len(info.value.violations) == 5


def test_small_grid_state(small_state):
    r = small_state
    assert r.converged and r.label == "minimizer"
    assert r.el_residual < 1e-8
    assert r.rho.mass == pytest.approx(1.0, rel=1e-10)
    assert r.monotone
    # frozen at n = 256
    assert r.support_radius == pytest.approx(1.359375, abs=2 * r.rho.grid.h)
    assert r.multiplier == pytest.approx(el_constant_minimizer(M3, r.rho, operator(1, 256, 4.0, 0.2)),
                                         rel=2e-3)


def test_report_serializes(small_state):
    d = json.loads(small_state.to_json())
    assert d["status"] == "converged"
    assert d["grid"] == {"N": 1, "n": 256, "R_dom": 4.0}


def test_state_is_stationary_for_the_linear_kernel_route():
    # at p = 2 the nonlinear potential is the linear kernel of order s
    op = operator(1, 2048, 2.0, 0.2)
    a = solve_el(M3, None, op)
    b = solve_el(M3, None, op, op_linear=operator(1, 2048, 2.0, 0.4, False))
    assert a.converged and b.converged
    assert float(np.dot(np.abs(a.rho.values - b.rho.values), op.grid.vol)) < 1e-5
    assert a.multiplier == pytest.approx(el_constant_minimizer(M3, a.rho, op), rel=1e-4)


@pytest.mark.parametrize("init", ["indicator", "gaussian", "bump"])
def test_initial_profiles_reach_the_same_state(init, small_state):
    r = solve_el(M3, SolverConfig(init=init), operator(1, 256, 4.0, 0.2))
    assert float(np.dot(np.abs(r.rho.values - small_state.rho.values), r.rho.grid.vol)) < 1e-7


def test_unreachable_mass_is_a_configuration_error():
    # below the critical mass at m = m_c nothing stationary fits on the grid
    with pytest.raises(ConfigurationError):
        solve_el(M3.replace(m=1.2), None, operator(1, 256, 4.0, 0.2))


def test_saddle_regime_state():
    params = ModelParams(1, 0.2, 2.0, 1.5, 2.8, 1.0)
    assert params.p_star_conj < params.m < params.m_c
    r = solve_el(params, None, operator(1, 1024, 8.0, 0.1))
    assert r.label == "saddle_wrt_dilations" and r.converged
    assert r.el_residual < 1e-6
    assert r.extras["local_max_at_1"]
    assert r.rho.mass == pytest.approx(1.0, rel=1e-10)
    # the profile lives on its own stretched grid, carried by r.operator
    assert r.operator.grid == r.rho.grid
    assert r.support_radius == pytest.approx(1.7138, rel=1e-3)


@pytest.fixture(scope="module")
def extremal():
    return hls_extremal(M3, SolverConfig(fp_tol=1e-11), operator(1, 1024, 4.0, 0.2))


def test_extremal_is_normalized(extremal):
    ex = extremal.extras
    assert extremal.converged and extremal.label == "hls_extremal"
    assert ex["norm_1"] == pytest.approx(1.0, abs=1e-12)
    assert ex["norm_m"] == pytest.approx(1.0, abs=1e-12)
    assert ex["Hstar"] == pytest.approx(ex["quotient"], rel=1e-12)
    assert extremal.monotone and not ex["touches_wall"]


def test_extremal_frozen_constant(extremal):
    assert extremal.extras["Hstar"] == pytest.approx(1.9432500189, rel=1e-8)


def test_extremal_constants_converge_with_grid(extremal):
    # the closed-form constants rely on a dilation identity that holds up to O(h)
    assert extremal.extras["constants_rel_gap"] < 1e-3
    coarse = hls_extremal(M3, SolverConfig(fp_tol=1e-11), operator(1, 512, 4.0, 0.2))
    assert extremal.extras["formula_residual"] < coarse.extras["formula_residual"]


def test_extremal_beats_random_profiles(extremal):
    rng = np.random.Generator(np.random.Philox(11))
    q = sample_quotients(M3, operator(1, 1024, 4.0, 0.2), rng, 20)
    assert q.max() < extremal.extras["Hstar"]


def test_extremal_needs_range():
    with pytest.raises(RegimeError):
        hls_extremal(M3.replace(m=1.05), None, operator(1, 256, 4.0, 0.2))


def test_estimate_hstar_and_mc():
    params = M3.replace(m=1.2)
    H = estimate_Hstar(params, None, operator(1, 1024, 20.0, 0.2))
    Mc = estimate_Mc(params, H)
    assert Mc == pytest.approx((10 / H) ** 1.25, rel=1e-14)
    with pytest.raises(RegimeError):
        estimate_Mc(M3, H)


def test_critical_mass_check_on_coarse_grid():
    params = M3.replace(m=1.2)
    op = operator(1, 1024, 20.0, 0.2)
    rep = hls_extremal(params, None, op)
    Mc = estimate_Mc(params, rep.extras["Hstar"])
    chk = critical_mass_check(params, op, rep.rho, Mc)
    assert chk["passes_zero_check"] and chk["supercritical_negative"]
    assert abs(chk["free_energy_at_Mc"]) < 1e-10


def test_random_profiles_are_monotone_with_unit_mass():
    rng = np.random.Generator(np.random.Philox(0))
    g = RadialGrid(2, 64, 3.0)
    for _ in range(10):
        rho = random_profile(g, rng)
        assert rho.is_monotone()
        assert rho.mass == pytest.approx(1.0, rel=1e-12)


def test_default_init_fits_the_domain():
    g = RadialGrid(1, 64, 1.0)
    rho = default_init(M3.replace(M=5.0), g)
    assert rho.support_radius() <= 0.5 + g.h
    assert rho.mass == pytest.approx(5.0)
