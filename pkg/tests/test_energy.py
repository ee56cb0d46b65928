import json
import math

import numpy as np
import pytest
from scipy.optimize import minimize_scalar
from scipy.special import gamma

from conftest import operator
from rieszflow import (DomainError, ModelParams, ParameterError, RadialDensity, RadialGrid,
                       RegimeError, classify_regime, critical_mass, free_energy,
                       free_energy_limit, hls_upper_bound, kappa, make_profile, stretch)
from rieszflow.energy import (dilation_profile, el_constants_extremal, fair_competition_bounds,
                              kappa_limit, lambda_limit, linf_bound_constants,
                              multiplier_forms, optimal_dilation, optimal_dilation_limit)


def interval_interaction(s):
    """||K_{s/2} * 1_[-1,1]||_2^2 in closed form, through the Fourier transform.

    (1/pi) int_0^inf xi^(-2s) 4 sin^2(xi)/xi^2 d xi, with
    int_0^inf x^(mu-1) sin^2 x dx = -Gamma(mu) cos(mu pi/2) / 2^(mu+1).
    """
    mu = -2 * s - 1
    return 4 / math.pi * (-gamma(mu) * math.cos(mu * math.pi / 2) / 2 ** (mu + 1))


def test_interval_interaction_tends_to_l2_norm():
    assert interval_interaction(1e-6) == pytest.approx(2.0, rel=1e-5)


@pytest.mark.parametrize("s,n,R", [(0.05, 1024, 4.0), (0.2, 1024, 4.0)])
def test_free_energy_of_indicator_matches_closed_form(s, n, R):
    # m = 3, chi = 2, p = 2: F = ||rho||_3^3 / 2 - X = 1 - X for the unit indicator
    params = ModelParams(1, s, 2.0, 3.0, 2.0, 2.0)
    op = operator(1, n, R, s / 2)
    rho = make_profile(op.grid, "indicator", mass=2.0, radius=1.0)
    assert free_energy(params, op, rho).free_energy == pytest.approx(
        1 - interval_interaction(s), rel=2e-5)


def test_indicator_energy_sits_below_limit_value():
    # why the minimizer energy cannot approach F_0(rho_0) = -1 within 5% at s = 0.05
    assert 1 - interval_interaction(0.05) == pytest.approx(-1.0738613, rel=1e-7)


def test_limit_energy_of_indicator():
    g = RadialGrid(1, 64, 2.0)
    rho = make_profile(g, "indicator", mass=2.0, radius=1.0)
    assert free_energy_limit(ModelParams(1, 0.4, 2.0, 3.0, 2.0, 2.0), rho) == pytest.approx(
        -1.0, rel=1e-14)


@pytest.mark.parametrize("model", [(0.4, 2.0, 3.0, 1.0), (0.2, 3.0, 2.5, 1.7),
                                   (0.4, 2.0, 1.1, 1.0)])
def test_kappa_gives_minimum_of_dilation_profile(model):
    s, p, m, chi = model
    params = ModelParams(1, s, p, m, chi)
    op = operator(1, 512, 4.0, s / 2)
    e = free_energy(params, op, make_profile(op.grid, "bump", radius=1.0))
    X = e.interaction * params.p_conj
    lam = optimal_dilation(params, e)
    F_star = float(dilation_profile(params, e.norm_m_m, X, lam))
    assert F_star == pytest.approx(kappa(params) * e.lambda_value, rel=1e-12)
    if m > params.m_c:
        res = minimize_scalar(lambda t: float(dilation_profile(params, e.norm_m_m, X, t)),
                              bounds=(lam / 4, lam * 4), method="bounded",
                              options={"xatol": 1e-12})
        assert res.fun == pytest.approx(F_star, rel=1e-10)


def test_limit_kappa_identity_on_stretched_profile():
    params = ModelParams(1, 0.4, 2.0, 3.0, 2.0, 2.0)
    rho = make_profile(RadialGrid(1, 256, 2.0), "bump", mass=2.0, radius=1.0)
    lam = optimal_dilation_limit(params, rho)
    F = free_energy_limit(params, stretch(rho, lam))
    assert F == pytest.approx(kappa_limit(params) * lambda_limit(params, rho), rel=1e-12)
    for other in (0.9 * lam, 1.1 * lam):
        assert free_energy_limit(params, stretch(rho, other)) > F


def test_optimal_dilation_errors():
    crit = ModelParams(1, 0.4, 2.0, 1.2)
    op = operator(1, 64, 2.0, 0.2)
    e = free_energy(crit, op, make_profile(op.grid, "bump"))
    assert e.lambda_star is None and e.kappa is None
    with pytest.raises(RegimeError):
        optimal_dilation(crit, e)


def test_zero_density_breakdown_is_serializable():
    params = ModelParams(1, 0.4, 2.0, 3.0)
    op = operator(1, 64, 2.0, 0.2)
    e = free_energy(params, op, RadialDensity(op.grid, np.zeros(64)))
    assert e.free_energy == 0.0
    json.dumps(e.to_dict())


def test_hls_bound_frozen_value():
    assert hls_upper_bound(ModelParams(1, 0.4, 2.0, 3.0)) ** 2 == pytest.approx(
        3.694704566313957, rel=1e-12)


def test_critical_mass_formula():
    params = ModelParams(1, 0.4, 2.0, 1.2)
    # (p*/(chi H))^(N/(s p')) with p* = 10, s p' = 0.8
    assert critical_mass(params, 2.0) == pytest.approx(5.0 ** 1.25, rel=1e-14)
    with pytest.raises(ParameterError):
        critical_mass(params, 0.0)
    with pytest.raises(DomainError):
        critical_mass(params.replace(chi=0.0), 2.0)


def test_regime_classification():
    base = ModelParams(1, 0.4, 2.0, 3.0)
    assert classify_regime(base).infimum_sign == -1
    assert classify_regime(base.replace(m=1.1)).infimum == -math.inf
    Mc = critical_mass(base.replace(m=1.2), 2.0)
    assert classify_regime(base.replace(m=1.2, M=Mc), 2.0).infimum == 0.0
    assert classify_regime(base.replace(m=1.2, M=1.01 * Mc), 2.0).infimum == -math.inf
    with pytest.raises(ParameterError):
        classify_regime(base.replace(m=1.2))
    json.dumps(classify_regime(base.replace(m=1.1)).to_dict())


def test_fair_competition_bounds():
    params = ModelParams(1, 0.4, 2.0, 1.2)
    op = operator(1, 64, 2.0, 0.2)
    rho = make_profile(op.grid, "bump")
    lower, upper = fair_competition_bounds(params, rho, op, 2.0)
    assert lower < upper
    with pytest.raises(RegimeError):
        fair_competition_bounds(params.replace(m=3.0), rho, op, 2.0)


def test_linf_bound_constants():
    params = ModelParams(1, 0.4, 2.0, 3.0)
    alpha, beta = linf_bound_constants(params, 1.0, math.inf)
    assert alpha > 0 and beta > 0
    with pytest.raises(DomainError) as info:
        linf_bound_constants(params, 3.0, 2.0)
    assert len(info.value.violations) == 3


def test_multiplier_forms_agree_under_identity():
    params = ModelParams(1, 0.4, 2.0, 3.0)
    # with chi X = p* A the three expressions coincide
    A, M = 0.7, 1.0
    d1, d2, d3 = multiplier_forms(params, A, params.p_star * A / params.chi, M)
    assert d1 == pytest.approx(d2, rel=1e-14)
    assert d1 == pytest.approx(d3, rel=1e-14)


def test_extremal_constants_need_range():
    params = ModelParams(1, 0.4, 2.0, 1.05)
    op = operator(1, 64, 2.0, 0.2)
    with pytest.raises(RegimeError):
        el_constants_extremal(params, make_profile(op.grid, "bump"), op)
