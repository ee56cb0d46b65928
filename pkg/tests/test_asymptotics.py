import json

import pytest

from conftest import operator
from rieszflow import (ModelParams, ParameterError, RadialGrid, RegimeError, fair_limit_study,
                       gamma_probe, limit_profile, sweep_s)
from rieszflow.asymptotics import limit_identity_defect, trend_check

LIMIT = ModelParams(1, 0.4, 2.0, 3.0, 2.0, 2.0)


def test_limit_profile_is_unit_indicator():
    lim = limit_profile(LIMIT, RadialGrid(1, 64, 2.0))
    assert lim.height == pytest.approx(1.0)
    assert lim.radius == pytest.approx(1.0)
    assert lim.rho.mass == pytest.approx(2.0, rel=1e-14)
    assert limit_identity_defect(LIMIT, lim) < 1e-12


def test_limit_profile_general_height():
    params = ModelParams(2, 0.3, 3.0, 2.0, 5.0, 1.5)
    lim = limit_profile(params, RadialGrid(2, 200, 3.0))
    assert lim.height == pytest.approx((5.0 / 3.0) ** 2, rel=1e-14)
    # the cell cut by the sphere smears the edge, an O(h) defect
    for n in (200, 800, 3200):
        g = RadialGrid(2, n, 3.0)
        assert limit_identity_defect(params, limit_profile(params, g)) < g.h / lim.radius


def test_limit_profile_needs_range():
    with pytest.raises(RegimeError):
        limit_profile(LIMIT.replace(m=2.0), RadialGrid(1, 64, 2.0))
    with pytest.raises(RegimeError):
        limit_profile(LIMIT.replace(chi=0.0), RadialGrid(1, 64, 2.0))


@pytest.mark.parametrize("values,decreasing,ok", [
    ([4, 3, 2, 1], True, True),
    ([4, 3, 3.05, 1], True, True),
    ([4, 5, 6, 1], True, False),
    ([1, 2, 3], False, True),
    ([3, 2, 1], False, False),
])
def test_trend_check(values, decreasing, ok):
    assert trend_check(values, decreasing, allowance=1, rel_tol=0.1)["ok"] is ok


def test_trend_check_tolerance():
    assert not trend_check([4, 3, 3.5, 1], True, allowance=1, rel_tol=0.1)["ok"]
    assert trend_check([4, 3, 3.5, 1], True, allowance=1)["ok"]


def test_s_list_validation():
    g = RadialGrid(1, 64, 2.0)
    with pytest.raises(ParameterError):
        sweep_s(LIMIT, [0.1, 0.2], None, g)
    with pytest.raises(ParameterError):
        sweep_s(LIMIT, [0.6, 0.1], None, g)
    with pytest.raises(ParameterError):
        sweep_s(LIMIT, [], None, g)


def test_sweep_regime_guards():
    g = RadialGrid(1, 64, 2.0)
    with pytest.raises(RegimeError):
        sweep_s(LIMIT.replace(m=2.0), [0.2], None, g)
    with pytest.raises(RegimeError):
        fair_limit_study(LIMIT, [0.2], None, g)


def test_small_sweep_report():
    g = RadialGrid(1, 512, 2.0)
    ops = {s: operator(1, 512, 2.0, s / 2) for s in (0.4, 0.1)}
    rep = sweep_s(LIMIT, [0.4, 0.1], None, g, operators=ops)
    assert rep.checks["all_converged"]
    l1 = rep.column("L1_err")
    assert l1[1] < l1[0]
    assert rep.to_csv().splitlines()[0] == ",".join(rep.CSV_FIELDS)
    json.loads(rep.to_json())


def test_fair_study_rows_live_on_stretched_grids():
    params = ModelParams(1, 0.4, 2.0, 2.0, 4.0, 1.0)
    ops = {s: operator(1, 512, 4.0, s / 2) for s in (0.4, 0.2)}
    rep = fair_limit_study(params, [0.4, 0.2], None, RadialGrid(1, 512, 4.0), operators=ops)
    assert rep.checks["branch"] == "concentration"
    assert rep.checks["mass_constant"]
    R = rep.column("R_dom")
    # chi = 2 p stretches by (chi/p)^(-1/(s p')) relative to chi_ref = p
    assert R[0] == pytest.approx(4.0 * 2.0 ** (-1 / 0.8), rel=1e-12)
    assert R[1] == pytest.approx(4.0 * 2.0 ** (-1 / 0.4), rel=1e-12)
    for r in rep.reports:
        assert r.el_residual < 1e-6


def test_gamma_probe_gap_shrinks():
    g = RadialGrid(1, 1024, 4.0)
    lim = limit_profile(LIMIT, g)
    ops = {s: operator(1, 1024, 4.0, s / 2) for s in (0.2, 0.05)}
    out = gamma_probe(LIMIT, lim.rho, [0.2, 0.05], operators=ops)
    assert out["decreasing"]
    assert out["rows"][0]["F_0"] == pytest.approx(-1.0, rel=1e-12)
    # frozen against the closed form 1 - X_s of the indicator
    assert out["rows"][1]["F_s"] == pytest.approx(-1.0738613, rel=2e-5)
