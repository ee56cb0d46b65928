import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import operator
from rieszflow import (DomainError, GridMismatchError, ModelParams, ParameterError, RadialGrid,
                       build_operator, kurokawa_error, make_profile, nonlinear_potential,
                       riesz_constant, stretch)
from rieszflow.riesz import interaction_norm, potential_terms


def test_newton_constant():
    assert riesz_constant(3, 1.0) == pytest.approx(1 / (4 * math.pi), rel=1e-14)


def test_constant_domain():
    with pytest.raises(DomainError):
        riesz_constant(1, 0.5)
    with pytest.raises(DomainError):
        riesz_constant(2, 0.0)


def test_one_dimensional_constant_value():
    # c_{1,a} = Gamma(1/2 - a) / (sqrt(pi) 4^a Gamma(a)), evaluated at a = 0.2
    assert riesz_constant(1, 0.2) == pytest.approx(0.2786246780531, rel=1e-11)


@pytest.mark.parametrize("n", [64, 256])
def test_newton_potential_of_ball(n):
    # uniform unit ball of density 1: u = (3 - r^2)/6 inside, 1/(3r) outside
    g = RadialGrid(3, n, 2.0)
    op = build_operator(g, 1.0, exterior=False)
    rho = make_profile(g, "indicator", mass=g.omega, radius=1.0)
    e = g.edges
    G = np.where(e <= 1, 4 * np.pi * (e ** 3 / 6 - e ** 5 / 30), 4 * np.pi * (e ** 2 / 6 - 1 / 30))
    exact = np.diff(G) / g.vol
    assert np.max(np.abs(op.apply_values(rho.values) - exact)) < 1e-11 * exact.max()


def test_one_dimensional_potential_of_interval():
    g = RadialGrid(1, 256, 2.0)
    op = build_operator(g, 0.2, exterior=False)
    rho = make_profile(g, "indicator", mass=2.0, radius=1.0)
    e = g.edges
    G = riesz_constant(1, 0.2) * ((1 + e) ** 1.4 - np.abs(1 - e) ** 1.4) / (0.4 * 1.4)
    exact = np.diff(G) / g.h
    assert np.max(np.abs(op.apply_values(rho.values) - exact)) < 1e-10 * exact.max()


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_volume_weighted_matrix_is_symmetric(seed):
    op = operator(2, 48, 2.0, 0.35, False)
    rng = np.random.default_rng(seed)
    f, g = rng.uniform(0, 1, (2, 48))
    vol = op.grid.vol
    lhs = np.dot(op.apply_values(f) * g, vol)
    rhs = np.dot(f * op.apply_values(g), vol)
    assert lhs == pytest.approx(rhs, rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(lam=st.floats(0.25, 4.0))
def test_rescaled_operator_matches_homogeneity(lam):
    # K_a(lam^N rho(lam .)) = lam^(N-2a) (K_a rho)(lam .)
    op = operator(1, 128, 2.0, 0.2)
    rho = make_profile(op.grid, "bump", radius=1.0)
    out = op.rescaled(1 / lam).apply_values(stretch(rho, lam).values)
    assert np.allclose(out, lam ** (1 - 0.4) * op.apply_values(rho.values), rtol=1e-12, atol=0)


def test_exterior_captures_whole_space_norm():
    # for p' = 2, ||K_{s/2} rho||_2^2 = <rho, K_s rho> with the linear kernel
    g = RadialGrid(1, 512, 2.0)
    half = operator(1, 512, 2.0, 0.2)
    full = operator(1, 512, 2.0, 0.4, False)
    rho = make_profile(g, "bump", radius=1.0)
    _, X, _ = potential_terms(half, rho.values, 2.0)
    direct = float(np.dot(rho.values * full.apply_values(rho.values), g.vol))
    assert X == pytest.approx(direct, rel=1e-5)


def test_nonlinear_potential_and_norm():
    params = ModelParams(1, 0.2, 3.0, 2.5)
    op = operator(1, 256, 4.0, 0.1)
    rho = make_profile(op.grid, "bump", radius=1.0)
    K = nonlinear_potential(params, op, rho)
    X = interaction_norm(params, op, rho)
    assert K.values.min() > 0
    # <rho, K(rho)> = X is the Euler identity of a degree-p' homogeneous functional
    assert np.dot(rho.values * K.values, op.grid.vol) == pytest.approx(X, rel=1e-12)


def test_operator_checks():
    op = operator(1, 64, 2.0, 0.2)
    with pytest.raises(GridMismatchError):
        op.apply(make_profile(RadialGrid(1, 64, 3.0), "bump"))
    with pytest.raises(ParameterError):
        nonlinear_potential(ModelParams(1, 0.2, 2.0, 3.0), op, make_profile(op.grid, "bump"))
    with pytest.raises(ParameterError):
        potential_terms(operator(1, 64, 2.0, 0.2, False), np.ones(64), 2.0)


def test_content_hash_identifies_matrix():
    a = build_operator(RadialGrid(1, 32, 2.0), 0.2)
    b = build_operator(RadialGrid(1, 32, 2.0), 0.2)
    c = build_operator(RadialGrid(1, 32, 2.5), 0.2)
    assert a.content_hash == b.content_hash != c.content_hash
    assert len(a.content_hash) == 64


def test_disk_cache_round_trip(tmp_path, monkeypatch):
    monkeypatch.setenv("RIESZFLOW_CACHE", str(tmp_path))
    g = RadialGrid(1, 48, 2.0)
    first = build_operator(g, 0.15)
    assert list(tmp_path.glob("*.npz"))
    second = build_operator(g, 0.15)
    assert second.content_hash == first.content_hash


def test_threads_do_not_change_the_matrix():
    g = RadialGrid(2, 40, 2.0)
    assert (build_operator(g, 0.3, threads=3).content_hash
            == build_operator(g, 0.3, threads=1).content_hash)


def test_identity_approximation_error_rejects_bad_exponent():
    g = RadialGrid(1, 64, 4.0)
    with pytest.raises(ParameterError):
        kurokawa_error(make_profile(g, "indicator"), 0.1, 1.0)


def test_identity_approximation_error_frozen_value():
    g = RadialGrid(1, 1024, 4.0)
    h = make_profile(g, "indicator", mass=2.0, radius=1.0)
    assert kurokawa_error(h, 0.05, 2.0, operator(1, 1024, 4.0, 0.025)) == pytest.approx(
        0.1006115739, rel=1e-6)


def test_potential_of_monotone_profiles_is_monotone():
    rng = np.random.Generator(np.random.Philox(5))
    for N, a in ((1, 0.2), (3, 0.3)):
        op = operator(N, 64, 3.0, a)
        for _ in range(50):
            v = np.sort(rng.uniform(0, 1, 64))[::-1] * (rng.uniform(size=64) < 0.9).cumprod()
            pot = op.apply_values(v)
            assert pot.min() >= 0
            assert np.all(np.diff(pot) <= 1e-12 * pot[0])


def test_potential_is_linear():
    op = operator(1, 64, 3.0, 0.2)
    rho = make_profile(op.grid, "bump", radius=1.0)
    np.testing.assert_allclose(op.apply_values(2.5 * rho.values), 2.5 * op.apply_values(rho.values),
                               rtol=1e-14)
    assert not op.apply_values(np.zeros(64)).any()
