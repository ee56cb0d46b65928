"""Scalar functionals of a density and the closed-form constants around them.

Throughout, ``A = ||rho||_m^m`` and ``X = ||K_{s/2} * rho||_{p'}^{p'}`` (the
latter integrated over the whole space, see :mod:`rieszflow.riesz`).
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError, ParameterError, RegimeError
from .grid import ModelParams, RadialDensity, lp_norm, unit_ball_volume
from .riesz import interaction_norm, potential_terms, riesz_constant, _check_half

NEG_INF = float("-inf")


def _json_float(x):
    if x is None:
        return None
    if isinstance(x, float) and math.isinf(x):
        return "-inf" if x < 0 else "inf"
    return float(x)


@dataclass(frozen=True)
class EnergyBreakdown:
    """Functional values for one density.

    ``lambda_star`` is ``None`` at m = m_c (no optimal dilation) and for the
    zero density; ``hls_quotient`` is ``None`` when m <= (p*)'.
    """

    norm_m_m: float
    interaction: float
    free_energy: float
    hls_quotient: Optional[float]
    lambda_value: Optional[float]
    lambda_star: Optional[float]
    kappa: Optional[float]

    def to_dict(self) -> dict:
        return {f.name: _json_float(getattr(self, f.name)) for f in dataclasses.fields(self)}


def kappa(params: ModelParams) -> Optional[float]:
    """Constant with ``F(rho^{lambda_*}) = kappa * Lambda(rho)`` (m != m_c)."""
    if params.is_critical() or params.chi == 0:
        return None
    m, mc, pc, ps, chi = params.m, params.m_c, params.p_conj, params.p_star, params.chi
    return ((chi / pc) ** ((m - 1) / (m - mc)) * (pc / ps) ** ((mc - 1) / (m - mc))
            * (mc - m) / (m - 1))


def lambda_functional(params: ModelParams, A: float, X: float) -> Optional[float]:
    """``Lambda = (X^{m-1} / A^{m_c-1})^{1/(m-m_c)}``."""
    if params.is_critical():
        return None
    if A == 0.0:
        return 0.0
    m, mc = params.m, params.m_c
    return math.exp(((m - 1) * math.log(X) - (mc - 1) * math.log(A)) / (m - mc))


def _lambda_star(params: ModelParams, A: float, X: float) -> Optional[float]:
    if params.is_critical() or A == 0.0 or X == 0.0 or params.chi == 0:
        return None
    ratio = params.chi * X / (params.p_star * A)
    return ratio ** (1.0 / (params.N * (params.m - params.m_c)))


def quotient(params: ModelParams, X: float, mass: float, A: float) -> Optional[float]:
    """HLS quotient from its ingredients (``None`` outside m > (p*)')."""
    th = params.theta0
    if not 0 < th < 1:
        return None
    if X == 0.0:
        return 0.0
    pc, m = params.p_conj, params.m
    norm_m = A ** (1.0 / m)
    return X / (mass ** (pc * th) * norm_m ** (pc * (1 - th)))


def breakdown_from_norms(params: ModelParams, A: float, X: float, mass: float) -> EnergyBreakdown:
    """Assemble an :class:`EnergyBreakdown` from ``A``, ``X`` and the mass."""
    pc = params.p_conj
    inter = X / pc
    fe = A / (params.m - 1) - params.chi * inter
    if mass == 0.0:
        out = EnergyBreakdown(0.0, 0.0, 0.0, 0.0, 0.0, None, kappa(params))
    else:
        out = EnergyBreakdown(
            norm_m_m=A, interaction=inter, free_energy=fe,
            hls_quotient=quotient(params, X, mass, A),
            lambda_value=lambda_functional(params, A, X),
            lambda_star=_lambda_star(params, A, X),
            kappa=kappa(params))
    return out


def free_energy(params: ModelParams, op_half, rho: RadialDensity) -> EnergyBreakdown:
    """All functional values of ``rho``.

    ``F = ||rho||_m^m/(m-1) - (chi/p') ||K_{s/2} * rho||_{p'}^{p'}``.
    """
    A = float(np.dot(rho.values ** params.m, rho.grid.vol))
    X = interaction_norm(params, op_half, rho)
    return breakdown_from_norms(params, A, X, rho.mass)


def free_energy_limit(params: ModelParams, rho: RadialDensity) -> float:
    """Limit functional ``||rho||_m^m/(m-1) - (chi/p') ||rho||_{p'}^{p'}``."""
    m, pc = params.m, params.p_conj
    return lp_norm(rho, m) ** m / (m - 1) - params.chi / pc * lp_norm(rho, pc) ** pc


def dilation_profile(params: ModelParams, A: float, X: float, lam):
    """``f(lam) = F(rho^lam)`` from the two-term scaling law."""
    lam = np.asarray(lam, dtype=float)
    N, m, mc = params.N, params.m, params.m_c
    return lam ** (N * (m - 1)) * A / (m - 1) - lam ** (N * (mc - 1)) * params.chi * X / params.p_conj


def optimal_dilation(params: ModelParams, breakdown: EnergyBreakdown) -> float:
    """Minimizer of ``lam -> F(rho^lam)``: ``(chi X/(p* A))^{1/(N(m-m_c))}``."""
    if params.is_critical():
        raise RegimeError("no optimal dilation at m = m_c")
    if breakdown.norm_m_m == 0.0:
        raise DomainError("optimal dilation undefined for the zero density")
    if params.chi == 0:
        raise DomainError("optimal dilation needs chi > 0")
    return _lambda_star(params, breakdown.norm_m_m, params.p_conj * breakdown.interaction)


def optimal_dilation_limit(params: ModelParams, rho: RadialDensity) -> float:
    """Same for the limit functional: ``(chi ||rho||_{p'}^{p'}/(p A))^{1/(N(m-p'))}``."""
    m, pc = params.m, params.p_conj
    if math.isclose(m, pc, rel_tol=1e-12):
        raise RegimeError("no optimal dilation at m = p'")
    A = lp_norm(rho, m) ** m
    if A == 0.0:
        raise DomainError("optimal dilation undefined for the zero density")
    B = lp_norm(rho, pc) ** pc
    return (params.chi * B / (params.p * A)) ** (1.0 / (params.N * (m - pc)))


def kappa_limit(params: ModelParams) -> float:
    """Constant with ``F_0(rho^{lambda_*}) = kappa_0 * Lambda_0(rho)`` (m != p')."""
    m, p, pc, chi = params.m, params.p, params.p_conj, params.chi
    return (chi / p) ** ((pc - 1) / (m - pc)) * (chi / pc) * (pc - m) / (m - 1)


def lambda_limit(params: ModelParams, rho: RadialDensity) -> float:
    """``Lambda_0 = ||rho||_{p'}^{p'(m-1)/(m-p')} / ||rho||_m^{m(p'-1)/(m-p')}``."""
    m, pc = params.m, params.p_conj
    B = lp_norm(rho, pc) ** pc
    A = lp_norm(rho, m) ** m
    if A == 0.0:
        return 0.0
    return math.exp(((m - 1) * math.log(B) - (pc - 1) * math.log(A)) / (m - pc))


# ---------------------------------------------------------------------------
# explicit bounds


def hls_upper_bound(params: ModelParams) -> float:
    """Explicit upper bound ``H_s`` for the constant of
    ``||K_{s/2} * h||_{p'} <= H ||h||_{(p*)'}``."""
    N, s, p = params.N, params.s, params.p
    ps_c = params.p_star_conj
    w = unit_ball_volume(N)
    g = (N - s) / N
    bracket = (g / (1 - 1 / p)) ** g + (g / (1 - 1 / ps_c)) ** g
    return riesz_constant(N, s / 2) * (N / s) * w ** g / (p * ps_c) * bracket


def linf_bound_constants(params: ModelParams, q: float, r: float):
    """Constants of ``||K_{s/2} * h||_inf <= alpha ||h||_q + beta ||h||_r``.

    Requires ``1 <= q < r <= inf`` and ``s q < N < s r``.
    """
    N, s = params.N, params.s
    problems = []
    if not (1 <= q < r):
        problems.append("need 1 <= q < r <= inf")
    if not s * q < N:
        problems.append("need s*q < N")
    if not N < s * r:
        problems.append("need N < s*r")
    if problems:
        raise DomainError(problems)
    c = riesz_constant(N, s / 2)
    area = N * unit_ball_volume(N)
    if q == 1:
        alpha = c
    else:
        qc = q / (q - 1)
        alpha = c * (area / ((N - s) * qc - N)) ** (1 / qc)
    rc = 1.0 if math.isinf(r) else r / (r - 1)
    beta = c * (area / (N - (N - s) * rc)) ** (1 / rc)
    return alpha, beta


# ---------------------------------------------------------------------------
# Euler-Lagrange constants


@dataclass(frozen=True)
class ELConstants:
    A_s: float
    C_s: float
    D_s: Optional[float] = None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _norms(params, op_half, rho):
    _check_half(params, op_half)
    _, X, _ = potential_terms(op_half, rho.values, params.p_conj)
    A = float(np.dot(rho.values ** params.m, rho.grid.vol))
    return A, X


def el_constants_from_norms(params: ModelParams, A: float, X: float, mass: float) -> ELConstants:
    ratio = params.m_conj / params.p_star
    return ELConstants(A_s=ratio * X / A, C_s=(1 - ratio) * X / mass)


def el_constants_extremal(params: ModelParams, h: RadialDensity, op_half) -> ELConstants:
    """Constants of ``A_s h^{m-1} = (K(h) - C_s)_+`` for an extremal ``h``."""
    if not params.m > params.p_star_conj:
        raise RegimeError("extremal constants need m > (p*)'")
    if h.mass == 0.0:
        raise DomainError("extremal constants undefined for the zero density")
    A, X = _norms(params, op_half, h)
    return el_constants_from_norms(params, A, X, h.mass)


class ELConsistencyWarning(UserWarning):
    """The equivalent multiplier expressions disagree (identity not satisfied)."""


def multiplier_forms(params: ModelParams, A: float, X: float, mass: float):
    """Three expressions of the multiplier ``D_s``.

    The third one (through the free energy) is ``None`` at m = m_c.
    """
    coef = (params.p_star - params.m_conj) / mass
    d1 = coef * A
    d2 = coef * params.chi / params.p_star * X
    d3 = None
    if not params.is_critical():
        fe = A / (params.m - 1) - params.chi * X / params.p_conj
        m, mc = params.m, params.m_c
        d3 = coef * (mc - 1) * (m - 1) / (mc - m) * fe
    return d1, d2, d3


def el_constant_minimizer(params: ModelParams, rho: RadialDensity, op_half,
                          rtol: float = 1e-3) -> float:
    """Multiplier ``D_s = ((p* - m')/M) ||rho||_m^m`` of a minimizer.

    A :class:`ELConsistencyWarning` is issued when the second expression
    ``((p* - m')/M)(chi/p*) X`` disagrees by more than ``rtol``.
    """
    if params.M == 0 or rho.mass == 0.0:
        raise DomainError("multiplier undefined for zero mass")
    if params.m < params.m_c and not params.is_critical():
        raise RegimeError("multiplier formula needs m >= m_c")
    A, X = _norms(params, op_half, rho)
    d1, d2, _ = multiplier_forms(params, A, X, params.M)
    if abs(d1 - d2) > rtol * abs(d1):
        warnings.warn(f"multiplier expressions disagree: {d1:.6g} vs {d2:.6g}",
                      ELConsistencyWarning, stacklevel=2)
    return d1


# ---------------------------------------------------------------------------
# critical mass and regimes


def critical_mass(params: ModelParams, Hstar: float) -> float:
    """``M_c = (p*/(chi H*))^{N/(s p')}``."""
    if not Hstar > 0:
        raise ParameterError("H* must be > 0")
    if params.chi == 0:
        raise DomainError("critical mass needs chi > 0")
    return (params.p_star / (params.chi * Hstar)) ** (params.N / (params.s * params.p_conj))


def fair_competition_bounds(params: ModelParams, rho: RadialDensity, op_half, Hstar: float):
    """Two-sided bound ``(chi/p') H* (M_c^e -+ M^e) ||rho||_{m_c}^{m_c}``, e = p's/N."""
    if not params.is_critical():
        raise RegimeError("fair-competition bounds need m = m_c")
    Mc = critical_mass(params, Hstar)
    e = params.p_conj * params.s / params.N
    mass = rho.mass
    norm = float(np.dot(rho.values ** params.m_c, rho.grid.vol))
    pre = params.chi / params.p_conj * Hstar * norm
    lower = pre * (Mc ** e - mass ** e)
    upper = pre * (Mc ** e + mass ** e)
    return lower, upper


@dataclass(frozen=True)
class RegimeReport:
    regime: str
    infimum: Optional[float]
    critical_mass: Optional[float] = None
    infimum_sign: Optional[int] = None

    def to_dict(self) -> dict:
        return {"regime": self.regime, "infimum": _json_float(self.infimum),
                "critical_mass": self.critical_mass, "infimum_sign": self.infimum_sign}


def classify_regime(params: ModelParams, Hstar: Optional[float] = None) -> RegimeReport:
    """Infimum of the free energy over densities of mass M, by regime.

    ``m < m_c``: -inf. ``m = m_c``: 0 if M <= M_c else -inf. ``m > m_c``:
    finite and negative; the value itself is left to the solver
    (``infimum`` is ``None``, ``infimum_sign`` is -1).
    """
    reg = params.regime()
    if reg == "aggregation":
        return RegimeReport("aggregation", NEG_INF)
    if reg == "diffusion":
        return RegimeReport("diffusion", None, infimum_sign=-1)
    if Hstar is None:
        raise ParameterError("H* is required in the fair-competition regime")
    Mc = critical_mass(params, Hstar)
    # M = M_c up to rounding counts as critical
    inf = 0.0 if params.M <= Mc * (1 + 1e-12) else NEG_INF
    return RegimeReport("fair", inf, critical_mass=Mc, infimum_sign=0 if inf == 0.0 else None)
