"""Fixed-point solvers for stationary states and HLS extremals.

Two iterations live here:

* :func:`solve_el` looks for a density of mass ``M`` with
  ``(m/(m-1)) rho^{m-1} = (chi K(rho) - D)_+``, where the multiplier ``D``
  is re-chosen at every step so that the update has the right mass.
* :func:`hls_extremal` looks for a maximizer of the HLS quotient among
  densities with ``||h||_1 = ||h||_m = 1``.  It iterates on the potential
  and recovers the profile through a one-parameter cut-off chosen so that
  both norms agree.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .energy import (EnergyBreakdown, breakdown_from_norms, critical_mass,
                     dilation_profile, el_constants_from_norms, quotient)
from .errors import (ConfigurationError, DivergenceError, ParameterError,
                     RegimeError, StabilityError)
from .grid import (ModelParams, RadialDensity, RadialGrid, ZERO_CLAMP, dilate,
                   make_profile, rearrange)
from .riesz import RieszOperator, _check_half, potential_terms

INIT_KINDS = ("indicator", "gaussian", "bump")


@dataclass(frozen=True)
class SolverConfig:
    """Knobs of the damped fixed-point iterations.

    Parameters
    ----------
    tau : float
        Relaxation weight in (0, 1].
    max_iters : int
    fp_tol : float
        Sup-norm tolerance on the Euler-Lagrange residual.
    bisect_tol : float
        Relative mass tolerance for the multiplier search.
    init : str
        Initial profile kind (``indicator``, ``gaussian`` or ``bump``).
    """

    tau: float = 0.5
    max_iters: int = 5000
    fp_tol: float = 1e-9
    bisect_tol: float = 1e-12
    init: str = "indicator"

    def violations(self) -> list[str]:
        out = []
        if not 0 < self.tau <= 1:
            out.append("tau must be in (0, 1]")
        if not (isinstance(self.max_iters, int) and self.max_iters > 0):
            out.append("max_iters must be a positive integer")
        if not self.fp_tol > 0:
            out.append("fp_tol must be > 0")
        if not self.bisect_tol > 0:
            out.append("bisect_tol must be > 0")
        if self.init not in INIT_KINDS:
            out.append(f"init must be one of {', '.join(INIT_KINDS)}")
        return out

    def __post_init__(self):
        v = self.violations()
        if v:
            raise ParameterError(v)


@dataclass
class SteadyReport:
    """Outcome of a fixed-point solve.

    ``label`` is ``minimizer`` (m > m_c), ``critical_mass_state`` (m = m_c),
    ``saddle_wrt_dilations`` ((p*)' < m < m_c) or ``hls_extremal``.
    ``extras`` carries solver-specific diagnostics (norms, constants,
    dilation checks). ``operator`` is set only when the profile lives on a
    different grid than the operator passed in (saddle regime).
    """

    rho: RadialDensity
    el_residual: float
    multiplier: float
    iterations: int
    energy: EnergyBreakdown
    identity_defect: float
    support_radius: float
    monotone: bool
    converged: bool
    label: str
    history: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)
    operator: Optional[RieszOperator] = field(default=None, repr=False)

    @property
    def status(self) -> str:
        return "converged" if self.converged else "diverged"

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "label": self.label,
            "el_residual": self.el_residual,
            "multiplier": self.multiplier,
            "iterations": self.iterations,
            "energy": self.energy.to_dict(),
            "identity_defect": self.identity_defect,
            "support_radius": self.support_radius,
            "monotone": self.monotone,
            "converged": self.converged,
            "mass": self.rho.mass,
            "grid": self.rho.grid.descriptor(),
            "extras": self.extras,
            "operator_hash": None if self.operator is None else self.operator.content_hash,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def default_init(params: ModelParams, grid: RadialGrid, kind: str = "indicator") -> RadialDensity:
    """Starting profile of mass ``M``.

    The indicator has radius ``0.8 (M/omega_N)^{1/N}``, capped at half the
    domain; the smooth kinds use the same length scale.
    """
    radius = 0.8 * (params.M / params.omega) ** (1.0 / params.N)
    radius = min(radius, 0.5 * grid.R_dom)
    radius = max(radius, 4 * float(grid.h))
    if kind == "gaussian":
        return make_profile(grid, "gaussian", mass=params.M, radius=radius / 2)
    return make_profile(grid, kind, mass=params.M, radius=radius)


def _label(params: ModelParams) -> str:
    if params.is_critical():
        return "critical_mass_state"
    return "minimizer" if params.m > params.m_c else "saddle_wrt_dilations"


def _potential(params, op_half, op_linear, v):
    """``K_{s,p}(rho)`` and ``X = ||K_{s/2} * rho||_{p'}^{p'}``."""
    K, X, _ = potential_terms(op_half, v, params.p_conj)
    if op_linear is not None:
        K = op_linear.apply_values(v)
    return K, X


def _profile_from(params, chiK, D):
    m = params.m
    return ((m - 1) / m * np.maximum(chiK - D, 0.0)) ** (1.0 / (m - 1))


def _multiplier(params, chiK, vol, tol):
    """Multiplier ``D`` with ``mass(G(D)) = M`` (mass is decreasing in ``D``)."""
    M = params.M
    top = float(chiK.max())
    full = float(np.dot(_profile_from(params, chiK, 0.0), vol))
    if full < M * (1 - tol):
        raise ConfigurationError(
            f"mass {M:g} is not reachable: the largest attainable mass on this grid "
            f"is {full:.6g} (enlarge R_dom or strengthen the aggregation)")
    if top <= 0:
        raise ConfigurationError("the nonlocal potential vanishes")

    def excess(D):
        return float(np.dot(_profile_from(params, chiK, D), vol)) / M - 1.0

    if excess(0.0) <= 0:
        return 0.0
    return brentq(excess, 0.0, top, xtol=tol * top * 1e-3, rtol=4 * np.finfo(float).eps,
                  maxiter=500)


def _finalize(params, grid, v, K, X, D, it, history, converged, label, extras):
    m, chi = params.m, params.chi
    v = np.where(v > ZERO_CLAMP, v, 0.0)
    rho = RadialDensity(grid, v)
    res = float(np.max(np.abs(m / (m - 1) * v ** (m - 1) - np.maximum(chi * K - D, 0.0))))
    A = float(np.dot(v ** m, grid.vol))
    energy = breakdown_from_norms(params, A, X, rho.mass)
    defect = abs(chi * X / params.p_star - A) / A if A > 0 else math.inf
    return SteadyReport(rho=rho, el_residual=res, multiplier=float(D), iterations=it,
                        energy=energy, identity_defect=defect,
                        support_radius=rho.support_radius(), monotone=rho.is_monotone(1e-12),
                        converged=converged, label=label, history=history, extras=extras)


def _dilation_check(params, energy: EnergyBreakdown, delta=0.02):
    """Whether ``lam -> F(rho^lam)`` has a local maximum (or minimum) at 1."""
    A, X = energy.norm_m_m, energy.interaction * params.p_conj
    f = dilation_profile(params, A, X, np.array([1 - delta, 1.0, 1 + delta]))
    return {"local_max_at_1": bool(f[1] > f[0] and f[1] > f[2]),
            "local_min_at_1": bool(f[1] < f[0] and f[1] < f[2])}


def solve_el(params: ModelParams, config: Optional[SolverConfig], op_half: RieszOperator,
             op_linear: Optional[RieszOperator] = None,
             init: Optional[RadialDensity] = None) -> SteadyReport:
    """Stationary state of mass ``M`` by damped Picard iteration.

    ``rho <- (1-tau) rho + tau G(rho)`` with
    ``G(rho) = ((m-1)/m (chi K(rho) - D))_+^{1/(m-1)}`` and ``D`` fixed by
    the mass.  ``tau`` is halved whenever the iteration regresses (free
    energy increase for m >= m_c, residual growth otherwise) and slowly
    restored after ten clean steps.

    Parameters
    ----------
    params : ModelParams
        Requires m > (p*)'.
    config : SolverConfig or None
    op_half : RieszOperator
        Operator of order s/2 built with an exterior.
    op_linear : RieszOperator, optional
        Operator of order s. At p = 2 it replaces the composite potential by
        the single convolution ``K_s * rho`` (cross-check path).
    init : RadialDensity, optional
        Starting profile, rescaled to mass ``M``.

    Returns
    -------
    SteadyReport
        ``converged`` is False when ``max_iters`` is exhausted or the
        iterates stop being finite; nothing is raised in that case.

    Raises
    ------
    RegimeError
        If m <= (p*)'.
    ConfigurationError
        If the requested mass cannot be reached even with ``D = 0``.
    """
    config = config or SolverConfig()
    _check_half(params, op_half)
    if not params.m > params.p_star_conj:
        raise RegimeError("stationary solver needs m > (p*)'")
    if params.chi == 0 or params.M == 0:
        raise ConfigurationError("stationary states need chi > 0 and M > 0")
    if op_linear is not None:
        if params.p != 2 or not math.isclose(op_linear.order, params.s, rel_tol=1e-12):
            raise ParameterError("linear path needs p = 2 and an operator of order s")
        op_linear._check(RadialDensity(op_half.grid, np.zeros(op_half.grid.n)))
    label = _label(params)
    if label == "saddle_wrt_dilations" and op_linear is None:
        return _saddle_from_extremal(params, config, op_half, init)
    grid = op_half.grid
    vol = grid.vol
    rho0 = init if init is not None else default_init(params, grid, config.init)
    op_half._check(rho0)
    v = rho0.values * (params.M / rho0.mass)
    m, chi = params.m, params.chi
    watch_energy = params.m >= params.m_c

    tau_max = tau = config.tau
    clean = 0
    history = []
    prev_metric = math.inf
    K, X = _potential(params, op_half, op_linear, v)
    D = 0.0
    converged = False
    it = 0
    for it in range(1, config.max_iters + 1):
        chiK = chi * K
        D = _multiplier(params, chiK, vol, config.bisect_tol)
        res = float(np.max(np.abs(m / (m - 1) * v ** (m - 1) - np.maximum(chiK - D, 0.0))))
        history.append(res)
        if not math.isfinite(res):
            break
        if res < config.fp_tol:
            converged = True
            break
        if watch_energy:
            metric = float(np.dot(v ** m, vol)) / (m - 1) - chi * X / params.p_conj
            regressed = metric > prev_metric + 1e-12 * abs(prev_metric)
        else:
            metric = res
            regressed = metric > 2 * prev_metric
        if regressed:
            tau = max(tau / 2, 1e-6)
            clean = 0
        else:
            clean += 1
            if clean >= 10 and tau < tau_max:
                tau = min(tau * 1.2, tau_max)
                clean = 0
        prev_metric = metric
        v = (1 - tau) * v + tau * _profile_from(params, chiK, D)
        K, X = _potential(params, op_half, op_linear, v)
    extras = {"tau_final": tau}
    if not converged:
        warnings.warn(f"stationary solve stopped after {it} iterations "
                      f"(residual {history[-1] if history else math.nan:.3e})",
                      RuntimeWarning, stacklevel=2)
    if not np.all(np.isfinite(v)):
        raise DivergenceError("stationary iteration produced non-finite values")
    report = _finalize(params, grid, v, K, X, D, it, history, converged, label, extras)
    if label != "critical_mass_state":
        report.extras.update(_dilation_check(params, report.energy))
    return report


def _saddle_from_extremal(params, config, op_half, init):
    """Critical point for (p*)' < m < m_c as a rescaled HLS extremal.

    Plain Picard iteration is unstable along dilations here.  If
    ``A' h^{m-1} = (K(h) - C)_+`` with ``||h||_1 = 1``, then
    ``rho(x) = a h(b x)`` with ``a = M b^N`` and
    ``b^{N(m-m_c)} = chi A' M^{p'-m} (m-1)/m`` solves the stationary
    equation with ``D = chi a^{p'-1} b^{-s p'} C``.  The profile is returned
    on the grid stretched by ``1/b``; the matching operator is attached as
    ``report.operator``.
    """
    ext = hls_extremal(params, config, op_half, init=init)
    m, pc, chi, M, N = params.m, params.p_conj, params.chi, params.M, params.N
    A_own, C = ext.extras["A_solver"], ext.extras["C_solver"]
    b = (chi * A_own * M ** (pc - m) * (m - 1) / m) ** (1.0 / (N * (m - params.m_c)))
    a = M * b ** N
    op = op_half.rescaled(1.0 / b)
    v = a * ext.rho.values
    K, X, _ = potential_terms(op, v, pc)
    D = chi * a ** (pc - 1) * b ** (-params.s * pc) * C
    extras = {"method": "extremal_rescale", "stretch": 1.0 / b, "amplitude": a,
              "R_dom": op.grid.R_dom, "extremal_residual": ext.el_residual}
    rep = _finalize(params, op.grid, v, K, X, D, ext.iterations, ext.history,
                    ext.converged, "saddle_wrt_dilations", extras)
    rep.converged = ext.converged and rep.el_residual < max(config.fp_tol, 1e3 * ext.el_residual)
    rep.extras.update(_dilation_check(params, rep.energy))
    rep.extras["touches_wall"] = bool(rep.support_radius >= op.grid.R_dom)
    rep.operator = op
    return rep


# ---------------------------------------------------------------------------
# HLS extremals


def _mix(phi, K, tau):
    return (1 - tau) * phi + tau * K


def _cutoff_profile(phi, vol, m):
    """Normalized ``h = (phi - C)_+^{1/(m-1)} / S`` with ``||h||_1 = ||h||_m``.

    Returns ``(h, C, S)``; ``S`` is the L^1 norm before normalization so
    that ``S^{m-1} h^{m-1} = (phi - C)_+``.
    """
    q = 1.0 / (m - 1)

    def log_ratio(C):
        g = np.maximum(phi - C, 0.0) ** q
        return math.log(float(np.dot(g ** m, vol))) / m - math.log(float(np.dot(g, vol)))

    top = float(phi.max())
    if not top > 0:
        raise ConfigurationError("potential vanishes; cannot normalize")
    if log_ratio(0.0) > 0:
        raise ConfigurationError(
            "domain too small for the normalized extremal (||h||_m > ||h||_1 at full support); "
            "enlarge R_dom")
    C = brentq(log_ratio, 0.0, top * (1 - 1e-14), xtol=1e-16 * top, rtol=4 * np.finfo(float).eps,
               maxiter=500)
    g = np.maximum(phi - C, 0.0) ** q
    S = float(np.dot(g, vol))
    return g / S, C, S


def random_profile(grid: RadialGrid, rng: np.random.Generator, mass: float = 1.0,
                   radius: Optional[float] = None) -> RadialDensity:
    """Random radially nonincreasing profile of the given mass.

    Positive noise on a ball of random radius, rearranged.
    """
    radius = radius if radius is not None else grid.R_dom * rng.uniform(0.05, 0.5)
    inside = grid.nodes < radius
    if not inside.any():
        inside[0] = True
    v = np.where(inside, rng.uniform(0.05, 1.0, grid.n), 0.0)
    rho = rearrange(RadialDensity(grid, v))
    return rho.scaled(mass / rho.mass)


def hls_extremal(params: ModelParams, config: Optional[SolverConfig], op_half: RieszOperator,
                 init: Optional[RadialDensity] = None) -> SteadyReport:
    """Radially nonincreasing maximizer of the HLS quotient, normalized.

    The iteration runs on the potential ``phi``: the profile is the cut-off
    ``(phi - C)_+^{1/(m-1)}`` scaled to unit mass, with ``C`` chosen so that
    ``||h||_m = ||h||_1 = 1``; then ``phi <- (1-tau) phi + tau K(h)``.  At a
    fixed point ``h`` satisfies ``A' h^{m-1} = (K(h) - C)_+`` for the solver
    multipliers ``A'`` and ``C``.  The quotient (which equals ``X`` under the
    normalization) is monitored; a drop halves ``tau`` and repeats the step,
    and the search stops with :class:`StabilityError` once ``tau`` falls
    below 1e-3.

    Returns
    -------
    SteadyReport
        ``el_residual`` uses the solver multipliers; ``extras`` holds the
        closed-form constants, their relative gap to the solver multipliers,
        the residual with closed-form constants, both norms and ``H*``.
    """
    config = config or SolverConfig()
    _check_half(params, op_half)
    if not params.m > params.p_star_conj:
        raise RegimeError("HLS extremals need m > (p*)'")
    grid = op_half.grid
    vol = grid.vol
    m, pc = params.m, params.p_conj
    unit = params.replace(M=1.0)
    h0 = init if init is not None else default_init(unit, grid, config.init)
    op_half._check(h0)
    if h0.mass == 0:
        raise ParameterError("initial profile must have positive mass")
    h0 = rearrange(h0.scaled(1.0 / h0.mass))
    phi, X, _ = potential_terms(op_half, h0.values, pc)
    tau_max = tau = config.tau
    clean = 0
    history = []
    X_prev = -math.inf
    phi_prev = K_prev = phi
    converged = False
    it = 0
    while it < config.max_iters:
        it += 1
        h, C, S = _cutoff_profile(phi, vol, m)
        hr = rearrange(RadialDensity(grid, h)).values
        K, X, _ = potential_terms(op_half, hr, pc)
        if hr is not h:
            _, X_raw, _ = potential_terms(op_half, h, pc)
            if X < X_raw * (1 - 1e-12):
                raise StabilityError("rearrangement decreased the HLS quotient")
        h = hr
        res = float(np.max(np.abs(K - phi)))
        history.append(res)
        if X < X_prev * (1 - 1e-10):
            tau /= 2
            clean = 0
            if tau < 1e-3:
                raise StabilityError(
                    f"HLS quotient decreased at iteration {it}: {X_prev:.12g} -> {X:.12g}")
            phi = _mix(phi_prev, K_prev, tau)
            continue
        if res < config.fp_tol:
            converged = True
            break
        clean += 1
        if clean >= 10 and tau < tau_max:
            tau = min(1.2 * tau, tau_max)
            clean = 0
        phi_prev, K_prev, X_prev = phi, K, X
        phi = _mix(phi, K, tau)

    A_own = S ** (m - 1)
    own_res = float(np.max(np.abs(A_own * h ** (m - 1) - np.maximum(K - C, 0.0))))
    rho = RadialDensity(grid, np.where(h > ZERO_CLAMP, h, 0.0))
    A = float(np.dot(rho.values ** m, vol))
    formula = el_constants_from_norms(params, A, X, rho.mass)
    formula_res = float(np.max(np.abs(formula.A_s * h ** (m - 1)
                                      - np.maximum(K - formula.C_s, 0.0))))
    energy = breakdown_from_norms(unit, A, X, rho.mass)
    r_supp = rho.support_radius()
    extras = {
        "Hstar": X,
        "norm_1": rho.mass,
        "norm_m": A ** (1.0 / m),
        "A_solver": A_own,
        "C_solver": C,
        "A_formula": formula.A_s,
        "C_formula": formula.C_s,
        "constants_rel_gap": max(abs(A_own - formula.A_s) / formula.A_s,
                                 abs(C - formula.C_s) / formula.C_s),
        "formula_residual": formula_res,
        "quotient": quotient(params, X, rho.mass, A),
        "touches_wall": bool(r_supp >= grid.R_dom),
        "tau_final": tau,
    }
    if not converged:
        warnings.warn(f"extremal search stopped after {it} iterations", RuntimeWarning,
                      stacklevel=2)
    return SteadyReport(rho=rho, el_residual=own_res, multiplier=C, iterations=it,
                        energy=energy, identity_defect=abs(X * (params.m_conj / params.p_star)
                                                           - A_own) / A_own,
                        support_radius=r_supp, monotone=rho.is_monotone(1e-12),
                        converged=converged and own_res < config.fp_tol * 10,
                        label="hls_extremal", history=history, extras=extras)


def estimate_Hstar(params: ModelParams, config: Optional[SolverConfig], op_half: RieszOperator,
                   init: Optional[RadialDensity] = None) -> float:
    """Sharp HLS constant ``H* = ||K_{s/2} * h||_{p'}^{p'}`` at the normalized extremal.

    Raises
    ------
    DivergenceError
        If the extremal search does not converge.
    """
    rep = hls_extremal(params, config, op_half, init=init)
    if not rep.converged:
        raise DivergenceError(f"extremal search did not converge (residual {rep.el_residual:.3e})")
    return float(rep.extras["Hstar"])


def sample_quotients(params: ModelParams, op_half: RieszOperator, rng: np.random.Generator,
                     count: int = 50) -> np.ndarray:
    """HLS quotients of ``count`` random nonincreasing profiles."""
    out = np.empty(count)
    for i in range(count):
        rho = random_profile(op_half.grid, rng)
        _, X, _ = potential_terms(op_half, rho.values, params.p_conj)
        A = float(np.dot(rho.values ** params.m, rho.grid.vol))
        out[i] = quotient(params, X, rho.mass, A)
    return out


def estimate_Mc(params: ModelParams, Hstar: float) -> float:
    """Critical mass ``(p*/(chi H*))^{N/(s p')}``; needs m = m_c."""
    if not params.is_critical(rtol=1e-9):
        raise RegimeError(f"critical mass needs m = m_c = {params.m_c:.12g}, got m = {params.m}")
    return critical_mass(params, Hstar)


def critical_mass_check(params: ModelParams, op_half: RieszOperator, h: RadialDensity,
                        Mc: float, factor: float = 1.5,
                        lambdas=(1.0, 1.25, 1.5, 2.0)) -> dict:
    """Energy tests around the critical mass.

    ``free_energy_at_Mc`` should vanish relative to ``threshold`` (the
    interaction part ``(chi/p') X(M_c h)``), and the dilations of
    ``factor * M_c * h`` should all carry negative energy that keeps
    decreasing as they concentrate.
    """
    _check_half(params, op_half)
    m, pc, chi = params.m, params.p_conj, params.chi
    vol = h.grid.vol

    def energy(rho):
        _, X, _ = potential_terms(op_half, rho.values, pc)
        return float(np.dot(rho.values ** m, vol)) / (m - 1) - chi * X / pc, chi * X / pc

    unit = h.scaled(1.0 / h.mass)
    F_c, inter_c = energy(unit.scaled(Mc))
    sweep = []
    big = unit.scaled(factor * Mc)
    for lam in lambdas:
        F, _ = energy(dilate(big, lam))
        sweep.append({"lambda": float(lam), "free_energy": F})
    Fs = [row["free_energy"] for row in sweep]
    return {
        "critical_mass": Mc,
        "free_energy_at_Mc": F_c,
        "threshold": 1e-3 * inter_c,
        "passes_zero_check": abs(F_c) < 1e-3 * inter_c,
        "supercritical_factor": factor,
        "dilation_sweep": sweep,
        "supercritical_negative": all(F < 0 for F in Fs),
        "supercritical_decreasing": all(b < a for a, b in zip(Fs, Fs[1:])),
    }
