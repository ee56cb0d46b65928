"""Explicit finite-volume time stepping for the radial gradient flow.

The equation ``d_t rho = div(rho grad xi)`` with
``xi = (m/(m-1)) rho^{m-1} - chi K(rho)`` is discretized on the cells of a
:class:`~rieszflow.grid.RadialGrid`: velocities live on interior cell
edges, fluxes are upwinded, and the walls at ``r = 0`` and ``r = R_dom``
carry no flux.  Mass is therefore conserved up to roundoff.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ParameterError, StabilityError
from .grid import ModelParams, RadialDensity
from .riesz import RieszOperator, _check_half, potential_terms

_EPS = 1e-300


@dataclass(frozen=True)
class EvolveConfig:
    """Time-stepping controls.

    Parameters
    ----------
    cfl : float
        Fraction of the stability bound used for each step, in (0, 1).
    t_end : float
    record_every : int
        Steps between recorded diagnostics.
    steady_tol : float
        L^1 distance to the reference profile below which the run stops as
        converged.
    max_steps : int
        Hard cap on the number of steps.
    blowup_factor : float
        Sup norm growth (relative to the start) that aborts the run.
    """

    cfl: float = 0.4
    t_end: float = 1.0
    record_every: int = 50
    steady_tol: float = 1e-3
    max_steps: int = 2_000_000
    blowup_factor: float = 1e6

    def violations(self) -> list[str]:
        out = []
        if not 0 < self.cfl < 1:
            out.append("cfl must be in (0, 1)")
        if not self.t_end > 0:
            out.append("t_end must be > 0")
        if not (isinstance(self.record_every, int) and self.record_every > 0):
            out.append("record_every must be a positive integer")
        if not self.steady_tol > 0:
            out.append("steady_tol must be > 0")
        if not (isinstance(self.max_steps, int) and self.max_steps > 0):
            out.append("max_steps must be a positive integer")
        if not self.blowup_factor > 1:
            out.append("blowup_factor must be > 1")
        return out

    def __post_init__(self):
        v = self.violations()
        if v:
            raise ParameterError(v)


@dataclass
class TrajectoryRecord:
    """Diagnostics of a run, one entry per recorded step.

    ``status`` is ``completed`` (reached ``t_end``), ``steady`` (within
    ``steady_tol`` of the reference), ``blowup_suspected`` or ``max_steps``.
    """

    times: list = field(default_factory=list)
    masses: list = field(default_factory=list)
    energies: list = field(default_factory=list)
    sup_norms: list = field(default_factory=list)
    dist_ref: Optional[list] = None
    steps: int = 0
    status: str = "completed"
    converged: bool = False
    wall_contact: bool = False
    energy_increases: int = 0
    max_energy_increase: float = 0.0
    final: Optional[RadialDensity] = field(default=None, repr=False)
    snapshots: list = field(default_factory=list, repr=False)

    @property
    def mass_drift(self) -> float:
        m0 = self.masses[0]
        return max(abs(m - m0) for m in self.masses) / m0 if m0 else 0.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("t,mass,energy,sup_norm,dist_ref\n")
        dist = self.dist_ref or [None] * len(self.times)
        for row in zip(self.times, self.masses, self.energies, self.sup_norms, dist):
            t, mass, e, sup, d = row
            d_txt = "" if d is None else f"{d:.17g}"
            buf.write(f"{t:.17g},{mass:.17g},{e:.17g},{sup:.17g},{d_txt}\n")
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "converged": self.converged,
            "steps": self.steps,
            "t_final": self.times[-1] if self.times else 0.0,
            "mass_drift": self.mass_drift if self.masses else 0.0,
            "energy_increases": self.energy_increases,
            "max_energy_increase": self.max_energy_increase,
            "wall_contact": self.wall_contact,
            "final_energy": self.energies[-1] if self.energies else None,
            "final_dist_ref": self.dist_ref[-1] if self.dist_ref else None,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _state(params, op_half, v):
    """Chemical potential ``xi`` and free energy for the values ``v``."""
    m, chi = params.m, params.chi
    vol = op_half.grid.vol
    A = float(np.dot(v ** m, vol))
    if chi == 0:
        K, X = np.zeros_like(v), 0.0
    else:
        K, X, _ = potential_terms(op_half, v, params.p_conj)
    xi = m / (m - 1) * v ** (m - 1) - chi * K
    return xi, A / (m - 1) - chi * X / params.p_conj


def _edge_velocity(xi, h):
    return -(np.diff(xi)) / h


def velocity(params: ModelParams, op_half: RieszOperator, rho: RadialDensity) -> np.ndarray:
    """Velocity ``u = -d xi / dr`` on the ``n - 1`` interior cell edges."""
    _check_half(params, op_half)
    op_half._check(rho)
    xi, _ = _state(params, op_half, rho.values)
    return _edge_velocity(xi, float(rho.grid.h))


def _dt_bound(params, grid, v, u):
    """Largest step keeping the explicit scheme positive and diffusion-stable."""
    h = float(grid.h)
    m = params.m
    diff_speed = 2 * grid.N * float(np.max(m * v ** (m - 1)))
    dt_diff = h * h / (diff_speed + _EPS)
    area = grid.edge_area()[1:-1]
    out_flux = np.zeros(grid.n)
    # outgoing volumetric rate from each cell through its two interior edges
    out_flux[:-1] += np.maximum(u, 0.0) * area
    out_flux[1:] += np.maximum(-u, 0.0) * area
    rate = out_flux / grid.vol
    dt_pos = 1.0 / (float(rate.max()) + _EPS)
    return min(dt_diff, dt_pos)


def stable_dt(params: ModelParams, op_half: RieszOperator, rho: RadialDensity,
              cfl: float = 0.4) -> float:
    """``cfl`` times the stability bound at ``rho``."""
    u = velocity(params, op_half, rho)
    return cfl * _dt_bound(params, rho.grid, rho.values, u)


def _advance(grid, v, u, dt):
    area = grid.edge_area()[1:-1]
    flux = u * np.where(u > 0, v[:-1], v[1:]) * area
    div = np.zeros_like(v)
    div[:-1] += flux
    div[1:] -= flux
    return np.maximum(v - dt * div / grid.vol, 0.0)


def step(params: ModelParams, op_half: RieszOperator, rho: RadialDensity,
         dt: float) -> RadialDensity:
    """One explicit upwind step of length ``dt``.

    Raises
    ------
    StabilityError
        If ``dt`` exceeds the stability bound at ``rho``.
    """
    _check_half(params, op_half)
    op_half._check(rho)
    if not dt > 0:
        raise ParameterError("dt must be > 0")
    xi, _ = _state(params, op_half, rho.values)
    u = _edge_velocity(xi, float(rho.grid.h))
    bound = _dt_bound(params, rho.grid, rho.values, u)
    if dt > bound * (1 + 1e-12):
        raise StabilityError(f"dt={dt:.3e} exceeds the stability bound {bound:.3e}")
    return RadialDensity(rho.grid, _advance(rho.grid, rho.values, u, dt))


def _l1(a, b, vol):
    return float(np.dot(np.abs(a - b), vol))


def run(params: ModelParams, op_half: RieszOperator, rho0: RadialDensity,
        config: Optional[EvolveConfig] = None, reference: Optional[RadialDensity] = None,
        keep_snapshots: bool = False, dt: Optional[float] = None) -> TrajectoryRecord:
    """Integrate from ``rho0`` until ``t_end``, steadiness or blow-up.

    Steps are ``cfl`` times the stability bound unless a fixed ``dt`` is
    given, in which case every step is checked against the bound and a
    :class:`StabilityError` is raised as soon as ``dt`` exceeds it.

    The free energy is evaluated after every step; increases beyond
    ``1e-10 |F|`` are counted in ``energy_increases``.  The run stops with
    ``blowup_suspected`` when the sup norm exceeds ``blowup_factor`` times
    its initial value or when more than half of the mass sits in the
    innermost cell (collapse to grid scale).
    """
    config = config or EvolveConfig()
    _check_half(params, op_half)
    op_half._check(rho0)
    if dt is not None and not dt > 0:
        raise ParameterError("dt must be > 0")
    grid = rho0.grid
    if reference is not None:
        op_half._check(reference)
    vol, h = grid.vol, float(grid.h)
    v = np.array(rho0.values)
    sup0 = float(v.max()) if v.size else 0.0
    rec = TrajectoryRecord(dist_ref=[] if reference is not None else None)

    xi, F = _state(params, op_half, v)
    t = 0.0

    def record():
        rec.times.append(t)
        rec.masses.append(float(np.dot(v, vol)))
        rec.energies.append(F)
        rec.sup_norms.append(float(v.max()))
        if reference is not None:
            rec.dist_ref.append(_l1(v, reference.values, vol))
        if keep_snapshots:
            rec.snapshots.append((t, RadialDensity(grid, v)))

    record()
    mass = rec.masses[0]
    k = 0
    while t < config.t_end:
        if k >= config.max_steps:
            rec.status = "max_steps"
            break
        u = _edge_velocity(xi, h)
        bound = _dt_bound(params, grid, v, u)
        if dt is None:
            dt_k = min(config.cfl * bound, config.t_end - t)
        else:
            if dt > bound * (1 + 1e-12):
                raise StabilityError(f"fixed dt={dt:.3e} exceeds the stability bound "
                                     f"{bound:.3e} at t={t:.6g}")
            dt_k = min(dt, config.t_end - t)
        v = _advance(grid, v, u, dt_k)
        t += dt_k
        k += 1
        xi, F_new = _state(params, op_half, v)
        inc = F_new - F
        if inc > 1e-10 * abs(F):
            rec.energy_increases += 1
        rec.max_energy_increase = max(rec.max_energy_increase, inc / max(abs(F), _EPS))
        F = F_new
        if np.any(v[-max(1, grid.n // 20):] > 0):
            rec.wall_contact = True
        done = t >= config.t_end
        if reference is not None and _l1(v, reference.values, vol) < config.steady_tol:
            rec.status, rec.converged, done = "steady", True, True
        sup = float(v.max())
        if sup > config.blowup_factor * sup0 or v[0] * vol[0] > 0.5 * mass:
            rec.status, done = "blowup_suspected", True
        if done or k % config.record_every == 0:
            record()
        if done:
            break
    rec.steps = k
    rec.final = RadialDensity(grid, v)
    return rec
