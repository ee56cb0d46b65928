"""Behaviour of minimizers and energies as the Riesz order s goes to 0.

For m > p' the minimizers approach the indicator
``rho_0 = (chi/p)^{1/(m-p')} 1_{B_{R_0}}`` that minimizes the limit
functional ``||rho||_m^m/(m-1) - (chi/p') ||rho||_{p'}^{p'}``.  For m = p'
the outcome depends on chi relative to p: spreading (chi < p),
concentration (chi > p) or vanishing energy (chi = p).
"""

from __future__ import annotations

import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .energy import free_energy, free_energy_limit, lambda_limit
from .errors import ParameterError, RegimeError, RieszFlowError
from .grid import ModelParams, RadialDensity, RadialGrid, lp_norm, make_profile
from .riesz import RieszOperator, build_operator, potential_terms
from .steady import SolverConfig, SteadyReport, _finalize, solve_el


@dataclass(frozen=True)
class LimitProfile:
    """Minimizer of the limit functional, sampled on a grid."""

    height: float
    radius: float
    rho: RadialDensity

    def to_dict(self) -> dict:
        return {"height": self.height, "radius": self.radius, "mass": self.rho.mass}


def limit_profile(params: ModelParams, grid: RadialGrid) -> LimitProfile:
    """Indicator of height ``(chi/p)^{1/(m-p')}`` and mass ``M``.

    Cells cut by the sphere of radius ``R_0`` receive their volume fraction,
    so the mass is exact on any grid containing the ball.

    Raises
    ------
    RegimeError
        If m <= p' or chi = 0.
    """
    if not params.m > params.p_conj:
        raise RegimeError("limit profile needs m > p'")
    if params.chi == 0:
        raise RegimeError("limit profile needs chi > 0")
    if grid.N != params.N:
        raise ParameterError("grid dimension differs from N")
    height = (params.chi / params.p) ** (1.0 / (params.m - params.p_conj))
    radius = (params.M / (params.omega * height)) ** (1.0 / params.N)
    rho = make_profile(grid, "indicator", mass=params.M, radius=radius)
    return LimitProfile(height=height, radius=radius, rho=rho)


# ---------------------------------------------------------------------------
# trend checks


def trend_check(values: Sequence[float], decreasing: bool = True, allowance: int = 1,
                rel_tol: Optional[float] = None) -> dict:
    """Monotone-trend test tolerating a few adjacent violations.

    Passes when the number of adjacent pairs going the wrong way is at most
    ``allowance``, each such step is smaller than ``rel_tol`` (relative to
    the earlier value, if given) and the last value is on the right side of
    the first.
    """
    v = [float(x) for x in values]
    sign = 1.0 if decreasing else -1.0
    bad = [i for i in range(len(v) - 1) if sign * (v[i + 1] - v[i]) > 0]
    small = all(rel_tol is None or abs(v[i + 1] - v[i]) < rel_tol * abs(v[i]) for i in bad)
    overall = len(v) < 2 or sign * (v[-1] - v[0]) < 0
    return {"ok": bool(len(bad) <= allowance and small and overall), "violations": bad}


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class SweepReport:
    """One row per s (strictly decreasing).

    Rows carry ``s, L1_err, L2_err, energy, D_s, sup_norm, support_radius,
    status`` plus ``label``, ``mass`` and ``R_dom``; the error columns are
    ``None`` when there is no limit profile (m = p').
    """

    kind: str
    params: dict
    rows: list = field(default_factory=list)
    checks: dict = field(default_factory=dict)
    limit: Optional[dict] = None
    reports: list = field(default_factory=list, repr=False)

    CSV_FIELDS = ("s", "L1_err", "L2_err", "energy", "D_s", "sup_norm",
                  "support_radius", "status")

    def column(self, name: str) -> list:
        return [row[name] for row in self.rows]

    @property
    def ok_rows(self) -> list:
        return [row for row in self.rows if row["status"] == "converged"]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(self.CSV_FIELDS) + "\n")
        for row in self.rows:
            cells = []
            for name in self.CSV_FIELDS:
                x = row[name]
                cells.append("" if x is None else (x if isinstance(x, str) else f"{x:.17g}"))
            buf.write(",".join(cells) + "\n")
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": self.params, "limit": self.limit,
                "rows": self.rows, "checks": self.checks}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _check_s_list(params: ModelParams, s_list) -> list:
    s_list = [float(s) for s in s_list]
    if not s_list:
        raise ParameterError("s_list is empty")
    errs = []
    if any(b >= a for a, b in zip(s_list, s_list[1:])):
        errs.append("s_list must be strictly decreasing")
    if any(not 0 < s < params.N / params.p for s in s_list):
        errs.append("every s must lie in (0, N/p)")
    if errs:
        raise ParameterError(errs)
    return s_list


def _parallel(fn, items, threads):
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _row(s, rep: Optional[SteadyReport], error: Optional[str], ref: Optional[RadialDensity]):
    if rep is None:
        return {"s": s, "L1_err": None, "L2_err": None, "energy": None, "D_s": None,
                "sup_norm": None, "support_radius": None, "status": f"failed: {error}",
                "label": None, "mass": None, "R_dom": None}
    v = rep.rho.values
    row = {"s": s, "energy": rep.energy.free_energy, "D_s": rep.multiplier,
           "sup_norm": float(v.max()), "support_radius": rep.support_radius,
           "status": rep.status, "label": rep.label, "mass": rep.rho.mass,
           "R_dom": rep.rho.grid.R_dom, "L1_err": None, "L2_err": None}
    if ref is not None:
        diff = RadialDensity(rep.rho.grid, np.abs(v - ref.values))
        row["L1_err"] = lp_norm(diff, 1)
        row["L2_err"] = lp_norm(diff, 2)
    return row


def _solve_one(params, config, grid, s, op=None):
    p_s = params.replace(s=s)
    try:
        op = op or build_operator(grid, s / 2)
        return solve_el(p_s, config, op), None
    except RieszFlowError as exc:
        return None, str(exc)


def sweep_s(params: ModelParams, s_list, config: Optional[SolverConfig], grid: RadialGrid,
            threads: int = 1, operators: Optional[dict] = None) -> SweepReport:
    """Minimizers along decreasing s on one fixed grid, compared with ``rho_0``.

    Parameters
    ----------
    params : ModelParams
        Its ``s`` is ignored; m must exceed p' (for m = p' use
        :func:`fair_limit_study`).
    s_list : sequence of float
        Strictly decreasing values in (0, N/p).
    config : SolverConfig or None
    grid : RadialGrid
    threads : int
        Independent solves run concurrently.
    operators : dict, optional
        Prebuilt operators of order s/2 keyed by s.

    Returns
    -------
    SweepReport
        ``checks`` holds the L^1 trend (one violation below 10% allowed),
        the sup norm bound ``2 * height``, the support bound and the final
        energy gap to the limit functional.
    """
    s_list = _check_s_list(params, s_list)
    if not params.m > params.p_conj:
        raise RegimeError("sweep_s needs m > p' (use fair_limit_study at m = p')")
    lim = limit_profile(params, grid)
    F0 = free_energy_limit(params, lim.rho)
    operators = operators or {}
    config = config or SolverConfig()
    results = _parallel(lambda s: _solve_one(params, config, grid, s, operators.get(s)),
                        s_list, threads)
    rep = SweepReport(kind="sweep_s", params=params.as_dict(),
                      limit={**lim.to_dict(), "free_energy": F0})
    for s, (r, err) in zip(s_list, results):
        rep.rows.append(_row(s, r, err, lim.rho))
        rep.reports.append(r)
    ok = rep.ok_rows
    if ok:
        l1 = [row["L1_err"] for row in ok]
        sup = [row["sup_norm"] for row in ok]
        supp = [row["support_radius"] for row in ok]
        last = ok[-1]
        rep.checks = {
            "all_converged": len(ok) == len(rep.rows),
            "l1_trend": trend_check(l1, True, 1, rel_tol=0.10),
            "final_L1_err": l1[-1],
            "final_L1_rel": l1[-1] / params.M,
            "sup_bounded": max(sup) <= 2 * lim.height,
            "support_bounded": max(supp) < grid.R_dom,
            "final_energy_rel_gap": abs(last["energy"] - F0) / abs(F0),
        }
    else:
        rep.checks = {"all_converged": False}
    return rep


def _stretch(params: ModelParams, op: RieszOperator, base: SteadyReport, b: float) -> SteadyReport:
    """Map a stationary state for the reference coupling onto the real one.

    At m = p' the map ``rho -> a rho(b x)`` multiplies the nonlocal term by
    ``b^{-s p'}`` relative to the diffusion, so a state for the coupling
    ``chi_ref`` becomes one for ``chi = chi_ref b^{s p'}``.
    """
    N, m = params.N, params.m
    v0 = base.rho.values
    a = params.M * b ** N / base.rho.mass
    op_b = op.rescaled(1.0 / b)
    v = a * v0
    K, X, _ = potential_terms(op_b, v, params.p_conj)
    D = a ** (m - 1) * base.multiplier
    rep = _finalize(params, op_b.grid, v, K, X, D, base.iterations, base.history,
                    base.converged, base.label, dict(base.extras, stretch=1.0 / b))
    rep.operator = op_b
    return rep


def fair_limit_study(params: ModelParams, s_list, config: Optional[SolverConfig],
                     grid: RadialGrid, chi_ref: Optional[float] = None,
                     threads: int = 1, operators: Optional[dict] = None) -> SweepReport:
    """Sweep over s at m = p' with per-s domain fitting.

    At m = p' the coupling only sets a length scale, so each state is
    computed for ``chi_ref`` (default ``p``) on ``grid`` and stretched
    exactly to the requested ``chi``; every row therefore lives on its own
    grid (column ``R_dom``).  Trend checks by branch:

    * chi < p: sup norms decreasing,
    * chi > p: support radii decreasing, sup norms increasing,
    * chi = p: ``|F|`` and ``D_s`` decreasing.

    Each allows one adjacent violation.  Support radii below ten cells of
    the stretched grid are flagged as unresolved.
    """
    s_list = _check_s_list(params, s_list)
    if not math.isclose(params.m, params.p_conj, rel_tol=1e-12):
        raise RegimeError("fair_limit_study needs m = p'")
    chi_ref = float(params.p if chi_ref is None else chi_ref)
    if not chi_ref > 0:
        raise ParameterError("chi_ref must be > 0")
    config = config or SolverConfig()
    operators = operators or {}
    base_params = params.replace(chi=chi_ref)

    def one(s):
        op = operators.get(s) or build_operator(grid, s / 2)
        r, err = _solve_one(base_params, config, grid, s, op)
        if r is None:
            return None, err
        r.extras["chi_ref"] = chi_ref
        b = (params.chi / chi_ref) ** (1.0 / (s * params.p_conj))
        return _stretch(params.replace(s=s), op, r, b), None

    results = _parallel(one, s_list, threads)
    rep = SweepReport(kind="fair_limit", params=params.as_dict())
    for s, (r, err) in zip(s_list, results):
        row = _row(s, r, err, None)
        if r is not None:
            row["resolved"] = r.support_radius >= 10 * float(r.rho.grid.h)
        rep.rows.append(row)
        rep.reports.append(r)
    ok = rep.ok_rows
    checks = {"all_converged": len(ok) == len(rep.rows)}
    if len(ok) >= 2:
        sup = [row["sup_norm"] for row in ok]
        supp = [row["support_radius"] for row in ok]
        masses = [row["mass"] for row in ok]
        checks["mass_constant"] = max(abs(x - params.M) for x in masses) < 1e-8 * params.M
        if params.chi < params.p:
            checks["branch"] = "spreading"
            checks["sup_trend"] = trend_check(sup, True)
        elif params.chi > params.p:
            checks["branch"] = "concentration"
            checks["support_trend"] = trend_check(supp, True)
            checks["sup_trend"] = trend_check(sup, False)
        else:
            checks["branch"] = "neutral"
            checks["energy_trend"] = trend_check([abs(row["energy"]) for row in ok], True)
            checks["multiplier_trend"] = trend_check([row["D_s"] for row in ok], True)
        trends = [v["ok"] for k, v in checks.items() if k.endswith("_trend")]
        checks["ok"] = bool(all(trends) and checks["mass_constant"])
    rep.checks = checks
    return rep


def gamma_probe(params: ModelParams, rho: RadialDensity, s_list,
                threads: int = 1, operators: Optional[dict] = None) -> dict:
    """Energies of one fixed density along decreasing s.

    Returns a table with rows ``(s, F_s, F_0, abs_gap, rel_gap)`` and the
    checks ``decreasing`` (the gap shrinks monotonically) and
    ``final_below_1pct``.
    """
    s_list = _check_s_list(params, s_list)
    if not params.m > params.p_conj:
        raise RegimeError("gamma probe needs m > p'")
    operators = operators or {}
    F0 = free_energy_limit(params, rho) if rho.mass > 0 else 0.0

    def one(s):
        op = operators.get(s) or build_operator(rho.grid, s / 2)
        return free_energy(params.replace(s=s), op, rho).free_energy

    values = _parallel(one, s_list, threads)
    rows = []
    for s, F in zip(s_list, values):
        gap = abs(F - F0)
        rows.append({"s": s, "F_s": F, "F_0": F0, "abs_gap": gap,
                     "rel_gap": gap / abs(F0) if F0 != 0 else (0.0 if gap == 0 else math.inf)})
    gaps = [r["abs_gap"] for r in rows]
    return {
        "rows": rows,
        "decreasing": all(b <= a for a, b in zip(gaps, gaps[1:])),
        "final_below_1pct": rows[-1]["rel_gap"] < 0.01,
    }


def limit_identity_defect(params: ModelParams, lim: LimitProfile) -> float:
    """``|Lambda_0(rho_0) - M| / M`` for the limit profile."""
    return abs(lambda_limit(params, lim.rho) - params.M) / params.M
