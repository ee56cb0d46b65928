"""Command line front end: ``rieszflow <command> --config run.json``.

Every command reads one JSON configuration, runs the corresponding library
routine, writes ``report.json`` plus CSV tables into a per-run directory
and prints a one-line summary.  Exit codes: 0 when every contract in the
report holds, 2 for configuration errors, 3 for numerical failures and
failed contracts, 4 for divergence (non-converged solves, suspected
blow-up).
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import __version__
from .asymptotics import fair_limit_study, gamma_probe, limit_profile, sweep_s
from .energy import (classify_regime, dilation_profile, free_energy, hls_upper_bound,
                     kappa, optimal_dilation)
from .errors import DivergenceError, ParameterError, RieszFlowError
from .evolve import EvolveConfig, run
from .grid import ModelParams, RadialDensity, RadialGrid, dilate, make_profile, stretch
from .riesz import build_operator
from .steady import (SolverConfig, critical_mass_check, estimate_Mc, hls_extremal,
                     random_profile, sample_quotients, solve_el)

COMMANDS = ("steady", "hls", "mc", "evolve", "sweep-s", "fair-limit", "gamma", "energy")

_NUM, _INT, _STR, _LIST, _BOOL = "number", "integer", "string", "list of numbers", "boolean"

# section -> key -> (kind, default, nullable)
SCHEMA = {
    "model": {"N": (_INT, 1, False), "s": (_NUM, 0.4, False), "p": (_NUM, 2.0, False),
              "m": (_NUM, 3.0, False), "chi": (_NUM, 1.0, False), "M": (_NUM, 1.0, False)},
    "grid": {"n": (_INT, 1024, False), "R_dom": (_NUM, 4.0, False)},
    "solver": {"tau": (_NUM, 0.5, False), "max_iters": (_INT, 5000, False),
               "fp_tol": (_NUM, 1e-9, False), "bisect_tol": (_NUM, 1e-12, False),
               "init": (_STR, "indicator", False)},
    "evolve": {"cfl": (_NUM, 0.4, False), "t_end": (_NUM, 1.0, False),
               "record_every": (_INT, 50, False), "steady_tol": (_NUM, 1e-3, False),
               "max_steps": (_INT, 2_000_000, False), "blowup_factor": (_NUM, 1e6, False),
               "dt": (_NUM, None, True), "init": (_STR, "steady", False),
               "init_radius": (_NUM, None, True), "noise": (_NUM, 0.05, False)},
    "hls": {"samples": (_INT, 50, False), "compare_inits": (_BOOL, True, False)},
    "mc": {"factor": (_NUM, 1.5, False)},
    "sweep": {"s_list": (_LIST, [0.4, 0.2, 0.1, 0.05], False), "chi_ref": (_NUM, None, True)},
    "gamma": {"s_list": (_LIST, [0.4, 0.2, 0.1, 0.05, 0.02, 0.01, 0.005, 0.002], False),
              "fixture": (_STR, "limit", False), "radius": (_NUM, 1.0, False)},
    "energy": {"fixture": (_STR, "bump", False), "radius": (_NUM, 1.0, False),
               "lambdas": (_LIST, [0.5, 2.0], False)},
}
TOP_LEVEL = {"seed": (_INT, 0, False)}
FIXTURES = ("limit", "indicator", "gaussian", "bump", "zero")
EVOLVE_INITS = ("steady", "indicator", "gaussian", "bump")


@dataclass
class RunConfig:
    """Resolved configuration: validated objects plus the raw resolved blocks."""

    model: ModelParams
    grid: dict
    solver: SolverConfig
    evolve: dict
    blocks: dict
    seed: int = 0
    raw: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)

    def evolve_config(self) -> EvolveConfig:
        keys = ("cfl", "t_end", "record_every", "steady_tol", "max_steps", "blowup_factor")
        return EvolveConfig(**{k: self.evolve[k] for k in keys})

    def make_grid(self) -> RadialGrid:
        return RadialGrid(self.model.N, self.grid["n"], self.grid["R_dom"])

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.raw == other.raw


def _type_ok(kind, value):
    if kind == _INT:
        return isinstance(value, int) and not isinstance(value, bool)
    if kind == _NUM:
        return (isinstance(value, (int, float)) and not isinstance(value, bool)
                and math.isfinite(value))
    if kind == _STR:
        return isinstance(value, str)
    if kind == _BOOL:
        return isinstance(value, bool)
    if kind == _LIST:
        return isinstance(value, list) and all(_type_ok(_NUM, x) for x in value)
    return False


def _as_float(kind, value):
    if value is None:
        return None
    if kind == _NUM:
        return float(value)
    if kind == _LIST:
        return [float(x) for x in value]
    return value


def _resolve(doc: dict, errors: list) -> dict:
    out = {}
    for key in doc:
        if key not in SCHEMA and key not in TOP_LEVEL:
            errors.append(f"unknown key '{key}'")
    for key, (kind, default, nullable) in TOP_LEVEL.items():
        value = doc.get(key, default)
        if not _type_ok(kind, value) or value < 0:
            errors.append(f"{key} must be a non-negative {kind}")
        out[key] = value
    for section, spec in SCHEMA.items():
        block = doc.get(section, {})
        if not isinstance(block, dict):
            errors.append(f"'{section}' must be an object")
            block = {}
        for key in block:
            if key not in spec:
                errors.append(f"unknown key '{section}.{key}'")
        resolved = {}
        for key, (kind, default, nullable) in spec.items():
            value = block.get(key, default)
            if value is None and nullable:
                resolved[key] = None
                continue
            if not _type_ok(kind, value):
                errors.append(f"{section}.{key} must be a {kind}")
                resolved[key] = default
                continue
            resolved[key] = _as_float(kind, value)
        out[section] = resolved
    return out


def _collect(errors, prefix, factory):
    try:
        return factory()
    except ParameterError as exc:
        errors.extend(f"{prefix}: {v}" for v in exc.violations)
    except (TypeError, ValueError) as exc:
        errors.append(f"{prefix}: {exc}")
    return None


def _s_list_errors(name, s_list, model) -> list:
    out = []
    if not s_list:
        out.append(f"{name} must not be empty")
    if any(b >= a for a, b in zip(s_list, s_list[1:])):
        out.append(f"{name} must be strictly decreasing")
    if model is not None and any(not 0 < s < model.N / model.p for s in s_list):
        out.append(f"{name} entries must lie in (0, N/p)")
    return out


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """Parse and validate a JSON run configuration.

    Raises
    ------
    ParameterError
        Listing every violation: syntax errors carry line and column,
        semantic errors the offending parameter and constraint.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParameterError(f"{source}: line {exc.lineno}, column {exc.colno}: {exc.msg}")
    if not isinstance(doc, dict):
        raise ParameterError(f"{source}: top level must be a JSON object")
    errors: list = []
    raw = _resolve(doc, errors)
    model = _collect(errors, "model", lambda: ModelParams(**raw["model"]))
    g = raw["grid"]
    if not (g["n"] >= 2):
        errors.append("grid: n must be >= 2")
    if not g["R_dom"] > 0:
        errors.append("grid: R_dom must be > 0")
    solver = _collect(errors, "solver", lambda: SolverConfig(**raw["solver"]))
    ev = raw["evolve"]
    _collect(errors, "evolve", lambda: EvolveConfig(**{k: ev[k] for k in (
        "cfl", "t_end", "record_every", "steady_tol", "max_steps", "blowup_factor")}))
    if ev["dt"] is not None and not ev["dt"] > 0:
        errors.append("evolve: dt must be > 0")
    if ev["init"] not in EVOLVE_INITS:
        errors.append(f"evolve: init must be one of {', '.join(EVOLVE_INITS)}")
    if not 0 <= ev["noise"] < 1:
        errors.append("evolve: noise must be in [0, 1)")
    if ev["init_radius"] is not None and not ev["init_radius"] > 0:
        errors.append("evolve: init_radius must be > 0")
    if raw["hls"]["samples"] < 0:
        errors.append("hls: samples must be >= 0")
    if not raw["mc"]["factor"] > 1:
        errors.append("mc: factor must be > 1")
    # default lists are range-checked only when a command uses them
    given = {sec for sec in ("sweep", "gamma")
             if isinstance(doc.get(sec), dict) and "s_list" in doc[sec]}
    errors += _s_list_errors("sweep: s_list", raw["sweep"]["s_list"],
                             model if "sweep" in given else None)
    if raw["sweep"]["chi_ref"] is not None and not raw["sweep"]["chi_ref"] > 0:
        errors.append("sweep: chi_ref must be > 0")
    errors += _s_list_errors("gamma: s_list", raw["gamma"]["s_list"],
                             model if "gamma" in given else None)
    for section in ("gamma", "energy"):
        if raw[section]["fixture"] not in FIXTURES:
            errors.append(f"{section}: fixture must be one of {', '.join(FIXTURES)}")
        if not raw[section]["radius"] > 0:
            errors.append(f"{section}: radius must be > 0")
    if any(not x > 0 for x in raw["energy"]["lambdas"]):
        errors.append("energy: lambdas must be > 0")
    if errors:
        raise ParameterError([f"{source}: {e}" for e in errors])
    blocks = {k: raw[k] for k in ("hls", "mc", "sweep", "gamma", "energy")}
    return RunConfig(model=model, grid=raw["grid"], solver=solver, evolve=raw["evolve"],
                     blocks=blocks, seed=raw["seed"], raw=raw)


# ---------------------------------------------------------------------------
# commands


@dataclass
class Outcome:
    headline: str
    result: dict
    contracts: dict
    files: dict = field(default_factory=dict)
    operators: list = field(default_factory=list)
    diverged: bool = False


class _Ops:
    """Operator factory that remembers content hashes for the report."""

    def __init__(self, threads):
        self.threads = threads
        self.used = []

    def __call__(self, grid, a):
        op = build_operator(grid, a, threads=self.threads)
        self.used.append({"order": op.order, "N": grid.N, "n": grid.n, "R_dom": grid.R_dom,
                          "content_hash": op.content_hash})
        return op


def _fixture(kind, params, grid, radius):
    if kind == "limit":
        return limit_profile(params, grid).rho
    if kind == "zero":
        return RadialDensity(grid, np.zeros(grid.n))
    return make_profile(grid, kind, mass=params.M, radius=radius)


def cmd_steady(cfg: RunConfig, ops, rng) -> Outcome:
    grid = cfg.make_grid()
    rep = solve_el(cfg.model, cfg.solver, ops(grid, cfg.model.s / 2))
    c = {"converged": rep.converged,
         "el_residual_below_fp_tol": rep.el_residual < cfg.solver.fp_tol,
         "monotone": rep.monotone,
         "compact_support": rep.support_radius < rep.rho.grid.R_dom,
         "mass": abs(rep.rho.mass - cfg.model.M) < 1e-8 * cfg.model.M}
    if rep.label == "minimizer":
        c["identity_defect_below_1e-3"] = rep.identity_defect < 1e-3
        c["lambda_star_is_1"] = abs(rep.energy.lambda_star - 1) < 1e-3
    elif rep.label == "saddle_wrt_dilations":
        c["dilation_maximum_at_1"] = rep.extras.get("local_max_at_1", False)
    return Outcome(f"el_residual={rep.el_residual:.3e} ({rep.label})", rep.to_dict(), c,
                   {"profile.csv": rep.rho.to_csv()}, diverged=not rep.converged)


def _hls_contracts(cfg, rep, op, rng):
    params = cfg.model
    ex = rep.extras
    bound = hls_upper_bound(params) ** params.p_conj
    c = {"converged": rep.converged,
         "normalized": abs(ex["norm_1"] - 1) <= 1e-8 and abs(ex["norm_m"] - 1) <= 1e-8,
         "el_residual_below_1e-5": rep.el_residual < 1e-5,
         "constants_match_1e-3": ex["constants_rel_gap"] < 1e-3,
         "below_explicit_bound": ex["Hstar"] <= bound * (1 + 1e-2)}
    result = {"extremal": rep.to_dict(), "Hstar": ex["Hstar"], "explicit_bound": bound}
    samples = cfg.blocks["hls"]["samples"]
    if samples:
        q = sample_quotients(params, op, rng, samples)
        result["max_sample_quotient"] = float(q.max())
        c["beats_random_samples"] = bool(ex["quotient"] >= q.max())
    return c, result


def cmd_hls(cfg: RunConfig, ops, rng) -> Outcome:
    grid = cfg.make_grid()
    op = ops(grid, cfg.model.s / 2)
    rep = hls_extremal(cfg.model, cfg.solver, op)
    c, result = _hls_contracts(cfg, rep, op, rng)
    if cfg.blocks["hls"]["compare_inits"]:
        other = hls_extremal(cfg.model, cfg.solver, op, init=random_profile(grid, rng))
        gap = abs(other.extras["Hstar"] - rep.extras["Hstar"]) / rep.extras["Hstar"]
        result["random_init_Hstar"] = other.extras["Hstar"]
        result["init_rel_gap"] = gap
        c["inits_agree_1e-3"] = gap < 1e-3
    return Outcome(f"H*={rep.extras['Hstar']:.10g}", result, c,
                   {"extremal.csv": rep.rho.to_csv()}, diverged=not rep.converged)


def cmd_mc(cfg: RunConfig, ops, rng) -> Outcome:
    params = cfg.model
    if not params.is_critical(rtol=1e-9):
        raise ParameterError(f"mc needs m = m_c = {params.m_c:.12g} (got m = {params.m})")
    grid = cfg.make_grid()
    op = ops(grid, params.s / 2)
    rep = hls_extremal(params, cfg.solver, op)
    Mc = estimate_Mc(params, rep.extras["Hstar"])
    check = critical_mass_check(params, op, rep.rho, Mc, factor=cfg.blocks["mc"]["factor"])
    c = {"converged": rep.converged, "free_energy_vanishes_at_Mc": check["passes_zero_check"],
         "supercritical_negative": check["supercritical_negative"]}
    result = {"Hstar": rep.extras["Hstar"], "critical_mass": Mc, "check": check,
              "extremal": rep.to_dict()}
    return Outcome(f"M_c={Mc:.10g}  F(M_c h)={check['free_energy_at_Mc']:.3e}", result, c,
                   {"extremal.csv": rep.rho.to_csv()}, diverged=not rep.converged)


def cmd_evolve(cfg: RunConfig, ops, rng) -> Outcome:
    params, ev = cfg.model, cfg.evolve
    grid = cfg.make_grid()
    op = ops(grid, params.s / 2)
    reference = None
    if ev["init"] == "steady":
        steady = solve_el(params, cfg.solver, op)
        if not steady.converged:
            raise DivergenceError("reference stationary state did not converge")
        reference = steady.rho
        v = reference.values * (1 + ev["noise"] * rng.uniform(-1.0, 1.0, grid.n))
        rho0 = RadialDensity(grid, v)
        rho0 = rho0.scaled(params.M / rho0.mass)
    else:
        radius = ev["init_radius"] or 0.25 * grid.R_dom
        rho0 = make_profile(grid, ev["init"], mass=params.M, radius=radius)
    rec = run(params, op, rho0, cfg.evolve_config(), reference=reference, dt=ev["dt"])
    c = {"mass_conserved_1e-10": rec.mass_drift < 1e-10,
         "energy_nonincreasing": rec.energy_increases == 0,
         "finished": rec.status in ("completed", "steady")}
    if reference is not None:
        c["returned_to_steady_state"] = rec.converged
    result = rec.to_dict()
    return Outcome(f"status={rec.status} t={result['t_final']:.4g} "
                   f"mass_drift={result['mass_drift']:.2e}", result, c,
                   {"trajectory.csv": rec.to_csv(), "final.csv": rec.final.to_csv()},
                   diverged=rec.status == "blowup_suspected")


def _sweep_files(rep):
    files = {"sweep.csv": rep.to_csv()}
    for row, r in zip(rep.rows, rep.reports):
        if r is not None:
            files[f"profile_s{row['s']:g}.csv"] = r.rho.to_csv()
    return files


def cmd_sweep(cfg: RunConfig, ops, rng) -> Outcome:
    grid = cfg.make_grid()
    s_list = cfg.blocks["sweep"]["s_list"]
    operators = {s: ops(grid, s / 2) for s in s_list}
    rep = sweep_s(cfg.model, s_list, cfg.solver, grid, threads=ops.threads, operators=operators)
    ch = rep.checks
    c = {"all_converged": ch.get("all_converged", False)}
    if "l1_trend" in ch:
        c.update(l1_trend=ch["l1_trend"]["ok"], sup_bounded=ch["sup_bounded"],
                 support_bounded=ch["support_bounded"])
    head = f"final L1 error={ch.get('final_L1_err', float('nan')):.4g}"
    return Outcome(head, rep.to_dict(), c, _sweep_files(rep))


def cmd_fair(cfg: RunConfig, ops, rng) -> Outcome:
    grid = cfg.make_grid()
    s_list = cfg.blocks["sweep"]["s_list"]
    operators = {s: ops(grid, s / 2) for s in s_list}
    rep = fair_limit_study(cfg.model, s_list, cfg.solver, grid,
                           chi_ref=cfg.blocks["sweep"]["chi_ref"], threads=ops.threads,
                           operators=operators)
    c = {"all_converged": rep.checks.get("all_converged", False),
         "trends": rep.checks.get("ok", False)}
    return Outcome(f"branch={rep.checks.get('branch')} trends_ok={c['trends']}",
                   rep.to_dict(), c, _sweep_files(rep))


def cmd_gamma(cfg: RunConfig, ops, rng) -> Outcome:
    grid = cfg.make_grid()
    blk = cfg.blocks["gamma"]
    rho = _fixture(blk["fixture"], cfg.model, grid, blk["radius"])
    operators = {s: ops(grid, s / 2) for s in blk["s_list"]}
    table = gamma_probe(cfg.model, rho, blk["s_list"], threads=ops.threads, operators=operators)
    c = {"gap_decreasing": table["decreasing"], "final_below_1pct": table["final_below_1pct"]}
    last = table["rows"][-1]
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=["s", "F_s", "F_0", "abs_gap", "rel_gap"],
                            lineterminator="\n")
    writer.writeheader()
    writer.writerows({k: repr(v) for k, v in row.items()} for row in table["rows"])
    return Outcome(f"final relative gap={last['rel_gap']:.3e} at s={last['s']:g}", table, c,
                   {"gamma.csv": buf.getvalue()})


def cmd_energy(cfg: RunConfig, ops, rng) -> Outcome:
    params = cfg.model
    grid = cfg.make_grid()
    blk = cfg.blocks["energy"]
    rho = _fixture(blk["fixture"], params, grid, blk["radius"])
    op = ops(grid, params.s / 2)
    e = free_energy(params, op, rho)
    result = {"breakdown": e.to_dict(), "regime": classify_regime(params).to_dict(),
              "dilations": []}
    c = {}
    if rho.mass > 0:
        A, X = e.norm_m_m, e.interaction * params.p_conj
        worst = 0.0
        for lam in blk["lambdas"]:
            law = float(dilation_profile(params, A, X, lam))
            exact = free_energy(params, op.rescaled(1.0 / lam), stretch(rho, lam)).free_energy
            row = {"lambda": lam, "scaling_law": law, "stretched_grid": exact}
            try:
                resampled, defect = dilate(rho, lam, full_output=True)
                row["resampled"] = free_energy(params, op, resampled).free_energy
                row["resampling_mass_defect"] = defect
            except RieszFlowError as exc:
                row["resampled"] = None
                row["resampling_note"] = str(exc)
            worst = max(worst, abs(exact - law) / abs(law))
            result["dilations"].append(row)
        c["scaling_law_1e-6"] = worst < 1e-6
        if not params.is_critical() and params.chi > 0:
            lam_star = optimal_dilation(params, e)
            F_star = float(dilation_profile(params, A, X, lam_star))
            k = kappa(params)
            result["optimal_dilation"] = {"lambda_star": lam_star, "F_at_lambda_star": F_star,
                                          "kappa_Lambda": k * e.lambda_value}
            c["kappa_identity_1e-8"] = abs(F_star - k * e.lambda_value) <= 1e-8 * abs(F_star)
    return Outcome(f"F={e.free_energy:.10g} regime={result['regime']['regime']}", result, c)


HANDLERS: dict[str, Callable] = {
    "steady": cmd_steady, "hls": cmd_hls, "mc": cmd_mc, "evolve": cmd_evolve,
    "sweep-s": cmd_sweep, "fair-limit": cmd_fair, "gamma": cmd_gamma, "energy": cmd_energy,
}


# ---------------------------------------------------------------------------
# plumbing


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return x


def run_dir(base: Path, command: str, cfg: RunConfig) -> Path:
    """Directory ``<base>/<command>-<digest>`` unique to command, config and seed."""
    text = json.dumps({"command": command, "config": cfg.raw}, sort_keys=True)
    return base / f"{command}-{hashlib.sha256(text.encode()).hexdigest()[:12]}"


def execute(command: str, cfg: RunConfig, out: Path, threads: int = 1):
    """Run one command and write its artifacts; returns ``(exit_code, report, path)``."""
    rng = np.random.Generator(np.random.Philox(cfg.seed))
    ops = _Ops(threads)
    outcome = HANDLERS[command](cfg, ops, rng)
    ok = all(bool(v) for v in outcome.contracts.values())
    code = 0 if ok else 3
    if outcome.diverged:
        code = 4
    report = _jsonable({"command": command, "version": __version__, "config": cfg.to_dict(),
                        "operators": ops.used, "result": outcome.result,
                        "contracts": outcome.contracts, "ok": ok and not outcome.diverged,
                        "headline": outcome.headline})
    path = run_dir(out, command, cfg)
    path.mkdir(parents=True, exist_ok=True)
    (path / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    for name, text in outcome.files.items():
        (path / name).write_text(text)
    return code, report, path


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rieszflow", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", type=Path, help="JSON run configuration (defaults if omitted)")
    ap.add_argument("--out", type=Path, default=Path("rieszflow-out"),
                    help="base output directory (default: ./rieszflow-out)")
    ap.add_argument("--seed", type=int, help="seed for the Philox generator (overrides config)")
    ap.add_argument("--threads", type=int, default=1, help="worker threads (default 1)")
    return ap


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.threads < 1:
            raise ParameterError("--threads must be >= 1")
        if args.seed is not None and not 0 <= args.seed < 2 ** 64:
            raise ParameterError("--seed must be an unsigned 64-bit integer")
        if args.config is not None:
            try:
                text = args.config.read_text(encoding="utf-8")
            except OSError as exc:
                raise ParameterError(f"cannot read {args.config}: {exc.strerror}")
            source = str(args.config)
        else:
            text, source = "{}", "<defaults>"
        cfg = parse_config(text, source)
        if args.seed is not None:
            cfg.raw["seed"] = cfg.seed = args.seed
        code, report, path = execute(args.command, cfg, args.out, args.threads)
    except RieszFlowError as exc:
        lines = getattr(exc, "violations", None) or [str(exc)]
        for line in lines:
            print(f"rieszflow {args.command}: error: {line}", file=sys.stderr)
        return exc.exit_code
    failed = [k for k, v in report["contracts"].items() if not v]
    status = "ok" if code == 0 else ("diverged" if code == 4 else "FAILED " + ",".join(failed))
    print(f"{args.command}: {report['headline']} [{status}] -> {path}")
    return code


if __name__ == "__main__":
    sys.exit(main())
