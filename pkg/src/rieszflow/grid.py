"""Radial discretization, model parameters and density profiles.

Densities are radial and piecewise constant on uniform shells
``[e_i, e_{i+1}]`` of ``[0, R_dom]``; the stored value of cell ``i`` is
attached to its midpoint ``r_i``.
"""

from __future__ import annotations

import dataclasses
import io
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import GridMismatchError, ParameterError, TruncationError

#: values below this are treated as exact zeros in support detection
ZERO_CLAMP = 1e-14


def unit_ball_volume(N: int) -> float:
    """Volume of the unit ball in R^N."""
    return math.pi ** (N / 2) / math.gamma(N / 2 + 1)


@dataclass(frozen=True)
class ModelParams:
    """Parameters (N, s, p, m, chi, M) of the free energy and its derived exponents.

    ``chi = 0`` is accepted so that pure porous-medium control runs can reuse
    the same machinery; every quantity that divides by ``chi`` raises instead.
    """

    N: int
    s: float
    p: float
    m: float
    chi: float = 1.0
    M: float = 1.0

    def __post_init__(self):
        problems = self.violations()
        if problems:
            raise ParameterError(problems)

    def violations(self) -> list[str]:
        """List every violated constraint (empty when valid)."""
        out = []
        N, s, p, m = self.N, self.s, self.p, self.m
        if not isinstance(N, (int, np.integer)) or isinstance(N, bool) or N < 1:
            out.append("N must be an integer >= 1")
        for name in ("s", "p", "m", "chi", "M"):
            if not math.isfinite(float(getattr(self, name))):
                out.append(f"{name} must be finite")
        if not p > 1:
            out.append("p must be > 1")
        if not s > 0:
            out.append("s must be > 0")
        if isinstance(N, (int, np.integer)) and not s * p < N:
            out.append("s*p must be < N")
        if not m > 1:
            out.append("m must be > 1")
        if not self.chi >= 0:
            out.append("chi must be >= 0")
        if not self.M > 0:
            out.append("M must be > 0")
        return out

    def replace(self, **changes) -> "ModelParams":
        return dataclasses.replace(self, **changes)

    @property
    def p_conj(self) -> float:
        return self.p / (self.p - 1)

    @property
    def p_star(self) -> float:
        return self.N * self.p / (self.N - self.s * self.p)

    @property
    def p_star_conj(self) -> float:
        return self.p_star / (self.p_star - 1)

    @property
    def m_c(self) -> float:
        return self.p_conj * (1 - self.s / self.N)

    @property
    def m_conj(self) -> float:
        return self.m / (self.m - 1)

    @property
    def theta0(self) -> float:
        """Interpolation exponent; lies in (0, 1) exactly when m > p_star_conj."""
        return 1 - self.m_conj / self.p_star

    @property
    def omega(self) -> float:
        return unit_ball_volume(self.N)

    def is_critical(self, rtol: float = 1e-12) -> bool:
        """True when m equals m_c up to rounding of the exponent arithmetic."""
        return math.isclose(self.m, self.m_c, rel_tol=rtol, abs_tol=0.0)

    def regime(self) -> str:
        if self.is_critical():
            return "fair"
        return "diffusion" if self.m > self.m_c else "aggregation"

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


class RadialGrid:
    """Uniform shells on ``[0, R_dom]`` in dimension ``N``.

    Parameters
    ----------
    N : int
        Space dimension.
    n : int
        Number of cells.
    R_dom : float
        Domain radius.
    """

    def __init__(self, N: int, n: int = 1024, R_dom: float = 4.0):
        if N < 1 or n < 2 or not R_dom > 0:
            raise ParameterError(f"invalid grid N={N}, n={n}, R_dom={R_dom}")
        self.N = int(N)
        self.n = int(n)
        self.R_dom = float(R_dom)
        self.h = self.R_dom / self.n
        self.edges = self.h * np.arange(self.n + 1, dtype=float)
        self.edges[-1] = self.R_dom
        self.nodes = 0.5 * (self.edges[:-1] + self.edges[1:])
        self.omega = unit_ball_volume(self.N)
        self.vol = self.omega * np.diff(self.edges ** self.N)
        for arr in (self.edges, self.nodes, self.vol):
            arr.setflags(write=False)

    def __eq__(self, other):
        return (isinstance(other, RadialGrid) and self.N == other.N
                and self.n == other.n and self.R_dom == other.R_dom)

    def __hash__(self):
        return hash((self.N, self.n, self.R_dom))

    def __repr__(self):
        return f"RadialGrid(N={self.N}, n={self.n}, R_dom={self.R_dom})"

    def edge_area(self) -> np.ndarray:
        """Surface measure of the sphere through every cell edge."""
        return self.N * self.omega * self.edges ** (self.N - 1)

    def ball_volume(self, r) -> np.ndarray:
        return self.omega * np.asarray(r, dtype=float) ** self.N

    def descriptor(self) -> dict:
        return {"N": self.N, "n": self.n, "R_dom": self.R_dom}

    def to_json(self) -> str:
        return json.dumps(self.descriptor())

    @classmethod
    def from_json(cls, text: str) -> "RadialGrid":
        d = json.loads(text)
        return cls(d["N"], d["n"], d["R_dom"])


@dataclass(frozen=True, eq=False)
class RadialDensity:
    """Nonnegative radial profile on a grid (values are read only)."""

    grid: RadialGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n,):
            raise GridMismatchError(
                f"expected {self.grid.n} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ParameterError("density values must be finite")
        if np.any(v < 0):
            raise ParameterError("density values must be nonnegative")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def mass(self) -> float:
        return float(np.dot(self.values, self.grid.vol))

    def scaled(self, alpha: float) -> "RadialDensity":
        return RadialDensity(self.grid, alpha * self.values)

    def support_radius(self) -> float:
        """Outer edge of the last cell carrying a value above the zero clamp."""
        nz = np.nonzero(self.values > ZERO_CLAMP)[0]
        return 0.0 if nz.size == 0 else float(self.grid.edges[nz[-1] + 1])

    def is_monotone(self, rtol: float = 0.0) -> bool:
        """Nonincreasing in r, allowing increases up to ``rtol * max``."""
        v = self.values
        slack = rtol * (v.max() if v.size else 0.0)
        return bool(np.all(np.diff(v) <= slack))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("r,value\n")
        for r, v in zip(self.grid.nodes, self.values):
            buf.write(f"{r:.17g},{v:.17g}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, grid: RadialGrid) -> "RadialDensity":
        data = np.loadtxt(io.StringIO(text), delimiter=",", skiprows=1, ndmin=2)
        if data.shape[0] != grid.n or not np.allclose(data[:, 0], grid.nodes,
                                                       rtol=1e-14, atol=0):
            raise GridMismatchError("CSV nodes do not match the grid")
        return cls(grid, data[:, 1])


def check_same_grid(*objs) -> RadialGrid:
    grids = [o.grid for o in objs]
    for g in grids[1:]:
        if g != grids[0]:
            raise GridMismatchError(f"{g!r} differs from {grids[0]!r}")
    return grids[0]


def lp_norm(rho: RadialDensity, q: float) -> float:
    """L^q norm of a profile; ``q = inf`` gives the largest nodal value."""
    if q == math.inf:
        return float(rho.values.max(initial=0.0))
    if not q >= 1:
        raise ParameterError("q must be >= 1")
    return float(np.dot(rho.values ** q, rho.grid.vol) ** (1.0 / q))


def _cumulative_mass(rho: RadialDensity, radius: float) -> float:
    """Mass of a piecewise-constant profile inside the ball of given radius."""
    g = rho.grid
    if radius >= g.R_dom:
        return rho.mass
    k = int(np.searchsorted(g.edges, radius, side="right")) - 1
    inner = float(np.dot(rho.values[:k], g.vol[:k]))
    partial = g.omega * (radius ** g.N - g.edges[k] ** g.N) * rho.values[k]
    return inner + partial


def dilate(rho: RadialDensity, lam: float, tol: float = 1e-6,
           full_output: bool = False):
    """Mass-invariant dilation ``lam**N * rho(lam * r)``.

    The profile is resampled by linear interpolation between nodes (held
    flat inside the first node, zero beyond ``R_dom``) and then rescaled so
    the mass is exactly that of ``rho``.

    Parameters
    ----------
    rho : RadialDensity
    lam : float
        Dilation factor, > 0.
    tol : float
        Relative mass that may be carried outside the grid (``lam < 1``
        pushes the outer part of ``rho`` beyond ``R_dom``).
    full_output : bool
        Also return the relative mass defect of the raw interpolation.

    Raises
    ------
    TruncationError
        If more than ``tol * mass`` leaves the domain.
    """
    if not lam > 0:
        raise ParameterError("dilation factor must be > 0")
    g = rho.grid
    M = rho.mass
    if lam == 1.0:
        return (rho, 0.0) if full_output else rho
    if M == 0.0:
        return (rho, 0.0) if full_output else rho
    lost = M - _cumulative_mass(rho, g.R_dom * lam)
    if lost > tol * M:
        raise TruncationError(
            f"dilation by {lam:g} moves {lost / M:.3e} of the mass beyond R_dom")
    x = lam * g.nodes
    vals = np.interp(x, g.nodes, rho.values, right=0.0)
    # the last cell spans up to R_dom: keep its value until the wall
    tail = (x > g.nodes[-1]) & (x <= g.R_dom)
    vals[tail] = rho.values[-1]
    vals *= lam ** g.N
    raw = float(np.dot(vals, g.vol))
    defect = (raw - M) / M
    if raw > 0:
        vals *= M / raw
    out = RadialDensity(g, vals)
    return (out, defect) if full_output else out


def stretch(rho: RadialDensity, lam: float) -> RadialDensity:
    """Exact dilation ``lam**N * rho(lam * r)`` on the grid shrunk by ``lam``.

    No resampling happens: the cell values are multiplied by ``lam**N`` and
    the grid becomes ``R_dom / lam``, so every norm scales exactly.  Pair it
    with :meth:`RieszOperator.rescaled` (stretch ``1 / lam``) for potentials.
    """
    if not lam > 0:
        raise ParameterError("dilation factor must be > 0")
    g = rho.grid
    return RadialDensity(RadialGrid(g.N, g.n, g.R_dom / lam), rho.values * lam ** g.N)


def rearrange(rho: RadialDensity) -> RadialDensity:
    """Radially nonincreasing rearrangement.

    Values are sorted in decreasing order and poured back into the shells
    from the center outward. When shell volumes differ (N >= 2) each output
    shell receives the average of the sorted step function over its volume
    range, which conserves mass exactly and other norms up to O(h).
    """
    v = rho.values
    if np.all(np.diff(v) <= 0):
        return rho
    g = rho.grid
    order = np.argsort(-v, kind="stable")
    if g.N == 1:
        return RadialDensity(g, v[order])
    sv, svol = v[order], g.vol[order]
    cum_vol = np.concatenate(([0.0], np.cumsum(svol)))
    cum_mass = np.concatenate(([0.0], np.cumsum(sv * svol)))
    target = np.concatenate(([0.0], np.cumsum(g.vol)))
    target[-1] = cum_vol[-1]
    mass_at = np.interp(target, cum_vol, cum_mass)
    out = np.diff(mass_at) / g.vol
    out = np.minimum.accumulate(np.maximum(out, 0.0))
    return RadialDensity(g, out)


def _cell_average_of_ball(g: RadialGrid, radius: float) -> np.ndarray:
    """Fraction of each shell's volume lying inside the ball of given radius."""
    inner = np.minimum(g.edges[1:], radius) ** g.N - g.edges[:-1] ** g.N
    return np.clip(inner, 0.0, None) * g.omega / g.vol


def make_profile(grid: RadialGrid, kind: str, mass: float = 1.0,
                 radius: float = 1.0, width: Optional[float] = None,
                 tol: float = 1e-8) -> RadialDensity:
    """Named test profile normalized to ``mass``.

    ``indicator``
        Ball of ``radius`` (cells cut by the sphere get their volume fraction).
    ``gaussian``
        ``exp(-r^2 / (2 width^2))``.
    ``bump``
        Smooth compactly supported ``exp(1 - 1/(1 - (r/radius)^2))``.
    """
    if not mass > 0 or not radius > 0:
        raise ParameterError("profile scale parameters must be positive")
    r = grid.nodes
    if kind == "indicator":
        if radius > grid.R_dom:
            raise TruncationError("indicator radius exceeds R_dom")
        vals = _cell_average_of_ball(grid, radius)
    elif kind == "gaussian":
        w = radius if width is None else width
        if not w > 0:
            raise ParameterError("gaussian width must be positive")
        if math.exp(-grid.R_dom ** 2 / (2 * w * w)) * (grid.R_dom / w) ** grid.N > tol:
            raise TruncationError("gaussian tail is not resolved inside R_dom")
        vals = np.exp(-r * r / (2 * w * w))
    elif kind == "bump":
        if radius > grid.R_dom:
            raise TruncationError("bump radius exceeds R_dom")
        z = (r / radius) ** 2
        vals = np.zeros_like(r)
        inside = z < 1
        vals[inside] = np.exp(1.0 - 1.0 / (1.0 - z[inside]))
    else:
        raise ParameterError(f"unknown profile kind '{kind}'")
    total = float(np.dot(vals, grid.vol))
    if total <= 0:
        raise TruncationError(f"{kind} profile is not resolved by the grid")
    return RadialDensity(grid, vals * (mass / total))
