"""Riesz kernels on radial grids.

``K_a(x) = c_{N,a} |x|^{2a-N}`` acts on piecewise-constant radial
densities through a Galerkin matrix: entry ``(k, j)`` is the average over
shell ``k`` of the potential generated by a unit density on shell ``j``.
Because the shell-to-shell integral is symmetric, ``vol_k W_kj`` is a
symmetric matrix and the discrete convolution is exactly self-adjoint in
the volume-weighted inner product.

The potential of a compactly supported density is not compactly
supported, and the nonlinear potential integrates a power of it over the
whole space. Operators therefore carry an exterior: geometrically growing
shells from ``R_dom`` out to ``far_factor * R_dom`` plus an analytic
monopole tail beyond.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.special import gamma, hyp2f1, roots_jacobi, roots_legendre

from .errors import BuildError, DomainError, GridMismatchError, ParameterError
from .grid import RadialDensity, RadialGrid, unit_ball_volume

CACHE_ENV = "RIESZFLOW_CACHE"
_BUILD_VERSION = 3


def riesz_constant(N: int, a: float) -> float:
    """Normalization ``c_{N,a}`` of the kernel whose Fourier symbol is |xi|^{-2a}."""
    if not 0 < a < N / 2:
        raise DomainError(f"kernel order a={a} must lie in (0, N/2) for N={N}")
    return float(math.pi ** (-N / 2) * 2.0 ** (-2 * a) * gamma(N / 2 - a) / gamma(a))


@dataclass(frozen=True)
class KernelConstants:
    """``c_{N,s}`` together with the limit of ``c_{N,s}/s`` as s -> 0."""

    c_Ns: float
    slope_limit: float

    @classmethod
    def evaluate(cls, N: int, s: float) -> "KernelConstants":
        return cls(riesz_constant(N, s), 2.0 / (N * unit_ball_volume(N)))


# ---------------------------------------------------------------------------
# quadrature helpers


def _gauss_legendre01(q: int):
    x, w = roots_legendre(q)
    return 0.5 * (x + 1.0), 0.5 * w


def _gauss_jacobi01(q: int, expo: float):
    """Nodes/weights for integral_0^1 t**expo g(t) dt."""
    if expo == 0.0:
        return _gauss_legendre01(q)
    x, w = roots_jacobi(q, 0.0, expo)
    return 0.5 * (x + 1.0), w / 2.0 ** (expo + 1.0)


def _sphere_mean(N: int, beta: float, r, t):
    """Mean of |r e_1 - t w|^beta over the unit sphere (r, t >= 0)."""
    r = np.asarray(r, dtype=float)
    t = np.asarray(t, dtype=float)
    big = np.maximum(r, t)
    small = np.minimum(r, t)
    z = (small / big) ** 2
    return big ** beta * hyp2f1(-beta / 2, 1 - N / 2 - beta / 2, N / 2, z)


# ---------------------------------------------------------------------------
# shell-to-shell integrals
#
# I[k, j] = integral over shell k (exterior grid) and shell j (inner grid) of
#           |x - y|^(2a - N) dx dy, without the constant c_{N,a}.


def _g1(z, a):
    """Antiderivative pieces for N = 1 with the linear part removed.

    The second antiderivative of |z|^(2a-1) is |z|^(2a+1)/(2a(2a+1)); writing
    |z|^(2a+1) = |z| + |z| expm1(2a log|z|) keeps the small-a limit stable.
    """
    z = np.abs(z)
    out = np.zeros_like(z)
    pos = z > 0
    zp = z[pos]
    out[pos] = zp * np.expm1(2 * a * np.log(zp)) / (2 * a * (2 * a + 1))
    return out


def _block_1d(xe, ye, a, q=4, sep=4.0):
    """Rows of I for N = 1: x-cells ``xe`` (edges) against y-cells ``ye``."""
    beta = 2 * a - 1
    x0, x1 = xe[:-1, None], xe[1:, None]
    y0, y1 = ye[None, :-1], ye[None, 1:]
    wx, wy = x1 - x0, y1 - y0
    wmax = np.maximum(wx, wy)
    gap = np.maximum(x0 - y1, y0 - x1)
    # same-side part  int int |x - y|^beta, closed form
    D = (_g1(x1 - y0, a) + _g1(x0 - y1, a) - _g1(x1 - y1, a) - _g1(x0 - y0, a))
    same = (x0 == y0) & (x1 == y1)
    D = D + np.where(same, 2 * wx / (2 * a * (2 * a + 1)), 0.0)
    # mirrored part  int int (x + y)^beta, closed form
    S = (_g1(x1 + y1, a) - _g1(x1 + y0, a) - _g1(x0 + y1, a) + _g1(x0 + y0, a))
    # far apart pairs: tensor Gauss-Legendre avoids cancellation
    gx, gw = _gauss_legendre01(q)
    far_d = gap >= sep * wmax
    far_s = (x0 + y0) >= sep * wmax
    if far_d.any() or far_s.any():
        X = x0[..., None, None] + wx[..., None, None] * gx[:, None]
        Y = y0[..., None, None] + wy[..., None, None] * gx[None, :]
        Wt = np.outer(gw, gw)
        jac = wx * wy
        with np.errstate(divide="ignore", invalid="ignore"):
            Dq = np.einsum("kjab,ab->kj", np.abs(X - Y) ** beta, Wt) * jac
        Sq = np.einsum("kjab,ab->kj", (X + Y) ** beta, Wt) * jac
        D = np.where(far_d, Dq, D)
        S = np.where(far_s, Sq, S)
    # full shells are symmetric pairs of intervals: factor 2
    return 2.0 * (D + S)


def _mean_split(N, beta, big, small):
    """Split the sphere mean as ``reg + (big - small)^(2a-1) * sing``.

    Uses the connection formula of 2F1 around z = 1; accurate when
    ``small / big`` stays away from 0 and 2a - 1 is not an integer.
    """
    ah, bh, ch = -beta / 2, 1 - N / 2 - beta / 2, N / 2
    expo = ch - ah - bh
    x = 1.0 - (small / big) ** 2
    c1 = gamma(ch) * gamma(expo) / (gamma(ch - ah) * gamma(ch - bh))
    c2 = gamma(ch) * gamma(-expo) / (gamma(ah) * gamma(bh))
    scale = big ** beta
    reg = scale * c1 * hyp2f1(ah, bh, 1 - expo, x)
    sing = scale * c2 * ((big + small) / big ** 2) ** expo * hyp2f1(ch - ah, ch - bh, 1 + expo, x)
    return reg, sing


def _near_pair_split(N, a, lo0, lo1, hi0, hi1, q=16):
    """Shell integral for an identical or adjacent pair away from the origin."""
    beta = 2 * a - N
    expo = 2 * a - 1
    gx, gw = _gauss_legendre01(q)
    jx, jw = _gauss_jacobi01(q, expo + 1.0)
    zx, zw = _gauss_jacobi01(q, expo)
    if lo0 == hi0:
        e, w = lo0, lo1 - lo0
        # triangle t <= r: r = e + w eta, t = r - w eta zeta
        E, Z = np.meshgrid(gx, gx, indexing="ij")
        r = e + w * E
        t = r - w * E * Z
        reg, _ = _mean_split(N, beta, r, t)
        val = np.einsum("i,j,ij->", gw, gw, E * (r * t) ** (N - 1) * reg)
        E, Z = np.meshgrid(jx, zx, indexing="ij")
        r = e + w * E
        t = r - w * E * Z
        _, sing = _mean_split(N, beta, r, t)
        val += w ** expo * np.einsum("i,j,ij->", jw, zw, (r * t) ** (N - 1) * sing)
        return 2 * w * w * val
    # adjacent: small = e - w x in lo, big = e + w y in hi, big - small = w (x + y)
    e, w = lo1, lo1 - lo0
    total = 0.0
    for rule, weight in (((gx, gw), "reg"), ((jx, jw), "sing")):
        XI, ETA = np.meshgrid(rule[0], gx, indexing="ij")
        for xs, ys in ((XI, XI * ETA), (XI * ETA, XI)):
            small = e - w * xs
            big = e + w * ys
            reg, sing = _mean_split(N, beta, big, small)
            base = (small * big) ** (N - 1)
            if weight == "reg":
                vals = XI * base * reg
            else:
                vals = w ** expo * (1 + ETA) ** expo * base * sing
            total += np.einsum("i,j,ij->", rule[1], gw, vals)
    return w * w * total


def _origin_pair(N, a, w, adjacent):
    """Pairs touching the first shell, by adaptive quadrature."""
    from scipy.integrate import quad
    beta = 2 * a - N
    if not adjacent:
        # r = w eta, t = r (1 - zeta): the eta integral is a pure power
        if 2 * a < 1:
            # zeta = v^(1/(2a)) absorbs the zeta^(2a-1) singularity
            pw = 1.0 / (2 * a)

            def g(v):
                z = v ** pw
                if z < 0.5:
                    reg, sing = _mean_split(N, beta, 1.0, 1.0 - z)
                    return (1 - z) ** (N - 1) * (reg * pw * v ** (pw - 1) + sing * pw)
                return (1 - z) ** (N - 1) * float(_sphere_mean(N, beta, 1.0, 1.0 - z)) * pw * v ** (pw - 1)
        else:
            def g(z):
                return (1 - z) ** (N - 1) * float(_sphere_mean(N, beta, 1.0, 1.0 - z))
        inner = quad(g, 0.0, 1.0, epsabs=0, epsrel=1e-12, limit=200)[0]
        return 2 * w ** (2 * N + beta) / (2 * N + beta) * inner

    def outer(r):
        f = lambda t: (r * t) ** (N - 1) * float(_sphere_mean(N, beta, r, t))
        return quad(f, w, 2 * w, epsabs=0, epsrel=1e-12, limit=200)[0]
    return quad(outer, 0.0, w, epsabs=0, epsrel=1e-11, limit=200)[0]


def _near_pair(N, a, k, j, x0, x1, y0, y1):
    S2 = (N * unit_ball_volume(N)) ** 2
    if not math.isclose(x1 - x0, y1 - y0, rel_tol=1e-9):
        raise BuildError("touching shells must have equal widths")
    w = x1 - x0
    if min(x0, y0) == 0.0:
        return S2 * _origin_pair(N, a, w, adjacent=(x0 != y0))
    lo0, lo1, hi0, hi1 = (x0, x1, y0, y1) if x0 <= y0 else (y0, y1, x0, x1)
    expo = 2 * a - 1
    k_int = round(expo)
    delta = 1e-3
    if abs(expo - k_int) >= delta:
        return S2 * _near_pair_split(N, a, lo0, lo1, hi0, hi1)
    # integer 2a - 1 makes the split degenerate: interpolate in the order
    # through four nearby non-degenerate orders (error O(delta^4))
    nodes = [(k_int + 1 + d * delta) / 2 for d in (-2, -1, 1, 2)]
    vals = [_near_pair_split(N, b, lo0, lo1, hi0, hi1) for b in nodes]
    total = 0.0
    for i, (bi, vi) in enumerate(zip(nodes, vals)):
        li = 1.0
        for j, bj in enumerate(nodes):
            if j != i:
                li *= (a - bj) / (bi - bj)
        total += li * vi
    return S2 * total


def _block_nd(N, xe, ye, a, sep=4.0):
    """Rows of I for N >= 2 (x-cells against y-cells)."""
    beta = 2 * a - N
    S2 = (N * unit_ball_volume(N)) ** 2
    x0, x1 = xe[:-1], xe[1:]
    y0, y1 = ye[:-1], ye[1:]
    wx = (x1 - x0)[:, None]
    wy = (y1 - y0)[None, :]
    wmax = np.maximum(wx, wy)
    gap = np.maximum(x0[:, None] - y1[None, :], y0[None, :] - x1[:, None])
    out = np.empty((x0.size, y0.size))
    for q, mask in ((3, gap >= 2 * sep * wmax),
                    (6, (gap >= sep * wmax) & (gap < 2 * sep * wmax)),
                    (14, (gap > 0) & (gap < sep * wmax))):
        ki, ji = np.nonzero(mask)
        if ki.size == 0:
            continue
        gx, gw = _gauss_legendre01(q)
        R = x0[ki, None] + (x1 - x0)[ki, None] * gx[None, :]
        T = y0[ji, None] + (y1 - y0)[ji, None] * gx[None, :]
        F = ((R[:, :, None] * T[:, None, :]) ** (N - 1)
             * _sphere_mean(N, beta, R[:, :, None], T[:, None, :]))
        val = np.einsum("pab,a,b->p", F, gw, gw) * (x1 - x0)[ki] * (y1 - y0)[ji]
        out[ki, ji] = S2 * val
    ki, ji = np.nonzero(gap <= 0)
    for k, j in zip(ki, ji):
        out[k, j] = _near_pair(N, a, k, j, x0[k], x1[k], y0[j], y1[j])
    return out


def _exterior_edges(grid: RadialGrid, growth: float, far_factor: float):
    R, h = grid.R_dom, grid.h
    R_far = far_factor * R
    edges = [R]
    w = h
    while edges[-1] < R_far:
        edges.append(edges[-1] + w)
        w *= 1.0 + growth
    edges[-1] = max(edges[-1], R_far)
    return np.asarray(edges)


def _cache_dir() -> Optional[Path]:
    d = os.environ.get(CACHE_ENV)
    return Path(d) if d else None


class RieszOperator:
    """Galerkin realization of ``K_a *`` on a radial grid.

    Attributes
    ----------
    grid : RadialGrid
    order : float
        Kernel index ``a``.
    c : float
        ``c_{N,a}``.
    A : ndarray, shape (n_ext, n)
        Shell-averaged potential on the inner grid followed by the exterior
        shells, per unit density on each inner shell.
    ext_edges, ext_vol : ndarray
        Edges and volumes of all ``n_ext`` shells (inner grid first).
    R_far : float
        Radius beyond which the monopole tail is used (``None`` if the
        operator was built without exterior).
    """

    def __init__(self, grid, order, c, A, ext_edges, R_far, meta):
        self.grid = grid
        self.order = float(order)
        self.c = float(c)
        self.A = A
        self.A.setflags(write=False)
        self.ext_edges = ext_edges
        self.ext_vol = grid.omega * np.diff(ext_edges ** grid.N)
        self.R_far = R_far
        self.meta = meta
        self._hash = None

    @property
    def weights(self) -> np.ndarray:
        """Inner block ``W`` with ``(K_a * rho)(r_i) ~ sum_j W[i, j] v_j``."""
        return self.A[: self.grid.n]

    @property
    def has_exterior(self) -> bool:
        return self.R_far is not None

    @property
    def content_hash(self) -> str:
        if self._hash is None:
            h = hashlib.sha256()
            h.update(np.ascontiguousarray(self.A).tobytes())
            h.update(np.ascontiguousarray(self.ext_edges).tobytes())
            self._hash = h.hexdigest()
        return self._hash

    def _check(self, rho: RadialDensity):
        if rho.grid != self.grid:
            raise GridMismatchError(f"operator grid {self.grid!r} != density grid {rho.grid!r}")

    def apply_values(self, v: np.ndarray) -> np.ndarray:
        return self.weights @ v

    def apply(self, rho: RadialDensity) -> RadialDensity:
        """Potential ``K_a * rho`` sampled on the inner grid."""
        self._check(rho)
        return RadialDensity(self.grid, np.maximum(self.apply_values(rho.values), 0.0))

    def field(self, v: np.ndarray) -> np.ndarray:
        """Potential on inner and exterior shells."""
        return self.A @ v

    def pullback(self, w_ext: np.ndarray) -> np.ndarray:
        """Adjoint action: ``K_a * w`` on the inner grid for w given on all shells."""
        return (self.A.T @ (self.ext_vol * w_ext)) / self.grid.vol

    def _tail_factor(self, q: float) -> float:
        N, a = self.grid.N, self.order
        e = (N - 2 * a) * q - N
        if e <= 0:
            raise DomainError("far-field power is not integrable for this exponent")
        return N * unit_ball_volume(N) * self.R_far ** (-e) / e

    def tail_norm(self, mass: float, q: float) -> float:
        """Integral of (K_a * rho)^q beyond ``R_far`` (monopole approximation)."""
        return (self.c * mass) ** q * self._tail_factor(q)

    def tail_potential(self, mass: float, q: float) -> float:
        """Potential on the inner grid generated by (K_a * rho)^(q-1) beyond ``R_far``."""
        return self.c * (self.c * mass) ** (q - 1) * self._tail_factor(q)

    def rescaled(self, L: float) -> "RieszOperator":
        """Operator on the grid stretched by ``L`` (no quadrature needed).

        The kernel is homogeneous of degree ``2a - N``, so every matrix
        entry picks up the factor ``L^{2a}``.
        """
        if not L > 0:
            raise ParameterError("stretch factor must be > 0")
        g = self.grid
        grid = RadialGrid(g.N, g.n, g.R_dom * L)
        meta = dict(self.meta, R_dom=grid.R_dom, stretched_by=float(L))
        R_far = None if self.R_far is None else self.R_far * L
        return RieszOperator(grid, self.order, self.c, self.A * L ** (2 * self.order),
                             self.ext_edges * L, R_far, meta)

    # -- persistence -------------------------------------------------------
    def key(self) -> dict:
        return dict(self.meta)

    def save(self, directory: Path) -> None:
        directory.mkdir(parents=True, exist_ok=True)
        stem = _cache_stem(self.meta)
        np.savez(directory / f"{stem}.npz", A=self.A, ext_edges=self.ext_edges)
        (directory / f"{stem}.json").write_text(json.dumps(self.meta, sort_keys=True))


def _cache_stem(meta: dict) -> str:
    text = json.dumps(meta, sort_keys=True)
    return "op_" + hashlib.sha256(text.encode()).hexdigest()[:24]


def build_operator(grid: RadialGrid, a: float, *, exterior: bool = True,
                   growth: Optional[float] = None, far_factor: float = 1e4,
                   threads: int = 1, cache: Optional[bool] = None) -> RieszOperator:
    """Assemble the Galerkin matrix of ``K_a *`` on ``grid``.

    Parameters
    ----------
    grid : RadialGrid
    a : float
        Kernel order in (0, N/2).
    exterior : bool
        Also assemble rows for exterior shells (needed by the nonlinear
        potential and the interaction energy; not by a plain convolution).
    growth : float, optional
        Width ratio minus one between consecutive exterior shells; defaults
        to ``min(0.05, 16/n)`` so the exterior error shrinks with the grid.
    far_factor : float
        Exterior shells reach ``far_factor * R_dom``.
    threads : int
        Worker threads for row blocks.
    cache : bool, optional
        Use the on-disk cache in ``$RIESZFLOW_CACHE`` (default: when set).
    """
    c = riesz_constant(grid.N, a)
    if growth is None:
        growth = min(0.05, 16.0 / grid.n)
    if exterior:
        outer = _exterior_edges(grid, growth, far_factor)
        ext_edges = np.concatenate((grid.edges[:-1], outer))
        R_far = float(outer[-1])
    else:
        ext_edges = np.array(grid.edges)
        R_far = None
    meta = {"N": grid.N, "a": float(a), "n": grid.n, "R_dom": grid.R_dom,
            "exterior": bool(exterior), "growth": float(growth),
            "far_factor": float(far_factor), "version": _BUILD_VERSION}

    cdir = _cache_dir() if cache in (None, True) else None
    if cdir is not None:
        path = cdir / f"{_cache_stem(meta)}.npz"
        if path.exists():
            with np.load(path) as data:
                return RieszOperator(grid, a, c, data["A"].copy(),
                                     data["ext_edges"].copy(), R_far, meta)

    n_ext = ext_edges.size - 1
    rows_per_block = max(1, 65536 // grid.n) if grid.N == 1 else 16
    blocks = [(i, min(i + rows_per_block, n_ext)) for i in range(0, n_ext, rows_per_block)]
    I = np.empty((n_ext, grid.n))

    def work(b):
        lo, hi = b
        xe = ext_edges[lo: hi + 1]
        if grid.N == 1:
            I[lo:hi] = _block_1d(xe, grid.edges, a)
        else:
            I[lo:hi] = _block_nd(grid.N, xe, grid.edges, a)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, blocks))
    else:
        for b in blocks:
            work(b)
    if not np.all(np.isfinite(I)) or np.any(I < 0):
        bad = int(np.sum(~np.isfinite(I) | (I < 0)))
        raise BuildError(f"{bad} shell integrals are negative or not finite "
                         f"(N={grid.N}, a={a}, n={grid.n})")
    vol_ext = grid.omega * np.diff(ext_edges ** grid.N)
    A = c * I / vol_ext[:, None]
    op = RieszOperator(grid, a, c, A, ext_edges, R_far, meta)
    if cdir is not None:
        op.save(cdir)
    return op


# ---------------------------------------------------------------------------
# nonlinear potential


def potential_terms(op: RieszOperator, v: np.ndarray, q: float):
    """Nonlinear potential and the q-norm power of the intermediate field.

    Returns
    -------
    K : ndarray
        ``K_a * (K_a * rho)^(q-1)`` on the inner grid.
    X : float
        ``||K_a * rho||_q^q`` over the whole space.
    u : ndarray
        ``K_a * rho`` on all shells.
    """
    if not op.has_exterior:
        raise ParameterError("nonlinear potential needs an operator built with exterior=True")
    u = np.maximum(op.field(v), 0.0)
    mass = float(np.dot(op.grid.vol, v))
    uq1 = u ** (q - 1)
    X = float(np.dot(op.ext_vol, uq1 * u)) + op.tail_norm(mass, q)
    K = op.pullback(uq1) + op.tail_potential(mass, q)
    return K, X, u


def nonlinear_potential(params, op_half: RieszOperator, rho: RadialDensity) -> RadialDensity:
    """``K_{s/2} * (K_{s/2} * rho)^(p'-1)`` on the grid of ``rho``."""
    _check_half(params, op_half)
    op_half._check(rho)
    K, _, _ = potential_terms(op_half, rho.values, params.p_conj)
    return RadialDensity(rho.grid, np.maximum(K, 0.0))


def interaction_norm(params, op_half: RieszOperator, rho: RadialDensity) -> float:
    """``||K_{s/2} * rho||_{p'}^{p'}`` over the whole space."""
    _check_half(params, op_half)
    op_half._check(rho)
    _, X, _ = potential_terms(op_half, rho.values, params.p_conj)
    return X


def _check_half(params, op):
    if params.N != op.grid.N or not math.isclose(op.order, params.s / 2, rel_tol=1e-12):
        raise ParameterError(f"operator of order {op.order} does not match s/2={params.s / 2}")


def kurokawa_error(h: RadialDensity, s: float, q: float,
                   op: Optional[RieszOperator] = None) -> float:
    """``||K_{s/2} * h - h||_q`` over the whole space."""
    if not q > 1:
        raise ParameterError("q must be > 1")
    if op is None:
        op = build_operator(h.grid, s / 2)
    if not math.isclose(op.order, s / 2, rel_tol=1e-12):
        raise ParameterError("operator order must be s/2")
    op._check(h)
    if h.mass == 0.0:
        return 0.0
    u = op.field(h.values)
    n = h.grid.n
    inner = np.abs(u[:n] - h.values) ** q
    total = float(np.dot(h.grid.vol, inner)) + float(np.dot(op.ext_vol[n:], u[n:] ** q))
    total += op.tail_norm(h.mass, q)
    return total ** (1.0 / q)
