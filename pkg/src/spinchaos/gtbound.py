"""Two-system recursion, the overlap-constrained bound and the chaos-gap scan.

The 2-D solution ``Psi(s, x1, x2)`` is driven by the covariance matrix ``T(s)``,
whose eigenvectors are always ``(1, 1)/sqrt 2`` and ``(1, -1)/sqrt 2``.  Work is
done in the rotated coordinates ``y1 = (x1 + x2)/sqrt 2``, ``y2 = (x1 - x2)/sqrt 2``,
where a Gaussian increment with covariance ``[[A, B], [B, A]]`` splits into
independent increments of variance ``A + B`` and ``A - B``.  One recursion step
is then two 1-D passes: along ``y2`` and, on the result, along ``y1``.

On ``[|q|, 1]`` the matrix is diagonal and ``Psi(|q|, x) = Phi(|q|, x1) + Phi(|q|, x2)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr, owens_t

from .errors import DomainError, NumericError
from .kernels import SMALL_M, AbsLevel, _lagrange_weights, gauss_hermite, interp_cubic_rows, log_moment
from .mixing import GammaQ, MixingPair, StepGamma, gamma_q, integrate_gamma
from .parisi import FINE, PdeGrid, PhiSolution, parisi_value, solve_phi

SQRT2 = np.sqrt(2.0)


def t_matrix(mixing: MixingPair, q: float, s: float) -> np.ndarray:
    if abs(q) > 1 or not 0.0 <= s <= 1.0:
        raise DomainError("need |q| <= 1 and s in [0, 1]")
    iota = 1 if q >= 0 else -1
    d = float(mixing.xi(s, 2))
    off = iota * float(mixing.xi0(iota * s, 2)) if s < abs(q) else 0.0
    return np.array([[d, off], [off, d]])


def piece_covariance(mixing: MixingPair, q: float, lo: float, hi: float) -> tuple[float, float]:
    """``(A, B)`` with ``int_lo^hi T(s) ds = [[A, B], [B, A]]``."""
    iota = 1 if q >= 0 else -1
    A = float(mixing.xi(hi, 1) - mixing.xi(lo, 1))
    lo_c, hi_c = min(lo, abs(q)), min(hi, abs(q))
    B = float(mixing.xi0(iota * hi_c, 1) - mixing.xi0(iota * lo_c, 1)) if hi_c > lo_c else 0.0
    return A, B


# ---------------------------------------------------------------------------
# bivariate normal orthant probabilities
# ---------------------------------------------------------------------------


def bvn_cdf(h, k, rho: float) -> np.ndarray:
    """``P(Z1 <= h, Z2 <= k)`` for standard normals with correlation ``rho`` (Owen's T form)."""
    h = np.asarray(h, dtype=float)
    k = np.asarray(k, dtype=float)
    c = np.sqrt(1.0 - rho * rho)
    with np.errstate(divide="ignore", invalid="ignore"):
        a1 = np.where(h != 0, (k - rho * h) / (h * c), np.where(k - rho * h >= 0, np.inf, -np.inf))
        a2 = np.where(k != 0, (h - rho * k) / (k * c), np.where(h - rho * k >= 0, np.inf, -np.inf))
    beta = np.where((h * k > 0) | ((h * k == 0) & (h + k >= 0)), 0.0, 0.5)
    out = 0.5 * (ndtr(h) + ndtr(k)) - owens_t(h, a1) - owens_t(k, a2) - beta
    out = np.where((h == 0) & (k == 0), 0.25 + np.arcsin(rho) / (2 * np.pi), out)
    return np.clip(out, 0.0, 1.0)


def _absmean(x, var):
    s = np.sqrt(var)
    return x * (2.0 * ndtr(x / s) - 1.0) + 2.0 * s * np.exp(-0.5 * (x / s) ** 2) / np.sqrt(2 * np.pi)


# ---------------------------------------------------------------------------
# 2-D levels (all evaluated in rotated coordinates)
# ---------------------------------------------------------------------------


class SumLevel:
    """``L(x1) + L(x2)`` for a 1-D level ``L``."""

    def __init__(self, level):
        self.level = level

    def value(self, y1, y2):
        x1 = (y1 + y2) / SQRT2
        x2 = (y1 - y2) / SQRT2
        return self.level.value(x1) + self.level.value(x2)

    def grad_x(self, x1, x2):
        return self.level.deriv(x1), self.level.deriv(x2)


@dataclass(frozen=True)
class OrthantLevel:
    """Exact image of ``|x1| + |x2|`` under one step with exponent ``m`` and covariance ``[[A, B], [B, A]]``."""

    m: float
    A: float
    B: float

    def value(self, y1, y2):
        x1 = (np.asarray(y1) + y2) / SQRT2
        x2 = (np.asarray(y1) - y2) / SQRT2
        A, B, m = self.A, self.B, self.m
        if m < 1e-10:
            return _absmean(x1, A) + _absmean(x2, A)
        rho = B / A
        sa = np.sqrt(A)
        terms = []
        for e1 in (1, -1):
            for e2 in (1, -1):
                mu1 = x1 + m * (A * e1 + B * e2)
                mu2 = x2 + m * (B * e1 + A * e2)
                p = bvn_cdf(e1 * mu1 / sa, e2 * mu2 / sa, e1 * e2 * rho)
                with np.errstate(divide="ignore"):
                    terms.append(m * (e1 * x1 + e2 * x2) + 0.5 * m * m * (2 * A + 2 * e1 * e2 * B) + np.log(p))
        return np.logaddexp.reduce(np.stack(terms), axis=0) / m


@dataclass(frozen=True)
class Grid2DLevel:
    y0: float
    h: float
    values: np.ndarray  # indexed [i1, i2] over (y1, y2)

    def gradient(self) -> tuple[np.ndarray, np.ndarray]:
        g = self.__dict__.get("_grad")
        if g is None:
            g = tuple(np.gradient(self.values, self.h, edge_order=2))
            object.__setattr__(self, "_grad", g)
        return g

    def value(self, y1, y2):
        return bicubic(self.values, self.y0, self.h, y1, y2, self.gradient())

    def grad_y(self, y1, y2):
        g1, g2 = self.gradient()
        return (bicubic(g1, self.y0, self.h, y1, y2, None),
                bicubic(g2, self.y0, self.h, y1, y2, None))


def bicubic(values, y0, h, y1, y2, grad=None):
    """Tensor four-point Lagrange interpolation.

    Outside the grid the function is continued linearly with the edge
    gradient ``grad`` when given, and held constant otherwise.
    """
    y1, y2 = np.broadcast_arrays(np.asarray(y1, float), np.asarray(y2, float))
    n = values.shape[0]
    u = np.clip((y1 - y0) / h, 0, n - 1)
    v = np.clip((y2 - y0) / h, 0, n - 1)
    i = np.clip(np.floor(u).astype(np.int64), 1, n - 3)
    j = np.clip(np.floor(v).astype(np.int64), 1, n - 3)
    wu = _lagrange_weights(u - i)
    wv = _lagrange_weights(v - j)
    out = np.zeros(y1.shape)
    for a in range(4):
        row = np.zeros(y1.shape)
        for b in range(4):
            row += wv[b] * values[i - 1 + a, j - 1 + b]
        out += wu[a] * row
    if grad is not None:
        du = (y1 - y0) / h - u
        dv = (y2 - y0) / h - v
        if np.any(du) or np.any(dv):
            ic = np.rint(u).astype(np.int64)
            jc = np.rint(v).astype(np.int64)
            out = out + du * h * grad[0][ic, jc] + dv * h * grad[1][ic, jc]
    return out


# ---------------------------------------------------------------------------
# solver
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PsiGrid:
    cells: int = 256  # per half axis; 2*cells + 1 nodes per axis
    width: float = 4.0
    order: int = 64
    ratio: float = 0.7
    chunk: int = 32

    def nodes(self, mixing: MixingPair) -> tuple[np.ndarray, float]:
        Y = self.width * np.sqrt(2.0 * max(mixing.xi(1.0, 1), 1e-12))
        y = np.linspace(-Y, Y, 2 * self.cells + 1)
        return y, y[1] - y[0]


PSI_FINE = PsiGrid()
PSI_COARSE = PsiGrid(cells=64, order=32, ratio=0.7)


def _pass_rows(values_fn, deriv, coords, h_grid, var, m, order, chunk, y0, grid_rows=None):
    """One 1-D recursion step applied to every row.

    ``values_fn(rows, pts)`` evaluates the level on row indices ``rows`` at
    along-row positions ``pts`` (shape (len(rows), n, order)).  ``deriv`` is
    the along-row derivative on the grid, used for the tilt.
    """
    z, w = gauss_hermite(order)
    s = np.sqrt(var)
    n_rows = deriv.shape[0]
    out = np.empty_like(deriv)
    for start in range(0, n_rows, chunk):
        rows = np.arange(start, min(start + chunk, n_rows))
        base_pts = coords[None, :, None]
        if m < SMALL_M:
            pts = base_pts + s * z
            F = values_fn(rows, np.broadcast_to(pts, (rows.size, coords.size, z.size)))
            out[rows] = log_moment(F, w, m)
            continue
        a = m * s * deriv[rows]
        za = z + a[..., None]
        F = values_fn(rows, base_pts + s * za)
        shift = a[..., None] * za - 0.5 * a[..., None] ** 2
        base = values_fn(rows, np.broadcast_to(coords[None, :, None], (rows.size, coords.size, 1)))[..., 0]
        out[rows] = log_moment(F, w, m, shift=shift, base=base)
    return out


def step2d(level, m: float, var1: float, var2: float, y: np.ndarray, h: float, grid: PsiGrid) -> Grid2DLevel:
    """Recursion step with independent variances ``var1`` (along y1) and ``var2`` (along y2)."""
    Y1, Y2 = np.meshgrid(y, y, indexing="ij")
    if isinstance(level, Grid2DLevel):
        vals = level.values
        exact = None
    else:
        vals = level.value(Y1, Y2)
        exact = level
    # pass along y2 (rows indexed by y1)
    if var2 > 0:
        d2 = np.gradient(vals, h, axis=1, edge_order=2)
        if exact is None:
            def f2(rows, pts):
                return interp_cubic_rows(vals[rows], y[0], h, pts.reshape(rows.size, -1)).reshape(pts.shape)
        else:
            def f2(rows, pts):
                return exact.value(y[rows][:, None, None], pts)
        vals = _pass_rows(f2, d2, y, h, var2, m, grid.order, grid.chunk, y[0])
    elif exact is not None:
        pass
    # pass along y1 (work on the transpose so rows are indexed by y2)
    if var1 > 0:
        vt = np.ascontiguousarray(vals.T)
        d1 = np.gradient(vt, h, axis=1, edge_order=2)
        if var2 > 0 or exact is None:
            def f1(rows, pts):
                return interp_cubic_rows(vt[rows], y[0], h, pts.reshape(rows.size, -1)).reshape(pts.shape)
        else:
            def f1(rows, pts):
                return exact.value(pts, y[rows][:, None, None])
        vals = _pass_rows(f1, d1, y, h, var1, m, grid.order, grid.chunk, y[0]).T
    if not np.all(np.isfinite(vals)):
        raise NumericError("non-finite values in the two-system recursion")
    return Grid2DLevel(y[0], h, np.ascontiguousarray(vals))


@dataclass
class PsiSolution:
    mixing: MixingPair
    gamma: StepGamma
    q: float
    grid: PsiGrid
    y: np.ndarray
    h: float
    phi: PhiSolution | None
    s_levels: list = field(default_factory=list)
    levels: list = field(default_factory=list)
    accs: list = field(default_factory=list)

    def start_variances(self) -> tuple[float, float]:
        """Rotated variances of the degree-1 fields (covariance ``[[xi'(0), xi0'(0)], [xi0'(0), xi'(0)]]``)."""
        a = float(self.mixing.xi(0.0, 1))
        b = float(self.mixing.xi0(0.0, 1))
        return a + b, max(a - b, 0.0)

    def value0(self) -> float:
        lvl = self.levels[-1]
        v1, v2 = self.start_variances()
        if v1 <= 0 and v2 <= 0:
            return float(np.asarray(lvl.value(np.array(0.0), np.array(0.0))))
        z, w = gauss_hermite(self.grid.order)
        Z1, Z2 = np.meshgrid(np.sqrt(v1) * z, np.sqrt(v2) * z, indexing="ij")
        return float(np.sum(np.outer(w, w) * lvl.value(Z1, Z2)))

    def level_at(self, w: float):
        """Level for ``Psi(w, .)`` (one step from the stored level above when needed)."""
        if w >= self.s_levels[0] and self.s_levels[0] < 1:
            return SumLevel(self.phi.level_at(w))
        j = max(i for i, s in enumerate(self.s_levels) if s >= w - 1e-15)
        if self.s_levels[j] - w <= 1e-15:
            return self.levels[j]
        A, B = piece_covariance(self.mixing, self.q, w, self.s_levels[j])
        m = float(self.gamma(w))
        return step2d(self.levels[j], m, A + B, A - B, self.y, self.h, self.grid)


def _next_cut(mixing, q, lo, hi, acc, ratio):
    """Smallest ``s`` in [lo, hi) whose step to ``hi`` respects the variance ratio."""
    A, B = piece_covariance(mixing, q, lo, hi)
    limit = ratio ** 2 * acc
    if acc <= 0 or max(A + B, A - B) <= limit:
        return lo

    def excess(s):
        a, b = piece_covariance(mixing, q, s, hi)
        return max(a + b, a - b) - limit

    return brentq(excess, lo, hi, xtol=1e-14)


def solve_psi(mixing: MixingPair, gamma: StepGamma, q: float, grid: PsiGrid = PSI_FINE,
              phi_grid: PdeGrid = FINE, full_2d: bool = False) -> PsiSolution:
    """Two-system solution for overlap ``q``.

    By default ``[|q|, 1]`` is served by the product form, so ``q = 0`` needs no
    2-D work at all.  With ``full_2d`` the 2-D recursion runs over the whole of
    ``[0, 1]``, which gives an independent route to the product identity.
    """
    if abs(q) > 1:
        raise DomainError("|q| must not exceed 1")
    y, h = grid.nodes(mixing)
    aq = abs(q)
    phi = solve_phi(mixing, gamma, phi_grid) if aq < 1 else None
    sol = PsiSolution(mixing, gamma, q, grid, y, h, phi)
    top = 1.0 if full_2d else aq
    if aq < 1 and not full_2d:
        lvl1 = phi.level_at(aq)
        level = SumLevel(lvl1)
        acc = 2.0 * lvl1.smooth_var
    else:
        level = SumLevel(AbsLevel())
        acc = 0.0
    sol.s_levels.append(top)
    sol.levels.append(level)
    sol.accs.append(acc)
    if top == 0:
        return sol
    cuts = sorted({0.0, top, *(b for b in (aq, *gamma.breakpoints) if 0 < b < top)})
    for lo, hi in reversed(list(zip(cuts, cuts[1:]))):
        m = float(gamma(0.5 * (lo + hi)))
        cur = hi
        while cur > lo + 1e-15:
            if isinstance(level, SumLevel) and isinstance(level.level, AbsLevel):
                nxt = lo
                A, B = piece_covariance(mixing, q, nxt, cur)
                level = OrthantLevel(m, A, B)
            else:
                nxt = _next_cut(mixing, q, lo, cur, acc, grid.ratio)
                A, B = piece_covariance(mixing, q, nxt, cur)
                level = step2d(level, m, A + B, A - B, y, h, grid)
            acc += 2.0 * A
            cur = nxt
            sol.s_levels.append(cur)
            sol.levels.append(level)
            sol.accs.append(acc)
    return sol


# ---------------------------------------------------------------------------
# functional and scan
# ---------------------------------------------------------------------------

# Weight of the correction integrals in the two-system functional; see gt_value.
GT_CORRECTION = 1.0


def gt_correction(mixing: MixingPair, gamma, q: float) -> float:
    iota = 1 if q >= 0 else -1
    return GT_CORRECTION * (integrate_gamma(mixing, gamma)
                            + integrate_gamma(mixing, gamma, upper=abs(q), cross=True, iota=iota))


def psi0(mixing: MixingPair, gamma: StepGamma, q: float, grid: PsiGrid = PSI_FINE,
         phi_grid: PdeGrid = FINE, full_2d: bool = False) -> float:
    return solve_psi(mixing, gamma, q, grid, phi_grid, full_2d).value0()


def gt_value(mixing: MixingPair, gamma, q: float, grid: PsiGrid = PSI_FINE, phi_grid: PdeGrid = FINE,
             step_width: float = 0.01) -> float:
    """Two-system functional ``Psi(0, 0, 0) - c(gamma, q)``.

    ``gamma`` may be a :class:`GammaQ`; its step version drives the PDE while
    the correction integrals use the exact function.  The correction is the
    sum of both integrals (weight ``GT_CORRECTION``), which makes the value at
    ``q = 0`` or ``xi0 = 0`` equal to twice the one-system functional.
    """
    step = gamma.as_step(step_width) if isinstance(gamma, GammaQ) else gamma
    return psi0(mixing, step, q, grid, phi_grid) - gt_correction(mixing, gamma, q)


@dataclass
class GapRow:
    q: float
    gt_value: float
    two_parisi: float
    gap: float

    def row(self) -> dict:
        return {"q": self.q, "gt_value": self.gt_value, "two_parisi": self.two_parisi, "gap": self.gap}


@dataclass
class GapScan:
    mixing: MixingPair
    gamma_P: StepGamma
    rows: list
    tol: float = 1e-6

    @property
    def max_gap(self) -> float:
        return max(r.gap for r in self.rows)

    def eta_hat(self, epsilon: float) -> float:
        """Smallest gap magnitude over ``|q| > epsilon`` (``-max gap``)."""
        sel = [r.gap for r in self.rows if abs(r.q) > epsilon]
        return -max(sel) if sel else float("nan")

    @property
    def passed(self) -> bool:
        return all(r.gap <= self.tol for r in self.rows)


def gap_at(mixing: MixingPair, gamma_P: StepGamma, q: float, two_parisi: float,
           grid: PsiGrid = PSI_FINE, phi_grid: PdeGrid = FINE, step_width: float = 0.01) -> GapRow:
    if q == 0:
        gq = gamma_P
        val = 2.0 * parisi_value(mixing, gamma_P, phi_grid)
        return GapRow(0.0, val, two_parisi, val - two_parisi)
    gq = gamma_q(mixing, gamma_P, q)
    val = gt_value(mixing, gq, q, grid, phi_grid, step_width)
    return GapRow(float(q), val, two_parisi, val - two_parisi)


def gap_scan(mixing: MixingPair, gamma_P: StepGamma, qs: Sequence[float], grid: PsiGrid = PSI_FINE,
             phi_grid: PdeGrid = FINE, tol: float = 1e-6, step_width: float = 0.01) -> GapScan:
    two_parisi = 2.0 * parisi_value(mixing, gamma_P, phi_grid)
    rows = [gap_at(mixing, gamma_P, float(q), two_parisi, grid, phi_grid, step_width) for q in qs]
    return GapScan(mixing, gamma_P, rows, tol)


# ---------------------------------------------------------------------------
# finite-difference oracle
# ---------------------------------------------------------------------------


def solve_psi_fd(mixing: MixingPair, gamma: StepGamma, q: float, h: float = 0.05,
                 half_width: float | None = None, cfl: float = 0.2) -> float:
    """Explicit 2-D finite differences in the original coordinates; returns ``Psi(0, 0, 0)``.

    Starts from the 1-D finite-difference profile at ``|q|`` and uses central
    differences for all first and second derivatives, linear extrapolation
    at the edges.
    """
    from .parisi import solve_phi_fd

    aq = abs(q)
    L = half_width or (4.0 * np.sqrt(mixing.xi(1.0, 1)) + 3.0)
    x, prof = solve_phi_fd(mixing, gamma, h, L, s_end=aq)
    psi = prof[:, None] + prof[None, :]
    iota = 1 if q >= 0 else -1
    cuts = sorted({0.0, aq, *(b for b in gamma.breakpoints if b < aq)})
    for lo, hi in reversed(list(zip(cuts, cuts[1:]))):
        g = float(gamma(0.5 * (lo + hi)))
        d_max = max(float(mixing.xi(lo, 2)), float(mixing.xi(hi, 2)))
        o_max = max(abs(float(mixing.xi0(iota * lo, 2))), abs(float(mixing.xi0(iota * hi, 2))))
        nsteps = max(1, int(np.ceil((hi - lo) * (d_max + o_max) / (cfl * h * h))))
        ds = (hi - lo) / nsteps
        for k in range(nsteps):
            sm = hi - (k + 0.5) * ds
            d = float(mixing.xi(sm, 2))
            o = iota * float(mixing.xi0(iota * sm, 2))
            c = psi[1:-1, 1:-1]
            p11 = (psi[2:, 1:-1] - 2 * c + psi[:-2, 1:-1]) / (h * h)
            p22 = (psi[1:-1, 2:] - 2 * c + psi[1:-1, :-2]) / (h * h)
            p12 = (psi[2:, 2:] - psi[2:, :-2] - psi[:-2, 2:] + psi[:-2, :-2]) / (4 * h * h)
            p1 = (psi[2:, 1:-1] - psi[:-2, 1:-1]) / (2 * h)
            p2 = (psi[1:-1, 2:] - psi[1:-1, :-2]) / (2 * h)
            lap = d * (p11 + p22) + 2 * o * p12
            quad = d * (p1 * p1 + p2 * p2) + 2 * o * p1 * p2
            psi[1:-1, 1:-1] = c + ds * 0.5 * (lap + g * quad)
            psi[0, :] = 2 * psi[1, :] - psi[2, :]
            psi[-1, :] = 2 * psi[-2, :] - psi[-3, :]
            psi[:, 0] = 2 * psi[:, 1] - psi[:, 2]
            psi[:, -1] = 2 * psi[:, -2] - psi[:, -3]
    a = float(mixing.xi(0.0, 1))
    b = float(mixing.xi0(0.0, 1))
    if a <= 0:
        mid = x.size // 2
        return float(psi[mid, mid])
    # average over the degree-1 fields against their Gaussian density on the grid
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    det = a * a - b * b
    dens = np.exp(-0.5 * (a * X1 * X1 - 2 * b * X1 * X2 + a * X2 * X2) / det)
    return float(np.sum(dens * psi) / np.sum(dens))


def psi0_fd(mixing: MixingPair, gamma: StepGamma, q: float, h: float = 0.05) -> float:
    """Richardson-extrapolated finite-difference ``Psi(0, 0, 0)``."""
    a = solve_psi_fd(mixing, gamma, q, 2 * h)
    b = solve_psi_fd(mixing, gamma, q, h)
    return b + (b - a) / 3.0
