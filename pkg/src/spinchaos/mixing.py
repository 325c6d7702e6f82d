"""Mixing functions, step-function order parameters and 1-D quadrature.

A :class:`MixingPair` bundles the covariance function ``xi`` of a Gaussian
Hamiltonian with the cross-covariance ``xi0`` of two correlated copies:

* ``pure``:   xi(s) = s**K
* ``ksat``:   xi(s) = (1 + s)**K - 1 = sum_p C(K, p) s**p
* ``custom``: arbitrary nonnegative polynomial coefficients

and ``xi0(s) = t * xi(s)`` ("scaled") or ``xi0(s) = xi(t * s)`` ("argument").
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from math import comb, factorial
from typing import Callable, Iterable

import numpy as np
from numpy.polynomial import Polynomial

from .errors import DomainError, NumericError

KINDS = ("pure", "ksat", "custom")
CORR_KINDS = ("scaled", "argument")

QUAD_TOL = 1e-10


def _falling(K: int, order: int) -> int:
    return factorial(K) // factorial(K - order) if order <= K else 0


def _check_domain(s):
    s_arr = np.asarray(s, dtype=float)
    if np.any(np.abs(s_arr) > 1.0 + 1e-12):
        raise DomainError(f"mixing functions are defined on [-1, 1], got {s!r}")
    return s_arr


@dataclass(frozen=True)
class MixingPair:
    """Covariance ``xi`` and cross-covariance ``xi0`` of two correlated copies.

    For ``kind="custom"``, ``coeffs[p]`` is the coefficient of ``s**p`` in xi and
    ``coeffs0[p]`` the one in xi0 (``t`` and ``corr_kind`` are then ignored).
    """

    kind: str
    K: int = 2
    t: float = 0.5
    corr_kind: str = "scaled"
    coeffs: tuple = ()
    coeffs0: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown mixing kind {self.kind!r}")
        if self.corr_kind not in CORR_KINDS:
            raise DomainError(f"unknown correlation kind {self.corr_kind!r}")
        if self.kind == "custom":
            c = tuple(float(x) for x in self.coeffs)
            c0 = tuple(float(x) for x in self.coeffs0)
            if not c or any(x < 0 for x in c):
                raise DomainError("custom xi needs nonnegative coefficients")
            if c[0] != 0 or (c0 and c0[0] != 0):
                raise DomainError("mixing functions must vanish at 0")
            object.__setattr__(self, "coeffs", c)
            object.__setattr__(self, "coeffs0", c0 or (0.0,))
            object.__setattr__(self, "K", len(c) - 1)
        else:
            if self.K < 2:
                raise DomainError("K must be at least 2")
            if not 0.0 <= self.t <= 1.0:
                raise DomainError(f"t must lie in [0, 1], got {self.t}")

    # -- coefficient views -------------------------------------------------
    @cached_property
    def xi_coefficients(self) -> np.ndarray:
        """``c[p]`` = coefficient of ``s**p`` in xi."""
        if self.kind == "pure":
            c = np.zeros(self.K + 1)
            c[self.K] = 1.0
        elif self.kind == "ksat":
            c = np.array([0.0] + [float(comb(self.K, p)) for p in range(1, self.K + 1)])
        else:
            c = np.array(self.coeffs)
        return c

    @cached_property
    def xi0_coefficients(self) -> np.ndarray:
        if self.kind == "custom":
            c0 = np.zeros(max(len(self.coeffs0), len(self.coeffs)))
            c0[: len(self.coeffs0)] = self.coeffs0
            return c0
        c = self.xi_coefficients
        if self.corr_kind == "scaled":
            return self.t * c
        return c * self.t ** np.arange(len(c))

    @cached_property
    def _poly(self) -> list[Polynomial]:
        p = Polynomial(self.xi_coefficients)
        return [p.deriv(k) if k else p for k in range(4)]

    @cached_property
    def _poly0(self) -> list[Polynomial]:
        p = Polynomial(self.xi0_coefficients)
        return [p.deriv(k) if k else p for k in range(4)]

    # -- evaluation --------------------------------------------------------
    def xi(self, s, order: int = 0):
        s = _check_domain(s)
        if self.kind == "pure":
            f = _falling(self.K, order)
            out = f * s ** (self.K - order) if f else np.zeros_like(s)
        elif self.kind == "ksat":
            f = _falling(self.K, order)
            out = f * (1.0 + s) ** (self.K - order) if f else np.zeros_like(s)
            if order == 0:
                out = out - 1.0
        else:
            out = self._poly[order](s)
        return out if np.ndim(out) else float(out)

    def xi0(self, s, order: int = 0):
        s = _check_domain(s)
        if self.kind == "custom":
            out = self._poly0[order](s)
        elif self.corr_kind == "scaled":
            out = self.t * np.asarray(self.xi(s, order))
        else:
            out = self.t ** order * np.asarray(self.xi(self.t * s, order))
        return out if np.ndim(out) else float(out)

    def zeta(self, s, sign: int = 1):
        """``xi''(s) / (xi''(s) + xi0''(sign * s))`` for ``s`` in (0, 1]."""
        s = np.asarray(s, dtype=float)
        if np.any(s <= 0):
            raise DomainError("zeta is defined for s > 0")
        a = np.asarray(self.xi(s, 2))
        b = np.asarray(self.xi0(np.sign(sign) * s, 2))
        with np.errstate(invalid="ignore", divide="ignore"):
            out = a / (a + b)
        return out if np.ndim(out) else float(out)

    @property
    def is_even(self) -> bool:
        c = self.xi_coefficients
        return not np.any(c[1::2])

    def label(self) -> str:
        if self.kind == "custom":
            return "custom"
        return f"{self.kind}-K{self.K}-{self.corr_kind}-t{self.t:g}"


def xi_eval(m: MixingPair, s, order: int = 0):
    if order not in (0, 1, 2, 3):
        raise DomainError("order must be 0..3")
    return m.xi(s, order)


def xi0_eval(m: MixingPair, s, order: int = 0):
    if order not in (0, 1, 2, 3):
        raise DomainError("order must be 0..3")
    return m.xi0(s, order)


def zeta(m: MixingPair, s, sign: int = 1):
    return m.zeta(s, sign)


# ---------------------------------------------------------------------------
# order parameters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StepGamma:
    """Nondecreasing right-continuous step function on [0, 1].

    ``gamma(s) = m[j]`` on ``[q[j-1], q[j])`` with ``q[-1] := 0``; the last value
    ``m[-1]`` is extended to ``s = 1``.
    """

    q: tuple
    m: tuple

    def __post_init__(self):
        q = tuple(float(x) for x in self.q)
        m = tuple(float(x) for x in self.m)
        if len(q) != len(m) or not q:
            raise DomainError("need as many breakpoints as values (k >= 1)")
        if q[0] <= 0 or q[-1] > 1 or any(b <= a for a, b in zip(q, q[1:])):
            raise DomainError(f"breakpoints must satisfy 0 < q_1 < ... < q_k <= 1: {q}")
        if m[0] < 0 or any(b < a for a, b in zip(m, m[1:])):
            raise DomainError(f"values must be nonnegative and nondecreasing: {m}")
        if not all(np.isfinite(m)):
            raise DomainError("values must be finite")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "m", m)

    @classmethod
    def constant(cls, c: float) -> "StepGamma":
        return cls((1.0,), (c,))

    @property
    def k(self) -> int:
        return len(self.m)

    @property
    def breakpoints(self) -> tuple:
        """Interior jump locations (points of [0, 1] where gamma may jump)."""
        return tuple(x for x in self.q[:-1] if 0 < x < 1)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        idx = np.searchsorted(np.asarray(self.q[:-1]), s, side="right")
        out = np.asarray(self.m)[idx]
        return out if np.ndim(out) else float(out)

    def left_limit(self, s: float) -> float:
        idx = int(np.searchsorted(np.asarray(self.q[:-1]), s, side="left"))
        return self.m[idx]

    def pieces(self) -> list[tuple[float, float, float]]:
        """Constant pieces ``(a, b, value)`` covering [0, 1]."""
        edges = [0.0, *self.q[:-1], 1.0]
        return [(edges[j], edges[j + 1], self.m[j]) for j in range(self.k)]

    def is_zero(self) -> bool:
        return self.m[-1] == 0.0

    def to_text(self) -> str:
        lines = [str(self.k)] + [f"{q:.17g} {m:.17g}" for q, m in zip(self.q, self.m)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "StepGamma":
        rows = [ln.split() for ln in text.strip().splitlines()]
        k = int(rows[0][0])
        if len(rows) != k + 1:
            raise DomainError(f"expected {k} breakpoint lines, got {len(rows) - 1}")
        return cls(tuple(float(r[0]) for r in rows[1:]), tuple(float(r[1]) for r in rows[1:]))


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------


def _simpson(f, a, fa, b, fb):
    c = 0.5 * (a + b)
    fc = f(c)
    return c, fc, (b - a) / 6.0 * (fa + 4.0 * fc + fb)


def adaptive_simpson(f: Callable[[float], float], a: float, b: float,
                     tol: float = QUAD_TOL, max_depth: int = 48) -> float:
    """Adaptive Simpson rule with Richardson correction and absolute ``tol``."""
    if b <= a:
        return 0.0
    fa, fb = f(a), f(b)
    c, fc, whole = _simpson(f, a, fa, b, fb)
    total = 0.0
    stack = [(a, fa, b, fb, c, fc, whole, tol, 0)]
    while stack:
        a, fa, b, fb, c, fc, whole, eps, depth = stack.pop()
        lm, flm, left = _simpson(f, a, fa, c, fc)
        rm, frm, right = _simpson(f, c, fc, b, fb)
        delta = left + right - whole
        if depth >= 3 and abs(delta) <= 15.0 * eps:
            total += left + right + delta / 15.0
        elif depth >= max_depth:
            raise NumericError(f"adaptive Simpson failed to converge on [{a}, {b}]")
        else:
            stack.append((a, fa, c, fc, lm, flm, left, eps / 2.0, depth + 1))
            stack.append((c, fc, b, fb, rm, frm, right, eps / 2.0, depth + 1))
    return total


def integrate(f: Callable[[float], float], a: float, b: float,
              points: Iterable[float] = (), tol: float = QUAD_TOL) -> float:
    """Integrate a piecewise smooth ``f`` over [a, b], splitting at ``points``."""
    cuts = sorted({a, b, *(p for p in points if a < p < b)})
    pieces = list(zip(cuts, cuts[1:]))
    return sum(adaptive_simpson(_piece_function(f, lo, hi), lo, hi, tol / len(pieces))
               for lo, hi in pieces)


def _piece_function(f: Callable, lo: float, hi: float) -> Callable[[float], float]:
    # evaluate a right-continuous function as its continuous extension on [lo, hi]
    eps = 1e-13 * max(1.0, hi - lo)

    def g(s):
        return f(min(max(s, lo + eps), hi - eps))

    return g


def integrate_gamma(m: MixingPair, gamma, upper: float = 1.0, cross: bool = False,
                    iota: int = 1, tol: float = QUAD_TOL) -> float:
    """``int_0^upper s w(s) gamma(s) ds`` with ``w = xi''`` or ``w(s) = xi0''(iota s)``.

    Integrated piece by piece so the integrand is smooth on every sub-interval.
    """
    if upper <= 0:
        return 0.0
    if cross:
        def w(s):
            return m.xi0(iota * s, 2)
    else:
        def w(s):
            return m.xi(s, 2)

    cuts = sorted({0.0, upper, *(p for p in gamma.breakpoints if 0 < p < upper)})
    total = 0.0
    for lo, hi in zip(cuts, cuts[1:]):
        g = _piece_function(gamma, lo, hi)
        total += adaptive_simpson(lambda s: s * w(s) * g(s), lo, hi, tol / (len(cuts) - 1))
    return total


# ---------------------------------------------------------------------------
# the gamma_q construction
# ---------------------------------------------------------------------------

_ZETA_FLOOR = 1e-8


@dataclass(frozen=True)
class GammaQ:
    """``gamma_q(s) = zeta_iota(s) gamma_P(s)`` on [0, |q|) and ``gamma_P`` after."""

    mixing: MixingPair
    gamma_P: StepGamma
    q: float

    @property
    def iota(self) -> int:
        return 1 if self.q >= 0 else -1

    @property
    def abs_q(self) -> float:
        return abs(self.q)

    @property
    def breakpoints(self) -> tuple:
        pts = set(self.gamma_P.breakpoints)
        if self.abs_q < 1:
            pts.add(self.abs_q)
        return tuple(sorted(pts))

    def zeta(self, s):
        return self.mixing.zeta(np.maximum(s, _ZETA_FLOOR), self.iota)

    def __call__(self, s):
        s_arr = np.asarray(s, dtype=float)
        base = np.asarray(self.gamma_P(s_arr), dtype=float)
        below = s_arr < self.abs_q
        if np.any(below) and np.any(base[below] != 0):
            base = np.where(below, np.asarray(self.zeta(np.where(below, s_arr, 1.0))) * base, base)
        return base if np.ndim(base) else float(base)

    def zeta_is_constant(self, lo: float, hi: float, rtol: float = 1e-13) -> bool:
        z = np.asarray(self.zeta(np.linspace(max(lo, _ZETA_FLOOR), hi, 9)))
        return bool(np.ptp(z) <= rtol * np.max(np.abs(z)))

    def as_step(self, max_width: float = 0.01) -> StepGamma:
        """Step-function version: exact where zeta is constant, midpoint rule otherwise."""
        qs, ms = [], []
        cuts = [0.0, *self.breakpoints, 1.0]
        for lo, hi in zip(cuts, cuts[1:]):
            g = float(self(0.5 * (lo + hi)) if hi <= self.abs_q else self.gamma_P(0.5 * (lo + hi)))
            if hi <= self.abs_q and not self.zeta_is_constant(lo, hi):
                n = max(1, int(np.ceil((hi - lo) / max_width)))
                edges = np.linspace(lo, hi, n + 1)
                for a, b in zip(edges, edges[1:]):
                    qs.append(float(b))
                    ms.append(float(self(0.5 * (a + b))))
                continue
            qs.append(hi)
            ms.append(g)
        # merge equal neighbours so breakpoints stay meaningful
        out_q, out_m = [], []
        for q, v in zip(qs, ms):
            if out_m and v == out_m[-1]:
                out_q[-1] = q
            else:
                out_q.append(q)
                out_m.append(v)
        out_m = list(np.maximum.accumulate(out_m))
        return StepGamma(tuple(out_q), tuple(out_m))


def gamma_q(m: MixingPair, gamma_P: StepGamma, q: float) -> GammaQ:
    if q == 0:
        raise DomainError("gamma_q is undefined at q = 0")
    if abs(q) > 1:
        raise DomainError("|q| must not exceed 1")
    return GammaQ(m, gamma_P, float(q))


@dataclass(frozen=True)
class GammaQIdentity:
    lhs: float
    rhs: float
    residual: float
    passed: bool


def check_gamma_q_identity(m: MixingPair, gamma_P: StepGamma, q: float, tol: float = 1e-8) -> GammaQIdentity:
    """Compare both sides of the weighted-integral identity satisfied by gamma_q."""
    gq = gamma_q(m, gamma_P, q)
    lhs = integrate_gamma(m, gq) + integrate_gamma(m, gq, upper=gq.abs_q, cross=True, iota=gq.iota)
    rhs = integrate_gamma(m, gamma_P)
    res = abs(lhs - rhs)
    return GammaQIdentity(lhs, rhs, res, res <= tol)


# ---------------------------------------------------------------------------
# sufficient conditions for the chaos argument
# ---------------------------------------------------------------------------


@dataclass
class ConditionResult:
    name: str
    passed: bool
    first_violation: float | None = None


@dataclass
class ConditionReport:
    mixing: MixingPair
    results: list[ConditionResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def __getitem__(self, name: str) -> ConditionResult:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)


def _first(mask: np.ndarray, grid: np.ndarray) -> float | None:
    bad = np.flatnonzero(mask)
    return float(grid[bad[0]]) if bad.size else None


def check_conditions(m: MixingPair, grid_size: int = 1000, mono_tol: float = 1e-12) -> ConditionReport:
    """Check xi0'' < xi''(|s|), monotone zeta_+/-, and convexity on a uniform grid."""
    if grid_size < 2:
        raise DomainError("grid_size must be at least 2")
    report = ConditionReport(m)
    full = np.linspace(-1.0, 1.0, 2 * grid_size + 1)
    full = full[full != 0.0]
    strict = np.asarray(m.xi0(full, 2)) >= np.asarray(m.xi(np.abs(full), 2))
    report.results.append(ConditionResult("xi0_below_xi", not strict.any(), _first(strict, full)))

    pos = np.linspace(0.0, 1.0, grid_size + 1)[1:]
    for name, sign in (("zeta_plus_nondecreasing", 1), ("zeta_minus_nondecreasing", -1)):
        z = np.asarray(m.zeta(pos, sign))
        bad = ~np.isfinite(z)
        drop = np.zeros_like(bad)
        drop[1:] = np.diff(z) < -mono_tol * np.maximum(1.0, np.abs(z[1:]))
        mask = bad | drop
        report.results.append(ConditionResult(name, not mask.any(), _first(mask, pos)))

    grid = np.linspace(-1.0, 1.0, 2 * grid_size + 1)
    for name, vals in (("xi_convex", m.xi(grid, 2)), ("xi0_convex", m.xi0(grid, 2))):
        mask = np.asarray(vals) < -mono_tol
        report.results.append(ConditionResult(name, not mask.any(), _first(mask, grid)))
    return report
