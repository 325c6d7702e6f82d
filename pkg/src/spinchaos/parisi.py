"""Zero-temperature Parisi recursion, functional and its minimization.

For a step function gamma with value ``m`` on ``[a, b)`` the solution of

    d_s Phi = -(xi''(s)/2) (Phi_xx + gamma(s) Phi_x**2),   Phi(1, x) = |x|

satisfies ``Phi(a, x) = (1/m) log E exp(m Phi(b, x + Z sqrt(xi'(b) - xi'(a))))``.
The first step from ``|x|`` is taken in closed form; later steps use a tilted
Gauss-Hermite rule on a uniform grid, split into sub-steps whose variance is
at most ``ratio**2`` times the smoothing variance already accumulated.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import DomainError, NumericError
from .kernels import AbsLevel, GridLevel, SmoothedAbsLevel, recursion_step
from .mixing import MixingPair, StepGamma

M_CAP = 100.0


@dataclass(frozen=True)
class PdeGrid:
    """Spatial grid ``[-X, X]`` with ``X = width * sqrt(xi'(1))`` and ``2*cells + 1`` nodes."""

    cells: int = 2048
    width: float = 4.0
    order: int = 64
    ratio: float = 0.7

    def __post_init__(self):
        if self.cells < 4 or self.width <= 0 or self.order < 4 or self.ratio <= 0:
            raise DomainError("invalid grid parameters")

    def nodes(self, mixing: MixingPair) -> tuple[np.ndarray, float]:
        X = self.width * np.sqrt(max(mixing.xi(1.0, 1), 1e-12))
        x = np.linspace(-X, X, 2 * self.cells + 1)
        return x, x[1] - x[0]


FINE = PdeGrid()
COARSE = PdeGrid(cells=256, order=32, ratio=0.5)


def substep_variances(total: float, acc: float, ratio: float) -> list[float]:
    """Split ``total`` so each piece is at most ``ratio**2`` times the variance accumulated before it."""
    if total <= 0:
        return []
    if acc <= 0:
        return [total]
    out = []
    done = 0.0
    while done < total * (1 - 1e-14):
        step = min(total - done, ratio ** 2 * (acc + done))
        # avoid a sliver at the end
        if total - done - step < 0.25 * step:
            step = total - done
        out.append(step)
        done += step
    return out


@dataclass
class PhiSolution:
    """Levels ``Phi(s_j, .)`` stored at decreasing ``s``; ``tau_j = xi'(s_j)``."""

    mixing: MixingPair
    gamma: StepGamma
    grid: PdeGrid
    x: np.ndarray
    h: float
    taus: list = field(default_factory=list)
    levels: list = field(default_factory=list)
    ms: list = field(default_factory=list)  # exponent used to reach the *next* lower level

    def value0(self) -> float:
        """Initial value, averaged over the degree-1 field of variance ``xi'(0)`` when present."""
        return start_average(self.levels[-1], float(self.mixing.xi(0.0, 1)), self.grid.order)

    def level_at(self, w: float):
        """Level for ``Phi(w, .)``, one recursion step from the nearest stored level above."""
        if not 0.0 <= w <= 1.0:
            raise DomainError("w must lie in [0, 1]")
        tau = float(self.mixing.xi(w, 1))
        j = max(i for i, t in enumerate(self.taus) if t >= tau - 1e-15)
        var = self.taus[j] - tau
        if var <= 1e-15:
            return self.levels[j]
        m = float(self.gamma(w))
        if isinstance(self.levels[j], AbsLevel):
            return SmoothedAbsLevel(m, var)
        vals = recursion_step(self.levels[j], m, var, self.x, self.grid.order)
        return GridLevel(self.x[0], self.h, vals, self.levels[j].smooth_var + var)

    def value(self, w: float, x) -> np.ndarray:
        return self.level_at(w).value(np.asarray(x, dtype=float))

    def derivative(self, w: float, x) -> np.ndarray:
        return self.level_at(w).deriv(np.asarray(x, dtype=float))


def solve_phi(mixing: MixingPair, gamma: StepGamma, grid: PdeGrid = FINE) -> PhiSolution:
    x, h = grid.nodes(mixing)
    sol = PhiSolution(mixing, gamma, grid, x, h)
    level = AbsLevel()
    tau_top = float(mixing.xi(1.0, 1))
    sol.taus.append(tau_top)
    sol.levels.append(level)
    for a, b, m in reversed(gamma.pieces()):
        ta, tb = float(mixing.xi(a, 1)), float(mixing.xi(b, 1))
        if isinstance(level, AbsLevel):
            steps = [tb - ta] if tb > ta else []
        else:
            steps = substep_variances(tb - ta, level.smooth_var, grid.ratio)
        tau = tb
        for v in steps:
            tau -= v
            if isinstance(level, AbsLevel):
                level = SmoothedAbsLevel(m, v)
            else:
                vals = recursion_step(level, m, v, x, grid.order)
                if not np.all(np.isfinite(vals)):
                    raise NumericError("non-finite values in the Parisi recursion")
                level = GridLevel(x[0], h, vals, level.smooth_var + v)
            sol.taus.append(max(tau, ta))
            sol.levels.append(level)
            sol.ms.append(m)
    if sol.taus[-1] > float(mixing.xi(0.0, 1)) + 1e-15:
        sol.taus.append(float(mixing.xi(0.0, 1)))
        sol.levels.append(level)
    return sol


def start_average(level, var: float, order: int) -> float:
    """``E level(sqrt(var) Z)``: a degree-1 term in xi acts as a Gaussian external field."""
    if var <= 0.0:
        return float(level.value(np.array(0.0)))
    if isinstance(level, AbsLevel):
        return float(SmoothedAbsLevel(0.0, var).value(np.array(0.0)))
    return float(recursion_step(level, 0.0, var, np.array(0.0), order))


def phi0(mixing: MixingPair, gamma: StepGamma, grid: PdeGrid = FINE) -> float:
    return solve_phi(mixing, gamma, grid).value0()


# ---------------------------------------------------------------------------
# finite-difference oracle
# ---------------------------------------------------------------------------


def _tail_constant(mixing, gamma, s):
    # Phi(s, x) - |x| for |x| -> infinity: (1/2) int_s^1 xi'' gamma
    total = 0.0
    for a, b, m in gamma.pieces():
        lo, hi = max(a, s), b
        if hi > lo:
            total += m * (mixing.xi(hi, 1) - mixing.xi(lo, 1))
    return 0.5 * total


def solve_phi_fd(mixing: MixingPair, gamma: StepGamma, h: float = 0.01, half_width: float | None = None,
                 cfl: float = 0.4, s_end: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Explicit finite differences for the PDE in ``s`` (backward from 1).

    Dirichlet data at ``+-L`` from the large-|x| asymptotics. Returns ``(x, Phi(s_end, x))``.
    """
    L = half_width or (4.0 * np.sqrt(mixing.xi(1.0, 1)) + 3.0)
    n = int(round(L / h))
    x = np.linspace(-n * h, n * h, 2 * n + 1)
    phi = np.abs(x)
    cuts = sorted({s_end, 1.0, *(b for b in gamma.breakpoints if b > s_end)})
    s = 1.0
    for lo in reversed(cuts[:-1]):
        hi = s
        # ds bounded through the largest xi'' on the interval (xi'' monotone on [0,1])
        w_max = max(float(mixing.xi(lo, 2)), float(mixing.xi(hi, 2)), 1e-300)
        nsteps = max(1, int(np.ceil((hi - lo) * w_max / (cfl * h * h))))
        ds = (hi - lo) / nsteps
        g = float(gamma(0.5 * (lo + hi)))
        for k in range(nsteps):
            s_mid = hi - (k + 0.5) * ds
            w = float(mixing.xi(s_mid, 2))
            dxx = (phi[2:] - 2 * phi[1:-1] + phi[:-2]) / (h * h)
            dx = (phi[2:] - phi[:-2]) / (2 * h)
            phi[1:-1] = phi[1:-1] + ds * 0.5 * w * (dxx + g * dx * dx)
            c = _tail_constant(mixing, gamma, hi - (k + 1) * ds)
            phi[0] = phi[-1] = x[-1] + c
        s = lo
    return x, phi


def phi0_fd(mixing: MixingPair, gamma: StepGamma, h: float = 0.01) -> float:
    """Richardson-extrapolated finite-difference value of ``Phi(0, 0)``."""
    var = float(mixing.xi(0.0, 1))

    def centre(x, phi):
        if var <= 0:
            return phi[phi.size // 2]
        # average against the Gaussian density by the trapezoid rule on the grid
        dens = np.exp(-0.5 * x * x / var)
        return float(np.sum(dens * phi) / np.sum(dens))

    a = centre(*solve_phi_fd(mixing, gamma, 2 * h))
    b = centre(*solve_phi_fd(mixing, gamma, h))
    return float(b + (b - a) / 3.0)


# ---------------------------------------------------------------------------
# the functional
# ---------------------------------------------------------------------------


def correction(mixing: MixingPair, gamma: StepGamma) -> float:
    """``(1/2) int_0^1 s xi''(s) gamma(s) ds`` in closed form (``int s xi'' = s xi' - xi``)."""
    def anti(s):
        return s * mixing.xi(s, 1) - mixing.xi(s)

    return 0.5 * sum(m * (anti(b) - anti(a)) for a, b, m in gamma.pieces())


def parisi_value(mixing: MixingPair, gamma: StepGamma, grid: PdeGrid = FINE) -> float:
    return phi0(mixing, gamma, grid) - correction(mixing, gamma)


def rs_zero_value(mixing: MixingPair) -> float:
    """Value of the functional at gamma = 0: ``sqrt(2 xi'(1) / pi)``."""
    return float(np.sqrt(2.0 * mixing.xi(1.0, 1) / np.pi))


# ---------------------------------------------------------------------------
# minimization
# ---------------------------------------------------------------------------


def decode(params: np.ndarray, k: int, cap: float = M_CAP) -> StepGamma:
    """Unconstrained vector -> k-step gamma.

    Breakpoints are normalized cumulative sums of ``exp`` increments (the last
    increment is pinned to 1) and values are cumulative sums of ``exp``
    increments mapped into ``(0, cap)``.
    """
    params = np.asarray(params, dtype=float)
    inc_q = np.exp(np.clip(np.append(params[: k - 1], 0.0), -30, 30))
    q = np.cumsum(inc_q) / inc_q.sum()
    q[-1] = 1.0
    c = np.cumsum(np.exp(np.clip(params[k - 1:], -30, 30)))
    m = c / (1.0 + c / cap)
    # enforce strictly increasing breakpoints in floating point
    q = np.maximum.accumulate(q)
    for j in range(1, k):
        if q[j] <= q[j - 1]:
            q[j] = np.nextafter(q[j - 1], 2.0)
    q = np.minimum(q, 1.0)
    return StepGamma(tuple(q), tuple(m))


def encode(gamma: StepGamma, cap: float = M_CAP) -> np.ndarray:
    q = np.array(gamma.q, dtype=float)
    q[-1] = 1.0
    inc = np.diff(np.concatenate([[0.0], q]))
    inc = np.maximum(inc, 1e-12)
    a = np.log(inc[:-1] / inc[-1])
    m = np.minimum(np.array(gamma.m, dtype=float), cap * (1 - 1e-9))
    c = m / (1.0 - m / cap)
    c = np.maximum(c, 1e-12)
    inc_c = np.diff(np.concatenate([[0.0], c]))
    inc_c = np.maximum(inc_c, 1e-12 * np.maximum(1.0, c))
    return np.concatenate([a, np.log(inc_c)])


def split_piece(gamma: StepGamma, j: int) -> StepGamma:
    """Same function with piece ``j`` cut at its midpoint (values duplicated)."""
    edges = [0.0, *gamma.q]
    mid = 0.5 * (edges[j] + edges[j + 1])
    q = list(gamma.q[:j]) + [mid] + list(gamma.q[j:])
    m = list(gamma.m[: j + 1]) + list(gamma.m[j:])
    return StepGamma(tuple(q), tuple(m))


@dataclass
class LevelResult:
    k: int
    gamma: StepGamma
    value: float
    evaluations: int
    converged: bool


@dataclass
class ParisiEstimate:
    mixing: MixingPair
    gamma_hat: StepGamma
    value: float
    k: int
    per_k: list = field(default_factory=list)
    cap: float = M_CAP
    converged: bool = True

    def value_at(self, k: int) -> float:
        return min(r.value for r in self.per_k if r.k <= k)

    def gamma_at(self, k: int) -> StepGamma:
        best = min((r for r in self.per_k if r.k <= k), key=lambda r: r.value)
        return best.gamma

    @property
    def cap_active(self) -> bool:
        return self.gamma_hat.m[-1] > 0.99 * self.cap

    def to_dict(self) -> dict:
        return {"k": self.k, "value": self.value, "gamma": self.gamma_hat.to_text(), "cap": self.cap,
                "cap_active": self.cap_active, "converged": self.converged,
                "per_k": [{"k": r.k, "value": r.value, "gamma": r.gamma.to_text(),
                           "evaluations": r.evaluations, "converged": r.converged} for r in self.per_k]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def minimize_parisi(mixing: MixingPair, k_max: int, rng=None, multistart: int = 8,
                    search_grid: PdeGrid = COARSE, final_grid: PdeGrid = FINE,
                    max_evals: int = 1500, xatol: float = 1e-5, fatol: float = 1e-9,
                    cap: float = M_CAP) -> ParisiEstimate:
    """Minimize the functional over k-step gammas for k = 1..k_max.

    Each level starts from the previous optimum with one piece split (all
    pieces tried, up to ``multistart`` starts, extra starts perturbed at
    random), runs Nelder-Mead on the coarse grid, and re-evaluates the best
    candidates on the fine grid.
    """
    if k_max < 1:
        raise DomainError("k_max must be at least 1")
    rng = np.random.default_rng(rng)
    corr_cache = {}

    def objective(p, k):
        try:
            g = decode(p, k, cap)
        except DomainError:
            return np.inf
        key = (g.q, g.m)
        if key not in corr_cache:
            try:
                corr_cache[key] = parisi_value(mixing, g, search_grid)
            except NumericError:
                corr_cache[key] = np.inf
        return corr_cache[key]

    per_k: list[LevelResult] = []
    best_prev = None
    all_converged = True
    for k in range(1, k_max + 1):
        starts = []
        if best_prev is None:
            for c in (0.5, 1.0, 2.0, 4.0, 8.0)[:multistart]:
                starts.append(encode(StepGamma.constant(c), cap))
        else:
            for j in range(best_prev.k):
                starts.append(encode(split_piece(best_prev, j), cap))
            while len(starts) < multistart:
                base = starts[rng.integers(len(starts))]
                starts.append(base + rng.normal(0, 0.3, size=base.size))
            starts = starts[:max(multistart, 1)]
        found = []
        evals = 0
        for p0 in starts:
            res = minimize(objective, p0, args=(k,), method="Nelder-Mead",
                           options={"maxfev": max_evals, "xatol": xatol, "fatol": fatol,
                                    "adaptive": True})
            evals += res.nfev
            found.append((res.fun, res.x, res.success))
        found.sort(key=lambda r: r[0])
        best = None
        for fun, x, ok in found[:2]:
            g = decode(x, k, cap)
            v = parisi_value(mixing, g, final_grid)
            if best is None or v < best[0]:
                best = (v, g, ok)
        if best_prev is not None:
            # nesting: the previous optimum is a k-step gamma with a duplicated value
            prev_v = per_k[-1].value
            if prev_v < best[0]:
                best = (prev_v, split_piece(best_prev, best_prev.k - 1), best[2])
        all_converged &= bool(best[2])
        per_k.append(LevelResult(k, best[1], float(best[0]), evals, bool(best[2])))
        best_prev = best[1]
    top = min(per_k, key=lambda r: r.value)
    return ParisiEstimate(mixing, top.gamma, top.value, k_max, per_k, cap, all_converged)


@dataclass
class SupportReport:
    first_breakpoint: float
    positive_from: float
    flagged: bool
    message: str


def gamma_support_check(gamma: StepGamma, far: float = 0.2) -> SupportReport:
    """Where the estimate becomes positive; flags zero estimates and late onsets."""
    if isinstance(gamma, ParisiEstimate):
        gamma = gamma.gamma_hat
    first = gamma.q[0] if gamma.k > 1 else 1.0
    positive_from = 0.0
    for a, b, m in gamma.pieces():
        if m > 0:
            positive_from = a
            break
    else:
        return SupportReport(first, 1.0, True, "estimate vanishes identically")
    flagged = positive_from > far
    msg = (f"positive on ({positive_from:.6g}, 1]" if not flagged
           else f"zero on [0, {positive_from:.6g}); support starts far from 0")
    return SupportReport(first, positive_from, flagged, msg)
