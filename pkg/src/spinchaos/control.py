"""Monte Carlo checks of the stochastic-control representations.

Both value functions are maxima over controls bounded by 1 of
``E[terminal(X(s)) - running cost]`` where ``X`` is driven by the control and by
Brownian motion with covariance ``xi''`` (1-D) or ``T`` (2-D).  Paths are
simulated on a time grid that contains every jump of gamma, with the exact
integrated covariance of each step (``xi'(b) - xi'(a)`` and its 2-D analogue),
so the drift and cost use the same integrated clock.  Noise comes in
antithetic pairs and the standard error is computed from pair means.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .gtbound import (
    PSI_COARSE, SQRT2, Grid2DLevel, PsiGrid, PsiSolution, SumLevel, piece_covariance,
    solve_psi,
)
from .mixing import GammaQ, MixingPair, StepGamma, gamma_q
from .parisi import COARSE, PdeGrid, PhiSolution, solve_phi

POLICIES = ("optimal", "constant", "random")


@dataclass
class ControlEstimate:
    dimension: int
    policy: str
    horizon: float
    paths: int
    dt: float
    value: float
    stderr: float
    pde_value: float
    max_control: float  # largest |control| before clipping
    clip_excess: float  # largest amount by which a feedback control exceeded 1

    @property
    def z_score(self) -> float:
        return (self.value - self.pde_value) / self.stderr if self.stderr > 0 else 0.0

    def within(self, n_se: float = 3.0) -> bool:
        return abs(self.value - self.pde_value) <= n_se * self.stderr + 1e-12

    def below(self, n_se: float = 3.0) -> bool:
        return self.value <= self.pde_value + n_se * self.stderr + 1e-12


def time_grid(horizon: float, dt: float, jumps=()) -> np.ndarray:
    n = max(1, int(np.ceil(horizon / dt - 1e-9)))
    pts = set(np.linspace(0.0, horizon, n + 1).tolist())
    pts.update(float(b) for b in jumps if 0 < b < horizon)
    return np.array(sorted(pts))


def _as_step(gamma) -> StepGamma:
    return gamma.as_step() if isinstance(gamma, GammaQ) else gamma


def _pair_stats(samples: np.ndarray) -> tuple[float, float]:
    # samples holds antithetic pairs in its two halves
    half = samples.size // 2
    pairs = 0.5 * (samples[:half] + samples[half:])
    return float(pairs.mean()), float(pairs.std(ddof=1) / np.sqrt(half))


def _noise(rng, paths: int, dims: int) -> np.ndarray:
    z = rng.standard_normal((paths // 2, dims))
    return np.concatenate([z, -z])


# ---------------------------------------------------------------------------
# 1-D
# ---------------------------------------------------------------------------


class _Policy1D:
    def __init__(self, kind: str, rng, constant: float):
        if kind not in POLICIES:
            raise DomainError(f"unknown policy {kind!r}")
        self.kind = kind
        self.constant = constant
        if kind == "random":
            self.a, self.b, self.c = rng.normal(0, 2), rng.normal(0, 1), rng.uniform(0, 20)

    def __call__(self, w, x, grad):
        if self.kind == "optimal":
            return grad(x)
        if self.kind == "constant":
            return np.full_like(x, self.constant)
        return np.tanh(self.a * x + self.b * np.sin(self.c * w))


def _phi_gradient(sol: PhiSolution, w: float):
    lvl = sol.level_at(w)
    return lvl.deriv


def simulate_value_1d(mixing: MixingPair, gamma: StepGamma, s: float = 1.0, policy: str = "optimal",
                      paths: int = 100_000, dt: float = 1e-3, rng=None, constant: float = 0.3,
                      solution: PhiSolution | None = None, grid: PdeGrid = COARSE) -> ControlEstimate:
    """Estimate ``E[Phi(s, X(s)) - (1/2) int_0^s xi'' gamma u^2]`` under the given policy."""
    if not 0.0 < s <= 1.0:
        raise DomainError("horizon s must lie in (0, 1]")
    if paths < 4 or paths % 2:
        raise DomainError("paths must be an even number >= 4")
    rng = np.random.default_rng(rng)
    gamma = _as_step(gamma)
    sol = solution or solve_phi(mixing, gamma, grid)
    pol = _Policy1D(policy, rng, constant)
    ws = time_grid(s, dt, gamma.breakpoints)
    var0 = float(mixing.xi(0.0, 1))
    x = np.sqrt(var0) * _noise(rng, paths, 1)[:, 0] if var0 > 0 else np.zeros(paths)
    cost = np.zeros(paths)
    max_u, excess = 0.0, 0.0
    for a, b in zip(ws, ws[1:]):
        dtau = float(mixing.xi(b, 1) - mixing.xi(a, 1))
        g = float(gamma(a))
        u = pol(a, x, _phi_gradient(sol, a) if policy == "optimal" else None)
        max_u = max(max_u, float(np.max(np.abs(u))))
        if policy == "optimal":
            excess = max(excess, max_u - 1.0)
        u = np.clip(u, -1.0, 1.0)
        cost += 0.5 * g * dtau * u * u
        x = x + g * dtau * u + np.sqrt(dtau) * _noise(rng, paths, 1)[:, 0]
    terminal = sol.level_at(s).value(x)
    value, se = _pair_stats(terminal - cost)
    return ControlEstimate(1, policy, s, paths, dt, value, se, sol.value0(), max_u, max(excess, 0.0))


# ---------------------------------------------------------------------------
# 2-D
# ---------------------------------------------------------------------------


def _grad_x(level, x1, x2, eps: float = 1e-5):
    """Gradient of a 2-D level in the original coordinates."""
    if isinstance(level, SumLevel):
        return level.grad_x(x1, x2)
    y1, y2 = (x1 + x2) / SQRT2, (x1 - x2) / SQRT2
    if isinstance(level, Grid2DLevel):
        g1, g2 = level.grad_y(y1, y2)
    else:
        g1 = (level.value(y1 + eps, y2) - level.value(y1 - eps, y2)) / (2 * eps)
        g2 = (level.value(y1, y2 + eps) - level.value(y1, y2 - eps)) / (2 * eps)
    return (g1 + g2) / SQRT2, (g1 - g2) / SQRT2


class _Policy2D:
    def __init__(self, kind: str, rng, constant: float):
        if kind not in POLICIES:
            raise DomainError(f"unknown policy {kind!r}")
        self.kind = kind
        self.constant = constant
        if kind == "random":
            self.coef = rng.normal(0, 1.5, size=(2, 3))
            self.freq = rng.uniform(0, 20)

    def __call__(self, w, x1, x2, level):
        if self.kind == "optimal":
            return _grad_x(level, x1, x2)
        if self.kind == "constant":
            return np.full_like(x1, self.constant), np.full_like(x1, self.constant)
        c = self.coef
        ph = np.sin(self.freq * w)
        return (np.tanh(c[0, 0] * x1 + c[0, 1] * x2 + c[0, 2] * ph),
                np.tanh(c[1, 0] * x2 + c[1, 1] * x1 + c[1, 2] * ph))


@dataclass
class _Checkpoints:
    """Levels of the 2-D solution at a subset of the time grid (feedback uses the latest one at or before w)."""

    times: np.ndarray
    levels: list = field(default_factory=list)

    def at(self, w: float):
        j = int(np.searchsorted(self.times, w + 1e-12, side="right")) - 1
        return self.levels[max(j, 0)]


def _checkpoints(sol: PsiSolution, ws: np.ndarray, count: int) -> _Checkpoints:
    idx = np.unique(np.linspace(0, ws.size - 2, max(count, 1)).round().astype(int))
    times = ws[idx]
    return _Checkpoints(times, [sol.level_at(float(w)) for w in times])


def _start_2d(mixing, rng, paths):
    a = float(mixing.xi(0.0, 1))
    b = float(mixing.xi0(0.0, 1))
    if a <= 0:
        return np.zeros(paths), np.zeros(paths)
    z = _noise(rng, paths, 2)
    n1, n2 = np.sqrt(a + b) * z[:, 0], np.sqrt(max(a - b, 0.0)) * z[:, 1]
    return (n1 + n2) / SQRT2, (n1 - n2) / SQRT2


def _step_noise(A: float, B: float, z: np.ndarray):
    """Increment with covariance [[A, B], [B, A]] from standard normals ``z`` (n, 2)."""
    n1 = np.sqrt(A + B) * z[:, 0]
    n2 = np.sqrt(max(A - B, 0.0)) * z[:, 1]
    return (n1 + n2) / SQRT2, (n1 - n2) / SQRT2


def simulate_value_2d(mixing: MixingPair, gamma, q: float, s: float | None = None,
                      policy: str = "optimal", paths: int = 100_000, dt: float = 1e-3, rng=None,
                      constant: float = 0.3, solution: PsiSolution | None = None,
                      grid: PsiGrid = PSI_COARSE, phi_grid: PdeGrid = COARSE,
                      checkpoints: int = 64) -> ControlEstimate:
    """Estimate ``E[Psi(s, X(s)) - (1/2) int_0^s gamma <T v, v>]`` under the given policy (default ``s = |q|``)."""
    if q == 0 or abs(q) > 1:
        raise DomainError("need 0 < |q| <= 1")
    s = abs(q) if s is None else s
    if not 0.0 < s <= abs(q):
        raise DomainError("horizon s must lie in (0, |q|]")
    if paths < 4 or paths % 2:
        raise DomainError("paths must be an even number >= 4")
    rng = np.random.default_rng(rng)
    gamma = _as_step(gamma)
    sol = solution or solve_psi(mixing, gamma, q, grid, phi_grid)
    pol = _Policy2D(policy, rng, constant)
    ws = time_grid(s, dt, gamma.breakpoints)
    cps = _checkpoints(sol, ws, checkpoints) if policy == "optimal" else None
    x1, x2 = _start_2d(mixing, rng, paths)
    cost = np.zeros(paths)
    max_v, excess = 0.0, 0.0
    for a, b in zip(ws, ws[1:]):
        A, B = piece_covariance(mixing, q, a, b)
        g = float(gamma(a))
        v1, v2 = pol(a, x1, x2, cps.at(a) if cps else None)
        max_v = max(max_v, float(np.max(np.abs(v1))), float(np.max(np.abs(v2))))
        v1, v2 = np.clip(v1, -1, 1), np.clip(v2, -1, 1)
        d1, d2 = A * v1 + B * v2, B * v1 + A * v2
        cost += 0.5 * g * (d1 * v1 + d2 * v2)
        n1, n2 = _step_noise(A, B, _noise(rng, paths, 2))
        x1 = x1 + g * d1 + n1
        x2 = x2 + g * d2 + n2
    if policy == "optimal":
        excess = max_v - 1.0
    lvl = sol.level_at(s)
    terminal = lvl.value((x1 + x2) / SQRT2, (x1 - x2) / SQRT2)
    value, se = _pair_stats(terminal - cost)
    return ControlEstimate(2, policy, s, paths, dt, value, se, sol.value0(), max_v, max(excess, 0.0))


# ---------------------------------------------------------------------------
# optimal-feedback identities
# ---------------------------------------------------------------------------


@dataclass
class FeedbackReport:
    q: float
    paths: int
    times: np.ndarray
    u_discrepancy_rms: np.ndarray  # per checkpoint time, rms over paths and both coordinates
    v_split_ms: np.ndarray  # E (v1 - iota v2)^2 per checkpoint time
    b_increment_ms: np.ndarray  # E (dB1 - iota dB2)^2 / dw per checkpoint time
    b_increment_se: np.ndarray
    b_expected: np.ndarray  # 2 (xi'' - xi0''(iota w)) / xi''
    noise_increment_ms: np.ndarray  # same for xi''^{1/2} dB, expected 2 (xi'' - xi0''(iota w))
    noise_expected: np.ndarray

    @property
    def max_discrepancy(self) -> float:
        return float(np.max(self.u_discrepancy_rms))

    def b_covariance_ok(self, n_se: float = 5.0) -> bool:
        dev = np.abs(self.b_increment_ms - self.b_expected)
        return bool(np.all(dev <= n_se * self.b_increment_se + 1e-12))

    def rows(self) -> list[dict]:
        return [{"w": float(w), "u_discrepancy_rms": float(d), "v_split_ms": float(v),
                 "b_increment_ms": float(b), "b_expected": float(e)}
                for w, d, v, b, e in zip(self.times, self.u_discrepancy_rms, self.v_split_ms,
                                         self.b_increment_ms, self.b_expected)]


def feedback_identity_check(mixing: MixingPair, gamma_P: StepGamma, q: float, paths: int = 20_000,
                            dt: float = 1e-3, rng=None, grid: PsiGrid = PSI_COARSE,
                            phi_grid: PdeGrid = COARSE, checkpoints: int = 64) -> FeedbackReport:
    """Compare the 2-D optimal controls, mapped to per-copy controls, with the 1-D optimal feedback.

    Along optimal paths of the 2-D problem for ``gamma_q`` the per-copy controls
    ``u = T v / (xi'' + xi0''(iota w))`` are compared with
    ``d_x Phi_{gamma_P}(w, X_l(w))``, where ``X_l`` solves the 1-D optimal
    equation driven by ``B_l = xi''^{-1/2} T^{1/2} W``.  The two agree only if
    the bound is attained; the measured discrepancy is reported.
    """
    if q == 0 or abs(q) > 1:
        raise DomainError("need 0 < |q| <= 1")
    if paths < 4 or paths % 2:
        raise DomainError("paths must be an even number >= 4")
    rng = np.random.default_rng(rng)
    iota = 1 if q >= 0 else -1
    gq = gamma_q(mixing, gamma_P, q)
    gstep = gq.as_step()
    psi = solve_psi(mixing, gstep, q, grid, phi_grid)
    phi = solve_phi(mixing, gamma_P, phi_grid)
    ws = time_grid(abs(q), dt, tuple(gstep.breakpoints) + tuple(gamma_P.breakpoints))
    cps = _checkpoints(psi, ws, checkpoints)
    phi_levels = {float(w): phi.level_at(float(w)) for w in cps.times}
    x1, x2 = _start_2d(mixing, rng, paths)
    y1, y2 = x1.copy(), x2.copy()
    times, disc, vsplit, bms, bse, bexp, nms, nexp = [], [], [], [], [], [], [], []
    for a, b in zip(ws, ws[1:]):
        A, B = piece_covariance(mixing, q, a, b)
        dw = b - a
        g = float(gstep(a))
        gp = float(gamma_P(a))
        v1, v2 = _grad_x(cps.at(a), x1, x2)
        v1, v2 = np.clip(v1, -1, 1), np.clip(v2, -1, 1)
        z = _noise(rng, paths, 2)
        n1, n2 = _step_noise(A, B, z)
        d1, d2 = A * v1 + B * v2, B * v1 + A * v2
        # B increments: xi''^{-1/2} times the 2-D noise, with xi'' dw replaced by its integral A
        db1, db2 = n1 * np.sqrt(dw / A), n2 * np.sqrt(dw / A)
        t_key = float(cps.times[max(int(np.searchsorted(cps.times, a + 1e-12, side="right")) - 1, 0)])
        lvl1 = phi_levels[t_key]
        if a == t_key:
            # u = T v / (xi'' + xi0''(iota w)) with integrated T over the step
            denom = A + iota * B
            u1, u2 = d1 / denom, d2 / denom
            du1 = u1 - lvl1.deriv(y1)
            du2 = u2 - lvl1.deriv(y2)
            times.append(a)
            disc.append(float(np.sqrt(0.5 * np.mean(du1 * du1 + du2 * du2))))
            vsplit.append(float(np.mean((v1 - iota * v2) ** 2)))
            sq = (db1 - iota * db2) ** 2 / dw
            bms.append(float(sq.mean()))
            bse.append(float(sq.std(ddof=1) / np.sqrt(sq.size)))
            bexp.append(2.0 * (A - iota * B) / A)
            nq = (n1 - iota * n2) ** 2 / dw
            nms.append(float(nq.mean()))
            nexp.append(2.0 * (A - iota * B) / dw)
        # 1-D optimal processes driven by B_l: noise xi''^{1/2} dB_l equals the 2-D noise
        f1 = np.clip(lvl1.deriv(y1), -1, 1)
        f2 = np.clip(lvl1.deriv(y2), -1, 1)
        y1 = y1 + gp * A * f1 + n1
        y2 = y2 + gp * A * f2 + n2
        x1 = x1 + g * d1 + n1
        x2 = x2 + g * d2 + n2
    return FeedbackReport(q, paths, np.array(times), np.array(disc), np.array(vsplit), np.array(bms),
                          np.array(bse), np.array(bexp), np.array(nms), np.array(nexp))
