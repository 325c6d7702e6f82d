"""Exact and annealed maximization over the cube and the balanced set.

Configurations are indexed by integers: bit ``i`` set means ``sigma_i = -1``,
so index 0 is the all-plus configuration and a product of spins over a bit
mask equals ``(-1) ** popcount(c & mask)``.  Every Hamiltonian in the package
is a polynomial in the spins, so its full energy table is the Walsh-Hadamard
transform of its coefficient vector.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .diluted import couple
from .errors import CapacityError, DomainError

SPACES = ("cube", "balanced")
MAX_N = 26
MAX_JOINT_N = 14
DEFAULT_CAP = 1 << 20


# ---------------------------------------------------------------------------
# tables
# ---------------------------------------------------------------------------


def fwht(coef: np.ndarray) -> np.ndarray:
    """Unnormalized Walsh-Hadamard transform: ``out[c] = sum_m coef[m] (-1)**popcount(c & m)``."""
    x = np.array(coef, dtype=float)
    n = x.size
    if n & (n - 1):
        raise DomainError("length must be a power of two")
    h = 1
    while h < n:
        y = x.reshape(-1, 2, h)
        a, b = y[:, 0, :].copy(), y[:, 1, :]
        y[:, 0, :] += b
        y[:, 1, :] = a - b
        h *= 2
    return x


def spins_from_index(idx, N: int) -> np.ndarray:
    idx = np.asarray(idx, dtype=np.int64)
    bits = (idx[..., None] >> np.arange(N)) & 1
    return (1 - 2 * bits).astype(np.int8)


def index_from_spins(sigma) -> np.ndarray | int:
    s = np.asarray(sigma)
    out = ((s < 0).astype(np.int64) << np.arange(s.shape[-1])).sum(axis=-1)
    return out if np.ndim(out) else int(out)


def popcount(x) -> np.ndarray:
    # unsigned view: bitwise_count on signed input counts bits of the absolute value
    bits = np.asarray(x, dtype=np.int64).view(np.uint64)
    return np.bitwise_count(bits).astype(np.int64)


def _check_n(N: int, limit: int = MAX_N) -> None:
    if N > limit:
        raise CapacityError(f"exhaustive enumeration limited to N <= {limit}, got {N}")
    if N < 1:
        raise DomainError("N must be positive")


def energy_table(energy, N: int) -> np.ndarray:
    """Energies of all ``2**N`` configurations.

    ``energy`` is a model with ``walsh_coefficients()`` or a callable taking a
    batch of configurations of shape (M, N).
    """
    _check_n(N)
    if hasattr(energy, "walsh_coefficients"):
        if energy.N != N:
            raise DomainError("model size does not match N")
        return fwht(energy.walsh_coefficients())
    out = np.empty(1 << N)
    chunk = 1 << 14
    for start in range(0, 1 << N, chunk):
        idx = np.arange(start, min(start + chunk, 1 << N))
        out[idx] = energy(spins_from_index(idx, N))
    return out


def naive_energy_table(energy, N: int) -> np.ndarray:
    """Reference table by direct evaluation of every configuration (no transform)."""
    _check_n(N, 20)
    idx = np.arange(1 << N)
    return np.asarray(energy.energy(spins_from_index(idx, N)), dtype=float)


def space_mask(N: int, space: str) -> np.ndarray | None:
    if space == "cube":
        return None
    if space == "balanced":
        # spin sum N - 2*popcount equals N mod 2
        return popcount(np.arange(1 << N)) == N // 2
    raise DomainError(f"unknown space {space!r}")


def _table(energy, N: int) -> np.ndarray:
    return energy if isinstance(energy, np.ndarray) else energy_table(energy, N)


# ---------------------------------------------------------------------------
# exact maxima and near-maximizer sets
# ---------------------------------------------------------------------------


@dataclass
class GroundStateResult:
    max_value: float
    argmax: list
    space: str
    method: str
    n_argmax: int = 0
    capped: bool = False
    trace: list = field(default_factory=list)


@dataclass
class NearMaxSet:
    indices: np.ndarray
    N: int
    max_value: float
    threshold: float

    @property
    def size(self) -> int:
        return int(self.indices.size)

    def __len__(self) -> int:
        return self.size

    @property
    def configs(self) -> np.ndarray:
        return spins_from_index(self.indices, self.N)

    def __iter__(self):
        return iter(self.configs)


def _tie_tol(table: np.ndarray) -> float:
    return 1e-9 * max(1.0, float(np.max(np.abs(table)))) if table.size else 0.0


def near_max_indices(table: np.ndarray, N: int, space: str, slack_total: float) -> tuple[np.ndarray, float]:
    mask = space_mask(N, space)
    vals = table if mask is None else np.where(mask, table, -np.inf)
    top = float(vals.max())
    idx = np.flatnonzero(vals >= top - slack_total - _tie_tol(table))
    return idx, top


def exact_max(energy, N: int, space: str = "cube", cap: int = DEFAULT_CAP) -> GroundStateResult:
    """Exhaustive maximum with all maximizers (first ``cap`` kept)."""
    table = _table(energy, N)
    idx, top = near_max_indices(table, N, space, 0.0)
    kept = idx[:cap]
    return GroundStateResult(top, list(spins_from_index(kept, N)), space, "exact",
                             int(idx.size), bool(idx.size > cap))


def near_max_set(energy, N: int, space: str, slack: float) -> NearMaxSet:
    """All configurations with ``H >= max - N * slack``."""
    if slack < 0:
        raise DomainError("slack must be nonnegative")
    table = _table(energy, N)
    idx, top = near_max_indices(table, N, space, N * slack)
    return NearMaxSet(idx, N, top, top - N * slack)


# ---------------------------------------------------------------------------
# overlaps between sets
# ---------------------------------------------------------------------------


def distance_to_set(members: np.ndarray, N: int) -> np.ndarray:
    """Hamming distance from every configuration to the nearest member."""
    big = N + 1
    d = np.full(1 << N, big, dtype=np.int16)
    d[np.asarray(members, dtype=np.int64)] = 0
    h = 1
    while h < d.size:
        y = d.reshape(-1, 2, h)
        lo = np.minimum(y[:, 0, :], y[:, 1, :] + 1)
        hi = np.minimum(y[:, 1, :], y[:, 0, :] + 1)
        y[:, 0, :] = lo
        y[:, 1, :] = hi
        h *= 2
    return d


def max_abs_cross_overlap(set1: np.ndarray, set2: np.ndarray, N: int) -> float:
    """``max |R(s1, s2)|`` over s1 in set1, s2 in set2, computed exactly.

    |R| is large when s1 is close to s2 or to its global flip, so the answer is
    ``1 - 2 dmin / N`` with dmin the distance from set1 to set2 and its flips.
    """
    set1, set2 = np.asarray(set1, np.int64), np.asarray(set2, np.int64)
    if not set1.size or not set2.size:
        raise DomainError("overlap of an empty set")
    if set1.size * set2.size <= 1 << 16:
        d = popcount(set1[:, None] ^ set2[None, :])
        return float(np.max(np.abs(N - 2 * d)) / N)
    full = (1 << N) - 1
    d = distance_to_set(np.concatenate([set2, set2 ^ full]), N)
    return 1.0 - 2.0 * float(d[set1].min()) / N


def sampled_abs_overlaps(set1: np.ndarray, set2: np.ndarray, N: int, n_pairs: int, rng) -> np.ndarray:
    rng = np.random.default_rng(rng)
    total = set1.size * set2.size
    if total <= n_pairs:
        d = popcount(set1[:, None] ^ set2[None, :]).ravel()
    else:
        d = popcount(set1[rng.integers(0, set1.size, n_pairs)] ^ set2[rng.integers(0, set2.size, n_pairs)])
    return np.abs(N - 2 * d) / N


def joint_constrained_max(energy1, energy2, N: int, epsilon: float, mode: str = "greater",
                          chunk: int = 512) -> float:
    """``max H1(s1) + H2(s2)`` over pairs with ``|R| > epsilon`` (or ``<= epsilon``)."""
    _check_n(N, MAX_JOINT_N)
    if mode not in ("greater", "leq"):
        raise DomainError(f"unknown mode {mode!r}")
    allowed = np.abs(N - 2 * np.arange(N + 1)) / N
    allowed = allowed > epsilon if mode == "greater" else allowed <= epsilon
    if not allowed.any():
        raise DomainError("no overlap value satisfies the constraint")
    e1, e2 = _table(energy1, N), _table(energy2, N)
    order2 = np.argsort(-e2, kind="stable")
    sorted2 = e2[order2]
    best = -np.inf
    for c1 in np.argsort(-e1, kind="stable"):
        if e1[c1] + sorted2[0] <= best:
            break
        for start in range(0, order2.size, chunk):
            if e1[c1] + sorted2[start] <= best:
                break
            cand = order2[start:start + chunk]
            ok = np.flatnonzero(allowed[popcount(cand ^ c1)])
            if ok.size:
                best = max(best, e1[c1] + sorted2[start + ok[0]])
                break
    return float(best)


def joint_constrained_max_naive(energy1, energy2, N: int, epsilon: float, mode: str = "greater") -> float:
    if N > 11:
        raise CapacityError("the naive double loop is meant for N <= 11")
    e1, e2 = _table(energy1, N), _table(energy2, N)
    idx = np.arange(1 << N)
    R = np.abs(N - 2 * popcount(idx[:, None] ^ idx[None, :])) / N
    ok = R > epsilon if mode == "greater" else R <= epsilon
    if not ok.any():
        raise DomainError("no overlap value satisfies the constraint")
    return float(np.max(np.where(ok, e1[:, None] + e2[None, :], -np.inf)))


# ---------------------------------------------------------------------------
# simulated annealing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AnnealSchedule:
    t_initial: float = 2.0
    t_final: float = 0.05
    sweeps: int = 200

    def __post_init__(self):
        if not (self.t_initial > self.t_final > 0) or self.sweeps < 1:
            raise DomainError("need t_initial > t_final > 0 and sweeps >= 1")

    def temperatures(self) -> np.ndarray:
        return np.geomspace(self.t_initial, self.t_final, self.sweeps)


class _TermState:
    """Walsh terms with per-spin incidence lists and current term signs."""

    def __init__(self, masks: np.ndarray, coefs: np.ndarray, N: int, sigma: np.ndarray):
        keep = (coefs != 0) & (masks != 0)
        self.masks, self.coefs = masks[keep], coefs[keep]
        self.N = N
        self.terms_of = [np.flatnonzero((self.masks >> i) & 1) for i in range(N)]
        self.reset(sigma)

    def reset(self, sigma: np.ndarray) -> None:
        c = index_from_spins(sigma)
        self.values = 1.0 - 2.0 * (popcount(self.masks & c) & 1)
        self.energy = float(self.coefs @ self.values)

    def field(self, i: int) -> float:
        t = self.terms_of[i]
        return float(self.coefs[t] @ self.values[t])

    def flip(self, i: int) -> float:
        """Flip spin ``i``; returns the energy change."""
        t = self.terms_of[i]
        delta = -2.0 * float(self.coefs[t] @ self.values[t])
        self.values[t] *= -1.0
        self.energy += delta
        return delta


def _terms(energy):
    if not hasattr(energy, "walsh_terms"):
        raise DomainError("annealing needs a model exposing walsh_terms()")
    masks, coefs = energy.walsh_terms()
    const = float(coefs[masks == 0].sum())
    return masks, coefs, const


def anneal_max(energy, N: int, space: str = "cube", schedule: AnnealSchedule | None = None,
               rng=None) -> GroundStateResult:
    """Metropolis annealing maximizing ``H``: single flips, or +/- pair swaps on the balanced set."""
    if space not in SPACES:
        raise DomainError(f"unknown space {space!r}")
    schedule = schedule or AnnealSchedule()
    rng = np.random.default_rng(rng)
    masks, coefs, const = _terms(energy)
    sigma = rng.choice(np.array([-1, 1], np.int8), size=N)
    if space == "balanced":
        sigma = np.ones(N, np.int8)
        sigma[rng.permutation(N)[: N // 2]] = -1
    state = _TermState(masks, coefs, N, sigma)
    best_e, best_s = state.energy, sigma.copy()
    trace = []
    for T in schedule.temperatures():
        u = rng.random(N)
        order = rng.permutation(N)
        for step in range(N):
            if space == "cube":
                i = order[step]
                delta = -2.0 * state.field(i)
                if delta >= 0 or u[step] < np.exp(delta / T):
                    state.flip(i)
                    sigma[i] = -sigma[i]
            else:
                plus, minus = np.flatnonzero(sigma > 0), np.flatnonzero(sigma < 0)
                if not plus.size or not minus.size:
                    break
                i, j = plus[rng.integers(plus.size)], minus[rng.integers(minus.size)]
                delta = state.flip(i) + state.flip(j)
                if delta >= 0 or u[step] < np.exp(delta / T):
                    sigma[i], sigma[j] = -sigma[i], -sigma[j]
                else:
                    state.flip(j)
                    state.flip(i)
            if state.energy > best_e + 1e-12:
                best_e, best_s = state.energy, sigma.copy()
        trace.append(best_e + const)
    # finish with a greedy pass from the best point
    state.reset(best_s)
    sigma = best_s.copy()
    improved = True
    while improved and space == "cube":
        improved = False
        for i in range(N):
            if state.field(i) < -1e-12:
                state.flip(i)
                sigma[i] = -sigma[i]
                improved = True
    if state.energy > best_e:
        best_e, best_s = state.energy, sigma
    return GroundStateResult(best_e + const, [best_s], space, "anneal", 1, False, trace)


# ---------------------------------------------------------------------------
# chaos experiment
# ---------------------------------------------------------------------------


@dataclass
class ChaosStat:
    lam: float
    replica: int
    eta: float
    epsilon: float
    set1_size: int
    set2_size: int
    max_abs_overlap: float
    quantiles: tuple = ()
    frac_above_epsilon: float = float("nan")
    capped: bool = False

    def row(self) -> dict:
        return {"lambda": self.lam, "replica": self.replica, "eta": self.eta,
                "epsilon": self.epsilon, "max_abs_overlap": self.max_abs_overlap,
                "set1_size": self.set1_size, "set2_size": self.set2_size,
                "capped_flag": int(self.capped)}


@dataclass
class ChaosSummary:
    lam: float
    median_max_abs_overlap: float
    mean_max_abs_overlap: float
    median_set_size: float
    replicas: int


QUANTILE_LEVELS = (0.5, 0.9, 0.99)


def chaos_replica(pair, eta: float, epsilon: float, space: str, rng, replica: int = 0,
                  n_sample_pairs: int = 20_000) -> ChaosStat:
    lam = pair.first.lam
    N = pair.first.N
    slack = eta * np.sqrt(lam)
    s1 = near_max_set(pair.first, N, space, slack)
    s2 = near_max_set(pair.second, N, space, slack)
    mx = max_abs_cross_overlap(s1.indices, s2.indices, N)
    sample = sampled_abs_overlaps(s1.indices, s2.indices, N, n_sample_pairs, rng)
    q = tuple(float(x) for x in np.quantile(sample, QUANTILE_LEVELS))
    return ChaosStat(lam, replica, eta, epsilon, s1.size, s2.size, mx, q,
                     float(np.mean(sample > epsilon)))


def chaos_experiment(scheme: str, model_params: dict, t: float, lambdas: Sequence[float],
                     eta: float, epsilon: float, replicas: int, rng, space: str = "cube"
                     ) -> tuple[list[ChaosStat], list[ChaosSummary]]:
    """Near-maximizer overlaps of coupled diluted systems for each connectivity.

    ``model_params`` holds ``model``, ``K`` and ``N``.  Returns per-replica
    statistics and per-lambda aggregates.
    """
    _check_n(model_params["N"])
    seeds = np.random.SeedSequence(np.random.default_rng(rng).integers(0, 2 ** 63))
    stats, summary = [], []
    for lam, ss in zip(lambdas, seeds.spawn(len(lambdas))):
        params = dict(model_params, lam=float(lam))
        per = []
        for r, child in enumerate(ss.spawn(replicas)):
            gen = np.random.default_rng(child)
            pair = couple(scheme, t, params, gen)
            per.append(chaos_replica(pair, eta, epsilon, space, gen, r))
        stats.extend(per)
        mx = np.array([s.max_abs_overlap for s in per])
        summary.append(ChaosSummary(float(lam), float(np.median(mx)), float(mx.mean()),
                                    float(np.median([s.set1_size for s in per])), replicas))
    return stats, summary
