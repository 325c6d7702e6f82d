"""Diluted clause models, coupled pairs, and exact sign-average oracles.

Spin configurations are ``int8`` arrays of +/-1.  Internally clause indices are
0-based; the text serialization writes them 1-based.
"""
from __future__ import annotations

import io
import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple

import numpy as np

from .errors import DomainError

MODELS = ("antiferro", "kspin", "ksat")
SCHEMES = ("resample-clauses", "signs-a", "signs-b")
SIGN_CASES = ("same-copy", "case-a", "case-b")


class Clause(NamedTuple):
    indices: tuple
    signs: tuple


def _as_spins(sigma) -> np.ndarray:
    s = np.asarray(sigma)
    if not np.all((s == 1) | (s == -1)):
        raise DomainError("spins must be +1 or -1")
    return s.astype(np.int8)


def theta_eval(model: str, K: int, signs, spins) -> float:
    """Value of one clause on the spins it touches."""
    spins = _as_spins(spins)
    if spins.shape[-1] != K:
        raise DomainError(f"expected {K} spins, got {spins.shape[-1]}")
    signs = np.asarray(signs)
    if model == "antiferro":
        return float(-np.prod(spins))
    if model == "kspin":
        return float(signs[0] * np.prod(spins))
    if model == "ksat":
        return -float(np.prod((1 + signs * spins) // 2))
    raise DomainError(f"unknown model {model!r}")


@dataclass(frozen=True, eq=False)
class DilutedInstance:
    model: str
    K: int
    N: int
    lam: float
    indices: np.ndarray  # (M, K) int64, 0-based
    signs: np.ndarray  # (M, K) int8
    seed: int | None = None

    def __post_init__(self):
        if self.model not in MODELS:
            raise DomainError(f"unknown model {self.model!r}")
        if self.model == "antiferro" and self.K % 2:
            raise DomainError("the antiferromagnetic model is used with even K only")
        if self.K < 1 or self.N < 1 or self.lam < 0:
            raise DomainError("need K >= 1, N >= 1 and lambda >= 0")
        idx = np.asarray(self.indices, dtype=np.int64).reshape(-1, self.K)
        sg = np.asarray(self.signs, dtype=np.int8).reshape(-1, self.K)
        if idx.shape != sg.shape:
            raise DomainError("indices and signs must have the same shape")
        if idx.size and (idx.min() < 0 or idx.max() >= self.N):
            raise DomainError("clause index out of range")
        idx.setflags(write=False)
        sg.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "signs", sg)

    @property
    def n_clauses(self) -> int:
        return self.indices.shape[0]

    @property
    def clauses(self) -> list[Clause]:
        return [Clause(tuple(int(i) for i in ix), tuple(int(s) for s in sg))
                for ix, sg in zip(self.indices, self.signs)]

    def energy(self, sigma) -> np.ndarray | float:
        return hamiltonian(self, sigma)

    def walsh_terms(self) -> tuple[np.ndarray, np.ndarray]:
        """Expansion ``H(sigma) = sum_t coef_t * prod_{i in mask_t} sigma_i``.

        Masks are bit sets over spins (bit i <-> spin i); repeated indices cancel.
        """
        bits = np.left_shift(np.int64(1), self.indices)
        if self.model in ("antiferro", "kspin"):
            masks = np.bitwise_xor.reduce(bits, axis=1) if self.n_clauses else np.zeros(0, np.int64)
            coef = (-np.ones(self.n_clauses) if self.model == "antiferro"
                    else self.signs[:, 0].astype(float))
            return masks, coef
        masks, coefs = [], []
        scale = -(0.5 ** self.K)
        for subset in itertools.product((0, 1), repeat=self.K):
            sel = np.flatnonzero(subset)
            m = (np.bitwise_xor.reduce(bits[:, sel], axis=1) if sel.size
                 else np.zeros(self.n_clauses, np.int64))
            c = scale * np.prod(self.signs[:, sel], axis=1).astype(float)
            masks.append(m)
            coefs.append(c)
        return np.concatenate(masks), np.concatenate(coefs)

    def walsh_coefficients(self) -> np.ndarray:
        masks, coef = self.walsh_terms()
        return np.bincount(masks, weights=coef, minlength=1 << self.N)

    def with_clauses(self, indices, signs) -> "DilutedInstance":
        return DilutedInstance(self.model, self.K, self.N, self.lam, indices, signs, self.seed)


def _rng(rng) -> tuple[np.random.Generator, int | None]:
    if isinstance(rng, np.random.Generator):
        return rng, None
    return np.random.default_rng(rng), (None if rng is None else int(rng))


def _draw_clauses(model: str, K: int, N: int, mean: float, rng: np.random.Generator):
    M = int(rng.poisson(mean)) if mean > 0 else 0
    idx = rng.integers(0, N, size=(M, K))
    if model == "antiferro":
        sg = np.ones((M, K), np.int8)
    elif model == "kspin":
        sg = np.ones((M, K), np.int8)
        sg[:, 0] = rng.choice(np.array([-1, 1], np.int8), size=M)
    else:
        sg = rng.choice(np.array([-1, 1], np.int8), size=(M, K))
    return idx, sg


def sample_instance(model: str, K: int, N: int, lam: float, rng=None) -> DilutedInstance:
    """Poisson(lam*N) clauses with i.i.d. uniform indices (repeats allowed) and signs."""
    if lam < 0:
        raise DomainError("lambda must be nonnegative")
    gen, seed = _rng(rng)
    idx, sg = _draw_clauses(model, K, N, lam * N, gen)
    return DilutedInstance(model, K, N, lam, idx, sg, seed)


def hamiltonian(inst: DilutedInstance, sigma) -> np.ndarray | float:
    s = _as_spins(sigma)
    if s.shape[-1] != inst.N:
        raise DomainError(f"configuration has length {s.shape[-1]}, expected {inst.N}")
    picked = s[..., inst.indices]  # (..., M, K)
    if inst.model == "antiferro":
        vals = -np.prod(picked, axis=-1, dtype=np.int64)
    elif inst.model == "kspin":
        vals = inst.signs[:, 0] * np.prod(picked, axis=-1, dtype=np.int64)
    else:
        vals = -np.all(picked == inst.signs, axis=-1).astype(np.int64)
    out = vals.sum(axis=-1).astype(float)
    return out if np.ndim(out) else float(out)


# ---------------------------------------------------------------------------
# coupled pairs
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CoupledPair:
    scheme: str
    t: float
    first: DilutedInstance
    second: DilutedInstance
    n_common: int = field(default=0)


def _flip_signs(model, signs, keep_prob, rng):
    keep = rng.random(signs.shape) < keep_prob
    out = np.where(keep, signs, -signs).astype(np.int8)
    if model == "kspin":
        out[:, 1:] = 1
    return out


def couple(scheme: str, t: float, base_params: dict, rng=None) -> CoupledPair:
    """Two copies of a diluted model sharing randomness according to ``scheme``.

    ``base_params`` holds ``model``, ``K``, ``N`` and ``lam``.
    """
    if scheme not in SCHEMES:
        raise DomainError(f"unknown scheme {scheme!r}")
    if not 0.0 < t < 1.0:
        raise DomainError("t must lie in (0, 1)")
    model, K, N, lam = (base_params[k] for k in ("model", "K", "N", "lam"))
    if model not in MODELS:
        raise DomainError(f"unknown model {model!r}")
    if scheme != "resample-clauses" and model == "antiferro":
        raise DomainError("the antiferromagnetic model has no signs to resample")
    gen, seed = _rng(rng)
    if scheme == "resample-clauses":
        common_rng, rng1, rng2 = gen.spawn(3)
        ci, cs = _draw_clauses(model, K, N, t * lam * N, common_rng)
        pairs = []
        for r in (rng1, rng2):
            pi, ps = _draw_clauses(model, K, N, (1.0 - t) * lam * N, r)
            pairs.append(DilutedInstance(model, K, N, lam, np.vstack([ci, pi]),
                                         np.vstack([cs, ps]), seed))
        return CoupledPair(scheme, t, pairs[0], pairs[1], ci.shape[0])

    base_rng, resample_rng = gen.spawn(2)
    first = sample_instance(model, K, N, lam, base_rng)
    sg = first.signs
    if scheme == "signs-a":
        keep = resample_rng.random(first.n_clauses) < t
        fresh = np.ones_like(sg)
        if model == "kspin":
            fresh[:, 0] = resample_rng.choice(np.array([-1, 1], np.int8), size=first.n_clauses)
        else:
            fresh = resample_rng.choice(np.array([-1, 1], np.int8), size=sg.shape)
        second_signs = np.where(keep[:, None], sg, fresh)
    else:
        second_signs = _flip_signs(model, sg, 0.5 * (1.0 + t), resample_rng)
    second = first.with_clauses(first.indices, second_signs)
    return CoupledPair(scheme, t, DilutedInstance(model, K, N, lam, first.indices, sg, seed),
                       second, first.n_clauses)


# ---------------------------------------------------------------------------
# exact sign averages
# ---------------------------------------------------------------------------


def _pair_weight(case: str, t: Fraction, J1, J2) -> Fraction:
    K = len(J1)
    half_k = Fraction(1, 2 ** K)
    if case == "same-copy":
        return half_k if J1 == J2 else Fraction(0)
    if case == "case-a":
        return half_k * (t * (J1 == J2) + (1 - t) * half_k)
    w = Fraction(1)
    for a, b in zip(J1, J2):
        w *= Fraction(1, 2) * ((1 + t) / 2 if a == b else (1 - t) / 2)
    return w


def sign_moment_oracle(model_case: str, K: int, t, sigma1, sigma2) -> Fraction:
    """Exact coupling-law average of prod_k (1+J1 s1)/2 * (1+J2 s2)/2 by enumeration."""
    if model_case not in SIGN_CASES:
        raise DomainError(f"unknown case {model_case!r}")
    s1 = [int(x) for x in _as_spins(sigma1)]
    s2 = [int(x) for x in _as_spins(sigma2)]
    if len(s1) != K or len(s2) != K:
        raise DomainError("sigma1 and sigma2 must have K entries")
    t = Fraction(t)
    total = Fraction(0)
    signs = list(itertools.product((-1, 1), repeat=K))
    for J1 in signs:
        for J2 in signs:
            w = _pair_weight(model_case, t, J1, J2)
            if not w:
                continue
            v = Fraction(1)
            for k in range(K):
                v *= Fraction((1 + J1[k] * s1[k]) * (1 + J2[k] * s2[k]), 4)
            total += w * v
    return total


def sign_moment_closed_form(model_case: str, t, sigma1, sigma2) -> Fraction:
    t = Fraction(t)
    prods = [int(a) * int(b) for a, b in zip(sigma1, sigma2)]
    K = len(prods)
    if model_case == "same-copy":
        out = Fraction(1)
        for p in prods:
            out *= Fraction(1 + p, 4)
        return out
    if model_case == "case-a":
        same = Fraction(1)
        for p in prods:
            same *= Fraction(1 + p, 4)
        return t * same + (1 - t) / 4 ** K
    out = Fraction(1)
    for p in prods:
        out *= (1 + t * p) / 4
    return out


# ---------------------------------------------------------------------------
# balanced configurations and overlaps
# ---------------------------------------------------------------------------


def magnetization(sigma) -> float:
    s = _as_spins(sigma)
    return float(s.mean())


def balanced_target(N: int) -> int:
    """Required spin sum on the balanced set: 0 for even N, 1 for odd N."""
    return N % 2


def balanced_project(sigma) -> np.ndarray:
    """Nearest balanced configuration, flipping the lowest-index majority spins."""
    s = _as_spins(sigma).copy()
    total = int(s.sum(dtype=np.int64))
    excess = total - balanced_target(s.size)
    if excess == 0:
        return s
    majority = 1 if excess > 0 else -1
    n_flip = abs(excess) // 2
    where = np.flatnonzero(s == majority)[:n_flip]
    s[where] = -majority
    return s


def hamming(sigma1, sigma2) -> float:
    a, b = _as_spins(sigma1), _as_spins(sigma2)
    if a.shape != b.shape:
        raise DomainError("configurations differ in length")
    return float(np.mean(a != b))


def overlap(sigma1, sigma2) -> float:
    a, b = _as_spins(sigma1), _as_spins(sigma2)
    if a.shape[-1] != b.shape[-1]:
        raise DomainError("configurations differ in length")
    out = np.mean(a.astype(np.int64) * b, axis=-1)
    return out if np.ndim(out) else float(out)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def instance_to_text(inst: DilutedInstance) -> str:
    buf = io.StringIO()
    seed = "none" if inst.seed is None else str(inst.seed)
    buf.write(f"{inst.model} {inst.K} {inst.N} {float(inst.lam)!r} {seed}\n")
    for ix, sg in zip(inst.indices, inst.signs):
        buf.write(" ".join(str(int(i) + 1) for i in ix))
        buf.write(" | ")
        buf.write(" ".join(str(int(s)) for s in sg))
        buf.write("\n")
    return buf.getvalue()


def instance_from_text(text: str) -> DilutedInstance:
    lines = text.splitlines()
    model, K, N, lam, seed = lines[0].split()
    K, N = int(K), int(N)
    idx, sg = [], []
    for ln in lines[1:]:
        if not ln.strip():
            continue
        left, right = ln.split("|")
        idx.append([int(x) - 1 for x in left.split()])
        sg.append([int(x) for x in right.split()])
    return DilutedInstance(model, K, N, float(lam),
                           np.array(idx, np.int64).reshape(-1, K),
                           np.array(sg, np.int8).reshape(-1, K),
                           None if seed == "none" else int(seed))


def write_instance(inst: DilutedInstance, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(instance_to_text(inst))


def read_instance(path) -> DilutedInstance:
    with open(path, encoding="ascii") as fh:
        return instance_from_text(fh.read())
