"""Fully connected mixed p-spin Hamiltonians and correlated copies.

``H(sigma) = sum_p w_p sum_{i_1..i_p} g_{i_1..i_p} sigma_{i_1} ... sigma_{i_p}``
with ``w_p = sqrt(c_p / N**(p-1))``, so that ``E H(s1) H(s2) = N xi(R)``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import DomainError
from .mixing import MixingPair


@dataclass(frozen=True, eq=False)
class GaussianModel:
    mixing: MixingPair
    N: int
    layers: Mapping[int, np.ndarray]  # p -> tensor of shape (N,)*p

    def weight(self, p: int) -> float:
        return float(np.sqrt(self.mixing.xi_coefficients[p] / self.N ** (p - 1)))

    @property
    def orders(self) -> tuple:
        return tuple(sorted(self.layers))

    def energy(self, sigma):
        return gaussian_energy(self, sigma)

    def walsh_terms(self) -> tuple[np.ndarray, np.ndarray]:
        """Expansion into products of distinct spins; ``sigma_i**2 = 1`` cancels repeats."""
        masks, coefs = [], []
        for p in self.orders:
            idx = np.array(list(itertools.product(range(self.N), repeat=p)), dtype=np.int64)
            m = np.bitwise_xor.reduce(np.left_shift(np.int64(1), idx), axis=1)
            masks.append(m)
            coefs.append(self.weight(p) * self.layers[p].ravel())
        return np.concatenate(masks), np.concatenate(coefs)

    def walsh_coefficients(self) -> np.ndarray:
        masks, coef = self.walsh_terms()
        return np.bincount(masks, weights=coef, minlength=1 << self.N)


@dataclass(frozen=True, eq=False)
class CorrelatedGaussianPair:
    first: GaussianModel
    second: GaussianModel
    rho: Mapping[int, float]


def active_orders(mixing: MixingPair) -> list[int]:
    return [p for p, c in enumerate(mixing.xi_coefficients) if p >= 1 and c > 0]


def layer_correlations(mixing: MixingPair) -> dict[int, float]:
    """Per-order correlation rho_p with ``sum_p c_p rho_p s**p = xi0(s)``."""
    c, c0 = mixing.xi_coefficients, mixing.xi0_coefficients
    rho = {}
    for p in active_orders(mixing):
        r = c0[p] / c[p] if p < len(c0) else 0.0
        if not -1.0 <= r <= 1.0:
            raise DomainError(f"xi0 coefficient exceeds xi coefficient at order {p}")
        rho[p] = float(r)
    return rho


def sample_gaussian(mixing: MixingPair, N: int, rng) -> GaussianModel:
    if N < 1:
        raise DomainError("N must be positive")
    rng = np.random.default_rng(rng)
    layers = {p: rng.standard_normal((N,) * p) for p in active_orders(mixing)}
    return GaussianModel(mixing, N, layers)


def _product_features(sigma: np.ndarray, p: int) -> np.ndarray:
    """Flattened ``sigma^{(x)p}`` for a batch of configurations, shape (..., N**p)."""
    out = sigma
    for _ in range(p - 1):
        out = (out[..., :, None] * sigma[..., None, :]).reshape(*sigma.shape[:-1], -1)
    return out


def gaussian_energy(model: GaussianModel, sigma):
    s = np.asarray(sigma, dtype=float)
    if s.shape[-1] != model.N:
        raise DomainError(f"configuration has length {s.shape[-1]}, expected {model.N}")
    total = np.zeros(s.shape[:-1])
    for p in model.orders:
        total = total + model.weight(p) * (_product_features(s, p) @ model.layers[p].ravel())
    return total if np.ndim(total) else float(total)


def couple_gaussian(mixing: MixingPair, N: int, rng, rho: Mapping[int, float] | None = None
                    ) -> CorrelatedGaussianPair:
    """Second copy ``g2 = rho_p g1 + sqrt(1 - rho_p**2) g_fresh`` layer by layer.

    ``rho`` overrides the per-order correlations derived from the mixing pair.
    """
    rng = np.random.default_rng(rng)
    rho = dict(layer_correlations(mixing) if rho is None else rho)
    first = sample_gaussian(mixing, N, rng)
    layers2 = {}
    for p, g in first.layers.items():
        r = rho[p]
        layers2[p] = r * g + np.sqrt(max(0.0, 1.0 - r * r)) * rng.standard_normal(g.shape)
    return CorrelatedGaussianPair(first, GaussianModel(mixing, N, layers2), rho)


@dataclass(frozen=True)
class CovarianceEstimate:
    mean: np.ndarray  # per configuration pair, divided by N
    stderr: np.ndarray
    expected: np.ndarray


def cross_covariance_mc(mixing: MixingPair, N: int, sigma1, sigma2, n_samples: int, rng,
                        rho: Mapping[int, float] | None = None, same_copy: bool = False,
                        chunk: int = 10_000) -> CovarianceEstimate:
    """Monte Carlo estimate of ``E H1(s1) H2(s2) / N`` for rows of ``sigma1``, ``sigma2``.

    Each sample draws a fresh correlated pair of coefficient sets; with
    ``same_copy`` both energies come from the first copy.
    """
    rng = np.random.default_rng(rng)
    s1 = np.atleast_2d(np.asarray(sigma1, dtype=float))
    s2 = np.atleast_2d(np.asarray(sigma2, dtype=float))
    corr = dict(layer_correlations(mixing) if rho is None else rho)
    if same_copy:
        corr = {p: 1.0 for p in corr}
    probe = GaussianModel(mixing, N, {p: None for p in corr})
    feats = {p: (probe.weight(p) * _product_features(s1, p), probe.weight(p) * _product_features(s2, p))
             for p in corr}
    total = np.zeros(s1.shape[0])
    total_sq = np.zeros(s1.shape[0])
    done = 0
    while done < n_samples:
        n = min(chunk, n_samples - done)
        h1 = np.zeros((n, s1.shape[0]))
        h2 = np.zeros((n, s1.shape[0]))
        for p, r in corr.items():
            g1 = rng.standard_normal((n, N ** p))
            g2 = r * g1 + np.sqrt(max(0.0, 1.0 - r * r)) * rng.standard_normal((n, N ** p))
            h1 += g1 @ feats[p][0].T
            h2 += g2 @ feats[p][1].T
        prod = h1 * h2 / N
        total += prod.sum(axis=0)
        total_sq += (prod ** 2).sum(axis=0)
        done += n
    mean = total / n_samples
    var = total_sq / n_samples - mean ** 2
    R = np.mean(s1 * s2, axis=1)
    expected = np.asarray(mixing.xi(R) if same_copy else mixing.xi0(R), dtype=float)
    return CovarianceEstimate(mean, np.sqrt(var / n_samples), expected)
