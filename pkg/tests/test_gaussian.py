import itertools

import numpy as np
import pytest

from spinchaos.errors import DomainError
from spinchaos.gaussian import (
    GaussianModel, couple_gaussian, cross_covariance_mc, gaussian_energy, layer_correlations,
    sample_gaussian,
)
from spinchaos.mixing import MixingPair


def naive_energy(model, sigma):
    total = 0.0
    for p, g in model.layers.items():
        w = np.sqrt(model.mixing.xi_coefficients[p] / model.N ** (p - 1))
        for idx in itertools.product(range(model.N), repeat=p):
            term = g[idx]
            for i in idx:
                term *= sigma[i]
            total += w * term
    return total


def test_sample_shapes_and_weights():
    m = sample_gaussian(MixingPair("pure", 2), 8, 0)
    g = m.layers[2]
    assert g.size == 64 and abs(g.mean()) <= 0.5
    m = sample_gaussian(MixingPair("ksat", 2), 4, 1)
    assert m.orders == (1, 2)
    assert m.layers[1].shape == (4,) and m.layers[2].shape == (4, 4)
    assert m.weight(1) == pytest.approx(np.sqrt(2)) and m.weight(2) == pytest.approx(0.5)
    m = sample_gaussian(MixingPair("pure", 2), 1, 2)
    assert gaussian_energy(m, [1]) == pytest.approx(m.layers[2][0, 0])
    assert gaussian_energy(m, [-1]) == pytest.approx(m.layers[2][0, 0])


def test_energy_examples():
    mix = MixingPair("pure", 2)
    zero = GaussianModel(mix, 3, {2: np.zeros((3, 3))})
    assert gaussian_energy(zero, [1, -1, 1]) == 0
    g = np.zeros((2, 2))
    g[0, 0] = 1
    assert gaussian_energy(GaussianModel(mix, 2, {2: g}), [1, -1]) == pytest.approx(1 / np.sqrt(2))
    with pytest.raises(DomainError):
        gaussian_energy(zero, [1, 1])


@pytest.mark.parametrize("kind,K", [("pure", 2), ("pure", 3), ("ksat", 3)])
def test_energy_matches_naive(kind, K):
    rng = np.random.default_rng(K)
    model = sample_gaussian(MixingPair(kind, K), 5, rng)
    for _ in range(5):
        s = rng.choice([-1, 1], size=5)
        assert gaussian_energy(model, s) == pytest.approx(naive_energy(model, s), abs=1e-12)


def test_superposition():
    rng = np.random.default_rng(3)
    mix = MixingPair("ksat", 3)
    a, b = sample_gaussian(mix, 4, rng), sample_gaussian(mix, 4, rng)
    both = GaussianModel(mix, 4, {p: 2.0 * a.layers[p] - 0.5 * b.layers[p] for p in a.orders})
    s = rng.choice([-1, 1], size=(10, 4))
    assert np.allclose(gaussian_energy(both, s), 2 * gaussian_energy(a, s) - 0.5 * gaussian_energy(b, s))


def test_layer_correlations():
    assert layer_correlations(MixingPair("ksat", 2, 0.5, "scaled")) == {1: 0.5, 2: 0.5}
    assert layer_correlations(MixingPair("ksat", 2, 0.5, "argument")) == {1: 0.5, 2: 0.25}


def test_couple_limit():
    pair = couple_gaussian(MixingPair("ksat", 3, 1 - 1e-12, "argument"), 4, 0)
    for p in pair.first.orders:
        assert np.max(np.abs(pair.first.layers[p] - pair.second.layers[p])) < 1e-5


@pytest.mark.parametrize("corr", ["scaled", "argument"])
def test_coupled_pairs_cross_covariance(corr):
    mix = MixingPair("ksat", 2, 0.5, corr)
    rng = np.random.default_rng(11)
    N, n = 6, 20_000
    s1 = rng.choice([-1, 1], size=(10, N))
    s2 = rng.choice([-1, 1], size=(10, N))
    prods = np.empty((n, 10))
    for k in range(n):
        pair = couple_gaussian(mix, N, rng)
        prods[k] = gaussian_energy(pair.first, s1) * gaussian_energy(pair.second, s2) / N
    R = np.mean(s1 * s2, axis=1)
    expected = mix.t * mix.xi(R) if corr == "scaled" else mix.xi(mix.t * R)
    se = prods.std(axis=0) / np.sqrt(n)
    assert np.all(np.abs(prods.mean(axis=0) - expected) <= 5 * se)


@pytest.mark.parametrize("mix", [MixingPair("pure", 2, 0.3, "scaled"), MixingPair("ksat", 3, 0.6, "argument")])
def test_covariance_helper(mix):
    rng = np.random.default_rng(4)
    s1 = rng.choice([-1, 1], size=(20, 6))
    s2 = rng.choice([-1, 1], size=(20, 6))
    for same in (True, False):
        est = cross_covariance_mc(mix, 6, s1, s2, 40_000, rng, same_copy=same)
        assert np.all(np.abs(est.mean - est.expected) <= 5 * est.stderr)


def test_wrong_layer_correlation_detected():
    mix = MixingPair("ksat", 2, 0.5, "argument")
    s = np.ones((1, 6))
    est = cross_covariance_mc(mix, 6, s, s, 100_000, 0, rho={1: 0.5, 2: 0.5})
    assert np.abs(est.mean - est.expected)[0] > 5 * est.stderr[0]
