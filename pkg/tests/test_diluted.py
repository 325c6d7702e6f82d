import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spinchaos.diluted import (
    DilutedInstance, balanced_project, couple, hamiltonian, hamming, instance_from_text,
    instance_to_text, magnetization, overlap, read_instance, sample_instance,
    sign_moment_closed_form, sign_moment_oracle, theta_eval, write_instance,
)
from spinchaos.errors import DomainError


def naive_energy(inst, sigma):
    total = 0.0
    for ix, sg in zip(inst.indices, inst.signs):
        total += theta_eval(inst.model, inst.K, sg, [sigma[i] for i in ix])
    return total


def test_theta_examples():
    assert theta_eval("antiferro", 2, (1, 1), (1, -1)) == 1
    assert theta_eval("ksat", 2, (1, 1), (1, 1)) == -1
    assert theta_eval("ksat", 2, (1, 1), (-1, 1)) == 0
    assert theta_eval("kspin", 2, (-1, 1), (1, 1)) == -1
    with pytest.raises(DomainError):
        theta_eval("ksat", 2, (1, 1), (0, 1))


def test_hamiltonian_examples():
    inst = DilutedInstance("antiferro", 2, 3, 1.0, [[0, 1], [1, 2]], [[1, 1], [1, 1]])
    assert hamiltonian(inst, [1, -1, 1]) == 2
    empty = DilutedInstance("ksat", 3, 4, 1.0, np.zeros((0, 3)), np.zeros((0, 3)))
    assert hamiltonian(empty, [1, -1, 1, 1]) == 0
    with pytest.raises(DomainError):
        hamiltonian(inst, [1, 1])


@pytest.mark.parametrize("model,K", [("antiferro", 2), ("antiferro", 4), ("kspin", 2), ("kspin", 3), ("ksat", 2), ("ksat", 3)])
def test_hamiltonian_matches_naive_and_walsh(model, K):
    rng = np.random.default_rng(K)
    inst = sample_instance(model, K, 9, 3.0, rng)
    coef = inst.walsh_coefficients()
    for _ in range(20):
        s = rng.choice([-1, 1], size=9)
        e = hamiltonian(inst, s)
        assert e == pytest.approx(naive_energy(inst, s), abs=1e-12)
        c = int(sum(1 << i for i in range(9) if s[i] == -1))
        walsh = sum(coef[mask] * (-1) ** bin(c & mask).count("1") for mask in range(1 << 9))
        assert e == pytest.approx(walsh, abs=1e-9)
        if model == "ksat":
            assert -inst.n_clauses <= e <= 0
        else:
            assert abs(e) <= inst.n_clauses


def test_sample_statistics():
    rng = np.random.default_rng(1)
    counts = np.array([sample_instance("kspin", 2, 100, 2.0, rng).n_clauses for _ in range(10_000)])
    assert abs(counts.mean() - 200) <= 3 * np.sqrt(200 / counts.size)
    assert abs(counts.var() - 200) <= 4 * 200 * np.sqrt(2 / counts.size)
    assert sample_instance("ksat", 3, 10, 1e-9, rng).n_clauses == 0
    signs = np.concatenate([sample_instance("ksat", 3, 50, 4.0, rng).signs.ravel() for _ in range(20)])
    assert abs(signs.mean()) <= 3 / np.sqrt(signs.size)


def test_signs_b_correlation():
    pair = couple("signs-b", 0.5, dict(model="kspin", K=2, N=50_000, lam=2.0), np.random.default_rng(2))
    j1, j2 = pair.first.signs[:, 0].astype(float), pair.second.signs[:, 0].astype(float)
    prod = j1 * j2
    assert np.array_equal(pair.first.indices, pair.second.indices)
    assert abs(prod.mean() - 0.5) <= 3 * prod.std() / np.sqrt(prod.size)
    assert np.all(pair.second.signs[:, 1:] == 1)


def test_signs_a_structure_and_limit():
    pair = couple("signs-a", 1 - 1e-9, dict(model="ksat", K=3, N=200, lam=3.0), np.random.default_rng(3))
    assert np.array_equal(pair.first.signs, pair.second.signs)
    pair = couple("signs-a", 0.4, dict(model="ksat", K=3, N=20_000, lam=2.0), np.random.default_rng(4))
    same = np.all(pair.first.signs == pair.second.signs, axis=1)
    # shared with prob t, otherwise equal by chance with prob 2^-K
    p = 0.4 + 0.6 / 8
    assert abs(same.mean() - p) <= 4 * np.sqrt(p * (1 - p) / same.size)


def test_resample_clauses_split():
    rng = np.random.default_rng(5)
    common, private = [], []
    for _ in range(2000):
        pair = couple("resample-clauses", 0.3, dict(model="kspin", K=2, N=50, lam=2.0), rng)
        c = pair.n_common
        assert np.array_equal(pair.first.indices[:c], pair.second.indices[:c])
        assert np.array_equal(pair.first.signs[:c], pair.second.signs[:c])
        common.append(c)
        private.append(pair.first.n_clauses - c)
    for arr, mean in ((np.array(common), 30.0), (np.array(private), 70.0)):
        assert abs(arr.mean() - mean) <= 4 * np.sqrt(mean / arr.size)


@pytest.mark.parametrize("scheme", ["resample-clauses", "signs-a", "signs-b"])
def test_coupled_marginals(scheme):
    rng = np.random.default_rng(6)
    counts, signs = [], []
    for _ in range(10_000):
        pair = couple(scheme, 0.5, dict(model="kspin", K=2, N=10, lam=1.5), rng)
        counts.append(pair.second.n_clauses)
        signs.append(pair.second.signs[:, 0].sum())
    counts = np.array(counts)
    mean = 15.0
    assert abs(counts.mean() - mean) <= 4 * np.sqrt(mean / counts.size)
    assert abs(counts.var() - mean) <= 4 * mean * np.sqrt(2 / counts.size) + 4 * np.sqrt(mean / counts.size)
    assert abs(np.sum(signs)) <= 4 * np.sqrt(counts.sum())


def test_couple_errors():
    with pytest.raises(DomainError):
        couple("signs-a", 0.5, dict(model="antiferro", K=2, N=10, lam=1.0))
    with pytest.raises(DomainError):
        couple("signs-b", 1.0, dict(model="kspin", K=2, N=10, lam=1.0))


def test_sign_moment_examples():
    assert sign_moment_oracle("case-a", 1, Fraction(1, 2), (1,), (1,)) == Fraction(3, 8)
    for s1 in itertools.product((-1, 1), repeat=2):
        for s2 in itertools.product((-1, 1), repeat=2):
            assert sign_moment_oracle("case-b", 2, 0, s1, s2) == Fraction(1, 16)
    assert sign_moment_oracle("same-copy", 2, Fraction(1, 2), (1, -1), (1, -1)) == Fraction(1, 4)


@pytest.mark.parametrize("K", [1, 2, 3, 4])
@pytest.mark.parametrize("t", [Fraction(1, 4), Fraction(1, 2), Fraction(3, 4)])
def test_sign_moments_exact(K, t):
    configs = list(itertools.product((-1, 1), repeat=K))
    for case in ("same-copy", "case-a", "case-b"):
        for s1 in configs:
            for s2 in configs:
                assert sign_moment_oracle(case, K, t, s1, s2) == sign_moment_closed_form(case, t, s1, s2)


def test_balanced_examples():
    s = np.array([1, 1, 1, -1])
    p = balanced_project(s)
    assert magnetization(p) == 0 and hamming(s, p) == 0.25 == abs(magnetization(s)) / 2
    b = np.array([1, -1, -1, 1])
    assert np.array_equal(balanced_project(b), b)
    s5 = np.array([1, 1, 1, 1, -1])
    p5 = balanced_project(s5)
    assert magnetization(p5) == pytest.approx(1 / 5)
    assert hamming(s5, p5) <= abs(magnetization(s5)) / 2 + 1 / 10


@settings(max_examples=200, deadline=None)
@given(st.lists(st.sampled_from([-1, 1]), min_size=1, max_size=40))
def test_balanced_project_properties(spins):
    s = np.array(spins, dtype=np.int8)
    N = s.size
    p = balanced_project(s)
    assert int(p.sum()) == N % 2
    changed = np.flatnonzero(p != s)
    if changed.size:
        # only majority spins flipped, all to the same sign
        assert np.all(s[changed] == s[changed[0]])
    bound = abs(magnetization(s)) / 2 + (0.5 / N if N % 2 else 0.0)
    assert hamming(s, p) <= bound + 1e-12


def test_overlap_examples():
    s = np.array([1, -1, 1, 1])
    assert overlap(s, s) == 1 and overlap(s, -s) == -1
    assert overlap([1, 1, -1, -1], [1, -1, 1, -1]) == 0
    with pytest.raises(DomainError):
        overlap([1, 1], [1, 1, 1])


def test_serialization_roundtrip(tmp_path):
    rng = np.random.default_rng(7)
    for model, K in (("kspin", 2), ("ksat", 3), ("antiferro", 4)):
        inst = sample_instance(model, K, 13, 2.3, rng)
        back = instance_from_text(instance_to_text(inst))
        assert instance_to_text(back) == instance_to_text(inst)
        assert np.array_equal(back.indices, inst.indices) and np.array_equal(back.signs, inst.signs)
        assert back.lam == inst.lam
    inst = sample_instance("ksat", 3, 11, 1.7, 42)
    path = tmp_path / "inst.txt"
    write_instance(inst, path)
    back = read_instance(path)
    assert back.seed == 42 and instance_to_text(back) == instance_to_text(inst)
