import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from spinchaos.errors import DomainError
from spinchaos.mixing import (
    MixingPair, StepGamma, check_conditions, check_gamma_q_identity, gamma_q,
    integrate, xi0_eval, xi_eval, zeta,
)


def sym_zeta(kind, K, t, corr, s_val, sign):
    s = sp.Symbol("s")
    xi = s ** K if kind == "pure" else (1 + s) ** K - 1
    xi0 = t * xi if corr == "scaled" else xi.subs(s, t * s)
    d2 = sp.diff(xi, s, 2).subs(s, s_val)
    d20 = sp.diff(xi0, s, 2).subs(s, sign * s_val)
    return float(d2 / (d2 + d20))


@pytest.mark.parametrize("m,s,order,expected", [
    (MixingPair("pure", 2), 0.5, 0, 0.25),
    (MixingPair("ksat", 3), 1.0, 0, 7.0),
    (MixingPair("ksat", 3), 0.0, 2, 6.0),
])
def test_xi_examples(m, s, order, expected):
    assert xi_eval(m, s, order) == pytest.approx(expected, abs=1e-14)


@pytest.mark.parametrize("m,s,order,expected", [
    (MixingPair("pure", 2, 0.5, "scaled"), 1.0, 0, 0.5),
    (MixingPair("ksat", 2, 0.5, "argument"), 1.0, 0, 1.25),
    (MixingPair("ksat", 2, 0.5, "argument"), 0.0, 2, 0.5),
])
def test_xi0_examples(m, s, order, expected):
    assert xi0_eval(m, s, order) == pytest.approx(expected, abs=1e-14)


def test_domain_errors():
    m = MixingPair("pure", 2)
    with pytest.raises(DomainError):
        xi_eval(m, 1.5)
    with pytest.raises(DomainError):
        zeta(m, 0.0)
    with pytest.raises(DomainError):
        gamma_q(m, StepGamma.constant(1.0), 0.0)


def test_zeta_examples():
    assert zeta(MixingPair("pure", 2, 0.5, "scaled"), 0.7, 1) == pytest.approx(2 / 3, abs=1e-14)
    for s in (0.1, 0.5, 1.0):
        assert zeta(MixingPair("ksat", 2, 0.5, "argument"), s, 1) == pytest.approx(0.8, abs=1e-14)
    val = zeta(MixingPair("ksat", 3, 0.5, "argument"), 0.5, -1)
    assert val == pytest.approx(sym_zeta("ksat", 3, sp.Rational(1, 2), "argument", sp.Rational(1, 2), -1), abs=1e-14)
    assert val == pytest.approx(0.8888888888888888, abs=1e-14)


@pytest.mark.parametrize("kind,K", [("pure", 2), ("pure", 4), ("ksat", 2), ("ksat", 3), ("ksat", 5)])
@pytest.mark.parametrize("corr", ["scaled", "argument"])
def test_derivatives_match_symbolic(kind, K, corr):
    t = 0.35
    m = MixingPair(kind, K, t, corr)
    s = sp.Symbol("s")
    xi = s ** K if kind == "pure" else (1 + s) ** K - 1
    xi0 = t * xi if corr == "scaled" else xi.subs(s, t * s)
    for x in np.linspace(-1, 1, 9):
        for order in range(4):
            assert m.xi(x, order) == pytest.approx(float(sp.diff(xi, s, order).subs(s, x)), abs=1e-12)
            assert m.xi0(x, order) == pytest.approx(float(sp.diff(xi0, s, order).subs(s, x)), abs=1e-12)


@pytest.mark.parametrize("K", [2, 3, 4, 6])
def test_ksat_series_matches_closed_form(K):
    m = MixingPair("ksat", K)
    grid = np.linspace(-1, 1, 201)
    series = sum(m.xi_coefficients[p] * grid ** p for p in range(K + 1))
    assert np.max(np.abs(series - m.xi(grid))) <= 1e-12


def test_scaled_zeta_plus_constant():
    for K in (2, 3, 4):
        for kind in ("pure", "ksat"):
            m = MixingPair(kind, K, 0.3, "scaled")
            z = m.zeta(np.linspace(0.01, 1, 50), 1)
            assert np.allclose(z, 1 / 1.3, atol=1e-14)
    m = MixingPair("pure", 4, 0.3, "scaled")
    assert np.allclose(m.zeta(np.linspace(0.01, 1, 50), -1), 1 / 1.3, atol=1e-14)


def test_check_conditions_examples():
    assert check_conditions(MixingPair("pure", 2, 0.5, "scaled"), 1000).passed
    assert check_conditions(MixingPair("ksat", 3, 0.9, "argument"), 1000).passed
    rep = check_conditions(MixingPair("custom", coeffs=(0, 0, 1), coeffs0=(0, 0, 1)), 1000)
    assert not rep["xi0_below_xi"].passed
    assert rep["xi0_below_xi"].first_violation is not None
    rep = check_conditions(MixingPair("pure", 2, 1.0, "scaled"), 100)
    assert not rep.passed


def test_step_gamma_basics():
    g = StepGamma((0.3, 0.7, 1.0), (0.5, 1.0, 2.0))
    assert g(0.0) == 0.5 and g(0.3) == 1.0 and g(0.69) == 1.0 and g(1.0) == 2.0
    assert g.left_limit(0.3) == 0.5
    assert StepGamma.from_text(g.to_text()) == g
    with pytest.raises(DomainError):
        StepGamma((0.5, 0.4), (1, 2))
    with pytest.raises(DomainError):
        StepGamma((0.5, 1.0), (2, 1))


def test_gamma_q_examples():
    m = MixingPair("pure", 2, 0.5, "scaled")
    gq = gamma_q(m, StepGamma.constant(1.0), 0.5)
    assert gq(0.2) == pytest.approx(2 / 3) and gq(0.5) == 1.0 and gq(0.9) == 1.0
    z = gamma_q(MixingPair("ksat", 3, 0.5, "argument"), StepGamma.constant(0.0), -0.3)
    assert all(z(s) == 0 for s in np.linspace(0, 1, 11))


def test_gamma_q_ksat_three_step_pointwise():
    m = MixingPair("ksat", 3, 0.5, "argument")
    gP = StepGamma((0.2, 0.6, 1.0), (0.5, 1.5, 3.0))
    gq = gamma_q(m, gP, -0.4)
    for s in np.linspace(0.01, 0.99, 40):
        expect = gP(s) * (sym_zeta("ksat", 3, 0.5, "argument", s, -1) if s < 0.4 else 1.0)
        assert gq(s) == pytest.approx(expect, abs=1e-12)
    # the identity computed by an independent integration of the pointwise formula
    w = lambda s: s * m.xi(s, 2) * gq(s)
    w0 = lambda s: s * m.xi0(-s, 2) * gq(s)
    lhs = integrate(w, 0, 1, (0.2, 0.4, 0.6), 1e-12) + integrate(w0, 0, 0.4, (0.2,), 1e-12)
    rhs = integrate(lambda s: s * m.xi(s, 2) * gP(s), 0, 1, (0.2, 0.6), 1e-12)
    assert abs(lhs - rhs) < 1e-9


def test_identity_examples():
    m = MixingPair("pure", 2, 0.5, "scaled")
    assert check_gamma_q_identity(m, StepGamma.constant(0.0), 0.5).residual == 0.0
    r = check_gamma_q_identity(m, StepGamma.constant(1.0), 0.5)
    assert r.residual <= 1e-10 and r.rhs == pytest.approx(1.0, abs=1e-12)
    rng = np.random.default_rng(5)
    q = np.sort(rng.uniform(0, 1, 3))
    gP = StepGamma((*q, 1.0), tuple(np.sort(rng.uniform(0, 4, 4))))
    assert check_gamma_q_identity(MixingPair("ksat", 3, 0.7, "argument"), gP, 0.3).residual <= 1e-8


def test_as_step_close_to_gamma_q():
    m = MixingPair("ksat", 3, 0.5, "argument")
    gP = StepGamma((0.2, 0.6, 1.0), (0.5, 1.5, 3.0))
    gq = gamma_q(m, gP, 0.45)
    step = gq.as_step(0.005)
    grid = np.linspace(0, 1, 997)
    assert np.max(np.abs(step(grid) - gq(grid))) < 0.01


mixings = st.builds(
    MixingPair,
    kind=st.sampled_from(["pure", "ksat"]),
    K=st.sampled_from([2, 4]) | st.integers(2, 5),
    t=st.floats(0.05, 0.95),
    corr_kind=st.sampled_from(["scaled", "argument"]),
).filter(lambda m: m.kind == "ksat" or m.K % 2 == 0)


@st.composite
def step_gammas(draw):
    k = draw(st.integers(1, 5))
    q = sorted(set(draw(st.lists(st.floats(0.02, 0.98), min_size=k - 1, max_size=k - 1))))
    m = sorted(draw(st.lists(st.floats(0, 10), min_size=len(q) + 1, max_size=len(q) + 1)))
    return StepGamma((*q, 1.0), tuple(m))


qs = st.floats(-1, 1).filter(lambda q: abs(q) > 1e-3)


@settings(max_examples=100, deadline=None)
@given(mixings, step_gammas(), qs)
def test_gamma_q_nondecreasing(m, gP, q):
    gq = gamma_q(m, gP, q)
    grid = np.linspace(0, 1, 2001)
    vals = gq(grid)
    assert np.all(vals >= 0)
    assert np.all(np.diff(vals) >= -1e-12 * np.maximum(1, vals[1:]))
    if abs(q) < 1:
        assert gq(abs(q) - 1e-12) <= gP(abs(q)) + 1e-12


@settings(max_examples=100, deadline=None)
@given(mixings, step_gammas(), qs)
def test_identity_random(m, gP, q):
    assert check_gamma_q_identity(m, gP, q).residual <= 1e-8
