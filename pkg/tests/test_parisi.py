import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spinchaos.errors import DomainError
from spinchaos.mixing import MixingPair, StepGamma, integrate_gamma
from spinchaos.parisi import (
    COARSE, FINE, PdeGrid, correction, decode, encode, gamma_support_check, minimize_parisi,
    parisi_value, phi0, phi0_fd, rs_zero_value, solve_phi, split_piece,
)

PURE2 = MixingPair("pure", 2)
MIXINGS = [PURE2, MixingPair("pure", 4), MixingPair("ksat", 3), MixingPair("custom", coeffs=(0, 0, 0.5, 0.5))]


@pytest.mark.parametrize("m", MIXINGS, ids=lambda m: m.label())
def test_zero_gamma_closed_form(m):
    g = StepGamma.constant(0.0)
    assert phi0(m, g) == pytest.approx(np.sqrt(2 * m.xi(1.0, 1) / np.pi), abs=1e-6)
    assert parisi_value(m, g) == pytest.approx(rs_zero_value(m), abs=1e-6)


def random_two_step(rng):
    q1 = float(rng.uniform(0.15, 0.85))
    m1 = float(rng.uniform(0.0, 2.0))
    return StepGamma((q1, 1.0), (m1, m1 + float(rng.uniform(0.0, 3.0))))


@pytest.mark.parametrize("seed", range(3))
def test_gauss_hermite_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    m = MIXINGS[seed % len(MIXINGS)]
    g = random_two_step(rng)
    assert abs(phi0(m, g) - phi0_fd(m, g, h=0.02)) <= 1e-4


def test_zero_variance_interval():
    # a piece carrying (numerically) no variance must not change the solution
    g1 = StepGamma((0.5, 0.5 + 1e-13, 1.0), (0.5, 3.0, 3.0))
    g2 = StepGamma((0.5, 1.0), (0.5, 3.0))
    assert phi0(PURE2, g1) == pytest.approx(phi0(PURE2, g2), abs=1e-10)


def test_order_doubling_is_stable():
    g = StepGamma((0.4, 0.8, 1.0), (0.3, 1.0, 2.5))
    a = phi0(PURE2, g, PdeGrid(order=64))
    b = phi0(PURE2, g, PdeGrid(order=128))
    assert abs(a - b) <= 1e-6


def test_solution_shape_properties():
    g = StepGamma((0.5, 1.0), (0.8, 2.0))
    sol = solve_phi(PURE2, g)
    x = np.linspace(-6, 6, 241)
    for w in (0.0, 0.3, 0.7):
        v = sol.value(w, x)
        d = sol.derivative(w, x)
        assert np.all(v >= np.abs(x) - 1e-9)
        assert np.all(np.abs(d) <= 1 + 1e-6)
        assert np.allclose(v, v[::-1], atol=1e-9)
        second = np.diff(v, 2)
        assert np.all(second >= -1e-9)


def test_correction_closed_form_matches_quadrature():
    g = StepGamma((0.3, 0.7, 1.0), (0.2, 0.9, 1.7))
    for m in MIXINGS:
        assert correction(m, g) == pytest.approx(0.5 * integrate_gamma(m, g), abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3))
def test_decode_produces_valid_gamma_and_round_trips(params):
    g = decode(np.array(params), 2)
    assert g.k == 2 and g.q[-1] == 1.0
    assert all(b >= a for a, b in zip(g.m, g.m[1:]))
    g2 = decode(encode(g), 2)
    assert np.allclose(g2.q, g.q, atol=1e-9) and np.allclose(g2.m, g.m, rtol=1e-9, atol=1e-9)


def test_split_piece_keeps_the_function():
    g = StepGamma((0.4, 1.0), (0.5, 1.5))
    s = split_piece(g, 0)
    xs = np.linspace(0, 1, 101)
    assert s.k == 3 and np.allclose(s(xs), g(xs))
    assert parisi_value(PURE2, s, COARSE) == pytest.approx(parisi_value(PURE2, g, COARSE), abs=1e-6)


def test_minimizer_nesting_and_bounds():
    est = minimize_parisi(PURE2, 2, 0, multistart=2, max_evals=150)
    vals = [r.value for r in est.per_k]
    assert vals[1] <= vals[0] + 1e-9
    assert est.value < rs_zero_value(PURE2)
    # zero-temperature SK ground state ~0.7632 in the normalization xi = s^2 / 2
    assert est.value / np.sqrt(2) == pytest.approx(0.7632, rel=0.01)
    data = est.to_dict()
    assert StepGamma.from_text(data["gamma"]) == est.gamma_hat


def test_support_check_examples():
    assert gamma_support_check(StepGamma.constant(0.0)).flagged
    assert not gamma_support_check(StepGamma((0.1, 1.0), (0.0, 1.0))).flagged
    assert gamma_support_check(StepGamma((0.5, 1.0), (0.0, 1.0))).flagged


def test_grid_validation():
    with pytest.raises(DomainError):
        PdeGrid(cells=2)
    assert FINE.order >= COARSE.order
