import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parabolic_iss import comparison as cf
from parabolic_iss import examples as ex
from parabolic_iss.comparison import ComparisonClassError
from parabolic_iss.expr import field_function, parse_number
from parabolic_iss.field import DIRICHLET_ZERO, NormSpec

PI = math.pi
A, B = 0.05, 40 * PI ** 2


# --- systems and certificates -----------------------------------------------

def test_reactions():
    x = np.array([0.5, -1.0])
    xl = np.array([2.0, 1.0])
    u = np.array([1.5, 2.0])
    np.testing.assert_allclose(ex.x1_reaction_ex1(x, xl, u), x * u ** 4)
    np.testing.assert_allclose(ex.x1_reaction_ex2(x, xl, u), xl * u)
    np.testing.assert_allclose(ex.x2_reaction(A, B)(x, xl, u), A * x - B * x * xl ** 2 + u)
    np.testing.assert_allclose(ex.coupling_to_x2(x, xl, u, u), np.abs(x) / np.sqrt(1 + x ** 2))
    np.testing.assert_allclose(ex.coupling_to_x1_ex2(x, xl, u, u), u ** 2)


def test_state_spaces():
    assert ex.x1_system(1).state_norm == NormSpec.lp(2)
    assert ex.x1_system(2).state_norm == NormSpec.h10()
    assert ex.x2_system(A, B).state_norm == NormSpec.h10()
    assert ex.x2_system(A, B, 1).input_norm == NormSpec.lp(2)
    assert ex.x2_system(A, B, 2).input_norm == NormSpec.h10()
    assert ex.x1_system(1).bc == DIRICHLET_ZERO


def test_x2_alpha_validity_boundary():
    ex.x2_alpha(A, B, 2 * (1 - A))
    with pytest.raises(ComparisonClassError):
        ex.x2_alpha(A, B, 2 * (1 - A) + 1e-3)


def test_gain_chain_rejects_b_zero():
    with pytest.raises(ComparisonClassError):
        ex.gain_chain(1, A, 0.0, 1.0, 2.0)


@pytest.mark.parametrize("example", [1, 2])
def test_setup_defaults(example):
    s = ex.setup(example, A, B)
    assert s.omega == pytest.approx(0.5 * (6 * PI ** 2 / B + 2 * (1 - A)))
    assert s.c_sg == pytest.approx(0.99 * math.sqrt(B * s.omega / (6 * PI ** 2)))
    assert cf.check_small_gain(s.chain, cf.log_grid()).holds
    with pytest.raises(ValueError):
        ex.setup(3, A, B)


def test_default_omega_cap_and_c_sg_floor():
    assert ex.default_omega(0.5, 0.0) == 1.0
    assert ex.default_omega(0.5, 1.0) == 1.0
    assert ex.default_c_sg(1.0, 1.0) == ex.C_SG_EXISTENCE


# --- small-gain region --------------------------------------------------------

def test_closed_form_criterion_edges():
    assert ex.closed_form_criterion(A, B, 1.0)
    assert not ex.closed_form_criterion(A, 6 * PI ** 2, 1.0)
    assert ex.closed_form_criterion(A, 12 * PI ** 2, 2 * (1 - A))
    assert not ex.closed_form_criterion(A, B, 2 * (1 - A) + 1e-9)
    assert not ex.closed_form_criterion(A, 0.0, 1.0)


@pytest.mark.parametrize("example", [1, 2])
def test_small_gain_existence_matches_closed_form(example):
    for b_over in (3.0, 5.0, 7.0, 40.0):
        b = b_over * PI ** 2
        for omega in (0.5, 1.0, 1.8):
            expected = ex.closed_form_criterion(A, b, omega)
            assert ex.small_gain_exists(example, A, b, omega) == expected


def test_small_gain_fails_above_largest_constant():
    c_max = math.sqrt(B * 1.0 / (6 * PI ** 2))
    assert cf.check_small_gain(ex.gain_chain(1, A, B, 1.0, 0.98 * c_max), cf.log_grid()).holds
    assert not cf.check_small_gain(ex.gain_chain(1, A, B, 1.0, 1.02 * c_max), cf.log_grid()).holds


# --- composite functional -----------------------------------------------------

@pytest.mark.parametrize("example", [1, 2])
def test_composite_matches_closed_form(example):
    s = ex.setup(example, A, B, 1.0, 2.5)
    psi = cf.select_psi(2.5)
    assert psi == 0.0
    w = cf.build_lambda(s.cert1, s.cert2, psi)
    for v1, v2 in ((0.0, 0.0), (1e-4, 2e-3), (0.7, 0.3), (5.0, 2.0)):
        closed = ex.composite_closed_form(example, 1.0, v1, v2)
        assert cf.composite_V(w, v1, v2) == pytest.approx(closed, rel=1e-7, abs=1e-300)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 50))
def test_v_plus_expm1(v):
    got = ex._v_plus_expm1(v)
    if v >= 1e-3:
        assert got == v + math.expm1(-v)
    else:
        # expm1 cancels here; the leading Taylor terms do not.
        assert got == pytest.approx(0.5 * v * v * (1 - v / 3), rel=1e-6, abs=0)


def test_v_plus_expm1_continuous_at_switch():
    below = ex._v_plus_expm1(np.nextafter(1e-3, 0))
    assert below == pytest.approx(1e-3 + math.expm1(-1e-3), rel=1e-9)


# --- initial states -----------------------------------------------------------

def test_initial_state_families():
    x = ex.initial_state("sine_modes", 64, modes=[(1, 1.0)])
    np.testing.assert_allclose(x.values, np.sin(x.nodes), atol=1e-14)
    y = ex.initial_state("random_bandlimited", 64, np.random.default_rng(0), cutoff=3,
                         amplitude=0.5)
    assert np.max(np.abs(y.values)) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        ex.initial_state("random_bandlimited", 64, cutoff=3, amplitude=0.5)
    with pytest.raises(ValueError):
        ex.initial_state("gaussian", 64)


# --- config expressions -------------------------------------------------------

def test_parse_number():
    assert parse_number("40*pi^2") == pytest.approx(B)
    assert parse_number(3) == 3.0
    assert parse_number("-2/4 + sqrt(4)") == 1.5
    for bad in ("x + 1", "__import__('os')", "1 +", True, "[1]"):
        with pytest.raises(ValueError):
            parse_number(bad)


def test_field_function():
    f = field_function("a*x - b*x*x_l^2 + u", {"a": A, "b": B})
    x, xl, u = np.array([0.1, 0.5]), np.array([1.0, -2.0]), np.array([0.0, 1.0])
    np.testing.assert_allclose(f(x, xl, u), ex.x2_reaction(A, B)(x, xl, u))
    assert f(x, xl, u).shape == (2,)
    np.testing.assert_array_equal(field_function("0")(x, xl, u), [0.0, 0.0])
    with pytest.raises(ValueError):
        field_function("c*x")
    with pytest.raises(ValueError):
        field_function("x.real")
