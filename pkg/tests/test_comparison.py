import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parabolic_iss import comparison as cf
from parabolic_iss import examples as ex
from parabolic_iss.comparison import ComparisonClassError, ComparisonFn, GainChain
from parabolic_iss.errors import NumericError

PI = math.pi


# --- classes and named forms ----------------------------------------------

def test_tags_validated_on_samples():
    with pytest.raises(ComparisonClassError):
        ComparisonFn(lambda s: -np.asarray(s), cf.K, math.inf, "neg")
    with pytest.raises(ComparisonClassError):
        ComparisonFn(lambda s: np.asarray(s) + 1.0, cf.PD, math.inf, "shifted")
    with pytest.raises(ComparisonClassError):
        ComparisonFn(lambda s: np.asarray(s) / (1 + np.asarray(s)), cf.KINF, 1.0, "bounded")
    with pytest.raises(ComparisonClassError):
        ComparisonFn(lambda s: 2 * np.asarray(s) / (1 + np.asarray(s)), cf.K, 1.0, "over")
    with pytest.raises(ComparisonClassError):
        ComparisonFn(lambda s: np.asarray(s), "KL", math.inf)


def test_pd_need_not_be_monotone():
    f = ComparisonFn(lambda s: np.asarray(s) / (1 + np.asarray(s) ** 2), cf.PD, 0.0, "bump")
    assert f(1.0) == pytest.approx(0.5)


def test_named_forms_values():
    assert cf.rational_sq(2.0)(1.0) == pytest.approx(1.0)
    assert cf.rational_sq(2.0).sup_limit == 2.0
    assert cf.power(4, 8)(0.5) == pytest.approx(0.5)
    assert cf.log_sq()(1.0) == pytest.approx(math.log(2))
    assert cf.poly2_4(1.0, 2.0)(2.0) == pytest.approx(4 + 32)
    assert cf.zero()(5.0) == 0.0
    assert cf.linear(3)(2.0) == 6.0


def test_call_maps_inf_to_limit():
    assert cf.rational_sq(3.0)(math.inf) == 3.0
    assert cf.power(2)(math.inf) == math.inf


def test_from_config_forms():
    f = cf.from_config({"form": "poly2_4", "c2": 1, "c4": 2})
    assert f(1.0) == pytest.approx(3.0)
    assert cf.from_config({"form": "zero"}).tag == cf.ZERO
    with pytest.raises(ValueError):
        cf.from_config({"form": "cubic"})
    with pytest.raises(ValueError):
        cf.from_config({"form": "linear", "slope": 2})


def test_invalid_form_parameters():
    for bad in (lambda: cf.power(0), lambda: cf.linear(-1), lambda: cf.poly2_4(0, 0),
                lambda: cf.rational_sq(0), lambda: cf.poly2_4(-1, 1)):
        with pytest.raises(ComparisonClassError):
            bad()


def test_scaled():
    f = cf.rational_sq(1.0).scaled(3.0)
    assert f.sup_limit == 3.0
    assert f(1.0) == pytest.approx(1.5)
    with pytest.raises(ValueError):
        f.scaled(0.0)


# --- extended inverse -------------------------------------------------------

def test_extended_inverse_examples():
    assert cf.extended_inverse(cf.linear(2), 3.0) == pytest.approx(1.5, rel=1e-10)
    sat = ComparisonFn(lambda s: np.asarray(s) / (1 + np.asarray(s)), cf.K, 1.0, "s/(1+s)")
    assert cf.extended_inverse(sat, 1.0) == math.inf
    assert cf.extended_inverse(sat, 2.0) == math.inf
    assert cf.extended_inverse(cf.power(2), 4.0) == pytest.approx(2.0, rel=1e-10)
    assert cf.extended_inverse(cf.power(2), 0.0) == 0.0


def test_extended_inverse_vectorised_shape():
    out = cf.extended_inverse(cf.power(2), np.array([[1.0, 4.0], [9.0, 16.0]]))
    np.testing.assert_allclose(out, [[1, 2], [3, 4]], rtol=1e-9)


def test_extended_inverse_rejects_non_k():
    pd = ComparisonFn(lambda s: np.asarray(s) / (1 + np.asarray(s) ** 2), cf.PD, 0.0)
    with pytest.raises(ComparisonClassError):
        cf.extended_inverse(pd, 0.1)
    with pytest.raises(ComparisonClassError):
        cf.extended_inverse(cf.zero(), 0.1)


def test_extended_inverse_float_range_edge():
    # ln(1 + v^2) = 1e6 needs v = e^{5e5}: not a float.
    assert cf.extended_inverse(cf.log_sq(), 1e6) == math.inf


def test_extended_inverse_beyond_float_range_is_inf():
    slow = ComparisonFn(lambda s: np.log1p(np.log1p(np.asarray(s))), cf.KINF, math.inf, "loglog")
    assert cf.extended_inverse(slow, 100.0) == math.inf
    assert cf.extended_inverse(slow, 1.0) == pytest.approx(math.expm1(math.e - 1), rel=1e-9)


def test_extended_inverse_tiny_targets():
    v = cf.extended_inverse(cf.power(2, 3.0), np.array([3e-200, 3e-20, 3e-310]))
    np.testing.assert_allclose(v[:2], [1e-100, 1e-10], rtol=1e-9)
    assert 0 < v[2] < 1e-150


def test_log_form_large_arguments_finite():
    assert cf.log_sq()(1e200) == pytest.approx(400 * math.log(10), rel=1e-12)
    assert cf.extended_inverse(cf.log_sq(), 710.0) == pytest.approx(math.exp(355.0), rel=1e-9)


def test_bisection_budget_exhaustion_raises(monkeypatch):
    monkeypatch.setattr(cf, "MAX_BISECTIONS", 3)
    with pytest.raises(NumericError):
        cf.extended_inverse(cf.power(2), 2.0)


def test_extended_inverse_near_float_max():
    v = cf.extended_inverse(cf.log_sq(), 1419.0)
    assert math.isfinite(v) and cf.log_sq()(v) == pytest.approx(1419.0, rel=1e-12)


_FORMS = st.sampled_from([
    cf.power(2.0, 3.0), cf.power(0.5), cf.rational_sq(2.0), cf.log_sq(),
    cf.poly2_4(1.0, 0.5), cf.linear(0.1),
])


@settings(max_examples=200, deadline=None)
@given(_FORMS, st.floats(1e-6, 1e6))
def test_inverse_roundtrip(f, s):
    if s >= f.sup_limit:
        assert cf.extended_inverse(f, s) == math.inf
        return
    v = cf.extended_inverse(f, s)
    if v == math.inf:
        # Only allowed when the preimage is not a float.
        assert f(np.finfo(float).max) < s
        return
    assert abs(f(v) - s) <= 1e-8 * max(1.0, s)


@settings(max_examples=100, deadline=None)
@given(_FORMS, st.floats(0, 1e5), st.floats(0, 1e5))
def test_inverse_monotone(f, s1, s2):
    lo, hi = sorted((s1, s2))
    assert cf.extended_inverse(f, lo) <= cf.extended_inverse(f, hi)


def test_inverse_fn_wraps_kinf_only():
    g = cf.inverse_fn(cf.power(3))
    assert g(8.0) == pytest.approx(2.0, rel=1e-9)
    with pytest.raises(ComparisonClassError):
        cf.inverse_fn(cf.rational_sq())


# --- small gain -------------------------------------------------------------

def _ex1_chain(a, b, omega, c):
    return ex.gain_chain(1, a, b, omega, c)


def test_small_gain_nominal_example1_holds():
    rep = cf.check_small_gain(_ex1_chain(0.05, 40 * PI ** 2, 1.0, 2.5), cf.log_grid())
    assert rep.holds
    assert rep.worst_ratio < 1.0


@pytest.mark.parametrize("c", [1.000001, 1.5, 2.5, 10.0])
def test_small_gain_boundary_b_fails(c):
    rep = cf.check_small_gain(_ex1_chain(0.05, 6 * PI ** 2, 1.0, c), cf.log_grid())
    assert not rep.holds


def test_small_gain_identity_dominated():
    ident = cf.identity()
    q = cf.linear(0.25)
    chain = GainChain.from_gains(ident, q, ident, ident, ident, q, ident, ident, 2.0)
    rep = cf.check_small_gain(chain, cf.log_grid())
    assert rep.holds
    assert rep.worst_ratio == pytest.approx(0.25, rel=1e-8)


def test_small_gain_saturating_inverse_is_violation():
    # alpha bounded by 1 while c*sigma reaches 2: inverse saturates to inf.
    ident = cf.identity()
    chain = GainChain.from_gains(cf.rational_sq(1.0), cf.linear(1.0), ident, ident,
                                 ident, cf.linear(1e-3), ident, ident, 2.0)
    rep = cf.check_small_gain(chain, cf.log_grid())
    assert not rep.holds
    assert rep.worst_ratio == math.inf


def test_small_gain_grid_validation():
    chain = _ex1_chain(0.05, 40 * PI ** 2, 1.0, 2.5)
    with pytest.raises(ValueError):
        cf.check_small_gain(chain, [])
    with pytest.raises(ValueError):
        cf.check_small_gain(chain, [1.0, 0.5])
    with pytest.raises(ValueError):
        cf.check_small_gain(chain, [0.0, 1.0])


def test_chain_requires_c_above_one():
    with pytest.raises(ValueError):
        _ex1_chain(0.05, 40 * PI ** 2, 1.0, 1.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
def test_chain_monotone(s1, s2):
    chain = _ex1_chain(0.05, 40 * PI ** 2, 1.0, 2.5)
    lo, hi = sorted((s1, s2))
    assert chain(lo) <= chain(hi) * (1 + 1e-9)


def test_chain_describe_lists_stages_outermost_first():
    d = _ex1_chain(0.05, 40 * PI ** 2, 1.0, 2.5).describe()
    assert d.startswith("inv(ln(1+s^2))")
    assert d.count("2.5*") == 2


def test_full_quartic_alpha_chain_also_holds():
    # With the complete alpha2 (quadratic plus quartic part) the verdict is unchanged.
    c1 = ex.x1_certificate(1)
    c2 = ex.x2_certificate(0.05, 40 * PI ** 2, 1.0)
    chain = GainChain.from_certificates(c1, c2, 2.5)
    assert cf.check_small_gain(chain, cf.log_grid()).holds


# --- psi selection ----------------------------------------------------------

def test_select_psi_above_two_is_zero():
    assert cf.select_psi(2.5) == 0.0
    assert cf.select_psi(2.0000001) == 0.0


def test_select_psi_at_two_exceeds_one():
    psi = cf.select_psi(2.0)
    assert psi > 1.0
    assert cf.psi_feasible(psi, 2.0)
    assert not cf.psi_feasible(1.0, 2.0)


@settings(max_examples=60, deadline=None)
@given(st.floats(1.01, 2.0))
def test_select_psi_feasible(c):
    psi = cf.select_psi(c)
    assert psi ** (-psi / (psi + 1)) < c / (psi + 1) <= 1.0


def test_select_psi_small_c():
    psi = cf.select_psi(1.1)
    assert psi > 1.0 and cf.psi_feasible(psi, 1.1)


def test_select_psi_domain():
    with pytest.raises(ValueError):
        cf.select_psi(1.0)


# --- lambda weights and composite function ----------------------------------

@pytest.fixture(scope="module")
def ex1_weights():
    return cf.build_lambda(ex.x1_certificate(1), ex.x2_certificate(0.05, 40 * PI ** 2, 1.0), 0.0)


def test_lambda_example1_closed_forms(ex1_weights):
    s = np.array([1e-3, 0.1, 1.0, 5.0, 30.0])
    np.testing.assert_allclose(ex1_weights.lambda_1(s), PI * (1 - np.exp(-s)), rtol=1e-8)
    np.testing.assert_allclose(ex1_weights.lambda_2(s), 8 * s ** 2, rtol=1e-8)


def test_lambda_identity_case():
    from parabolic_iss.certify import DissipationCertificate, LyapunovFunctional

    V = LyapunovFunctional.power_sobolev(1, PI)
    ident = cf.identity()
    c1 = DissipationCertificate(V, ident, ident, V.state_norm, V.state_norm, psi1=ident, psi2=ident)
    c2 = DissipationCertificate(V, ident, ident, V.state_norm, V.state_norm, psi1=ident, psi2=ident)
    w = cf.build_lambda(c1, c2, 0.0)
    s = np.array([0.5, 2.0, 7.0])
    np.testing.assert_allclose(w.lambda_1(s), s, rtol=1e-9)
    assert cf.composite_V(w, 2.0, 3.0) == pytest.approx(6.5, rel=1e-8)


def test_lambda_with_positive_psi_is_increasing():
    w = cf.build_lambda(ex.x1_certificate(1), ex.x2_certificate(0.05, 40 * PI ** 2, 1.0), 1.5)
    s = np.geomspace(1e-3, 10.0, 50)
    assert np.all(np.diff(w.lambda_1(s)) > 0)
    assert np.all(np.diff(w.lambda_2(s)) > 0)
    assert w.psi_exponent == 1.5


def test_build_lambda_negative_psi():
    with pytest.raises(ValueError):
        cf.build_lambda(ex.x1_certificate(1), ex.x2_certificate(0.05, 40 * PI ** 2, 1.0), -1.0)


def test_composite_example_values(ex1_weights):
    # Antiderivatives: pi (v + e^{-v} - 1) and (8/3) v^3.
    expected = PI * math.exp(-1) + 8 / 3
    assert cf.composite_V(ex1_weights, 1.0, 1.0) == pytest.approx(expected, rel=1e-8)
    assert cf.composite_V(ex1_weights, 1.0, 1.0) == pytest.approx(3.82247, abs=1e-4)
    assert cf.composite_V(ex1_weights, 0.0, 0.0) == 0.0
    with pytest.raises(ValueError):
        cf.composite_V(ex1_weights, -1.0, 0.0)


def test_composite_series_matches_scalar(ex1_weights):
    rng = np.random.default_rng(3)
    v1, v2 = rng.uniform(0, 3, 20), rng.uniform(0, 3, 20)
    series = cf.composite_V_series(ex1_weights, v1, v2)
    single = [cf.composite_V(ex1_weights, a, b) for a, b in zip(v1, v2)]
    np.testing.assert_allclose(series, single, rtol=1e-8)


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 5), st.floats(0, 5), st.floats(1e-3, 1.0))
def test_composite_strictly_increasing(v1, v2, dv):
    w = cf.build_lambda(ex.x1_certificate(1), ex.x2_certificate(0.05, 40 * PI ** 2, 1.0), 0.0)
    base = cf.composite_V(w, v1, v2)
    assert cf.composite_V(w, v1 + dv, v2) > base
    assert cf.composite_V(w, v1, v2 + dv) > base


# --- alpsig -----------------------------------------------------------------

def test_alpsig_example1_holds():
    assert cf.check_alpsig(ex.x1_certificate(1), ex.x2_certificate(0.05, 40 * PI ** 2, 1.0))


def test_alpsig_disjuncts():
    from parabolic_iss.certify import DissipationCertificate, LyapunovFunctional

    V = LyapunovFunctional.power_sobolev(1, PI)
    n = V.state_norm

    def cert(alpha, sigma, kappa=None):
        return DissipationCertificate(V, alpha, sigma, n, n, kappa=kappa or cf.zero(),
                                      external_norm=n if kappa else None)

    bounded = cf.rational_sq(1.0)
    # alpha_1 Kinf: first disjunct.
    assert cf.check_alpsig(cert(cf.identity(), cf.power(2)), cert(cf.identity(), cf.power(4)))
    # alpha_1 bounded, sigma_2 unbounded, kappa_1 = identity: both disjuncts false.
    assert not cf.check_alpsig(cert(bounded, cf.power(2), cf.identity()),
                               cert(cf.identity(), cf.power(4)))
    # alpha_1 bounded, sigma_2 bounded, kappa_1 = identity: second disjunct.
    assert cf.check_alpsig(cert(bounded, cf.power(2), cf.identity()),
                           cert(cf.identity(), bounded))


def test_log_grid_default():
    g = cf.log_grid()
    assert g.size == 64 and g[0] == pytest.approx(1e-4) and g[-1] == pytest.approx(1e4)
