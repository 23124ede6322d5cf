import json
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from scipy import stats as sps

from pssmp import envelope, expfun
from pssmp.envelope import (EmpiricalTail, LogRegular, OutOfGrid, RegularVariation,
                            TestFunction)
from pssmp.lamperti import PssMpPath

from catalogue import CATALOGUE, analytic_verdict


# -- test functions and tails ------------------------------------------------------

def test_test_function_evaluation():
    f = TestFunction(2.0, 1.0, -0.5, 1.0, "zero")
    t = 1e-20
    u = -math.log(t)
    assert float(f(t)) == pytest.approx(2 * t * u ** -0.5 * math.log(u), rel=1e-12)


def test_test_function_validation():
    with pytest.raises(ValueError):
        TestFunction(0.0, 1.0)
    with pytest.raises(ValueError):
        TestFunction(1.0, 1.0, side="middle")


def test_side_condition_and_monotone_flags():
    assert TestFunction(1, 1, -0.6).side_condition() == "ratio_to_zero"
    assert TestFunction(1, 1, 0.6).side_condition() == "ratio_liminf_positive"
    assert TestFunction(1, 0.5, side="infinity").side_condition() == "ratio_to_zero"
    assert TestFunction(1, 1, -0.6).is_increasing()
    assert not TestFunction(1, -1.0).is_increasing()
    # at 0, f/t = |log t|^-0.6 grows as t increases
    assert TestFunction(1, 1, -0.6).ratio_monotone() == "increasing"
    assert TestFunction(1, 1, -0.6, side="infinity").ratio_monotone() == "decreasing"


def test_squared_test_function():
    f = TestFunction(1.5, 0.5, -1.0, 0.3)
    t = 1e-30
    assert float(f.squared()(t)) == pytest.approx(float(f(t)) ** 2, rel=1e-12)


def test_regular_variation_tail():
    r = RegularVariation(2.0)
    np.testing.assert_allclose(r.sf([0.5, 1.0, 4.0]), [1.0, 1.0, 1 / 16])
    with pytest.raises(ValueError):
        RegularVariation(0.0)


def test_inverse_gamma_tail_matches_scipy():
    tail = envelope.inverse_gamma_tail(2.0)
    s = np.array([0.01, 0.3, 1.0, 7.0, 1e4])
    np.testing.assert_allclose(tail.sf(s), sps.invgamma(2.0, scale=0.5).sf(s), rtol=1e-10)


def test_empirical_tail_grid_limits():
    est = expfun.estimate_tail(np.random.default_rng(0).pareto(2.0, 100_000) + 1,
                               np.geomspace(1.1, 10, 40))
    bare = EmpiricalTail(est)
    with pytest.raises(OutOfGrid):
        bare.log_sf(math.log(100))
    with pytest.raises(OutOfGrid):
        bare.log_sf(math.log(1.0))
    winged = envelope.with_wing(est)
    assert 1.7 < winged.wing.gamma < 2.3
    assert 1e-4 / 3 < float(winged.sf(100.0)[0]) < 3e-4
    inside = est.survival[np.searchsorted(est.thresholds, 5.0, "right") - 1]
    assert float(winged.sf(5.0)[0]) == pytest.approx(inside, rel=1e-12)


def test_wing_fit_recovers_pareto_exponent():
    thr = np.geomspace(1, 100, 60)
    exact = expfun.TailEstimate.exact(thr, thr ** -1.5)
    model, r2 = envelope.fit_wing(exact)
    assert model.gamma == pytest.approx(1.5, rel=1e-10) and r2 == pytest.approx(1.0)
    lr = expfun.TailEstimate.exact(thr, np.exp(-0.3 * thr ** 0.5))
    model, r2 = envelope.fit_wing(lr, "logregular")
    assert model.beta == pytest.approx(0.5, rel=1e-8) and model.lam == pytest.approx(0.3)


def test_wing_gate_rejects_bad_fit():
    thr = np.geomspace(1, 100, 60)
    sv = thr ** -1.0
    sv[-6:] *= [1.0, 0.5, 0.49, 0.48, 0.2, 0.19]
    with pytest.raises(ValueError, match="R\\^2"):
        envelope.with_wing(expfun.TailEstimate.exact(thr, sv))
    rising = expfun.TailEstimate.exact(thr, np.linspace(0.1, 0.5, 60))
    with pytest.raises(ValueError, match="not decreasing"):
        envelope.fit_wing(rising)


# -- integrand ---------------------------------------------------------------------------

@pytest.mark.parametrize("c", [0.3, 0.6, 1.0])
def test_integrand_power_tail(c):
    f = TestFunction(1.0, 1.0, -c)
    for t in (1e-3, 1e-10, 1e-100):
        u = -math.log(t)
        assert envelope.integrand_at(RegularVariation(2.0), f, t) == pytest.approx(
            u ** (-2 * c) / t, rel=1e-12)


def test_integrand_trivial_cases():
    f = TestFunction(1.0, 1.0)
    tail = RegularVariation(3.0, lam=0.25)
    assert envelope.integrand_at(tail, f, 1e-5) == pytest.approx(0.25 / 1e-5)
    # F = 1 near the origin of its argument: f(t) = sqrt(t) makes t/f(t) -> 0
    assert envelope.integrand_at(tail, TestFunction(1.0, 0.5), 1e-12) == pytest.approx(1e12)


# -- classifier ----------------------------------------------------------------------------

@pytest.mark.parametrize("tail,f,expected", CATALOGUE,
                         ids=[f"g{t.gamma}-{f.side}-a{f.a}-b{f.b}-d{f.d}" for t, f, _ in CATALOGUE])
def test_catalogue(tail, f, expected):
    classify = envelope.classify_at_zero if f.side == "zero" else envelope.classify_at_infinity
    assert classify(tail, f).outcome == expected


def test_worked_examples():
    tail = RegularVariation(2.0)
    assert envelope.classify_at_zero(tail, TestFunction(1, 1, -0.6)).outcome == "converges"
    assert envelope.classify_at_zero(tail, TestFunction(1, 1, -0.4)).outcome == "diverges"
    assert envelope.classify_at_zero(tail, TestFunction(1, 1, -0.5)).outcome == "diverges"
    g = TestFunction(1, 0.5, side="infinity")
    assert envelope.classify_at_infinity(tail, g).outcome == "converges"


def test_wrong_side_rejected():
    with pytest.raises(ValueError):
        envelope.classify_at_zero(RegularVariation(1.0), TestFunction(1, 1, side="infinity"))
    with pytest.raises(ValueError):
        envelope.classify_at_infinity(RegularVariation(1.0), TestFunction(1, 1))


def test_near_boundary_is_never_wrong():
    for gd in (-1.01, -1.05, -0.99):
        f = TestFunction(1.0, 1.0, -1.0, gd)
        v = envelope.classify_at_zero(RegularVariation(1.0), f).outcome
        assert v in (analytic_verdict(1.0, f), "inconclusive")


def test_log_regular_tail_converges():
    # exp(-u^...) tails are integrable against any log-power f that keeps t/f(t) -> inf
    v = envelope.classify_at_zero(LogRegular(1.0, 1.0), TestFunction(1, 1, -0.1))
    assert v.outcome == "converges"


def test_verdict_json_and_diagnostics():
    v = envelope.classify_at_zero(RegularVariation(2.0), TestFunction(1, 1, -0.5))
    doc = json.loads(v.to_json())
    assert doc["outcome"] == "diverges"
    assert doc["slope_diagnostics"] and doc["side_condition"] == "ratio_to_zero"
    assert doc["f_increasing"] is True


@settings(max_examples=60, deadline=None)
@given(st.sampled_from([0.5, 1.0, 2.0]), st.floats(-4, 0), st.floats(0.0, 2.0),
       st.sampled_from(["zero", "infinity"]))
def test_verdicts_monotone_in_f(gamma, b, gap, side):
    tail = RegularVariation(gamma)
    f2 = TestFunction(1.0, 1.0, b, 0.0, side)
    f1 = TestFunction(1.0, 1.0, b - gap, 0.0, side)  # f1 <= f2 on the window
    v2 = envelope.classify(tail, f2).outcome
    v1 = envelope.classify(tail, f1).outcome
    if v2 == "converges":
        assert v1 in ("converges", "inconclusive")
    if v1 == "diverges":
        assert v2 in ("diverges", "inconclusive")


@settings(max_examples=60, deadline=None)
@given(st.sampled_from([0.5, 1.0, 2.0]), st.floats(-4, 0), st.floats(-3, 3),
       st.sampled_from(["zero", "infinity"]))
def test_classifier_agrees_with_analytic_away_from_boundary(gamma, b, d, side):
    assume(abs(gamma * b + 1) > 0.1)
    f = TestFunction(1.0, 1.0, b, d, side)
    assert envelope.classify(RegularVariation(gamma), f).outcome == analytic_verdict(gamma, f)


# -- Bessel DE cross-check ----------------------------------------------------------------------

DE_FIXTURES = [
    (6.0, TestFunction(1.0, 0.5, -1.0)),
    (6.0, TestFunction(1.0, 0.5, -0.3, 0.5)),
    (4.0, TestFunction(2.0, 0.5, -2.0)),
    (3.0, TestFunction(1.0, 0.5, -1.5, -1.0)),
    (10.0, TestFunction(0.5, 0.5, -0.7)),
]


@pytest.mark.parametrize("delta,f", DE_FIXTURES)
def test_de_integrand_matches_change_of_variables(delta, f):
    tail = RegularVariation((delta - 2) / 2)
    for t in (1e-5, 1e-20, 1e-80):
        de = envelope.bessel_de_integrand(delta, f, t)
        direct = envelope.integrand_at(tail, f.squared(), t)
        assert de == pytest.approx(direct, rel=1e-10)


def test_de_integrand_limits():
    f = TestFunction(1.0, 0.5, -1.0)
    t = 1e-8
    assert envelope.bessel_de_integrand(2.0 + 1e-12, f, t) == pytest.approx(1 / t, rel=1e-9)
    # the Bessel scale f(t) = sqrt(t) puts the integrand at exactly 1/t
    assert envelope.bessel_de_integrand(4.0, TestFunction(1.0, 0.5), t) == pytest.approx(1 / t)
    with pytest.raises(ValueError):
        envelope.bessel_de_integrand(2.0, f, t)


# -- psi and the log-regular LIL ----------------------------------------------------------------

def test_psi_quadratic_tail():
    tail = LogRegular(0.5, 2.0)
    log_t = math.e ** 2
    assert envelope.log_psi(tail, log_t) == pytest.approx(log_t - math.log(2.0), rel=1e-14)


def test_psi_exponential_tail():
    tail = LogRegular(1.0, 1.0)
    for log_t in (10.0, -50.0, 1e3):
        expect = log_t - math.log(math.log(abs(log_t)))
        assert envelope.log_psi(tail, log_t) == pytest.approx(expect, rel=1e-13)


def test_psi_root_matches_closed_form():
    closed = LogRegular(0.7, 1.5)
    generic = envelope.ExactTail(closed.log_sf)
    for log_t in (5.0, -40.0, 1e4):
        assert envelope.log_psi(generic, log_t) == pytest.approx(
            envelope.log_psi(closed, log_t), abs=1e-10)


def test_psi_ratio_decreasing_at_infinity():
    tail = envelope.inverse_gamma_tail(2.0)
    logs = np.linspace(2, 200, 50)
    r = [envelope.log_psi(tail, lt) - lt for lt in logs]
    assert np.all(np.diff(r) < 0)


@settings(max_examples=60, deadline=None)
@given(st.floats(1.5, 1e6), st.booleans(), st.sampled_from([0.5, 1.0, 3.0]))
def test_psi_definitional_inequality(mag, at_zero, shape):
    tail = envelope.inverse_gamma_tail(shape)
    log_t = -mag if at_zero else mag
    s_log = log_t - envelope.log_psi(tail, log_t)
    level = -math.log(mag)
    assert float(tail.log_sf(s_log)) <= level + 1e-9
    assert float(tail.log_sf(s_log + math.log(1 - 1e-6))) > level


def test_psi_domain():
    with pytest.raises(ValueError):
        envelope.log_psi(LogRegular(1.0, 1.0), 0.5)
    with pytest.raises(ValueError):
        envelope.psi(LogRegular(1.0, 1.0), -1.0)


def test_rivero_scaling_examples():
    t = math.exp(math.e ** 2)
    assert envelope.rivero_scaling(lambda lam: lam, t) == pytest.approx(t, rel=1e-12)
    assert envelope.rivero_scaling(lambda lam: lam ** 0.5, t) == pytest.approx(
        t * math.sqrt(2) / 2, rel=1e-12)
    with pytest.raises(ValueError):
        envelope.rivero_scaling(lambda lam: lam, 1.5)


@pytest.mark.parametrize("beta", [1 / 3, 0.5, 2 / 3, 0.1, 0.9])
def test_psi_over_rivero_is_lil_constant(beta):
    log_t = math.exp(10.0)
    tail = envelope.log_regular_from_power(beta)
    r = math.exp(envelope.log_psi(tail, log_t)
                 - envelope.log_rivero_scaling(lambda lam: lam ** beta, log_t))
    assert r == pytest.approx(envelope.lil_constant(beta), rel=1e-10)


def test_lil_constant_examples():
    assert envelope.lil_constant(0.5, 1.0) == pytest.approx(0.70711, abs=1e-5)
    assert envelope.lil_constant(1e-12, 1.0) == pytest.approx(1.0, abs=1e-10)
    assert envelope.lil_constant(0.5, 2.0) == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(ValueError):
        envelope.lil_constant(1.0)


@given(st.floats(0.001, 0.999))
def test_lil_constant_alpha_one(beta):
    assert envelope.lil_constant(beta) == (1 - beta) ** (1 - beta)


# -- empirical liminf ------------------------------------------------------------------------------

def _random_paths(n=5):
    rng = np.random.default_rng(0)
    out = []
    for _ in range(n):
        t = np.concatenate([[0.0], np.geomspace(1e-8, 1.0, 400)])
        out.append(PssMpPath(t, np.exp(rng.normal(size=t.size)), 0.0))
    return out


def test_liminf_self_ratio():
    paths = _random_paths()
    s = envelope.empirical_liminf(paths, [p.value_at for p in paths], "zero", 1.1, (1e-6, 1e-1))
    np.testing.assert_allclose(s.minima, 1.0)


def test_liminf_double_scale():
    paths = _random_paths()
    scales = [lambda t, p=p: 2 * p.value_at(t) for p in paths]
    s = envelope.empirical_liminf(paths, scales, "zero", 1.1, (1e-6, 1e-1))
    np.testing.assert_allclose(s.minima, 0.5)
    assert s.median == 0.5 and set(s.quantiles) == {"0.1", "0.25", "0.5", "0.75", "0.9"}


def test_liminf_empty_window():
    p = PssMpPath([0.0, 1.0], [1.0, 1.0], 1.0)
    with pytest.raises(ValueError):
        envelope.empirical_liminf([p], lambda t: t, "zero", 1.1, (10.0, 100.0))


def test_geometric_grid():
    g = envelope.geometric_grid(1.0, 100.0, 10.0)
    np.testing.assert_allclose(g, [1, 10, 100])
