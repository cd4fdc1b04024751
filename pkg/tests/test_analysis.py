import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from nirsbladder.analysis import (Session, Window, analyze_session, format_session,
                                  linear_fit, p_value_range, parse_session, polyfit,
                                  render_text, session_svgs, synthetic_session,
                                  t_test_two_tailed, window_mean)
from nirsbladder.analysis.stats import SampleSeries, betainc_reg, t_sf_two_tailed
from nirsbladder.errors import DegenerateInputError, DomainError, InputDataError
from nirsbladder.sensing import SampleFrame
from oracles import mp_polyfit


# -- window mean ----------------------------------------------------------

def test_window_mean_examples():
    s = SampleSeries([0, 1, 2, 3], [5.0, 5.0, 5.0, 5.0])
    assert window_mean(s, 0, 3) == 5.0
    s = SampleSeries([0, 1, 2], [1.0, 2.0, 3.0])
    assert window_mean(s, 0, 2) == 2.0


def test_window_mean_statistical_oracle():
    rng = np.random.default_rng(0)
    t = np.arange(60.0)
    v = 0.5 + rng.normal(0, 0.01, t.size)
    assert abs(window_mean(SampleSeries(t, v), 0, 59) - 0.5) < 3 * 0.01 / math.sqrt(60)


def test_window_mean_empty_window_names_bounds():
    with pytest.raises(DegenerateInputError, match=r"\[10, 20\]"):
        window_mean(SampleSeries([0, 1], [1.0, 2.0]), 10, 20)


# -- t-test ----------------------------------------------------------------

def test_t_test_worked_example():
    r = t_test_two_tailed([1, 2, 3], [4, 5, 6])
    assert r.t_statistic == pytest.approx(-3.674, abs=1e-3)
    assert r.degrees_of_freedom == 4
    assert r.p_value == pytest.approx(0.0213, abs=1e-4)


def test_t_test_identical_samples():
    r = t_test_two_tailed([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    assert r.t_statistic == 0.0 and r.p_value == 1.0
    r = t_test_two_tailed([2.0, 2.0], [2.0, 2.0])
    assert r.p_value == 1.0


def test_t_test_degenerate():
    with pytest.raises(DegenerateInputError):
        t_test_two_tailed([1.0], [1.0, 2.0])
    with pytest.raises(DegenerateInputError):
        t_test_two_tailed([1.0, 1.0], [2.0, 2.0])


samples = st.lists(st.floats(-100, 100), min_size=2, max_size=30)


@given(samples, samples)
def test_t_test_symmetry(a, b):
    try:
        r1 = t_test_two_tailed(a, b)
    except DegenerateInputError:
        return
    r2 = t_test_two_tailed(b, a)
    assert r2.t_statistic == -r1.t_statistic
    assert r2.p_value == r1.p_value


@given(st.lists(st.floats(-10, 10), min_size=3, max_size=20, unique=True),
       st.lists(st.floats(-10, 10), min_size=3, max_size=20, unique=True),
       st.sampled_from([0.5, 2.0, 4.0, 1024.0]))
def test_t_test_scale_invariance(a, b, k):
    r1 = t_test_two_tailed(a, b)
    r2 = t_test_two_tailed(np.array(a) * k, np.array(b) * k)
    assert r2.t_statistic == pytest.approx(r1.t_statistic, rel=1e-9, abs=1e-12)
    assert r2.p_value == pytest.approx(r1.p_value, rel=1e-9, abs=1e-300)


def test_t_test_against_scipy_random():
    rng = np.random.default_rng(42)
    for _ in range(100):
        a = rng.normal(rng.normal(), rng.uniform(0.1, 3), rng.integers(2, 80))
        b = rng.normal(rng.normal(), rng.uniform(0.1, 3), rng.integers(2, 80))
        r = t_test_two_tailed(a, b)
        ref = stats.ttest_ind(a, b, equal_var=True)
        assert r.t_statistic == pytest.approx(ref.statistic, rel=1e-6)
        assert r.p_value == pytest.approx(ref.pvalue, rel=1e-6, abs=1e-300)


@given(st.floats(0.1, 200), st.floats(0.1, 200), st.floats(0, 1))
def test_betainc_against_mpmath(a, b, x):
    ref = float(mpmath.betainc(a, b, 0, x, regularized=True))
    assert betainc_reg(a, b, x) == pytest.approx(ref, rel=1e-8, abs=1e-14)


def test_t_sf_limits():
    assert t_sf_two_tailed(0.0, 5) == 1.0
    assert t_sf_two_tailed(math.inf, 5) == 0.0
    with pytest.raises(DomainError):
        t_sf_two_tailed(1.0, 0)


# -- polyfit ------------------------------------------------------------

def test_polyfit_recovers_square():
    x = np.linspace(-3, 3, 21)
    f = polyfit(x, x ** 2, 2)
    assert f.coefficients == pytest.approx((0, 0, 1), abs=1e-9)
    assert f.rms_residual < 1e-9


def test_polyfit_constant():
    x = np.linspace(0, 60, 61)
    f = polyfit(x, np.full_like(x, 0.7), 5)
    assert f.coefficients[0] == pytest.approx(0.7)
    assert np.allclose(f.coefficients[1:], 0, atol=1e-9)


def test_polyfit_noisy_quintic_against_mpmath():
    rng = np.random.default_rng(3)
    x = np.sort(rng.uniform(-1, 1, 500))
    true = [0.3, -1.0, 0.5, 2.0, -0.7, 0.2]
    y = np.polynomial.polynomial.polyval(x, true) + rng.normal(0, 0.05, x.size)
    f = polyfit(x, y, 5)
    assert f.coefficients == pytest.approx(mp_polyfit(x, y, 5), rel=1e-6)


def test_polyfit_against_mpmath_random():
    rng = np.random.default_rng(7)
    for _ in range(100):
        n = int(rng.integers(8, 80))
        order = int(rng.integers(1, 6))
        x = np.sort(rng.uniform(0, rng.uniform(1, 60), n))
        y = rng.normal(0, 1, n)
        got = polyfit(x, y, order)
        ref = mp_polyfit(x, y, order)
        fitted = np.polynomial.polynomial.polyval(x, ref)
        assert got(x) == pytest.approx(fitted, rel=1e-6, abs=1e-6 * np.abs(y).max())


def test_polyfit_rank_deficient():
    with pytest.raises(DegenerateInputError, match="rank deficient"):
        polyfit([1, 1, 1, 2, 2, 2], [0, 1, 2, 3, 4, 5], 5)


@given(st.lists(st.floats(-5, 5), min_size=8, max_size=30, unique=True))
def test_polyfit_residual_non_increasing_in_order(xs):
    x = np.array(sorted(xs))
    if np.min(np.diff(x)) < 1e-3:
        return
    y = np.sin(3 * x)
    res = [polyfit(x, y, k).rms_residual for k in range(0, 6)]
    for a, b in zip(res, res[1:]):
        assert b <= a * (1 + 1e-9) + 1e-12


@given(st.integers(0, 5), st.lists(st.floats(-2, 2), min_size=6, max_size=6))
def test_polyfit_exact_on_polynomials(deg, coeffs):
    x = np.linspace(-2, 3, 25)
    c = coeffs[:deg + 1]
    y = np.polynomial.polynomial.polyval(x, c)
    f = polyfit(x, y, 5)
    assert f.rms_residual < 1e-9


def test_linear_fit():
    r = linear_fit([1, 2, 3, 4], [2.0, 4.1, 5.9, 8.0])
    ref = stats.linregress([1, 2, 3, 4], [2.0, 4.1, 5.9, 8.0])
    assert r.slope == pytest.approx(ref.slope)
    assert r.p_value == pytest.approx(ref.pvalue, rel=1e-8)


# -- session files -------------------------------------------------------

def test_session_round_trip():
    s = synthetic_session(seconds=5)
    text = format_session(s)
    again = parse_session(text)
    assert format_session(again) == text
    assert again.frames == s.frames
    assert again.windows == s.windows


@given(st.integers(0, 4194303), st.integers(0, 4194303),
       st.floats(0, 1e6, allow_nan=False))
def test_session_round_trip_property(on, amb, t):
    s = Session([SampleFrame.from_codes(3, t, on, amb)])
    again = parse_session(format_session(s))
    assert again.frames[0].adc_code_on == on and again.frames[0].adc_code_ambient == amb
    assert format_session(again) == format_session(s)


HEADER = "t_s,optode_id,adc_code_on,adc_code_ambient,v_on,v_ambient,v_cancelled\n"


@pytest.mark.parametrize("body, line, msg", [
    ("0,1,10,5,1,1,0\n0,9,10,5,1,1,0\n", 3, "unknown optode id 9"),
    ("0,1,abc,5,1,1,0\n", 2, "line 2"),
    ("0,1,10\n", 2, "expected 7 fields"),
    ("0,1,99999999,5,1,1,0\n", 2, "ADC code"),
])
def test_session_errors_carry_line(body, line, msg):
    with pytest.raises(InputDataError, match=f"line {line}") as exc:
        parse_session(HEADER + body)
    assert msg in str(exc.value)


def test_session_header_required():
    with pytest.raises(InputDataError, match="header"):
        parse_session("0,1,2,3,4,5,6\n")


def test_session_metadata_and_windows():
    s = parse_session("# sample_rate_hz: 1\n# window: standing full 0 59\n" + HEADER)
    assert s.metadata == {"sample_rate_hz": "1"}
    assert s.windows == [Window("standing", "full", 0.0, 59.0)]


# -- report --------------------------------------------------------------

def test_positive_session_rejects_everywhere():
    rep = analyze_session(synthetic_session(gap_sigma=10.0))
    assert p_value_range(rep)["max_p"] < 0.01
    assert p_value_range(rep)["n"] == 24


def test_null_session_does_not_reject():
    rep = analyze_session(synthetic_session(gap_sigma=0.0, shared_noise=True))
    assert p_value_range(rep)["min_p"] > 0.5


def test_report_states_effective_rate():
    rep = analyze_session(synthetic_session(rate_hz=1.0))
    assert rep["effective_rate_hz"] == pytest.approx(1.0)
    assert rep["stated_rate_hz"] == 1.0
    txt = render_text(rep)
    assert "effective sampling rate: 1 Hz" in txt
    assert "PD8" in txt


def test_svgs_per_optode():
    s = synthetic_session(seconds=10)
    svgs = session_svgs(s, analyze_session(s))
    assert sorted(svgs) == [f"optode_{i}.svg" for i in range(1, 9)]
    assert all(v.startswith("<svg") for v in svgs.values())
