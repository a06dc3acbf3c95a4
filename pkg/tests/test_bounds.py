import json
import math
from pathlib import Path

import jsonschema
import numpy as np
import pytest
from hypothesis import given, strategies as st

from coboson.bounds import (
    CHAIN_NAMES,
    BoundsReport,
    bounds_report,
    chi_lower_P,
    chi_lower_lambda1,
    chi_max_exact,
    chi_max_finite,
    chi_max_smooth,
    chi_max_tricomi,
    chi_min_exact,
    chi_min_smooth,
    chi_upper_P,
    chi_upper_lambda1,
    log_chi_max_exact,
    log_chi_min_exact,
    log_chi_min_smooth,
    weakness_holds,
)
from coboson.chi import chi_series_esp
from coboson.errors import InfeasiblePair, NotApplicable, OutOfRange
from coboson.extremal import expand, max_threshold, maximizing_distribution, minimizing_distribution
from coboson.schmidt import lambda1_min, make_distribution, p_max, p_min, random_distribution_constrained

from conftest import exact_chi

SCHEMAS = Path(__file__).resolve().parents[1] / "docs" / "schemas"
WORKED_CHAIN = (0.324, 0.48, 0.489759, 0.513657, 0.578886, 0.784)


@st.composite
def feasible_pairs(draw, lo=0.005, hi=0.95):
    P = draw(st.floats(lo, hi))
    t = draw(st.floats(0.0, 1.0))
    return P, lambda1_min(P) + t * (math.sqrt(P) - lambda1_min(P))


def test_worked_chain():
    rep = bounds_report(0.2, 0.3, 3)
    assert rep.chain == pytest.approx(WORKED_CHAIN, abs=1e-5)


def test_worked_chain_against_power_sum_oracles():
    # chi_3 = 1 - 3P + 2 M(3) for each extremal spectrum, M(3) summed by hand
    P = 0.2
    mn = minimizing_distribution(0.2, 0.3)
    m3_min = 0.3**3 + (mn.S - 2) * mn.lambda2**3 + mn.lambdaS**3
    m3_max = 2 * 0.3**3 + math.sqrt(0.02) ** 3
    m3_peak = math.sqrt(0.2) ** 3
    assert chi_min_exact(0.2, 0.3, 3) == pytest.approx(1 - 3 * P + 2 * m3_min, abs=1e-14)
    assert chi_max_exact(0.2, 0.3, 3) == pytest.approx(1 - 3 * P + 2 * m3_max, abs=1e-14)
    assert chi_upper_P(0.2, 3) == pytest.approx(1 - 3 * P + 2 * m3_peak, abs=1e-14)
    assert chi_lower_P(0.2, 3) == pytest.approx(float(exact_chi([0.2] * 5, 3)), abs=1e-14)
    assert chi_lower_lambda1(0.3, 3) == pytest.approx(float(exact_chi([0.3, 0.3, 0.3, 0.1], 3)), abs=1e-14)
    assert chi_upper_lambda1(0.3, 3) == pytest.approx(0.49 * 1.6, abs=1e-14)


def test_low_N_values():
    assert bounds_report(0.2, 0.3, 2).chain == pytest.approx((0.72, 0.8, 0.8, 0.8, 0.8, 0.91), abs=1e-12)
    for N in (0, 1):
        assert bounds_report(0.2, 0.3, N).chain == (1.0,) * 6
    assert chi_min_exact(0.2, 0.3, 8) == 0.0
    assert chi_max_smooth(0.2, 0.3, 0) == 1.0
    assert chi_min_smooth(0.2, 0.3, 2) == pytest.approx(0.8)


@given(feasible_pairs())
def test_N2_is_one_minus_purity(pair):
    P, lam = pair
    for f in (chi_min_exact, chi_max_exact, chi_min_smooth, chi_max_smooth):
        assert f(P, lam, 2) == pytest.approx(1 - P, abs=1e-12)
    assert chi_upper_lambda1(lam, 2) == pytest.approx(1 - p_min(lam), abs=1e-12)
    assert chi_lower_lambda1(lam, 2) == pytest.approx(1 - p_max(lam), abs=1e-12)


def test_degenerate_collapse():
    for P in (0.1, 0.25, 0.6):
        lam = math.sqrt(P)
        for N in (2, 3, 7, 20):
            rep = bounds_report(P, lam, N)
            assert rep.chain[2] == pytest.approx(rep.chain[4], rel=1e-12)
            assert rep.chain[3] == pytest.approx(rep.chain[4], rel=1e-12)


def test_errors():
    with pytest.raises(InfeasiblePair):
        bounds_report(0.2, 0.5, 3)
    with pytest.raises(OutOfRange):
        chi_upper_P(0.0, 3)
    with pytest.raises(OutOfRange):
        bounds_report(0.2, 0.3, 2_000_000)
    with pytest.raises(OutOfRange):
        chi_min_exact(0.2, 0.3, -1)
    with pytest.raises(NotApplicable):
        chi_min_smooth(0.2, 0.3, 8)


@pytest.mark.parametrize("lam, k", [(0.3, 6), (0.3, 9), (0.15, 12), (0.4, 3), (0.05, 40)])
def test_smooth_lower_exact_at_integer_mode_count(lam, k):
    P = lam * lam + (1 - lam) ** 2 / k
    for N in range(0, k + 2):
        assert chi_min_smooth(P, lam, N) == pytest.approx(chi_min_exact(P, lam, N), rel=1e-10, abs=1e-300)


@pytest.mark.parametrize("P, lam", [(0.18, 0.3), (0.27, 0.3), (0.08, 0.2), (0.125, 0.25)])
def test_smooth_upper_exact_at_integer_multiplicity(P, lam):
    for N in range(0, 25):
        assert chi_max_smooth(P, lam, N) == pytest.approx(chi_max_exact(P, lam, N), rel=1e-10)


@given(feasible_pairs(), st.integers(0, 40))
def test_smooth_bounds_are_weaker(pair, N):
    P, lam = pair
    try:
        lo = chi_min_smooth(P, lam, N)
    except NotApplicable:
        lo = None
    if lo is not None:
        assert lo <= chi_min_exact(P, lam, N) * (1 + 1e-10) + 1e-300
    assert chi_max_exact(P, lam, N) <= chi_max_smooth(P, lam, N) * (1 + 1e-10)


@pytest.mark.parametrize("P, lam", [(0.2, 0.3), (0.1, 0.12), (0.05, 0.1), (0.5, 0.6), (0.02, 0.05)])
@pytest.mark.parametrize("N", [2, 3, 5, 10, 25])
def test_double_sum_matches_tricomi(P, lam, N):
    assert chi_max_exact(P, lam, N) == pytest.approx(chi_max_tricomi(P, lam, N), rel=1e-10)


def test_tricomi_guard():
    with pytest.raises(NotApplicable):
        chi_max_tricomi(0.01, 0.011, 3)


def test_finite_S_increases_to_limit():
    P, lam, N = 0.2, 0.3, 6
    S0 = math.floor(max_threshold(P, lam, 3)) + 2
    prev = 0.0
    for S in (S0, 20, 100, 1000, 10**5, 10**7):
        val = chi_max_finite(P, lam, N, S)
        assert val >= prev - 1e-15
        d = expand(maximizing_distribution(P, lam, S))
        assert chi_series_esp(d, N).chi[N] == pytest.approx(val, rel=1e-10)
        prev = val
    assert prev == pytest.approx(chi_max_exact(P, lam, N), rel=1e-5)


@given(feasible_pairs(), st.integers(1, 60))
def test_weakness_ordering(pair, N):
    assert weakness_holds(*pair, N)


@given(feasible_pairs(), st.integers(0, 60))
def test_report_chain_is_ordered(pair, N):
    rep = bounds_report(*pair, N)  # raises on disorder
    lc = rep.log_chain
    assert all(a <= b + 1e-10 for a, b in zip(lc, lc[1:]))


@pytest.mark.parametrize("P, lam", [(0.2, 0.3), (0.1, 0.15), (0.35, 0.5), (0.05, 0.2), (0.6, 0.75)])
def test_random_constrained_inside_bounds(P, lam):
    for seed in range(40):
        S = minimizing_distribution(P, lam).S + seed % 7
        d = random_distribution_constrained(P, lam, S, seed)
        s = chi_series_esp(d, min(S, 40))
        for N in range(s.Nmax + 1):
            lo, hi = chi_min_exact(P, lam, N), chi_max_exact(P, lam, N)
            assert lo - 1e-9 <= s.chi[N] <= hi + 1e-9


@pytest.mark.parametrize("P, lam", [(0.2, 0.3), (0.1, 0.15), (0.35, 0.5), (0.05, 0.2)])
def test_saturation(P, lam):
    mn = chi_series_esp(expand(minimizing_distribution(P, lam)), 40)
    mx = chi_series_esp(expand(maximizing_distribution(P, lam), s_cut=10**15), 40)
    for N in range(41):
        assert mn.chi[N] == pytest.approx(chi_min_exact(P, lam, N), rel=1e-10, abs=1e-300)
        assert mx.chi[N] == pytest.approx(chi_max_exact(P, lam, N), rel=1e-10, abs=1e-300)


def test_large_N_is_finite():
    for N in (10**3, 10**5, 10**6 - 1):
        rep = bounds_report(1e-6, 5e-4, N)
        assert all(math.isfinite(x) or x == -math.inf for x in rep.log_chain)
        assert not any(math.isnan(x) for x in rep.log_chain)
    assert log_chi_max_exact(1e-6, 5e-4, 10**5) < 0
    assert log_chi_min_exact(1e-6, 5e-4, 10**5) <= log_chi_max_exact(1e-6, 5e-4, 10**5)


def test_report_serialization():
    rep = bounds_report(0.2, 0.3, 3)
    body = json.loads(rep.to_json())
    jsonschema.validate(body, json.loads((SCHEMAS / "bounds.schema.json").read_text()))
    assert list(body["chain"]) == list(CHAIN_NAMES)
    lines = rep.to_csv().splitlines()
    assert lines[0].split(",") == BoundsReport.csv_header()
    assert len(lines[1].split(",")) == 3 + 6 + 6 + 3
    assert rep.validity == 255


def test_report_zero_flags_and_undefined_ratios():
    rep = bounds_report(0.2, 0.3, 6)
    assert rep.zero_flags[:2] == (True, True)
    assert math.isnan(rep.ratio_chain[0])
    assert rep.ratio_chain[2] == 0.0  # chi_7 = 0 < chi_6 of the six-mode minimizer
    assert not rep.validity & 1
    body = json.loads(rep.to_json())
    assert body["ratio_chain"]["uniform_L1"] is None


@pytest.mark.parametrize("P, lam", [(1 / 3, 0.33333333333357734), (0.375, 0.4166666666668624)])
def test_just_above_lambda1_min(P, lam):
    # small genuine tail masses and non-integer 1/lambda1 must not be snapped away
    for f in (chi_min_exact, chi_max_exact, chi_min_smooth, chi_max_smooth):
        assert f(P, lam, 2) == pytest.approx(1 - P, abs=1e-14)
    assert chi_lower_lambda1(lam, 2) == pytest.approx(1 - p_max(lam), abs=1e-14)
    assert p_max(lam) >= P - 1e-15


def _log_min_family(P, lam, S, N):
    """Three-level closed form with a real mode count S in [1 + x, 1 + ceil(x)]."""
    from scipy.special import gammaln

    gap = P - lam * lam
    x = (1 - lam) ** 2 / gap
    R = math.sqrt(max((S - 2) * gap * (S - 1 - x), 0.0))
    l2 = (1 - lam) / (S - 1) + R / ((S - 2) * (S - 1))
    lS = (1 - lam - R) / (S - 1)
    bracket = (N - S) * l2 * ((N - S + 1) * l2 - N * (lam + lS)) + (N - 1) * N * lam * lS
    return (N - 2) * math.log(l2) + math.log(bracket) + gammaln(S - 1) - gammaln(S - N + 1)


@pytest.mark.parametrize("P, lam", [(0.2, 0.3), (0.1, 0.15), (0.05, 0.1), (0.3, 0.4), (0.12, 0.3)])
def test_real_mode_count_form_hits_both_bounds(P, lam):
    x = (1 - lam) ** 2 / (P - lam * lam)
    for N in range(2, math.ceil(x)):
        assert _log_min_family(P, lam, 1 + math.ceil(x), N) == pytest.approx(log_chi_min_exact(P, lam, N), rel=1e-10)
        assert math.exp(_log_min_family(P, lam, 1 + x, N)) == pytest.approx(chi_min_smooth(P, lam, N), rel=1e-10)


@given(feasible_pairs(hi=0.9), st.integers(2, 60))
def test_smooth_ratio_below_exact_ratio(pair, N):
    # the real-mode-count form is not monotone all the way up to ceil(x); only the
    # endpoint ordering, which the smooth bound relies on, is checked
    P, lam = pair
    try:
        lo = log_chi_min_smooth(P, lam, N + 1) - log_chi_min_smooth(P, lam, N)
    except NotApplicable:
        return
    ex = log_chi_min_exact(P, lam, N + 1) - log_chi_min_exact(P, lam, N)
    if math.isfinite(lo) and math.isfinite(ex):
        assert lo <= ex + 1e-10
