import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from coboson.errors import (
    EmptyInput,
    InfeasiblePair,
    NegativeCoefficient,
    NotNormalized,
    OutOfRange,
    TooLarge,
)
from coboson.schmidt import (
    SchmidtDistribution,
    dump_distribution_csv,
    dump_distribution_json,
    feasible,
    lambda1_max,
    lambda1_min,
    load_distribution,
    make_distribution,
    p_max,
    p_min,
    random_distribution,
    random_distribution_constrained,
    require_feasible,
    summarize,
)

spectra = st.lists(st.floats(0.0, 1.0, allow_nan=False), min_size=1, max_size=15).filter(
    lambda xs: sum(xs) > 1e-3
)


@pytest.mark.parametrize(
    "raw, renorm, expected",
    [
        ([0.3, 0.2, 0.5], False, [0.5, 0.3, 0.2]),
        ([1.0], False, [1.0]),
        ([2, 1, 1], True, [0.5, 0.25, 0.25]),
    ],
)
def test_make_distribution_examples(raw, renorm, expected):
    assert make_distribution(raw, renormalize=renorm).to_list() == pytest.approx(expected, abs=1e-15)


def test_make_distribution_errors():
    with pytest.raises(EmptyInput):
        make_distribution([])
    with pytest.raises(NegativeCoefficient):
        make_distribution([1.1, -0.1])
    with pytest.raises(NotNormalized):
        make_distribution([0.5, 0.4])


def test_tiny_negative_is_clamped():
    d = make_distribution([1.0, -1e-16])
    assert d.to_list() == [1.0, 0.0]
    assert d.n_positive == 1


def test_ties_become_one_block():
    d = make_distribution([0.25] * 4)
    assert d.S == 4
    assert d.values.tolist() == [0.25]
    assert d.multiplicities.tolist() == [4]


def test_huge_block_stays_compact():
    d = SchmidtDistribution.from_blocks([1e-9], [10**9])
    assert d.S == 10**9
    assert d.purity == pytest.approx(1e-9)
    with pytest.raises(TooLarge):
        d.coefficients


@given(spectra)
def test_sorting_and_renormalization_idempotent(xs):
    d = make_distribution(xs, renormalize=True)
    again = make_distribution(d.to_list(), renormalize=True)
    assert np.allclose(again.coefficients, d.coefficients, atol=1e-15)
    assert np.all(np.diff(d.coefficients) <= 0)


@given(spectra)
def test_summary_inequalities(xs):
    d = make_distribution(xs, renormalize=True)
    s = summarize(d, kmax=6)
    assert s.M(1) == pytest.approx(1.0, abs=1e-12)
    assert s.lambda1**2 <= s.purity + 1e-12
    assert s.purity <= s.lambda1 + 1e-12
    assert all(b <= a + 1e-15 for a, b in zip(s.power_sums, s.power_sums[1:]))
    assert lambda1_min(s.purity) - 1e-12 <= s.lambda1 <= math.sqrt(s.purity) + 1e-12


def test_summary_examples():
    s = summarize(make_distribution([0.5, 0.3, 0.2]), kmax=3)
    # direct sums: 0.25 + 0.09 + 0.04 and 0.125 + 0.027 + 0.008
    assert (s.lambda1, s.purity, s.M(3)) == pytest.approx((0.5, 0.38, 0.16), abs=1e-15)
    s = summarize(make_distribution([1.0]))
    assert (s.purity, s.schmidt_number, s.geometric_entanglement) == (1.0, 1.0, 0.0)
    s = summarize(make_distribution([0.25] * 4))
    assert s.purity == pytest.approx(0.25) and s.schmidt_number == pytest.approx(4.0)
    with pytest.raises(OutOfRange):
        summarize(make_distribution([1.0]), kmax=1)


def _lambda1_min_by_search(P, S, n=400_001):
    """Smallest largest coefficient of an S-point spectrum with purity P.

    For S-1 equal entries a and one b <= a: scan a, solve b from the sum,
    keep points whose purity matches.
    """
    a = np.linspace(1.0 / S, 1.0 / (S - 1), n)
    b = 1.0 - (S - 1) * a
    purity = (S - 1) * a * a + b * b
    i = np.argmin(np.abs(purity - P))
    return a[i]


@pytest.mark.parametrize("P, expected", [(0.2, 0.2), (0.001, 0.001), (0.25, 0.25), (1.0, 1.0)])
def test_lambda1_min_exact_cases(P, expected):
    assert lambda1_min(P) == pytest.approx(expected, rel=1e-12)


def test_lambda1_min_matches_search():
    assert lambda1_min(0.3) == pytest.approx(0.31455, abs=5e-6)
    assert lambda1_min(0.3) == pytest.approx(_lambda1_min_by_search(0.3, 4), abs=1e-5)


def test_lambda1_min_monotone_across_jumps():
    for P in np.linspace(0.01, 0.99, 400):
        assert lambda1_min(P) <= lambda1_min(P + 1e-9) + 1e-9
    for k in range(2, 30):
        P = 1.0 / k
        assert lambda1_min(P) <= lambda1_min(P + 1e-9) + 1e-9


def test_lambda1_max_and_p_bounds():
    assert lambda1_max(0.25) == 0.5
    assert lambda1_max(0.001) == pytest.approx(0.0316228, abs=1e-7)
    assert (p_min(0.3), p_max(0.3)) == pytest.approx((0.09, 0.28))
    assert p_max(0.5) == pytest.approx(0.5)
    assert p_min(1.0) == p_max(1.0) == 1.0
    with pytest.raises(OutOfRange):
        lambda1_min(0.0)
    with pytest.raises(OutOfRange):
        p_max(1.5)


def test_p_max_matches_simplex_search():
    # largest purity with all entries <= 0.3: greedy fill is optimal, checked on random samples
    rng = np.random.default_rng(0)
    best = 0.0
    for _ in range(20000):
        x = rng.dirichlet(np.full(5, 0.3))
        if x.max() <= 0.3:
            best = max(best, float(x @ x))
    assert best <= p_max(0.3) + 1e-12
    assert best > p_max(0.3) - 0.03


@given(st.floats(1e-4, 1.0))
def test_p_range_ordered(lam):
    assert p_min(lam) <= p_max(lam) + 1e-15 <= lam + 2e-15


@pytest.mark.parametrize("P, lam, ok", [(0.2, 0.3, True), (0.2, 0.5, False), (0.2, 0.1, False),
                                        (1.0, 1.0, True), (0.0, 0.1, False), (0.5, -1, False)])
def test_feasible(P, lam, ok):
    assert feasible(P, lam) is ok


def test_require_feasible_clips_roundoff():
    P, lam = require_feasible(0.2, math.sqrt(0.2) + 5e-13)
    assert lam == math.sqrt(0.2)
    with pytest.raises(InfeasiblePair):
        require_feasible(0.2, 0.5)


def test_random_distribution():
    assert random_distribution(1, 7).to_list() == [1.0]
    a, b = random_distribution(8, 3), random_distribution(8, 3)
    assert a == b and a.S == 8


@given(st.floats(0.01, 0.9), st.floats(0.05, 0.95), st.integers(0, 10**6))
def test_constrained_sampler_hits_target(P, t, seed):
    lo, hi = lambda1_min(P), math.sqrt(P)
    lam = lo + t * (hi - lo)
    S = 1 + math.ceil((1 - lam) ** 2 / max(P - lam * lam, 1e-12)) + 5
    if S > 3000:
        return
    d = random_distribution_constrained(P, lam, S, seed)
    assert abs(d.purity - P) <= 1e-9
    assert abs(d.lambda1 - lam) <= 1e-9


def test_constrained_sampler_examples():
    d = random_distribution_constrained(0.2, 0.3, 6, 11)
    assert abs(d.purity - 0.2) <= 1e-9 and abs(d.lambda1 - 0.3) <= 1e-9
    with pytest.raises(InfeasiblePair):
        random_distribution_constrained(0.2, 0.5, 6, 0)
    with pytest.raises(InfeasiblePair):
        random_distribution_constrained(0.2, 0.3, 3, 0)


def test_io_round_trip(tmp_path):
    d = make_distribution([0.5, 0.3, 0.2])
    (tmp_path / "d.json").write_text(dump_distribution_json(d))
    (tmp_path / "d.csv").write_text(dump_distribution_csv(d))
    assert load_distribution(tmp_path / "d.json") == d
    assert load_distribution(tmp_path / "d.csv") == d
    assert json.loads(dump_distribution_json(d)) == [0.5, 0.3, 0.2]


def test_lambda1_min_ignores_rounding_excess():
    # five equal entries give P = 0.2 + 4e-17 in floating point
    d = make_distribution([0.2] * 5)
    assert lambda1_min(d.purity) == pytest.approx(0.2, abs=1e-15)
    assert feasible(d.purity, d.lambda1)
