"""Closed-form bounds on chi_N and on the ratio chi_{N+1}/chi_N.

Every bound is evaluated in log space; ``log_*`` functions return ``-inf`` for
an exact zero and the plain functions exponentiate.  The six attainable bounds
form a chain (weakest lower bound first)::

    uniform_L1 <= uniform_P <= min_PL1 <= chi_N <= max_PL1 <= peaked_P <= peaked_L1
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import gammaln, logsumexp

from .errors import DegeneratePeaked, HierarchyViolation, NotApplicable, OutOfRange
from .extremal import maximizing_distribution, min_mode_ratio, minimizing_distribution
from .schmidt import SNAP_TOL, lambda1_min, p_max, p_min, require_feasible, snap_ceil, snap_floor

N_CAP = 1_000_000
HIERARCHY_TOL = 1e-10
EPS = np.finfo(float).eps

CHAIN_NAMES = ("uniform_L1", "uniform_P", "min_PL1", "max_PL1", "peaked_P", "peaked_L1")


def _check_N(N: int) -> int:
    if isinstance(N, bool) or int(N) != N or N < 0:
        raise OutOfRange(f"N must be a non-negative integer, got {N!r}")
    if N > N_CAP:
        raise OutOfRange(f"N = {N} exceeds cap {N_CAP}")
    return int(N)


def _check_unit(x: float, name: str) -> float:
    if not (0 < x <= 1.0 + 1e-12):
        raise OutOfRange(f"{name} = {x!r} outside (0, 1]")
    return min(float(x), 1.0)


def _log_pow(x: float, k: int) -> float:
    if k == 0:
        return 0.0
    return k * math.log(x) if x > 0 else -math.inf


def _log_falling(m: float, k: int) -> float:
    """log of m (m-1) ... (m-k+1) for real m >= k-1; -inf if a factor vanishes."""
    if k <= 0:
        return 0.0
    if m - (k - 1) <= 0:
        return -math.inf
    i = np.arange(k, dtype=float)
    return k * math.log(m) + float(np.sum(np.log1p(-i / m)))


# P-only and lambda1-only bounds ---------------------------------------------------


def _log_peaked(lam: float, N: int) -> float:
    if N <= 1:
        return 0.0
    if lam >= 1.0:
        return -math.inf
    return (N - 1) * math.log1p(-lam) + math.log1p((N - 1) * lam)


def _log_uniform(lam: float, L: int, N: int) -> float:
    """L-1 coefficients lam plus one remainder 1-(L-1)lam."""
    if N <= 1:
        return 0.0
    if N > L:
        return -math.inf
    rest = max(1.0 - (L - 1) * lam, 0.0)
    # N - L lam (N-1) written without cancellation
    bracket = N * rest + lam * (L - N)
    if bracket <= 0:
        return -math.inf
    return (N - 1) * math.log(lam) + _log_falling(L - 1, N - 1) + math.log(bracket)


def log_chi_upper_P(P: float, N: int) -> float:
    P, N = _check_unit(P, "P"), _check_N(N)
    return _log_peaked(math.sqrt(P), N)


def log_chi_lower_P(P: float, N: int) -> float:
    P, N = _check_unit(P, "P"), _check_N(N)
    return _log_uniform(lambda1_min(P), snap_ceil(1.0 / P), N)


def log_chi_upper_lambda1(lambda1: float, N: int) -> float:
    lam, N = _check_unit(lambda1, "lambda1"), _check_N(N)
    return _log_peaked(lam, N)


def log_chi_lower_lambda1(lambda1: float, N: int) -> float:
    lam, N = _check_unit(lambda1, "lambda1"), _check_N(N)
    return _log_uniform(lam, snap_floor(1.0 / lam) + 1, N)


# combined bounds in P and lambda1 -------------------------------------------------


def log_chi_min_exact(P: float, lambda1: float, N: int) -> float:
    N = _check_N(N)
    P, lam = require_feasible(P, lambda1)
    if N <= 1:
        return 0.0
    try:
        spec = minimizing_distribution(P, lam)
    except DegeneratePeaked:
        return _log_peaked(math.sqrt(P), N)
    S = int(spec.S)
    if N > S:
        return -math.inf
    l2, lS = spec.lambda2, spec.lambdaS
    m = S - 2
    free = m - N + 2  # modes of value lambda2 left unused, >= 0
    bracket = free * (free - 1) * l2 * l2 + N * free * l2 * (lam + lS) + N * (N - 1) * lam * lS
    if bracket <= 0:
        return -math.inf
    return _log_falling(m, N - 2) + _log_pow(l2, N - 2) + math.log(bracket)


def log_chi_min_smooth(P: float, lambda1: float, N: int) -> float:
    """Minimizing-family bound with the mode count left non-integer."""
    N = _check_N(N)
    P, lam = require_feasible(P, lambda1)
    if N <= 1:
        return 0.0
    gap = P - lam * lam
    if gap <= 1e-12 or abs(lam - math.sqrt(P)) <= 1e-12:
        return _log_peaked(math.sqrt(P), N)
    x = min_mode_ratio(P, lam)
    if 1 + math.ceil(x) < N:
        raise NotApplicable(f"N = {N} exceeds 1 + ceil({x:.6g})")
    prod = _log_falling(x - 1.0, N - 2)
    # 1 + (N-2) lam - P (N-1), both parts non-negative
    head = (1.0 - P) + (N - 2) * (lam - P)
    if head <= 0:
        return -math.inf
    return prod + math.log(head) + (N - 2) * math.log(gap / (1.0 - lam))


def _max_terms(lam: float, lamL: float, sigma: float, L: int, N: int) -> np.ndarray:
    """Log terms of the S -> infinity double sum over K in {0, 1} and M."""
    lf_L = gammaln(L)  # log (L-1)!
    out = []
    for K in (0, 1):
        if K == 1 and (N < 1 or lamL <= 0):
            continue
        Mmax = min(N - K, L - 1)
        M = np.arange(Mmax + 1, dtype=float)
        rest = N - M - K
        with np.errstate(divide="ignore"):
            log_sigma = np.where(rest > 0, rest * np.log(sigma) if sigma > 0 else -np.inf, 0.0)
            log_lam = M * math.log(lam)
        t = lf_L - gammaln(L - M) + log_lam + log_sigma
        if K == 0:
            t += gammaln(N + 1) - gammaln(M + 1) - gammaln(N - M + 1)
        else:
            t += math.log(N) + gammaln(N) - gammaln(M + 1) - gammaln(N - M) + math.log(lamL)
        out.append(t)
    return np.concatenate(out)


def log_chi_max_exact(P: float, lambda1: float, N: int) -> float:
    N = _check_N(N)
    P, lam = require_feasible(P, lambda1)
    if N <= 1:
        return 0.0
    spec = maximizing_distribution(P, lam)
    return float(logsumexp(_max_terms(lam, spec.lambdaL, spec.lambdaSigma, spec.L, N)))


def log_chi_max_finite(P: float, lambda1: float, N: int, S: int) -> float:
    """Maximizing-family value at a finite number S of modes."""
    N = _check_N(N)
    P, lam = require_feasible(P, lambda1)
    if N <= 1:
        return 0.0
    spec = maximizing_distribution(P, lam, S)
    L, lamL, lamS = spec.L, spec.lambdaL, spec.lambdaS
    terms = []
    for K in (0, 1):
        for M in range(0, min(N - K, L - 1) + 1):
            rest = N - M - K
            if rest > S - L:
                continue
            t = (
                gammaln(L) - gammaln(L - M)
                + _log_falling(S - L, rest)
                + _log_pow(lam, M) + _log_pow(lamL, K) + _log_pow(lamS, rest)
                + gammaln(N + 1) - gammaln(M + 1) - gammaln(K + 1) - gammaln(rest + 1)
            )
            terms.append(t)
    return float(logsumexp(terms)) if terms else -math.inf


def log_chi_max_smooth(P: float, lambda1: float, N: int) -> float:
    """Maximizing-family bound with L replaced by the real number P / lambda1^2."""
    N = _check_N(N)
    P, lam = require_feasible(P, lambda1)
    if N <= 1:
        return 0.0
    Lt = P / (lam * lam)
    Lr = round(Lt)
    if abs(Lt - Lr) <= SNAP_TOL * max(1.0, Lt):
        Lt = float(Lr)
    sigma = max(1.0 - Lt * lam, 0.0)
    Mmax = min(N, math.floor(Lt) + 1)
    M = np.arange(Mmax + 1)
    factors = Lt - np.arange(Mmax, dtype=float)
    with np.errstate(divide="ignore"):
        log_ff = np.concatenate(([0.0], np.cumsum(np.log(np.maximum(factors, 0.0)))))
        rest = N - M
        log_sigma = np.where(rest > 0, rest * np.log(sigma) if sigma > 0 else -np.inf, 0.0)
    t = (
        log_ff + M * math.log(lam) + log_sigma
        + gammaln(N + 1) - gammaln(M + 1) - gammaln(N - M + 1)
    )
    return float(logsumexp(t))


def chi_max_tricomi(P: float, lambda1: float, N: int) -> float:
    """Maximizing-family value through Tricomi's U function (cross-check only)."""
    import mpmath

    N = _check_N(N)
    P, lam = require_feasible(P, lambda1)
    spec = maximizing_distribution(P, lam)
    L, lamL, sigma = spec.L, spec.lambdaL, spec.lambdaSigma
    if L > 30 or sigma <= 0:
        raise NotApplicable("Tricomi form used only for L <= 30 and a non-empty tail")
    with mpmath.workdps(40):
        z = -mpmath.mpf(sigma) / lam
        a = 1 - L
        val = (-mpmath.mpf(lam)) ** (L - 1) * mpmath.mpf(sigma) ** (N - L) * (
            N * lamL * mpmath.hyperu(a, a + N, z) + sigma * mpmath.hyperu(a, a + N + 1, z)
        )
        return float(val)


def _exp(x: float) -> float:
    return math.exp(x) if x > -math.inf else 0.0


def chi_min_exact(P: float, lambda1: float, N: int) -> float:
    return _exp(log_chi_min_exact(P, lambda1, N))


def chi_min_smooth(P: float, lambda1: float, N: int) -> float:
    return _exp(log_chi_min_smooth(P, lambda1, N))


def chi_max_exact(P: float, lambda1: float, N: int) -> float:
    return _exp(log_chi_max_exact(P, lambda1, N))


def chi_max_finite(P: float, lambda1: float, N: int, S: int) -> float:
    return _exp(log_chi_max_finite(P, lambda1, N, S))


def chi_max_smooth(P: float, lambda1: float, N: int) -> float:
    return _exp(log_chi_max_smooth(P, lambda1, N))


def chi_upper_P(P: float, N: int) -> float:
    return _exp(log_chi_upper_P(P, N))


def chi_lower_P(P: float, N: int) -> float:
    return _exp(log_chi_lower_P(P, N))


def chi_upper_lambda1(lambda1: float, N: int) -> float:
    return _exp(log_chi_upper_lambda1(lambda1, N))


def chi_lower_lambda1(lambda1: float, N: int) -> float:
    return _exp(log_chi_lower_lambda1(lambda1, N))


# the hierarchy -----------------------------------------------------------------


def chain_functions(P: float, lambda1: float) -> tuple[Callable[[int], float], ...]:
    """The six log-bounds as functions of N, weakest lower bound first."""
    return (
        lambda N: log_chi_lower_lambda1(lambda1, N),
        lambda N: log_chi_lower_P(P, N),
        lambda N: log_chi_min_exact(P, lambda1, N),
        lambda N: log_chi_max_exact(P, lambda1, N),
        lambda N: log_chi_upper_P(P, N),
        lambda N: log_chi_upper_lambda1(lambda1, N),
    )


def log_ratio(log_next: float, log_here: float) -> float:
    """log(chi_{N+1}/chi_N); NaN when chi_N = 0, -inf when only chi_{N+1} = 0."""
    if log_here == -math.inf:
        return math.nan
    return log_next - log_here


VALID_SMOOTH_LOWER = 1 << 6
VALID_SMOOTH_UPPER = 1 << 7


@dataclass(frozen=True)
class BoundsReport:
    """Bounds at one (P, lambda1, N).

    ``validity`` bit i (0-5) marks chain entry i as having a defined ratio
    (chi_N > 0); bits 6 and 7 mark the smooth lower and upper bounds applicable.
    """

    P: float
    lambda1: float
    N: int
    log_chain: tuple[float, ...]
    log_ratio_chain: tuple[float, ...]
    smooth_lower: float
    smooth_upper: float
    validity: int

    @property
    def chain(self) -> tuple[float, ...]:
        return tuple(_exp(x) for x in self.log_chain)

    @property
    def zero_flags(self) -> tuple[bool, ...]:
        return tuple(x == -math.inf for x in self.log_chain)

    @property
    def ratio_chain(self) -> tuple[float, ...]:
        return tuple(math.nan if math.isnan(x) else _exp(x) for x in self.log_ratio_chain)

    @property
    def deficit_chain(self) -> tuple[float, ...]:
        """1 - ratio, accurate when the ratio is close to 1."""
        return tuple(
            math.nan if math.isnan(x) else (1.0 if x == -math.inf else -math.expm1(x))
            for x in self.log_ratio_chain
        )

    def to_dict(self) -> dict:
        def num(x):
            return None if math.isnan(x) or math.isinf(x) else x

        return {
            "P": self.P,
            "lambda1": self.lambda1,
            "N": self.N,
            "chain": dict(zip(CHAIN_NAMES, self.chain)),
            "log_chain": {k: num(v) for k, v in zip(CHAIN_NAMES, self.log_chain)},
            "zero": dict(zip(CHAIN_NAMES, self.zero_flags)),
            "ratio_chain": {k: num(v) for k, v in zip(CHAIN_NAMES, self.ratio_chain)},
            "smooth_lower": num(self.smooth_lower),
            "smooth_upper": num(self.smooth_upper),
            "validity": self.validity,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @staticmethod
    def csv_header() -> list[str]:
        return (
            ["P", "lambda1", "N"]
            + [f"chi_{n}" for n in CHAIN_NAMES]
            + [f"ratio_{n}" for n in CHAIN_NAMES]
            + ["smooth_lower", "smooth_upper", "validity"]
        )

    def csv_row(self) -> list[str]:
        vals = [self.P, self.lambda1, self.N, *self.chain, *self.ratio_chain]
        vals += [self.smooth_lower, self.smooth_upper, self.validity]
        return [repr(v) if isinstance(v, float) else str(v) for v in vals]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.csv_header())
        w.writerow(self.csv_row())
        return buf.getvalue()


def order_tolerance(P: float, N: int) -> float:
    """Allowed log-domain disorder: HIERARCHY_TOL plus the rounding of terms of size N |log P|.

    For N <= 1000 and P >= 1e-6 the second part stays below 3e-11.
    """
    return HIERARCHY_TOL + 8 * EPS * N * (1.0 + abs(math.log(P)))


def _check_ordered(values, what: str, P: float, lam: float, N: int) -> None:
    tol = order_tolerance(P, N)
    for i in range(len(values) - 1):
        lo, hi = values[i], values[i + 1]
        if math.isnan(lo) or math.isnan(hi) or lo == -math.inf:
            continue
        if lo - hi > tol:
            raise HierarchyViolation(
                f"{what}: {CHAIN_NAMES[i]} > {CHAIN_NAMES[i + 1]} at P={P!r}, "
                f"lambda1={lam!r}, N={N} (log gap {lo - hi:.3g})"
            )


def bounds_report(P: float, lambda1: float, N: int, check: bool = True) -> BoundsReport:
    N = _check_N(N)
    if N + 1 > N_CAP:
        raise OutOfRange(f"N + 1 exceeds cap {N_CAP}")
    P, lam = require_feasible(P, lambda1)
    fns = chain_functions(P, lam)
    here = tuple(f(N) for f in fns)
    nxt = tuple(f(N + 1) for f in fns)
    ratios = tuple(log_ratio(b, a) for a, b in zip(here, nxt))
    validity = sum(1 << i for i, a in enumerate(here) if a > -math.inf)
    try:
        s_lo = _exp(log_chi_min_smooth(P, lam, N))
        validity |= VALID_SMOOTH_LOWER
    except NotApplicable:
        s_lo = math.nan
    s_hi = _exp(log_chi_max_smooth(P, lam, N))
    validity |= VALID_SMOOTH_UPPER
    if check:
        _check_ordered(here, "chi chain", P, lam, N)
        _check_ordered(ratios, "ratio chain", P, lam, N)
        lo, hi = _exp(here[2]), _exp(here[3])
        tol = order_tolerance(P, N)
        if not math.isnan(s_lo) and s_lo > lo * (1 + tol) + 1e-300:
            raise HierarchyViolation(f"smooth lower {s_lo!r} above exact {lo!r}")
        if s_hi < hi * (1 - tol):
            raise HierarchyViolation(f"smooth upper {s_hi!r} below exact {hi!r}")
    return BoundsReport(P, lam, N, here, ratios, s_lo, s_hi, validity)


def weakness_holds(P: float, lambda1: float, N: int) -> bool:
    """lambda1-only bounds are never tighter than the P-only ones."""
    P, lam = require_feasible(P, lambda1)
    tol = order_tolerance(P, N)
    return (
        log_chi_upper_lambda1(lam, N) >= log_chi_upper_P(P, N) - tol
        and log_chi_lower_lambda1(lam, N) <= log_chi_lower_P(P, N) + tol
    )


__all__ = [
    "BoundsReport",
    "CHAIN_NAMES",
    "order_tolerance",
    "bounds_report",
    "chain_functions",
    "chi_lower_P",
    "chi_lower_lambda1",
    "chi_max_exact",
    "chi_max_finite",
    "chi_max_smooth",
    "chi_max_tricomi",
    "chi_min_exact",
    "chi_min_smooth",
    "chi_upper_P",
    "chi_upper_lambda1",
    "log_chi_lower_P",
    "log_chi_lower_lambda1",
    "log_chi_max_exact",
    "log_chi_max_finite",
    "log_chi_max_smooth",
    "log_chi_min_exact",
    "log_chi_min_smooth",
    "log_chi_upper_P",
    "log_chi_upper_lambda1",
    "p_max",
    "p_min",
]
