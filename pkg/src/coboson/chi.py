"""Normalization factor chi_N = N! e_N(lambda) and the ratio chi_{N+1}/chi_N.

Four engines are provided:

* :func:`chi_series_esp` -- incremental elementary-symmetric recurrence in the
  log domain (all terms non-negative; the production engine),
* :func:`chi_series_newton_girard` -- alternating power-sum recursion, kept as
  an independent cross-check,
* :func:`chi_multiplicity` -- closed form for equal coefficients combined by
  binomial convolution, also handles an infinitesimal tail of finite mass,
* :func:`chi_bruteforce` -- explicit subset enumeration, the reference oracle.
"""

from __future__ import annotations

import csv
import enum
import io
import itertools
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from .errors import CancellationFailure, OutOfRange, TooLarge, Undefined
from .schmidt import NORM_TOL, SchmidtDistribution

NEG_INF = -np.inf
FOLD_THRESHOLD = 64  # runs longer than this are folded in by their closed form
NG_CLAMP = 1e-9
NG_FLAG_REL = 1e-10
EPS = np.finfo(float).eps


class Source(str, enum.Enum):
    ESP = "ESP"
    NEWTON_GIRARD = "NewtonGirard"
    MULTIPLICITY = "Multiplicity"
    BRUTE_FORCE = "BruteForce"


@dataclass(frozen=True, eq=False)
class ChiSeries:
    """chi_0 ... chi_Nmax stored as natural logs; exact zeros are ``-inf``.

    ``cancellation`` and ``error_bound`` are only filled by the Newton-Girard
    engine: per-N flags for entries whose alternating sum lost more than ten
    significant digits, and the propagated absolute error estimate.
    """

    log_chi: np.ndarray
    source: Source
    cancellation: np.ndarray | None = None
    error_bound: np.ndarray | None = None

    def __post_init__(self) -> None:
        arr = np.asarray(self.log_chi, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "log_chi", arr)

    @property
    def Nmax(self) -> int:
        return self.log_chi.size - 1

    @property
    def is_zero(self) -> np.ndarray:
        return np.isneginf(self.log_chi)

    @property
    def chi(self) -> np.ndarray:
        """Linear values; entries below the double range underflow to 0.0."""
        return np.exp(self.log_chi)

    @property
    def log_values(self) -> list[tuple[float, bool]]:
        return [(float(v), bool(np.isneginf(v))) for v in self.log_chi]

    def __getitem__(self, N: int) -> float:
        return float(math.exp(self.log_chi[N]))

    def ratios(self) -> np.ndarray:
        return ratio_series(self)

    def to_dict(self) -> dict:
        ratio = self.ratios()
        return {
            "source": self.source.value,
            "Nmax": self.Nmax,
            "chi": [float(x) for x in self.chi],
            "log_chi": [None if np.isneginf(v) else float(v) for v in self.log_chi],
            "ratio": [None if math.isnan(r) else float(r) for r in ratio],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def to_csv(self) -> str:
        ratio = self.ratios()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["N", "chi", "ratio"])
        for N, c in enumerate(self.chi):
            r = "" if N >= ratio.size or math.isnan(ratio[N]) else repr(float(ratio[N]))
            w.writerow([N, repr(float(c)), r])
        return buf.getvalue()


@dataclass(frozen=True)
class MultiplicityBlocks:
    """Distinct coefficients with multiplicities, plus an optional infinitesimal tail.

    ``tail_mass`` is the total weight of infinitely many vanishing coefficients
    (the S -> infinity limit); its chi series is simply ``tail_mass**k``.
    """

    blocks: tuple[tuple[float, int], ...]
    tail_mass: float = 0.0

    def __post_init__(self) -> None:
        blocks = tuple((float(v), int(m)) for v, m in self.blocks)
        object.__setattr__(self, "blocks", blocks)
        if not blocks and self.tail_mass <= 0:
            raise OutOfRange("total multiplicity must be >= 1")
        for (v, m) in blocks:
            if m < 1 or v < 0:
                raise OutOfRange(f"bad block ({v}, {m})")
        for (a, _), (b, _) in zip(blocks, blocks[1:]):
            if not a > b:
                raise OutOfRange("block values must be strictly decreasing")
        if self.tail_mass < 0:
            raise OutOfRange("tail_mass must be >= 0")
        total = math.fsum([v * m for v, m in blocks] + [self.tail_mass])
        if abs(total - 1.0) > NORM_TOL:
            raise OutOfRange(f"blocks sum to {total!r}, not 1")

    @classmethod
    def from_distribution(cls, dist: SchmidtDistribution) -> "MultiplicityBlocks":
        return cls(tuple(zip(dist.values.tolist(), dist.multiplicities.tolist())))

    @classmethod
    def trivial(cls, dist: SchmidtDistribution) -> "MultiplicityBlocks":
        """One block per coefficient (ties merged, since values must be distinct)."""
        if np.all(dist.multiplicities == 1):
            return cls(tuple((v, 1) for v in dist.values.tolist()))
        return cls.from_distribution(dist)

    @property
    def total_multiplicity(self) -> int | float:
        if self.tail_mass > 0:
            return math.inf
        return sum(m for _, m in self.blocks)

    def expand(self) -> SchmidtDistribution:
        if self.tail_mass > 0:
            raise TooLarge("an infinitesimal tail cannot be expanded; use extremal.expand")
        vals, mults = zip(*self.blocks)
        return SchmidtDistribution.from_blocks(vals, mults)


# log-domain building blocks ---------------------------------------------------


def block_log_chi(value: float, multiplicity: float, Nmax: int) -> np.ndarray:
    """log chi_k of ``multiplicity`` equal coefficients: value^k m!/(m-k)!."""
    out = np.full(Nmax + 1, NEG_INF)
    out[0] = 0.0
    if value <= 0 or Nmax == 0:
        return out
    kmax = int(min(Nmax, multiplicity))
    i = np.arange(kmax, dtype=float)
    # sum_{i<k} log(value*(m - i)) = k log(value*m) + sum log1p(-i/m)
    steps = math.log(value * multiplicity) + np.log1p(-i / multiplicity)
    out[1 : kmax + 1] = np.cumsum(steps)
    return out


def tail_log_chi(mass: float, Nmax: int) -> np.ndarray:
    """log chi_k of an infinitesimal uniform tail of total weight ``mass``."""
    out = np.zeros(Nmax + 1)
    if mass <= 0:
        out[1:] = NEG_INF
    else:
        out[1:] = np.arange(1, Nmax + 1) * math.log(mass)
    return out


def _log_factorials(Nmax: int) -> np.ndarray:
    return gammaln(np.arange(Nmax + 1, dtype=float) + 1.0)


def binomial_fold(acc: np.ndarray, blk: np.ndarray, lf: np.ndarray | None = None) -> np.ndarray:
    """log of sum_k C(N,k) blk_k acc_{N-k}; cost O(Nmax * support(blk))."""
    Nmax = acc.size - 1
    if lf is None:
        lf = _log_factorials(Nmax)
    finite = np.flatnonzero(np.isfinite(blk))
    out = np.full(Nmax + 1, NEG_INF)
    for k in finite.tolist():
        seg = slice(k, Nmax + 1)
        lb = lf[seg] - lf[k] - lf[: Nmax + 1 - k]
        term = lb + blk[k] + acc[: Nmax + 1 - k]
        out[seg] = np.logaddexp(out[seg], term)
    return out


def _finish(log_chi: np.ndarray, n_positive: float) -> np.ndarray:
    """Pin chi_0 = chi_1 = 1, exact Pauli zeros, and monotone decrease."""
    Nmax = log_chi.size - 1
    log_chi[0] = 0.0
    if Nmax >= 1 and n_positive >= 1:
        log_chi[1] = 0.0
    if n_positive < Nmax:
        log_chi[int(n_positive) + 1 :] = NEG_INF
    mono = np.minimum.accumulate(log_chi)
    fin = np.isfinite(log_chi)
    excess = float(np.max(log_chi[fin] - mono[fin], initial=0.0))
    if excess > 1e-9:
        raise ArithmeticError(f"chi series not monotone (excess {excess:.3g} in log)")
    return mono


# engines ----------------------------------------------------------------------


def chi_series_esp(dist: SchmidtDistribution, Nmax: int) -> ChiSeries:
    """chi_0..chi_Nmax via chi_k <- chi_k + k*lambda*chi_{k-1}, one coefficient at a time.

    The recurrence runs degree-major so that each degree is one cumulative
    log-add-exp over the coefficients.  A run of more than FOLD_THRESHOLD
    equal coefficients is folded in by its closed form instead of being
    expanded, which keeps spectra with millions of tied coefficients cheap.
    """
    if Nmax < 0:
        raise OutOfRange("Nmax must be >= 0")
    vals = dist.values
    mults = dist.multiplicities
    positive = vals > 0
    vals, mults = vals[positive], mults[positive]

    big = mults > FOLD_THRESHOLD
    lf = None
    base = np.full(Nmax + 1, NEG_INF)
    base[0] = 0.0
    if np.any(big):
        order = np.flatnonzero(big)[np.argsort(-mults[big], kind="stable")]
        base = block_log_chi(float(vals[order[0]]), int(mults[order[0]]), Nmax)
        for idx in order[1:]:
            if lf is None:
                lf = _log_factorials(Nmax)
            base = binomial_fold(base, block_log_chi(float(vals[idx]), int(mults[idx]), Nmax), lf)
    single = np.repeat(vals[~big], mults[~big])

    log_chi = base.copy()
    if single.size and Nmax >= 1:
        log_lam = np.log(single)
        prev = np.full(single.size + 1, base[0])  # degree-0 prefix values
        for k in range(1, Nmax + 1):
            terms = np.empty(single.size + 1)
            terms[0] = base[k]
            terms[1:] = math.log(k) + log_lam + prev[:-1]
            cur = np.logaddexp.accumulate(terms)
            log_chi[k] = cur[-1]
            prev = cur
    return ChiSeries(_finish(log_chi, dist.n_positive), Source.ESP)


def chi_series_newton_girard(power_sums: Sequence[float], Nmax: int) -> ChiSeries:
    """chi_N = (N-1)! sum_m (-1)^(m+1) chi_{N-m} M(m) / (N-m)!  from M(1)..M(Nmax).

    Terms are formed in the log domain and summed exactly with ``math.fsum``;
    the remaining error comes from rounding in the inputs and in earlier chi
    values, which is propagated into ``error_bound``.

    Given :class:`fractions.Fraction` power sums (see :func:`power_sums_exact`)
    the recursion runs in exact rational arithmetic and never cancels.
    """
    if Nmax < 0:
        raise OutOfRange("Nmax must be >= 0")
    if len(power_sums) and all(isinstance(x, Fraction) for x in power_sums[:Nmax]):
        return _newton_girard_exact(list(power_sums), Nmax)
    M = np.asarray(power_sums, dtype=float)
    if M.size < Nmax:
        raise OutOfRange(f"need M(1)..M({Nmax}), got {M.size} power sums")
    if Nmax >= 1 and abs(M[0] - 1.0) > NORM_TOL:
        raise OutOfRange(f"M(1) = {M[0]!r} must be 1")
    chi = np.zeros(Nmax + 1)
    err = np.zeros(Nmax + 1)
    chi[0] = 1.0
    flag = np.zeros(Nmax + 1, dtype=bool)
    logM = np.log(np.where(M > 0, M, 1.0))
    for N in range(1, Nmax + 1):
        m = np.arange(1, N + 1)
        prev = chi[N - m]
        coef_log = gammaln(N) - gammaln(N - m + 1.0) + logM[:N]
        coef = np.where(M[:N] > 0, np.exp(coef_log), 0.0)
        mag = coef * prev
        signs = np.where(m % 2 == 1, 1.0, -1.0)
        value = math.fsum((signs * mag).tolist())
        scale = float(mag.sum())
        err[N] = float(coef @ err[N - m]) + 4 * N * EPS * scale + EPS * abs(value)
        if value < 0:
            if value < -NG_CLAMP:
                raise CancellationFailure(
                    f"chi_{N} = {value:.3g} < 0: alternating sum lost all precision; use chi_series_esp"
                )
            value = 0.0
        chi[N] = value
        flag[N] = value == 0.0 or err[N] > NG_FLAG_REL * value
    with np.errstate(divide="ignore"):
        log_chi = np.log(chi)
    return ChiSeries(log_chi, Source.NEWTON_GIRARD, cancellation=flag, error_bound=err)


def power_sums_exact(dist: SchmidtDistribution, kmax: int) -> list[Fraction]:
    """M(1)..M(kmax) as exact rationals of the stored binary coefficients."""
    vals = [Fraction(v) for v in dist.values.tolist()]
    mults = dist.multiplicities.tolist()
    out = []
    powers = [Fraction(1)] * len(vals)
    for _ in range(kmax):
        powers = [p * v for p, v in zip(powers, vals)]
        out.append(sum((m * p for m, p in zip(mults, powers)), Fraction(0)))
    return out


def _log_fraction(x: Fraction) -> float:
    if x == 0:
        return NEG_INF
    return math.log(x.numerator) - math.log(x.denominator)


def _newton_girard_exact(M: list[Fraction], Nmax: int) -> ChiSeries:
    if Nmax >= 1 and abs(float(M[0]) - 1.0) > NORM_TOL:
        raise OutOfRange(f"M(1) = {float(M[0])!r} must be 1")
    chi = [Fraction(1)]
    for N in range(1, Nmax + 1):
        acc = Fraction(0)
        coef = 1  # (N-1)!/(N-m)!
        for m in range(1, N + 1):
            if m > 1:
                coef *= N - m + 1
            term = coef * M[m - 1] * chi[N - m]
            acc += term if m % 2 == 1 else -term
        if acc < 0:
            raise OutOfRange(f"power sums inconsistent: exact chi_{N} < 0")
        chi.append(acc)
    log_chi = np.array([_log_fraction(c) for c in chi])
    zeros = np.zeros(Nmax + 1, dtype=bool)
    return ChiSeries(log_chi, Source.NEWTON_GIRARD, cancellation=zeros, error_bound=np.zeros(Nmax + 1))


def chi_multiplicity(blocks: MultiplicityBlocks, Nmax: int) -> ChiSeries:
    """Closed form per block, combined left to right by the binomial convolution."""
    if Nmax < 0:
        raise OutOfRange("Nmax must be >= 0")
    series = [block_log_chi(v, m, Nmax) for v, m in blocks.blocks]
    if blocks.tail_mass > 0:
        series.insert(0, tail_log_chi(blocks.tail_mass, Nmax))
    lf = _log_factorials(Nmax)
    # start from the block with the widest support so the folds stay cheap
    support = [np.count_nonzero(np.isfinite(s)) for s in series]
    start = int(np.argmax(support))
    acc = series[start]
    for i, s in enumerate(series):
        if i != start:
            acc = binomial_fold(acc, s, lf)
    n_pos = (
        math.inf
        if blocks.tail_mass > 0
        else sum(m for v, m in blocks.blocks if v > 0)
    )
    return ChiSeries(_finish(acc, n_pos), Source.MULTIPLICITY)


BRUTE_FORCE_MAX_S = 24


def chi_bruteforce(dist: SchmidtDistribution, N: int) -> float:
    """N! * sum over index subsets p1 < ... < pN of prod lambda_p, enumerated explicitly."""
    if dist.S > BRUTE_FORCE_MAX_S:
        raise TooLarge(f"S = {dist.S} > {BRUTE_FORCE_MAX_S}")
    if N < 0:
        raise OutOfRange("N must be >= 0")
    if N == 0:
        return 1.0
    coeffs = dist.coefficients.tolist()
    if N > len(coeffs):
        return 0.0
    total = math.fsum(math.prod(c) for c in itertools.combinations(coeffs, N))
    return float(math.factorial(N) * total)


def chi_series_bruteforce(dist: SchmidtDistribution, Nmax: int) -> ChiSeries:
    vals = np.array([chi_bruteforce(dist, N) for N in range(Nmax + 1)])
    with np.errstate(divide="ignore"):
        return ChiSeries(np.log(vals), Source.BRUTE_FORCE)


def chi_series(dist: SchmidtDistribution, Nmax: int) -> ChiSeries:
    """Default engine."""
    return chi_series_esp(dist, Nmax)


# scalar consequences ------------------------------------------------------------


def ratio_series(series: ChiSeries) -> np.ndarray:
    """Entry N is chi_{N+1}/chi_N; NaN marks 0/0."""
    lc = series.log_chi
    num, den = lc[1:], lc[:-1]
    out = np.full(num.size, np.nan)
    den_ok = np.isfinite(den)
    num_zero = np.isneginf(num)
    out[den_ok & num_zero] = 0.0
    both = den_ok & ~num_zero
    out[both] = np.exp(num[both] - den[both])
    return out


def deficit_series(series: ChiSeries) -> np.ndarray:
    """1 - chi_{N+1}/chi_N without cancellation when the ratio is close to 1."""
    lc = series.log_chi
    num, den = lc[1:], lc[:-1]
    out = np.full(num.size, np.nan)
    den_ok = np.isfinite(den)
    num_zero = np.isneginf(num)
    out[den_ok & num_zero] = 1.0
    both = den_ok & ~num_zero
    out[both] = -np.expm1(num[both] - den[both])
    return out


def commutator_expectation(ratio: float) -> float:
    """<N|[c, c^dagger]|N> = 2 chi_{N+1}/chi_N - 1."""
    if not (-1e-12 <= ratio <= 1.0 + 1e-12):
        raise OutOfRange(f"ratio {ratio!r} outside [0, 1]")
    return 2.0 * ratio - 1.0


def epsilon_norm(series: ChiSeries, N: int) -> float:
    """Squared norm of the component of c|N> orthogonal to |N-1>."""
    if not (1 <= N <= series.Nmax - 1):
        raise OutOfRange(f"N must lie in [1, {series.Nmax - 1}]")
    lc = series.log_chi
    if np.isneginf(lc[N - 1]):
        raise Undefined(f"chi_{N - 1} = 0")
    if np.isneginf(lc[N]):
        raise Undefined(f"chi_{N} = 0: the {N}-coboson state does not exist")
    r_down = math.exp(lc[N] - lc[N - 1])
    r_up = 0.0 if np.isneginf(lc[N + 1]) else math.exp(lc[N + 1] - lc[N])
    val = 1.0 - N * r_down + (N - 1) * r_up
    if val < 0 and val >= -1e-12:
        val = 0.0
    return val
