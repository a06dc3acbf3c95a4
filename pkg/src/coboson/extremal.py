"""Distributions that extremize chi_N at fixed purity and/or largest coefficient.

Also hosts the two three-coefficient rearrangements used to prove extremality:
:func:`gamma_uniform` (makes a triple more uniform, never raises chi_N) and
:func:`gamma_peak` (makes it more peaked, never lowers chi_N).  Both keep the
sum and the sum of squares of the triple, hence P and the normalization.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import dataclass

import numpy as np

from .chi import ChiSeries, MultiplicityBlocks, chi_multiplicity
from .errors import (
    DegeneratePeaked,
    IndexOutOfRange,
    InfeasiblePair,
    OutOfRange,
    STooSmall,
    TooLarge,
    TouchesLambda1,
)
from .schmidt import (
    SNAP_TOL,
    TIE_TOL,
    SchmidtDistribution,
    lambda1_min,
    make_distribution,
    require_feasible,
    snap_ceil,
    snap_floor,
)

INFINITE = math.inf
DEGENERATE_TOL = 1e-12
SQRT_CLAMP = 1e-12
EPS = np.finfo(float).eps


class Kind(str, enum.Enum):
    MIN_PL1 = "MinPL1"
    MAX_PL1 = "MaxPL1"
    PEAKED_P = "PeakedP"
    UNIFORM_P = "UniformP"
    PEAKED_L1 = "PeakedL1"
    UNIFORM_L1 = "UniformL1"


@dataclass(frozen=True)
class ExtremalSpec:
    """Compact description of an extremal spectrum.

    Only the fields meaningful for ``kind`` are set.  ``S`` is ``INFINITE`` when
    the spectrum ends in infinitely many vanishing coefficients of total weight
    ``lambdaSigma``.
    """

    kind: Kind
    S: float
    lambda1: float
    L: int | None = None
    lambda2: float | None = None
    lambdaL: float | None = None
    lambdaS: float | None = None
    lambdaSigma: float = 0.0

    @property
    def is_infinite(self) -> bool:
        return math.isinf(self.S)

    def block_pairs(self) -> list[tuple[float, int]]:
        k = self.kind
        S = self.S
        if k is Kind.MIN_PL1:
            if S == 2:
                return [(self.lambda1, 1), (self.lambdaS, 1)]
            return [(self.lambda1, 1), (self.lambda2, int(S) - 2), (self.lambdaS, 1)]
        if k is Kind.MAX_PL1:
            pairs = [(self.lambda1, self.L - 1), (self.lambdaL, 1)]
            if not self.is_infinite:
                pairs.append((self.lambdaS, int(S) - self.L))
            return pairs
        if k is Kind.PEAKED_P:
            if self.is_infinite:
                return [(self.lambda1, 1)]
            return [(self.lambda1, 1), (self.lambdaS, int(S) - 1)]
        if k is Kind.PEAKED_L1:
            return [(self.lambda1, 1)]
        if k in (Kind.UNIFORM_P, Kind.UNIFORM_L1):
            return [(self.lambda1, self.L - 1), (self.lambdaL, 1)]
        raise AssertionError(k)

    def blocks(self) -> MultiplicityBlocks:
        tail = self.lambdaSigma if self.is_infinite else 0.0
        return MultiplicityBlocks(_merge_pairs(self.block_pairs()), tail_mass=tail)

    def chi_series(self, Nmax: int) -> ChiSeries:
        """chi of the spectrum, infinitesimal tail included symbolically."""
        return chi_multiplicity(self.blocks(), Nmax)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "S": "inf" if self.is_infinite else int(self.S),
            "L": self.L,
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "lambdaL": self.lambdaL,
            "lambdaS": self.lambdaS,
            "lambdaSigma": self.lambdaSigma,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _merge_pairs(pairs: list[tuple[float, int]]) -> tuple[tuple[float, int], ...]:
    pairs = sorted(((float(v), int(m)) for v, m in pairs if m > 0 and v > 0), reverse=True)
    out: list[list] = []
    for v, m in pairs:
        if out and out[-1][0] - v <= TIE_TOL:
            out[-1][1] += m
        else:
            out.append([v, m])
    return tuple((v, m) for v, m in out)


def _sqrt_clamped(x: float, what: str) -> float:
    if x < 0:
        if x < -SQRT_CLAMP:
            raise InfeasiblePair(f"negative argument {x:.3g} under square root ({what})")
        return 0.0
    return math.sqrt(x)


# extremal constructions ----------------------------------------------------


def min_mode_ratio(P: float, lambda1: float) -> float:
    """(1 - lambda1)^2 / (P - lambda1^2), snapped to an integer within its rounding error.

    P - lambda1^2 cancels as lambda1 nears sqrt(P), so the tolerance grows like P / gap.
    """
    gap = P - lambda1 * lambda1
    x = (1.0 - lambda1) ** 2 / gap
    r = round(x)
    if abs(x - r) <= (SNAP_TOL + 8 * EPS * P / gap) * max(1.0, x):
        return float(r)
    return x


def minimizing_distribution(P: float, lambda1: float) -> ExtremalSpec:
    """lambda1, then S-2 equal coefficients lambda2, then lambdaS <= lambda2."""
    P, lam = require_feasible(P, lambda1)
    gap = P - lam * lam
    if gap <= DEGENERATE_TOL or abs(lam - math.sqrt(P)) <= DEGENERATE_TOL:
        raise DegeneratePeaked(f"lambda1 = sqrt(P) = {lam}: use peaked_from_P")
    x = min_mode_ratio(P, lam)
    c = math.ceil(x)
    S = 1 + c
    if S == 2:
        return ExtremalSpec(Kind.MIN_PL1, 2, lam, lambda2=1.0 - lam, lambdaS=1.0 - lam)
    # (S-2)(lam(2 - S lam) + (S-1)P - 1) rewritten as (S-2)*gap*(ceil(x) - x);
    # an integer x leaves the root exactly zero
    R = _sqrt_clamped((S - 2) * gap * (c - x), "R")
    lam2 = (1.0 - lam) / (S - 1) + R / ((S - 2) * (S - 1))
    lamS = max((1.0 - lam - R) / (S - 1), 0.0)
    return ExtremalSpec(Kind.MIN_PL1, S, lam, lambda2=lam2, lambdaS=lamS)


def max_threshold(P: float, lambda1: float, L: int) -> float:
    """S must exceed this for the finite maximizing distribution to exist."""
    q = P - (L - 1) * lambda1 * lambda1
    return ((L - 1) * P + 1.0 - 2.0 * (L - 1) * lambda1) / q


def maximizing_distribution(P: float, lambda1: float, S: float = INFINITE) -> ExtremalSpec:
    """lambda1 repeated L-1 times, one lambdaL, then S-L equal small coefficients."""
    P, lam = require_feasible(P, lambda1)
    L = max(snap_ceil(P / (lam * lam)), 1)
    q = P - (L - 1) * lam * lam
    if q < -SQRT_CLAMP:
        raise InfeasiblePair("P < (L-1) lambda1^2")
    q = max(q, 0.0)
    head = 1.0 - (L - 1) * lam
    if math.isinf(S):
        lamL = min(math.sqrt(q), lam)
        sigma = head - lamL
        if sigma < -SQRT_CLAMP:
            raise InfeasiblePair(f"negative tail mass {sigma:.3g}")
        # at lambda1_min(P) the tail is empty; rounding in head - sqrt(q) must not invent one
        q_err = 4 * EPS * P
        sqrt_err = math.sqrt(q_err) if q < q_err else q_err / (2 * math.sqrt(q))
        sigma = 0.0 if sigma <= 8 * EPS * L + 2 * sqrt_err else sigma
        return ExtremalSpec(Kind.MAX_PL1, INFINITE, lam, L=L, lambdaL=lamL, lambdaSigma=sigma)
    S = int(S)
    if L == 1:
        raise STooSmall("lambda1 = sqrt(P) is only reached with infinitely many modes")
    if q <= DEGENERATE_TOL:
        raise STooSmall("no finite maximizing distribution when P = (L-1) lambda1^2")
    X = max_threshold(P, lam, L)
    if not (S > X + 1e-9 and S >= L + 1):
        raise STooSmall(f"S = {S} must exceed {X:.6g} (and L = {L})")
    # (S-L)(P(S+1-L) - 1 + (L-1) lam (2 - lam S)) rewritten as (S-L) q (S - X)
    Rp = _sqrt_clamped((S - L) * q * (S - X), "R'")
    lamL = (head + Rp) / (S + 1 - L)
    lamS = max(head / (S + 1 - L) - Rp / ((S - L) * (S + 1 - L)), 0.0)
    return ExtremalSpec(
        Kind.MAX_PL1, S, lam, L=L, lambdaL=lamL, lambdaS=lamS, lambdaSigma=(S - L) * lamS
    )


def _unit(x: float, name: str) -> float:
    if not (0 < x <= 1.0 + 1e-12):
        raise OutOfRange(f"{name} = {x!r} outside (0, 1]")
    return min(float(x), 1.0)


def peaked_from_P(P: float, S: float = INFINITE) -> ExtremalSpec:
    """Largest possible lambda1 at purity P, the rest spread evenly."""
    P = _unit(P, "P")
    if math.isinf(S):
        lam = math.sqrt(P)
        return ExtremalSpec(Kind.PEAKED_P, INFINITE, lam, lambdaSigma=1.0 - lam)
    S = int(S)
    if S < 1 or S * P < 1.0 - 1e-12:
        raise OutOfRange(f"S = {S} cannot reach purity {P}")
    if S == 1:
        return ExtremalSpec(Kind.PEAKED_P, 1, 1.0, lambdaS=None)
    lam = (1.0 + math.sqrt(max((S - 1) * (S * P - 1.0), 0.0))) / S
    lamS = (1.0 - lam) / (S - 1)
    return ExtremalSpec(Kind.PEAKED_P, S, lam, lambdaS=lamS, lambdaSigma=(S - 1) * lamS)


def uniform_from_P(P: float) -> ExtremalSpec:
    """ceil(1/P) coefficients, all but the last equal to lambda1_min(P)."""
    P = _unit(P, "P")
    L = snap_ceil(1.0 / P)
    lam = lambda1_min(P)
    last = max(1.0 - (L - 1) * lam, 0.0)
    return ExtremalSpec(Kind.UNIFORM_P, L, lam, L=L, lambdaL=last)


def peaked_from_lambda1(lambda1: float) -> ExtremalSpec:
    lam = _unit(lambda1, "lambda1")
    sigma = 1.0 - lam
    if sigma <= TIE_TOL:
        return ExtremalSpec(Kind.PEAKED_L1, 1, 1.0, lambdaSigma=0.0)
    return ExtremalSpec(Kind.PEAKED_L1, INFINITE, lam, lambdaSigma=sigma)


def uniform_from_lambda1(lambda1: float) -> ExtremalSpec:
    """floor(1/lambda1) copies of lambda1 plus the remainder."""
    lam = _unit(lambda1, "lambda1")
    f = snap_floor(1.0 / lam)
    last = max(1.0 - f * lam, 0.0)
    if last <= TIE_TOL:
        return ExtremalSpec(Kind.UNIFORM_L1, f, lam, L=f + 1, lambdaL=0.0)
    return ExtremalSpec(Kind.UNIFORM_L1, f + 1, lam, L=f + 1, lambdaL=last)


def expand(spec: ExtremalSpec, s_cut: int | None = None) -> SchmidtDistribution:
    """Materialize a spec as a finite distribution.

    Infinite specs need ``s_cut``: maximizing and peaked-in-P specs are replaced
    by their exact finite-S counterparts at S = s_cut (purity preserved); a
    peaked-in-lambda1 spec gets an even tail of s_cut - 1 coefficients.
    """
    if spec.is_infinite and spec.lambdaSigma > 0:
        if s_cut is None:
            raise TooLarge("infinite spec: pass s_cut")
        if spec.kind is Kind.MAX_PL1:
            P = (spec.L - 1) * spec.lambda1**2 + spec.lambdaL**2
            spec = maximizing_distribution(P, spec.lambda1, s_cut)
        elif spec.kind is Kind.PEAKED_P:
            spec = peaked_from_P(spec.lambda1**2, s_cut)
        elif spec.kind is Kind.PEAKED_L1:
            n = int(s_cut) - 1
            if n < 1:
                raise STooSmall("s_cut must be >= 2")
            return SchmidtDistribution.from_blocks(
                [spec.lambda1, spec.lambdaSigma / n], [1, n]
            )
        else:
            raise AssertionError(spec.kind)
    vals, mults = zip(*_merge_pairs(spec.block_pairs()))
    return SchmidtDistribution.from_blocks(vals, mults)


def expanded_csv(spec: ExtremalSpec, s_cut: int | None = None) -> str:
    """Coefficient table of :func:`expand`, one row per distinct value."""
    dist = expand(spec, s_cut)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["coefficient", "multiplicity", "kind", "s_cut"])
    cut = "" if s_cut is None or not spec.is_infinite else int(s_cut)
    for v, m in zip(dist.values.tolist(), dist.multiplicities.tolist()):
        w.writerow([repr(v), m, spec.kind.value, cut])
    return buf.getvalue()


# three-coefficient operations ------------------------------------------------


def _triple(dist: SchmidtDistribution, j1: int, j2: int, j3: int) -> np.ndarray:
    S = dist.S
    if j1 == 1:
        raise TouchesLambda1("the operations never act on lambda1")
    if not (2 <= j1 < j2 < j3 <= S):
        raise IndexOutOfRange(f"need 2 <= j1 < j2 < j3 <= {S}, got ({j1}, {j2}, {j3})")
    return dist.coefficients


def _replace(coeffs: np.ndarray, idx: tuple[int, int, int], new: tuple[float, float, float]):
    out = coeffs.copy()
    for j, v in zip(idx, new):
        out[j - 1] = max(v, 0.0)
    return make_distribution(out)


def gamma_uniform(dist: SchmidtDistribution, j1: int, j2: int, j3: int) -> SchmidtDistribution:
    """Make the triple at 1-based positions (j1, j2, j3) as uniform as K1, K2 allow."""
    coeffs = _triple(dist, j1, j2, j3)
    a, b, c = (float(coeffs[j - 1]) for j in (j1, j2, j3))
    K1 = a + b + c
    # 6 K2 - 2 K1^2 as a sum of squared differences, exact zero for equal entries
    spread = 2.0 * ((a - b) ** 2 + (a - c) ** 2 + (b - c) ** 2)
    two_k2_minus = (a * a + b * b + c * c) - 2.0 * (a * b + a * c + b * c)  # 2K2 - K1^2
    if two_k2_minus <= 0:
        s = math.sqrt(spread)
        new = ((2 * K1 + s) / 6, (2 * K1 + s) / 6, (K1 - s) / 3)
    else:
        s = math.sqrt(two_k2_minus)
        new = ((K1 + s) / 2, (K1 - s) / 2, 0.0)
    return _replace(coeffs, (j1, j2, j3), new)


def gamma_peak(
    dist: SchmidtDistribution, j1: int, j2: int, j3: int, lambda1_cap: float | None = None
) -> SchmidtDistribution:
    """Make the triple as peaked as K1, K2 allow without exceeding lambda1."""
    coeffs = _triple(dist, j1, j2, j3)
    t = dist.lambda1 if lambda1_cap is None else float(lambda1_cap)
    if abs(t - dist.lambda1) > TIE_TOL:
        raise OutOfRange("lambda1_cap must equal the current lambda1")
    a, b, c = (float(coeffs[j - 1]) for j in (j1, j2, j3))
    K1 = a + b + c
    spread = 2.0 * ((a - b) ** 2 + (a - c) ** 2 + (b - c) ** 2)
    s = math.sqrt(spread)
    if K1 + s <= 3.0 * t:
        new = ((K1 + s) / 3, (2 * K1 - s) / 6, (2 * K1 - s) / 6)
    else:
        d = a - t
        # 2(K2 - t^2) - (K1 - t)^2 expanded around a = t
        disc = (b - c) ** 2 + d * (d + 2 * (t - b) + 2 * (t - c))
        r = math.sqrt(max(disc, 0.0))
        rest = d + b + c
        new = (t, (rest + r) / 2, (rest - r) / 2)
    return _replace(coeffs, (j1, j2, j3), new)
