"""Schmidt-coefficient distributions, their summaries and the feasible (P, lambda1) region.

A distribution is stored run-length encoded: strictly decreasing ``values`` with
integer ``multiplicities``.  Extremal distributions have a handful of distinct
coefficients repeated up to millions of times, and every downstream engine can
exploit the runs.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    EmptyInput,
    InfeasiblePair,
    NegativeCoefficient,
    NotNormalized,
    OutOfRange,
    SamplingExhausted,
    TooLarge,
)

NORM_TOL = 1e-12
FEAS_TOL = 1e-12
NEG_TOL = 1e-15
TIE_TOL = 1e-15
SNAP_TOL = 1e-14  # relative; a few ulps of representation error
MAX_MATERIALIZE = 10_000_000


def snap_ceil(x: float) -> int:
    """Ceiling that does not jump when ``x`` is an integer up to representation error."""
    r = round(x)
    if abs(x - r) <= SNAP_TOL * max(1.0, abs(x)):
        return int(r)
    return math.ceil(x)


def snap_floor(x: float) -> int:
    r = round(x)
    if abs(x - r) <= SNAP_TOL * max(1.0, abs(x)):
        return int(r)
    return math.floor(x)


def _compress(sorted_desc: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Merge neighbouring coefficients closer than TIE_TOL into (value, multiplicity) runs."""
    if sorted_desc.size == 1:
        return sorted_desc.copy(), np.ones(1, dtype=np.int64)
    breaks = np.flatnonzero(-np.diff(sorted_desc) > TIE_TOL) + 1
    starts = np.concatenate(([0], breaks))
    counts = np.diff(np.concatenate((starts, [sorted_desc.size])))
    sums = np.add.reduceat(sorted_desc, starts)
    values = sums / counts
    # a run of exact ties must keep its exact value
    exact = sorted_desc[starts] == sorted_desc[starts + counts - 1]
    values[exact] = sorted_desc[starts[exact]]
    return values, counts.astype(np.int64)


@dataclass(frozen=True, eq=False)
class SchmidtDistribution:
    """Normalized, non-increasing Schmidt spectrum.

    Build instances with :func:`make_distribution` or :meth:`from_blocks`;
    the constructor only checks invariants.
    """

    values: np.ndarray
    multiplicities: np.ndarray
    _flat: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        m = np.asarray(self.multiplicities, dtype=np.int64)
        if v.ndim != 1 or v.size == 0 or v.shape != m.shape:
            raise EmptyInput("distribution needs at least one coefficient")
        if np.any(m < 1):
            raise ValueError("multiplicities must be >= 1")
        if np.any(v < 0):
            raise NegativeCoefficient("coefficients must be non-negative")
        if np.any(np.diff(v) >= 0):
            raise ValueError("values must be strictly decreasing")
        total = math.fsum((v * m).tolist())
        if abs(total - 1.0) > NORM_TOL:
            raise NotNormalized(f"coefficients sum to {total!r}, not 1")
        v.setflags(write=False)
        m.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "multiplicities", m)

    @classmethod
    def from_blocks(
        cls,
        values: Sequence[float],
        multiplicities: Sequence[int],
        renormalize: bool = False,
    ) -> "SchmidtDistribution":
        """Build from (value, multiplicity) pairs in any order; equal values are merged."""
        v = np.asarray(values, dtype=float)
        m = np.asarray(multiplicities, dtype=np.int64)
        if v.size == 0:
            raise EmptyInput("no blocks given")
        if np.any(v < -NEG_TOL):
            raise NegativeCoefficient(f"negative coefficient {v.min()!r}")
        v = np.clip(v, 0.0, None)
        keep = m > 0
        v, m = v[keep], m[keep]
        if renormalize:
            total = math.fsum((v * m).tolist())
            if total <= 0:
                raise NotNormalized("coefficients sum to zero")
            v = v / total
        order = np.argsort(-v, kind="stable")
        v, m = v[order], m[order]
        # merge ties between blocks
        out_v: list[float] = []
        out_m: list[int] = []
        for val, mult in zip(v.tolist(), m.tolist()):
            if out_v and out_v[-1] - val <= TIE_TOL:
                tot = out_m[-1] + mult
                if out_v[-1] != val:
                    out_v[-1] = (out_v[-1] * out_m[-1] + val * mult) / tot
                out_m[-1] = tot
            else:
                out_v.append(val)
                out_m.append(mult)
        return cls(np.array(out_v), np.array(out_m, dtype=np.int64))

    @property
    def S(self) -> int:
        """Number of coefficients, zeros included."""
        return int(self.multiplicities.sum())

    @property
    def n_positive(self) -> int:
        return int(self.multiplicities[self.values > 0].sum())

    @property
    def lambda1(self) -> float:
        return float(self.values[0])

    @property
    def coefficients(self) -> np.ndarray:
        """Flat non-increasing coefficient vector (materialized on first use)."""
        if not self._flat:
            if self.S > MAX_MATERIALIZE:
                raise TooLarge(f"refusing to materialize {self.S} coefficients")
            flat = np.repeat(self.values, self.multiplicities)
            flat.setflags(write=False)
            self._flat.append(flat)
        return self._flat[0]

    def power_sum(self, k: int) -> float:
        return math.fsum((self.multiplicities * self.values**k).tolist())

    @property
    def purity(self) -> float:
        return self.power_sum(2)

    def __len__(self) -> int:
        return self.S

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SchmidtDistribution):
            return NotImplemented
        return np.array_equal(self.values, other.values) and np.array_equal(
            self.multiplicities, other.multiplicities
        )

    def __hash__(self) -> int:
        return hash((self.values.tobytes(), self.multiplicities.tobytes()))

    def to_list(self) -> list[float]:
        return self.coefficients.tolist()


def make_distribution(raw: Iterable[float], renormalize: bool = False) -> SchmidtDistribution:
    """Validate, clamp tiny negatives, optionally rescale, and sort a raw spectrum."""
    arr = np.asarray(list(raw) if not isinstance(raw, np.ndarray) else raw, dtype=float).ravel()
    if arr.size == 0:
        raise EmptyInput("empty coefficient list")
    if not np.all(np.isfinite(arr)):
        raise OutOfRange("coefficients must be finite")
    if np.any(arr < -NEG_TOL):
        raise NegativeCoefficient(f"negative coefficient {arr.min()!r}")
    arr = np.clip(arr, 0.0, None)
    total = math.fsum(arr.tolist())
    if renormalize:
        if total <= 0:
            raise NotNormalized("coefficients sum to zero")
        arr = arr / total
    elif abs(total - 1.0) > NORM_TOL:
        raise NotNormalized(f"coefficients sum to {total!r}, not 1")
    arr = -np.sort(-arr, kind="stable")
    values, mults = _compress(arr)
    return SchmidtDistribution(values, mults)


@dataclass(frozen=True)
class DistributionSummary:
    lambda1: float
    purity: float
    power_sums: tuple[float, ...]  # M(1), M(2), ..., M(kmax)
    schmidt_number: float
    geometric_entanglement: float
    near_boundary: bool = False

    def M(self, k: int) -> float:
        return self.power_sums[k - 1]

    def to_dict(self) -> dict:
        return {
            "lambda1": self.lambda1,
            "purity": self.purity,
            "power_sums": list(self.power_sums),
            "schmidt_number": self.schmidt_number,
            "geometric_entanglement": self.geometric_entanglement,
            "near_boundary": self.near_boundary,
        }


def summarize(dist: SchmidtDistribution, kmax: int = 2) -> DistributionSummary:
    if kmax < 2:
        raise OutOfRange("kmax must be >= 2")
    sums = tuple(dist.power_sum(k) for k in range(1, kmax + 1))
    P = sums[1]
    lam1 = dist.lambda1
    return DistributionSummary(
        lambda1=lam1,
        purity=P,
        power_sums=sums,
        schmidt_number=1.0 / P,
        geometric_entanglement=1.0 - lam1,
        near_boundary=_near_boundary(P, lam1),
    )


def _near_boundary(P: float, lam1: float, tol: float = 1e-9) -> bool:
    P = min(P, 1.0)
    return abs(lam1 - lambda1_min(P)) <= tol or abs(lam1 - math.sqrt(P)) <= tol


def _check_unit(x: float, name: str) -> float:
    if not (x > 0 and x <= 1.0 + FEAS_TOL):
        raise OutOfRange(f"{name}={x!r} outside (0, 1]")
    return min(float(x), 1.0)


def lambda1_min(P: float) -> float:
    """Smallest largest-coefficient compatible with purity P."""
    P = _check_unit(P, "P")
    c = snap_ceil(1.0 / P)
    if c <= 1:
        return 1.0
    # the root is sqrt-sensitive at P = 1/c; an excess within rounding of P*c is zero
    excess = P * c - 1.0
    if excess <= 4 * np.finfo(float).eps * P * c:
        excess = 0.0
    root = math.sqrt(excess / (c - 1))
    return (root + 1.0) / c


def lambda1_max(P: float) -> float:
    P = _check_unit(P, "P")
    return math.sqrt(P)


def p_min(lambda1: float) -> float:
    lambda1 = _check_unit(lambda1, "lambda1")
    return lambda1 * lambda1


def p_max(lambda1: float) -> float:
    lambda1 = _check_unit(lambda1, "lambda1")
    f = snap_floor(1.0 / lambda1)
    rest = max(1.0 - lambda1 * f, 0.0)
    return lambda1 * lambda1 * f + rest * rest


def feasible(P: float, lambda1: float) -> bool:
    try:
        P = _check_unit(P, "P")
        if not (lambda1 > 0):
            return False
        return lambda1_min(P) - FEAS_TOL <= lambda1 <= math.sqrt(P) + FEAS_TOL
    except (OutOfRange, TypeError):
        return False


def require_feasible(P: float, lambda1: float) -> tuple[float, float]:
    """Return (P, lambda1) clipped onto the region, or raise InfeasiblePair."""
    if not feasible(P, lambda1):
        raise InfeasiblePair(f"(P={P!r}, lambda1={lambda1!r}) is not attainable")
    P = min(float(P), 1.0)
    lam = min(max(float(lambda1), lambda1_min(P)), math.sqrt(P))
    return P, lam


def random_distribution(S: int, seed: int) -> SchmidtDistribution:
    """Uniform sample from the (S-1)-simplex, sorted."""
    if S < 1:
        raise OutOfRange("S must be >= 1")
    if S == 1:
        return make_distribution([1.0])
    rng = np.random.default_rng(seed)
    return make_distribution(rng.dirichlet(np.ones(S)), renormalize=True)


def random_distribution_constrained(
    P: float, lambda1: float, S: int, seed: int, attempts: int = 1000
) -> SchmidtDistribution:
    """Random S-coefficient spectrum whose purity and largest coefficient are (P, lambda1).

    lambda1 is pinned; the remaining S-1 coefficients are a Dirichlet draw of mass
    1-lambda1, blended with a random fraction of the most dispersed admissible
    tail, whose spread about its mean is then rescaled to hit the purity exactly.
    Draws leaving [0, lambda1] are rejected.
    """
    P, lam = require_feasible(P, lambda1)
    if S < 1:
        raise OutOfRange("S must be >= 1")
    mass = 1.0 - lam
    n = S - 1
    if mass <= NORM_TOL:
        if P < 1.0 - FEAS_TOL:
            raise InfeasiblePair("lambda1 = 1 forces P = 1")
        return make_distribution([1.0])
    if n < 1:
        raise InfeasiblePair("S = 1 cannot host lambda1 < 1")
    tail_sq = P - lam * lam
    mean = mass / n
    excess = tail_sq - mass * mean
    if excess < -1e-12 or n * lam < mass - 1e-12:
        raise InfeasiblePair(f"S={S} too small to host (P={P}, lambda1={lam})")
    excess = max(excess, 0.0)

    # most dispersed tail inside the box: as many lam as fit, then the remainder
    k = min(int(mass // lam), n)
    widest = np.zeros(n)
    widest[:k] = lam
    if k < n:
        widest[k] = mass - k * lam

    rng = np.random.default_rng(seed)
    for _ in range(attempts):
        if excess == 0.0:
            tail = np.full(n, mean)
        else:
            conc = math.exp(rng.uniform(math.log(0.02), math.log(5.0)))
            u = rng.dirichlet(np.full(n, conc)) * mass
            # blending toward a permuted widest tail keeps the rescale inside the box
            w = rng.uniform() ** 2
            u = w * rng.permutation(widest) + (1.0 - w) * u
            dev = u - mean
            var = float(dev @ dev)
            if var == 0.0:
                continue
            tail = mean + math.sqrt(excess / var) * dev
        if tail.min() < -NEG_TOL or tail.max() > lam:
            continue
        tail = np.clip(tail, 0.0, lam)
        try:
            dist = make_distribution(np.concatenate(([lam], tail)))
        except (NotNormalized, NegativeCoefficient):
            continue
        if abs(dist.purity - P) <= 1e-9 and abs(dist.lambda1 - lam) <= 1e-9:
            return dist
    raise SamplingExhausted(f"no sample after {attempts} attempts")


# serialization -------------------------------------------------------------


def load_distribution(path: str | Path, renormalize: bool = False) -> SchmidtDistribution:
    """Read a JSON array or a single-column CSV (optional header) of coefficients."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".json" or text.lstrip().startswith("["):
        raw = json.loads(text)
        if isinstance(raw, dict):
            raw = raw["coefficients"]
        return make_distribution([float(x) for x in raw], renormalize=renormalize)
    vals: list[float] = []
    for row in csv.reader(text.splitlines()):
        if not row or not row[0].strip():
            continue
        try:
            vals.append(float(row[0]))
        except ValueError:
            if vals:
                raise
    return make_distribution(vals, renormalize=renormalize)


def dump_distribution_json(dist: SchmidtDistribution) -> str:
    return json.dumps([float(x) for x in dist.to_list()])


def dump_distribution_csv(dist: SchmidtDistribution) -> str:
    lines = ["coefficient"] + [repr(float(x)) for x in dist.to_list()]
    return "\n".join(lines) + "\n"
