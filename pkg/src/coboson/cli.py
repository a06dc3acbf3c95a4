"""Command-line front end: single evaluations, sweeps, figure grids, self-checks.

Exit codes: 0 ok, 1 bad arguments, 2 infeasible fixed parameters, 3 I/O
failure, 4 internal consistency failure (a broken hierarchy or a failed
verification property).
"""

from __future__ import annotations

import argparse
import csv
import enum
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import bounds as bnd
from .chi import (
    ChiSeries,
    MultiplicityBlocks,
    chi_multiplicity,
    chi_series_bruteforce,
    chi_series_esp,
    chi_series_newton_girard,
    deficit_series,
    power_sums_exact,
)
from .errors import CobosonError, HierarchyViolation, InfeasiblePair, NotApplicable, OutOfRange
from .extremal import (
    expand,
    gamma_peak,
    gamma_uniform,
    maximizing_distribution,
    max_threshold,
    minimizing_distribution,
)
from .schmidt import (
    SchmidtDistribution,
    feasible,
    lambda1_min,
    load_distribution,
    p_max,
    p_min,
    random_distribution,
    require_feasible,
    summarize,
)

EXIT_OK, EXIT_ARGS, EXIT_INFEASIBLE, EXIT_IO, EXIT_INTERNAL = 0, 1, 2, 3, 4
OUTPUT_DIR_ENV = "COBOSON_OUTPUT_DIR"


class Mode(str, enum.Enum):
    CHI = "chi"
    BOUNDS = "bounds"
    SWEEP_LAMBDA1 = "sweep_lambda1"
    SWEEP_P = "sweep_P"
    SWEEP_N = "sweep_N"
    VERIFY = "verify"
    FIGURE = "figure"


FIGURES = ("fig1", "fig3", "fig4", "fig5")


@dataclass(frozen=True)
class SweepConfig:
    mode: Mode
    P: float | None = None
    lambda1: float | None = None
    N: int | None = None
    range: tuple[float, float, int] | None = None
    figure_id: str | None = None
    output: str | None = None
    format: str = "csv"
    seed: int = 0
    jobs: int = 1
    dist_path: str | None = None

    def __post_init__(self):
        if self.format not in ("csv", "json"):
            raise OutOfRange(f"unknown format {self.format!r}")
        if self.jobs < 1:
            raise OutOfRange("jobs must be >= 1")
        if self.range is not None:
            a, b, steps = self.range
            if not a < b or steps < 2:
                raise OutOfRange("range needs start < stop and steps >= 2")
        if self.mode is Mode.FIGURE and self.figure_id not in FIGURES:
            raise OutOfRange(f"figure must be one of {FIGURES}")


# rows ---------------------------------------------------------------------------

ROW_HEADER = (
    ["index", "P", "lambda1", "N", "skipped"]
    + [f"chi_{n}" for n in bnd.CHAIN_NAMES]
    + [f"ratio_{n}" for n in bnd.CHAIN_NAMES]
    + [f"deficit_{n}" for n in bnd.CHAIN_NAMES]
    + ["smooth_lower", "smooth_upper", "smooth_ratio_lower", "smooth_ratio_upper", "validity"]
)
DIST_COLUMNS = ["dist_chi", "dist_ratio"]


def _smooth_ratio(fn: Callable[[float, float, int], float], P: float, lam: float, N: int) -> float:
    try:
        here, nxt = fn(P, lam, N), fn(P, lam, N + 1)
    except NotApplicable:
        return math.nan
    r = bnd.log_ratio(nxt, here)
    return math.nan if math.isnan(r) else (0.0 if r == -math.inf else math.exp(r))


def grid_row(task: tuple[int, float, float, int]) -> list:
    """One sweep row; infeasible points come back flagged with empty values."""
    idx, P, lam, N = task
    blank = [None] * (len(ROW_HEADER) - 5)
    if not (0 < P <= 1 and 0 < lam <= 1) or not feasible(P, lam):
        return [idx, P, lam, N, 1] + blank
    rep = bnd.bounds_report(P, lam, N)
    return (
        [idx, rep.P, rep.lambda1, N, 0]
        + list(rep.chain)
        + list(rep.ratio_chain)
        + list(rep.deficit_chain)
        + [
            rep.smooth_lower,
            rep.smooth_upper,
            _smooth_ratio(bnd.log_chi_min_smooth, rep.P, rep.lambda1, N),
            _smooth_ratio(bnd.log_chi_max_smooth, rep.P, rep.lambda1, N),
            rep.validity,
        ]
    )


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def _json_cell(v):
    if isinstance(v, float) and (math.isnan(v) or math.isinf(v)):
        return None
    return v


def render_rows(header: Sequence[str], rows: Sequence[Sequence], fmt: str, meta: dict) -> str:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(v) for v in r])
        return buf.getvalue()
    body = {"meta": meta, "rows": [{k: _json_cell(v) for k, v in zip(header, r)} for r in rows]}
    return json.dumps(body, indent=1) + "\n"


def compute_rows(tasks: list[tuple], jobs: int) -> list[list]:
    """Evaluate grid points; output order is the task order whatever ``jobs`` is."""
    if jobs <= 1 or len(tasks) < 2:
        return [grid_row(t) for t in tasks]
    chunk = max(1, len(tasks) // (4 * jobs))
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(grid_row, tasks, chunksize=chunk))


def _grid(cfg: SweepConfig) -> list[tuple[int, float, float, int]]:
    if cfg.mode is Mode.SWEEP_N:
        if cfg.P is None or cfg.lambda1 is None:
            raise OutOfRange("sweep over N needs --P and --lambda1")
        a, b, steps = cfg.range if cfg.range else (1, cfg.N or 10, None)
        Ns = _int_grid(a, b, steps)
        return [(i, cfg.P, cfg.lambda1, n) for i, n in enumerate(Ns)]
    if cfg.N is None:
        raise OutOfRange("--N is required")
    if cfg.mode is Mode.SWEEP_LAMBDA1:
        if cfg.P is None:
            raise OutOfRange("sweep over lambda1 needs --P")
        a, b, steps = cfg.range or (lambda1_min(cfg.P), math.sqrt(cfg.P), 200)
        return [(i, cfg.P, float(x), cfg.N) for i, x in enumerate(np.linspace(a, b, steps))]
    if cfg.mode is Mode.SWEEP_P:
        if cfg.lambda1 is None:
            raise OutOfRange("sweep over P needs --lambda1")
        a, b, steps = cfg.range or (p_min(cfg.lambda1), p_max(cfg.lambda1), 200)
        return [(i, float(x), cfg.lambda1, cfg.N) for i, x in enumerate(np.linspace(a, b, steps))]
    raise OutOfRange(f"{cfg.mode.value} is not a sweep")


def _int_grid(a: float, b: float, steps: int | None) -> list[int]:
    a, b = int(round(a)), int(round(b))
    if steps is None or steps >= b - a + 1:
        return list(range(a, b + 1))
    return sorted(set(int(round(x)) for x in np.linspace(a, b, steps)))


def _dist_columns(dist: SchmidtDistribution, rows: list[list]) -> list[list]:
    Nmax = max(r[3] for r in rows) + 1
    series = chi_series_esp(dist, Nmax)
    ratio = series.ratios()
    out = []
    for r in rows:
        N = r[3]
        out.append(r + [series[N], float(ratio[N])])
    return out


def run_sweep(cfg: SweepConfig) -> int:
    tasks = _grid(cfg)
    if cfg.mode is Mode.SWEEP_N:
        require_feasible(cfg.P, cfg.lambda1)
    rows = compute_rows(tasks, cfg.jobs)
    header = list(ROW_HEADER)
    if cfg.dist_path:
        rows = _dist_columns(load_distribution(cfg.dist_path), rows)
        header += DIST_COLUMNS
    meta = {"mode": cfg.mode.value, "P": cfg.P, "lambda1": cfg.lambda1, "N": cfg.N,
            "range": list(cfg.range) if cfg.range else None, "seed": cfg.seed}
    text = render_rows(header, rows, cfg.format, meta)
    write_output(text, cfg.output, f"sweep_{cfg.mode.value}.{cfg.format}")
    return EXIT_OK


# figure presets ------------------------------------------------------------------

FIG_P, FIG_LAMBDA1, FIG_STEPS = 0.2, 0.3, 200
FIG4_POINTS = (0.215, 0.3, 0.42)
FIG5_P = 0.001
FIG5_BLENDS = (0.9, 0.5, 0.1, 0.01)  # weight of lambda1_min in lambda1
FIG5_NMAX = 1000


def fig5_lambda1_values(P: float = FIG5_P) -> list[float]:
    lo, hi = lambda1_min(P), math.sqrt(P)
    return [w * lo + (1 - w) * hi for w in FIG5_BLENDS]


def figure_tasks(fig: str) -> dict[str, list[tuple]]:
    """File stem -> grid tasks for the bound-sweep figures."""
    out: dict[str, list[tuple]] = {}
    if fig in ("fig1", "fig3"):
        Ns = (4, 10) if fig == "fig1" else (3, 30)
        lams = np.linspace(lambda1_min(FIG_P), math.sqrt(FIG_P), FIG_STEPS)
        Ps = np.linspace(p_min(FIG_LAMBDA1), p_max(FIG_LAMBDA1), FIG_STEPS)
        for N in Ns:
            out[f"{fig}_N{N}_lambda1"] = [(i, FIG_P, float(x), N) for i, x in enumerate(lams)]
            out[f"{fig}_N{N}_P"] = [(i, float(x), FIG_LAMBDA1, N) for i, x in enumerate(Ps)]
    elif fig == "fig5":
        for k, lam in enumerate(fig5_lambda1_values()):
            out[f"fig5_lambda1_{lam:.4f}"] = [
                (i, FIG5_P, lam, N) for i, N in enumerate(range(1, FIG5_NMAX + 1))
            ]
    return out


def fig4_rows() -> tuple[list[str], list[list]]:
    """Extremal spectra across the lambda1 interval at P = 0.2, with FIG4_POINTS appended."""
    header = ["lambda1", "family", "kind", "S", "L", "lambda2", "lambdaL", "lambdaS", "lambdaSigma"]
    grid = list(np.linspace(lambda1_min(FIG_P), math.sqrt(FIG_P), FIG_STEPS)) + list(FIG4_POINTS)
    rows = []
    for lam in grid:
        lam = float(lam)
        for family, build in (("min", minimizing_distribution), ("max", maximizing_distribution)):
            try:
                d = build(FIG_P, lam).to_dict()
            except CobosonError:
                rows.append([lam, family, "", "", "", "", "", "", ""])
                continue
            rows.append([lam, family, d["kind"], d["S"], d["L"], d["lambda2"], d["lambdaL"],
                         d["lambdaS"], d["lambdaSigma"]])
    return header, rows


def run_figure(fig: str, out_dir: str | None, fmt: str = "csv", jobs: int = 1) -> list[Path]:
    base = Path(out_dir or os.environ.get(OUTPUT_DIR_ENV) or ".")
    base.mkdir(parents=True, exist_ok=True)
    written = []
    if fig == "fig4":
        header, rows = fig4_rows()
        path = base / f"fig4_extremal.{fmt}"
        path.write_text(render_rows(header, rows, fmt, {"figure": fig, "P": FIG_P}))
        return [path]
    for stem, tasks in figure_tasks(fig).items():
        rows = compute_rows(tasks, jobs)
        path = base / f"{stem}.{fmt}"
        path.write_text(render_rows(ROW_HEADER, rows, fmt, {"figure": fig, "series": stem}))
        written.append(path)
    return written


# verification ---------------------------------------------------------------------

Engine = Callable[[SchmidtDistribution, int], ChiSeries]


@dataclass
class SuiteResult:
    passed: int = 0
    failed: int = 0
    worst: float = 0.0
    examples: list = field(default_factory=list)

    def record(self, ok: bool, deviation: float, detail=None) -> None:
        if ok:
            self.passed += 1
        else:
            self.failed += 1
            if len(self.examples) < 5:
                self.examples.append(detail)
        if math.isfinite(deviation):
            self.worst = max(self.worst, deviation)


def _rel(a: float, b: float) -> float:
    if a == b:
        return 0.0
    return abs(a - b) / max(abs(a), abs(b))


def _random_triple(rng: np.random.Generator, S: int) -> tuple[int, int, int]:
    j = sorted(rng.choice(np.arange(2, S + 1), size=3, replace=False).tolist())
    return j[0], j[1], j[2]


def run_verify(seed: int, cases: int, engine: Engine | None = None) -> tuple[int, dict]:
    """Randomized self-check of the engines, the hierarchy and the rearrangements."""
    if cases < 1:
        raise OutOfRange("cases must be >= 1")
    engine = engine or chi_series_esp
    rng = np.random.default_rng(seed)
    suites = {k: SuiteResult() for k in ("engines", "hierarchy", "monotonicity", "fixed_points")}

    for case in range(cases):
        S = 1 if case == 0 else int(rng.integers(1, 13))
        dist = random_distribution(S, int(rng.integers(2**31)))
        brute = chi_series_bruteforce(dist, S).chi
        others = (
            engine(dist, S).chi,
            chi_series_newton_girard(power_sums_exact(dist, S), S).chi,
            chi_multiplicity(MultiplicityBlocks.from_distribution(dist), S).chi,
        )
        dev = max(_rel(a, b) for c in others for a, b in zip(c, brute))
        suites["engines"].record(dev < 1e-9, dev, {"case": case, "S": S})

        # the distribution's own chi must sit inside its (P, lambda1) bounds
        P, lam = dist.purity, dist.lambda1
        worst = 0.0
        ok = True
        for N in range(S + 1):
            try:
                rep = bnd.bounds_report(P, lam, N)
            except HierarchyViolation:
                ok = False
                break
            lo, hi = rep.chain[2], rep.chain[3]
            c = brute[N]
            slack = 1e-9 * max(hi, 1e-300)
            worst = max(worst, (lo - c) / max(c, 1e-300), (c - hi) / max(c, 1e-300))
            ok &= lo - slack <= c <= hi + slack
        suites["hierarchy"].record(ok, max(worst, 0.0), {"case": case, "S": S})

        if S >= 4:
            j = _random_triple(rng, S)
            base = engine(dist, S)
            dev_all = 0.0
            ok = True
            for op, sign in ((gamma_uniform, -1.0), (gamma_peak, 1.0)):
                after = engine(op(dist, *j), S)
                d_chi = sign * (after.chi - base.chi)
                r0, r1 = base.ratios(), after.ratios()
                mask = ~(np.isnan(r0) | np.isnan(r1))
                d_ratio = sign * (r1[mask] - r0[mask])
                lowest = min(float(d_chi.min()), float(d_ratio.min()) if d_ratio.size else 0.0)
                ok &= lowest >= -1e-12
                dev_all = max(dev_all, -lowest)
            suites["monotonicity"].record(ok, dev_all, {"case": case, "S": S, "triple": j})

        ok, dev = _fixed_point_case(rng)
        suites["fixed_points"].record(ok, dev, {"case": case})

    report = {
        "seed": seed,
        "cases": cases,
        "suites": {k: asdict(v) for k, v in suites.items()},
        "ok": all(v.failed == 0 for v in suites.values()),
    }
    return (EXIT_OK if report["ok"] else EXIT_INTERNAL), report


def _fixed_point_case(rng: np.random.Generator) -> tuple[bool, float]:
    """Extremal spectra are left unchanged by their rearrangement."""
    P = float(np.exp(rng.uniform(np.log(0.02), np.log(0.9))))
    lo, hi = lambda1_min(P), math.sqrt(P)
    lam = float(lo + rng.uniform(0.02, 0.98) * (hi - lo))
    dev = 0.0
    spec = minimizing_distribution(P, lam)
    if spec.S >= 4 and spec.S <= 5000:
        dist = expand(spec)
        j = _random_triple(rng, int(spec.S))
        dev = max(dev, float(np.max(np.abs(gamma_uniform(dist, *j).coefficients - dist.coefficients))))
    L = maximizing_distribution(P, lam).L
    S = max(int(math.floor(max_threshold(P, lam, L))) + 1, L + 1) + int(rng.integers(3, 50))
    try:
        dist = expand(maximizing_distribution(P, lam, S))
    except CobosonError:
        return dev < 1e-12, dev
    if dist.S >= 4:
        j = _random_triple(rng, dist.S)
        dev = max(dev, float(np.max(np.abs(gamma_peak(dist, *j).coefficients - dist.coefficients))))
    return dev < 1e-12, dev


# plumbing -------------------------------------------------------------------------


def write_output(text: str, out: str | None, default_name: str) -> None:
    if out == "-" or (out is None and not os.environ.get(OUTPUT_DIR_ENV)):
        sys.stdout.write(text)
        return
    path = Path(out) if out else Path(os.environ[OUTPUT_DIR_ENV]) / default_name
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def parse_range(text: str) -> tuple[float, float, int]:
    parts = text.split(":")
    if len(parts) not in (2, 3):
        raise argparse.ArgumentTypeError("expected a:b or a:b:steps")
    try:
        a, b = float(parts[0]), float(parts[1])
        steps = int(parts[2]) if len(parts) == 3 else int(round(b - a)) + 1
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc
    return a, b, steps


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ARGS, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="coboson", description="Normalization factors and bounds for two-fermion composites.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, params=True):
        if params:
            sp.add_argument("--P", type=float)
            sp.add_argument("--lambda1", type=float)
            sp.add_argument("--N", type=int)
        sp.add_argument("--out", help="output path ('-' for stdout)")
        sp.add_argument("--format", choices=("csv", "json"), default="csv")

    c = sub.add_parser("chi", help="chi_N and ratios of a distribution")
    c.add_argument("--dist", required=True, help="JSON array or one-column CSV")
    c.add_argument("--n-max", type=int, default=20)
    c.add_argument("--engine", choices=("esp", "newton-girard", "multiplicity", "brute"), default="esp")
    c.add_argument("--renormalize", action="store_true")
    common(c, params=False)

    b = sub.add_parser("bounds", help="the six-bound hierarchy at one point")
    common(b)

    s = sub.add_parser("sweep", help="bounds over a parameter grid")
    s.add_argument("--over", choices=("lambda1", "P", "N"), required=True)
    s.add_argument("--range", type=parse_range, help="a:b:steps")
    s.add_argument("--dist", help="also report chi of this distribution")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--jobs", type=int, default=1)
    common(s)

    f = sub.add_parser("figure", help="data behind a figure preset")
    f.add_argument("--figure", choices=FIGURES, required=True)
    f.add_argument("--out", help="output directory")
    f.add_argument("--format", choices=("csv", "json"), default="csv")
    f.add_argument("--jobs", type=int, default=1)

    v = sub.add_parser("verify", help="randomized self-check")
    v.add_argument("--seed", type=int, default=1)
    v.add_argument("--cases", type=int, default=100)
    v.add_argument("--out", help="report path ('-' for stdout)")
    return p


def _run_chi(args) -> int:
    dist = load_distribution(args.dist, renormalize=args.renormalize)
    n = args.n_max
    if n < 0:
        raise OutOfRange("--n-max must be >= 0")
    if args.engine == "esp":
        series = chi_series_esp(dist, n)
    elif args.engine == "newton-girard":
        series = chi_series_newton_girard(power_sums_exact(dist, n), n)
    elif args.engine == "multiplicity":
        series = chi_multiplicity(MultiplicityBlocks.from_distribution(dist), n)
    else:
        series = chi_series_bruteforce(dist, n)
    if args.format == "csv":
        text = series.to_csv()
    else:
        body = series.to_dict()
        body["deficit"] = [None if math.isnan(x) else float(x) for x in deficit_series(series)]
        body["summary"] = summarize(dist, kmax=3).to_dict()
        text = json.dumps(body) + "\n"
    write_output(text, args.out, f"chi.{args.format}")
    return EXIT_OK


def _run_bounds(args) -> int:
    if args.P is None or args.lambda1 is None or args.N is None:
        raise OutOfRange("bounds needs --P, --lambda1 and --N")
    rep = bnd.bounds_report(args.P, args.lambda1, args.N)
    text = rep.to_csv() if args.format == "csv" else rep.to_json() + "\n"
    write_output(text, args.out, f"bounds.{args.format}")
    return EXIT_OK


def _dispatch(args) -> int:
    if args.command == "chi":
        return _run_chi(args)
    if args.command == "bounds":
        return _run_bounds(args)
    if args.command == "sweep":
        mode = {"lambda1": Mode.SWEEP_LAMBDA1, "P": Mode.SWEEP_P, "N": Mode.SWEEP_N}[args.over]
        cfg = SweepConfig(mode, args.P, args.lambda1, args.N, args.range, None, args.out,
                          args.format, args.seed, args.jobs, args.dist)
        return run_sweep(cfg)
    if args.command == "figure":
        SweepConfig(Mode.FIGURE, figure_id=args.figure, format=args.format, jobs=args.jobs)
        for path in run_figure(args.figure, args.out, args.format, args.jobs):
            print(path)
        return EXIT_OK
    if args.command == "verify":
        code, report = run_verify(args.seed, args.cases)
        write_output(json.dumps(report, indent=1) + "\n", args.out, "verify.json")
        return code
    raise AssertionError(args.command)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except HierarchyViolation as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except InfeasiblePair as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (CobosonError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARGS


if __name__ == "__main__":
    sys.exit(main())
