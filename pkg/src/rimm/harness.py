"""Experiment runner: scenario grids, estimator-vs-baseline sweeps, demos.

A grid spec (flat key=value text, comma-separated lists) expands into cells;
every (cell, repetition) pair generates one dataset from its own derived
seed, scores the requested estimator variants on it, and emits one CSV row
per variant.  Rows are reproducible in isolation from (spec, cell index,
repetition index).  Failure demos for the two tempting-but-broken reductions
(stacking, plain group-combining) are included as baselines, and the
combine-cannot-densify experiment is available as its own report.
"""

from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ._rng import derive_rng, derive_seedseq
from .completion import GVector, g_norm
from .dataset import IncompleteMatrix, build_presence_index
from .errors import ConfigError, RimmError
from .estimator import (
    DistClass,
    EstimatorConfig,
    coordinate_median,
    estimate_mean,
    hash_combine,
    stacking_transform,
)
from .generation import (
    AdversaryStrategy,
    DistributionSpec,
    PresencePlan,
    corrupt_and_conceal,
    generate,
)
from .robust_core import RobustMeanParams, robust_mean_complete

__all__ = [
    "ExperimentSpec",
    "Cell",
    "ResultRow",
    "RESULT_HEADER",
    "run_cell",
    "run_experiment",
    "write_result_csv",
    "parse_experiment_spec",
    "hashing_failure_demo",
    "HashDemoReport",
    "adaptive_presence_demo",
]

VARIANTS = (
    "full",
    "median-only",
    "present-entry-mean",
    "stacking+filter",
    "hash+filter",
)

RESULT_HEADER = (
    "d,N,gamma,epsilon,class,strategy,variant,rep,seed,"
    "l2_error,g_error,iters,time_ms,status"
)


@dataclass(frozen=True)
class Cell:
    d: int
    n: int
    gamma: float
    epsilon: float
    dist: str
    strategy: str


@dataclass(frozen=True)
class ExperimentSpec:
    """Scenario grid; list-valued axes are crossed into cells."""

    d: tuple[int, ...] = (10,)
    n: tuple[int, ...] = (1000,)
    gamma: tuple[float, ...] = (0.2,)
    epsilon: tuple[float, ...] = (0.01,)
    dist: tuple[str, ...] = ("p1:1.0",)
    strategy: tuple[str, ...] = ("far-outliers:1000",)
    variants: tuple[str, ...] = ("full", "median-only", "present-entry-mean")
    reps: int = 5
    seed: int = 0
    delta: float = 0.25
    iterations: int | None = None

    def cells(self) -> list[Cell]:
        out = []
        for d in self.d:
            for n in self.n:
                for g in self.gamma:
                    for e in self.epsilon:
                        for dist in self.dist:
                            for strat in self.strategy:
                                out.append(Cell(d, n, g, e, dist, strat))
        return out


@dataclass(frozen=True)
class ResultRow:
    cell: Cell
    variant: str
    rep: int
    seed: int
    l2_error: float
    g_error: float
    iters: int
    time_ms: float
    status: str = "ok"

    def as_csv(self) -> str:
        c = self.cell
        return (
            f"{c.d},{c.n},{c.gamma:g},{c.epsilon:g},{c.dist},{c.strategy},"
            f"{self.variant},{self.rep},{self.seed},"
            f"{self.l2_error:.10g},{self.g_error:.10g},{self.iters},"
            f"{self.time_ms:.3f},{self.status}"
        )


@dataclass
class TraceSummary:
    """Slim per-run record kept for the contraction checks."""

    cell: Cell
    rep: int
    rho_paths: list[list[float]]
    contraction_rate: float
    fixed_point_sq: float
    flags: list[str] = field(default_factory=list)


def _parse_strategy(text: str, epsilon: float) -> AdversaryStrategy:
    parts = text.split(":")
    name = parts[0]
    kw: dict = {"name": name, "epsilon": epsilon}
    if name == "far-outliers" and len(parts) > 1:
        kw["scale"] = float(parts[1])
    elif name == "clustered-shift":
        if len(parts) > 1:
            kw["direction"] = parts[1]
        if len(parts) > 2:
            kw["magnitude"] = "auto" if parts[2] == "auto" else float(parts[2])
    elif name == "coordinate-median-attack" and len(parts) > 1:
        kw["scale"] = float(parts[1])
    elif name == "presence-rewrite-then-shift":
        if len(parts) > 1:
            kw["coord"] = int(parts[1])
        if len(parts) > 2:
            kw["magnitude"] = "auto" if parts[2] == "auto" else float(parts[2])
    return AdversaryStrategy(**kw)


def _dist_spec(text: str, d: int, rng: np.random.Generator) -> DistributionSpec:
    mu = rng.uniform(-2.0, 2.0, size=d)
    parts = text.split(":")
    if parts[0] == "p1":
        eta = float(parts[1]) if len(parts) > 1 else 1.0
        return DistributionSpec(kind="p1", mean=mu, eta=eta)
    if parts[0] == "p2":
        kind = parts[1] if len(parts) > 1 else "two-point"
        a = float(parts[2]) if len(parts) > 2 else 0.01
        return DistributionSpec(kind="p2", mean=mu, p2_kind=kind, a=a)
    raise ConfigError(f"unknown distribution {text!r}")


def _present_entry_mean(m: IncompleteMatrix) -> np.ndarray:
    out = np.empty(m.n_dims)
    for j in range(m.n_dims):
        col = m.column_present(j)
        if col.size == 0:
            raise RimmError(f"coordinate {j + 1} has no present entries")
        out[j] = col.mean()
    return out


def _filter_eps(epsilon: float, gamma: float) -> float:
    return min(0.3, epsilon / gamma)


def _run_variant(
    variant: str,
    m: IncompleteMatrix,
    cell: Cell,
    spec: ExperimentSpec,
    seed: int,
):
    dist = DistClass.parse(cell.dist)
    if variant == "full":
        config = EstimatorConfig(
            epsilon=cell.epsilon,
            gamma=cell.gamma,
            delta=spec.delta,
            dist_class=dist,
            iterations=spec.iterations,
            seed=seed,
        )
        nu, trace = estimate_mean(m, config)
        return nu, len(trace.records) - 1, trace
    if variant == "median-only":
        return coordinate_median(m), 1, None
    if variant == "present-entry-mean":
        return _present_entry_mean(m), 1, None
    if variant == "stacking+filter":
        stacked = stacking_transform(m, cell.gamma)
        params = RobustMeanParams(
            epsilon=_filter_eps(cell.epsilon, cell.gamma),
            eta=dist.eta if dist.kind == "p1" else 0.0,
            seed=seed,
        )
        nu, state = robust_mean_complete(stacked, params)
        return nu, state.iteration, None
    if variant == "hash+filter":
        n_new = max(1, math.ceil(cell.gamma * m.n_examples))
        h = derive_rng(seed, "naive-hash").integers(0, n_new, size=m.n_examples)
        combined = hash_combine(m, h, n_new)
        med = coordinate_median(combined)
        dense = np.where(combined.mask, combined.values, med)
        params = RobustMeanParams(
            epsilon=_filter_eps(cell.epsilon, cell.gamma),
            eta=dist.eta if dist.kind == "p1" else 0.0,
            seed=seed,
        )
        nu, state = robust_mean_complete(dense, params)
        return nu, state.iteration, None
    raise ConfigError(f"unknown variant {variant!r}")


def run_cell(
    spec: ExperimentSpec, cell_index: int, rep: int, collect_traces: bool = False
) -> tuple[list[ResultRow], list[TraceSummary]]:
    """Generate the dataset of one (cell, repetition) and score every variant."""
    cell = spec.cells()[cell_index]
    data_seed = int(derive_seedseq(spec.seed, "data", cell_index, rep).generate_state(1)[0])
    dist = _dist_spec(cell.dist, cell.d, derive_rng(data_seed, "mu"))
    plan = PresencePlan(generator="uniform", gamma=cell.gamma)
    adv = _parse_strategy(cell.strategy, cell.epsilon)
    full, gt = generate(dist, plan, cell.n, data_seed)
    m = corrupt_and_conceal(full, gt, adv, data_seed)

    good = gt.good_rows(cell.n)
    g_true = GVector.from_presence(build_presence_index(m), cell.n, subset=good)
    g_min = float(g_true.g.min())

    rows: list[ResultRow] = []
    traces: list[TraceSummary] = []
    for variant in spec.variants:
        t0 = time.perf_counter()
        try:
            nu, iters, trace = _run_variant(variant, m, cell, spec, data_seed)
            dt = (time.perf_counter() - t0) * 1e3
            err = nu - gt.mu
            l2 = float(np.linalg.norm(err))
            ge = g_norm(err, g_true)
            if g_min > 0:
                # weighted norm controls the plain norm through min_j g_j
                assert l2**2 <= ge**2 / g_min * (1.0 + 1e-9) + 1e-12
            rows.append(
                ResultRow(cell, variant, rep, data_seed, l2, ge, iters, dt)
            )
            if collect_traces and trace is not None:
                traces.append(
                    TraceSummary(
                        cell,
                        rep,
                        trace.rho_path_per_rep,
                        trace.contraction_rate,
                        trace.fixed_point_sq,
                        trace.flags,
                    )
                )
        except RimmError as exc:
            dt = (time.perf_counter() - t0) * 1e3
            rows.append(
                ResultRow(
                    cell, variant, rep, data_seed, math.nan, math.nan, 0, dt,
                    status=f"error:{exc}",
                )
            )
    return rows, traces


def _run_task(args):
    spec, cell_index, rep, collect = args
    return cell_index, rep, run_cell(spec, cell_index, rep, collect)


def run_experiment(
    spec: ExperimentSpec,
    workers: int = 1,
    collect_traces: bool = False,
    progress=None,
) -> tuple[list[ResultRow], list[TraceSummary]]:
    """Run the whole grid; rows come back in deterministic cell-major order."""
    tasks = [
        (spec, ci, rep, collect_traces)
        for ci in range(len(spec.cells()))
        for rep in range(spec.reps)
    ]
    results = {}
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for ci, rep, out in pool.map(_run_task, tasks, chunksize=1):
                results[(ci, rep)] = out
                if progress:
                    progress(len(results), len(tasks))
    else:
        for args in tasks:
            ci, rep, out = _run_task(args)
            results[(ci, rep)] = out
            if progress:
                progress(len(results), len(tasks))
    rows: list[ResultRow] = []
    traces: list[TraceSummary] = []
    for ci in range(len(spec.cells())):
        for rep in range(spec.reps):
            r, t = results[(ci, rep)]
            rows.extend(r)
            traces.extend(t)
    return rows, traces


def write_result_csv(rows: list[ResultRow], fh: io.TextIOBase) -> None:
    fh.write(RESULT_HEADER + "\n")
    for row in rows:
        fh.write(row.as_csv() + "\n")


def read_result_csv(fh: io.TextIOBase) -> list[dict]:
    return list(csv.DictReader(fh))


def parse_experiment_spec(text: str) -> ExperimentSpec:
    """Parse the flat key=value grid format (comma-separated lists)."""
    kv = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"spec line {lineno}: expected key=value")
        key, _, val = line.partition("=")
        kv[key.strip()] = val.strip()

    def ints(key, default):
        return tuple(int(v) for v in kv[key].split(",")) if key in kv else default

    def floats(key, default):
        return tuple(float(v) for v in kv[key].split(",")) if key in kv else default

    def strs(key, default):
        return tuple(v.strip() for v in kv[key].split(",")) if key in kv else default

    try:
        return ExperimentSpec(
            d=ints("d", (10,)),
            n=ints("n", ints("N", (1000,))),
            gamma=floats("gamma", (0.2,)),
            epsilon=floats("epsilon", (0.01,)),
            dist=strs("class", ("p1:1.0",)),
            strategy=strs("strategy", ("far-outliers:1000",)),
            variants=strs("variants", ("full", "median-only", "present-entry-mean")),
            reps=int(kv.get("reps", "5")),
            seed=int(kv.get("seed", "0")),
            delta=float(kv.get("delta", "0.25")),
            iterations=int(kv["iterations"]) if "iterations" in kv else None,
        )
    except ValueError as exc:
        raise ConfigError(f"bad experiment spec value: {exc}") from exc


# ---------------------------------------------------------------------------
# demos


@dataclass(frozen=True)
class HashDemoReport:
    """Missing-entry fraction after compressing a sparse dataset by combining.

    predicted is the mean-field value (1 - 2 gamma)^(N / N'); bound_e4c and
    floor are the e^{-4C} and e^{-(4C+2)} reference lines.  Even aggressive
    compression (large C) leaves a positive missing fraction.
    """

    c_factor: float
    gamma: float
    n: int
    d: int
    n_new: int
    observed_missing: float
    predicted_missing: float
    bound_e4c: float
    floor: float


def hashing_failure_demo(
    n: int, d: int, gamma: float, c_factor: float, seed: int
) -> HashDemoReport:
    """Combine into gamma*N/C rows and measure how many entries stay missing.

    Presence is independent per entry with probability 2*gamma.  The observed
    missing fraction tracks (1 - 2 gamma)^(N/N') and stays above the
    e^{-(4C+2)} floor, demonstrating that no compression level eliminates
    missingness without destroying the corruption budget.
    """
    if not 0.0 < gamma <= 0.25:
        raise ConfigError("demo requires gamma in (0, 1/4]")
    rng = derive_rng(seed, "hashdemo")
    n_new = max(1, int(round(gamma * n / c_factor)))
    present = rng.random((n, d)) < 2.0 * gamma
    h = rng.integers(0, n_new, size=n)
    order = np.argsort(h, kind="stable")
    sorted_mask = present[order]
    hs = h[order]
    starts = np.flatnonzero(np.r_[True, hs[1:] != hs[:-1]])
    reduced = np.logical_or.reduceat(sorted_mask, starts, axis=0)
    combined = np.zeros((n_new, d), dtype=bool)
    combined[hs[starts]] = reduced
    observed = 1.0 - combined.mean()
    predicted = (1.0 - 2.0 * gamma) ** (n / n_new)
    return HashDemoReport(
        c_factor=c_factor,
        gamma=gamma,
        n=n,
        d=d,
        n_new=n_new,
        observed_missing=float(observed),
        predicted_missing=float(predicted),
        bound_e4c=math.exp(-4.0 * c_factor),
        floor=math.exp(-(4.0 * c_factor + 2.0)),
    )


def adaptive_presence_demo(
    n: int, d: int, gamma: float, a: float, seed: int
) -> dict:
    """Demo of the stronger adversary that picks presence after seeing values.

    Entries are i.i.d. over {0, a} with zero-probability slightly above
    gamma; the adversary reveals only the zero entries, so every estimator
    sees an all-zero gamma-complete dataset while the true mean is
    a * P(value = a) in every coordinate.  Excluded from all guarantees.
    """
    p_zero = min(0.999, 1.1 * gamma)
    rng = derive_rng(seed, "adaptive-demo")
    zero = rng.random((n, d)) < p_zero
    values = np.where(zero, 0.0, a)
    m = IncompleteMatrix(values, zero)
    mu = np.full(d, a * (1.0 - p_zero))
    med = coordinate_median(m)
    return {
        "mu": mu,
        "estimate": med,
        "l2_error": float(np.linalg.norm(med - mu)),
        "unavoidable_error": float(np.linalg.norm(mu)),
        "realized_gamma": float(m.mask.mean(axis=0).min()),
    }


def spec_with(spec: ExperimentSpec, **kw) -> ExperimentSpec:
    return replace(spec, **kw)
