"""End-to-end mean estimation on incomplete, corrupted data.

The pipeline: optional group-combine pre-processing when presence is very
sparse, coordinate-wise median initialization, one pre-determined fill of the
missing entries, then a logarithmic number of refinement steps.  Each step
shifts the filled entries by the current guess, runs the complete-data filter
on the shifted view, and tightens a certified error radius rho through the
recurrence rho <- sqrt(C6 beta^2 eps' + (1 - c7 g*) rho^2).

With a noisy fill the whole pipeline is repeated a few times with fresh fill
draws and the coordinate-wise median of the runs is returned, consuming the
failure-probability budget; deterministic fills make repetition a no-op and
run once.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from ._rng import derive_rng, derive_seedseq
from .completion import FillSpec, fill
from .dataset import IncompleteMatrix, build_presence_index, gamma_completeness
from .errors import ConfigError, NotGammaCompleteError
from .robust_core import RobustMeanParams, goodness_beta, robust_mean_complete

__all__ = [
    "DistClass",
    "HashingConfig",
    "EstimatorConfig",
    "ClassParams",
    "IterationTrace",
    "coordinate_median",
    "rho_update",
    "estimate_mean",
    "hash_combine",
    "hash_preprocess",
    "HashTranslation",
    "stacking_transform",
]


@dataclass(frozen=True)
class DistClass:
    """Distribution class assumption: 'p1' with noise level eta, or 'p2'."""

    kind: str = "p1"
    eta: float = 1.0

    def __post_init__(self):
        if self.kind not in ("p1", "p2"):
            raise ConfigError(f"unknown distribution class {self.kind!r}")
        if self.kind == "p1" and not 0.0 <= self.eta <= 1.0:
            raise ConfigError("p1 requires 0 <= eta <= 1")

    @classmethod
    def parse(cls, text: str) -> "DistClass":
        parts = text.strip().split(":")
        if parts[0] == "p1":
            eta = float(parts[1]) if len(parts) > 1 else 1.0
            return cls("p1", eta)
        if parts[0] == "p2":
            return cls("p2", 0.0)
        raise ConfigError(f"unknown class {text!r} (expected p1:<eta> or p2)")


@dataclass(frozen=True)
class HashingConfig:
    """Group-combine pre-processing switch; active only when gamma < c_threshold."""

    enabled: bool = True
    B: int = 8
    c_threshold: float | None = None

    def __post_init__(self):
        if self.B < 3:
            raise ConfigError("B must be at least 3 so the combined density is positive")

    @property
    def threshold(self) -> float:
        if self.c_threshold is not None:
            return self.c_threshold
        return (self.B - 2) / self.B**2


@dataclass(frozen=True)
class EstimatorConfig:
    """All tunables of the estimation pipeline.

    The calibration constants are frozen defaults (see README): C6=1,
    c7=0.25, C3=2, C4=4, beta_calibration=3, C_median=10, C0=20.  iterations
    defaults to max(ceil(2 log2(N+1)), ceil(log2(1 + d / (beta^2 eps')))).
    """

    epsilon: float
    gamma: float
    delta: float = 0.1
    dist_class: DistClass = field(default_factory=DistClass)
    iterations: int | None = None
    c6: float = 1.0
    c7: float = 0.25
    c3: float = 2.0
    c4: float = 4.0
    beta_calibration: float = 3.0
    c_median: float = 10.0
    c0: float = 20.0
    hashing: HashingConfig = field(default_factory=HashingConfig)
    seed: int = 0
    score_backend: str = "exact-spectral"
    max_filter_rounds: int = 100
    repetitions: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.epsilon < 1.0:
            raise ConfigError("epsilon must lie in [0, 1)")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError("gamma must lie in (0, 1]")
        if not 0.0 < self.delta < 0.5:
            raise ConfigError("delta must lie in (0, 1/2)")
        if self.iterations is not None and self.iterations < 1:
            raise ConfigError("iterations must be positive")
        if self.repetitions is not None and self.repetitions < 1:
            raise ConfigError("repetitions must be positive")

    def regime_ok(self) -> bool:
        """Whether gamma >= C0 * epsilon, the regime the guarantees assume."""
        return self.gamma >= self.c0 * self.epsilon * (1.0 - 1e-12)


@dataclass(frozen=True)
class ClassParams:
    """Per-class constants fed to the refinement loop."""

    epsilon_prime: float
    g_star: float
    eta: float
    beta: float

    @classmethod
    def for_class(
        cls,
        dist: DistClass,
        epsilon: float,
        gamma: float,
        delta: float,
        n: int,
        d: int,
        calibration: float,
    ) -> "ClassParams":
        g_star = 0.9 * gamma
        if dist.kind == "p1":
            eps_p = epsilon
            eta = dist.eta
        else:
            eps_p = 1.1 * epsilon
            eta = 0.0
        beta = goodness_beta(eps_p, eta, delta, n, d, calibration)
        return cls(epsilon_prime=eps_p, g_star=g_star, eta=eta, beta=beta)


@dataclass
class IterationTrace:
    """Per-iteration record of the refinement loop.

    records holds (t, nu, rho, wall_time_s) for the primary repetition,
    with t=0 the initialization.  rho_path_per_rep keeps the rho sequences
    of every repetition for contraction checks.
    """

    records: list[tuple[int, np.ndarray, float, float]] = field(default_factory=list)
    nu_star: np.ndarray | None = None
    rho_star: float = math.inf
    repetitions: int = 1
    rho_path_per_rep: list[list[float]] = field(default_factory=list)
    class_params: ClassParams | None = None
    contraction_rate: float = 0.0
    fixed_point_sq: float = 0.0
    flags: list[str] = field(default_factory=list)

    @property
    def rho_path(self) -> list[float]:
        return [rho for (_, _, rho, _) in self.records]


def coordinate_median(m: IncompleteMatrix) -> np.ndarray:
    """Per-coordinate median of the present values; midpoint rule on ties.

    Raises ValueError naming the first coordinate with no present entries.
    """
    out = np.empty(m.n_dims)
    for j in range(m.n_dims):
        col = m.column_present(j)
        if col.size == 0:
            raise ValueError(f"coordinate {j + 1} has no present entries")
        out[j] = np.median(col)
    return out


def rho_update(rho: float, cp: ClassParams, config: EstimatorConfig) -> float:
    """One step of the certified-radius recurrence.

    Returns sqrt(C6 beta^2 eps' + (1 - c7 g*) rho^2).  The fixed point is
    sqrt(C6 beta^2 eps' / (c7 g*)) and the gap rho^2 - fixed^2 contracts by
    exactly (1 - c7 g*) per step.
    """
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    shrink = config.c7 * cp.g_star
    if shrink >= 1.0:
        import warnings

        warnings.warn("c7 * g_star >= 1; clamping the contraction rate", stacklevel=2)
        shrink = 1.0 - 1e-6
    add = config.c6 * cp.beta**2 * cp.epsilon_prime
    return math.sqrt(add + (1.0 - shrink) * rho * rho)


def _check_complete(m: IncompleteMatrix, gamma: float) -> None:
    report = gamma_completeness(build_presence_index(m), m.n_examples)
    if not report.is_complete(gamma):
        raise NotGammaCompleteError(
            report.min_fraction, gamma, report.argmin_coordinate
        )


def _iteration_count(config: EstimatorConfig, n: int, d: int, cp: ClassParams) -> tuple[int, bool]:
    if config.iterations is not None:
        return config.iterations, False
    t_n = math.ceil(2.0 * math.log2(n + 1))
    denom = max(cp.beta**2 * cp.epsilon_prime, 1e-300)
    t_beta = math.ceil(math.log2(1.0 + d / denom))
    return max(t_n, t_beta), True


def estimate_mean(
    m: IncompleteMatrix, config: EstimatorConfig
) -> tuple[np.ndarray, IterationTrace]:
    """Run the full pipeline and return the final guess with its trace."""
    import warnings

    if not config.regime_ok():
        warnings.warn(
            f"gamma={config.gamma:g} is below C0*epsilon={config.c0 * config.epsilon:g}; "
            "guarantees degrade",
            stacklevel=2,
        )

    _check_complete(m, config.gamma)

    epsilon, gamma = config.epsilon, config.gamma
    if config.hashing.enabled and gamma < config.hashing.threshold:
        m, trans = hash_preprocess(m, gamma, config.hashing.B, config.seed)
        epsilon = epsilon * trans.epsilon_scale
        gamma = trans.gamma_prime
        _check_complete(m, gamma)

    n, d = m.shape
    dist = config.dist_class

    # Two-pass fixed point: the per-iteration failure budget depends on the
    # iteration count, which depends on beta.
    cp0 = ClassParams.for_class(
        dist, epsilon, gamma, config.delta, n, d, config.beta_calibration
    )
    t_iter, defaulted = _iteration_count(config, n, d, cp0)
    delta_iter = config.delta / max(t_iter, 1)
    cp = ClassParams.for_class(
        dist, epsilon, gamma, delta_iter, n, d, config.beta_calibration
    )
    if defaulted:
        t_iter, _ = _iteration_count(config, n, d, cp)
        delta_iter = config.delta / max(t_iter, 1)

    shrink = min(config.c7 * cp.g_star, 1.0 - 1e-6)
    add = config.c6 * cp.beta**2 * cp.epsilon_prime
    fixed_sq = add / shrink

    noisy_fill = dist.kind == "p1" and dist.eta > 0
    if config.repetitions is not None:
        reps = config.repetitions if noisy_fill else 1
    else:
        # fresh fills per repetition consume the failure budget; with a
        # deterministic fill every repetition is identical, so run once
        reps = max(1, math.ceil(math.log2(1.0 / config.delta))) if noisy_fill else 1

    fill_mode = "gaussian" if dist.kind == "p1" else "zero"
    nu0 = coordinate_median(m)
    rho0 = config.c_median * math.sqrt(d)

    trace = IterationTrace(
        repetitions=reps,
        class_params=cp,
        contraction_rate=1.0 - shrink,
        fixed_point_sq=fixed_sq,
    )
    finals = []
    scratch = np.empty(m.shape)
    hit_cap = True

    for rep in range(reps):
        fill_seed = derive_seedseq(config.seed, "fill", rep).generate_state(1)[0]
        completed = fill(
            m, FillSpec(mode=fill_mode, eta=cp.eta, seed=int(fill_seed))
        )
        nu = nu0.copy()
        rho = rho0
        rho_path = [rho]
        v_warm = None
        if rep == 0:
            trace.records.append((0, nu.copy(), rho, 0.0))
        for t in range(1, t_iter + 1):
            t0 = time.perf_counter()
            adjusted = completed.adjust(nu).to_array(out=scratch)
            beta_eff = math.sqrt(config.c3 * cp.beta**2 + config.c4 * rho * rho)
            fseed = derive_seedseq(config.seed, "filter", rep, t).generate_state(1)[0]
            params = RobustMeanParams(
                epsilon=cp.epsilon_prime,
                eta=cp.eta,
                delta=delta_iter,
                beta=beta_eff,
                score_backend=config.score_backend,
                max_filter_rounds=config.max_filter_rounds,
                seed=int(fseed),
                c3=config.c3,
                beta_calibration=config.beta_calibration,
                initial_direction=v_warm,
            )
            nu, fstate = robust_mean_complete(adjusted, params)
            v_warm = fstate.top_direction
            rho_new = rho_update(rho, cp, config)
            wall = time.perf_counter() - t0
            if rep == 0:
                trace.records.append((t, nu.copy(), rho_new, wall))
            converged = abs(rho_new - rho) < 1e-9 * max(rho, 1e-300)
            rho = rho_new
            rho_path.append(rho)
            if converged:
                hit_cap = False
                break
        finals.append(nu)
        trace.rho_path_per_rep.append(rho_path)

    if hit_cap:
        trace.flags.append("iteration-cap-reached")
    nu_star = np.median(np.vstack(finals), axis=0)
    trace.nu_star = nu_star
    trace.rho_star = trace.rho_path_per_rep[0][-1]
    return nu_star, trace


# ---------------------------------------------------------------------------
# group-combine pre-processing and the stacking baseline


@dataclass(frozen=True)
class HashTranslation:
    """Parameter translation of the group-combine step.

    After combining into n_prime rows the corruption rate scales by
    epsilon_scale = 1/(B gamma) and completeness becomes gamma_prime =
    (B-2)/B^2.  identity=True means the input was already dense enough and
    passed through unchanged.
    """

    epsilon_scale: float
    gamma_prime: float
    n_prime: int
    identity: bool = False


def hash_combine(
    m: IncompleteMatrix, h: np.ndarray, n_new: int, track_sources: bool = False
):
    """Combine rows mapped to the same bucket into one denser row.

    Coordinate j of new row b takes the value of the smallest original row
    index i with h[i] == b and coordinate j present; missing when no such row
    exists.  Each original row feeds exactly one bucket, so corrupted rows
    touch at most their own bucket.
    """
    h = np.asarray(h, dtype=np.int64)
    if h.shape != (m.n_examples,):
        raise ValueError("h must assign every original row a bucket")
    if h.min() < 0 or h.max() >= n_new:
        raise ValueError("bucket indices out of range")
    values = np.full((n_new, m.n_dims), np.nan)
    mask = np.zeros((n_new, m.n_dims), dtype=bool)
    sources = np.full((n_new, m.n_dims), -1, dtype=np.int64) if track_sources else None
    # visit rows from the largest index down so the smallest present one wins
    for i in range(m.n_examples - 1, -1, -1):
        b = h[i]
        pres = m.mask[i]
        values[b, pres] = m.values[i, pres]
        mask[b, pres] = True
        if track_sources:
            sources[b, pres] = i
    out = IncompleteMatrix(np.where(mask, values, np.nan), mask)
    if track_sources:
        return out, sources
    return out


def hash_preprocess(
    m: IncompleteMatrix, gamma: float, B: int, seed: int
) -> tuple[IncompleteMatrix, HashTranslation]:
    """Randomly combine rows into B * ceil(gamma N) denser rows when gamma is tiny.

    Pass-through when gamma is already at least (B-2)/B^2.  Otherwise each
    row is thrown into a uniform random bucket; the result is
    (B-2)/B^2-complete with high probability and the corruption fraction
    scales by 1/(B gamma).
    """
    if B < 3:
        raise ConfigError("B must be at least 3")
    threshold = (B - 2) / B**2
    if gamma >= threshold:
        return m, HashTranslation(1.0, gamma, m.n_examples, identity=True)
    n = m.n_examples
    n_new = B * math.ceil(gamma * n)
    h = derive_rng(seed, "hash").integers(0, n_new, size=n)
    combined = hash_combine(m, h, n_new)
    return combined, HashTranslation(
        epsilon_scale=1.0 / (B * gamma), gamma_prime=threshold, n_prime=n_new
    )


def stacking_transform(m: IncompleteMatrix, gamma: float) -> np.ndarray:
    """Pack each column's first floor(gamma N) present values into a dense matrix.

    A documented anti-pattern baseline: it destroys the row-wise corruption
    structure, so one corrupted source row can contaminate many output rows.
    """
    _check_complete(m, gamma)
    k = int(math.floor(gamma * m.n_examples))
    k = max(k, 1)
    out = np.empty((k, m.n_dims))
    for j in range(m.n_dims):
        col = m.column_present(j)
        out[:, j] = col[:k]
    return out
