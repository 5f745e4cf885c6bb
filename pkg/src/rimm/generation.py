"""Synthetic dataset generation: presence plans, sampling, and corruption.

A dataset is produced in four steps: choose which coordinates are present
per example, draw the full rows i.i.d. from a common-mean distribution,
let an adversary rewrite at most floor(epsilon * N) rows (values and,
for some strategies, their presence sets), then conceal everything outside
the presence sets.  The ground truth records everything needed to score an
estimate afterwards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._rng import derive_rng
from .dataset import IncompleteMatrix
from .errors import ConfigError

__all__ = [
    "DistributionSpec",
    "PresencePlan",
    "AdversaryStrategy",
    "GroundTruth",
    "generate",
    "corrupt_and_conceal",
    "compose_coordinatewise",
    "parse_scenario",
]

P2_KINDS = ("capped-gaussian", "rademacher", "two-point")
STRATEGIES = (
    "none",
    "far-outliers",
    "clustered-shift",
    "coordinate-median-attack",
    "presence-rewrite-then-shift",
)

_GAUSSIAN_CAP = 3.0  # clip level for the capped-Gaussian member; keeps var <= 1


@dataclass(frozen=True)
class DistributionSpec:
    """Row distribution: unit-variance-scale Gaussian family or a bounded-variance member.

    kind 'p1' draws N(mean, eta^2 I) with 0 <= eta <= 1.  kind 'p2' draws one
    of three independent-coordinate members with per-coordinate variance at
    most 1: a clipped standard Gaussian, a +/-1 coin, or a shifted two-point
    distribution over {0, 1/sqrt(a)} with mass 0.1*a on the large value.
    """

    kind: str
    mean: np.ndarray
    eta: float = 1.0
    p2_kind: str = "two-point"
    a: float = 0.01

    def __post_init__(self):
        object.__setattr__(
            self, "mean", np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        )
        if self.kind == "p1":
            if not 0.0 <= self.eta <= 1.0:
                raise ConfigError("p1 requires 0 <= eta <= 1")
        elif self.kind == "p2":
            if self.p2_kind not in P2_KINDS:
                raise ConfigError(f"unknown p2 member {self.p2_kind!r}")
            if self.p2_kind == "two-point" and not 0.0 < self.a < 1.0:
                raise ConfigError("two-point parameter must lie in (0, 1)")
        else:
            raise ConfigError(f"unknown distribution class {self.kind!r}")

    @property
    def n_dims(self) -> int:
        return self.mean.size

    @property
    def fill_eta(self) -> float:
        """Noise level of the matching mean-zero fill distribution."""
        return self.eta if self.kind == "p1" else 0.0

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        d = self.n_dims
        if self.kind == "p1":
            if self.eta == 0.0:
                return np.tile(self.mean, (n, 1))
            return self.mean + self.eta * rng.standard_normal((n, d))
        if self.p2_kind == "capped-gaussian":
            z = np.clip(rng.standard_normal((n, d)), -_GAUSSIAN_CAP, _GAUSSIAN_CAP)
            return self.mean + z
        if self.p2_kind == "rademacher":
            return self.mean + rng.choice([-1.0, 1.0], size=(n, d))
        big = 1.0 / math.sqrt(self.a)
        v = np.where(rng.random((n, d)) < 0.1 * self.a, big, 0.0)
        return self.mean + (v - 0.1 * big * self.a)


@dataclass(frozen=True)
class PresencePlan:
    """Which entries each example exposes.

    'uniform' marks, for every coordinate independently, exactly
    ceil(gamma * N) uniformly chosen examples as present, so the promised
    completeness level holds by construction.  'block' exposes the first
    ceil(gamma * N) rows entirely.  'staircase' gives each example a rotating
    contiguous coordinate window.  'explicit' uses a caller-provided mask.
    """

    generator: str = "uniform"
    gamma: float = 1.0
    mask: np.ndarray | None = None

    def __post_init__(self):
        if self.generator not in ("uniform", "block", "staircase", "explicit"):
            raise ConfigError(f"unknown presence generator {self.generator!r}")
        if self.generator == "explicit":
            if self.mask is None:
                raise ConfigError("explicit plan needs a mask")
        elif not 0.0 < self.gamma <= 1.0:
            raise ConfigError("gamma must lie in (0, 1]")

    def realize(self, n: int, d: int, seed: int) -> np.ndarray:
        if self.generator == "explicit":
            mask = np.asarray(self.mask, dtype=bool)
            if mask.shape != (n, d):
                raise ConfigError(f"explicit mask shape {mask.shape} != ({n}, {d})")
            return mask.copy()
        k = min(n, math.ceil(self.gamma * n))
        mask = np.zeros((n, d), dtype=bool)
        if self.generator == "uniform":
            rng = derive_rng(seed, "plan")
            for j in range(d):
                mask[rng.permutation(n)[:k], j] = True
        elif self.generator == "block":
            mask[:k, :] = True
        else:  # staircase
            width = max(1, math.ceil(self.gamma * d))
            for i in range(n):
                start = (i * d) // n
                cols = (start + np.arange(width)) % d
                mask[i, cols] = True
            # rotate rows through columns until every column reaches k
            counts = mask.sum(axis=0)
            for j in np.flatnonzero(counts < k):
                need = k - counts[j]
                absent = np.flatnonzero(~mask[:, j])[:need]
                mask[absent, j] = True
        return mask


@dataclass(frozen=True)
class AdversaryStrategy:
    """Named corruption rule applied to at most floor(epsilon * N) rows.

    far-outliers         rewrites rows as one far cluster mu + scale * u for a
                         random unit direction u, presence set to all-present.
    clustered-shift      adds magnitude * direction to the present entries of
                         the chosen rows; presence unchanged.
    coordinate-median-attack
                         all-present rows at mu + 2 * scale in every
                         coordinate, designed to drag per-coordinate medians.
    presence-rewrite-then-shift
                         all-present rows equal to mu except one attacked
                         coordinate offset by magnitude; with magnitude 'auto'
                         the offset is 0.8 * sqrt(gamma / epsilon), large
                         enough to bias the mean yet spectrally hidden.
    """

    name: str = "none"
    epsilon: float = 0.0
    scale: float = 1000.0
    direction: str = "e1"
    magnitude: float | str = "auto"
    coord: int = 0

    def __post_init__(self):
        if self.name not in STRATEGIES:
            raise ConfigError(f"unknown adversary strategy {self.name!r}")
        if not 0.0 <= self.epsilon < 1.0:
            raise ConfigError("epsilon must lie in [0, 1)")

    def budget(self, n: int) -> int:
        return int(math.floor(self.epsilon * n))


@dataclass
class GroundTruth:
    """Scoring record: true mean, realized presence, corrupted rows, seed."""

    mu: np.ndarray
    presence_plan: PresencePlan
    seed: int
    mask: np.ndarray | None = None
    corrupted_rows: np.ndarray = field(default_factory=lambda: np.array([], dtype=int))

    def good_rows(self, n: int) -> np.ndarray:
        keep = np.ones(n, dtype=bool)
        keep[self.corrupted_rows] = False
        return np.flatnonzero(keep)


def generate(
    spec: DistributionSpec, plan: PresencePlan, n: int, seed: int
) -> tuple[np.ndarray, GroundTruth]:
    """Draw n full rows i.i.d. from spec and realize the presence plan."""
    if n < 1:
        raise ConfigError("n must be at least 1")
    d = spec.n_dims
    full = spec.sample(n, derive_rng(seed, "rows"))
    mask = plan.realize(n, d, seed)
    if mask.shape != (n, d):
        raise ConfigError("presence plan does not cover the requested rows")
    gt = GroundTruth(mu=spec.mean.copy(), presence_plan=plan, seed=seed, mask=mask)
    return full, gt


def _auto_magnitude(gamma: float, epsilon: float) -> float:
    if epsilon <= 0:
        return 0.0
    return 0.8 * math.sqrt(gamma / epsilon)


def corrupt_and_conceal(
    full: np.ndarray,
    gt: GroundTruth,
    adv: AdversaryStrategy,
    seed: int,
) -> IncompleteMatrix:
    """Apply the adversary to at most floor(epsilon*N) rows, then conceal.

    Uncorrupted rows keep their step-2 values at all their present entries.
    The chosen rows and any presence rewrites are recorded in gt.
    """
    full = np.asarray(full, dtype=np.float64)
    n, d = full.shape
    mask = gt.mask.copy()
    values = full.copy()
    rng = derive_rng(seed, "adversary", adv.name)
    budget = adv.budget(n)
    rows = np.array([], dtype=int)

    if adv.name != "none" and budget > 0:
        rows = np.sort(rng.choice(n, size=budget, replace=False))
        gamma_plan = getattr(gt.presence_plan, "gamma", 1.0)
        if adv.name == "far-outliers":
            u = rng.standard_normal(d)
            u /= np.linalg.norm(u)
            values[rows] = gt.mu + adv.scale * u
            mask[rows] = True
        elif adv.name == "clustered-shift":
            direction = np.zeros(d)
            if adv.direction == "e1":
                direction[adv.coord] = 1.0
            elif adv.direction == "ones":
                direction[:] = 1.0 / math.sqrt(d)
            else:
                raise ConfigError(f"unknown shift direction {adv.direction!r}")
            mag = (
                _auto_magnitude(gamma_plan, adv.epsilon)
                if adv.magnitude == "auto"
                else float(adv.magnitude)
            )
            values[rows] += mag * direction
        elif adv.name == "coordinate-median-attack":
            values[rows] = gt.mu + 2.0 * adv.scale
            mask[rows] = True
        else:  # presence-rewrite-then-shift
            mag = (
                _auto_magnitude(gamma_plan, adv.epsilon)
                if adv.magnitude == "auto"
                else float(adv.magnitude)
            )
            values[rows] = gt.mu
            values[rows, adv.coord] += mag
            mask[rows] = True

    gt.corrupted_rows = rows
    gt.mask = mask
    return IncompleteMatrix(values, mask)


def compose_coordinatewise(
    samples: list[np.ndarray], partition: list[np.ndarray]
) -> np.ndarray:
    """Stitch sample blocks coordinate-wise: block i supplies the columns in
    partition[i].  Used by the closure probes in the test suite."""
    if len(samples) != len(partition):
        raise ValueError("one sample block per partition part")
    out = np.empty_like(samples[0])
    seen = np.zeros(out.shape[1], dtype=bool)
    for block, cols in zip(samples, partition):
        out[:, cols] = block[:, cols]
        seen[cols] = True
    if not seen.all():
        raise ValueError("partition does not cover all coordinates")
    return out


def parse_scenario(text: str) -> dict:
    """Parse a flat key=value scenario description.

    Recognized keys: class (p1:<eta> or p2:<kind>[:<a>]), mu (constant),
    n, d, gamma, plan, epsilon, strategy (<name>[:<param>...]), seed.
    """
    kv = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"scenario line {lineno}: expected key=value")
        key, _, val = line.partition("=")
        kv[key.strip()] = val.strip()

    try:
        n = int(kv.get("n", "1000"))
        d = int(kv.get("d", "10"))
        gamma = float(kv.get("gamma", "1.0"))
        epsilon = float(kv.get("epsilon", "0.0"))
        seed = int(kv.get("seed", "0"))
        mu = np.full(d, float(kv.get("mu", "0.0")))
    except ValueError as exc:
        raise ConfigError(f"bad scenario value: {exc}") from exc

    cls = kv.get("class", "p1:1.0")
    parts = cls.split(":")
    if parts[0] == "p1":
        eta = float(parts[1]) if len(parts) > 1 else 1.0
        spec = DistributionSpec(kind="p1", mean=mu, eta=eta)
    elif parts[0] == "p2":
        p2_kind = parts[1] if len(parts) > 1 else "two-point"
        a = float(parts[2]) if len(parts) > 2 else 0.01
        spec = DistributionSpec(kind="p2", mean=mu, p2_kind=p2_kind, a=a)
    else:
        raise ConfigError(f"unknown class {cls!r}")

    plan = PresencePlan(generator=kv.get("plan", "uniform"), gamma=gamma)

    strat = kv.get("strategy", "none")
    sparts = strat.split(":")
    name = sparts[0]
    kwargs: dict = {"name": name, "epsilon": epsilon}
    if name == "far-outliers" and len(sparts) > 1:
        kwargs["scale"] = float(sparts[1])
    elif name == "clustered-shift":
        if len(sparts) > 1:
            kwargs["direction"] = sparts[1]
        if len(sparts) > 2:
            kwargs["magnitude"] = (
                "auto" if sparts[2] == "auto" else float(sparts[2])
            )
    elif name == "coordinate-median-attack" and len(sparts) > 1:
        kwargs["scale"] = float(sparts[1])
    elif name == "presence-rewrite-then-shift":
        if len(sparts) > 1:
            kwargs["coord"] = int(sparts[1])
        if len(sparts) > 2:
            kwargs["magnitude"] = (
                "auto" if sparts[2] == "auto" else float(sparts[2])
            )
    adv = AdversaryStrategy(**kwargs)

    return {
        "spec": spec,
        "plan": plan,
        "adversary": adv,
        "n": n,
        "d": d,
        "gamma": gamma,
        "epsilon": epsilon,
        "seed": seed,
    }
