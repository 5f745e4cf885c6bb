"""Filling missing entries and guess-adjusted views.

Missing entries are filled once with pre-determined values (mean-zero
Gaussian noise or zeros).  A guess vector nu can then be added on top of the
fill at the missing positions only, producing the view used by each
refinement step.  Views are lazy: nothing is copied until a caller asks for a
materialized array, and one scratch buffer can be reused across calls.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._rng import counter_rng
from .dataset import IncompleteMatrix, PresenceIndex

__all__ = ["FillSpec", "CompletedMatrix", "AdjustedView", "GVector", "fill", "g_norm"]


@dataclass(frozen=True)
class FillSpec:
    """How missing entries are filled: 'gaussian' N(0, eta^2) or 'zero'."""

    mode: str = "zero"
    eta: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("gaussian", "zero"):
            raise ValueError(f"unknown fill mode {self.mode!r}")
        if self.mode == "gaussian" and not self.eta >= 0:
            raise ValueError("gaussian fill requires eta >= 0")


class CompletedMatrix:
    """An incomplete matrix with its missing entries filled.

    Agrees with the base matrix at every present entry.  Fill values are a
    pure function of (shape, spec): they are drawn from a counter-based
    stream in one fixed-shape block, so they never depend on a guess or on
    evaluation order.
    """

    __slots__ = ("base", "spec", "completed", "missing_mask")

    def __init__(self, base: IncompleteMatrix, spec: FillSpec, completed: np.ndarray):
        completed.setflags(write=False)
        self.base = base
        self.spec = spec
        self.completed = completed
        self.missing_mask = ~base.mask
        self.missing_mask.setflags(write=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.base.shape

    @property
    def fill_values(self) -> np.ndarray:
        """Fill values at the missing positions, row-major order."""
        return self.completed[self.missing_mask]

    def adjust(self, nu: np.ndarray) -> "AdjustedView":
        """View with nu_j added at each missing entry; adjust(0) is the fill itself."""
        nu = np.asarray(nu, dtype=np.float64)
        if nu.shape != (self.base.n_dims,):
            raise ValueError(f"nu must have length {self.base.n_dims}")
        return AdjustedView(self, nu)


class AdjustedView:
    """Lazy elementwise view: completed + nu at missing entries only."""

    __slots__ = ("source", "nu")

    def __init__(self, source: CompletedMatrix, nu: np.ndarray):
        self.source = source
        self.nu = nu

    @property
    def shape(self) -> tuple[int, int]:
        return self.source.shape

    def row(self, i: int) -> np.ndarray:
        miss = self.source.missing_mask[i]
        out = self.source.completed[i].copy()
        out[miss] += self.nu[miss]
        return out

    def to_array(self, out: np.ndarray | None = None) -> np.ndarray:
        """Materialize into ``out`` (allocated when None); ``out`` is reusable."""
        src = self.source
        if out is None:
            out = np.empty(src.shape)
        np.multiply(src.missing_mask, self.nu, out=out)
        np.add(out, src.completed, out=out)
        return out


def fill(m: IncompleteMatrix, spec: FillSpec) -> CompletedMatrix:
    """Fill missing entries of m according to spec; deterministic given spec.seed.

    Gaussian fill draws one fixed-shape block from a counter-based stream,
    so the value at (i, j) is a function of (seed, shape, i, j) alone and
    never depends on the mask, a guess, or evaluation order.
    """
    if spec.mode == "gaussian" and spec.eta > 0:
        rng = counter_rng(spec.seed, "fill")
        noise = rng.standard_normal(m.shape) * spec.eta
        completed = np.where(m.mask, m.values, noise)
    else:
        completed = np.where(m.mask, m.values, 0.0)
    return CompletedMatrix(m, spec, completed)


@dataclass(frozen=True)
class GVector:
    """Per-coordinate presence fractions used by the weighted error norm."""

    g: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.g, dtype=np.float64)
        if g.ndim != 1 or np.any(g < 0) or np.any(g > 1):
            raise ValueError("presence fractions must lie in [0, 1]")
        object.__setattr__(self, "g", g)

    @classmethod
    def from_presence(
        cls, idx: PresenceIndex, n: int, subset: np.ndarray | None = None
    ) -> "GVector":
        """Fractions |subset ∩ set_j| / |subset|; subset defaults to all rows."""
        if subset is None:
            return cls(idx.counts / float(n))
        subset = np.asarray(subset)
        if subset.size == 0:
            raise ValueError("subset must be non-empty")
        member = np.zeros(n, dtype=bool)
        member[subset] = True
        g = np.array([member[s].sum() / subset.size for s in idx.gamma_sets])
        return cls(g)


def g_norm(v: np.ndarray, g: GVector | np.ndarray) -> float:
    """Presence-weighted norm sqrt(sum_j g_j v_j^2); between 0 and ||v||_2."""
    gv = g.g if isinstance(g, GVector) else np.asarray(g, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if v.shape != gv.shape:
        raise ValueError("vector and weight shapes differ")
    return float(np.sqrt(np.sum(gv * v * v)))
