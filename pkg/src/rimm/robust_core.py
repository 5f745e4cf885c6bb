"""Complete-data robust mean estimation via a spectral downweighting filter.

Given complete rows of which at most an epsilon fraction are adversarial, the
filter keeps a capped weight vector over the rows, repeatedly finds the top
direction of the weighted centered second-moment matrix, and softly
downweights rows whose squared projection on that direction is extreme.  A
distance-based pruning pass with re-centering runs first so that no single
far row can poison the spectral steps.  The filter stops once the top
eigenvalue is consistent with the data's certified noise level, and never
removes more than twice the corruption budget in mass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._rng import derive_rng
from .errors import EigensolverError

__all__ = [
    "WeightVector",
    "FilterState",
    "RobustMeanParams",
    "goodness_beta",
    "naive_prune",
    "outlier_scores",
    "robust_mean_complete",
    "pair_weights",
    "goodness_probe",
    "GoodnessReport",
]

_CAP_TOL = 1e-9


class WeightVector:
    """Nonnegative weights summing to 1, supported on a row subset, capped at 1/p."""

    __slots__ = ("weights", "support", "p")

    def __init__(self, weights: np.ndarray, support: np.ndarray, p: float):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.support = np.asarray(support, dtype=np.int64)
        self.p = float(p)
        self.validate()

    @property
    def cap(self) -> float:
        return 1.0 / self.p

    @classmethod
    def uniform(cls, support: np.ndarray, n: int, p: float) -> "WeightVector":
        support = np.asarray(support, dtype=np.int64)
        w = np.zeros(n)
        w[support] = 1.0 / support.size
        return cls(w, support, p)

    def validate(self, atol: float = _CAP_TOL) -> None:
        w = self.weights
        if w.ndim != 1:
            raise ValueError("weights must be a vector")
        if not (0 < self.p <= self.support.size):
            raise ValueError("require 0 < p <= |support|")
        if np.any(w < -atol):
            raise ValueError("weights must be nonnegative")
        outside = np.ones(w.size, dtype=bool)
        outside[self.support] = False
        if np.any(w[outside] != 0.0):
            raise ValueError("weights must vanish outside the support")
        if abs(w.sum() - 1.0) > atol:
            raise ValueError(f"weights sum to {w.sum()!r}, expected 1")
        if np.any(w > self.cap * (1.0 + atol) + atol):
            raise ValueError(f"some weight exceeds the cap 1/{self.p:g}")


def pair_weights(w: WeightVector) -> WeightVector:
    """Mirror a capped weight vector about the uniform weights on its support.

    For w capped at 1/p on a support of size m, returns the unique wt capped
    at 1/(m - p) with (p/m) w + ((m - p)/m) wt = uniform; applying the same
    map to wt recovers w.
    """
    m = w.support.size
    p = w.p
    if not p < m:
        raise ValueError(f"pairing needs p < |support| (got p={p:g}, m={m})")
    out = np.zeros_like(w.weights)
    out[w.support] = (1.0 - p * w.weights[w.support]) / (m - p)
    return WeightVector(out, w.support.copy(), m - p)


def goodness_beta(
    epsilon: float, eta: float, delta: float, n: int, d: int, calibration: float = 3.0
) -> float:
    """Calibrated concentration width for an n x d dataset at corruption epsilon.

    Matched noise (eta > 0) uses the sub-Gaussian width
    sqrt((d + ln(1/delta)) / (n eps) + eps ln(1/eps)); the noiseless case
    (eta == 0) uses the bounded-variance width sqrt(d ln(d/delta)/(n eps) + 1).
    epsilon is floored at 1/n, where the corruption model is vacuous.
    """
    eps = max(epsilon, 1.0 / n)
    tail = eps * math.log(1.0 / eps) if eps < 1.0 else 0.0
    if eta > 0:
        width = (d + math.log(1.0 / delta)) / (n * eps) + tail
    else:
        width = d * math.log(d / delta) / (n * eps) + 1.0
    return calibration * math.sqrt(width)


@dataclass
class RobustMeanParams:
    """Tunables of the complete-data filter.

    beta, when given, certifies the goodness width of the input; the spectral
    stopping threshold uses min(beta, statistical width) so that an
    intentionally loose certificate never blinds the filter.
    """

    epsilon: float
    eta: float = 0.0
    delta: float = 0.05
    beta: float | None = None
    score_backend: str = "exact-spectral"
    max_filter_rounds: int = 100
    seed: int = 0
    c1: float = 0.1
    c2: float = 10.0
    c3: float = 2.0
    beta_calibration: float = 3.0
    prune_factor: float = 3.0
    hard_removal: bool = False
    power_tol: float = 1e-6
    power_max_iter: int = 500
    initial_direction: np.ndarray | None = None

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if not 0.0 < self.delta < 0.5:
            raise ValueError("delta must lie in (0, 1/2)")
        if self.score_backend not in ("exact-spectral", "sketched-que"):
            raise ValueError(f"unknown score backend {self.score_backend!r}")


@dataclass
class FilterState:
    """Outcome of one filter run: final weights, diagnostics, and flags."""

    weights: WeightVector
    center: np.ndarray
    removed_mass: float
    iteration: int
    rounds: list[tuple[int, float, float]] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)
    top_direction: np.ndarray | None = None

    def diagnostics_text(self) -> str:
        lines = [f"# round top_eigenvalue removed_mass  flags={','.join(self.flags) or '-'}"]
        for r, lam, rem in self.rounds:
            lines.append(f"{r} {lam:.12g} {rem:.12g}")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# spectral machinery


def _power_top_eig(
    x: np.ndarray,
    w: np.ndarray,
    center: np.ndarray,
    v0: np.ndarray | None,
    rng: np.random.Generator,
    tol: float,
    max_iter: int,
) -> tuple[float, np.ndarray, int, bool]:
    """Top eigenpair of sum_i w_i (x_i - center)(x_i - center)^T by power iteration.

    Stops when the Rayleigh quotient's relative change drops below tol.
    The matrix is PSD, so the quotient increases monotonically toward the
    top eigenvalue.
    """

    def matvec(v: np.ndarray) -> np.ndarray:
        s = x @ v
        s -= center @ v
        t = w * s
        return x.T @ t - center * t.sum()

    d = x.shape[1]
    if v0 is not None and v0.shape == (d,) and np.linalg.norm(v0) > 0:
        v = v0 / np.linalg.norm(v0)
    else:
        v = rng.standard_normal(d)
        v /= np.linalg.norm(v)

    lam = 0.0
    for it in range(1, max_iter + 1):
        y = matvec(v)
        lam_new = float(v @ y)
        ny = float(np.linalg.norm(y))
        if ny == 0.0:
            return 0.0, v, it, True
        v = y / ny
        if it >= 2 and abs(lam_new - lam) <= tol * max(abs(lam_new), 1e-30):
            return lam_new, v, it, True
        lam = lam_new
    return lam, v, max_iter, False


def _block_top_eig(
    x: np.ndarray,
    w: np.ndarray,
    center: np.ndarray,
    v0: np.ndarray | None,
    rng: np.random.Generator,
    tol: float,
    max_iter: int,
    decision_bound: float | None = None,
) -> tuple[float, np.ndarray, int, bool]:
    """Top eigenpair by simultaneous (block) power iteration with Rayleigh-Ritz.

    One block step costs the same memory traffic as a single power step but
    advances several directions at once.  When decision_bound is given the
    iteration may stop early once the Rayleigh lower bound r certifies
    lambda_max <= decision_bound: after k_cert steps, lambda_max <= 2 r holds
    with overwhelming probability for a random start, so 2 r <= bound
    resolves the comparison without polishing the eigenvalue.
    """
    n, d = x.shape
    k = min(d, 6)
    z = rng.standard_normal((d, k))
    if v0 is not None and v0.shape == (d,) and np.linalg.norm(v0) > 0:
        z[:, 0] = v0
    z, _ = np.linalg.qr(z)
    if z.shape[1] < k:  # degenerate start, should not happen
        z = np.eye(d)[:, :k]
    # k independent random starts advance together; the joint chance that
    # every one of them underestimates the top eigenvalue by more than 2x
    # after this many steps is negligible for desk-scale d
    k_cert = max(6, 2 + math.ceil((0.5 * math.log(max(d, 2)) + 4.6) / (0.693 * k)))

    r = 0.0
    v = z[:, 0]
    for it in range(1, max_iter + 1):
        s = x @ z
        s -= center @ z
        t = w[:, None] * s
        y = x.T @ t - np.outer(center, w @ s)
        b = z.T @ y
        b = 0.5 * (b + b.T)
        evals, evecs = np.linalg.eigh(b)
        r_new = float(evals[-1])
        v = z @ evecs[:, -1]
        if it >= 2 and abs(r_new - r) <= tol * max(abs(r_new), 1e-30):
            return r_new, v, it, True
        if (
            decision_bound is not None
            and it >= k_cert
            and 2.0 * r_new <= decision_bound
        ):
            return r_new, v, it, True
        r = r_new
        if not np.isfinite(y).all() or np.abs(y).max() == 0.0:
            return 0.0, v, it, True
        z, _ = np.linalg.qr(y)
    return r, v, max_iter, False


def _projection_scores(
    x: np.ndarray, center: np.ndarray, v: np.ndarray
) -> np.ndarray:
    s = x @ v
    s -= center @ v
    return s * s


def outlier_scores(
    rows: np.ndarray,
    weights: WeightVector | np.ndarray,
    center: np.ndarray,
    backend: str = "exact-spectral",
    *,
    delta: float = 0.05,
    seed: int = 0,
    power_tol: float = 1e-6,
    power_max_iter: int = 500,
) -> np.ndarray:
    """Per-row contribution to the spectral excess of the weighted second moment.

    exact-spectral scores each row by its squared projection on the top
    eigenvector.  sketched-que avoids an explicit eigenvector: it applies a
    high power of the matrix to O(log d) random probes and averages the
    squared projections, which reproduces the exact ranking of the extreme
    rows with probability at least 1 - delta.
    """
    x = np.asarray(rows, dtype=np.float64)
    w = weights.weights if isinstance(weights, WeightVector) else np.asarray(weights)
    rng = derive_rng(seed, "scores", backend)
    if backend == "exact-spectral":
        lam, v, iters, ok = _power_top_eig(
            x, w, center, None, rng, power_tol, power_max_iter
        )
        if not ok:
            y = x.T @ (w * (x @ v - center @ v)) - center * (w * (x @ v - center @ v)).sum()
            raise EigensolverError(
                f"power iteration did not converge in {power_max_iter} steps",
                float(np.linalg.norm(y - lam * v)),
            )
        return _projection_scores(x, center, v)
    if backend != "sketched-que":
        raise ValueError(f"unknown score backend {backend!r}")

    d = x.shape[1]
    n_probe = max(2, math.ceil(math.log2(max(d, 2))) + math.ceil(math.log2(1.0 / delta)))
    n_power = 2 * math.ceil(math.log2(max(d, 2))) + 2
    z = rng.standard_normal((d, n_probe))
    z /= np.linalg.norm(z, axis=0)
    for _ in range(n_power):
        s = x @ z
        s -= center @ z
        t = w[:, None] * s
        z = x.T @ t - np.outer(center, w @ s)
        norms = np.linalg.norm(z, axis=0)
        norms[norms == 0.0] = 1.0
        z /= norms
    proj = x @ z - center @ z
    return np.mean(proj * proj, axis=1)


# ---------------------------------------------------------------------------
# pruning and the filter


_MEDIAN_ROW_CAP = 32768


def _column_median(x: np.ndarray) -> np.ndarray:
    # median per column; the transposed copy makes each selection contiguous.
    # Above the row cap a prefix suffices: the center only needs to be
    # robustly inside the bulk, and corrupted rows are a small fraction of
    # any prefix.
    m = x if x.shape[0] <= _MEDIAN_ROW_CAP else x[:_MEDIAN_ROW_CAP]
    xt = np.ascontiguousarray(m.T)
    return np.median(xt, axis=1, overwrite_input=True)


def _prune_impl(
    x: np.ndarray, epsilon: float, factor: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    """Prune and, when nothing was pruned, hand back the centered data."""
    n = x.shape[0]
    med = _column_median(x)
    xc = x - med
    r2 = np.einsum("ij,ij->i", xc, xc)
    cap = int(math.floor(epsilon * n))
    retained = np.arange(n)
    if cap > 0:
        tau2 = factor**2 * float(np.median(r2)) * n
        far = np.flatnonzero(r2 > tau2 * (1.0 + 1e-12))
        if far.size > cap:
            far = far[np.argsort(r2[far])[-cap:]]
        if far.size:
            keep = np.ones(n, dtype=bool)
            keep[far] = False
            retained = np.flatnonzero(keep)
            center = _column_median(x[retained])
            return retained, center, None
    return retained, med, xc


def naive_prune(rows: np.ndarray, epsilon: float, factor: float = 3.0) -> tuple[np.ndarray, np.ndarray]:
    """Drop rows implausibly far from the coordinate-wise median, re-center.

    The pruning radius is factor * median-distance * sqrt(N), so retained
    rows stay within O(sqrt(N)) of the new center while typical data is
    untouched.  At most floor(epsilon * N) rows are pruned, farthest first.
    """
    x = np.asarray(rows, dtype=np.float64)
    retained, center, _ = _prune_impl(x, epsilon, factor)
    return retained, center


def _recap(w: np.ndarray, cap: float) -> np.ndarray:
    """Project onto the cap by clipping and redistributing the excess."""
    for _ in range(64):
        over = w > cap
        if not over.any():
            return w
        excess = float(np.sum(w[over] - cap))
        w = w.copy()
        w[over] = cap
        under = (w > 0) & ~over
        room = cap - w[under]
        total_room = float(room.sum())
        if total_room <= 0:
            w[under] += excess / max(1, under.sum())
            return w
        w[under] += excess * room / total_room
    return w


def _weighted_quantile(s: np.ndarray, w: np.ndarray, q: float) -> float:
    order = np.argsort(s)
    cw = np.cumsum(w[order])
    k = int(np.searchsorted(cw, q * cw[-1], side="left"))
    k = min(k, order.size - 1)
    return float(s[order[k]])


def robust_mean_complete(
    rows: np.ndarray, params: RobustMeanParams
) -> tuple[np.ndarray, FilterState]:
    """Estimate the common mean of complete rows despite corrupted examples.

    Returns the filtered weighted mean and the filter state.  On benign data
    the spectral check passes immediately and the output is the (pruned)
    sample mean; on data with a planted far cluster the cluster is removed
    within the first rounds.  Total removed mass stays below 2 * epsilon.
    """
    x = np.asarray(rows, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError("need a non-empty 2-d row array")
    n, d = x.shape
    eps = params.epsilon
    flags: list[str] = []
    if eps > params.c1:
        flags.append("epsilon-above-regime")

    beta_stat = goodness_beta(
        eps, params.eta, params.delta, n, d, params.beta_calibration
    )
    beta_stop = beta_stat if params.beta is None else min(params.beta, beta_stat)
    lam_stop = params.eta**2 + params.c3 * beta_stop**2

    retained, center0, xc = _prune_impl(x, eps, params.prune_factor)
    p_cap = max(1.0, (1.0 - 3.0 * min(eps, 0.3)) * n)
    cap = 1.0 / p_cap

    # All spectral work happens on data shifted by the robust center, which
    # makes the filter translation-covariant and well-conditioned.
    if xc is None:
        xc = x - center0

    u = np.zeros(n)
    u[retained] = 1.0 / n
    removal_budget = 2.0 * eps + 1e-12

    rng = derive_rng(params.seed, "filter")
    v_warm = params.initial_direction
    rounds: list[tuple[int, float, float]] = []
    round_no = 0
    lam = 0.0
    v = None

    for round_no in range(1, params.max_filter_rounds + 1):
        mass = u.sum()
        w = _recap(u / mass, cap)
        c_rel = w @ xc
        lam, v, _, converged = _block_top_eig(
            xc, w, c_rel, v_warm, rng, params.power_tol, params.power_max_iter,
            decision_bound=lam_stop,
        )
        if not converged:
            flags.append("eigensolver-cap")
        removed_so_far = 1.0 - mass
        rounds.append((round_no, lam, removed_so_far))
        if lam <= lam_stop * (1.0 + 1e-9):
            break

        scores = _projection_scores(xc, c_rel, v)
        active = u > 0
        smax = float(scores[active].max())
        if smax <= 0:
            break
        f_tail = min(0.5, max(3.0 * eps, 1e-3))
        t_score = _weighted_quantile(scores[active], w[active], 1.0 - f_tail)
        sel = active & (scores > t_score)
        if not sel.any():
            flags.append("stalled")
            break
        factors = np.ones(n)
        if params.hard_removal:
            factors[sel] = 0.0
        else:
            factors[sel] = 1.0 - scores[sel] / smax
        u_new = u * factors
        this_removed = mass - u_new.sum()
        if this_removed < 1e-15:
            flags.append("stalled")
            break
        if (1.0 - u_new.sum()) > removal_budget:
            allowed = removal_budget - removed_so_far
            if allowed <= 0:
                flags.append("removal-budget-exhausted")
                break
            scale = allowed / this_removed
            u = u - scale * (u - u_new)
            flags.append("removal-budget-exhausted")
            break
        u = u_new
        v_warm = v
    else:
        flags.append("round-cap-reached")

    mass = u.sum()
    w = _recap(u / mass, cap)
    nu = center0 + w @ xc
    state = FilterState(
        weights=WeightVector(w, retained, p_cap),
        center=nu,
        removed_mass=1.0 - mass,
        iteration=round_no,
        rounds=rounds,
        flags=flags,
        top_direction=v,
    )
    return nu, state


# ---------------------------------------------------------------------------
# goodness probe


@dataclass(frozen=True)
class GoodnessReport:
    """Worst deviations found over sampled capped weight vectors."""

    max_mean_deviation: float
    max_spectral_deviation: float
    samples: int


def goodness_probe(
    rows: np.ndarray,
    mu: np.ndarray,
    epsilon: float,
    eta: float,
    weight_samples: int,
    seed: int,
) -> GoodnessReport:
    """One-sided goodness check at the uniform weights plus random vertices.

    Vertices of the capped simplex are uniform distributions over subsets of
    size ceil((1 - 3 epsilon) N).  A deviation above the certified width
    proves the dataset bad; staying below is evidence only.
    """
    x = np.asarray(rows, dtype=np.float64)
    n, d = x.shape
    xc = x - np.asarray(mu, dtype=np.float64)
    p = max(1, math.ceil((1.0 - 3.0 * epsilon) * n))
    rng = derive_rng(seed, "goodness-probe")

    def deviations(w: np.ndarray) -> tuple[float, float]:
        mean_dev = float(np.linalg.norm(w @ xc))
        m = (xc * w[:, None]).T @ xc
        m[np.diag_indices(d)] -= eta**2
        evs = np.linalg.eigvalsh(m)
        return mean_dev, float(np.max(np.abs(evs)))

    best_mean, best_spec = deviations(np.full(n, 1.0 / n))
    for _ in range(weight_samples):
        idx = rng.choice(n, size=min(p, n), replace=False)
        w = np.zeros(n)
        w[idx] = 1.0 / idx.size
        md, sd = deviations(w)
        best_mean = max(best_mean, md)
        best_spec = max(best_spec, sd)
    return GoodnessReport(best_mean, best_spec, weight_samples + 1)
