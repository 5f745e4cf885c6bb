"""Filter, scoring, weight-pairing, and goodness-probe tests."""

import math
from fractions import Fraction

import numpy as np
import pytest

from rimm import (
    EigensolverError,
    RobustMeanParams,
    WeightVector,
    goodness_beta,
    goodness_probe,
    naive_prune,
    outlier_scores,
    pair_weights,
    robust_mean_complete,
)


# ---------------------------------------------------------------------------
# naive_prune


def test_prune_identical_rows_retains_all():
    rows = np.tile([2.0, -1.0, 0.5], (30, 1))
    retained, center = naive_prune(rows, epsilon=0.1)
    assert retained.tolist() == list(range(30))
    assert np.array_equal(center, [2.0, -1.0, 0.5])


def test_prune_removes_exactly_the_far_row():
    rows = np.zeros((100, 4))
    rows[37] = [1e6, 0, 0, 0]
    retained, center = naive_prune(rows, epsilon=0.05)
    assert retained.size == 99
    assert 37 not in retained
    assert np.array_equal(center, np.zeros(4))


def test_prune_zero_epsilon_retains_all_gaussian():
    # independent oracle: with no corruption budget nothing may be pruned
    kept = 0
    for seed in range(100):
        rows = np.random.default_rng(seed).standard_normal((1000, 10))
        retained, _ = naive_prune(rows, epsilon=0.0)
        kept += retained.size == 1000
    assert kept >= 95


def test_prune_keeps_typical_gaussian_rows_with_budget():
    pruned_any = 0
    for seed in range(50):
        rows = np.random.default_rng(seed).standard_normal((1000, 10))
        retained, _ = naive_prune(rows, epsilon=0.05)
        pruned_any += retained.size < 1000
    assert pruned_any <= 2


# ---------------------------------------------------------------------------
# outlier scores


def test_scores_equal_when_no_direction_distinguished():
    # 1-d data with exactly the reference variance: every row scores the same
    rows = np.array([[1.0], [-1.0]] * 50)
    w = np.full(100, 0.01)
    s = outlier_scores(rows, w, center=np.zeros(1))
    assert np.allclose(s, s[0], rtol=1e-6)

    # rank-one pattern: all rows on one line through the center
    u = np.array([3.0, 4.0, 0.0, 0.0, 12.0])
    u /= np.linalg.norm(u)
    rows = np.vstack([2.0 * u, -2.0 * u] * 20)
    w = np.full(40, 1.0 / 40)
    s = outlier_scores(rows, w, center=np.zeros(5))
    assert np.allclose(s, s[0], rtol=1e-6)


def test_displaced_row_has_max_score_and_matches_eigh_oracle():
    rng = np.random.default_rng(12)
    rows = rng.standard_normal((200, 5))
    rows[0] += np.array([100.0, 0, 0, 0, 0])
    w = np.full(200, 1.0 / 200)
    center = w @ rows
    s = outlier_scores(rows, w, center)
    assert int(np.argmax(s)) == 0

    xc = rows - center
    m = (xc * w[:, None]).T @ xc
    evals, evecs = np.linalg.eigh(m)
    v = evecs[:, -1]
    oracle = (xc @ v) ** 2
    assert np.allclose(s, oracle, rtol=0, atol=1e-3 * oracle.max())
    assert int(np.argmax(oracle)) == 0


def test_sketched_matches_exact_on_top_mass():
    hits = 0
    for seed in range(100):
        rng = np.random.default_rng(1000 + seed)
        rows = rng.standard_normal((500, 50))
        u = rng.standard_normal(50)
        u /= np.linalg.norm(u)
        bad = rng.choice(500, size=25, replace=False)
        rows[bad] = 10.0 * u + 0.1 * rng.standard_normal((25, 50))
        w = np.full(500, 1.0 / 500)
        center = w @ rows
        s_exact = outlier_scores(rows, w, center, "exact-spectral", seed=seed)
        s_skt = outlier_scores(rows, w, center, "sketched-que", seed=seed)
        top_exact = set(np.argsort(s_exact)[-25:])
        top_skt = set(np.argsort(s_skt)[-25:])
        hits += top_exact == top_skt
    assert hits >= 95


def test_eigensolver_iteration_cap_raises():
    rows = np.random.default_rng(0).standard_normal((50, 6))
    w = np.full(50, 0.02)
    with pytest.raises(EigensolverError):
        outlier_scores(rows, w, np.zeros(6), power_max_iter=1)


# ---------------------------------------------------------------------------
# robust_mean_complete


def test_identical_rows_recovered_exactly():
    mu0 = np.array([3.5, -2.25, 0.125])
    rows = np.tile(mu0, (64, 1))
    for eps in (0.0, 0.05, 0.2):
        nu, state = robust_mean_complete(rows, RobustMeanParams(epsilon=eps, eta=0.0))
        assert np.array_equal(nu, mu0)
        assert state.removed_mass <= 2 * eps + 1e-12


def test_gross_outliers_filtered():
    rng = np.random.default_rng(5)
    n, d = 1000, 20
    rows = rng.standard_normal((n, d))
    rows[:50] = np.r_[1e3, np.zeros(d - 1)]
    nu, state = robust_mean_complete(
        rows, RobustMeanParams(epsilon=0.05, eta=1.0, seed=5)
    )
    assert np.linalg.norm(nu) <= 0.5
    assert np.linalg.norm(rows.mean(axis=0)) > 40
    assert state.removed_mass <= 0.1 + 1e-9


def test_clean_gaussian_near_sample_mean():
    n, d = 10_000, 10
    good = 0
    for seed in range(100):
        rows = np.random.default_rng(seed).standard_normal((n, d))
        nu, _ = robust_mean_complete(
            rows, RobustMeanParams(epsilon=0.0, eta=1.0, seed=seed)
        )
        good += np.linalg.norm(nu) <= 2.0 * math.sqrt(d / n)
    assert good >= 95


def test_epsilon_above_regime_flags_warning():
    rows = np.random.default_rng(1).standard_normal((50, 3))
    _, state = robust_mean_complete(rows, RobustMeanParams(epsilon=0.2, eta=1.0))
    assert "epsilon-above-regime" in state.flags


def test_empty_input_rejected():
    with pytest.raises(ValueError):
        robust_mean_complete(np.zeros((0, 3)), RobustMeanParams(epsilon=0.1))


def test_translation_equivariance_dyadic_grid():
    """Every step is translation-covariant; on a dyadic grid the only
    difference is the final rounding of center + deviation."""
    rng = np.random.default_rng(21)
    rows = rng.integers(-8192, 8192, size=(60, 4)) / 1024.0
    rows[:3] = rng.integers(32, 64, size=(3, 4)).astype(float)
    c = np.array([3.0, -4.0, 1.0, 2.0])
    params = RobustMeanParams(epsilon=0.05, eta=1.0, seed=9)
    nu_a, _ = robust_mean_complete(rows, params)
    nu_b, _ = robust_mean_complete(rows + c, params)
    assert np.max(np.abs(nu_b - (nu_a + c))) <= 1e-12 * (1 + np.abs(c).max())


def test_determinism_same_seed():
    rng = np.random.default_rng(3)
    rows = rng.standard_normal((300, 6))
    rows[:20] += 30.0
    params = RobustMeanParams(epsilon=0.07, eta=1.0, seed=33)
    nu_a, sa = robust_mean_complete(rows, params)
    nu_b, sb = robust_mean_complete(rows, params)
    assert np.array_equal(nu_a, nu_b)
    assert sa.rounds == sb.rounds


def _labeled_outlier_instance(seed, n=400, d=8, eps=0.05):
    # magnitudes span a wide range so soft downweighting needs several rounds
    rng = np.random.default_rng(seed)
    rows = rng.standard_normal((n, d))
    n_bad = int(eps * n)
    u = rng.standard_normal(d)
    u /= np.linalg.norm(u)
    mags = rng.uniform(10.0, 60.0, size=n_bad)
    rows[:n_bad] = mags[:, None] * u + rng.standard_normal((n_bad, d))
    return rows, np.arange(n_bad)


def test_simplex_invariants_and_weight_cap_after_filtering():
    rows, _ = _labeled_outlier_instance(2)
    nu, state = robust_mean_complete(
        rows, RobustMeanParams(epsilon=0.05, eta=1.0, seed=2)
    )
    state.weights.validate()
    assert state.removed_mass <= 0.1 + 1e-9


def test_monotone_spectral_progress():
    ran_multi = 0
    for seed in range(20):
        rows, _ = _labeled_outlier_instance(seed)
        _, state = robust_mean_complete(
            rows, RobustMeanParams(epsilon=0.05, eta=1.0, seed=seed)
        )
        lams = [lam for (_, lam, _) in state.rounds]
        ran_multi += len(lams) > 2
        for a, b in zip(lams, lams[1:]):
            assert b <= a * (1.0 + 1e-9)
    assert ran_multi >= 10  # the construction must actually exercise rounds


def test_score_removal_safety_on_labeled_data():
    safe = 0
    for seed in range(100):
        rows, bad = _labeled_outlier_instance(seed)
        n = rows.shape[0]
        _, state = robust_mean_complete(
            rows, RobustMeanParams(epsilon=0.05, eta=1.0, seed=seed)
        )
        u_final = state.weights.weights * (1.0 - state.removed_mass)
        removed = 1.0 / n - u_final
        removed_bad = removed[bad].sum()
        removed_good = removed.sum() - removed_bad
        safe += removed_good <= removed_bad + 1e-12
    assert safe >= 95


# ---------------------------------------------------------------------------
# pair_weights


def test_pair_weights_worked_example():
    w = WeightVector(np.array([1.0, 0.0, 0.0]), np.array([0, 1, 2]), p=1)
    wt = pair_weights(w)
    assert np.allclose(wt.weights, [0.0, 0.5, 0.5], rtol=0, atol=0)
    assert wt.p == 2


def test_pair_weights_uniform_fixed_point():
    for p in (1, 3, 7.5):
        w = WeightVector(np.full(20, 0.05), np.arange(20), p=p)
        wt = pair_weights(w)
        assert np.allclose(wt.weights, 0.05, rtol=1e-15)


def _random_capped_weights(rng, m, p):
    while True:
        c = rng.integers(1, 1000, size=m)
        s = c.sum()
        if (c * p <= s).all():
            return c, s


def test_pair_weights_roundtrip_float():
    rng = np.random.default_rng(8)
    for _ in range(100):
        c, s = _random_capped_weights(rng, 20, 7)
        w = WeightVector(np.r_[c / s, np.zeros(4)], np.arange(20), p=7)
        back = pair_weights(pair_weights(w))
        assert back.p == w.p
        assert np.allclose(back.weights, w.weights, rtol=1e-12, atol=1e-15)


def test_pair_weights_matches_exact_rational_oracle():
    rng = np.random.default_rng(9)
    for _ in range(200):
        m, p = 12, 5
        c, s = _random_capped_weights(rng, m, p)
        w = WeightVector(c / s, np.arange(m), p=p)
        wt = pair_weights(w)
        # exact oracle over the rationals
        oracle = [
            (Fraction(1, m - p) * (1 - p * Fraction(int(ci), int(s))))
            for ci in c
        ]
        assert all(0 <= o <= Fraction(1, m - p) for o in oracle)
        assert np.allclose(wt.weights, [float(o) for o in oracle], rtol=1e-12)
        # exact-arithmetic round trip
        back = [
            Fraction(1, p) * (1 - (m - p) * o) * m / m
            for o in oracle
        ]
        assert all(b == Fraction(int(ci), int(s)) for b, ci in zip(back, c))


def test_pair_weights_rejects_p_too_large():
    w = WeightVector(np.full(4, 0.25), np.arange(4), p=4)
    with pytest.raises(ValueError):
        pair_weights(w)


# ---------------------------------------------------------------------------
# goodness probe


def test_probe_zero_on_degenerate_data():
    rows = np.tile([1.0, 2.0], (50, 1))
    rep = goodness_probe(rows, np.array([1.0, 2.0]), 0.05, 0.0, 20, seed=0)
    assert rep.max_mean_deviation == 0.0
    assert rep.max_spectral_deviation == 0.0


def test_probe_passes_on_clean_subgaussian_data():
    n, d, eps, eta, delta = 10_000, 10, 0.05, 1.0, 0.05
    rng = np.random.default_rng(4)
    mu = rng.uniform(-1, 1, d)
    rows = mu + eta * rng.standard_normal((n, d))
    beta = goodness_beta(eps, eta, delta, n, d)
    rep = goodness_probe(rows, mu, eps, eta, 30, seed=4)
    assert rep.max_mean_deviation <= beta * math.sqrt(eps)
    assert rep.max_spectral_deviation <= beta**2


def test_probe_flags_planted_violation():
    n, d, eps, eta = 10_000, 10, 0.05, 1.0
    rng = np.random.default_rng(6)
    rows = eta * rng.standard_normal((n, d))
    rows[0, 0] = 1e3  # rank-one spike: uniform weights see 1e6 / n
    beta = goodness_beta(eps, eta, 0.05, n, d)
    rep = goodness_probe(rows, np.zeros(d), eps, eta, 5, seed=6)
    assert rep.max_spectral_deviation > beta**2
