"""Sampling, presence plans, and adversary budget tests."""

import numpy as np
import pytest

from rimm import (
    AdversaryStrategy,
    DistributionSpec,
    PresencePlan,
    corrupt_and_conceal,
    generate,
)
from rimm.generation import compose_coordinatewise, parse_scenario

from conftest import FULL_ROWS, PLAN_MASK, TRUE_MEAN


def _rows_differ(full, m):
    """Rows whose observable content changed: any present value or the mask."""
    changed = np.zeros(m.n_examples, dtype=bool)
    for i in range(m.n_examples):
        if not np.array_equal(m.mask[i], np.zeros(0)) and m.mask[i].any():
            vals_changed = not np.allclose(
                m.values[i, m.mask[i]], full[i, m.mask[i]], rtol=0, atol=0
            )
        else:
            vals_changed = False
        changed[i] = vals_changed
    return changed


def test_zero_variance_rows_are_exactly_mu():
    spec = DistributionSpec(kind="p1", mean=np.array([1.0, 2.0]), eta=0.0)
    full, gt = generate(spec, PresencePlan(gamma=1.0), 8, seed=1)
    assert np.array_equal(full, np.tile([1.0, 2.0], (8, 1)))
    assert np.array_equal(gt.mu, [1.0, 2.0])


def test_p1_empirical_covariance_is_isotropic():
    d, n = 5, 100_000
    spec = DistributionSpec(kind="p1", mean=np.zeros(d), eta=1.0)
    full, _ = generate(spec, PresencePlan(gamma=1.0), n, seed=2)
    cov = full.T @ full / n - np.outer(full.mean(0), full.mean(0))
    dev = np.abs(np.linalg.eigvalsh(cov - np.eye(d))).max()
    assert dev <= 0.05


def test_rademacher_support_and_variance():
    d, n = 4, 100_000
    spec = DistributionSpec(kind="p2", mean=np.zeros(d), p2_kind="rademacher")
    full, _ = generate(spec, PresencePlan(gamma=1.0), n, seed=3)
    assert set(np.unique(full)) == {-1.0, 1.0}
    assert np.allclose(full.var(axis=0), 1.0, atol=0.02)


def test_two_point_moments():
    a = 0.04
    spec = DistributionSpec(kind="p2", mean=np.zeros(2), p2_kind="two-point", a=a)
    full, _ = generate(spec, PresencePlan(gamma=1.0), 200_000, seed=4)
    big = 1.0 / np.sqrt(a)
    assert set(np.round(np.unique(full), 12)) <= {
        round(-0.1 * big * a, 12),
        round(big - 0.1 * big * a, 12),
    }
    assert np.allclose(full.mean(axis=0), 0.0, atol=0.02)
    assert (full.var(axis=0) <= 1.0 + 1e-6).all()


def test_capped_gaussian_bounded_variance():
    spec = DistributionSpec(kind="p2", mean=np.zeros(3), p2_kind="capped-gaussian")
    full, _ = generate(spec, PresencePlan(gamma=1.0), 100_000, seed=5)
    assert np.abs(full).max() <= 3.0
    # population variance of the clipped draw is 0.9973; allow sampling noise
    assert (full.var(axis=0) <= 1.0 + 0.01).all()


def test_uniform_plan_guarantees_completeness():
    plan = PresencePlan(generator="uniform", gamma=0.13)
    for seed in range(3):
        mask = plan.realize(97, 6, seed)
        assert (mask.sum(axis=0) >= np.ceil(0.13 * 97)).all()


def test_staircase_and_block_plans_complete():
    for gen in ("block", "staircase"):
        plan = PresencePlan(generator=gen, gamma=0.3)
        mask = plan.realize(50, 7, 0)
        assert (mask.sum(axis=0) >= np.ceil(0.3 * 50)).all()


def test_strategy_none_reproduces_plan_masked_values(full_rows, plan_mask):
    spec = DistributionSpec(kind="p1", mean=TRUE_MEAN, eta=1.0)
    plan = PresencePlan(generator="explicit", mask=plan_mask)
    _, gt = generate(spec, plan, 7, seed=0)
    m = corrupt_and_conceal(full_rows, gt, AdversaryStrategy(name="none"), seed=0)
    assert np.array_equal(m.mask, plan_mask)
    assert np.array_equal(m.values[plan_mask], full_rows[plan_mask])
    # row 4 (index 3) keeps its step-2 values at its planned entries
    assert m.value_at(3, 0) == 1.1 and m.value_at(3, 3) == 4.1
    assert gt.corrupted_rows.size == 0


def test_far_outliers_exact_budget():
    n, d, eps = 100, 6, 0.05
    spec = DistributionSpec(kind="p1", mean=np.zeros(d), eta=1.0)
    full, gt = generate(spec, PresencePlan(gamma=0.5), n, seed=6)
    adv = AdversaryStrategy(name="far-outliers", epsilon=eps, scale=1e3)
    m = corrupt_and_conceal(full, gt, adv, seed=6)
    assert gt.corrupted_rows.size == 5
    changed = _rows_differ(full, m)
    assert changed.sum() == 5
    assert sorted(np.flatnonzero(changed)) == sorted(gt.corrupted_rows)
    # corrupted rows are one far cluster
    assert np.linalg.norm(m.values[gt.corrupted_rows[0]]) > 900


def test_zero_epsilon_is_identity():
    n, d = 40, 3
    spec = DistributionSpec(kind="p1", mean=np.zeros(d), eta=1.0)
    for name in ("far-outliers", "clustered-shift", "coordinate-median-attack",
                 "presence-rewrite-then-shift"):
        full, gt = generate(spec, PresencePlan(gamma=0.5), n, seed=7)
        adv = AdversaryStrategy(name=name, epsilon=0.0)
        m = corrupt_and_conceal(full, gt, adv, seed=7)
        assert gt.corrupted_rows.size == 0
        assert np.array_equal(m.values[m.mask], full[m.mask])


@pytest.mark.parametrize(
    "name", ["far-outliers", "clustered-shift", "coordinate-median-attack",
             "presence-rewrite-then-shift"]
)
def test_budget_invariant_all_strategies(name):
    n, d, eps = 83, 5, 0.07
    spec = DistributionSpec(kind="p2", mean=np.ones(d), p2_kind="rademacher")
    full, gt = generate(spec, PresencePlan(gamma=0.4), n, seed=8)
    pre_mask = gt.mask.copy()
    adv = AdversaryStrategy(name=name, epsilon=eps)
    m = corrupt_and_conceal(full, gt, adv, seed=8)
    budget = int(np.floor(eps * n))
    assert gt.corrupted_rows.size <= budget
    # rows outside the corrupted set are untouched in values and mask
    untouched = np.setdiff1d(np.arange(n), gt.corrupted_rows)
    assert np.array_equal(m.mask[untouched], pre_mask[untouched])
    assert np.array_equal(
        m.values[untouched][pre_mask[untouched]], full[untouched][pre_mask[untouched]]
    )


def test_determinism_bit_identical():
    spec = DistributionSpec(kind="p1", mean=np.zeros(4), eta=0.6)
    plan = PresencePlan(gamma=0.5)
    adv = AdversaryStrategy(name="far-outliers", epsilon=0.1)
    a_full, a_gt = generate(spec, plan, 60, seed=99)
    b_full, b_gt = generate(spec, plan, 60, seed=99)
    assert np.array_equal(a_full, b_full)
    ma = corrupt_and_conceal(a_full, a_gt, adv, seed=99)
    mb = corrupt_and_conceal(b_full, b_gt, adv, seed=99)
    assert ma == mb
    assert np.array_equal(a_gt.corrupted_rows, b_gt.corrupted_rows)


def test_composition_closure_probe():
    """Stitching two independent same-mean isotropic samples coordinate-wise
    leaves the covariance isotropic."""
    d, n, eta = 6, 100_000, 1.0
    mu = np.arange(d, dtype=float)
    spec = DistributionSpec(kind="p1", mean=mu, eta=eta)
    a, _ = generate(spec, PresencePlan(gamma=1.0), n, seed=10)
    b, _ = generate(spec, PresencePlan(gamma=1.0), n, seed=11)
    parts = [np.array([0, 2, 4]), np.array([1, 3, 5])]
    x = compose_coordinatewise([a, b], parts)
    xc = x - mu
    cov = xc.T @ xc / n
    dev = np.abs(np.linalg.eigvalsh(cov - eta**2 * np.eye(d))).max()
    assert dev <= 0.05


def test_parse_scenario_roundtrip():
    text = """
    # demo scenario
    class=p1:0.8
    mu=1.5
    n=500
    d=12
    gamma=0.25
    epsilon=0.02
    strategy=far-outliers:500
    seed=17
    """
    sc = parse_scenario(text)
    assert sc["spec"].kind == "p1" and sc["spec"].eta == 0.8
    assert sc["spec"].mean.shape == (12,)
    assert sc["n"] == 500 and sc["seed"] == 17
    assert sc["adversary"].name == "far-outliers"
    assert sc["adversary"].scale == 500.0
    full, gt = generate(sc["spec"], sc["plan"], sc["n"], sc["seed"])
    m = corrupt_and_conceal(full, gt, sc["adversary"], sc["seed"])
    assert m.shape == (500, 12)
