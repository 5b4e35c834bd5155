import math

import numpy as np
import pytest
from scipy import stats

from dpsc.dp import (
    BudgetCharge, BudgetExceededError, BudgetLedger, PrivacyBudget, RandomStream, consumed,
    laplace_from_uniform, laplace_sample, noisy_value,
)


def test_laplace_median_at_half():
    assert laplace_from_uniform(0.5, 3.0) == 0.0


def test_laplace_moments():
    x = laplace_sample(2.0, RandomStream(1), 1_000_000)
    assert abs(x.mean()) < 0.02
    assert abs(x.var() - 8.0) < 0.16


def test_laplace_ks():
    x = laplace_sample(2.0, RandomStream(5), 100_000)
    assert stats.kstest(x, stats.laplace(scale=2.0).cdf).statistic < 0.01


def test_laplace_replay():
    a = laplace_sample(1.0, RandomStream(42, (3, 1)), 100)
    b = laplace_sample(1.0, RandomStream(42, (3, 1)), 100)
    assert np.array_equal(a, b)
    c = laplace_sample(1.0, RandomStream(42, (3, 2)), 100)
    assert not np.array_equal(a, c)


def test_laplace_rejects_bad_scale():
    with pytest.raises(ValueError):
        laplace_sample(0.0, RandomStream(0))
    with pytest.raises(ValueError):
        laplace_sample(-1.0, RandomStream(0))


def test_child_streams_independent_of_sibling_usage():
    root = RandomStream(9)
    a1 = root.child(1).uniform(5)
    s = RandomStream(9)
    s.child(0).uniform(1000)
    a2 = s.child(1).uniform(5)
    assert np.array_equal(a1, a2)


def test_noisy_value_scale_from_default_budget():
    b = PrivacyBudget(0.5)
    assert 1.0 / b.total_count_epsilon == pytest.approx(50.0)
    assert 1.0 / b.leaf_epsilon == pytest.approx(1 / 0.48)
    # Empirical scale check: mean |noise| equals the Laplace scale.
    ledger = BudgetLedger(1e9)
    draws = [
        noisy_value(0.0, b.total_count_epsilon, 1.0, ledger, BudgetCharge("t", 0.02), RandomStream(1, (i,)))
        for i in range(4000)
    ]
    assert np.mean(np.abs(draws)) == pytest.approx(50.0, rel=0.05)


def test_noisy_value_noise_off_returns_truth_and_charges():
    ledger = BudgetLedger(1.0)
    v = noisy_value(17.0, 0.3, 1.0, ledger, BudgetCharge("x", 0.3), RandomStream(0), noise=False)
    assert v == 17.0
    assert ledger.consumed() == pytest.approx(0.3)


def test_ledger_rejects_overspend_atomically():
    ledger = BudgetLedger(1.0)
    noisy_value(0.0, 0.6, 1.0, ledger, BudgetCharge("a", 0.6), RandomStream(0))
    with pytest.raises(BudgetExceededError):
        noisy_value(0.0, 0.5, 1.0, ledger, BudgetCharge("b", 0.5), RandomStream(0))
    assert len(ledger.charges) == 1


def test_consumed_composition():
    assert consumed(BudgetLedger(1.0)) == 0.0
    seq = BudgetLedger(1.0)
    seq.charge(BudgetCharge("t", 0.02))
    seq.charge(BudgetCharge("l", 0.48))
    assert seq.consumed() == pytest.approx(0.50, abs=1e-15)
    par = BudgetLedger(1.0)
    par.charge_parallel("cell", 0.48, "leaves", 100)
    assert len(par.charges) == 100
    assert par.consumed() == pytest.approx(0.48, abs=1e-15)


def test_consumed_mixed_groups():
    ledger = BudgetLedger(2.0)
    ledger.charge(BudgetCharge("t", 0.1))
    ledger.charge(BudgetCharge("a", 0.3, "g1"))
    ledger.charge(BudgetCharge("b", 0.5, "g1"))
    ledger.charge(BudgetCharge("c", 0.2, "g2"))
    assert ledger.consumed() == pytest.approx(0.1 + 0.5 + 0.2)


@pytest.mark.parametrize("eps", [0.2, 0.5, 1.0, 0.37])
def test_full_allocation_totals_epsilon(eps):
    b = PrivacyBudget(eps)
    ledger = BudgetLedger(eps)
    ledger.charge(BudgetCharge("total", b.total_count_epsilon))
    ledger.charge_parallel("leaf", b.leaf_epsilon, "leaves", 500)
    assert abs(ledger.consumed() - eps) <= 1e-12


def test_budget_validation():
    with pytest.raises(ValueError):
        PrivacyBudget(0.0)
    with pytest.raises(ValueError):
        PrivacyBudget(1.0, beta=1.0)
    with pytest.raises(ValueError):
        BudgetCharge("x", 0.0)
    assert PrivacyBudget(1.0).beta == 0.04


def test_strict_leaf_scale_switch():
    b = PrivacyBudget(0.5, strict_leaf_scale=True)
    assert b.leaf_epsilon == 0.5
    assert b.ledger_cap == pytest.approx(0.52)
