"""
Laplace noise and budget bookkeeping
====================================

Draw calibrated noise, then watch a ledger add sequential charges and
collapse a parallel group to its largest member.
"""
import numpy as np
from scipy import stats

from dpsc import BudgetCharge, BudgetLedger, PrivacyBudget, RandomStream, laplace_sample

# A seeded stream; children are independent of each other.
root = RandomStream(2024)
x = laplace_sample(2.0, root.child(0), 100_000)
print("mean %.4f  var %.4f (expect 8)" % (x.mean(), x.var()))
print("KS vs scipy laplace: %.4f" % stats.kstest(x, stats.laplace(scale=2.0).cdf).statistic)

# Same path, same draws.
print(np.array_equal(laplace_sample(1.0, root.child(5), 3), laplace_sample(1.0, root.child(5), 3)))

# Default split at eps = 0.5: a small slice for the total, the rest for leaves.
budget = PrivacyBudget(0.5)
print("total-count eps", budget.total_count_epsilon, "leaf eps", budget.leaf_epsilon)

ledger = BudgetLedger(0.5)
ledger.charge(BudgetCharge("total-count", budget.total_count_epsilon))
# 400 disjoint leaves cost one leaf charge under parallel composition.
ledger.charge_parallel("leaf-count", budget.leaf_epsilon, "leaves", 400)
print("charges", len(ledger.charges), "consumed", ledger.consumed(), "remaining", ledger.remaining())
