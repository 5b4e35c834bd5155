"""
A learned two-level grid
========================

Generate drifting synthetic history, learn the level-2 split from trends,
and publish noisy leaf counts. Then refresh counts on the frozen grid.
"""
import numpy as np

from dpsc import BudgetLedger, PrivacyBudget, RandomStream, build_psd_rht, refresh_realtime_counts
from dpsc.geometry import Rect
from dpsc.harness import Cluster, SynthSpec, synth_generate
from dpsc.psd import Level1Grid, predict_distribution, prediction_error_rate

spec = SynthSpec(
    n_points=5000, n_periods=20, bounds=Rect(0, 0, 8000, 8000),
    clusters=[Cluster((2500, 4000), 450, 0.5, drift=0.01), Cluster((5500, 4000), 450, 0.5)],
)
ds = synth_generate(spec, RandomStream(1))
print("periods", ds.n_periods, "real-time points", len(ds.realtime))

eps = 0.5
ledger = BudgetLedger(eps)
psd = build_psd_rht(ds, PrivacyBudget(eps), ledger, RandomStream(2))
part = psd.partition
print("m1 =", part.m1, " leaves =", part.n_leaves, " consumed =", ledger.consumed())

# Dense level-1 cells get finer splits.
print("m2 per level-1 cell:")
print(part.m2)

# How well did per-cell trends predict the real-time layout?
grid = Level1Grid(ds.bounds, part.m1)
dist, _ = predict_distribution(ds, grid)
print("gamma = %.3f" % prediction_error_rate(dist * len(ds.realtime), grid.counts(ds.realtime)))

# Leaf counts are clamped at zero, so their sum drifts a little from the truth.
print("published total %.1f vs true %d" % (psd.counts.sum(), len(ds.realtime)))

# A refresh reuses the structure and spends only the leaf budget.
fresh_ledger = BudgetLedger(eps)
fresh = refresh_realtime_counts(psd, ds.realtime, PrivacyBudget(eps), fresh_ledger, RandomStream(3))
print("same structure:", fresh.partition is part, " refresh cost:", fresh_ledger.consumed())
print("mean |count change| per leaf: %.2f" % np.abs(fresh.counts - psd.counts).mean())
