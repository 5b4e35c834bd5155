"""
Growing a geocast region
========================

Build one region with score-greedy growth under LGR and Break, and one with
utility-greedy growth, then check both against the real workers.
"""
from dpsc import (
    BudgetLedger, PrivacyBudget, RandomStream, Task, build_gr_greedy_utility, build_gr_nonprivate, build_gr_rht,
    build_psd_ggr, build_psd_rht, find_lgr,
)
from dpsc.geocast import dump_gr
from dpsc.geometry import Rect
from dpsc.harness import Cluster, SynthSpec, synth_generate
from dpsc.metrics import dcm, hop, true_success_probability

spec = SynthSpec(5000, 20, [Cluster((2500, 4000), 450, 0.5), Cluster((5500, 4000), 450, 0.5)], Rect(0, 0, 8000, 8000))
ds = synth_generate(spec, RandomStream(1))
workers = ds.realtime

rht = build_psd_rht(ds, PrivacyBudget(0.5), BudgetLedger(0.5), RandomStream(4))
ggr = build_psd_ggr(workers, ds.bounds, 0.5, BudgetLedger(0.5), RandomStream(4))

task = Task(location=(2950.0, 4200.0), eu=0.9, mtd=800.0, mar=0.2, task_id=1)
print("LGR radius %.1f m" % find_lgr(rht, task))

for name, gr in [("R-HT", build_gr_rht(rht, task)), ("G-GR", build_gr_greedy_utility(ggr, task))]:
    truth = true_success_probability(gr, workers, task, ds.bounds)
    print(f"{name}: {gr.n_cells} cells, noisy U {gr.utility:.3f}, true {truth:.3f}, "
          f"hop {hop(gr):.2f}, dcm {dcm(gr):.3f}, {gr.termination}")

print(dump_gr(build_gr_rht(rht, task))[:120], "...")

# With exact positions, the nearest workers inside MTD are enough.
sel = build_gr_nonprivate(workers, task)
print("non-private: %d workers, %s" % (len(sel.workers), sel.termination))
