"""
Comparing schemes
=================

Run the snapshot protocol for every scheme on one small fixture, then sweep
the privacy budget for the learned grid.
"""
from dataclasses import replace

from dpsc import RandomStream
from dpsc.geometry import Rect
from dpsc.harness import Cluster, ExperimentConfig, SynthSpec, run_experiment, sweep, synth_generate

spec = SynthSpec(5000, 20, [Cluster((2500, 4000), 450, 0.5), Cluster((5500, 4000), 450, 0.5)], Rect(0, 0, 8000, 8000))
ds = synth_generate(spec, RandomStream(1))

cfg = ExperimentConfig(eu=0.9, mar=0.2, mtd_m=800, n_tasks=60, n_partitions=2, n_noise_draws=5,
                       n_rebuilds=10, trials=20, seed=3)
print("scheme       asr    wtd     cells  anw")
for scheme in ("nonprivate", "RHT", "GGR", "GGR_hybrid", "GDY"):
    rep, timing = run_experiment(replace(cfg, scheme=scheme), ds)
    print(f"{scheme:<11} {rep.asr:.3f}  {rep.wtd_mean:6.1f}  {rep.cell_mean:5.2f}  {rep.anw_mean:6.1f}")

# Stage means in milliseconds for the learned grid.
_, timing = run_experiment(cfg, ds)
print(timing.to_csv())

print(sweep(replace(cfg, n_partitions=1), ds, "epsilon"))
