"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line."""
import math
import time
from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

from dpsc.dp import BudgetLedger, PrivacyBudget, RandomStream, laplace_sample
from dpsc.geocast import (
    AffineMap, ScoreMaps, Task, acceptance_rate, build_gr_nonprivate, build_gr_rht, cell_score, cell_utility,
    combine_utility,
)
from dpsc.geometry import Rect, min_enclosing_circle
from dpsc.harness import cli
from dpsc.harness.data import Cluster, SynthSpec, sample_tasks, synth_generate
from dpsc.harness.experiment import ExperimentConfig, run_experiment
from dpsc.metrics import success_from_distances, true_success_probability
from dpsc.psd import (
    Level1Grid, build_psd_gdy, build_psd_ggr, build_psd_rht, level1_granularity, level2_granularity,
    predict_distribution, prediction_error_rate,
)

from oracles import brute_force_circle_np

BOUNDS = Rect(0, 0, 8000, 8000)
MTD, MAR, EU = 800.0, 0.2, 0.9


def two_cluster_spec(n=5000):
    clusters = [Cluster((2500, 4000), 450, 0.5), Cluster((5500, 4000), 450, 0.5)]
    return SynthSpec(n, 20, clusters, BOUNDS, realtime_points=5000)


@pytest.fixture(scope="module")
def fixture_ds():
    return synth_generate(two_cluster_spec(), RandomStream(1))


@pytest.fixture(scope="module")
def base_cfg():
    # 4 learned partitions x 10 noise draws = 40 R-HT snapshots; 40 baseline rebuilds.
    return ExperimentConfig(
        scheme="RHT", epsilon=0.5, eu=EU, mar=MAR, mtd_m=MTD, n_tasks=200,
        n_partitions=4, n_noise_draws=10, n_rebuilds=40, trials=20, seed=3,
    )


_runs = {}


def run_cached(cfg, ds):
    key = (cfg.scheme, cfg.use_lgr, cfg.use_break)
    if key not in _runs:
        t0 = time.perf_counter()
        report, timing = run_experiment(cfg, ds)
        _runs[key] = (report, timing, time.perf_counter() - t0)
    return _runs[key]


@pytest.fixture
def verdict(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'} | {detail}")
        return ok

    return emit


def test_criterion_01_budget_exactness(fixture_ds, verdict):
    worst, slowest = 0.0, 0.0
    for eps in (0.2, 0.5, 1.0):
        builds = {
            "RHT": lambda l: build_psd_rht(fixture_ds, PrivacyBudget(eps), l, RandomStream(1)),
            "GGR": lambda l: build_psd_ggr(fixture_ds.realtime, BOUNDS, eps, l, RandomStream(1)),
            "GDY": lambda l: build_psd_gdy(fixture_ds.realtime, BOUNDS, eps, l, RandomStream(1)),
        }
        for build in builds.values():
            ledger = BudgetLedger(eps)
            t0 = time.perf_counter()
            build(ledger)
            slowest = max(slowest, time.perf_counter() - t0)
            worst = max(worst, abs(ledger.consumed() - eps))
    ok = worst <= 1e-12 and slowest < 1.0
    assert verdict(1, ok, f"max |consumed - eps| = {worst:.2e}, slowest build {slowest:.3f}s")


def test_criterion_02_laplace(verdict):
    t0 = time.perf_counter()
    x = laplace_sample(2.0, RandomStream(2024), 100_000)
    ks = stats.kstest(x, stats.laplace(scale=2.0).cdf).statistic
    elapsed = time.perf_counter() - t0
    ok = abs(x.mean()) < 0.05 and abs(x.var() - 8) < 0.4 and ks < 0.01 and elapsed < 5
    assert verdict(2, ok, f"mean {x.mean():.4f}, var {x.var():.4f}, KS {ks:.4f}, {elapsed:.2f}s")


def _close(a, b, rel):
    return abs(a - b) <= rel * max(abs(a), abs(b), 1e-300)


def test_criterion_03_formula_oracles(verdict):
    g = np.random.default_rng(33)
    t0 = time.perf_counter()
    bad = []
    for _ in range(100):
        # level-1 granularity
        n, eps = g.uniform(0, 1e6), g.uniform(0.05, 2)
        m1 = max(10, math.ceil(0.25 * math.sqrt(max(n, 0) * eps / 10)))
        if level1_granularity(n, eps) != m1:
            bad.append(("m1", n, eps))
        # level-2 granularity
        ns, ep = float(g.integers(0, 50_000)), g.uniform(0.01, 1)
        m2 = max(1, math.ceil(math.sqrt(ns * ep / math.sqrt(2))))
        if level2_granularity(ns, ep) != m2:
            bad.append(("m2", ns, ep))
        # quality score with affine maps onto [1, 10]
        lo_s, hi_s = sorted(g.uniform(1, 1e5, 2))
        lo_d, hi_d = sorted(g.uniform(1, 2000, 2))
        maps = ScoreMaps(AffineMap(lo_s, hi_s), AffineMap(lo_d, hi_d))
        w, h = g.uniform(1, 300, 2)
        x0, y0 = g.uniform(0, 1000, 2)
        cell = Rect(x0, y0, x0 + w, y0 + h)
        px, py = g.uniform(0, 1000, 2)
        count = g.uniform(0, 50)
        area = w * h
        corners = [(x0, y0), (x0 + w, y0), (x0 + w, y0 + h), (x0, y0 + h)]
        dist = sum(math.sqrt((cx - px) ** 2 + (cy - py) ** 2) for cx, cy in corners) / 4
        fs = 1 + 9 * min(max((area - lo_s) / (hi_s - lo_s), 0), 1)
        fd = 1 + 9 * min(max((dist - lo_d) / (hi_d - lo_d), 0), 1)
        if not _close(cell_score(count, cell, Task((px, py)), maps), count / (fs * fd), 1e-12):
            bad.append(("score", count))
        # acceptance rate
        d, mtd, mar = g.uniform(0, 1500), g.uniform(100, 1000), g.uniform(0.01, 1)
        ar = (1 - d / mtd) * mar if d < mtd else 0.0
        if not _close(acceptance_rate(d, mtd, mar), ar, 1e-12) and not (ar == 0 == acceptance_rate(d, mtd, mar)):
            bad.append(("ar", d, mtd, mar))
        # cell utility
        nc, a = g.uniform(0, 200), g.uniform(0, 0.99)
        if not _close(cell_utility(nc, a), 1 - math.pow(1 - a, nc), 1e-9):
            bad.append(("ucell", nc, a))
        # utility fold
        us = g.uniform(0, 0.5, g.integers(1, 20))
        u = 0.0
        for ui in us:
            u = combine_utility(u, ui)
        if not _close(u, 1 - math.prod(1 - ui for ui in us), 1e-9):
            bad.append(("fold", us))
    elapsed = time.perf_counter() - t0
    ok = not bad and elapsed < 1.0
    assert verdict(3, ok, f"{len(bad)} mismatches over 6 x 100 inputs, {elapsed:.3f}s")


def test_criterion_04_min_enclosing_circle(verdict):
    g = np.random.default_rng(44)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        n = int(g.integers(1, 51))
        pts = g.uniform(-100, 100, (n, 2))
        _, r = brute_force_circle_np(pts)
        worst = max(worst, abs(min_enclosing_circle(pts).radius - r))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and elapsed < 30
    assert verdict(4, ok, f"max radius gap {worst:.2e} over 200 sets, {elapsed:.2f}s")


def test_criterion_05_noise_free_reduction(verdict):
    # Uniform worker density, the fixture on which the reduction is claimed.
    spec = SynthSpec(5000, 20, [], BOUNDS, uniform_weight=1.0)
    ds = synth_generate(spec, RandomStream(5))
    psd = build_psd_rht(ds, PrivacyBudget(0.5), BudgetLedger(0.5), RandomStream(6), noise=False)
    exact = psd.counts.sum() == len(ds.realtime)
    leaf = psd.partition.locate(ds.realtime)
    reachable = misses = 0
    terms = set()
    for i, (x, y) in enumerate(sample_tasks(ds.realtime, 500, RandomStream(7)).tolist()):
        task = Task((x, y), EU, MTD, MAR, i)
        sel = build_gr_nonprivate(ds.realtime, task)
        gr = build_gr_rht(psd, task)
        terms.add(gr.termination)
        if success_from_distances(sel.distances, task) >= EU:
            reachable += 1
            misses += true_success_probability(gr, ds.realtime, task, worker_leaf=leaf) < EU
    ok = bool(exact) and reachable > 0 and misses == 0
    assert verdict(5, ok, f"sum counts exact={bool(exact)}, {misses} misses among {reachable} reachable tasks, "
                          f"terminations {sorted(terms)}")


def test_criterion_06_eu_compliance(fixture_ds, base_cfg, verdict):
    t0 = time.perf_counter()
    base, _, _ = run_cached(replace(base_cfg, scheme="nonprivate"), fixture_ds)
    frac = np.mean([r.asr >= EU for r in base.records])
    rht, _, _ = run_cached(base_cfg, fixture_ds)
    ggr, _, _ = run_cached(replace(base_cfg, scheme="GGR"), fixture_ds)
    elapsed = time.perf_counter() - t0
    ok = frac >= 0.99 and rht.asr >= EU - 0.03 and ggr.asr < rht.asr and elapsed < 180
    assert rht.n_snapshots == 40 and len(rht.records) == 200 * 40
    assert verdict(6, ok, f"non-private at EU {frac:.3f}, R-HT ASR {rht.asr:.4f}, G-GR ASR {ggr.asr:.4f}, "
                          f"{elapsed:.1f}s")


def test_criterion_07_prediction_quality(fixture_ds, verdict):
    t0 = time.perf_counter()
    gammas = []
    eps = 0.5
    for s in range(10):
        noisy = len(fixture_ds.realtime) + float(laplace_sample(1 / (0.04 * eps), RandomStream(70, (s,))))
        grid = Level1Grid(BOUNDS, level1_granularity(noisy, eps))
        dist, _ = predict_distribution(fixture_ds, grid)
        gammas.append(prediction_error_rate(dist * noisy, grid.counts(fixture_ds.realtime)))
    elapsed = time.perf_counter() - t0
    ok = max(gammas) < 0.35 and elapsed < 30
    assert verdict(7, ok, f"gamma mean {np.mean(gammas):.4f}, max {max(gammas):.4f} over 10 noisy totals, "
                          f"{elapsed:.2f}s")


def _diam_over_dcm(report):
    return float(np.mean([r.hop / r.dcm for r in report.records]))


def test_criterion_08_lgr_and_break(fixture_ds, base_cfg, verdict):
    t0 = time.perf_counter()
    full, _, _ = run_cached(base_cfg, fixture_ds)
    no_lgr, _, _ = run_cached(replace(base_cfg, use_lgr=False), fixture_ds)
    no_break, _, _ = run_cached(replace(base_cfg, use_break=False), fixture_ds)
    elapsed = time.perf_counter() - t0
    lgr_ok = no_lgr.asr - full.asr <= 0.01 and _diam_over_dcm(full) < _diam_over_dcm(no_lgr)
    break_ok = full.cell_mean < no_break.cell_mean and abs(full.asr - no_break.asr) < 0.01
    ok = lgr_ok and break_ok and elapsed < 180
    assert verdict(8, ok, (
        f"LGR: ASR {no_lgr.asr:.4f} -> {full.asr:.4f}, diameter/DCM {_diam_over_dcm(no_lgr):.4f} -> "
        f"{_diam_over_dcm(full):.4f}; Break: CELL {no_break.cell_mean:.4f} -> {full.cell_mean:.4f}, "
        f"ASR {no_break.asr:.4f} -> {full.asr:.4f}; {elapsed:.1f}s"
    ))


def test_criterion_09_timing(fixture_ds, base_cfg, verdict):
    # 20 historical periods x 5,000 points (100k) plus 5,000 real-time points.
    t0 = time.perf_counter()
    _, timing, _ = run_cached(base_cfg, fixture_ds)
    a, a2, b = (timing.mean_ms(s) for s in ("A", "A2", "B"))
    elapsed = time.perf_counter() - t0
    ratio = (a2 + b) / (a + b)
    ok = b < 50 and a2 + b < 60 and ratio < 0.1 and elapsed < 300
    assert verdict(9, ok, f"A {a:.3f} ms, A2 {a2:.3f} ms, B {b:.3f} ms, (A2+B)/(A+B) = {ratio:.3f}")


def test_criterion_10_determinism(tmp_path, verdict):
    t0 = time.perf_counter()
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert cli.main(["experiment", "--seed", "12", "--out", str(out)]) == 0
        outs.append((out / "metrics.csv").read_bytes())
    elapsed = time.perf_counter() - t0
    ok = outs[0] == outs[1] and len(outs[0]) > 0 and elapsed < 180
    assert verdict(10, ok, f"metrics.csv identical={outs[0] == outs[1]} ({len(outs[0])} bytes), {elapsed:.1f}s")
