"""Experiment configuration, the snapshot protocol, timing and sweeps."""
from __future__ import annotations

import configparser
import csv
import io
import math
import time
import weakref
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from ..dp import BudgetLedger, PrivacyBudget, RandomStream
from ..geocast import (
    ScoreMaps, Task, build_gr_greedy_utility, build_gr_nonprivate, build_gr_rht,
)
from ..geometry import point_set_diameter
from ..metrics import (
    MetricsReport, TaskRecord, aggregate, anw, dcm, hop, simulate_from_distances, success_from_distances,
)
from ..psd import (
    GDY, GGR, RHT, PSD, Partition, PeriodizedDataset, build_psd_gdy, build_psd_ggr, partition_rht,
    publish_counts,
)
from .data import read_dataset, sample_tasks, synth_generate, synth_spec_from_config

SCHEMES = ("RHT", "GGR", "GGR_hybrid", "GDY", "nonprivate")

SWEEP_GRIDS = {
    "epsilon": (0.2, 0.4, 0.6, 0.8, 1.0),
    "eu": (0.6, 0.7, 0.8, 0.9),
    "mar": (0.05, 0.1, 0.15, 0.2, 0.25),
}

# stream roles under the experiment seed
_TASKS, _BUILDS, _TRIALS = 0, 1, 2


@dataclass
class ExperimentConfig:
    scheme: str = "RHT"
    epsilon: float = 0.5
    eu: float = 0.9
    mar: float = 0.1
    mtd_m: float = 300.0
    lgr_fraction: float = 1.0
    use_lgr: bool = True
    use_break: bool = True
    n_tasks: int = 2000
    n_partitions: int = 10
    n_noise_draws: int = 20
    n_rebuilds: int = 50
    trials: int = 100
    seed: int = 0
    score_range: tuple = (1.0, 10.0)
    beta: float = 0.04
    ggr_splits: tuple = (0.04, 0.48, 0.48)
    hybrid_alpha: float = 0.3
    gdy_c: float = 10.0
    region: str = "square"
    wtd_mode: str = "nearest"
    strict_leaf_scale: bool = False
    noise: bool = True
    jobs: int = 1

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {', '.join(SCHEMES)}")
        if self.region not in ("square", "disc"):
            raise ValueError("region must be 'square' or 'disc'")
        if self.wtd_mode not in ("nearest", "mean_notified"):
            raise ValueError("wtd_mode must be 'nearest' or 'mean_notified'")

    @property
    def budget(self) -> PrivacyBudget:
        return PrivacyBudget(self.epsilon, self.beta, self.strict_leaf_scale)

    @property
    def n_snapshots(self) -> int:
        if self.scheme == "RHT":
            return self.n_partitions * self.n_noise_draws
        if self.scheme == "nonprivate":
            return 1
        return self.n_rebuilds


def _coerce(kind, raw: str):
    raw = raw.strip()
    if kind is bool:
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if kind is tuple:
        return tuple(float(v) for v in raw.split(","))
    return kind(raw)


_FIELD_TYPES = {
    f.name: ({"float": float, "int": int, "bool": bool, "str": str, "tuple": tuple}[f.type])
    for f in fields(ExperimentConfig)
}


def config_from_parser(cp: configparser.ConfigParser) -> ExperimentConfig:
    kwargs = {}
    if cp.has_section("experiment"):
        for key, raw in cp["experiment"].items():
            if key == "schemes":
                continue
            if key not in _FIELD_TYPES:
                raise ValueError(f"unknown experiment key {key!r}")
            kwargs[key] = _coerce(_FIELD_TYPES[key], raw)
    return ExperimentConfig(**kwargs)


def read_config(path) -> tuple[ExperimentConfig, configparser.ConfigParser]:
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise FileNotFoundError(path)
    return config_from_parser(cp), cp


def dataset_from_parser(cp: configparser.ConfigParser, base: Path, seed: int) -> PeriodizedDataset:
    if cp.has_section("dataset") and "path" in cp["dataset"]:
        return read_dataset(base / cp["dataset"]["path"])
    if cp.has_section("synth"):
        spec = synth_spec_from_config(cp)
        data_seed = int(cp["synth"].get("seed", str(seed)))
        return synth_generate(spec, RandomStream(data_seed))
    raise ValueError("config needs a [dataset] path or a [synth] section")


def schemes_from_parser(cp: configparser.ConfigParser, cfg: ExperimentConfig) -> list[str]:
    if cp.has_section("experiment") and "schemes" in cp["experiment"]:
        return [s.strip() for s in cp["experiment"]["schemes"].split(",") if s.strip()]
    return [cfg.scheme]


@dataclass
class TimingRecord:
    """Milliseconds per stage: A (full build), A2 (count refresh), B (one GR)."""

    scheme: str
    stages: dict = field(default_factory=lambda: {"A": [], "A2": [], "B": []})

    def add(self, stage: str, seconds: float):
        self.stages.setdefault(stage, []).append(seconds * 1e3)

    def mean_ms(self, stage: str) -> float:
        v = self.stages.get(stage) or []
        return float(np.mean(v)) if v else math.nan

    def p95_ms(self, stage: str) -> float:
        v = self.stages.get(stage) or []
        return float(np.percentile(v, 95)) if v else math.nan

    def to_csv(self, header: bool = True) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if header:
            w.writerow(["scheme", "stage", "mean_ms", "p95_ms"])
        for stage in ("A", "A2", "B"):
            if self.stages.get(stage):
                w.writerow([self.scheme, stage, f"{self.mean_ms(stage):.6f}", f"{self.p95_ms(stage):.6f}"])
        return buf.getvalue()


def _tasks(cfg: ExperimentConfig, dataset: PeriodizedDataset, root: RandomStream) -> list[Task]:
    locs = sample_tasks(dataset.realtime, cfg.n_tasks, root.child(_TASKS))
    return [Task((x, y), cfg.eu, cfg.mtd_m, cfg.mar, i) for i, (x, y) in enumerate(locs.tolist())]


def _build_region(cfg: ExperimentConfig, psd: PSD, task: Task, maps: Optional[ScoreMaps]):
    if cfg.scheme == "RHT":
        return build_gr_rht(psd, task, maps, cfg.lgr_fraction, cfg.use_lgr, cfg.use_break, cfg.region)
    if cfg.scheme == "GGR_hybrid":
        return build_gr_greedy_utility(psd, task, "hybrid", cfg.hybrid_alpha, cfg.epsilon, cfg.region)
    return build_gr_greedy_utility(psd, task, "plain", region=cfg.region)


def _evaluate_snapshot(cfg, psd: PSD, snapshot_id: int, tasks, workers, worker_leaf, root, timing):
    maps = ScoreMaps.from_psd(psd, cfg.mtd_m, cfg.score_range)
    records = []
    for task in tasks:
        t0 = time.perf_counter()
        try:
            gr = _build_region(cfg, psd, task, maps)
        except ValueError as e:
            raise type(e)(f"snapshot {snapshot_id}, task {task.task_id}: {e}") from e
        timing.add("B", time.perf_counter() - t0)
        idx = np.flatnonzero(np.isin(worker_leaf, gr.cells))
        d = np.hypot(workers[idx, 0] - task.location.x, workers[idx, 1] - task.location.y)
        outcomes = simulate_from_distances(
            idx, d, task, cfg.trials, root.child(_TRIALS, snapshot_id, task.task_id), cfg.wtd_mode
        )
        wtds = [o.wtd for o in outcomes if o.success]
        records.append(TaskRecord(
            task.task_id, snapshot_id, success_from_distances(d, task),
            float(np.mean(wtds)) if wtds else None, hop(gr), len(idx), dcm(gr), gr.n_cells,
            gr.termination, wtds,
        ))
    return records


def _snapshots(cfg: ExperimentConfig, dataset: PeriodizedDataset, root: RandomStream, timing: TimingRecord):
    """Yield ``(snapshot_id, psd, ledger)`` following the scheme's protocol."""
    budget = cfg.budget
    builds = root.child(_BUILDS)
    if cfg.scheme == "RHT":
        for p in range(cfg.n_partitions):
            ledger = BudgetLedger(budget.ledger_cap)
            t0 = time.perf_counter()
            partition = partition_rht(dataset, budget, ledger, builds.child(p, 0), noise=cfg.noise)
            t_part = time.perf_counter() - t0
            for q in range(cfg.n_noise_draws):
                sid = p * cfg.n_noise_draws + q
                snap_ledger = ledger.copy()
                t0 = time.perf_counter()
                psd = publish_counts(partition, dataset.realtime, budget.leaf_epsilon, snap_ledger,
                                     builds.child(p, 1, q), RHT, sid, cfg.noise)
                t_pub = time.perf_counter() - t0
                timing.add("A2", t_pub)
                if q == 0:
                    timing.add("A", t_part + t_pub)
                yield sid, psd, snap_ledger
        return
    for s in range(cfg.n_rebuilds):
        ledger = BudgetLedger(cfg.epsilon)
        rng = builds.child(s)
        t0 = time.perf_counter()
        if cfg.scheme == "GDY":
            psd = build_psd_gdy(dataset.realtime, dataset.bounds, cfg.epsilon, ledger, rng,
                                cfg.beta, cfg.gdy_c, cfg.noise, s)
        else:
            psd = build_psd_ggr(dataset.realtime, dataset.bounds, cfg.epsilon, ledger, rng,
                                tuple(cfg.ggr_splits), cfg.noise, s)
        timing.add("A", time.perf_counter() - t0)
        yield s, psd, ledger


def _run_nonprivate(cfg, dataset, tasks, root, timing):
    workers = dataset.realtime
    records = []
    for task in tasks:
        t0 = time.perf_counter()
        sel = build_gr_nonprivate(workers, task)
        timing.add("B", time.perf_counter() - t0)
        outcomes = simulate_from_distances(
            sel.workers, sel.distances, task, cfg.trials, root.child(_TRIALS, 0, task.task_id), cfg.wtd_mode
        )
        wtds = [o.wtd for o in outcomes if o.success]
        h = point_set_diameter(workers[sel.workers]) / 100.0 if sel.workers else None
        records.append(TaskRecord(
            task.task_id, 0, success_from_distances(sel.distances, task),
            float(np.mean(wtds)) if wtds else None, h, len(sel.workers), None, None,
            sel.termination, wtds,
        ))
    return records


def run_experiment(cfg: ExperimentConfig, dataset: PeriodizedDataset) -> tuple[MetricsReport, TimingRecord]:
    root = RandomStream(cfg.seed)
    tasks = _tasks(cfg, dataset, root)
    timing = TimingRecord(cfg.scheme)
    workers = dataset.realtime
    if cfg.scheme == "nonprivate":
        records = _run_nonprivate(cfg, dataset, tasks, root, timing)
        n_snap = 1
    else:
        leaf_cache: "weakref.WeakKeyDictionary[Partition, np.ndarray]" = weakref.WeakKeyDictionary()

        def job(item):
            sid, psd, _ = item
            wl = leaf_cache.get(psd.partition)
            if wl is None:
                wl = leaf_cache[psd.partition] = psd.partition.locate(workers)
            return _evaluate_snapshot(cfg, psd, sid, tasks, workers, wl, root, timing)

        snaps = _snapshots(cfg, dataset, root, timing)
        if cfg.jobs > 1:
            with ThreadPoolExecutor(cfg.jobs) as pool:
                chunks = list(pool.map(job, snaps))
        else:
            chunks = [job(s) for s in snaps]
        records = [r for chunk in chunks for r in chunk]
        n_snap = cfg.n_snapshots
    report = aggregate(records, cfg.scheme, cfg.epsilon, cfg.eu, cfg.mar,
                       len(tasks), n_snap, cfg.trials, cfg.seed)
    return report, timing


def run_to_dir(cfg: ExperimentConfig, dataset: PeriodizedDataset, out: Path) -> tuple[Path, Path]:
    report, timing = run_experiment(cfg, dataset)
    out.mkdir(parents=True, exist_ok=True)
    m, t = out / "metrics.csv", out / "timing.csv"
    m.write_text(report.to_csv())
    t.write_text(timing.to_csv())
    return m, t


SWEEP_COLUMNS = ("scheme", "param", "value", "epsilon", "eu", "mar",
                 "asr", "wtd", "hop", "anw", "dcm", "cell", "compliant")


def sweep(cfg: ExperimentConfig, dataset: PeriodizedDataset, param: str, values=None) -> str:
    """One aggregate row per value of ``param``; returns CSV text."""
    if param not in SWEEP_GRIDS:
        raise ValueError(f"cannot sweep {param!r}; choose from {', '.join(SWEEP_GRIDS)}")
    values = SWEEP_GRIDS[param] if values is None else values
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for v in values:
        report, _ = run_experiment(replace(cfg, **{param: float(v)}), dataset)
        w.writerow([cfg.scheme, param, repr(float(v)), repr(report.epsilon), repr(report.eu), repr(report.mar),
                    *(_f(x) for x in (report.asr, report.wtd_mean, report.hop_mean, report.anw_mean,
                                      report.dcm_mean, report.cell_mean)),
                    int(report.compliant)])
    return buf.getvalue()


def _f(x) -> str:
    return "" if x is None or math.isnan(x) else repr(float(x))
