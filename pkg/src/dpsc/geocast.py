"""Geocast-region construction on a published PSD.

Everything here consumes published counts only. Region builders:

* :func:`build_gr_rht` - quality-score greedy growth restricted to the MTD
  square and the LGR disc, with the Break rule.
* :func:`build_gr_greedy_utility` - the utility-greedy baseline and its
  hybrid (utility plus compactness) variant.
* :func:`build_gr_nonprivate` - nearest real workers, no grid.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .geometry import (
    Point, Rect, corner_mean_distance, corner_mean_distances, min_enclosing_circle, rect_corners,
    rect_point_distances,
)
from .psd import PSD, DomainError

EU_REACHED, BREAK, EXHAUSTED = "EU_reached", "break", "exhausted"


@dataclass(frozen=True)
class Task:
    location: Point
    eu: float = 0.9
    mtd: float = 300.0
    mar: float = 0.1
    task_id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "location", Point(float(self.location[0]), float(self.location[1])))
        if not 0 < self.eu < 1:
            raise ValueError("EU must lie in (0, 1)")
        if not self.mtd > 0:
            raise ValueError("MTD must be positive")
        if not 0 < self.mar <= 1:
            raise ValueError("MAR must lie in (0, 1]")


@dataclass
class GeocastRegion:
    """Ordered leaf ids (first is the covering leaf) and their noisy utility."""

    cells: list[int]
    utility: float
    termination: str
    r_loc: Optional[float] = None
    rects: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))
    keys: list[tuple[int, int, int, int]] = field(default_factory=list)
    task_id: int = 0

    @property
    def n_cells(self) -> int:
        return len(self.cells)


def _region(psd: PSD, cells, utility, termination, r_loc, task) -> GeocastRegion:
    part = psd.partition
    return GeocastRegion(
        cells=list(cells),
        utility=utility,
        termination=termination,
        r_loc=r_loc,
        rects=part.rects[list(cells)],
        keys=[part.key(c) for c in cells],
        task_id=task.task_id,
    )


# utility math

def acceptance_rate(d, mtd: float, mar: float):
    """Linear decay from ``mar`` at distance 0 to 0 at ``mtd`` and beyond."""
    ar = np.maximum(1.0 - np.asarray(d, dtype=float) / mtd, 0.0) * mar
    return ar if ar.ndim else float(ar)


def cell_utility(noisy_count, ar):
    """Chance that at least one of ``noisy_count`` workers accepts."""
    u = 1.0 - np.power(1.0 - np.asarray(ar, dtype=float), np.asarray(noisy_count, dtype=float))
    return u if u.ndim else float(u)


def combine_utility(u: float, u_c: float) -> float:
    return 1.0 - (1.0 - u) * (1.0 - u_c)


def mcd(contributions: Sequence, worker) -> float:
    """Mean distance from a worker's location to its past contributions."""
    pts = np.asarray(contributions, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise ValueError("worker has no contribution history")
    return float(np.hypot(pts[:, 0] - worker[0], pts[:, 1] - worker[1]).mean())


def mtd_from_mcd(mcd_value: float) -> float:
    return 0.9 * mcd_value


# quality scoring

@dataclass(frozen=True)
class AffineMap:
    """Increasing affine map from [lo, hi] onto [a, b], clamped outside."""

    lo: float
    hi: float
    a: float = 1.0
    b: float = 10.0

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        if self.hi <= self.lo:
            out = np.full(v.shape, self.a)
        else:
            t = np.clip((v - self.lo) / (self.hi - self.lo), 0.0, 1.0)
            out = self.a + (self.b - self.a) * t
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class ScoreMaps:
    f_s: AffineMap
    f_d: AffineMap

    @classmethod
    def from_psd(cls, psd: PSD, mtd: float, score_range: tuple[float, float] = (1.0, 10.0)) -> "ScoreMaps":
        part = psd.partition
        a, b = score_range
        small = part.rect(part.smallest_leaf)
        return cls(
            AffineMap(float(part.areas.min()), float(part.areas.max()), a, b),
            AffineMap(small.diagonal / 2.0, mtd, a, b),
        )


def cell_score(noisy_count, cell: Rect, task: Task, maps: ScoreMaps) -> float:
    return float(noisy_count) / (maps.f_s(cell.area) * maps.f_d(corner_mean_distance(cell, task.location)))


def _scores(counts, areas, dists, maps: ScoreMaps) -> np.ndarray:
    return counts / (maps.f_s(areas) * maps.f_d(dists))


# per-task cached quantities

class _TaskView:
    """Distances and utilities for the leaves a task can ever reach.

    Every leaf consulted by LGR growth or region growth meets the box of
    half-width ``MTD + diag(covering leaf) / 2`` around the task, so only those
    leaves are evaluated. Others keep infinite distance and zero utility.
    """

    def __init__(self, psd: PSD, task: Task):
        part = psd.partition
        self.psd = psd
        self.task = task
        self.start = part.locate_point(task.location)
        reach = task.mtd + part.rect(self.start).diagonal / 2.0
        self.local = part.leaves_near(task.location, reach)
        rects = part.rects[self.local]
        n = part.n_leaves
        self.cmd = np.full(n, np.inf)
        self.near = np.full(n, np.inf)
        self.utility = np.zeros(n)
        cmd = corner_mean_distances(rects, task.location)
        self.cmd[self.local] = cmd
        self.near[self.local] = rect_point_distances(rects, task.location)
        self.utility[self.local] = cell_utility(psd.counts[self.local], acceptance_rate(cmd, task.mtd, task.mar))

    def in_square(self, mtd: float) -> np.ndarray:
        r = self.psd.partition.rects[self.local]
        x, y = self.task.location
        out = np.zeros(len(self.near), dtype=bool)
        out[self.local] = (r[:, 2] >= x - mtd) & (r[:, 0] <= x + mtd) & (r[:, 3] >= y - mtd) & (r[:, 1] <= y + mtd)
        return out

    def scores(self, maps: "ScoreMaps") -> np.ndarray:
        part = self.psd.partition
        out = np.zeros(len(self.near))
        loc = self.local
        out[loc] = _scores(self.psd.counts[loc], part.areas[loc], self.cmd[loc], maps)
        return out


def _check_inside(psd: PSD, task: Task):
    b = psd.bounds
    x, y = task.location
    if not (b.min_x <= x <= b.max_x and b.min_y <= y <= b.max_y):
        raise DomainError(f"task at {tuple(task.location)} lies outside {b}")


def find_lgr(psd: PSD, task: Task, view: Optional[_TaskView] = None) -> float:
    """Radius of the local maximum geocast region.

    Start at the covering leaf's corner-mean distance and grow by half the
    width of the smallest leaf until the approximate utility of all leaves
    touching the disc reaches EU. Growth stops at MTD plus half the covering
    leaf's diagonal, which is returned when EU is never reached.
    """
    _check_inside(psd, task)
    v = view or _TaskView(psd, task)
    part = psd.partition
    start = v.start
    r = float(v.cmd[start])
    if v.utility[start] >= task.eu:
        return r
    small = part.rect(part.smallest_leaf)
    step = min(small.width, small.height) / 2.0
    r_max = task.mtd + part.rect(start).diagonal / 2.0

    order = v.local[np.argsort(v.near[v.local], kind="stable")]
    near = v.near[order]
    n = psd.counts[order]
    w = v.cmd[order] * np.abs(n)
    cum_abs = np.cumsum(np.abs(n))
    cum_w = np.cumsum(w)
    cum_n = np.cumsum(n)

    u = float(v.utility[start])
    while True:
        r += step
        if r >= r_max:
            return r_max
        k = int(np.searchsorted(near, r, side="right"))
        if k > 0 and cum_abs[k - 1] > 0:
            d_bar = cum_w[k - 1] / cum_abs[k - 1]
            n_sum = cum_n[k - 1]
            if n_sum > 0:
                u = cell_utility(n_sum, acceptance_rate(d_bar, task.mtd, task.mar))
        if u >= task.eu:
            return r


def build_gr_rht(
    psd: PSD,
    task: Task,
    maps: Optional[ScoreMaps] = None,
    lgr_fraction: float = 1.0,
    use_lgr: bool = True,
    use_break: bool = True,
    region: str = "square",
) -> GeocastRegion:
    """Grow a contiguous region by highest quality score until EU is met."""
    _check_inside(psd, task)
    maps = maps or ScoreMaps.from_psd(psd, task.mtd)
    v = _TaskView(psd, task)
    part = psd.partition

    allowed = v.in_square(task.mtd) if region == "square" else v.near <= task.mtd
    r_loc = None
    if use_lgr:
        r_loc = find_lgr(psd, task, v)
        allowed &= v.near <= lgr_fraction * r_loc
    scores = v.scores(maps)

    start = v.start
    gr = [start]
    in_gr = {start}
    u = float(v.utility[start])
    if u >= task.eu:
        return _region(psd, gr, u, EU_REACHED, r_loc, task)

    heap: list[tuple[float, int]] = []
    queued = set(in_gr)
    frontier = [start]
    while True:
        for c in frontier:
            for nb in part.neighbors(c):
                if nb not in queued and allowed[nb]:
                    queued.add(nb)
                    heapq.heappush(heap, (-scores[nb], nb))
        if not heap:
            return _region(psd, gr, u, EXHAUSTED, r_loc, task)
        neg, best = heap[0]
        if use_break and -neg <= 0:
            return _region(psd, gr, u, BREAK, r_loc, task)
        heapq.heappop(heap)
        gr.append(best)
        in_gr.add(best)
        u = combine_utility(u, float(v.utility[best]))
        frontier = [best]
        if u >= task.eu:
            return _region(psd, gr, u, EU_REACHED, r_loc, task)


def _dcm_of(rects: np.ndarray) -> float:
    corners = rect_corners(rects)
    circle = min_enclosing_circle(corners)
    area = float(((rects[:, 2] - rects[:, 0]) * (rects[:, 3] - rects[:, 1])).sum())
    return area / (math.pi * circle.radius ** 2)


def build_gr_greedy_utility(
    psd: PSD,
    task: Task,
    mode: str = "plain",
    alpha: float = 0.3,
    epsilon: Optional[float] = None,
    region: str = "square",
) -> GeocastRegion:
    """Utility-greedy growth; ``mode="hybrid"`` blends in region compactness.

    Hybrid score of candidate ``s``: ``(1-eps)*u*(1-alpha) + eps*Comp*alpha``
    where ``Comp`` is the DCM of the region with ``s`` added.
    """
    _check_inside(psd, task)
    if mode not in ("plain", "hybrid"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "hybrid" and (epsilon is None or not 0 <= epsilon <= 1):
        raise ValueError("hybrid mode needs epsilon in [0, 1]")
    v = _TaskView(psd, task)
    part = psd.partition
    allowed = v.in_square(task.mtd) if region == "square" else v.near <= task.mtd

    start = v.start
    gr = [start]
    u = float(v.utility[start])
    if u >= task.eu:
        return _region(psd, gr, u, EU_REACHED, None, task)

    queued = {start}
    candidates: list[int] = []
    heap: list[tuple[float, int]] = []
    frontier = [start]
    while True:
        for c in frontier:
            for nb in part.neighbors(c):
                if nb not in queued and allowed[nb]:
                    queued.add(nb)
                    if mode == "plain":
                        heapq.heappush(heap, (-float(v.utility[nb]), nb))
                    else:
                        candidates.append(nb)
        if mode == "plain":
            if not heap:
                return _region(psd, gr, u, EXHAUSTED, None, task)
            best = heapq.heappop(heap)[1]
        else:
            if not candidates:
                return _region(psd, gr, u, EXHAUSTED, None, task)
            base = part.rects[gr]
            best, best_val = -1, -math.inf
            for s in sorted(candidates):
                comp = _dcm_of(np.vstack([base, part.rects[s : s + 1]]))
                val = (1 - epsilon) * float(v.utility[s]) * (1 - alpha) + epsilon * comp * alpha
                if val > best_val:
                    best, best_val = s, val
            candidates.remove(best)
        gr.append(best)
        u = combine_utility(u, float(v.utility[best]))
        frontier = [best]
        if u >= task.eu:
            return _region(psd, gr, u, EU_REACHED, None, task)


@dataclass
class WorkerSelection:
    """Non-private region: indices of selected real workers, nearest first."""

    workers: list[int]
    distances: np.ndarray
    utility: float
    termination: str
    task_id: int = 0


def build_gr_nonprivate(workers, task: Task) -> WorkerSelection:
    pts = np.asarray(workers, dtype=float).reshape(-1, 2)
    d = np.hypot(pts[:, 0] - task.location[0], pts[:, 1] - task.location[1])
    order = np.argsort(d, kind="stable")
    order = order[d[order] < task.mtd]
    u = 0.0
    chosen = []
    for i in order:
        chosen.append(int(i))
        u = combine_utility(u, acceptance_rate(d[i], task.mtd, task.mar))
        if u >= task.eu:
            return WorkerSelection(chosen, d[chosen], u, EU_REACHED, task.task_id)
    return WorkerSelection(chosen, d[chosen], u, EXHAUSTED, task.task_id)


# serialization

def dump_gr(gr: GeocastRegion) -> str:
    r_loc = "none" if gr.r_loc is None else repr(float(gr.r_loc))
    cells = ";".join(":".join(map(str, k)) for k in gr.keys)
    return f"task={gr.task_id} termination={gr.termination} r_loc={r_loc} u={gr.utility!r} cells={cells}"


def load_gr(record: str, psd: PSD) -> GeocastRegion:
    fields = dict(tok.split("=", 1) for tok in record.split())
    keys = [tuple(map(int, k.split(":"))) for k in fields["cells"].split(";") if k]
    part = psd.partition
    cells = [part.leaf_id(*k) for k in keys]
    r_loc = None if fields["r_loc"] == "none" else float(fields["r_loc"])
    return GeocastRegion(
        cells=cells,
        utility=float(fields["u"]),
        termination=fields["termination"],
        r_loc=r_loc,
        rects=part.rects[cells],
        keys=keys,
        task_id=int(fields["task"]),
    )
