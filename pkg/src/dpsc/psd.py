"""Private spatial decompositions over two-level adaptive grids.

A :class:`Partition` is the frozen grid structure: an ``m1 x m1`` level-1
grid whose cell ``(row, col)`` is split into ``m2[row, col]`` squared
leaves. Leaves are stored flat, ordered by ``(row, col, r, c)``; rows index
the y axis and columns the x axis. A :class:`PSD` pairs a partition with
one set of published (noisy, clamped) leaf counts.

Raw counts only exist inside the build functions of this module.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .dp import BudgetCharge, BudgetLedger, PrivacyBudget, RandomStream, laplace_sample, noisy_value
from .geometry import Rect, make_rect

K1 = 10.0
K2 = math.sqrt(2.0)
MIN_M1 = 10

RHT, GGR, GDY = "RHT", "GGR", "GDY"

# child stream ids
_TOTAL, _SAMPLE, _LEVEL1, _LEAVES = 0, 1, 2, 3


class InsufficientHistoryError(ValueError):
    pass


class UndefinedRateError(ValueError):
    pass


class DomainError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PeriodizedDataset:
    """Historical periods ``h_1..h_n`` plus the real-time snapshot.

    Point sets are ``(k, 2)`` float arrays in meters.
    """

    historical: tuple
    realtime: np.ndarray
    bounds: Rect

    def __post_init__(self):
        object.__setattr__(self, "historical", tuple(_as_points(h) for h in self.historical))
        object.__setattr__(self, "realtime", _as_points(self.realtime))

    @property
    def n_periods(self) -> int:
        return len(self.historical)


def _as_points(a) -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    if arr.size == 0:
        return np.zeros((0, 2))
    return arr.reshape(-1, 2)


def _edge(lo, hi, n, k):
    """k-th of n+1 evenly spaced edges on [lo, hi]; the last edge is exactly hi."""
    k = np.asarray(k)
    out = np.where(k >= n, hi, lo + (hi - lo) * k / n)
    return out if out.ndim else float(out)


def _bin_1d(v, lo, hi, n):
    """Half-open bin index of v among n bins on [lo, hi], with hi closed."""
    span = hi - lo
    idx = np.floor((v - lo) / span * n).astype(np.int64)
    np.clip(idx, 0, n - 1, out=idx)
    # Correct rounding against the exact edges used for the rects. Only
    # interior edges matter, and those follow the non-final branch of _edge.
    idx -= (v < lo + span * idx / n) & (idx > 0)
    idx += (v >= lo + span * (idx + 1) / n) & (idx < n - 1)
    return idx


def _bin_scalar(v: float, lo: float, hi: float, n: int) -> int:
    """Scalar :func:`_bin_1d` with the same float arithmetic."""
    span = hi - lo
    idx = min(max(math.floor((v - lo) / span * n), 0), n - 1)
    if idx > 0 and v < lo + span * idx / n:
        idx -= 1
    if idx < n - 1 and v >= lo + span * (idx + 1) / n:
        idx += 1
    return idx


@dataclass(frozen=True)
class Level1Grid:
    bounds: Rect
    m1: int

    def __post_init__(self):
        if self.m1 < 1:
            raise ValueError("m1 must be positive")

    @property
    def n_cells(self) -> int:
        return self.m1 * self.m1

    def cell(self, row: int, col: int) -> Rect:
        b, m = self.bounds, self.m1
        return Rect(
            _edge(b.min_x, b.max_x, m, col),
            _edge(b.min_y, b.max_y, m, row),
            _edge(b.min_x, b.max_x, m, col + 1),
            _edge(b.min_y, b.max_y, m, row + 1),
        )

    @property
    def cells(self) -> list[list[Rect]]:
        return [[self.cell(r, c) for c in range(self.m1)] for r in range(self.m1)]

    def locate(self, points) -> np.ndarray:
        """Flat level-1 index ``row * m1 + col`` of each point."""
        pts = _as_points(points)
        b, m = self.bounds, self.m1
        col = _bin_1d(np.ascontiguousarray(pts[:, 0]), b.min_x, b.max_x, m)
        row = _bin_1d(np.ascontiguousarray(pts[:, 1]), b.min_y, b.max_y, m)
        return row * m + col

    def counts(self, points) -> np.ndarray:
        return np.bincount(self.locate(points), minlength=self.n_cells)


class Partition:
    """Frozen two-level grid structure shared by every snapshot built on it."""

    def __init__(self, bounds: Rect, m1: int, m2):
        self.level1 = Level1Grid(bounds, int(m1))
        m2 = np.asarray(m2, dtype=np.int64).reshape(self.m1, self.m1)
        if (m2 < 1).any():
            raise ValueError("every level-1 cell needs at least one leaf")
        self.m2 = m2
        self.m2.setflags(write=False)
        sizes = (m2 * m2).ravel()
        self.offsets = np.concatenate([[0], np.cumsum(sizes)])
        self._m2_flat = m2.ravel()
        b = bounds
        self._xe = _edge(b.min_x, b.max_x, int(m1), np.arange(int(m1) + 1))
        self._ye = _edge(b.min_y, b.max_y, int(m1), np.arange(int(m1) + 1))
        self._neighbors: dict[int, tuple[int, ...]] = {}
        self._build_leaves()

    @property
    def bounds(self) -> Rect:
        return self.level1.bounds

    @property
    def m1(self) -> int:
        return self.level1.m1

    @property
    def n_leaves(self) -> int:
        return int(self.offsets[-1])

    def _build_leaves(self):
        m1 = self.m1
        cell_idx = np.repeat(np.arange(m1 * m1), (self.m2 * self.m2).ravel())
        local = np.arange(self.n_leaves) - self.offsets[cell_idx]
        m2 = self.m2.ravel()[cell_idx]
        row, col = np.divmod(cell_idx, m1)
        r, c = np.divmod(local, m2)
        b = self.bounds
        cx0 = _edge(b.min_x, b.max_x, m1, col)
        cx1 = _edge(b.min_x, b.max_x, m1, col + 1)
        cy0 = _edge(b.min_y, b.max_y, m1, row)
        cy1 = _edge(b.min_y, b.max_y, m1, row + 1)
        rects = np.stack(
            [_edge(cx0, cx1, m2, c), _edge(cy0, cy1, m2, r), _edge(cx0, cx1, m2, c + 1), _edge(cy0, cy1, m2, r + 1)],
            axis=1,
        )
        self.keys = np.stack([row, col, r, c], axis=1)
        self.rects = rects
        self.areas = (rects[:, 2] - rects[:, 0]) * (rects[:, 3] - rects[:, 1])
        for a in (self.keys, self.rects, self.areas):
            a.setflags(write=False)

    def leaf_id(self, row: int, col: int, r: int, c: int) -> int:
        m = int(self.m2[row, col])
        return int(self.offsets[row * self.m1 + col]) + r * m + c

    def key(self, leaf: int) -> tuple[int, int, int, int]:
        return tuple(int(v) for v in self.keys[leaf])

    def rect(self, leaf: int) -> Rect:
        return Rect(*(float(v) for v in self.rects[leaf]))

    def locate(self, points) -> np.ndarray:
        """Flat leaf id of each point; half-open cells, domain max edges closed."""
        pts = _as_points(points)
        if len(pts) == 0:
            return np.zeros(0, dtype=np.int64)
        b, m1 = self.bounds, self.m1
        x = np.ascontiguousarray(pts[:, 0])
        y = np.ascontiguousarray(pts[:, 1])
        col = _bin_1d(x, b.min_x, b.max_x, m1)
        row = _bin_1d(y, b.min_y, b.max_y, m1)
        cell = row * m1 + col
        m2 = self._m2_flat[cell]
        c = _bin_1d(x, self._xe[col], self._xe[col + 1], m2)
        r = _bin_1d(y, self._ye[row], self._ye[row + 1], m2)
        return self.offsets[cell] + r * m2 + c

    def leaves_near(self, p, half_width: float) -> np.ndarray:
        """Ascending ids of leaves whose level-1 cell meets the square of
        ``half_width`` around ``p``."""
        b, m1 = self.bounds, self.m1
        x, y = p
        c0 = _bin_scalar(x - half_width, b.min_x, b.max_x, m1)
        c1 = _bin_scalar(x + half_width, b.min_x, b.max_x, m1)
        r0 = _bin_scalar(y - half_width, b.min_y, b.max_y, m1)
        r1 = _bin_scalar(y + half_width, b.min_y, b.max_y, m1)
        off = self.offsets
        return np.concatenate([np.arange(off[r * m1 + c0], off[r * m1 + c1 + 1]) for r in range(r0, r1 + 1)])

    def locate_point(self, p) -> int:
        x, y = p
        b = self.bounds
        if not (b.min_x <= x <= b.max_x and b.min_y <= y <= b.max_y):
            raise DomainError(f"point {tuple(p)} lies outside {b}")
        m1 = self.m1
        col = _bin_scalar(x, b.min_x, b.max_x, m1)
        row = _bin_scalar(y, b.min_y, b.max_y, m1)
        cell = row * m1 + col
        m2 = int(self._m2_flat[cell])
        c = _bin_scalar(x, float(self._xe[col]), float(self._xe[col + 1]), m2)
        r = _bin_scalar(y, float(self._ye[row]), float(self._ye[row + 1]), m2)
        return int(self.offsets[cell]) + r * m2 + c

    def leaf_counts(self, points) -> np.ndarray:
        return np.bincount(self.locate(points), minlength=self.n_leaves)

    def neighbors(self, leaf: int) -> tuple[int, ...]:
        """Leaves sharing a positive-length edge with ``leaf``, ascending."""
        cached = self._neighbors.get(leaf)
        if cached is not None:
            return cached
        row, col, r, c = self.key(leaf)
        m1 = self.m1
        m = int(self.m2[row, col])
        base = int(self.offsets[row * m1 + col])
        out = []
        # Same level-1 cell.
        if r > 0:
            out.append(base + (r - 1) * m + c)
        if r < m - 1:
            out.append(base + (r + 1) * m + c)
        if c > 0:
            out.append(base + r * m + c - 1)
        if c < m - 1:
            out.append(base + r * m + c + 1)
        # Across level-1 boundaries the neighbour cell may be split differently.
        if c == 0 and col > 0:
            out.extend(self._edge_leaves(row, col - 1, r, m, along="row", at="last"))
        if c == m - 1 and col < m1 - 1:
            out.extend(self._edge_leaves(row, col + 1, r, m, along="row", at="first"))
        if r == 0 and row > 0:
            out.extend(self._edge_leaves(row - 1, col, c, m, along="col", at="last"))
        if r == m - 1 and row < m1 - 1:
            out.extend(self._edge_leaves(row + 1, col, c, m, along="col", at="first"))
        result = tuple(sorted(out))
        self._neighbors[leaf] = result
        return result

    def _edge_leaves(self, nrow, ncol, k, m, along, at):
        mp = int(self.m2[nrow, ncol])
        base = int(self.offsets[nrow * self.m1 + ncol])
        # Indices k' whose span [k'/mp, (k'+1)/mp) overlaps [k/m, (k+1)/m) with positive length.
        lo = (k * mp) // m
        hi = ((k + 1) * mp - 1) // m
        edge = 0 if at == "first" else mp - 1
        if along == "row":
            return [base + kk * mp + edge for kk in range(lo, hi + 1)]
        return [base + edge * mp + kk for kk in range(lo, hi + 1)]

    @cached_property
    def smallest_leaf(self) -> int:
        return int(np.argmin(self.areas))

    def same_structure(self, other: "Partition") -> bool:
        return (
            self.bounds == other.bounds
            and self.m1 == other.m1
            and np.array_equal(self.m2, other.m2)
        )


@dataclass(frozen=True, eq=False)
class PSD:
    """One published snapshot: a partition plus clamped noisy leaf counts."""

    partition: Partition
    counts: np.ndarray
    provenance: str
    snapshot_id: int = 0
    seed: int = 0

    def __post_init__(self):
        counts = np.array(self.counts, dtype=float)
        if counts.shape != (self.partition.n_leaves,):
            raise ValueError("one published count per leaf is required")
        if (counts < 0).any():
            raise ValueError("published counts must be clamped to be non-negative")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def bounds(self) -> Rect:
        return self.partition.bounds

    @property
    def m1(self) -> int:
        return self.partition.m1

    @property
    def n_leaves(self) -> int:
        return self.partition.n_leaves


# granularity rules

def level1_granularity(noisy_total: float, epsilon: float, k1: float = K1) -> int:
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    n = max(0.0, float(noisy_total))
    return max(MIN_M1, math.ceil(0.25 * math.sqrt(n * epsilon / k1)))


def level2_granularity(n_sim: float, epsilon_prime: float, k2: float = K2) -> int:
    if not epsilon_prime > 0:
        raise ValueError("epsilon_prime must be positive")
    n = max(0.0, float(n_sim))
    return max(1, math.ceil(math.sqrt(n * epsilon_prime / k2)))


def uniform_granularity(noisy_total: float, epsilon: float, c: float = K1) -> int:
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    n = max(0.0, float(noisy_total))
    return max(MIN_M1, math.ceil(math.sqrt(n * epsilon / c)))


# trend prediction

def fit_trends(period_counts) -> np.ndarray:
    """Least-squares line through each column of an ``(n, cells)`` array,
    evaluated one period ahead and clamped at zero."""
    y = np.asarray(period_counts, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    n = y.shape[0]
    if n < 2:
        raise InsufficientHistoryError(f"need at least 2 historical periods, got {n}")
    t = np.arange(1, n + 1, dtype=float)
    tc = t - t.mean()
    ybar = y.mean(axis=0)
    slope = tc @ (y - ybar) / (tc @ tc)
    pred = ybar + slope * (n + 1 - t.mean())
    return np.maximum(pred, 0.0)


def fit_cell_trend(period_counts: Sequence[float]) -> float:
    return float(fit_trends(np.asarray(period_counts, dtype=float))[0])


def historical_counts(dataset: PeriodizedDataset, grid: Level1Grid) -> np.ndarray:
    """``(n_periods, m1*m1)`` noise-free counts; never leaves this module's builds."""
    return np.stack([grid.counts(h) for h in dataset.historical])


def normalize_prediction(pred) -> tuple[np.ndarray, bool]:
    """Normalize to the simplex; all-zero input falls back to uniform (flag True)."""
    pred = np.maximum(np.asarray(pred, dtype=float), 0.0)
    total = pred.sum()
    if total <= 0:
        return np.full(len(pred), 1.0 / len(pred)), True
    return pred / total, False


def predict_distribution(dataset: PeriodizedDataset, grid: Level1Grid) -> tuple[np.ndarray, bool]:
    return normalize_prediction(fit_trends(historical_counts(dataset, grid)))


def sample_simulated_counts(dist, n_points: int, rng: RandomStream) -> np.ndarray:
    p = np.asarray(dist, dtype=float)
    n_points = int(n_points)
    if n_points <= 0:
        return np.zeros(len(p), dtype=np.int64)
    # Guard against float drift pushing the sum just above 1.
    p = p / p.sum()
    return rng.generator.multinomial(n_points, p)


def prediction_error_rate(predicted, actual) -> float:
    p = np.asarray(predicted, dtype=float)
    a = np.asarray(actual, dtype=float)
    if p.shape != a.shape:
        raise ValueError("predicted and actual must share the cell indexing")
    mean_actual = a.mean()
    if mean_actual == 0:
        raise UndefinedRateError("actual counts are all zero")
    return float(np.abs(p - a).mean() / mean_actual)


# builds

def _noisy_total(n: int, epsilon: float, ledger: BudgetLedger, rng: RandomStream, noise: bool) -> float:
    return noisy_value(
        float(n), epsilon, 1.0, ledger, BudgetCharge("total-count", epsilon), rng.child(_TOTAL), noise=noise
    )


def publish_counts(
    partition: Partition,
    realtime,
    leaf_epsilon: float,
    ledger: BudgetLedger,
    rng: RandomStream,
    provenance: str,
    snapshot_id: int = 0,
    noise: bool = True,
    group: str = "leaf-counts",
) -> PSD:
    """Bin real-time points into leaves and publish ``max(0, count + Lap(1/leaf_epsilon))``.

    All leaves draw, in leaf order, from a single child stream of ``rng``.
    """
    true = partition.leaf_counts(realtime).astype(float)
    ledger.charge_parallel("leaf-count", leaf_epsilon, group, partition.n_leaves)
    if noise:
        true = true + laplace_sample(1.0 / leaf_epsilon, rng.child(_LEAVES), partition.n_leaves)
    return PSD(partition, np.maximum(true, 0.0), provenance, snapshot_id, rng.seed)


def partition_rht(
    dataset: PeriodizedDataset,
    budget: PrivacyBudget,
    ledger: BudgetLedger,
    rng: RandomStream,
    noise: bool = True,
    k1: float = K1,
    k2: float = K2,
) -> Partition:
    """Learned partition: level-1 size from a noisy total, level-2 sizes from a
    simulation drawn from per-cell historical trends."""
    eps = budget.epsilon_total
    n_noisy = _noisy_total(len(dataset.realtime), budget.total_count_epsilon, ledger, rng, noise)
    grid = Level1Grid(dataset.bounds, level1_granularity(n_noisy, eps, k1))
    dist, _ = predict_distribution(dataset, grid)
    sim = sample_simulated_counts(dist, round(max(0.0, n_noisy)), rng.child(_SAMPLE))
    eps_prime = budget.partition_parameter
    m2 = [level2_granularity(n, eps_prime, k2) for n in sim]
    return Partition(dataset.bounds, grid.m1, m2)


def build_psd_rht(
    dataset: PeriodizedDataset,
    budget: PrivacyBudget,
    ledger: BudgetLedger,
    rng: RandomStream,
    noise: bool = True,
    snapshot_id: int = 0,
) -> PSD:
    partition = partition_rht(dataset, budget, ledger, rng, noise=noise)
    return publish_counts(
        partition, dataset.realtime, budget.leaf_epsilon, ledger, rng, RHT, snapshot_id, noise
    )


def refresh_realtime_counts(
    psd: PSD,
    realtime,
    budget: PrivacyBudget,
    ledger: BudgetLedger,
    rng: RandomStream,
    noise: bool = True,
    snapshot_id: Optional[int] = None,
) -> PSD:
    """Republish leaf counts on a fixed structure."""
    sid = psd.snapshot_id if snapshot_id is None else snapshot_id
    return publish_counts(
        psd.partition, realtime, budget.leaf_epsilon, ledger, rng, psd.provenance, sid, noise
    )


DEFAULT_GGR_SPLITS = (0.04, 0.48, 0.48)


def build_psd_ggr(
    realtime,
    bounds: Rect,
    epsilon: float,
    ledger: BudgetLedger,
    rng: RandomStream,
    splits: tuple[float, float, float] = DEFAULT_GGR_SPLITS,
    noise: bool = True,
    snapshot_id: int = 0,
    k1: float = K1,
    k2: float = K2,
) -> PSD:
    """Adaptive grid built entirely from real-time data, budget split three ways."""
    if len(splits) != 3 or abs(sum(splits) - 1.0) > 1e-9 or min(splits) <= 0:
        raise ValueError(f"splits must be three positive fractions summing to 1, got {splits}")
    b0, b1, _ = splits
    e0, e1 = b0 * epsilon, b1 * epsilon
    e2 = epsilon - e0 - e1
    pts = _as_points(realtime)
    n_noisy = _noisy_total(len(pts), e0, ledger, rng, noise)
    grid = Level1Grid(bounds, level1_granularity(n_noisy, epsilon, k1))
    level1 = grid.counts(pts).astype(float)
    ledger.charge_parallel("level1-count", e1, "level1-counts", grid.n_cells)
    if noise:
        level1 = level1 + laplace_sample(1.0 / e1, rng.child(_LEVEL1), grid.n_cells)
    m2 = [level2_granularity(max(0.0, n), 0.5 * epsilon, k2) for n in level1]
    partition = Partition(bounds, grid.m1, m2)
    return publish_counts(partition, pts, e2, ledger, rng, GGR, snapshot_id, noise)


def build_psd_gdy(
    realtime,
    bounds: Rect,
    epsilon: float,
    ledger: BudgetLedger,
    rng: RandomStream,
    beta: float = 0.04,
    c: float = K1,
    noise: bool = True,
    snapshot_id: int = 0,
) -> PSD:
    """Single-level uniform grid."""
    pts = _as_points(realtime)
    budget = PrivacyBudget(epsilon, beta)
    n_noisy = _noisy_total(len(pts), budget.total_count_epsilon, ledger, rng, noise)
    m = uniform_granularity(n_noisy, epsilon, c)
    partition = Partition(bounds, m, np.ones((m, m), dtype=np.int64))
    return publish_counts(partition, pts, budget.leaf_epsilon, ledger, rng, GDY, snapshot_id, noise)


# serialization

PSD_MAGIC = "# dpsc-psd v1"


def dump_psd(psd: PSD) -> str:
    b = psd.bounds
    p = psd.partition
    lines = [
        PSD_MAGIC,
        "bounds " + " ".join(repr(float(v)) for v in b),
        f"m1 {p.m1}",
        f"provenance {psd.provenance}",
        f"seed {psd.seed}",
        f"snapshot {psd.snapshot_id}",
        f"leaves {p.n_leaves}",
        "row,col,r,c,min_x,min_y,max_x,max_y,count",
    ]
    for key, rect, count in zip(p.keys.tolist(), p.rects.tolist(), psd.counts.tolist()):
        lines.append(",".join([*map(str, key), *map(repr, rect), repr(count)]))
    return "\n".join(lines) + "\n"


def load_psd(text: str) -> PSD:
    lines = text.splitlines()
    if not lines or lines[0].strip() != PSD_MAGIC:
        raise ValueError("not a PSD record (bad header)")
    header = {}
    i = 1
    while i < len(lines) and not lines[i].startswith("row,"):
        name, _, value = lines[i].partition(" ")
        header[name] = value.strip()
        i += 1
    bounds = make_rect(*map(float, header["bounds"].split()))
    m1 = int(header["m1"])
    n_leaves = int(header["leaves"])
    records = lines[i + 1 : i + 1 + n_leaves]
    if len(records) != n_leaves:
        raise ValueError(f"expected {n_leaves} leaf records, found {len(records)}")
    m2 = np.zeros((m1, m1), dtype=np.int64)
    keys, rects, counts = [], [], []
    for ln, rec in enumerate(records, start=i + 2):
        fields = rec.split(",")
        if len(fields) != 9:
            raise ValueError(f"line {ln}: expected 9 fields")
        row, col, r, c = map(int, fields[:4])
        m2[row, col] = max(m2[row, col], r + 1, c + 1)
        keys.append((row, col, r, c))
        rects.append(tuple(map(float, fields[4:8])))
        counts.append(float(fields[8]))
    partition = Partition(bounds, m1, m2)
    if partition.n_leaves != n_leaves or partition.keys.tolist() != [list(k) for k in keys]:
        raise ValueError("leaf records do not form a complete two-level grid")
    if not np.array_equal(partition.rects, np.array(rects)):
        raise ValueError("leaf rectangles do not match the grid they index")
    return PSD(partition, np.array(counts), header["provenance"], int(header["snapshot"]), int(header["seed"]))
