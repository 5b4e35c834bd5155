"""Dataset ingestion, the canonical dataset file, and synthetic generation."""
from __future__ import annotations

import configparser
import csv
import math
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..dp import RandomStream
from ..geometry import Rect, make_rect
from ..psd import PeriodizedDataset

EARTH_RADIUS_M = 6_371_008.8
DATASET_MAGIC = "# dpsc-dataset v1"


class DatasetFormatError(ValueError):
    pass


# canonical file

def dump_dataset(ds: PeriodizedDataset) -> str:
    bounds = ",".join(repr(float(v)) for v in ds.bounds)
    lines = [
        f"{DATASET_MAGIC} bounds={bounds} "
        f"periods={ds.n_periods} units=m",
        "period,x,y",
    ]
    for k, pts in enumerate([*ds.historical, ds.realtime]):
        lines.extend(f"{k},{x!r},{y!r}" for x, y in pts.tolist())
    return "\n".join(lines) + "\n"


def load_dataset(text: str) -> PeriodizedDataset:
    lines = text.splitlines()
    if not lines or not lines[0].startswith(DATASET_MAGIC):
        raise DatasetFormatError("line 1: missing dataset header")
    meta = dict(tok.split("=", 1) for tok in lines[0][len(DATASET_MAGIC):].split())
    if meta.get("units", "m") != "m":
        raise DatasetFormatError("line 1: only meter units are supported")
    bounds = make_rect(*map(float, meta["bounds"].split(",")))
    n = int(meta["periods"])
    buckets: list[list[tuple[float, float]]] = [[] for _ in range(n + 1)]
    for ln, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        parts = line.split(",")
        try:
            k, x, y = int(parts[0]), float(parts[1]), float(parts[2])
        except (ValueError, IndexError) as e:
            raise DatasetFormatError(f"line {ln}: cannot parse {line!r}") from e
        if not 0 <= k <= n:
            raise DatasetFormatError(f"line {ln}: period {k} outside 0..{n}")
        buckets[k].append((x, y))
    return PeriodizedDataset(tuple(np.array(b, dtype=float) for b in buckets[:n]), np.array(buckets[n]), bounds)


def read_dataset(path) -> PeriodizedDataset:
    return load_dataset(Path(path).read_text())


def write_dataset(ds: PeriodizedDataset, path) -> None:
    Path(path).write_text(dump_dataset(ds))


# ingestion

@dataclass
class IngestConfig:
    path: str
    format: str = "xy-csv"  # or "lonlat-csv"
    blur_radius: float = 0.0
    scale_ratio: float = 1.0
    period_spec: str = "column"  # column | by-day(d) | by-count(k) | explicit(b1,b2,...)
    realtime_period: int = -1

    def __post_init__(self):
        if self.format not in ("xy-csv", "lonlat-csv"):
            raise ValueError(f"unknown format {self.format!r}")
        if self.blur_radius < 0:
            raise ValueError("blur_radius must be non-negative")
        if not self.scale_ratio > 0:
            raise ValueError("scale_ratio must be positive")


def project_equirectangular(lon, lat, lon0: Optional[float] = None, lat0: Optional[float] = None):
    """Project degrees to meters about (lon0, lat0), by default the centroid."""
    lon = np.asarray(lon, dtype=float)
    lat = np.asarray(lat, dtype=float)
    lon0 = float(lon.mean()) if lon0 is None else lon0
    lat0 = float(lat.mean()) if lat0 is None else lat0
    x = EARTH_RADIUS_M * np.radians(lon - lon0) * math.cos(math.radians(lat0))
    y = EARTH_RADIUS_M * np.radians(lat - lat0)
    return x, y


def blur(points: np.ndarray, radius: float, rng: RandomStream) -> np.ndarray:
    """Move each point to a uniform random position in the disc around it."""
    if radius <= 0 or len(points) == 0:
        return points
    g = rng.generator
    r = radius * np.sqrt(g.random(len(points)))
    theta = 2 * np.pi * g.random(len(points))
    return points + np.column_stack([r * np.cos(theta), r * np.sin(theta)])


def _parse_time(s: str) -> float:
    try:
        return float(s)
    except ValueError:
        pass
    t = datetime.fromisoformat(s.strip().replace("Z", "+00:00"))
    if t.tzinfo is None:
        t = t.replace(tzinfo=timezone.utc)
    return t.timestamp()


def _read_rows(path) -> tuple[list[str], list[list[str]], int]:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh)]
    if not rows:
        raise DatasetFormatError(f"{path}: empty file")
    first = rows[0]
    try:
        float(first[0])
        return [], rows, 1
    except (ValueError, IndexError):
        return [c.strip().lower() for c in first], rows[1:], 2


def _period_labels(spec: str, times: Optional[np.ndarray], column: Optional[np.ndarray], n: int) -> np.ndarray:
    m = re.fullmatch(r"\s*([a-z-]+)\s*(?:\((.*)\))?\s*", spec)
    if not m:
        raise ValueError(f"bad period spec {spec!r}")
    kind, arg = m.group(1), m.group(2)
    if kind == "column":
        if column is None:
            raise DatasetFormatError("period spec 'column' needs a period column")
        return column
    if kind == "by-count":
        return np.arange(n) // int(arg)
    if kind == "by-day":
        values = times if times is not None else column
        if values is None:
            raise DatasetFormatError("by-day periods need timestamps")
        days = np.floor((values - values.min()) / 86400.0)
        return (days // float(arg)).astype(np.int64)
    if kind == "explicit":
        values = times if times is not None else column
        if values is None:
            raise DatasetFormatError("explicit periods need timestamps or a period column")
        edges = np.array(sorted(_parse_time(b) for b in arg.split(",")))
        return np.searchsorted(edges, values, side="right")
    raise ValueError(f"bad period spec {spec!r}")


def load_locations(cfg: IngestConfig, rng: RandomStream) -> PeriodizedDataset:
    header, rows, first_line = _read_rows(cfg.path)
    xs, ys, extra = [], [], []
    for ln, row in enumerate(rows, start=first_line):
        if not row or not "".join(row).strip():
            continue
        try:
            xs.append(float(row[0]))
            ys.append(float(row[1]))
            extra.append(row[2].strip() if len(row) > 2 else None)
        except (ValueError, IndexError) as e:
            raise DatasetFormatError(f"{cfg.path}:{ln}: cannot parse {row!r}") from e
    x = np.array(xs)
    y = np.array(ys)
    times = column = None
    if cfg.format == "lonlat-csv":
        x, y = project_equirectangular(x, y)
        if all(e is not None for e in extra):
            try:
                times = np.array([_parse_time(e) for e in extra])
            except ValueError as e:
                raise DatasetFormatError(f"{cfg.path}: bad timestamp ({e})") from e
    elif all(e is not None for e in extra):
        column = np.array([float(e) for e in extra])
    pts = np.column_stack([x, y]) * cfg.scale_ratio
    pts = blur(pts, cfg.blur_radius, rng)

    labels = _period_labels(cfg.period_spec, times, column, len(pts))
    uniq = np.unique(labels)
    if len(uniq) < 2:
        raise DatasetFormatError("need at least one historical period and a real-time period")
    rt = cfg.realtime_period % len(uniq)
    periods = [pts[labels == u] for u in uniq[: rt + 1]]
    for k, p in enumerate(periods):
        if len(p) == 0:
            raise DatasetFormatError(f"period {k} is empty")
    allpts = np.concatenate(periods)
    lo = allpts.min(axis=0)
    hi = allpts.max(axis=0)
    hi = np.where(hi > lo, hi, lo + 1.0)
    bounds = make_rect(lo[0], lo[1], hi[0], hi[1])
    return PeriodizedDataset(tuple(periods[:-1]), periods[-1], bounds)


# synthetic data

@dataclass(frozen=True)
class Cluster:
    center: tuple[float, float]
    sigma: float
    weight: float
    drift: float = 0.0  # weight change per period


@dataclass
class SynthSpec:
    n_points: int
    n_periods: int
    clusters: list[Cluster]
    bounds: Rect
    uniform_weight: float = 0.0
    realtime_points: Optional[int] = None

    def weights(self, period: int) -> np.ndarray:
        w = np.array([c.weight + c.drift * period for c in self.clusters] + [self.uniform_weight])
        w = np.maximum(w, 0.0)
        if w.sum() <= 0:
            raise ValueError(f"mixture weights vanish in period {period}")
        return w / w.sum()


def _sample_period(spec: SynthSpec, n: int, w: np.ndarray, g: np.random.Generator) -> np.ndarray:
    b = spec.bounds
    counts = g.multinomial(n, w)
    chunks = []
    for c, k in zip(spec.clusters, counts[:-1]):
        out = np.zeros((0, 2))
        while len(out) < k:
            cand = g.normal(c.center, c.sigma, size=(2 * (k - len(out)) + 8, 2))
            ok = (cand[:, 0] >= b.min_x) & (cand[:, 0] <= b.max_x) & (cand[:, 1] >= b.min_y) & (cand[:, 1] <= b.max_y)
            out = np.vstack([out, cand[ok]])
        chunks.append(out[:k])
    k = counts[-1]
    chunks.append(np.column_stack([g.uniform(b.min_x, b.max_x, k), g.uniform(b.min_y, b.max_y, k)]))
    pts = np.vstack(chunks)
    return pts[g.permutation(len(pts))]


def synth_generate(spec: SynthSpec, rng: RandomStream) -> PeriodizedDataset:
    """Periods ``0..n_periods-1`` are historical; period ``n_periods`` is real time."""
    periods = []
    for t in range(spec.n_periods + 1):
        n = spec.n_points if t < spec.n_periods or spec.realtime_points is None else spec.realtime_points
        periods.append(_sample_period(spec, n, spec.weights(t), rng.child(t).generator))
    return PeriodizedDataset(tuple(periods[:-1]), periods[-1], spec.bounds)


def _floats(s: str) -> list[float]:
    return [float(v) for v in s.split(",")]


def synth_spec_from_config(cp: configparser.ConfigParser) -> SynthSpec:
    s = cp["synth"]
    clusters = []
    for name in cp.sections():
        if name.startswith("cluster"):
            c = cp[name]
            clusters.append(Cluster(
                tuple(_floats(c["center_m"])), float(c["sigma_m"]), float(c.get("weight", "1")),
                float(c.get("drift", "0")),
            ))
    rt = s.get("realtime_points")
    return SynthSpec(
        n_points=int(s["n_points"]),
        n_periods=int(s["n_periods"]),
        clusters=clusters,
        bounds=make_rect(*_floats(s["bounds_m"])),
        uniform_weight=float(s.get("uniform_weight", "0")),
        realtime_points=int(rt) if rt else None,
    )


def read_synth_spec(path) -> SynthSpec:
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise FileNotFoundError(path)
    return synth_spec_from_config(cp)


def sample_tasks(realtime, n: int, rng: RandomStream) -> np.ndarray:
    """Task locations drawn from worker positions without replacement
    (with replacement once ``n`` exceeds the pool)."""
    pool = np.asarray(realtime, dtype=float).reshape(-1, 2)
    if len(pool) == 0:
        raise ValueError("cannot sample tasks from an empty worker pool")
    g = rng.generator
    idx = g.choice(len(pool), size=n, replace=n > len(pool))
    return pool[idx]
