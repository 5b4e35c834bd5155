"""Slow, obviously-correct reference implementations used only by tests."""
import itertools
import math

import numpy as np


def brute_force_circle(points):
    """Smallest enclosing circle by trying every 2- and 3-point candidate."""
    pts = [tuple(map(float, p)) for p in points]
    if len(pts) == 1:
        return pts[0], 0.0
    best = None

    def covers(c, r):
        return all(math.hypot(p[0] - c[0], p[1] - c[1]) <= r * (1 + 1e-12) + 1e-12 for p in pts)

    for a, b in itertools.combinations(pts, 2):
        c = ((a[0] + b[0]) / 2, (a[1] + b[1]) / 2)
        r = math.hypot(a[0] - b[0], a[1] - b[1]) / 2
        if (best is None or r < best[1]) and covers(c, r):
            best = (c, r)
    for a, b, cc in itertools.combinations(pts, 3):
        ax, ay = a
        bx, by = b
        cx, cy = cc
        d = 2 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
        if abs(d) < 1e-15:
            continue
        ux = ((ax ** 2 + ay ** 2) * (by - cy) + (bx ** 2 + by ** 2) * (cy - ay) + (cx ** 2 + cy ** 2) * (ay - by)) / d
        uy = ((ax ** 2 + ay ** 2) * (cx - bx) + (bx ** 2 + by ** 2) * (ax - cx) + (cx ** 2 + cy ** 2) * (bx - ax)) / d
        r = math.hypot(ax - ux, ay - uy)
        if (best is None or r < best[1]) and covers((ux, uy), r):
            best = ((ux, uy), r)
    return best


def ols_predict(counts):
    """Normal-equation solve of y = a + b t on t = 1..n, evaluated at n + 1."""
    y = np.asarray(counts, dtype=float)
    n = len(y)
    t = np.arange(1, n + 1, dtype=float)
    A = np.array([[n, t.sum()], [t.sum(), (t * t).sum()]])
    rhs = np.array([y.sum(), (t * y).sum()])
    a, b = np.linalg.solve(A, rhs)
    return a + b * (n + 1)


def replay_greedy_score(rects, counts, task_xy, mtd, mar, eu, score_fn):
    """Replay score-greedy growth using geometric adjacency over all rect pairs."""
    from dpsc.geometry import Rect, cells_adjacent, corner_mean_distance

    rr = [Rect(*r) for r in rects]
    x, y = task_xy
    start = next(i for i, r in enumerate(rr) if r.min_x <= x < r.max_x and r.min_y <= y < r.max_y)

    def util(i):
        d = corner_mean_distance(rr[i], task_xy)
        ar = max(0.0, 1 - d / mtd) * mar
        return 1 - (1 - ar) ** counts[i]

    gr = [start]
    u = util(start)
    while u < eu:
        cand = [
            i for i in range(len(rr))
            if i not in gr and any(cells_adjacent(rr[i], rr[g]) for g in gr)
            and rr[i].max_x >= x - mtd and rr[i].min_x <= x + mtd
            and rr[i].max_y >= y - mtd and rr[i].min_y <= y + mtd
        ]
        if not cand:
            break
        best = max(cand, key=lambda i: (score_fn(i), -i))
        if score_fn(best) <= 0:
            break
        gr.append(best)
        u = 1 - (1 - u) * (1 - util(best))
    return gr, u


def brute_force_circle_np(points):
    """All 2- and 3-point candidate circles evaluated at once; returns the
    smallest radius covering every point."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    n = len(pts)
    if n == 1:
        return tuple(pts[0]), 0.0
    i, j = np.triu_indices(n, 1)
    centers = [(pts[i] + pts[j]) / 2]
    if n >= 3:
        tri = np.array(list(itertools.combinations(range(n), 3)))
        a, b, c = pts[tri[:, 0]], pts[tri[:, 1]], pts[tri[:, 2]]
        d = 2 * (a[:, 0] * (b[:, 1] - c[:, 1]) + b[:, 0] * (c[:, 1] - a[:, 1]) + c[:, 0] * (a[:, 1] - b[:, 1]))
        ok = np.abs(d) > 1e-15
        a, b, c, d = a[ok], b[ok], c[ok], d[ok]
        sa, sb, sc = (a ** 2).sum(1), (b ** 2).sum(1), (c ** 2).sum(1)
        ux = (sa * (b[:, 1] - c[:, 1]) + sb * (c[:, 1] - a[:, 1]) + sc * (a[:, 1] - b[:, 1])) / d
        uy = (sa * (c[:, 0] - b[:, 0]) + sb * (a[:, 0] - c[:, 0]) + sc * (b[:, 0] - a[:, 0])) / d
        centers.append(np.column_stack([ux, uy]))
    centers = np.vstack(centers)
    radii = np.sqrt(((centers[:, None, :] - pts[None]) ** 2).sum(-1)).max(1)
    k = int(np.argmin(radii))
    return tuple(centers[k]), float(radii[k])
