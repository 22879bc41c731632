"""Independent brute-force oracles the tests check the package against.

Everything here is intentionally written from first principles with
different algorithms than the library (winding numbers instead of ray
crossings, dense sampling instead of closed forms, exhaustive enumeration
instead of dynamic programming) so a shared bug cannot hide.
"""

from __future__ import annotations

import itertools
import math


# --- point in polygon via winding number -------------------------------------

def winding_inside(px, py, verts, boundary_tol=1e-9):
    """Strictly inside: winding number nonzero and not within tol of the boundary."""
    n = len(verts)
    for i in range(n):
        ax, ay = verts[i]
        bx, by = verts[(i + 1) % n]
        if _point_seg_dist(px, py, ax, ay, bx, by) <= boundary_tol:
            return False
    total = 0.0
    for i in range(n):
        ax, ay = verts[i]
        bx, by = verts[(i + 1) % n]
        total += math.atan2(
            (ax - px) * (by - py) - (ay - py) * (bx - px),
            (ax - px) * (bx - px) + (ay - py) * (by - py),
        )
    return abs(total) > math.pi  # ~2*pi inside, ~0 outside


def _point_seg_dist(px, py, ax, ay, bx, by):
    rx, ry = bx - ax, by - ay
    ln = rx * rx + ry * ry
    if ln == 0.0:
        return math.hypot(px - ax, py - ay)
    t = max(0.0, min(1.0, ((px - ax) * rx + (py - ay) * ry) / ln))
    return math.hypot(px - (ax + t * rx), py - (ay + t * ry))


# --- sight-line occlusion by dense sampling ----------------------------------

def blocked_oracle(a, b, polygons, n_samples=2001):
    """True when any strictly interior sample of the open segment (a, b) lies
    strictly inside some polygon. a, b are (x, y) pairs; polygons are vertex lists."""
    ax, ay = a
    bx, by = b
    for i in range(1, n_samples):
        t = i / n_samples
        px = ax + t * (bx - ax)
        py = ay + t * (by - ay)
        for verts in polygons:
            if winding_inside(px, py, verts):
                return True
    return False


# --- closest boundary point by dense sampling --------------------------------

def closest_point_oracle(p, verts, per_edge=4000):
    """Best of per_edge uniform samples on each edge. Returns (point, distance)."""
    px, py = p
    best = None
    best_d = math.inf
    n = len(verts)
    for i in range(n):
        ax, ay = verts[i]
        bx, by = verts[(i + 1) % n]
        for k in range(per_edge + 1):
            t = k / per_edge
            qx = ax + t * (bx - ax)
            qy = ay + t * (by - ay)
            d = math.hypot(px - qx, py - qy)
            if d < best_d:
                best_d = d
                best = (qx, qy)
    return best, best_d


def max_edge_sample_gap(verts, per_edge=4000):
    n = len(verts)
    gaps = []
    for i in range(n):
        ax, ay = verts[i]
        bx, by = verts[(i + 1) % n]
        gaps.append(math.hypot(bx - ax, by - ay) / per_edge)
    return max(gaps)


# --- exhaustive shortest paths ------------------------------------------------

def all_min_hop_paths(adj, s, t, cap=200000):
    """Every minimum-hop simple path from s to t by breadth-limited DFS.

    adj maps node -> iterable of neighbors. Only usable on tiny graphs.
    Returns the list of paths (each a node-id list); empty when unreachable.
    """
    # BFS for the minimum hop count first
    from collections import deque

    dist = {s: 0}
    q = deque([s])
    while q:
        u = q.popleft()
        for v in adj[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                q.append(v)
    if t not in dist:
        return []
    target_len = dist[t]

    paths = []
    stack = [(s, [s])]
    seen = 0
    while stack:
        u, path = stack.pop()
        seen += 1
        if seen > cap:
            raise RuntimeError("path enumeration blew the cap; shrink the fixture")
        if u == t:
            if len(path) - 1 == target_len:
                paths.append(path)
            continue
        if len(path) - 1 >= target_len:
            continue
        for v in adj[u]:
            if v not in path:
                stack.append((v, path + [v]))
    return paths


def lex_min_shortest_path(adj, s, t):
    paths = all_min_hop_paths(adj, s, t)
    if not paths:
        return None
    return min(paths)


# --- exhaustive DTW -----------------------------------------------------------

def dtw_exhaustive(cost):
    """Minimum-cost monotone alignment of an n x m pairwise cost matrix,
    enumerated recursively; anchored at (0, 0) and (n-1, m-1)."""
    n = len(cost)
    m = len(cost[0])
    from functools import lru_cache

    @lru_cache(maxsize=None)
    def best(i, j):
        if i == 0 and j == 0:
            return cost[0][0]
        cands = []
        if i > 0:
            cands.append(best(i - 1, j))
        if j > 0:
            cands.append(best(i, j - 1))
        if i > 0 and j > 0:
            cands.append(best(i - 1, j - 1))
        return cost[i][j] + min(cands)

    return best(n - 1, m - 1)


def dtw_enumerate_alignments(cost):
    """Literal enumeration of every monotone alignment path (no memoization);
    only for the smallest fixtures. Cross-checks dtw_exhaustive itself."""
    n = len(cost)
    m = len(cost[0])
    best = [math.inf]

    def walk(i, j, acc):
        acc += cost[i][j]
        if acc >= best[0]:
            return
        if i == n - 1 and j == m - 1:
            best[0] = acc
            return
        if i + 1 < n:
            walk(i + 1, j, acc)
        if j + 1 < m:
            walk(i, j + 1, acc)
        if i + 1 < n and j + 1 < m:
            walk(i + 1, j + 1, acc)

    walk(0, 0, 0.0)
    return best[0]


# --- randomized geometry fixtures ---------------------------------------------

def random_star_polygon(rng, cx, cy, rmin, rmax, k):
    """Simple (star-shaped) polygon around (cx, cy): k vertices at sorted
    angles with radii in [rmin, rmax]."""
    angles = sorted(rng.uniform(0.0, 2.0 * math.pi, size=k).tolist())
    # collapse near-duplicate angles so edges keep nonzero length
    kept = []
    for a in angles:
        if not kept or a - kept[-1] > 1e-3:
            kept.append(a)
    while len(kept) < 3:
        kept.append(kept[-1] + 0.5)
    verts = []
    for a in kept:
        r = float(rng.uniform(rmin, rmax))
        verts.append((cx + r * math.cos(a), cy + r * math.sin(a)))
    return verts


# --- finite differences -------------------------------------------------------

def central_diff_grad(f, arr, eps=1e-3):
    """Central finite-difference gradient of scalar f wrt a float64 numpy array."""
    import numpy as np

    g = np.zeros_like(arr, dtype=np.float64)
    it = np.nditer(arr, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        old = arr[idx]
        arr[idx] = old + eps
        f_plus = f()
        arr[idx] = old - eps
        f_minus = f()
        arr[idx] = old
        g[idx] = (f_plus - f_minus) / (2.0 * eps)
        it.iternext()
    return g


def rel_err(a, b, floor=1e-8):
    import numpy as np

    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.abs(a) + np.abs(b), floor)
    return np.max(np.abs(a - b) / denom)
