"""Street centerlines -> a graph of short segments, and routes on it.

Each street polyline is projected and resampled at a fixed arc-length
spacing (10 m by default), producing one graph node per sample point;
consecutive samples are adjacent. Sample points from different polylines
that fall within the weld radius are merged into one node, which stitches
junctions together. Node ids follow the sweep order of the input file, so
they do not depend on where the map sits on the globe.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from collections import deque

import numpy as np

from .geodesy import (
    GeoPoint,
    PlanePoint,
    bearing,
    closest_point_on_polygon,
    distance,
    project,
)

GRAPH_SCHEMA_VERSION = 1

# resampling tolerance: a trailing interval shorter than this merges into
# the previous one, so rigid motions of the input cannot flip node counts
_ARC_TOL = 1e-6


class NoPathError(ValueError):
    """The two nodes live in different connected components."""


@dataclass
class StreetGraph:
    positions: dict            # node id -> PlanePoint
    adjacency: dict            # node id -> sorted tuple of neighbor ids
    origin: GeoPoint           # projection origin the positions refer to
    component: dict = field(default_factory=dict)   # node id -> component index
    signal_nodes: frozenset = frozenset()           # nodes at traffic signals

    def degree(self, node_id: int) -> int:
        return len(self.adjacency[node_id])

    @property
    def node_ids(self):
        return sorted(self.positions)

    def edge_count(self) -> int:
        return sum(len(v) for v in self.adjacency.values()) // 2


@dataclass
class Route:
    """A sampled navigation task: a shortest path ending near a goal POI."""

    route_id: str
    node_ids: list
    goal_poi_id: int
    seed: int


def _resample_polyline(points, spacing):
    """Sample positions every `spacing` meters of arc length; both endpoints
    kept, the final interval may be shorter (never zero)."""
    cum = [0.0]
    for a, b in zip(points, points[1:]):
        cum.append(cum[-1] + distance(a, b))
    total = cum[-1]
    if total <= 0.0:
        return [points[0]]
    n_full = int(math.floor((total - _ARC_TOL) / spacing))
    targets = [k * spacing for k in range(n_full + 1)] + [total]

    out = []
    seg = 0
    for t in targets:
        while seg < len(points) - 2 and cum[seg + 1] < t:
            seg += 1
        a, b = points[seg], points[seg + 1]
        seg_len = cum[seg + 1] - cum[seg]
        frac = 0.0 if seg_len == 0.0 else (t - cum[seg]) / seg_len
        frac = min(1.0, max(0.0, frac))
        out.append(PlanePoint(a.x + frac * (b.x - a.x), a.y + frac * (b.y - a.y)))
    return out


class _Grid:
    """Uniform grid over plane points for radius queries."""

    def __init__(self, cell: float):
        self.cell = cell
        self.cells = {}

    def _key(self, p: PlanePoint):
        return (int(math.floor(p.x / self.cell)), int(math.floor(p.y / self.cell)))

    def add(self, p: PlanePoint, payload):
        self.cells.setdefault(self._key(p), []).append((p, payload))

    def near(self, p: PlanePoint, radius: float):
        kx, ky = self._key(p)
        reach = int(math.ceil(radius / self.cell))
        for dx in range(-reach, reach + 1):
            for dy in range(-reach, reach + 1):
                for q, payload in self.cells.get((kx + dx, ky + dy), ()):
                    if distance(p, q) <= radius:
                        yield q, payload


def discretize(map_data, spacing: float = 10.0, weld_radius: float = 1.0) -> StreetGraph:
    """Build the segment graph from MapData street centerlines.

    Raises ValueError when the map has no streets. Nodes within weld_radius
    of an earlier node are merged into it (junction welding).
    """
    if not map_data.street_polylines:
        raise ValueError("cannot discretize a map with no streets")
    origin = map_data.projection_origin

    positions = {}
    adjacency = {}
    grid = _Grid(cell=max(weld_radius, 1e-6))
    next_id = 0

    def canonical(p: PlanePoint) -> int:
        nonlocal next_id
        best = None
        for q, nid in grid.near(p, weld_radius):
            if best is None or nid < best:
                best = nid
        if best is not None:
            return best
        nid = next_id
        next_id += 1
        positions[nid] = p
        adjacency[nid] = set()
        grid.add(p, nid)
        return nid

    for line in map_data.street_polylines:
        planar = [project(g, origin) for g in line]
        samples = _resample_polyline(planar, spacing)
        ids = [canonical(p) for p in samples]
        for a, b in zip(ids, ids[1:]):
            if a != b:
                adjacency[a].add(b)
                adjacency[b].add(a)

    adjacency = {nid: tuple(sorted(nbrs)) for nid, nbrs in adjacency.items()}

    component = {}
    comp_idx = 0
    for nid in sorted(positions):
        if nid in component:
            continue
        queue = deque([nid])
        component[nid] = comp_idx
        while queue:
            u = queue.popleft()
            for v in adjacency[u]:
                if v not in component:
                    component[v] = comp_idx
                    queue.append(v)
        comp_idx += 1

    signal_nodes = set()
    if map_data.signals:
        signal_planar = [project(g, origin) for g in map_data.signals]
        for nid in sorted(positions):
            p = positions[nid]
            if any(distance(p, s) <= weld_radius for s in signal_planar):
                signal_nodes.add(nid)

    return StreetGraph(
        positions=positions,
        adjacency=adjacency,
        origin=origin,
        component=component,
        signal_nodes=frozenset(signal_nodes),
    )


def shortest_path(g: StreetGraph, start: int, goal: int):
    """Minimum-hop path from start to goal; among equal-hop paths the
    lexicographically smallest node-id sequence is returned."""
    for nid in (start, goal):
        if nid not in g.positions:
            raise ValueError(f"unknown node id {nid}")
    if start == goal:
        return [start]
    if g.component[start] != g.component[goal]:
        raise NoPathError(f"no path between {start} and {goal}")

    # hop distances from the goal, then walk greedily by smallest id
    dist = {goal: 0}
    queue = deque([goal])
    while queue:
        u = queue.popleft()
        for v in g.adjacency[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)

    path = [start]
    current = start
    while current != goal:
        current = min(v for v in g.adjacency[current] if dist.get(v, -1) == dist[current] - 1)
        path.append(current)
    return path


def is_intersection(g: StreetGraph, node_id: int) -> bool:
    """A node with more than two neighbors."""
    if node_id not in g.adjacency:
        raise ValueError(f"unknown node id {node_id}")
    return g.degree(node_id) > 2


def count_turns(g: StreetGraph, node_ids) -> int:
    """Intersections along the path where the exit direction leaves the
    straight-ahead sector [345, 360) u [0, 15) relative to the entry direction."""
    turns = 0
    for prev_id, node_id, next_id in zip(node_ids, node_ids[1:], node_ids[2:]):
        if g.degree(node_id) <= 2:
            continue
        entry = bearing(g.positions[prev_id], g.positions[node_id])
        exit_ = bearing(g.positions[node_id], g.positions[next_id])
        rel = (exit_ - entry) % 360.0
        if not (rel >= 345.0 or rel < 15.0):
            turns += 1
    return turns


def poi_anchor_point(poi, origin: GeoPoint) -> PlanePoint:
    """Projected reference point of a POI: its node location, or the polygon
    vertex centroid for area POIs."""
    if poi.is_area:
        verts = poi.location.vertices
        return PlanePoint(
            sum(v.x for v in verts) / len(verts), sum(v.y for v in verts) / len(verts)
        )
    return project(poi.location, origin)


def _poi_distance(node_pos: PlanePoint, poi, origin: GeoPoint) -> float:
    if poi.is_area:
        return distance(node_pos, closest_point_on_polygon(node_pos, poi.location))
    return distance(node_pos, project(poi.location, origin))


def _bounded_hop_distances(g: StreetGraph, start: int, max_hops: int):
    dist = {start: 0}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        if dist[u] >= max_hops:
            continue
        for v in g.adjacency[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def sample_routes(
    g: StreetGraph,
    pois,
    n: int,
    seed: int,
    goal_radius: float = 30.0,
    min_nodes: int = 35,
    max_nodes: int = 45,
    min_intersections: int = 3,
    attempt_budget: int | None = None,
) -> list:
    """Seeded rejection sampling of shortest-path routes.

    Accepted routes have min_nodes..max_nodes nodes, pass at least
    min_intersections nodes of degree > 2, and end within goal_radius of a
    POI (the nearest such POI becomes the goal). Distinct node sequences
    only. When the attempt budget runs out a partial list is returned with
    a warning.
    """
    if n <= 0:
        return []
    rng = np.random.Generator(np.random.Philox(key=seed))
    node_ids = sorted(g.positions)
    if len(node_ids) < 2:
        raise ValueError("graph too small to sample routes")
    if attempt_budget is None:
        attempt_budget = max(200 * n, 2000)

    # nearest eligible goal POI per node, resolved lazily
    goal_cache: dict[int, int | None] = {}

    def goal_poi(node_id: int):
        if node_id not in goal_cache:
            best = None
            best_d = math.inf
            pos = g.positions[node_id]
            for poi in pois:
                d = _poi_distance(pos, poi, g.origin)
                if d <= goal_radius and (d < best_d or (d == best_d and (best is None or poi.id < best))):
                    best = poi.id
                    best_d = d
            goal_cache[node_id] = best
        return goal_cache[node_id]

    routes = []
    seen = set()
    attempts = 0
    while len(routes) < n and attempts < attempt_budget:
        attempts += 1
        start = int(node_ids[rng.integers(len(node_ids))])
        hop = _bounded_hop_distances(g, start, max_nodes - 1)
        candidates = sorted(v for v, d in hop.items() if min_nodes - 1 <= d <= max_nodes - 1)
        if not candidates:
            continue
        goal = int(candidates[rng.integers(len(candidates))])
        path = shortest_path(g, start, goal)
        if not (min_nodes <= len(path) <= max_nodes):
            continue
        if sum(1 for nid in path if g.degree(nid) > 2) < min_intersections:
            continue
        poi_id = goal_poi(path[-1])
        if poi_id is None:
            continue
        key = tuple(path)
        if key in seen:
            continue
        seen.add(key)
        routes.append(
            Route(
                route_id=f"route-{seed}-{len(routes):05d}",
                node_ids=path,
                goal_poi_id=poi_id,
                seed=seed,
            )
        )

    if len(routes) < n:
        warnings.warn(
            f"route sampling exhausted {attempt_budget} attempts with "
            f"{len(routes)}/{n} routes",
            stacklevel=2,
        )
    return routes


# ----------------------------------------------------------------------------
# serialization


def graph_to_dict(g: StreetGraph) -> dict:
    return {
        "schema": GRAPH_SCHEMA_VERSION,
        "origin": [g.origin.lat, g.origin.lon],
        "nodes": [[nid, g.positions[nid].x, g.positions[nid].y] for nid in sorted(g.positions)],
        "edges": sorted(
            [a, b] for a in g.adjacency for b in g.adjacency[a] if a < b
        ),
        "signals": sorted(g.signal_nodes),
    }


def graph_from_dict(d: dict) -> StreetGraph:
    if d.get("schema") != GRAPH_SCHEMA_VERSION:
        raise ValueError(
            f"unsupported street graph schema {d.get('schema')!r}, expected {GRAPH_SCHEMA_VERSION}"
        )
    positions = {int(nid): PlanePoint(x, y) for nid, x, y in d["nodes"]}
    adjacency = {nid: set() for nid in positions}
    for a, b in d["edges"]:
        adjacency[a].add(b)
        adjacency[b].add(a)
    g = StreetGraph(
        positions=positions,
        adjacency={nid: tuple(sorted(nbrs)) for nid, nbrs in adjacency.items()},
        origin=GeoPoint(*d["origin"]),
        signal_nodes=frozenset(int(s) for s in d.get("signals", [])),
    )
    component = {}
    comp_idx = 0
    for nid in sorted(positions):
        if nid in component:
            continue
        queue = deque([nid])
        component[nid] = comp_idx
        while queue:
            u = queue.popleft()
            for v in g.adjacency[u]:
                if v not in component:
                    component[v] = comp_idx
                    queue.append(v)
        comp_idx += 1
    g.component = component
    return g


def save_graph(g: StreetGraph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(graph_to_dict(g), fh)
        fh.write("\n")


def load_graph(path) -> StreetGraph:
    with open(path, encoding="utf-8") as fh:
        return graph_from_dict(json.load(fh))


def routes_to_jsonl(routes, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in routes:
            fh.write(
                json.dumps(
                    {
                        "route_id": r.route_id,
                        "node_ids": list(r.node_ids),
                        "goal_poi_id": r.goal_poi_id,
                        "seed": r.seed,
                    }
                )
            )
            fh.write("\n")


def routes_from_jsonl(path) -> list:
    routes = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            d = json.loads(line)
            routes.append(
                Route(
                    route_id=d["route_id"],
                    node_ids=[int(x) for x in d["node_ids"]],
                    goal_poi_id=d["goal_poi_id"],
                    seed=d.get("seed", 0),
                )
            )
    return routes
