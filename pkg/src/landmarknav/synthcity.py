"""Deterministic synthetic street-grid cities.

Self-contained input data for pipeline runs and fixtures: a jittered grid
city with named points of interest, building footprints, and traffic
signals, emitted as OSM XML. The same city can be written at any rotation
and offset, which is what the geometric-invariance checks exercise. Also
ships light templated paraphrasing of rule-based instruction tokens
(training noise) and perfect navigation traces for metric fixtures.
"""

from __future__ import annotations

import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass

import numpy as np

from .eval_metrics import NavTrace, expected_duration
from .geodesy import GeoPoint, PlanePoint, unproject

_JUNCTION_BASE = 1_000
_POI_BASE = 20_000
_CORNER_BASE = 40_000
_STREET_WAY_BASE = 5_000
_AREA_WAY_BASE = 60_000

_NAME_FIRST = (
    "Golden", "Blue", "Old", "Royal", "Silver", "Green", "Little", "Grand",
    "Corner", "Urban", "Sunny", "Velvet", "Copper", "North", "Iron", "Lucky",
)
_NAME_SECOND = (
    "Fork", "Bean", "Crown", "Garden", "Lion", "Anchor", "Maple", "Harbor",
    "Canyon", "Lantern", "Orchid", "Pebble", "Falcon", "Willow", "Ember", "Compass",
)

_POI_KINDS = (
    ("amenity", "cafe"), ("amenity", "bank"), ("amenity", "restaurant"),
    ("amenity", "pharmacy"), ("amenity", "bar"), ("amenity", "fast_food"),
    ("amenity", "library"), ("amenity", "place_of_worship"),
    ("shop", "bakery"), ("shop", "books"), ("shop", "clothes"),
    ("shop", "convenience"), ("shop", "florist"), ("shop", "supermarket"),
    ("leisure", "fitness_centre"), ("leisure", "playground"),
    ("tourism", "hotel"), ("tourism", "museum"),
)
_CUISINES = ("pizza", "burger", "sushi", "kebab", "coffee_shop", "ice_cream")
_CUISINE_HOSTS = frozenset({"cafe", "restaurant", "fast_food", "bar"})


@dataclass(frozen=True)
class CityParams:
    """Knobs for the generator; defaults give a 5x5-junction city that the
    whole pipeline (10 m discretization, 30 m visibility, 35..45-node
    routes) runs on comfortably."""

    junctions_x: int = 5
    junctions_y: int = 5
    block_m: float = 100.0
    jitter_m: float = 2.5
    poi_edge_prob: float = 0.8
    two_poi_prob: float = 0.25
    named_poi_prob: float = 0.75
    building_block_prob: float = 0.55
    occluder_prob: float = 0.2
    signal_prob: float = 0.25
    diagonal_blocks: int = 2
    area_pois: bool = True


class SynthCity:
    """A generated city in plane coordinates (meters, centered near 0)."""

    def __init__(self, nodes, node_tags, ways):
        self.nodes = nodes          # node id -> (x, y)
        self.node_tags = node_tags  # node id -> list[(key, value)]
        self.ways = ways            # list[(way id, [node ids], [(key, value)])]

    def to_xml(self, rotation_deg=0.0, offset_m=(0.0, 0.0), origin=GeoPoint(0.0, 0.0)) -> str:
        """OSM XML for this city, rotated about the plane origin and shifted
        by offset_m before conversion to geographic coordinates."""
        c = math.cos(math.radians(rotation_deg))
        s = math.sin(math.radians(rotation_deg))
        root = ET.Element("osm", version="0.6", generator="synthcity")
        for nid in sorted(self.nodes):
            x, y = self.nodes[nid]
            xr = c * x - s * y + offset_m[0]
            yr = s * x + c * y + offset_m[1]
            g = unproject(PlanePoint(xr, yr), origin)
            el = ET.SubElement(root, "node", id=str(nid), lat=repr(g.lat), lon=repr(g.lon))
            for k, v in self.node_tags.get(nid, ()):
                ET.SubElement(el, "tag", k=k, v=v)
        for wid, refs, tags in sorted(self.ways):
            el = ET.SubElement(root, "way", id=str(wid))
            for ref in refs:
                ET.SubElement(el, "nd", ref=str(ref))
            for k, v in tags:
                ET.SubElement(el, "tag", k=k, v=v)
        return ET.tostring(root, encoding="unicode")

    def write_xml(self, path, rotation_deg=0.0, offset_m=(0.0, 0.0), origin=GeoPoint(0.0, 0.0)):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_xml(rotation_deg, offset_m, origin))
            fh.write("\n")


def _length_residue_safe(length, spacing=10.0, weld=1.0, margin=0.05):
    # the resampler keeps both endpoints, so a way length sitting too close
    # to a multiple of the spacing (sampler count flips) or to a multiple
    # plus the weld radius (endpoint merge flips) would make node identity
    # sensitive to rounding noise
    r = length % spacing
    return margin <= r <= spacing - margin and abs(r - weld) > margin


def build_city(seed: int, params: CityParams = CityParams()) -> SynthCity:
    """Deterministic city for a seed. Draws are retried (still
    deterministically) until every street length clears the sampling-safety
    margins checked by _length_residue_safe."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    for _ in range(40):
        city = _build_attempt(rng, params)
        if city is not None:
            return city
    raise RuntimeError("city generation kept violating sampling-safety margins")


def _pick_name(rng):
    if rng.random() < 0.2:
        return _NAME_SECOND[rng.integers(len(_NAME_SECOND))]
    first = _NAME_FIRST[rng.integers(len(_NAME_FIRST))]
    second = _NAME_SECOND[rng.integers(len(_NAME_SECOND))]
    return f"{first} {second}"


def _poi_tags(rng, named_prob):
    key, value = _POI_KINDS[rng.integers(len(_POI_KINDS))]
    tags = [(key, value)]
    if value in _CUISINE_HOSTS and rng.random() < 0.5:
        tags.append(("cuisine", _CUISINES[rng.integers(len(_CUISINES))]))
    if rng.random() < named_prob:
        tags.append(("name", _pick_name(rng)))
    return tags


def _rect_corners(cx, cy, half_w, half_h, rot_deg):
    c = math.cos(math.radians(rot_deg))
    s = math.sin(math.radians(rot_deg))
    out = []
    for dx, dy in ((-half_w, -half_h), (half_w, -half_h), (half_w, half_h), (-half_w, half_h)):
        out.append((cx + c * dx - s * dy, cy + s * dx + c * dy))
    return out


def _build_attempt(rng, p: CityParams):
    W, H = p.junctions_x, p.junctions_y
    if W < 3 or H < 3:
        raise ValueError("need at least a 3x3 junction grid")
    block = p.block_m

    def jid(i, j):
        return _JUNCTION_BASE + j * W + i

    nodes = {}
    node_tags = {}
    ways = []

    for j in range(H):
        for i in range(W):
            x = (i - (W - 1) / 2.0) * block + rng.uniform(-p.jitter_m, p.jitter_m)
            y = (j - (H - 1) / 2.0) * block + rng.uniform(-p.jitter_m, p.jitter_m)
            nodes[jid(i, j)] = (x, y)

    # block roles: a couple of diagonal streets, one park, one hotel,
    # the rest plain buildings / sight-line occluders / empty
    blocks = [(i, j) for j in range(H - 1) for i in range(W - 1)]
    order = list(rng.permutation(len(blocks)))
    special = [blocks[k] for k in order]
    diag_set = set(special[: p.diagonal_blocks])
    park_block = special[p.diagonal_blocks] if p.area_pois else None
    hotel_block = special[p.diagonal_blocks + 1] if p.area_pois else None

    way_id = _STREET_WAY_BASE
    street_edges = []  # (node id a, node id b) per block edge, POI host list
    for j in range(H):
        for i in range(W - 1):
            street_edges.append((jid(i, j), jid(i + 1, j)))
    for i in range(W):
        for j in range(H - 1):
            street_edges.append((jid(i, j), jid(i, j + 1)))
    for a, b in street_edges:
        ways.append((way_id, [a, b], [("highway", "residential")]))
        way_id += 1
    for i, j in sorted(diag_set):
        ways.append((way_id, [jid(i, j), jid(i + 1, j + 1)], [("highway", "residential")]))
        way_id += 1

    for _, refs, _ in ways:
        ax, ay = nodes[refs[0]]
        bx, by = nodes[refs[-1]]
        if not _length_residue_safe(math.hypot(bx - ax, by - ay)):
            return None

    poi_id = _POI_BASE
    for a, b in street_edges:
        if rng.random() >= p.poi_edge_prob:
            continue
        two = rng.random() < p.two_poi_prob
        spots = [rng.uniform(0.25, 0.45), rng.uniform(0.55, 0.75)] if two else [rng.uniform(0.3, 0.7)]
        ax, ay = nodes[a]
        bx, by = nodes[b]
        length = math.hypot(bx - ax, by - ay)
        nx, ny = -(by - ay) / length, (bx - ax) / length
        for t in spots:
            side = 1.0 if rng.random() < 0.5 else -1.0
            d = rng.uniform(7.0, 15.0)
            px = ax + t * (bx - ax) + side * d * nx
            py = ay + t * (by - ay) + side * d * ny
            nodes[poi_id] = (px, py)
            node_tags[poi_id] = _poi_tags(rng, p.named_poi_prob)
            poi_id += 1

    corner_id = _CORNER_BASE
    area_way_id = _AREA_WAY_BASE

    def add_ring(corners, tags):
        nonlocal corner_id, area_way_id
        refs = []
        for x, y in corners:
            nodes[corner_id] = (x, y)
            refs.append(corner_id)
            corner_id += 1
        ways.append((area_way_id, refs + [refs[0]], tags))
        area_way_id += 1

    for i, j in blocks:
        cx = (i + 0.5 - (W - 1) / 2.0) * block
        cy = (j + 0.5 - (H - 1) / 2.0) * block
        if (i, j) in diag_set:
            continue
        if (i, j) == park_block:
            half = (rng.uniform(30.0, 38.0), rng.uniform(30.0, 38.0))
            name = _pick_name(rng)
            add_ring(
                _rect_corners(cx, cy, half[0], half[1], 0.0),
                [("leisure", "park"), ("name", f"{name} Park")],
            )
            continue
        if (i, j) == hotel_block:
            half = (rng.uniform(14.0, 18.0), rng.uniform(14.0, 18.0))
            add_ring(
                _rect_corners(cx, cy, half[0], half[1], rng.uniform(-8.0, 8.0)),
                [("building", "yes"), ("tourism", "hotel"), ("name", f"{_pick_name(rng)} Hotel")],
            )
            continue
        roll = rng.random()
        if roll < p.occluder_prob:
            # slab parallel to one block side plus a POI placed behind it;
            # the POI ends up fully hidden, exercising the drop path
            side = int(rng.integers(4))
            corners_of = {
                0: (jid(i, j), jid(i + 1, j)),
                1: (jid(i, j + 1), jid(i + 1, j + 1)),
                2: (jid(i, j), jid(i, j + 1)),
                3: (jid(i + 1, j), jid(i + 1, j + 1)),
            }
            a, b = corners_of[side]
            ax, ay = nodes[a]
            bx, by = nodes[b]
            t = rng.uniform(0.4, 0.6)
            mx, my = ax + t * (bx - ax), ay + t * (by - ay)
            ex, ey = (bx - ax), (by - ay)
            elen = math.hypot(ex, ey)
            ex, ey = ex / elen, ey / elen
            nx, ny = -ey, ex
            if nx * (cx - mx) + ny * (cy - my) < 0:
                nx, ny = -nx, -ny  # inward
            depth = rng.uniform(10.0, 13.0)
            slab = [
                (mx + u * ex + v * nx, my + u * ey + v * ny)
                for u, v in ((-14.0, depth - 2.5), (14.0, depth - 2.5), (14.0, depth + 2.5), (-14.0, depth + 2.5))
            ]
            add_ring(slab, [("building", "yes")])
            hx, hy = mx + 24.0 * nx, my + 24.0 * ny
            nodes[poi_id] = (hx, hy)
            node_tags[poi_id] = _poi_tags(rng, 0.5)
            poi_id += 1
        elif roll < p.occluder_prob + p.building_block_prob:
            bx = cx + rng.uniform(-6.0, 6.0)
            by = cy + rng.uniform(-6.0, 6.0)
            add_ring(
                _rect_corners(bx, by, rng.uniform(12.0, 18.0), rng.uniform(12.0, 18.0), rng.uniform(-8.0, 8.0)),
                [("building", "yes")],
            )

    for j in range(H):
        for i in range(W):
            if rng.random() < p.signal_prob:
                node_tags[jid(i, j)] = [("highway", "traffic_signals")]

    return SynthCity(nodes, node_tags, ways)


# ------------------------------------------------------------ paraphrase ----

_JUNCTION_ALTS = {"intersection": ("crossing", "corner"), "light": ("signal",)}
_TURN_EXPANSIONS = {
    "left": ("turn", "left"),
    "right": ("turn", "right"),
    "straight": ("keep", "straight"),
}
_SIDE_EXPANSIONS = {"left": ("on", "the", "left"), "right": ("on", "the", "right")}
_OPENERS = ("go", "walk", "head")
_STOP_TAIL = ("there",)


def paraphrase_rule_tokens(tokens, rng, variant_prob: float = 0.1) -> list:
    """Lightly rewrite a rule-based token sequence: junction-word synonyms,
    turn/side expansions, optional opener and stop tail. Each slot keeps its
    canonical form with probability 1 - variant_prob, so the result stays
    close enough to the original for a model to learn the distribution."""
    out = []
    if tokens and rng.random() < variant_prob:
        out.append(_OPENERS[rng.integers(len(_OPENERS))])
    turn_next = False
    for i, tok in enumerate(tokens):
        last = i == len(tokens) - 1
        if turn_next and tok in _TURN_EXPANSIONS:
            turn_next = False
            if rng.random() < variant_prob:
                out.extend(_TURN_EXPANSIONS[tok])
            else:
                out.append(tok)
            continue
        turn_next = False
        if tok in _JUNCTION_ALTS:
            if rng.random() < variant_prob:
                alts = _JUNCTION_ALTS[tok]
                out.append(alts[rng.integers(len(alts))])
            else:
                out.append(tok)
            turn_next = True
        elif tok in _SIDE_EXPANSIONS and not last:
            if rng.random() < variant_prob:
                out.extend(_SIDE_EXPANSIONS[tok])
            else:
                out.append(tok)
        elif tok == "stop" and last:
            out.append(tok)
            if rng.random() < variant_prob:
                out.extend(_STOP_TAIL)
        else:
            out.append(tok)
    return out


# ---------------------------------------------------------------- corpora ----


def make_perfect_traces(routes, time_factor: float = 1.0) -> list:
    """Traces that follow each route exactly and stop at its last node,
    taking time_factor times the expected duration."""
    return [
        NavTrace(
            route_id=r.route_id,
            visited_node_ids=list(r.node_ids),
            duration_s=time_factor * expected_duration(r),
            stopped=True,
            stop_node_id=r.node_ids[-1],
        )
        for r in routes
    ]


def make_route_corpus(
    seed: int,
    n_routes: int,
    paraphrase: bool = False,
    params: CityParams = CityParams(),
    variant_prob: float = 0.1,
    spacing: float = 10.0,
    visibility_radius: float = 30.0,
    goal_radius: float = 30.0,
    min_nodes: int = 35,
    max_nodes: int = 45,
    min_intersections: int = 3,
):
    """City -> routes -> (RouteGraph, instruction text) pairs, rule-based
    targets with optional paraphrase noise. Returns (pairs, street_graph,
    routes) so callers can also evaluate navigation metrics."""
    from .osm_ingest import parse_osm, validate
    from .route_graph import build_route_graph
    from .rule_gen import generate_rule_based
    from .street_graph import discretize, sample_routes

    city = build_city(seed, params)
    map_data = validate(parse_osm(city.to_xml())).cleaned
    g = discretize(map_data, spacing=spacing)
    routes = sample_routes(
        g,
        map_data.pois,
        n_routes,
        seed=seed + 1,
        goal_radius=goal_radius,
        min_nodes=min_nodes,
        max_nodes=max_nodes,
        min_intersections=min_intersections,
    )
    rng = np.random.Generator(np.random.Philox(key=seed + 2))
    pairs = []
    for r in routes:
        rg = build_route_graph(r, g, map_data, visibility_radius)
        toks = generate_rule_based(rg)
        if paraphrase:
            toks = paraphrase_rule_tokens(toks, rng, variant_prob)
        pairs.append((rg, " ".join(toks)))
    return pairs, g, routes
