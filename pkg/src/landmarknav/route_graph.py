"""Routes -> directed labeled graphs that carry no coordinates.

A route graph contains the route's street segment nodes (tokens <1>, <2>,
..., <last>), adjacent off-route street nodes (<neighbor>), one node per
point of interest visible from the route, and the POI's metadata unpacked
into tag-key / tag-value / name-word nodes. Street-street and POI-street
edges are labeled with one of 12 direction sectors relative to the travel
direction; every other edge is unlabeled. Because only sector labels and
tokens survive, the graph is invariant to translating or rotating the map.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .geodesy import (
    angle_bin,
    bearing,
    closest_point_on_polygon,
    distance,
    normalize_angle,
    project,
    segment_blocked,
)

ROUTE_GRAPH_SCHEMA_VERSION = 1

NODE_TYPES = (
    "street",
    "poi",
    "tag_key",
    "tag_value",
    "name_1",
    "name_2",
    "name_3",
    "name_4plus",
)

POI_TOKEN = "<poi>"
NEIGHBOR_TOKEN = "<neighbor>"
LAST_TOKEN = "<last>"


@dataclass(frozen=True)
class GraphNode:
    id: int
    type: str
    token: str


@dataclass(frozen=True)
class GraphEdge:
    src: int
    dst: int
    label: int | None  # direction sector 0..11, or None for unlabeled


@dataclass
class RouteGraph:
    nodes: list
    edges: list
    route_node_ids: list  # local ids of the route street nodes, in travel order
    provenance: dict = field(default_factory=dict)

    @property
    def route_id(self):
        return self.provenance.get("route_id", "")

    def node_by_id(self, nid: int) -> GraphNode:
        return self.nodes[nid]

    def out_edges(self, nid: int):
        return [e for e in self.edges if e.src == nid]

    def in_edges(self, nid: int):
        return [e for e in self.edges if e.dst == nid]


def relative_angle(from_pos, to_pos, travel_direction: float) -> float:
    """Direction of to_pos as seen from from_pos, measured clockwise from the
    travel direction, in [0, 360). Coincident points count as dead ahead."""
    if from_pos == to_pos:
        return 0.0
    return normalize_angle(bearing(from_pos, to_pos) - travel_direction)


def poi_sight_point(node_pos, poi, origin):
    """Where a sight line from node_pos aims: the POI point itself, or the
    nearest point of an area POI's outline."""
    if poi.is_area:
        return closest_point_on_polygon(node_pos, poi.location)
    return project(poi.location, origin)


def visible_pois(node_pos, pois, buildings, origin, radius: float = 30.0):
    """POIs within radius of node_pos whose sight line no building blocks.

    Returns [(poi, sight_point)] in input POI order. A sight line that ends
    on a building outline (the POI's own footprint) is not blocked by it.
    """
    out = []
    for poi in pois:
        sight = poi_sight_point(node_pos, poi, origin)
        if distance(node_pos, sight) > radius:
            continue
        if segment_blocked(node_pos, sight, buildings):
            continue
        out.append((poi, sight))
    return out


def _name_type(position: int) -> str:
    # 1-based word position; everything from the 4th word on shares one type
    return f"name_{position}" if position <= 3 else "name_4plus"


def build_route_graph(route, street_graph, map_data, visibility_radius: float = 30.0) -> RouteGraph:
    """Assemble the directed labeled graph for one route.

    Node order (== id order) is canonical: route street nodes by position,
    then neighbor street nodes, then POIs by OSM id, then each POI's
    name-word and tag nodes. Edge order is (src, dst).
    """
    path = list(route.node_ids)
    if len(path) < 2:
        raise ValueError("route must have at least 2 nodes")
    pos = {nid: street_graph.positions[nid] for nid in path}

    # travel direction at each route position
    dirs = []
    for i, nid in enumerate(path):
        if i == 0:
            dirs.append(bearing(street_graph.positions[path[0]], street_graph.positions[path[1]]))
        else:
            dirs.append(bearing(street_graph.positions[path[i - 1]], street_graph.positions[nid]))

    route_index = {nid: i for i, nid in enumerate(path)}

    # off-route street nodes adjacent to the route
    neighbor_first_seen = {}
    for i, nid in enumerate(path):
        for nbr in street_graph.adjacency[nid]:
            if nbr in route_index:
                continue
            if nbr not in neighbor_first_seen:
                neighbor_first_seen[nbr] = i
    neighbors = sorted(neighbor_first_seen, key=lambda nid: (neighbor_first_seen[nid], nid))

    nodes = []
    local = {}  # street-graph node id -> local id

    for i, nid in enumerate(path):
        token = LAST_TOKEN if i == len(path) - 1 else f"<{i + 1}>"
        local[nid] = len(nodes)
        nodes.append(GraphNode(len(nodes), "street", token))
    for nid in neighbors:
        local[nid] = len(nodes)
        nodes.append(GraphNode(len(nodes), "street", NEIGHBOR_TOKEN))

    street_dir = {}
    for i, nid in enumerate(path):
        street_dir[local[nid]] = dirs[i]
    for nid in neighbors:
        street_dir[local[nid]] = dirs[neighbor_first_seen[nid]]

    edges = []

    # street adjacency, both directions, sector-labeled
    included = set(local)
    for a in sorted(included, key=lambda nid: local[nid]):
        for b in street_graph.adjacency[a]:
            if b not in included:
                continue
            rel = relative_angle(
                street_graph.positions[a], street_graph.positions[b], street_dir[local[a]]
            )
            edges.append(GraphEdge(local[a], local[b], angle_bin(rel)))

    # POI visibility from route nodes only
    poi_sightings = {}  # osm id -> list of (route position, sight point)
    poi_obj = {}
    for i, nid in enumerate(path):
        for poi, sight in visible_pois(
            pos[nid], map_data.pois, map_data.buildings, street_graph.origin, visibility_radius
        ):
            poi_sightings.setdefault(poi.id, []).append((i, sight))
            poi_obj[poi.id] = poi

    poi_local = {}
    for pid in sorted(poi_sightings):
        poi_local[pid] = len(nodes)
        nodes.append(GraphNode(len(nodes), "poi", POI_TOKEN))

    for pid in sorted(poi_sightings):
        poi = poi_obj[pid]
        plocal = poi_local[pid]

        for i, sight in poi_sightings[pid]:
            node_pos = pos[path[i]]
            rel = relative_angle(node_pos, sight, dirs[i])
            edges.append(GraphEdge(plocal, local[path[i]], angle_bin(rel)))

        name_locals = []
        for w, word in enumerate(poi.name_words, start=1):
            nid_local = len(nodes)
            nodes.append(GraphNode(nid_local, _name_type(w), word))
            name_locals.append(nid_local)
            edges.append(GraphEdge(nid_local, plocal, None))
        for a in name_locals:
            for b in name_locals:
                if a != b:
                    edges.append(GraphEdge(a, b, None))

        for tag in sorted(
            (t for t in poi.tags if t.key != "name"), key=lambda t: (t.key, t.value)
        ):
            key_local = len(nodes)
            nodes.append(GraphNode(key_local, "tag_key", tag.key))
            value_local = len(nodes)
            nodes.append(GraphNode(value_local, "tag_value", tag.value))
            edges.append(GraphEdge(key_local, plocal, None))
            edges.append(GraphEdge(value_local, key_local, None))

    edges.sort(key=lambda e: (e.src, e.dst))

    signal_positions = [
        i for i, nid in enumerate(path) if nid in street_graph.signal_nodes
    ]

    return RouteGraph(
        nodes=nodes,
        edges=edges,
        route_node_ids=list(range(len(path))),
        provenance={"route_id": route.route_id, "signals": signal_positions},
    )


# ----------------------------------------------------------------------------
# serialization (canonical: one JSON line per graph, fixed key order)


def serialize(g: RouteGraph) -> str:
    if not g.route_node_ids:
        raise ValueError("refusing to serialize a route graph without route nodes")
    record = {
        "v": ROUTE_GRAPH_SCHEMA_VERSION,
        "route_id": g.provenance.get("route_id", ""),
        "nodes": [{"id": n.id, "type": n.type, "token": n.token} for n in g.nodes],
        "edges": [{"src": e.src, "dst": e.dst, "label": e.label} for e in g.edges],
        "route_node_ids": list(g.route_node_ids),
        "signals": list(g.provenance.get("signals", [])),
    }
    return json.dumps(record, ensure_ascii=False, separators=(",", ":"))


def deserialize(line: str) -> RouteGraph:
    record = json.loads(line)
    version = record.get("v")
    if version != ROUTE_GRAPH_SCHEMA_VERSION:
        raise ValueError(
            f"unsupported route graph schema {version!r}, expected {ROUTE_GRAPH_SCHEMA_VERSION}"
        )
    if not record.get("route_node_ids"):
        raise ValueError("route graph record has no route nodes")
    nodes = []
    for d in record["nodes"]:
        if d["type"] not in NODE_TYPES:
            raise ValueError(f"unknown node type {d['type']!r}")
        nodes.append(GraphNode(d["id"], d["type"], d["token"]))
    edges = []
    for d in record["edges"]:
        label = d["label"]
        if label is not None and not (0 <= label < 12):
            raise ValueError(f"edge label {label!r} outside 0..11")
        edges.append(GraphEdge(d["src"], d["dst"], label))
    return RouteGraph(
        nodes=nodes,
        edges=edges,
        route_node_ids=[int(x) for x in record["route_node_ids"]],
        provenance={
            "route_id": record.get("route_id", ""),
            "signals": [int(x) for x in record.get("signals", [])],
        },
    )


def write_graphs_jsonl(graphs, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for g in graphs:
            fh.write(serialize(g))
            fh.write("\n")


def read_graphs_jsonl(path) -> list:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(deserialize(line))
    return out
