"""Rule-based instruction baseline and pretraining corpus synthesis.

The baseline walks the route graph once and strings together, in route
order, every visible POI (followed by its side) and every interior
junction (followed by the turn direction), ending with "stop". It reads
only the route graph, never the map, so its output enjoys the same
rotation/translation invariance.
"""

from __future__ import annotations

import json
import warnings

import numpy as np

from .route_graph import RouteGraph, deserialize, serialize

# Tag keys tried, in order, when a POI has no name words. Values with
# underscores ("fast_food") are split into separate surface words.
FALLBACK_TAG_KEYS = ("cuisine", "amenity", "shop", "leisure", "tourism")

STOP_TOKEN = "stop"


def _street_out_degree(g: RouteGraph, nid: int, street_ids) -> int:
    return sum(1 for e in g.out_edges(nid) if e.dst in street_ids)


def _side_word(label: int) -> str:
    # sectors centered strictly left of the heading read "left"; the
    # dead-ahead and dead-behind sectors tie toward "right"
    return "left" if 7 <= label <= 11 else "right"


def _turn_word(label: int) -> str:
    if label == 0:
        return "straight"
    return "left" if 7 <= label <= 11 else "right"


def _poi_words(g: RouteGraph, poi_id: int) -> list:
    """Surface words for one POI: its name if present, else the most
    specific tag value we can find."""
    name_words = [
        g.nodes[e.src].token
        for e in g.in_edges(poi_id)
        if g.nodes[e.src].type.startswith("name_")
    ]
    if name_words:
        return name_words

    tag_values = {}
    for e in g.in_edges(poi_id):
        key_node = g.nodes[e.src]
        if key_node.type != "tag_key":
            continue
        for ve in g.in_edges(key_node.id):
            if g.nodes[ve.src].type == "tag_value":
                tag_values.setdefault(key_node.token, g.nodes[ve.src].token)
    for key in FALLBACK_TAG_KEYS:
        if key in tag_values:
            return tag_values[key].split("_")
    for key in sorted(tag_values):
        return tag_values[key].split("_")
    return []


def generate_rule_based(g: RouteGraph) -> list:
    """Emit the baseline token sequence for one route graph."""
    positions = list(g.route_node_ids)
    position_set = set(positions)
    street_ids = {n.id for n in g.nodes if n.type == "street"}
    signals = set(g.provenance.get("signals", []))

    # first route position each poi is visible from, and the sector there
    first_sighting = {}
    for e in g.edges:
        if g.nodes[e.src].type == "poi" and e.dst in position_set:
            seen = first_sighting.get(e.src)
            if seen is None or e.dst < seen[0]:
                first_sighting[e.src] = (e.dst, e.label)
    by_position = {}
    for poi_id, (pos, label) in sorted(first_sighting.items()):
        by_position.setdefault(pos, []).append((poi_id, label))

    route_steps = set(zip(positions, positions[1:]))
    exit_label = {
        e.src: e.label
        for e in g.edges
        if e.label is not None and (e.src, e.dst) in route_steps
    }

    tokens = []
    last = positions[-1]
    for pos in positions:
        for poi_id, label in by_position.get(pos, ()):
            words = _poi_words(g, poi_id)
            if not words:
                continue
            tokens.extend(words)
            tokens.append(_side_word(label))
        interior = pos != positions[0] and pos != last
        if interior and _street_out_degree(g, pos, street_ids) > 2:
            tokens.append("light" if pos in signals else "intersection")
            tokens.append(_turn_word(exit_label[pos]))
    tokens.append(STOP_TOKEN)
    return tokens


def make_pretraining_set(graphs, n: int = 20000, seed: int = 0) -> list:
    """Deterministically draw n (graph, rule-text) pairs.

    Draws a permutation when n fits in the pool, otherwise samples with
    replacement and warns about the duplicates.
    """
    graphs = list(graphs)
    if not graphs:
        raise ValueError("pretraining needs at least one route graph")
    if n < 0:
        raise ValueError("pretraining size must be >= 0")
    rng = np.random.Generator(np.random.Philox(key=seed))
    if n <= len(graphs):
        indices = [int(i) for i in rng.permutation(len(graphs))[:n]]
    else:
        warnings.warn(
            f"only {len(graphs)} distinct route graphs for {n} pretraining "
            "instances; sampling with replacement",
            stacklevel=2,
        )
        indices = [int(i) for i in rng.integers(0, len(graphs), size=n)]
    return [(graphs[i], " ".join(generate_rule_based(graphs[i]))) for i in indices]


def dataset_line(g: RouteGraph, text: str) -> str:
    record = json.loads(serialize(g))
    record["text"] = text
    return json.dumps(record, ensure_ascii=False, separators=(",", ":"))


def write_dataset_jsonl(pairs, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for g, text in pairs:
            fh.write(dataset_line(g, text))
            fh.write("\n")


def read_dataset_jsonl(path) -> list:
    """Load (RouteGraph, text) pairs; the graph schema checks still apply."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            text = record.pop("text", "")
            out.append((deserialize(line), text))
    return out
