"""Corpus metrics for generated instructions and navigation traces.

Text side: corpus BLEU-4 (own implementation, exponentially smoothed),
mean length, and landmark mentions recovered from the route graph.
Navigation side: success rate within 25 m, success-weighted normalized
DTW, and success-weighted navigation time, all computed over street-graph
node ids rather than raw coordinates.
"""

from __future__ import annotations

import csv
import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field

from .geodesy import distance
from .route_graph import RouteGraph
from .street_graph import NoPathError, count_turns, is_intersection, shortest_path

SUCCESS_RADIUS_M = 25.0
DTW_THRESHOLD_M = 25.0
SECONDS_PER_NODE = 1.3

_PUNCT = re.compile(r"([^\w\s])")


def tokenize(text: str) -> list:
    """Lowercase and split punctuation marks into their own tokens."""
    text = _PUNCT.sub(r" \1 ", text.lower())
    return text.split()


# ---------------------------------------------------------------- BLEU ----


def _ngrams(tokens, n):
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(hypotheses, references) -> float:
    """Corpus BLEU-4 in [0, 100] with exponential smoothing of zero counts
    and the exponential brevity penalty."""
    if len(hypotheses) != len(references):
        raise ValueError("hypothesis/reference count mismatch")
    if not hypotheses:
        raise ValueError("empty corpus")
    matches = [0] * 4
    totals = [0] * 4
    hyp_len = ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        h = tokenize(hyp)
        r = tokenize(ref)
        hyp_len += len(h)
        ref_len += len(r)
        for n in range(1, 5):
            hgrams = _ngrams(h, n)
            rgrams = _ngrams(r, n)
            totals[n - 1] += max(len(h) - n + 1, 0)
            matches[n - 1] += sum(min(c, rgrams[g]) for g, c in hgrams.items())
    if hyp_len == 0:
        return 0.0
    log_sum = 0.0
    invcnt = 1.0
    for n in range(4):
        if matches[n] > 0:
            p = matches[n] / totals[n]
        else:
            # each missing order halves the smoothed precision
            invcnt *= 2.0
            p = 1.0 / (invcnt * max(totals[n], 1))
        log_sum += math.log(p)
    brevity = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * brevity * math.exp(log_sum / 4.0)


def mean_length(hypotheses) -> float:
    if not hypotheses:
        raise ValueError("empty corpus")
    return sum(len(tokenize(h)) for h in hypotheses) / len(hypotheses)


# ----------------------------------------------------------- landmarks ----


def _poi_descriptions(graph: RouteGraph):
    """Per POI: its name words and its tag (key, value) pairs."""
    out = []
    for node in graph.nodes:
        if node.type != "poi":
            continue
        names = []
        tags = []
        for e in graph.in_edges(node.id):
            src = graph.nodes[e.src]
            if src.type.startswith("name_"):
                names.append(src.token)
            elif src.type == "tag_key":
                for ve in graph.in_edges(src.id):
                    if graph.nodes[ve.src].type == "tag_value":
                        tags.append((src.token, graph.nodes[ve.src].token))
        out.append((node.id, names, tags))
    return out


def _poi_mentioned(words: set, names, tags) -> bool:
    if names:
        return all(w.lower() in words for w in names)
    for _, value in tags:
        for piece in value.split("_"):
            if len(piece) >= 4 and piece.lower() in words:
                return True
    return False


def landmarks(instruction: str, graph: RouteGraph) -> int:
    """Distinct route-graph POIs whose name (or, lacking one, some tag-value
    word of length >= 4) appears in the instruction."""
    words = set(tokenize(instruction))
    return sum(
        1 for _, names, tags in _poi_descriptions(graph) if _poi_mentioned(words, names, tags)
    )


# ------------------------------------------------------------- distances ----


def node_distance(g, a, b) -> float:
    """Meters along the minimum-hop path; inf when disconnected."""
    if a == b:
        return 0.0
    try:
        path = shortest_path(g, a, b)
    except NoPathError:
        return math.inf
    return sum(
        distance(g.positions[u], g.positions[v]) for u, v in zip(path, path[1:])
    )


def dtw(g, q_nodes, r_nodes) -> float:
    """Min-cost monotone alignment anchored at both ends."""
    if not q_nodes or not r_nodes:
        raise ValueError("empty path")
    nq, nr = len(q_nodes), len(r_nodes)
    cost = [[node_distance(g, q, r) for r in r_nodes] for q in q_nodes]
    acc = [[math.inf] * nr for _ in range(nq)]
    acc[0][0] = cost[0][0]
    for i in range(nq):
        for j in range(nr):
            if i == 0 and j == 0:
                continue
            best = math.inf
            if i > 0:
                best = min(best, acc[i - 1][j])
            if j > 0:
                best = min(best, acc[i][j - 1])
            if i > 0 and j > 0:
                best = min(best, acc[i - 1][j - 1])
            acc[i][j] = cost[i][j] + best
    return acc[-1][-1]


def ndtw(g, q_nodes, r_nodes) -> float:
    value = dtw(g, q_nodes, r_nodes)
    if math.isinf(value):
        return 0.0
    return math.exp(-value / (len(r_nodes) * DTW_THRESHOLD_M))


# ----------------------------------------------------------------- traces ----


@dataclass
class NavTrace:
    route_id: str
    visited_node_ids: list
    duration_s: float
    stopped: bool
    stop_node_id: int

    def validate(self, g) -> None:
        if self.duration_s <= 0:
            raise ValueError(f"trace {self.route_id}: duration must be positive")
        if not self.visited_node_ids:
            raise ValueError(f"trace {self.route_id}: empty path")
        for u, v in zip(self.visited_node_ids, self.visited_node_ids[1:]):
            if v not in g.adjacency.get(u, ()):
                raise ValueError(f"trace {self.route_id}: edge {u}->{v} not in street graph")


def traces_to_jsonl(traces, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in traces:
            fh.write(
                json.dumps(
                    {
                        "route_id": t.route_id,
                        "visited_node_ids": list(t.visited_node_ids),
                        "duration_s": t.duration_s,
                        "stopped": t.stopped,
                        "stop_node_id": t.stop_node_id,
                    },
                    ensure_ascii=False,
                    separators=(",", ":"),
                )
            )
            fh.write("\n")


def traces_from_jsonl(path) -> list:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            d = json.loads(line)
            out.append(
                NavTrace(
                    route_id=d["route_id"],
                    visited_node_ids=[int(x) for x in d["visited_node_ids"]],
                    duration_s=float(d["duration_s"]),
                    stopped=bool(d["stopped"]),
                    stop_node_id=int(d["stop_node_id"]),
                )
            )
    return out


# ----------------------------------------------------------------- scores ----


def success(trace: NavTrace, route, g) -> int:
    """1 iff the navigator chose to stop within 25 m of the goal node."""
    if not trace.stopped:
        return 0
    goal = route.node_ids[-1]
    stop = trace.stop_node_id
    if stop not in g.positions or goal not in g.positions:
        return 0
    return 1 if distance(g.positions[stop], g.positions[goal]) <= SUCCESS_RADIUS_M else 0


def expected_duration(route) -> float:
    return SECONDS_PER_NODE * len(route.node_ids)


def sdtw(trace: NavTrace, route, g) -> float:
    s = success(trace, route, g)
    if s == 0:
        return 0.0
    return s * ndtw(g, trace.visited_node_ids, route.node_ids)


def snt_contribution(trace: NavTrace, route, g) -> float:
    """S_i * expected/actual time; uncapped by design, so a fast success
    can contribute more than 1."""
    if trace.duration_s <= 0:
        raise ValueError("duration must be positive")
    return success(trace, route, g) * expected_duration(route) / trace.duration_s


def snt(traces, routes, g) -> float:
    if len(traces) != len(routes):
        raise ValueError("trace/route count mismatch")
    if not traces:
        raise ValueError("empty corpus")
    return sum(snt_contribution(t, r, g) for t, r in zip(traces, routes)) / len(traces)


# ------------------------------------------------------------- aggregates ----


@dataclass
class EvalResult:
    aggregates: dict
    per_instance: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(
            {"aggregates": self.aggregates, "per_instance": self.per_instance},
            ensure_ascii=False,
            indent=1,
            sort_keys=True,
        )

    def write_csv(self, path) -> None:
        if not self.per_instance:
            raise ValueError("no per-instance rows")
        fields = list(self.per_instance[0])
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=fields)
            writer.writeheader()
            writer.writerows(self.per_instance)


def evaluate_text(hypotheses, references, graphs) -> EvalResult:
    if not (len(hypotheses) == len(references) == len(graphs)):
        raise ValueError("corpus length mismatch")
    rows = []
    for i, (hyp, graph) in enumerate(zip(hypotheses, graphs)):
        rows.append(
            {
                "index": i,
                "route_id": graph.route_id,
                "length": len(tokenize(hyp)),
                "landmarks": landmarks(hyp, graph),
            }
        )
    agg = {
        "bleu": bleu(hypotheses, references),
        "length": mean_length(hypotheses),
        "landmarks": sum(r["landmarks"] for r in rows) / len(rows),
    }
    return EvalResult(agg, rows)


def evaluate_navigation(traces, routes, g) -> EvalResult:
    if len(traces) != len(routes):
        raise ValueError("trace/route count mismatch")
    if not traces:
        raise ValueError("empty corpus")
    rows = []
    for trace, route in zip(traces, routes):
        trace.validate(g)
        s = success(trace, route, g)
        rows.append(
            {
                "route_id": route.route_id,
                "success": s,
                "sdtw": sdtw(trace, route, g),
                "snt": snt_contribution(trace, route, g),
            }
        )
    n = len(rows)
    agg = {
        "sr": sum(r["success"] for r in rows) / n,
        "sdtw": sum(r["sdtw"] for r in rows) / n,
        "snt": sum(r["snt"] for r in rows) / n,
    }
    return EvalResult(agg, rows)


def evaluate_corpus(
    hypotheses=None, references=None, graphs=None, traces=None, routes=None, street_graph=None
) -> EvalResult:
    aggregates = {}
    rows = []
    if hypotheses is not None:
        text_result = evaluate_text(hypotheses, references, graphs)
        aggregates.update(text_result.aggregates)
        rows = text_result.per_instance
    if traces is not None:
        nav_result = evaluate_navigation(traces, routes, street_graph)
        aggregates.update(nav_result.aggregates)
        if rows and len(nav_result.per_instance) == len(rows):
            for row, nav in zip(rows, nav_result.per_instance):
                row.update({k: v for k, v in nav.items() if k != "route_id"})
        else:
            rows = rows + nav_result.per_instance
    if not aggregates:
        raise ValueError("nothing to evaluate")
    return EvalResult(aggregates, rows)


# --------------------------------------------------------------- analyses ----


def landmark_type_scores(instructions, graphs) -> list:
    """(tag, score) ranked by how often a tag's POIs get mentioned,
    normalized by how often the tag shows up in the inputs at all."""
    if len(instructions) != len(graphs):
        raise ValueError("corpus length mismatch")
    present = Counter()
    mentioned = Counter()
    for instruction, graph in zip(instructions, graphs):
        words = set(tokenize(instruction))
        tags_here = {}
        for _, names, tags in _poi_descriptions(graph):
            hit = _poi_mentioned(words, names, tags)
            for key, value in tags:
                label = f"{key}:{value}"
                tags_here[label] = tags_here.get(label, False) or hit
        for label, hit in tags_here.items():
            present[label] += 1
            if hit:
                mentioned[label] += 1
    scored = [(label, mentioned[label] / present[label]) for label in present]
    scored.sort(key=lambda kv: (-kv[1], kv[0]))
    return scored


def success_by_complexity(traces, routes, g) -> dict:
    """Success rates grouped by route length, intersection count, and turns.
    Buckets that never occur are simply absent."""
    if len(traces) != len(routes):
        raise ValueError("trace/route count mismatch")
    groups = {"length": {}, "intersections": {}, "turns": {}}
    for trace, route in zip(traces, routes):
        s = success(trace, route, g)
        keys = {
            "length": len(route.node_ids),
            "intersections": sum(1 for n in route.node_ids if is_intersection(g, n)),
            "turns": count_turns(g, route.node_ids),
        }
        for dim, key in keys.items():
            hits, total = groups[dim].get(key, (0, 0))
            groups[dim][key] = (hits + s, total + 1)
    return {
        dim: {key: hits / total for key, (hits, total) in sorted(buckets.items())}
        for dim, buckets in groups.items()
    }
