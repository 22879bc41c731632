import math

import numpy as np
import pytest

from landmarknav.geodesy import distance
from landmarknav.osm_ingest import parse_osm, validate
from landmarknav.route_graph import build_route_graph, serialize
from landmarknav.street_graph import discretize, sample_routes
from landmarknav.synthcity import (
    CityParams,
    build_city,
    make_perfect_traces,
    make_route_corpus,
    paraphrase_rule_tokens,
)
from landmarknav.eval_metrics import snt


def rng_for(seed):
    return np.random.Generator(np.random.Philox(key=seed))


class TestGenerator:
    def test_deterministic(self):
        assert build_city(3).to_xml() == build_city(3).to_xml()

    def test_seeds_differ(self):
        assert build_city(3).to_xml() != build_city(4).to_xml()

    def test_parses_clean(self):
        report = validate(parse_osm(build_city(7).to_xml()))
        assert report.clean
        m = report.cleaned
        assert len(m.street_polylines) >= 40
        assert len(m.pois) >= 10
        assert any(p.is_area for p in m.pois)
        assert len(m.buildings) >= 2
        assert m.signals

    def test_discretizes_into_one_component(self):
        m = validate(parse_osm(build_city(7).to_xml())).cleaned
        g = discretize(m, spacing=10.0)
        assert len(set(g.component.values())) == 1
        assert len(g.positions) > 200
        for u in g.adjacency:
            for v in g.adjacency[u]:
                d = distance(g.positions[u], g.positions[v])
                assert 0.05 < d < 12.0

    def test_street_lengths_clear_safety_margins(self):
        m = validate(parse_osm(build_city(11).to_xml())).cleaned
        for line in m.street_polylines:
            from landmarknav.geodesy import project

            pts = [project(p, m.projection_origin) for p in line]
            total = sum(distance(a, b) for a, b in zip(pts, pts[1:]))
            r = total % 10.0
            assert 0.05 <= r <= 9.95
            assert abs(r - 1.0) > 0.05

    def test_routes_samplable(self):
        m = validate(parse_osm(build_city(7).to_xml())).cleaned
        g = discretize(m, spacing=10.0)
        routes = sample_routes(g, m.pois, 3, seed=9)
        assert len(routes) == 3
        for r in routes:
            assert 35 <= len(r.node_ids) <= 45

    def test_rotation_leaves_route_graphs_intact(self):
        city = build_city(21)
        base = None
        for rotation, offset in ((0.0, (0.0, 0.0)), (90.0, (2000.0, -1500.0))):
            m = validate(parse_osm(city.to_xml(rotation, offset))).cleaned
            g = discretize(m, spacing=10.0)
            routes = sample_routes(g, m.pois, 2, seed=5)
            lines = [serialize(build_route_graph(r, g, m)) for r in routes]
            if base is None:
                base = lines
            else:
                assert lines == base


class TestParaphrase:
    def test_zero_prob_is_identity(self):
        toks = ["chase", "right", "light", "left", "stop"]
        assert paraphrase_rule_tokens(toks, rng_for(0), variant_prob=0.0) == toks

    def test_deterministic_per_rng_seed(self):
        toks = ["golden", "fork", "left", "intersection", "right", "stop"]
        a = paraphrase_rule_tokens(toks, rng_for(5), variant_prob=1.0)
        b = paraphrase_rule_tokens(toks, rng_for(5), variant_prob=1.0)
        assert a == b

    def test_turn_and_side_get_different_expansions(self):
        # "right" after a junction word expands as a turn, the earlier
        # "right" after a POI word expands as a side
        toks = ["chase", "right", "light", "right", "stop"]
        out = paraphrase_rule_tokens(toks, rng_for(1), variant_prob=1.0)
        text = " ".join(out)
        assert "on the right" in text
        assert "turn right" in text
        assert out[-1] in {"stop", "there"}

    def test_junction_synonyms_only_from_bank(self):
        toks = ["intersection", "straight", "stop"]
        for seed in range(8):
            out = paraphrase_rule_tokens(toks, rng_for(seed), variant_prob=1.0)
            assert out[0] in {"crossing", "corner", "go", "walk", "head"}

    def test_empty(self):
        assert paraphrase_rule_tokens([], rng_for(0), variant_prob=1.0) == []


class TestCorpus:
    def test_pairs_and_traces(self):
        pairs, g, routes = make_route_corpus(31, 4)
        assert len(pairs) == 4
        for rg, text in pairs:
            assert text.endswith("stop")
            assert rg.nodes
        traces = make_perfect_traces(routes)
        for t in traces:
            t.validate(g)
        assert snt(traces, routes, g) == pytest.approx(1.0)

    def test_paraphrase_changes_some_texts(self):
        plain, _, _ = make_route_corpus(31, 4, paraphrase=False)
        noisy, _, _ = make_route_corpus(31, 4, paraphrase=True, variant_prob=0.9)
        assert [t for _, t in plain] != [t for _, t in noisy]

    def test_corpus_deterministic(self):
        a, _, _ = make_route_corpus(31, 3, paraphrase=True)
        b, _, _ = make_route_corpus(31, 3, paraphrase=True)
        assert [t for _, t in a] == [t for _, t in b]
        assert [serialize(g) for g, _ in a] == [serialize(g) for g, _ in b]
