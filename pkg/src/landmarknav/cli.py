"""Command line orchestration of the pipeline.

Subcommands chain over JSON/JSONL artifacts inside one output directory:

    synth-city    deterministic fixture city -> OSM XML
    ingest        OSM XML -> map.json
    discretize    map.json -> street_graph.json
    sample-routes street_graph.json + map.json -> routes.jsonl
    build-graphs  routes.jsonl -> graphs.jsonl
    rule-gen      graphs.jsonl -> rule_dataset.jsonl
    pretrain-data graphs.jsonl -> pretrain.jsonl
    split         routes.jsonl -> train/dev/test route files
    train         dataset jsonl (+ optional pretrain set) -> model.ckpt
    generate      model.ckpt + graphs.jsonl -> hypotheses.jsonl
    evaluate      hypotheses + references (+ traces) -> metrics.json + csv
    analyze       hypotheses + references (+ traces) -> analysis.json

Every subcommand takes --config/--seed/--out, exits 0 on success and
nonzero with a single JSON error record on stderr otherwise, and writes
byte-identical outputs for identical inputs and seeds. Set LANDMARKNAV_LOG
to debug/info/warning/error to control logging.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys

import numpy as np

from .config import PipelineConfig, default_summary
from .geodesy import unproject

log = logging.getLogger("landmarknav")


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse would sys.exit(2) with plain text; the error-record contract
    # wants a JSON line instead
    def error(self, message):
        raise UsageError(message)


def _setup_logging():
    name = os.environ.get("LANDMARKNAV_LOG", "warning").upper()
    level = getattr(logging, name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _load_cfg(args) -> PipelineConfig:
    cfg = PipelineConfig.from_json(args.config) if args.config else PipelineConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "out", None) is not None:
        cfg.out_dir = args.out
    return cfg.validate()


def _art(cfg, name):
    return os.path.join(cfg.out_dir, name)


def _ensure_out(cfg):
    os.makedirs(cfg.out_dir, exist_ok=True)


# ------------------------------------------------------------ subcommands ----


def cmd_synth_city(args, cfg):
    from .synthcity import CityParams, build_city

    seed = cfg.seed if args.city_seed is None else args.city_seed
    params = CityParams(junctions_x=args.junctions, junctions_y=args.junctions)
    city = build_city(seed, params)
    path = args.xml_out or cfg.osm_path
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    city.write_xml(path, rotation_deg=args.rotation, offset_m=(args.offset_x, args.offset_y))
    log.info("synth-city: wrote %s", path)
    return 0


def cmd_ingest(args, cfg):
    from .osm_ingest import parse_osm, save_map, validate

    xml_path = args.xml or cfg.osm_path
    report = validate(parse_osm(xml_path))
    for entry in report.entries():
        log.warning("ingest: %s", entry)
    _ensure_out(cfg)
    save_map(report.cleaned, _art(cfg, "map.json"))
    m = report.cleaned
    log.info(
        "ingest: %d streets, %d pois, %d buildings, %d signals",
        len(m.street_polylines), len(m.pois), len(m.buildings), len(m.signals),
    )
    return 0


def cmd_discretize(args, cfg):
    from .osm_ingest import load_map
    from .street_graph import discretize, save_graph

    m = load_map(args.map or _art(cfg, "map.json"))
    g = discretize(m, spacing=cfg.spacing_m)
    _ensure_out(cfg)
    save_graph(g, _art(cfg, "street_graph.json"))
    log.info("discretize: %d nodes, %d edges", len(g.positions), g.edge_count())
    return 0


def cmd_sample_routes(args, cfg):
    from .osm_ingest import load_map
    from .street_graph import load_graph, routes_to_jsonl, sample_routes

    g = load_graph(args.graph or _art(cfg, "street_graph.json"))
    m = load_map(args.map or _art(cfg, "map.json"))
    n = args.n if args.n is not None else cfg.n_routes
    routes = sample_routes(
        g,
        m.pois,
        n,
        seed=cfg.seed,
        goal_radius=cfg.goal_radius_m,
        min_nodes=cfg.min_route_nodes,
        max_nodes=cfg.max_route_nodes,
        min_intersections=cfg.min_intersections,
    )
    _ensure_out(cfg)
    routes_to_jsonl(routes, _art(cfg, "routes.jsonl"))
    log.info("sample-routes: %d routes", len(routes))
    return 0


def cmd_build_graphs(args, cfg):
    from .osm_ingest import load_map
    from .route_graph import build_route_graph, write_graphs_jsonl
    from .street_graph import load_graph, routes_from_jsonl

    routes = routes_from_jsonl(args.routes or _art(cfg, "routes.jsonl"))
    g = load_graph(args.graph or _art(cfg, "street_graph.json"))
    m = load_map(args.map or _art(cfg, "map.json"))
    graphs = [build_route_graph(r, g, m, cfg.visibility_radius_m) for r in routes]
    _ensure_out(cfg)
    write_graphs_jsonl(graphs, _art(cfg, "graphs.jsonl"))
    log.info("build-graphs: %d graphs", len(graphs))
    return 0


def cmd_rule_gen(args, cfg):
    from .route_graph import read_graphs_jsonl
    from .rule_gen import generate_rule_based, write_dataset_jsonl

    graphs = read_graphs_jsonl(args.graphs or _art(cfg, "graphs.jsonl"))
    pairs = [(g, " ".join(generate_rule_based(g))) for g in graphs]
    _ensure_out(cfg)
    write_dataset_jsonl(pairs, _art(cfg, "rule_dataset.jsonl"))
    log.info("rule-gen: %d instructions", len(pairs))
    return 0


def cmd_pretrain_data(args, cfg):
    from .route_graph import read_graphs_jsonl
    from .rule_gen import make_pretraining_set, write_dataset_jsonl

    graphs = read_graphs_jsonl(args.graphs or _art(cfg, "graphs.jsonl"))
    n = args.n if args.n is not None else cfg.pretrain_size
    pairs = make_pretraining_set(graphs, n=n, seed=cfg.seed)
    _ensure_out(cfg)
    write_dataset_jsonl(pairs, _art(cfg, "pretrain.jsonl"))
    log.info("pretrain-data: %d pairs", len(pairs))
    return 0


def cmd_split(args, cfg):
    from .street_graph import load_graph, routes_from_jsonl, routes_to_jsonl

    if cfg.holdout_rect is None:
        raise ValueError("config: split needs holdout_rect = [lat_min, lon_min, lat_max, lon_max]")
    routes = routes_from_jsonl(args.routes or _art(cfg, "routes.jsonl"))
    g = load_graph(args.graph or _art(cfg, "street_graph.json"))
    lat0, lon0, lat1, lon1 = cfg.holdout_rect

    def inside(nid):
        gp = unproject(g.positions[nid], g.origin)
        return lat0 <= gp.lat <= lat1 and lon0 <= gp.lon <= lon1

    unseen, dev, pool = [], [], []
    for r in routes:
        flags = [inside(nid) for nid in r.node_ids]
        if all(flags):
            unseen.append(r)
        elif any(flags):
            dev.append(r)
        else:
            pool.append(r)

    n_partial = args.partially_seen if args.partially_seen is not None else cfg.partially_seen
    if n_partial > len(pool):
        raise ValueError(
            f"split: cannot remove {n_partial} partially-seen routes from a "
            f"{len(pool)}-route training pool"
        )
    rng = np.random.Generator(np.random.Philox(key=cfg.seed))
    chosen = set(int(i) for i in rng.permutation(len(pool))[:n_partial])
    partial = [pool[i] for i in sorted(chosen)]
    train = [pool[i] for i in range(len(pool)) if i not in chosen]

    _ensure_out(cfg)
    routes_to_jsonl(train, _art(cfg, "train_routes.jsonl"))
    routes_to_jsonl(dev, _art(cfg, "dev_routes.jsonl"))
    routes_to_jsonl(unseen, _art(cfg, "test_unseen_routes.jsonl"))
    routes_to_jsonl(partial, _art(cfg, "test_partially_seen_routes.jsonl"))
    log.info(
        "split: %d train, %d dev, %d unseen, %d partially seen",
        len(train), len(dev), len(unseen), len(partial),
    )
    return 0


def _to_mode_pairs(pairs, mode):
    from .rule_gen import generate_rule_based

    if mode == "seq2seq":
        return [(generate_rule_based(g), text) for g, text in pairs]
    return list(pairs)


def cmd_train(args, cfg):
    from .graph2text import (
        Graph2Text,
        ModelConfig,
        TrainConfig,
        encode_pairs,
        pretrain_finetune,
        token_vocab_from_pairs,
        train_model,
        type_vocab,
    )
    from .rule_gen import read_dataset_jsonl

    pairs = read_dataset_jsonl(args.train or _art(cfg, "rule_dataset.jsonl"))
    if args.dev:
        dev_pairs = read_dataset_jsonl(args.dev)
    else:
        # no dev file: hold out every 5th pair
        dev_pairs = [p for i, p in enumerate(pairs) if i % 5 == 0]
        pairs = [p for i, p in enumerate(pairs) if i % 5 != 0]
    if not pairs or not dev_pairs:
        raise ValueError("train: need at least one training and one dev pair")

    train_p = _to_mode_pairs(pairs, args.mode)
    dev_p = _to_mode_pairs(dev_pairs, args.mode)
    pre_p = (
        _to_mode_pairs(read_dataset_jsonl(args.pretrain), args.mode) if args.pretrain else []
    )

    token_vocab = token_vocab_from_pairs(train_p + dev_p + pre_p)
    model_cfg = ModelConfig(
        d_m=cfg.d_model,
        heads=cfg.heads,
        layers=cfg.layers,
        dropout=cfg.dropout,
        ffn_mult=cfg.ffn_mult,
        max_len=cfg.max_len,
        mode=args.mode,
    )
    model = Graph2Text(model_cfg, type_vocab(), token_vocab, seed=cfg.seed)
    train_cfg = TrainConfig(
        batch_size=cfg.batch_size,
        epochs=cfg.epochs,
        patience=cfg.patience,
        seed=cfg.seed,
        lr=cfg.lr,
        warmup=cfg.warmup,
        schedule=cfg.schedule,
    )
    _ensure_out(cfg)
    log_path = _art(cfg, "train_log.jsonl")
    if args.pretrain:
        pre_cfg = dataclasses.replace(train_cfg, epochs=args.pretrain_epochs or train_cfg.epochs)
        pre_result, result = pretrain_finetune(
            model, pre_p, train_p, dev_p, pre_cfg, train_cfg, mode=args.mode, log_path=log_path
        )
        log.info("train: pretrain best acc %.4f", pre_result.best_token_acc)
    else:
        insts = encode_pairs(train_p, model.type_vocab, model.token_vocab, args.mode)
        dev_insts = encode_pairs(dev_p, model.type_vocab, model.token_vocab, args.mode)
        result = train_model(model, insts, dev_insts, train_cfg, log_path=log_path)
    model.save(
        _art(cfg, "model.ckpt"),
        extra_meta={"best_epoch": result.best_epoch, "best_token_acc": result.best_token_acc},
    )
    log.info("train: best dev token accuracy %.4f at epoch %d", result.best_token_acc, result.best_epoch)
    return 0


def cmd_generate(args, cfg):
    from .graph2text import Graph2Text, encode_pairs, generate_text
    from .route_graph import read_graphs_jsonl
    from .rule_gen import generate_rule_based

    model = Graph2Text.load(args.model or _art(cfg, "model.ckpt"))
    graphs = read_graphs_jsonl(args.graphs or _art(cfg, "graphs.jsonl"))
    beam = args.beam if args.beam is not None else cfg.beam
    mode = model.config.mode
    _ensure_out(cfg)
    with open(_art(cfg, "hypotheses.jsonl"), "w", encoding="utf-8") as fh:
        for g in graphs:
            source = generate_rule_based(g) if mode == "seq2seq" else g
            inst = encode_pairs([(source, "")], model.type_vocab, model.token_vocab, mode)[0]
            text = generate_text(model, inst, beam=beam, max_len=cfg.max_len)
            fh.write(
                json.dumps(
                    {"route_id": g.route_id, "text": text},
                    ensure_ascii=False,
                    separators=(",", ":"),
                )
            )
            fh.write("\n")
    log.info("generate: %d hypotheses", len(graphs))
    return 0


def _read_hypotheses(path):
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            d = json.loads(line)
            out[d["route_id"]] = d["text"]
    return out


def _aligned_corpus(args, cfg):
    from .rule_gen import read_dataset_jsonl

    refs_pairs = read_dataset_jsonl(args.refs or _art(cfg, "rule_dataset.jsonl"))
    hyp_by_route = _read_hypotheses(args.hyps or _art(cfg, "hypotheses.jsonl"))
    hypotheses, references, graphs = [], [], []
    for g, text in refs_pairs:
        if g.route_id not in hyp_by_route:
            raise ValueError(f"no hypothesis for route {g.route_id!r}")
        hypotheses.append(hyp_by_route[g.route_id])
        references.append(text)
        graphs.append(g)
    return hypotheses, references, graphs


def _aligned_traces(args, cfg):
    from .eval_metrics import traces_from_jsonl
    from .street_graph import load_graph, routes_from_jsonl

    traces = traces_from_jsonl(args.traces)
    routes = routes_from_jsonl(args.routes or _art(cfg, "routes.jsonl"))
    by_id = {r.route_id: r for r in routes}
    matched = []
    for t in traces:
        if t.route_id not in by_id:
            raise ValueError(f"trace references unknown route {t.route_id!r}")
        matched.append(by_id[t.route_id])
    g = load_graph(args.graph or _art(cfg, "street_graph.json"))
    return traces, matched, g


def cmd_evaluate(args, cfg):
    from .eval_metrics import evaluate_corpus

    hypotheses, references, graphs = _aligned_corpus(args, cfg)
    traces = routes = street = None
    if args.traces:
        traces, routes, street = _aligned_traces(args, cfg)
    result = evaluate_corpus(
        hypotheses=hypotheses,
        references=references,
        graphs=graphs,
        traces=traces,
        routes=routes,
        street_graph=street,
    )
    _ensure_out(cfg)
    with open(_art(cfg, "metrics.json"), "w", encoding="utf-8") as fh:
        fh.write(result.to_json())
        fh.write("\n")
    result.write_csv(_art(cfg, "per_instance.csv"))
    print(json.dumps(result.aggregates, ensure_ascii=False, sort_keys=True))
    return 0


def cmd_analyze(args, cfg):
    from .eval_metrics import landmark_type_scores, success_by_complexity

    hypotheses, _, graphs = _aligned_corpus(args, cfg)
    out = {
        "landmark_type_scores": [
            {"tag": label, "score": score} for label, score in landmark_type_scores(hypotheses, graphs)
        ]
    }
    if args.traces:
        traces, routes, street = _aligned_traces(args, cfg)
        grouped = success_by_complexity(traces, routes, street)
        out["success_by_complexity"] = {
            dim: {str(k): v for k, v in buckets.items()} for dim, buckets in grouped.items()
        }
    _ensure_out(cfg)
    with open(_art(cfg, "analysis.json"), "w", encoding="utf-8") as fh:
        json.dump(out, fh, ensure_ascii=False, indent=1, sort_keys=True)
        fh.write("\n")
    log.info("analyze: %d tag scores", len(out["landmark_type_scores"]))
    return 0


# ----------------------------------------------------------------- parser ----


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="landmarknav",
        description="Landmark navigation-instruction pipeline.",
        epilog=default_summary(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON config file; top-level --help lists the defaults")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", help="override the config output directory")

    sub = parser.add_subparsers(dest="command", required=True, metavar="subcommand")

    def add(name, func, help_):
        p = sub.add_parser(
            name,
            parents=[common],
            help=help_,
            formatter_class=argparse.ArgumentDefaultsHelpFormatter,
        )
        p.set_defaults(func=func)
        return p

    p = add("synth-city", cmd_synth_city, "write a deterministic synthetic city as OSM XML")
    p.add_argument("--city-seed", type=int, help="city seed (default: config seed)")
    p.add_argument("--junctions", type=int, default=5, help="junctions per side")
    p.add_argument("--rotation", type=float, default=0.0, help="rotate the city, degrees")
    p.add_argument("--offset-x", type=float, default=0.0, help="shift east, meters")
    p.add_argument("--offset-y", type=float, default=0.0, help="shift north, meters")
    p.add_argument("--xml-out", help="output path (default: config osm_path)")

    p = add("ingest", cmd_ingest, "parse OSM XML into map.json")
    p.add_argument("--xml", help="input OSM XML (default: config osm_path)")

    p = add("discretize", cmd_discretize, "build the street segment graph")
    p.add_argument("--map", help="map.json path")

    p = add("sample-routes", cmd_sample_routes, "sample constrained shortest-path routes")
    p.add_argument("--graph", help="street_graph.json path")
    p.add_argument("--map", help="map.json path")
    p.add_argument("-n", type=int, help="routes to sample (default: config n_routes)")

    p = add("build-graphs", cmd_build_graphs, "build route graphs with visible POIs")
    p.add_argument("--routes", help="routes.jsonl path")
    p.add_argument("--graph", help="street_graph.json path")
    p.add_argument("--map", help="map.json path")

    p = add("rule-gen", cmd_rule_gen, "generate rule-based instructions")
    p.add_argument("--graphs", help="graphs.jsonl path")

    p = add("pretrain-data", cmd_pretrain_data, "sample a rule-based pretraining set")
    p.add_argument("--graphs", help="graphs.jsonl path")
    p.add_argument("-n", type=int, help="pairs to sample (default: config pretrain_size)")

    p = add("split", cmd_split, "partition routes by the held-out rectangle")
    p.add_argument("--routes", help="routes.jsonl path")
    p.add_argument("--graph", help="street_graph.json path")
    p.add_argument("--partially-seen", type=int, help="training routes to move to the partially-seen test set")

    p = add("train", cmd_train, "train the instruction generator")
    p.add_argument("--mode", choices=("graph", "seq2seq"), default="graph", help="encoder input form")
    p.add_argument("--train", help="training dataset jsonl (default: rule_dataset.jsonl)")
    p.add_argument("--dev", help="dev dataset jsonl (default: hold out every 5th training pair)")
    p.add_argument("--pretrain", help="pretraining dataset jsonl; enables pretrain-then-finetune")
    p.add_argument("--pretrain-epochs", type=int, help="epoch cap for the pretraining phase")

    p = add("generate", cmd_generate, "decode instructions for route graphs")
    p.add_argument("--model", help="model checkpoint path")
    p.add_argument("--graphs", help="graphs.jsonl path")
    p.add_argument("--beam", type=int, help="beam width (default: config beam)")

    p = add("evaluate", cmd_evaluate, "score hypotheses (and traces) against references")
    p.add_argument("--hyps", help="hypotheses.jsonl path")
    p.add_argument("--refs", help="reference dataset jsonl")
    p.add_argument("--traces", help="navigation traces jsonl (enables SR/SDTW/SNT)")
    p.add_argument("--routes", help="routes.jsonl path (with --traces)")
    p.add_argument("--graph", help="street_graph.json path (with --traces)")

    p = add("analyze", cmd_analyze, "landmark-type scores and success by route complexity")
    p.add_argument("--hyps", help="hypotheses.jsonl path")
    p.add_argument("--refs", help="reference dataset jsonl")
    p.add_argument("--traces", help="navigation traces jsonl")
    p.add_argument("--routes", help="routes.jsonl path (with --traces)")
    p.add_argument("--graph", help="street_graph.json path (with --traces)")

    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = _load_cfg(args)
        return args.func(args, cfg)
    except SystemExit:
        raise
    except Exception as exc:
        log.debug("subcommand failed", exc_info=True)
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}, ensure_ascii=False),
            file=sys.stderr,
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())
