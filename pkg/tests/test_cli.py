import json
import os
import subprocess
import sys

import pytest

from landmarknav.cli import main
from landmarknav.config import PipelineConfig
from landmarknav.eval_metrics import traces_from_jsonl, traces_to_jsonl
from landmarknav.geodesy import unproject
from landmarknav.street_graph import load_graph, routes_from_jsonl
from landmarknav.synthcity import make_perfect_traces


def small_config(tmp_path, **overrides):
    values = dict(
        osm_path=str(tmp_path / "city.osm.xml"),
        out_dir=str(tmp_path / "artifacts"),
        d_model=16,
        heads=2,
        layers=1,
        dropout=0.0,
        max_len=60,
        beam=2,
        batch_size=4,
        epochs=2,
        patience=2,
        lr=0.05,
        schedule="constant",
        n_routes=5,
        pretrain_size=5,
        seed=3,
    )
    values.update(overrides)
    cfg = PipelineConfig(**values)
    cfg.validate()
    path = tmp_path / "config.json"
    cfg.save(path)
    return str(path), cfg


def run(argv):
    return main(argv)


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """One full chain, shared by the read-only assertions below."""
    tmp_path = tmp_path_factory.mktemp("chain")
    config, cfg = small_config(tmp_path)
    steps = [
        ["synth-city", "--config", config],
        ["ingest", "--config", config],
        ["discretize", "--config", config],
        ["sample-routes", "--config", config],
        ["build-graphs", "--config", config],
        ["rule-gen", "--config", config],
        ["pretrain-data", "--config", config],
        ["train", "--config", config],
        ["generate", "--config", config],
        ["evaluate", "--config", config],
        ["analyze", "--config", config],
    ]
    for argv in steps:
        assert run(argv) == 0, f"step failed: {argv[0]}"
    return tmp_path, config, cfg


class TestChain:
    def test_artifacts_exist(self, pipeline):
        _, _, cfg = pipeline
        for name in (
            "map.json", "street_graph.json", "routes.jsonl", "graphs.jsonl",
            "rule_dataset.jsonl", "pretrain.jsonl", "model.ckpt", "model.ckpt.bin",
            "train_log.jsonl", "hypotheses.jsonl", "metrics.json",
            "per_instance.csv", "analysis.json",
        ):
            assert os.path.exists(os.path.join(cfg.out_dir, name)), name

    def test_metrics_nonempty(self, pipeline):
        _, _, cfg = pipeline
        with open(os.path.join(cfg.out_dir, "metrics.json")) as fh:
            metrics = json.load(fh)
        assert set(metrics["aggregates"]) == {"bleu", "length", "landmarks"}
        assert metrics["per_instance"]

    def test_hypotheses_cover_routes(self, pipeline):
        _, _, cfg = pipeline
        routes = routes_from_jsonl(os.path.join(cfg.out_dir, "routes.jsonl"))
        with open(os.path.join(cfg.out_dir, "hypotheses.jsonl")) as fh:
            hyps = [json.loads(line) for line in fh if line.strip()]
        assert {h["route_id"] for h in hyps} == {r.route_id for r in routes}

    def test_evaluate_with_perfect_traces(self, pipeline):
        tmp_path, config, cfg = pipeline
        routes = routes_from_jsonl(os.path.join(cfg.out_dir, "routes.jsonl"))
        traces_path = str(tmp_path / "traces.jsonl")
        traces_to_jsonl(make_perfect_traces(routes), traces_path)
        assert run(["evaluate", "--config", config, "--traces", traces_path]) == 0
        with open(os.path.join(cfg.out_dir, "metrics.json")) as fh:
            metrics = json.load(fh)
        assert metrics["aggregates"]["sr"] == 1.0
        assert metrics["aggregates"]["snt"] == 1.0
        assert run(["analyze", "--config", config, "--traces", traces_path]) == 0
        with open(os.path.join(cfg.out_dir, "analysis.json")) as fh:
            analysis = json.load(fh)
        assert "success_by_complexity" in analysis
        assert analysis["landmark_type_scores"]

    def test_round_trip_traces_io(self, pipeline):
        tmp_path, _, cfg = pipeline
        routes = routes_from_jsonl(os.path.join(cfg.out_dir, "routes.jsonl"))
        path = str(tmp_path / "traces2.jsonl")
        traces = make_perfect_traces(routes, time_factor=2.0)
        traces_to_jsonl(traces, path)
        assert traces_from_jsonl(path) == traces


class TestDeterminism:
    def test_rerun_is_byte_identical(self, tmp_path):
        outputs = []
        for sub in ("a", "b"):
            base = tmp_path / sub
            base.mkdir()
            config, cfg = small_config(base, n_routes=3)
            for argv in (
                ["synth-city", "--config", config],
                ["ingest", "--config", config],
                ["discretize", "--config", config],
                ["sample-routes", "--config", config],
                ["build-graphs", "--config", config],
                ["rule-gen", "--config", config],
                ["train", "--config", config],
                ["generate", "--config", config],
                ["evaluate", "--config", config],
            ):
                assert run(argv) == 0, argv[0]
            blobs = {}
            for name in ("graphs.jsonl", "rule_dataset.jsonl", "model.ckpt",
                         "model.ckpt.bin", "hypotheses.jsonl", "metrics.json"):
                with open(os.path.join(cfg.out_dir, name), "rb") as fh:
                    blobs[name] = fh.read()
            outputs.append(blobs)
        assert outputs[0] == outputs[1]


class TestSplit:
    def chain_to_routes(self, tmp_path, **cfg_over):
        config, cfg = small_config(tmp_path, n_routes=8, **cfg_over)
        for argv in (
            ["synth-city", "--config", config],
            ["ingest", "--config", config],
            ["discretize", "--config", config],
            ["sample-routes", "--config", config],
        ):
            assert run(argv) == 0
        return config, cfg

    def test_rect_covering_everything_is_all_unseen(self, tmp_path):
        config, cfg = self.chain_to_routes(
            tmp_path, holdout_rect=[-0.5, -0.5, 0.5, 0.5], partially_seen=0
        )
        assert run(["split", "--config", config]) == 0
        routes = routes_from_jsonl(os.path.join(cfg.out_dir, "routes.jsonl"))
        unseen = routes_from_jsonl(os.path.join(cfg.out_dir, "test_unseen_routes.jsonl"))
        assert len(unseen) == len(routes)
        for name in ("train_routes.jsonl", "dev_routes.jsonl", "test_partially_seen_routes.jsonl"):
            assert routes_from_jsonl(os.path.join(cfg.out_dir, name)) == []

    def test_corner_rect_matches_independent_classification(self, tmp_path):
        # rectangle = the north-east corner of the city, so that routes
        # confined to the south-west stay in the training pool
        rect = [0.001, 0.001, 0.5, 0.5]
        config, cfg = self.chain_to_routes(tmp_path, holdout_rect=rect, partially_seen=1)
        assert run(["split", "--config", config]) == 0
        g = load_graph(os.path.join(cfg.out_dir, "street_graph.json"))
        routes = routes_from_jsonl(os.path.join(cfg.out_dir, "routes.jsonl"))

        def inside(nid):
            p = unproject(g.positions[nid], g.origin)
            return rect[0] <= p.lat <= rect[2] and rect[1] <= p.lon <= rect[3]

        expect_unseen = {r.route_id for r in routes if all(inside(n) for n in r.node_ids)}
        expect_dev = {
            r.route_id
            for r in routes
            if any(inside(n) for n in r.node_ids) and r.route_id not in expect_unseen
        }
        expect_pool = {r.route_id for r in routes} - expect_unseen - expect_dev

        got_unseen = {r.route_id for r in routes_from_jsonl(os.path.join(cfg.out_dir, "test_unseen_routes.jsonl"))}
        got_dev = {r.route_id for r in routes_from_jsonl(os.path.join(cfg.out_dir, "dev_routes.jsonl"))}
        got_train = {r.route_id for r in routes_from_jsonl(os.path.join(cfg.out_dir, "train_routes.jsonl"))}
        got_partial = {r.route_id for r in routes_from_jsonl(os.path.join(cfg.out_dir, "test_partially_seen_routes.jsonl"))}

        assert got_unseen == expect_unseen
        assert got_dev == expect_dev
        assert got_train | got_partial == expect_pool
        assert len(got_partial) == 1
        assert not (got_train & got_partial)

    def test_split_without_rect_fails(self, tmp_path, capsys):
        config, _ = self.chain_to_routes(tmp_path)
        assert run(["split", "--config", config]) == 1
        record = json.loads(capsys.readouterr().err.strip())
        assert "holdout_rect" in record["message"]

    def test_partially_seen_larger_than_pool_fails(self, tmp_path, capsys):
        config, _ = self.chain_to_routes(
            tmp_path, holdout_rect=[0.4, 0.4, 0.5, 0.5], partially_seen=700
        )
        assert run(["split", "--config", config]) == 1
        record = json.loads(capsys.readouterr().err.strip())
        assert record["error"] == "ValueError"


class TestSeq2Seq:
    def test_train_and_generate(self, tmp_path):
        config, cfg = small_config(tmp_path, n_routes=4)
        for argv in (
            ["synth-city", "--config", config],
            ["ingest", "--config", config],
            ["discretize", "--config", config],
            ["sample-routes", "--config", config],
            ["build-graphs", "--config", config],
            ["rule-gen", "--config", config],
            ["train", "--config", config, "--mode", "seq2seq"],
            ["generate", "--config", config],
        ):
            assert run(argv) == 0, argv[0]
        from landmarknav.tensor_core import load_checkpoint

        _, meta = load_checkpoint(os.path.join(cfg.out_dir, "model.ckpt"))
        assert meta["config"]["mode"] == "seq2seq"
        with open(os.path.join(cfg.out_dir, "hypotheses.jsonl")) as fh:
            assert len(fh.readlines()) == 4


class TestErrors:
    def test_missing_input_gives_error_record(self, tmp_path, capsys):
        config, _ = small_config(tmp_path)
        rc = run(["ingest", "--config", config, "--xml", str(tmp_path / "absent.xml")])
        assert rc == 1
        record = json.loads(capsys.readouterr().err.strip())
        assert record["error"] == "FileNotFoundError"
        assert "absent.xml" in record["message"]

    def test_unknown_subcommand(self, capsys):
        assert run(["frobnicate"]) == 1
        record = json.loads(capsys.readouterr().err.strip())
        assert record["error"] == "UsageError"

    def test_bad_config_value(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text('{"spacing_m": -3}')
        assert run(["ingest", "--config", str(path)]) == 1
        record = json.loads(capsys.readouterr().err.strip())
        assert "spacing_m" in record["message"]

    def test_schema_mismatch(self, tmp_path, capsys):
        config, cfg = small_config(tmp_path)
        os.makedirs(cfg.out_dir)
        with open(os.path.join(cfg.out_dir, "map.json"), "w") as fh:
            fh.write('{"schema": 99}')
        assert run(["discretize", "--config", config]) == 1
        record = json.loads(capsys.readouterr().err.strip())
        assert "schema" in record["message"]


class TestHelpAndModule:
    def test_help_documents_defaults(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--help"])
        assert exc.value.code == 0
        text = capsys.readouterr().out
        import dataclasses

        for f in dataclasses.fields(PipelineConfig):
            assert f.name in text

    def test_module_entrypoint_and_log_env(self, tmp_path):
        config, _ = small_config(tmp_path)
        env = dict(os.environ, LANDMARKNAV_LOG="info")
        out = subprocess.run(
            [sys.executable, "-m", "landmarknav.cli", "synth-city", "--config", config],
            capture_output=True, text=True, env=env,
        )
        assert out.returncode == 0
        out2 = subprocess.run(
            [sys.executable, "-m", "landmarknav.cli", "ingest", "--config", config],
            capture_output=True, text=True, env=env,
        )
        assert out2.returncode == 0
        assert "INFO" in out2.stderr
