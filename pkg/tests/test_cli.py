import json
from pathlib import Path

import numpy as np
import pytest

from causalmec.cli import main
from causalmec.graphs import read_dag_json, read_pdag_json


def write_config(path: Path, **overrides):
    config = {
        "graph_model": {"type": "er", "expected_degree": 1.5},
        "mechanism": {"type": "linear"},
        "d": 4,
        "n": 400,
        "count": 2,
        "seed": 5,
    }
    config.update(overrides)
    path.write_text(json.dumps(config))
    return config


def tree_bytes(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()}


class TestGenerate:
    def test_writes_instances_and_manifest(self, tmp_path):
        cfg = tmp_path / "gen.json"
        write_config(cfg, count=3)
        out = tmp_path / "out"
        assert main(["generate", "--config", str(cfg), "--out-dir", str(out)]) == 0
        assert (out / "manifest.json").exists()
        for k in range(3):
            assert (out / f"instance_{k:03d}" / "graph.json").exists()
            assert (out / f"instance_{k:03d}" / "data.csv").exists()

    def test_same_seed_byte_identical(self, tmp_path):
        cfg = tmp_path / "gen.json"
        write_config(cfg)
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        main(["generate", "--config", str(cfg), "--out-dir", str(out_a)])
        main(["generate", "--config", str(cfg), "--out-dir", str(out_b)])
        a, b = tree_bytes(out_a), tree_bytes(out_b)
        assert list(a) == list(b)
        for name in a:
            assert a[name] == b[name], name

    def test_ws_lattice_dim_recorded(self, tmp_path):
        cfg = tmp_path / "gen.json"
        write_config(cfg, graph_model={"type": "ws", "rewire_prob": 0.2},
                     d=10, count=6, n=50)
        out = tmp_path / "out"
        main(["generate", "--config", str(cfg), "--out-dir", str(out)])
        manifest = json.loads((out / "manifest.json").read_text())
        dims = {inst["generator_info"]["lattice_dim"] for inst in manifest["instances"]}
        assert dims <= {2, 3} and dims

    def test_bad_config_usage_error(self, tmp_path):
        cfg = tmp_path / "gen.json"
        cfg.write_text(json.dumps({"mechanism": {"type": "linear"}}))
        assert main(["generate", "--config", str(cfg), "--out-dir", str(tmp_path / "x")]) == 2


class TestDiscoverPc:
    @pytest.fixture()
    def instances(self, tmp_path):
        cfg = tmp_path / "gen.json"
        write_config(cfg, count=3, d=5, n=4000, seed=9)
        out = tmp_path / "out"
        main(["generate", "--config", str(cfg), "--out-dir", str(out)])
        return out

    def test_oracle_pc_zero_shd(self, instances):
        assert main(["discover", "--method", "pc", "--data", str(instances),
                     "--oracle"]) == 0
        report = json.loads((instances / "report_pc.json").read_text())
        assert report["aggregate"]["shd"] == 0.0
        for m in report["instances"]:
            assert m["shd"] == 0

    def test_finite_sample_pc_runs(self, instances):
        assert main(["discover", "--method", "pc", "--data", str(instances),
                     "--alpha", "0.05"]) == 0
        pred = read_pdag_json(instances / "instance_000" / "pred_pc.json")
        assert pred.d == 5

    def test_eval_command(self, instances):
        main(["discover", "--method", "pc", "--data", str(instances), "--oracle"])
        out = instances / "eval.json"
        assert main(["eval", "--data", str(instances), "--pred-file", "pred_pc.json",
                     "--out", str(out)]) == 0
        report = json.loads(out.read_text())
        assert report["aggregate"]["o_f1"] == 100.0


class TestBias:
    def test_worst_case_n2(self, tmp_path, capsys):
        out = tmp_path / "bias.json"
        assert main(["bias", "--n", "2", "--worst", "--samples", "20000",
                     "--seed", "3", "--out", str(out)]) == 0
        report = json.loads(out.read_text())
        assert report["exact_error"] == pytest.approx(0.25)
        assert abs(report["mc_error"] - 0.25) < 0.02
        assert report["worst_case_closed_form"] == pytest.approx(0.25)

    def test_reproducible(self, tmp_path):
        out_a, out_b = tmp_path / "a.json", tmp_path / "b.json"
        args = ["bias", "--n", "4", "--q", "0.9,0.8,0.7,0.6", "--samples", "10000",
                "--seed", "7"]
        main(args + ["--out", str(out_a)])
        main(args + ["--out", str(out_b)])
        assert out_a.read_bytes() == out_b.read_bytes()

    def test_chain_demo(self, tmp_path):
        out = tmp_path / "chain.json"
        assert main(["bias", "--chain-demo", "--chain-n", "20000",
                     "--seed", "0", "--out", str(out)]) == 0
        report = json.loads(out.read_text())
        assert report["analytic_equal"] is True
        assert report["node_edge_error"] == pytest.approx(0.25)


def train_config(path: Path, **overrides):
    config = {
        "steps": 4,
        "batch_size": 2,
        "seed": 1,
        "hidden": 8,
        "blocks": 1,
        "heads": 2,
        "n_obs": 16,
        "d": 3,
        "stream": {"kind": "scm",
                   "graph_model": {"type": "er", "edge_prob": 0.4},
                   "mechanism": {"type": "linear"}},
    }
    config.update(overrides)
    path.write_text(json.dumps(config))
    return config


class TestTrain:
    def test_spn_then_vpn_then_discover(self, tmp_path):
        cfg_path = tmp_path / "train.json"
        train_config(cfg_path, stream={"kind": "fig-cto"}, d=6)
        spn_prefix = str(tmp_path / "spn")
        assert main(["train", "--target", "spn", "--config", str(cfg_path),
                     "--out", spn_prefix]) == 0
        assert Path(spn_prefix + ".json").exists()
        assert Path(spn_prefix + "_log.csv").exists()

        sicl_prefix = str(tmp_path / "sicl")
        assert main(["train", "--target", "vpn", "--config", str(cfg_path),
                     "--out", sicl_prefix, "--init-from", spn_prefix]) == 0

        gen_cfg = tmp_path / "gen.json"
        write_config(gen_cfg, d=6, count=1, n=128, seed=3)
        out = tmp_path / "data"
        main(["generate", "--config", str(gen_cfg), "--out-dir", str(out)])
        assert main(["discover", "--method", "sicl", "--data", str(out),
                     "--checkpoint", sicl_prefix, "--chunk", "16"]) == 0
        assert (out / "instance_000" / "pred_sicl.json").exists()
        assert (out / "instance_000" / "pred_sicl_skeleton.json").exists()

    def test_vpn_requires_init_from(self, tmp_path):
        cfg_path = tmp_path / "train.json"
        train_config(cfg_path)
        assert main(["train", "--target", "vpn", "--config", str(cfg_path),
                     "--out", str(tmp_path / "v")]) == 2

    def test_node_edge_train_and_discover(self, tmp_path):
        cfg_path = tmp_path / "train.json"
        train_config(cfg_path, d=4)
        ne_prefix = str(tmp_path / "ne")
        assert main(["train", "--target", "node-edge", "--config", str(cfg_path),
                     "--out", ne_prefix]) == 0
        gen_cfg = tmp_path / "gen.json"
        write_config(gen_cfg, d=4, count=1, n=64, seed=2)
        out = tmp_path / "data"
        main(["generate", "--config", str(gen_cfg), "--out-dir", str(out)])
        assert main(["discover", "--method", "node-edge", "--data", str(out),
                     "--checkpoint", ne_prefix, "--chunk", "16"]) == 0
        probs = json.loads((out / "instance_000" / "pred_node-edge_probs.json").read_text())
        assert len(probs["probs"]) == 4
        pred = read_pdag_json(out / "instance_000" / "pred_node-edge.json")
        assert pred.undirected == frozenset()

    def test_train_replay_byte_identical(self, tmp_path):
        cfg_path = tmp_path / "train.json"
        train_config(cfg_path)
        a, b = str(tmp_path / "a"), str(tmp_path / "b")
        main(["train", "--target", "spn", "--config", str(cfg_path), "--out", a])
        main(["train", "--target", "spn", "--config", str(cfg_path), "--out", b])
        assert Path(a + ".bin").read_bytes() == Path(b + ".bin").read_bytes()
        assert Path(a + ".json").read_bytes() == Path(b + ".json").read_bytes()
        assert Path(a + "_log.csv").read_bytes() == Path(b + "_log.csv").read_bytes()

    def test_missing_checkpoint_error(self, tmp_path):
        gen_cfg = tmp_path / "gen.json"
        write_config(gen_cfg, count=1)
        out = tmp_path / "data"
        main(["generate", "--config", str(gen_cfg), "--out-dir", str(out)])
        assert main(["discover", "--method", "sicl", "--data", str(out)]) == 2
