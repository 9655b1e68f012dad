"""Command-line harness: generate | discover | train | bias | eval.

Every command takes a --seed (or a seed in its config) and produces
byte-identical artifacts on replay: canonical JSON (sorted keys, fixed
separators, no timestamps), fixed-format CSV, and per-instance RNGs derived
by hashing stable labels with the master seed.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import bias as bias_mod
from .citest import DsepOracle, tester_for
from .constraint import pc
from .errors import InvalidInputError
from .graphs import (
    Dag,
    Pdag,
    canonical_json_bytes,
    cpdag_of,
    read_dag_json,
    read_pdag_json,
    write_graph_json,
)
from .metrics import evaluate_cpdag
from .nn.model import (
    ModelConfig,
    node_edge_predict_averaged,
    predict_averaged,
)
from .nn.training import (
    TrainConfig,
    extract_prefix,
    fig_cto_stream,
    load_checkpoint,
    merge_stores,
    save_checkpoint,
    scm_stream,
    train_node_edge,
    train_spn,
    train_vpn,
)
from .postproc import to_cpdag
from .scm import (
    Cpt,
    Custom,
    ErdosRenyi,
    LinearGaussian,
    Rff,
    Sbm,
    ScaleFree,
    Star,
    WattsStrogatz,
    make_fig_cto_dataset,
    read_data_csv,
    sample_data,
    sample_graph_info,
    sample_scm,
    write_data_csv,
    write_scm_json,
)
from .seeding import derive_rng


def _write_json(path, obj) -> None:
    Path(path).write_bytes(canonical_json_bytes(obj))


def graph_model_from_dict(obj: dict):
    kind = obj.get("type")
    if kind == "er":
        return ErdosRenyi(edge_prob=obj.get("edge_prob"),
                          expected_degree=obj.get("expected_degree"))
    if kind == "sf":
        return ScaleFree(attachment=int(obj.get("attachment", 1)))
    if kind == "ws":
        dim = obj.get("lattice_dim")
        return WattsStrogatz(lattice_dim=None if dim is None else int(dim),
                             rewire_prob=float(obj.get("rewire_prob", 0.3)))
    if kind == "sbm":
        return Sbm(blocks=int(obj.get("blocks", 2)),
                   mean_degree=float(obj.get("mean_degree", 2.0)))
    if kind == "star":
        return Star(leaves=int(obj["leaves"]))
    if kind == "custom":
        return Custom(Dag.from_edges(int(obj["d"]), [tuple(e) for e in obj["edges"]]))
    raise InvalidInputError(f"config.graph_model.type: unknown kind {kind!r}")


def mechanism_from_dict(obj: dict):
    kind = obj.get("type")
    if kind == "linear":
        return LinearGaussian(
            weight_range=tuple(obj.get("weight_range", (0.5, 2.0))),
            noise_var_range=tuple(obj.get("noise_var_range", (0.5, 2.0))))
    if kind == "rff":
        return Rff(num_features=int(obj.get("num_features", 100)),
                   length_scale=float(obj.get("length_scale", 1.0)),
                   output_scale=float(obj.get("output_scale", 1.0)),
                   noise_var_range=tuple(obj.get("noise_var_range", (0.5, 2.0))))
    if kind == "cpt":
        return Cpt(arity=int(obj.get("arity", 2)),
                   concentration=float(obj.get("concentration", 1.0)))
    raise InvalidInputError(f"config.mechanism.type: unknown kind {kind!r}")


def _load_config(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidInputError(f"cannot read config {path}: {exc}") from exc


def _require(config: dict, field: str):
    if field not in config:
        raise InvalidInputError(f"config.{field}: missing required field")
    return config[field]


# --- generate -----------------------------------------------------------------


def cmd_generate(args) -> int:
    config = _load_config(args.config)
    seed = args.seed if args.seed is not None else int(_require(config, "seed"))
    out_dir = Path(args.out_dir or _require(config, "out_dir"))
    d = int(_require(config, "d"))
    n = int(_require(config, "n"))
    count = int(_require(config, "count"))
    model = graph_model_from_dict(_require(config, "graph_model"))
    mechanism = mechanism_from_dict(_require(config, "mechanism"))

    out_dir.mkdir(parents=True, exist_ok=True)
    instances = []
    for k in range(count):
        rng = derive_rng(seed, "instance", k)
        g, info = sample_graph_info(model, d, rng)
        scm = sample_scm(g, mechanism, rng)
        data = sample_data(scm, n, rng)
        inst_dir = out_dir / f"instance_{k:03d}"
        inst_dir.mkdir(exist_ok=True)
        write_graph_json(inst_dir / "graph.json", g)
        write_data_csv(inst_dir / "data.csv", data)
        write_scm_json(inst_dir / "scm.json", scm)
        instances.append({
            "index": k,
            "dir": inst_dir.name,
            "edges": g.n_edges(),
            "generator_info": info,
        })
    manifest = {
        "config": config,
        "seed": seed,
        "d": d,
        "n": n,
        "count": count,
        "instances": instances,
    }
    _write_json(out_dir / "manifest.json", manifest)
    print(f"wrote {count} instances to {out_dir}")
    return 0


# --- discover -----------------------------------------------------------------


def _instance_dirs(data_path: Path) -> list[Path]:
    if data_path.is_file():
        return [data_path.parent]
    dirs = sorted(p for p in data_path.glob("instance_*") if (p / "data.csv").exists())
    if not dirs:
        raise InvalidInputError(f"no instance_*/data.csv under {data_path}")
    return dirs


def _discover_one(method: str, inst_dir: Path, args, stores) -> tuple[Pdag, dict]:
    data = read_data_csv(inst_dir / "data.csv")
    extra: dict = {}
    if method == "pc":
        if args.oracle:
            truth = read_dag_json(inst_dir / "graph.json")
            tester = DsepOracle(truth)
            max_cond = args.max_cond if args.max_cond is not None else truth.d - 2
        else:
            tester = tester_for(data, alpha=args.alpha)
            max_cond = args.max_cond if args.max_cond is not None else 3
        pred = pc(tester, data.d, alpha=args.alpha, max_cond=max_cond)
    elif method == "sicl":
        spn, vpn, cfg = stores
        sp = predict_averaged(spn, vpn, cfg, data, chunk=args.chunk)
        pred = to_cpdag(sp, tau_s=args.tau_s, tau_v=args.tau_v)
        skel = sp.S
        sym = np.maximum(skel, skel.T)
        edges = [[int(i), int(j)] for i, j in zip(*np.nonzero(np.triu(sym > args.tau_s, 1)))]
        extra["skeleton"] = {"d": data.d, "edges": edges}
    elif method == "node-edge":
        store, cfg = stores
        A = node_edge_predict_averaged(store, cfg, data, chunk=args.chunk)
        extra["adjacency_probs"] = [[round(float(v), 6) for v in row] for row in A]
        keep = []
        score = {}
        for i in range(data.d):
            for j in range(data.d):
                if i == j or A[i, j] <= args.tau_s:
                    continue
                if A[i, j] > A[j, i] or (A[i, j] == A[j, i] and i < j):
                    keep.append((i, j))
                    score[(i, j)] = float(A[i, j])
        # drop weakest edges until acyclic
        edges = set(keep)
        while True:
            adj = np.zeros((data.d, data.d), dtype=bool)
            for i, j in edges:
                adj[i, j] = True
            from .graphs import is_acyclic

            if is_acyclic(adj):
                break
            edges.discard(min(edges, key=lambda e: (score[e], e)))
        pred = Pdag(data.d, sorted(edges), [])
    else:
        raise InvalidInputError(f"unknown method {method!r}")
    return pred, extra


def cmd_discover(args) -> int:
    data_path = Path(args.data)
    dirs = _instance_dirs(data_path)
    stores = None
    if args.method == "sicl":
        if not args.checkpoint:
            raise InvalidInputError("sicl discovery requires --checkpoint")
        combined, cfg, _ = load_checkpoint(args.checkpoint)
        stores = (extract_prefix(combined, "spn"), extract_prefix(combined, "vpn"), cfg)
    elif args.method == "node-edge":
        if not args.checkpoint:
            raise InvalidInputError("node-edge discovery requires --checkpoint")
        store, cfg, _ = load_checkpoint(args.checkpoint)
        stores = (store, cfg)

    failures = []
    all_metrics = []
    for inst_dir in dirs:
        try:
            pred, extra = _discover_one(args.method, inst_dir, args, stores)
        except Exception as exc:
            failures.append((inst_dir.name, repr(exc)))
            continue
        write_graph_json(inst_dir / f"pred_{args.method}.json", pred)
        if "skeleton" in extra:
            _write_json(inst_dir / f"pred_{args.method}_skeleton.json", extra["skeleton"])
        if "adjacency_probs" in extra:
            _write_json(inst_dir / f"pred_{args.method}_probs.json",
                        {"d": pred.d, "probs": extra["adjacency_probs"]})
        truth_path = inst_dir / "graph.json"
        if truth_path.exists():
            truth_cpdag = cpdag_of(read_dag_json(truth_path))
            m = evaluate_cpdag(pred, truth_cpdag)
            m["instance"] = inst_dir.name
            all_metrics.append(m)
            _write_json(inst_dir / f"metrics_{args.method}.json", m)
    if all_metrics:
        agg = {
            k: float(np.mean([m[k] for m in all_metrics]))
            for k in ("s_f1", "s_accuracy", "v_f1", "o_f1", "shd")
        }
        report = {"method": args.method, "instances": all_metrics, "aggregate": agg}
        out = Path(args.out) if args.out else data_path / f"report_{args.method}.json"
        _write_json(out, report)
        print(json.dumps(agg, sort_keys=True))
    if failures:
        for name, err in failures:
            print(f"FAILED {name}: {err}", file=sys.stderr)
        return 1
    return 0


# --- train ----------------------------------------------------------------------


def cmd_train(args) -> int:
    config = _load_config(args.config)
    seed = args.seed if args.seed is not None else int(config.get("seed", 0))
    cfg = ModelConfig(
        hidden=int(config.get("hidden", 32)),
        blocks=int(config.get("blocks", 2)),
        heads=int(config.get("heads", 4)),
        ffn_mult=int(config.get("ffn_mult", 2)),
        input_kind=config.get("input_kind", "continuous"),
        arity=config.get("arity"),
    )
    tcfg = TrainConfig(
        steps=int(_require(config, "steps")),
        batch_size=int(config.get("batch_size", 8)),
        lr=float(config.get("lr", 3e-4)),
        seed=seed,
        val_every=int(config.get("val_every", 0)),
        val_size=int(config.get("val_size", 4)),
    )
    stream_spec = _require(config, "stream")
    n_obs = int(config.get("n_obs", 64))
    if stream_spec.get("kind") == "fig-cto":
        stream = fig_cto_stream(n_obs)
    else:
        stream = scm_stream(
            graph_model_from_dict(_require(stream_spec, "graph_model")),
            mechanism_from_dict(_require(stream_spec, "mechanism")),
            int(_require(config, "d")),
            n_obs,
        )

    meta = {"target": args.target, "steps": tcfg.steps, "batch_size": tcfg.batch_size,
            "lr": tcfg.lr, "n_obs": n_obs, "stream": stream_spec}
    if args.target == "spn":
        store, log = train_spn(cfg, stream, tcfg)
    elif args.target == "node-edge":
        store, log = train_node_edge(cfg, stream, tcfg)
    elif args.target == "vpn":
        if not args.init_from:
            print("error: training the v-structure predictor requires "
                  "--init-from <spn checkpoint>", file=sys.stderr)
            return 2
        spn_store, spn_cfg, _ = load_checkpoint(args.init_from)
        if spn_cfg != cfg:
            raise InvalidInputError("vpn config must match the spn checkpoint config")
        vpn_store, log = train_vpn(spn_store, cfg, stream, tcfg)
        store = merge_stores(spn=spn_store, vpn=vpn_store)
        meta["combined"] = True
    else:
        raise InvalidInputError(f"unknown target {args.target!r}")

    save_checkpoint(args.out, store, cfg, metadata=meta, seed=seed)
    log_path = f"{args.out}_log.csv"
    with open(log_path, "w", newline="\n", encoding="ascii") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["step", "loss", "val_loss"])
        for entry in log:
            writer.writerow([entry["step"], f"{entry['loss']:.17g}",
                             f"{entry['val_loss']:.17g}" if "val_loss" in entry else ""])
    print(f"checkpoint written to {args.out}.json/.bin, log to {log_path}")
    return 0


# --- bias -----------------------------------------------------------------------


def cmd_bias(args) -> int:
    if args.chain_demo:
        report = bias_mod.chain_demo(n=args.chain_n, seed=args.seed or 0)
        payload = report
    else:
        if args.n < 2:
            raise InvalidInputError("--n must be >= 2")
        if args.worst or not args.q:
            q = np.full(args.n, bias_mod.worst_case_marginal(args.n))
        else:
            q = np.array([float(v) for v in args.q.split(",")])
            if q.size != args.n:
                raise InvalidInputError(f"--q needs {args.n} comma-separated values")
        sd = bias_mod.StarDistribution(q)
        rng = derive_rng(args.seed or 0, "bias-mc")
        payload = {
            "n": args.n,
            "q": [float(v) for v in q],
            "exact_error": bias_mod.marginal_error_exact(sd),
            "mc_error": bias_mod.monte_carlo_error(sd, args.samples, rng),
            "samples": args.samples,
            "worst_case_closed_form": bias_mod.worst_case_error(args.n),
        }
    text = json.dumps(payload, sort_keys=True, indent=2)
    print(text)
    if args.out:
        _write_json(args.out, payload)
    return 0


# --- eval -----------------------------------------------------------------------


def cmd_eval(args) -> int:
    data_path = Path(args.data)
    dirs = _instance_dirs(data_path)
    rows = []
    failures = []
    for inst_dir in dirs:
        pred_path = inst_dir / args.pred_file
        truth_path = inst_dir / "graph.json"
        if not pred_path.exists() or not truth_path.exists():
            failures.append((inst_dir.name, "missing prediction or truth"))
            continue
        pred = read_pdag_json(pred_path)
        truth_cpdag = cpdag_of(read_dag_json(truth_path))
        m = evaluate_cpdag(pred, truth_cpdag)
        m["instance"] = inst_dir.name
        rows.append(m)
    if rows:
        agg = {k: float(np.mean([r[k] for r in rows]))
               for k in ("s_f1", "s_accuracy", "v_f1", "o_f1", "shd")}
        report = {"instances": rows, "aggregate": agg}
        _write_json(args.out, report)
        print(json.dumps(agg, sort_keys=True))
    if failures:
        for name, err in failures:
            print(f"FAILED {name}: {err}", file=sys.stderr)
        return 1
    return 0


# --- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="causalmec",
        description="Causal structure learning via identifiable targets",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="sample benchmark instances")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("discover", help="run a discovery pipeline on instances")
    p.add_argument("--method", required=True, choices=["pc", "sicl", "node-edge"])
    p.add_argument("--data", required=True, help="instance dir or a single data.csv")
    p.add_argument("--checkpoint", help="checkpoint prefix for sicl/node-edge")
    p.add_argument("--oracle", action="store_true",
                   help="pc only: use exact d-separation from graph.json")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--max-cond", type=int, default=None)
    p.add_argument("--tau-s", type=float, default=0.5)
    p.add_argument("--tau-v", type=float, default=0.5)
    p.add_argument("--chunk", type=int, default=64,
                   help="observation chunk size for network inference")
    p.add_argument("--out", help="aggregate report path")
    p.set_defaults(func=cmd_discover)

    p = sub.add_parser("train", help="train a predictor network")
    p.add_argument("--target", required=True, choices=["spn", "vpn", "node-edge"])
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="checkpoint prefix")
    p.add_argument("--seed", type=int)
    p.add_argument("--init-from", help="spn checkpoint prefix (required for vpn)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("bias", help="independent-edge sampling bias reports")
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--q", help="comma-separated outward marginals")
    p.add_argument("--worst", action="store_true", help="use the maximizing marginals")
    p.add_argument("--samples", type=int, default=1_000_000)
    p.add_argument("--seed", type=int)
    p.add_argument("--chain-demo", action="store_true",
                   help="run the 3-node indistinguishable-chains report instead")
    p.add_argument("--chain-n", type=int, default=200_000)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bias)

    p = sub.add_parser("eval", help="score stored predictions against truth graphs")
    p.add_argument("--data", required=True)
    p.add_argument("--pred-file", default="pred_pc.json")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
