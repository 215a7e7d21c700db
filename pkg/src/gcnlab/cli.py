"""Command-line entry point: train / sweep / inspect / energy-probe.

Every subcommand is end-to-end deterministic for a fixed --seed; the
only timestamp in any output file sits on the metrics manifest line.
Exit codes: 0 success, 1 load/config/runtime error (one-line diagnostic
on stderr), 2 usage error.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import json
import sys
import time
from pathlib import Path

import numpy as np

from .data_io import DataError, generate_synthetic, load_bundle
from .diagnostics import energy_report
from .graph_core import GraphBundle, build_propagation_operator, degree_sum_statistics
from .initializers import InitScheme, iso_uniform_bound
from .model import build_model, save_checkpoint
from .training import TrainConfig, summarize, train, write_metrics_jsonl
from .autodiff import gcn_forward

INIT_BY_FLAG = {
    "glorot": "glorot_uniform",
    "iso": "iso_uniform",
    "iso-gauss": "iso_gaussian",
    "iso-ortho": "iso_orthogonal",
}
SOURCE_BY_FLAG = {"first": "first_layer_output", "prev": "previous_layer"}


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _int_list(text: str) -> list[int]:
    """Comma-separated ints; "a..b" expands to the inclusive range."""
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            lo, hi = part.split("..", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError(f"empty integer list: {text!r}")
    return out


def load_dataset(spec: str) -> GraphBundle:
    """A bundle directory path, or "synthetic:<kind>[:k=v,...]" for fixtures."""
    if spec.startswith("synthetic:"):
        parts = spec.split(":", 2)
        kind = parts[1]
        params: dict = {}
        seed = 0
        if len(parts) == 3 and parts[2]:
            for item in parts[2].split(","):
                key, _, val = item.partition("=")
                num = float(val)
                num = int(num) if num == int(num) else num
                if key == "seed":
                    seed = int(num)
                else:
                    params[key] = num
        return generate_synthetic(kind, params, seed=seed)
    return load_bundle(spec)


def _config_from_args(args: argparse.Namespace) -> TrainConfig:
    cfg = TrainConfig(
        lr=args.lr,
        weight_decay=args.weight_decay,
        epochs=args.epochs,
        hidden_dim=args.hidden,
        num_layers=args.layers,
        init=INIT_BY_FLAG[args.init],
        skip_mode=args.skip,
        alpha=args.alpha,
        p_threshold=args.p_threshold,
        skip_source=SOURCE_BY_FLAG[args.skip_source],
        dropout=args.dropout,
        seed=args.seed,
        eval_stride=args.eval_stride,
        energy_stride=args.energy_stride,
    )
    cfg.validate()
    return cfg


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", required=True, help="bundle directory or synthetic:<kind>[:k=v,...]")
    p.add_argument("--layers", type=_positive_int, default=2, help="number of GCN layers (default 2)")
    p.add_argument("--hidden", type=_positive_int, default=64, help="hidden dimension (default 64)")
    p.add_argument("--init", choices=sorted(INIT_BY_FLAG), default="glorot", help="weight init scheme (default glorot)")
    p.add_argument("--skip", choices=["none", "residual", "initial", "jumping", "dynamic"], default="none", help="skip-connection mode (default none)")
    p.add_argument("--alpha", type=float, default=0.1, help="skip information ratio (default 0.1)")
    p.add_argument("--p-threshold", type=float, default=0.5, help="gradient-flow drop threshold for dynamic rewiring (default 0.5)")
    p.add_argument("--skip-source", choices=sorted(SOURCE_BY_FLAG), default="first", help="dynamic skip source (default first)")
    p.add_argument("--dropout", type=float, default=0.5, help="dropout rate in train mode (default 0.5)")
    p.add_argument("--lr", type=float, default=0.005, help="Adam learning rate (default 0.005)")
    p.add_argument("--weight-decay", type=float, default=5e-4, help="L2 weight decay (default 5e-4)")
    p.add_argument("--epochs", type=_positive_int, default=1500, help="training epochs (default 1500)")
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--eval-stride", type=_positive_int, default=1, help="epochs between evaluations (default 1)")
    p.add_argument("--energy-stride", type=int, default=10, help="epochs between Dirichlet-energy reports; 0 disables (default 10)")
    p.add_argument("--out", default="runs/train", help="output directory (default runs/train)")


def cmd_train(args: argparse.Namespace) -> int:
    config = _config_from_args(args)  # validate before any compute
    graph = load_dataset(args.dataset)
    model, history = train(graph, config)
    summary = summarize(history)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_metrics_jsonl(
        out / "metrics.jsonl",
        history,
        run_manifest={
            "dataset": graph.name,
            "config": dataclasses.asdict(config),
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        },
    )
    save_checkpoint(model, out / "checkpoint.bin", scheme=InitScheme(config.init, config.seed))
    print(f"test_acc={summary.test_accuracy:.4f} best_val_epoch={summary.best_val_epoch}")
    return 0


def _sweep_cell(dataset_spec: str, config_dict: dict) -> dict:
    graph = load_dataset(dataset_spec)
    config = TrainConfig(**config_dict)
    _, history = train(graph, config)
    summary = summarize(history)
    return {
        "history": history,
        "test_accuracy": summary.test_accuracy,
        "best_val_epoch": summary.best_val_epoch,
    }


def cmd_sweep(args: argparse.Namespace) -> int:
    base = _config_from_args(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cells = []
    for depth in args.depths:
        for init in ("glorot_uniform", "iso_uniform"):
            for rewire in (False, True):
                for seed in args.seeds:
                    cfg = dataclasses.replace(
                        base,
                        num_layers=depth,
                        init=init,
                        skip_mode="dynamic" if rewire else "none",
                        seed=seed,
                    )
                    cells.append((depth, init, rewire, seed, cfg))

    # collect per-cell results, preserving completed cells if any cell fails
    results: dict[tuple, dict] = {}
    failures: list[str] = []
    if args.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = {
                pool.submit(_sweep_cell, args.dataset, dataclasses.asdict(cfg)): key
                for *key, cfg in cells
            }
            for fut in concurrent.futures.as_completed(futures):
                key = tuple(futures[fut])
                try:
                    results[key] = fut.result()
                except Exception as exc:  # noqa: BLE001 - keep other cells
                    failures.append(f"cell {key}: {exc}")
    else:
        for *key, cfg in cells:
            try:
                results[tuple(key)] = _sweep_cell(args.dataset, dataclasses.asdict(cfg))
            except Exception as exc:  # noqa: BLE001
                failures.append(f"cell {tuple(key)}: {exc}")

    for (depth, init, rewire, seed), res in sorted(results.items()):
        tag = f"L{depth}_{init}_{'rewire' if rewire else 'plain'}_s{seed}"
        write_metrics_jsonl(out / f"metrics_{tag}.jsonl", res["history"])

    lines = ["depth,init,rewire,num_seeds,mean_test_acc,std_test_acc"]
    for depth in sorted(set(args.depths)):
        for init in ("glorot_uniform", "iso_uniform"):
            for rewire in (False, True):
                accs = [
                    results[(depth, init, rewire, s)]["test_accuracy"]
                    for s in args.seeds
                    if (depth, init, rewire, s) in results
                ]
                if accs:
                    lines.append(
                        f"{depth},{init},{int(rewire)},{len(accs)},"
                        f"{np.mean(accs):.6f},{np.std(accs):.6f}"
                    )
    (out / "summary.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    for msg in failures:
        print(f"error: {msg}", file=sys.stderr)
    print(f"wrote {len(results)} of {len(cells)} runs to {out}")
    return 1 if failures else 0


def cmd_inspect(args: argparse.Namespace) -> int:
    graph = load_dataset(args.dataset)
    s1, s2 = degree_sum_statistics(graph)
    print(f"name={graph.name}")
    print(f"num_nodes={graph.num_nodes}")
    print(f"num_features={graph.num_features}")
    print(f"num_classes={graph.num_classes}")
    print(f"undirected_edges={graph.num_undirected_edges}")
    print(f"directed_edges={graph.indices.size}")
    print(f"degree_sum_s1={int(s1)}")
    print(f"degree_sum_s2={int(s2)}")
    for c_out in args.hidden:
        print(f"iso_uniform_bound[c_out={c_out}]={iso_uniform_bound(graph, c_out):.10g}")
    return 0


def cmd_energy_probe(args: argparse.Namespace) -> int:
    """Per-layer Dirichlet energies of an untrained model's eval forward pass."""
    graph = load_dataset(args.dataset)
    scheme = InitScheme(INIT_BY_FLAG[args.init], args.seed)
    model = build_model(
        args.layers,
        graph.num_features,
        args.hidden,
        graph.num_classes,
        scheme,
        graph,
        skip_mode=args.skip,
        alpha=args.alpha,
        skip_source=SOURCE_BY_FLAG[args.skip_source],
    )
    op = build_propagation_operator(graph)
    _, tape = gcn_forward(model, op, graph.features, mode="eval")
    report = energy_report(tape.outputs, graph)
    for l, e in enumerate(report.per_layer, start=1):
        print(f"energy[layer={l}]={e:.10g}")
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(
            json.dumps({"per_layer": [float(x) for x in report.per_layer]}) + "\n",
            encoding="utf-8",
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gcnlab",
        description="Deep GCN training lab: isometric init, gradient-flow "
        "diagnostics, and dynamic skip rewiring on citation graphs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train one model and write metrics + checkpoint")
    _add_train_flags(p_train)
    p_train.set_defaults(func=cmd_train)

    p_sweep = sub.add_parser(
        "sweep", help="depth x seed x {glorot,iso} x {rewire on/off} grid"
    )
    _add_train_flags(p_sweep)
    p_sweep.add_argument("--depths", type=_int_list, required=True, help="comma list / a..b range of layer counts")
    p_sweep.add_argument("--seeds", type=_int_list, required=True, help="comma list / a..b range of seeds")
    p_sweep.add_argument("--jobs", type=_positive_int, default=1, help="parallel training processes (default 1)")
    p_sweep.set_defaults(func=cmd_sweep)

    p_inspect = sub.add_parser("inspect", help="dataset statistics and init bounds")
    p_inspect.add_argument("--dataset", required=True)
    p_inspect.add_argument("--hidden", type=_int_list, default=[64], help="output-channel counts for the init bound (default 64)")
    p_inspect.set_defaults(func=cmd_inspect)

    p_energy = sub.add_parser(
        "energy-probe", help="per-layer Dirichlet energies at initialization"
    )
    p_energy.add_argument("--dataset", required=True)
    p_energy.add_argument("--layers", type=_positive_int, default=2)
    p_energy.add_argument("--hidden", type=_positive_int, default=64)
    p_energy.add_argument("--init", choices=sorted(INIT_BY_FLAG), default="glorot")
    p_energy.add_argument("--skip", choices=["none", "residual", "initial", "jumping", "dynamic"], default="none")
    p_energy.add_argument("--alpha", type=float, default=0.1)
    p_energy.add_argument("--skip-source", choices=sorted(SOURCE_BY_FLAG), default="first")
    p_energy.add_argument("--seed", type=int, default=0)
    p_energy.add_argument("--out", default="")
    p_energy.set_defaults(func=cmd_energy_probe)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DataError, ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
