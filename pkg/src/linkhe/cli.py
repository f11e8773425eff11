"""Batch command line: ingest, heuristics, train, eval.

Every command writes a run manifest before any other output.  Exit codes:
0 success, 1 usage error, 2 data error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .graph import (
    GraphDataError,
    _parse_edge_lines,
    build_graph,
    load_edge_list,
    load_features,
    load_split,
    save_split,
    split_edges,
)
from .heuristics import batch_score, parse_kinds, write_scores_csv
from .metrics import evaluate, write_report
from .model import ConfigError, ModelConfig, load_checkpoint
from .trainer import fit, predict_scores, stream

log = logging.getLogger("linkhe")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3
MANIFEST_NAME = "run_manifest.json"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def write_run_manifest(path, command: str, args: argparse.Namespace, inputs: dict) -> None:
    """Record what is needed to rerun the command.  No timestamps, so reruns
    write the same bytes."""
    manifest = {
        "command": command,
        "config": getattr(args, "config", None),
        "inputs": inputs,
        "seed": getattr(args, "seed", None),
        "version": __version__,
        "out": args.out,
    }
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fractions(text: str) -> tuple[float, float, float]:
    try:
        parts = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise UsageError(f"--fractions must be three comma-separated numbers, got {text!r}") from None
    if len(parts) != 3 or any(p < 0 for p in parts):
        raise UsageError(f"--fractions must be three non-negative numbers, got {text!r}")
    if abs(sum(parts) - 1.0) > 1e-9:
        raise UsageError(f"--fractions must sum to 1, got {sum(parts):g}")
    return parts


def cmd_ingest(args) -> int:
    fractions = _fractions(args.fractions)
    write_run_manifest(os.path.join(args.out, MANIFEST_NAME), "ingest", args, {"graph": args.graph})
    edges, n = load_edge_list(args.graph)
    g = build_graph(edges, n)
    split = split_edges(g, fractions, stream(args.seed, "split"))
    save_split(split, args.out)
    log.info("split %d edges into %d/%d/%d", g.edge_count, len(split.train_pos), len(split.valid_pos), len(split.test_pos))
    return EXIT_OK


def cmd_heuristics(args) -> int:
    kinds = parse_kinds(args.kinds)
    cfg = ModelConfig.load(args.config) if args.config else ModelConfig()
    write_run_manifest(args.out + ".manifest.json", "heuristics", args, {"graph": args.graph, "pairs": args.pairs})
    edges, n = load_edge_list(args.graph)
    g = build_graph(edges, n)
    pairs = np.asarray(_parse_edge_lines(args.pairs), dtype=np.int64).reshape(-1, 2)
    if pairs.size and (pairs.min() < 0 or pairs.max() >= n):
        raise GraphDataError(f"{args.pairs}: pair ids must lie in [0, {n})")
    values = batch_score(g, pairs, kinds, cfg.heuristic_config, workers=args.workers)
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        write_scores_csv(fh, pairs, kinds, values)
    return EXIT_OK


def _split_features(split_dir):
    path = os.path.join(split_dir, "features.txt")
    return load_features(path) if os.path.exists(path) else None


def cmd_train(args) -> int:
    cfg = ModelConfig.load(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    write_run_manifest(os.path.join(args.out, MANIFEST_NAME), "train", args, {"split": args.split})
    split = load_split(args.split)
    features = _split_features(args.split)
    if cfg.variant.uses_features and features is None:
        raise ConfigError(f"variant {cfg.variant.value} needs {os.path.join(args.split, 'features.txt')}")
    if features is not None and features.shape[0] != split.node_count:
        raise GraphDataError(f"features have {features.shape[0]} rows but the split has {split.node_count} nodes")
    with open(os.path.join(args.out, "config.json"), "w", encoding="utf-8") as fh:
        json.dump(cfg.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    log_path = os.path.join(args.out, "train_log.jsonl")
    if os.path.exists(log_path):
        os.remove(log_path)
    state = fit(split.train_graph(), split, cfg, features=features if cfg.variant.uses_features else None,
                out_dir=args.out, workers=args.workers)
    log.info("best %s %.5f at epoch %d", cfg.valid_metric, state.best_metric, state.best_epoch)
    return EXIT_OK


def cmd_eval(args) -> int:
    write_run_manifest(os.path.join(args.out, MANIFEST_NAME), "eval", args,
                       {"checkpoint": args.checkpoint, "split": args.split})
    bundle, manifest, _ = load_checkpoint(args.checkpoint)
    split = load_split(args.split)
    if bundle.node_count != split.node_count:
        raise GraphDataError(
            f"checkpoint was trained on {bundle.node_count} nodes but the split has {split.node_count}"
        )
    g = split.train_graph()
    report = {}
    for part in ("valid", "test"):
        pos, neg = getattr(split, f"{part}_pos"), getattr(split, f"{part}_neg")
        if not len(pos) or not len(neg):
            continue
        scores = evaluate(predict_scores(g, bundle, pos, args.workers), predict_scores(g, bundle, neg, args.workers))
        report.update({f"{part}_{k}": v for k, v in scores.items()})
    write_report(report, os.path.join(args.out, "metrics.json"), os.path.join(args.out, "metrics.csv"))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="linkhe", description="Link prediction with heuristic encodings and GNNs.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--log-level", default="WARNING", help="logging level (default WARNING)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="split an edge list into train/valid/test with negatives")
    p.add_argument("--graph", required=True, help="TAB-separated edge list")
    p.add_argument("--out", required=True, help="split directory to write")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fractions", default="0.8,0.1,0.1", help="train,valid,test fractions")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("heuristics", help="score node pairs with link heuristics, CSV out")
    p.add_argument("--graph", required=True)
    p.add_argument("--pairs", required=True, help="TAB-separated pairs file")
    p.add_argument("--kinds", required=True, help="comma-separated heuristic names, e.g. cn,aa")
    p.add_argument("--config", help="model config JSON; only the heuristic settings are used")
    p.add_argument("--out", required=True, help="CSV path")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_heuristics)

    p = sub.add_parser("train", help="train a model on a split directory")
    p.add_argument("--config", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--out", required=True, help="run directory (checkpoints and logs)")
    p.add_argument("--seed", type=int, help="overrides the config seed")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a split directory")
    p.add_argument("--checkpoint", required=True, help="checkpoint directory, e.g. RUN/best")
    p.add_argument("--split", required=True)
    p.add_argument("--out", required=True, help="directory for metrics.json and metrics.csv")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "workers", 1) < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        code, msg = EXIT_USAGE, str(exc)
    except (GraphDataError, OSError, json.JSONDecodeError, IndexError) as exc:
        code, msg = EXIT_DATA, str(exc)
    except ValueError as exc:
        # bad flag or config values (unknown heuristic, out-of-range settings)
        code, msg = EXIT_USAGE, str(exc)
    except Exception as exc:  # noqa: BLE001
        code, msg = EXIT_RUNTIME, f"{type(exc).__name__}: {exc}"
    print(f"error: {msg}", file=sys.stderr)
    return code
