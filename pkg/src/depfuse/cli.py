"""Command-line entry point: fuse, graph-stats, train, eval, predict, synth-bench.

Log verbosity comes from the DEPFUSE_LOG_LEVEL environment variable
(default WARNING).
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import itertools
import json
import logging
import os
import sys
from pathlib import Path

from depfuse.conllu import read_conllu
from depfuse.data import load_corpus, parse_source_arg
from depfuse.graph import EdgeType, build_typed_graph, edge_overlap, fuse_trees, graph_diameter, union_graphs
from depfuse.metrics import MetricsReport
from depfuse.rgat import RGATConfig
from depfuse.synth import synth_bench, write_bench
from depfuse.train import (
    TrainConfig,
    evaluate,
    load_model,
    predict,
    save_model,
    train,
    write_predictions,
)

log = logging.getLogger("depfuse")

TRAIN_KEYS = {f.name: f for f in dataclasses.fields(TrainConfig)}
RGAT_KEYS = {f.name: f for f in dataclasses.fields(RGATConfig) if f.name != "input_dim"}


def _coerce(text: str):
    low = text.strip().lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", "null", ""):
        return None
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text.strip()


def read_config_file(path) -> tuple[dict, dict]:
    """INI file with optional [train] and [rgat] sections; keys mirror the dataclasses."""
    cp = configparser.ConfigParser()
    if not cp.read(path, encoding="utf-8"):
        raise FileNotFoundError(path)
    out = {}
    for section, keys in (("train", TRAIN_KEYS), ("rgat", RGAT_KEYS)):
        vals = {}
        if cp.has_section(section):
            for k, v in cp.items(section):
                if k not in keys:
                    raise SystemExit(f"{path}: unknown key {k!r} in [{section}]")
                vals[k] = _coerce(v)
        out[section] = vals
    return out["train"], out["rgat"]


def _read_sources(args):
    per = []
    for arg in args:
        pid, path = parse_source_arg(arg)
        per.append((pid, dict(read_conllu(path, pid))))
    return per


def _sentence_trees(per):
    ids = list(per[0][1])
    for sid in ids:
        trees = []
        for pid, m in per:
            if sid not in m:
                raise SystemExit(f"sentence {sid} missing from parser {pid}")
            trees.append(m[sid])
        yield sid, trees


def cmd_fuse(args):
    per = _read_sources(args.conllu)
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        for sid, trees in _sentence_trees(per):
            g = fuse_trees(trees, args.mode)
            out.write(json.dumps({
                "sentence_id": sid,
                "n": g.n,
                "sources": list(g.sources),
                "edges": [[e.src, e.dst, e.etype.short] for e in g.sorted_edges()],
            }) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()


def cmd_graph_stats(args):
    per = _read_sources(args.conllu)
    pids = [p for p, _ in per]
    pairs = list(itertools.combinations(range(len(pids)), 2))
    header = ["sentence_id", "n"] + [f"edges_{p}" for p in pids] + ["edges_union"]
    header += [f"overlap_{pids[a]}_{pids[b]}" for a, b in pairs]
    header += [f"diameter_{p}" for p in pids] + ["diameter_union"]
    print("\t".join(header))
    for sid, trees in _sentence_trees(per):
        graphs = [build_typed_graph(t) for t in trees]
        union = union_graphs(graphs)

        def count(g):
            return sum(1 for e in g.edges if e.etype != EdgeType.SELF_LOOP)

        row = [sid, str(union.n)] + [str(count(g)) for g in graphs] + [str(count(union))]
        row += [f"{edge_overlap(graphs[a], graphs[b]):.4f}" for a, b in pairs]
        row += [str(graph_diameter(g)) for g in graphs] + [str(graph_diameter(union))]
        print("\t".join(row))


def _build_configs(args, input_dim):
    train_vals, rgat_vals = ({}, {})
    if args.config:
        train_vals, rgat_vals = read_config_file(args.config)
    for key in TRAIN_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            train_vals[key] = v
    for key in RGAT_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            rgat_vals[key] = v
    return TrainConfig(**train_vals), RGATConfig(input_dim=input_dim, **rgat_vals)


def _emit_metrics(reports, json_path=None):
    print(MetricsReport.tsv_header())
    for r in reports:
        print(r.tsv_row())
    if json_path:
        Path(json_path).write_text(json.dumps([r.to_dict() for r in reports], indent=2) + "\n")


def cmd_train(args):
    instances, parsers = load_corpus(args.data, args.features, args.conllu)
    tc, rc = _build_configs(args, instances[0].features.d_in)
    dev = None
    if args.dev:
        dev, _ = load_corpus(args.dev, args.features, args.conllu)
    result = train(tc, instances, rc, parsers, dev)
    save_model(args.out, result)
    log.info("best epoch %d, checkpoint %s", result.best_epoch, args.out)
    _emit_metrics(result.history, args.metrics_json)


def _load_for_inference(args):
    model, manifest = load_model(args.checkpoint)
    parsers = manifest["config"]["spec"]["parsers"]
    instances, got = load_corpus(args.data, args.features, args.conllu)
    if list(got) != list(parsers):
        raise SystemExit(f"checkpoint expects parsers {parsers}, got {got}")
    return model, instances


def cmd_eval(args):
    model, instances = _load_for_inference(args)
    _emit_metrics([evaluate(model, instances, args.split)], args.metrics_json)


def cmd_predict(args):
    model, instances = _load_for_inference(args)
    write_predictions(args.out, predict(model, instances))


def cmd_synth_bench(args):
    bench = synth_bench(args.seed, args.n_sentences, args.sentence_len, args.M, args.corruption_rate)
    paths = write_bench(bench, args.out, args.test_fraction, args.seed)
    for k, v in paths.items():
        print(f"{k}\t{v}")


def _add_corpus_args(p, with_data=True):
    if with_data:
        p.add_argument("--data", required=True, help="dataset JSON-lines")
    p.add_argument("--features", required=True, help="subword feature JSON-lines")
    p.add_argument("--conllu", nargs="+", required=True, metavar="[PID=]PATH",
                   help="one CoNLL-U file per parser; parser id defaults to the file stem")


def _add_config_flags(p):
    for name, f in list(TRAIN_KEYS.items()) + list(RGAT_KEYS.items()):
        flag = "--" + name.replace("_", "-")
        if f.type in (bool, "bool"):
            p.add_argument(flag, dest=name, type=_coerce, default=None, metavar="BOOL")
        elif name in ("model", "fusion", "attention_activation"):
            p.add_argument(flag, dest=name, default=None)
        elif f.type in (int, "int", "int | None"):
            p.add_argument(flag, dest=name, type=int, default=None)
        else:
            p.add_argument(flag, dest=name, type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="depfuse", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fuse", help="dump fused typed graphs as JSON-lines")
    p.add_argument("--conllu", nargs="+", required=True, metavar="[PID=]PATH")
    p.add_argument("--mode", default="union", help="union | intersection | single:<parser_id>")
    p.add_argument("--out")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("graph-stats", help="per-sentence edge counts, overlaps and diameters (TSV)")
    p.add_argument("conllu", nargs="+", metavar="[PID=]PATH")
    p.set_defaults(func=cmd_graph_stats)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    _add_corpus_args(p)
    p.add_argument("--dev", help="explicit dev JSON-lines (otherwise split from --data)")
    p.add_argument("--config", help="INI file with [train] / [rgat] sections")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--metrics-json")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    _add_corpus_args(p)
    p.add_argument("--split", default="test")
    p.add_argument("--metrics-json")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="write per-instance predictions as JSON-lines")
    p.add_argument("--checkpoint", required=True)
    _add_corpus_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("synth-bench", help="generate the synthetic noisy-parser benchmark")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-sentences", type=int, default=2000)
    p.add_argument("--sentence-len", type=int, default=10)
    p.add_argument("--M", type=int, default=3)
    p.add_argument("--corruption-rate", type=float, default=0.3)
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth_bench)
    return ap


def main(argv=None):
    logging.basicConfig(
        level=os.environ.get("DEPFUSE_LOG_LEVEL", "WARNING").upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    args.func(args)


if __name__ == "__main__":
    main()
