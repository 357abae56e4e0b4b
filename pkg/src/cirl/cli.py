"""Command-line surface.

Subcommands: gen-data, train, encode, eval, bench, ablate, inspect-pool.
Every command takes ``--config`` (flat key = value file) plus flag
overrides, prints the effective configuration, and writes all outputs
under the run directory given by ``--out``. Validation failures exit with
code 1 and a single JSON error record on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from cirl import checkpoint as ckpt
from cirl.config import (
    RunConfig,
    build_run_config,
    effective_config_text,
    parse_config_file,
)
from cirl.encoding import encode_candidates, encode_queries
from cirl.errors import CirlError
from cirl.eval_bench import (
    attention_report,
    attention_report_csv,
    bench_latency,
    build_index,
    compute_metrics,
    rank_queries,
)
from cirl.model import IntentModel
from cirl.objective_trainer import train
from cirl.prompt_pool import select
from cirl.synthcorpus import gen_corpus, load_corpus, save_corpus
from cirl.synthcorpus.captions import caption_tokens
from cirl.visual_frontend import image_key_query
from cirl.prompt_pool import text_key_query

_FLAG_TO_KEY = {
    "strategy": "model.pooling",
    "soft_mode": "model.soft_mode",
    "task_prompt_len": "model.task_prompt_len",
    "lp": "model.prompt_len",
    "topk": "model.top_k",
    "pool_size": "model.pool_size",
    "lam": "train.lam",
    "batch": "train.batch_size",
    "seed": "seed",
}

CHECKPOINT_FILE = "checkpoint.cirl"
CONFIG_FILE = "config.txt"
TRAIN_LOG_FILE = "train_log.jsonl"


def _collect_config(args) -> tuple[RunConfig, dict]:
    file_values = parse_config_file(args.config) if args.config else None
    flag_values = {}
    for flag, key in _FLAG_TO_KEY.items():
        value = getattr(args, flag, None)
        if value is not None:
            flag_values[key] = str(value)
    return build_run_config(file_values, flag_values)


def _ensure_out(args) -> Path:
    if not args.out:
        raise CirlError("--out is required for this command")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dump_effective(config: RunConfig, provenance: dict, out: Path | None) -> None:
    text = effective_config_text(config, provenance)
    sys.stdout.write(text)
    if out is not None:
        (out / CONFIG_FILE).write_text(effective_config_text(config), encoding="utf-8")


def _load_run(run_dir: str) -> tuple[RunConfig, IntentModel]:
    run = Path(run_dir)
    file_values = parse_config_file(run / CONFIG_FILE)
    config, _ = build_run_config(file_values)
    model = IntentModel(config.model, seed=config.seed)
    ckpt.load_model_tensors(model, run / CHECKPOINT_FILE)
    return config, model


def cmd_gen_data(args) -> int:
    config, provenance = _collect_config(args)
    out = _ensure_out(args)
    _dump_effective(config, provenance, out)
    corpus = gen_corpus(config.corpus, config.seed)
    save_corpus(corpus, out / "corpus.jsonl")
    print(f"wrote {corpus.n_candidates} candidates, "
          f"{sum(len(v) for v in corpus.splits.values())} triplets "
          f"-> {out / 'corpus.jsonl'}")
    return 0


def cmd_train(args) -> int:
    config, provenance = _collect_config(args)
    out = _ensure_out(args)
    _dump_effective(config, provenance, out)
    corpus = load_corpus(args.corpus)
    with open(out / TRAIN_LOG_FILE, "w", encoding="utf-8") as log_file:
        result = train(config.train, corpus, config.model, log_file=log_file)
    ckpt.save_model_tensors(result.model, out / CHECKPOINT_FILE)
    last = result.log[-1]
    print(f"trained {config.train.epochs} epochs; final loss {last['loss']:.4f}, "
          f"val recall@1 {last['val_recall1']:.4f}")
    return 0


def cmd_encode(args) -> int:
    config, model = _load_run(args.checkpoint)
    corpus = load_corpus(args.corpus)
    out = _ensure_out(args)
    split = args.split
    if split == "candidates":
        emb = encode_candidates(model, corpus)
        ids = list(range(corpus.n_candidates))
    else:
        emb, gt, _ = encode_queries(model, corpus, split)
        ids = gt
    ckpt.save_embeddings(out / f"embeddings_{split}.cirl", emb)
    (out / f"ids_{split}.json").write_text(
        json.dumps(ids, separators=(",", ":")), encoding="utf-8"
    )
    print(f"encoded {len(ids)} {split} instances -> {out}")
    return 0


def cmd_eval(args) -> int:
    corpus = load_corpus(args.corpus)
    out = _ensure_out(args)
    cand = ckpt.load_embeddings(args.candidate_embeddings)
    queries = ckpt.load_embeddings(args.query_embeddings)
    triplets = corpus.splits[args.split]
    if len(triplets) != queries.shape[0]:
        raise CirlError(
            f"{len(triplets)} {args.split} triplets but {queries.shape[0]} query embeddings"
        )
    subset_of = {i: corpus.subset_of_candidate(i) for i in range(corpus.n_candidates)}
    index = build_index(cand, list(range(corpus.n_candidates)), subset_of)
    gt = [t.target_id for t in triplets]
    subsets = [t.subset_id for t in triplets]
    config, _ = build_run_config(
        parse_config_file(args.config) if args.config else None
    )
    report = compute_metrics(
        rank_queries(index, queries, gt, subsets), config.eval_k, config.eval_subset_k
    )
    (out / f"metrics_{args.split}.json").write_text(report.to_json(), encoding="utf-8")
    print(report.to_json())
    return 0


def cmd_bench(args) -> int:
    config, model = _load_run(args.checkpoint)
    corpus = load_corpus(args.corpus)
    report = bench_latency(model, corpus, repetitions=args.repetitions)
    print(json.dumps(report, separators=(",", ":")))
    if not report["single_pass"]:
        raise CirlError("single-pass contract violated")
    return 0


def cmd_ablate(args) -> int:
    config, provenance = _collect_config(args)
    out = _ensure_out(args)
    _dump_effective(config, provenance, out)
    corpus = load_corpus(args.corpus)
    key = {
        "pooling": "model.pooling",
        "soft-mode": "model.soft_mode",
        "task-prompt-len": "model.task_prompt_len",
        "lp": "model.prompt_len",
        "topk": "model.top_k",
        "pool-size": "model.pool_size",
        "lambda": "train.lam",
    }.get(args.axis)
    if key is None:
        raise CirlError(f"unknown ablation axis {args.axis!r}")
    rows = []
    base_file = parse_config_file(args.config) if args.config else {}
    for value in args.values.split(","):
        value = value.strip()
        run_config, _ = build_run_config(dict(base_file, **{key: value}))
        run_dir = out / f"{args.axis}={value}"
        run_dir.mkdir(parents=True, exist_ok=True)
        with open(run_dir / TRAIN_LOG_FILE, "w", encoding="utf-8") as log_file:
            result = train(run_config.train, corpus, run_config.model, log_file=log_file)
        ckpt.save_model_tensors(result.model, run_dir / CHECKPOINT_FILE)
        (run_dir / CONFIG_FILE).write_text(
            effective_config_text(run_config), encoding="utf-8"
        )
        index = build_index(
            encode_candidates(result.model, corpus),
            list(range(corpus.n_candidates)),
            {i: corpus.subset_of_candidate(i) for i in range(corpus.n_candidates)},
        )
        emb, gt, subsets = encode_queries(result.model, corpus, "test")
        report = compute_metrics(
            rank_queries(index, emb, gt, subsets),
            run_config.eval_k, run_config.eval_subset_k,
        )
        (run_dir / "metrics_test.json").write_text(report.to_json(), encoding="utf-8")
        rows.append({"value": value, "r_mean": report.r_mean,
                     "recall_at": report.recall_at, "avg": report.avg_r5_rsub1})
    table = {"axis": args.axis, "rows": rows}
    (out / "ablation.json").write_text(
        json.dumps(table, separators=(",", ":")), encoding="utf-8"
    )
    print(f"{'value':>16}  {'R_mean':>8}")
    for row in rows:
        print(f"{row['value']:>16}  {row['r_mean']:>8.4f}")
    return 0


def cmd_inspect_pool(args) -> int:
    config, model = _load_run(args.checkpoint)
    corpus = load_corpus(args.corpus)
    counts = np.zeros(model.pool.size, dtype=np.int64)
    events = 0
    if model.config.soft_mode != "instance":
        print(json.dumps({"soft_mode": model.config.soft_mode, "selections": 0}))
        return 0
    from cirl.encoding import candidate_patches, query_patches

    for triplet in corpus.splits[args.split]:
        patches = query_patches(corpus, triplet)
        feats = model.frozen(patches)
        caption = model.decoder.embed_tokens(caption_tokens(triplet.edits))
        sel = select(model.pool, image_key_query(feats),
                     text_key_query(caption.data), model.config.top_k)
        counts[list(sel.indices)] += 1
        events += 1
    report = {
        "split": args.split,
        "selections": events,
        "frequencies": {str(i): int(c) for i, c in enumerate(counts)},
    }
    print(json.dumps(report, separators=(",", ":")))
    return 0


def _add_common(parser: argparse.ArgumentParser, out_required: bool = True) -> None:
    parser.add_argument("--config", help="flat key = value config file")
    parser.add_argument("--seed", type=int, default=None)
    if out_required:
        parser.add_argument("--out", help="run directory for all outputs")
    parser.add_argument("--strategy", choices=("weighted_mean", "last", "mean"),
                        default=None, help="pooling strategy")
    parser.add_argument("--soft-mode", dest="soft_mode",
                        choices=("none", "universal", "instance"), default=None)
    parser.add_argument("--task-prompt-len", dest="task_prompt_len", type=int,
                        choices=(0, 2, 4), default=None)
    parser.add_argument("--lp", type=int, default=None, help="prompt block length")
    parser.add_argument("--topk", type=int, default=None, help="selected prompts per instance")
    parser.add_argument("--pool-size", dest="pool_size", type=int, default=None)
    parser.add_argument("--lambda", dest="lam", type=float, default=None,
                        help="temperature multiplier")
    parser.add_argument("--batch", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cirl",
        description="desk-scale intent-aware composed retrieval pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic corpus")
    _add_common(p)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train", help="train a model on a corpus")
    _add_common(p)
    p.add_argument("--corpus", required=True)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("encode", help="encode a corpus split with a checkpoint")
    _add_common(p)
    p.add_argument("--checkpoint", required=True, help="run directory of cirl train")
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", default="test",
                   choices=("train", "val", "test", "candidates"))
    p.set_defaults(fn=cmd_encode)

    p = sub.add_parser("eval", help="score query embeddings against candidates")
    _add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--query-embeddings", dest="query_embeddings", required=True)
    p.add_argument("--candidate-embeddings", dest="candidate_embeddings", required=True)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("bench", help="latency bench + single-pass check")
    _add_common(p, out_required=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--repetitions", type=int, default=3)
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("ablate", help="train/eval across one config axis")
    _add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--axis", required=True)
    p.add_argument("--values", required=True, help="comma-separated axis values")
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("inspect-pool", help="pool selection frequencies over a split")
    _add_common(p, out_required=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", default="train", choices=("train", "val", "test"))
    p.set_defaults(fn=cmd_inspect_pool)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (CirlError, OSError, ValueError) as exc:
        record = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(record, separators=(",", ":")), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
