"""Single command-line entry point.

Verbs: ingest, train, summarize, baseline, evaluate, kappa, stream,
gridsearch-p. Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric
failure. Diagnostics go to stderr; data goes to files or stdout. A config
JSON may supply any long-flag value; explicit flags win.
"""

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import baselines as bl
from . import corpus as cp
from . import evaluation as ev
from . import extractor as ex
from . import report, selection, text, trainer
from .embeddings import load_embedding_table
from .errors import DataError, EmptyClip, NumericError, UsageError, VqsumError
from .model import PROFILES, VqModel
from .trainer import ScheduleConfig, TrainConfig


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{message}\n{self.format_usage()}")


def _read_config(path):
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        record = json.load(fh)
    if not isinstance(record, dict):
        raise DataError(f"{path}: config must be a JSON object")
    return record


def _pick(args, config, key, default):
    """Flag beats config beats default."""
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    if key in config:
        return config[key]
    return default


def _ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path


def _load_corpus_dir(corpus_dir):
    clips_path = os.path.join(corpus_dir, "clips.jsonl")
    if not os.path.exists(clips_path):
        raise DataError(f"{clips_path}: not found (run `vqsum ingest` first)")
    clips = cp.load_clips(clips_path)
    splits_path = os.path.join(corpus_dir, "splits.json")
    splits = cp.load_splits(splits_path) if os.path.exists(splits_path) else None
    return clips, splits


def _clips_for_split(clips, splits, name):
    if name == "all" or splits is None:
        return clips
    videos = splits.of(name)
    return [c for c in clips if c.video_id in videos]


def _load_run(run_dir, embeddings_path=None):
    table = None
    if embeddings_path:
        table = load_embedding_table(embeddings_path, embeddings_path + ".manifest.jsonl")
    model = VqModel.load(
        os.path.join(run_dir, "model.shck"),
        os.path.join(run_dir, "model_config.json"),
        embedding_table=table,
    )
    vocab = text.load_vocab(os.path.join(run_dir, "vocab.txt"))
    return model, vocab


def _excluded_from_run(run_dir, exclude_top):
    stats_path = os.path.join(run_dir, "code_stats.json")
    if not os.path.exists(stats_path):
        raise DataError(f"{stats_path}: not found (retrain or re-run `vqsum train`)")
    with open(stats_path, encoding="utf-8") as fh:
        counts = np.asarray(json.load(fh)["counts"], dtype=np.int64)
    return ex.degenerate_codes(ex.CodeStats(counts=counts), m=exclude_top)


# ------------------------------------------------------------------- verbs


def cmd_ingest(args):
    config = _read_config(args.config)
    transcripts = cp.load_transcripts(args.in_path)
    clips = cp.build_corpus(transcripts)
    if args.annotations:
        cp.apply_annotations(clips, cp.load_annotations(args.annotations))
    out = _ensure_dir(args.out)
    cp.write_clips(clips, os.path.join(out, "clips.jsonl"))

    if args.split_file:
        splits = cp.load_splits(args.split_file)
    else:
        seed = int(_pick(args, config, "seed", 0))
        splits = cp.make_splits([c.video_id for c in clips], seed=seed)
    cp.save_splits(splits, os.path.join(out, "splits.json"))

    stats = cp.corpus_stats(clips)
    with open(os.path.join(out, "stats.json"), "w", encoding="utf-8") as fh:
        json.dump(stats.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    if clips:
        report.save_corpus_overview(clips, os.path.join(out, "figures", "corpus_overview.png"))
    print(
        f"ingested {len(transcripts)} videos -> {len(clips)} valid clips "
        f"({stats.chitchat_clips} chitchat)",
        file=sys.stderr,
    )
    return 0


def _train_config(args, config):
    seed = int(_pick(args, config, "seed", 0))
    base = dict(
        epochs=int(_pick(args, config, "epochs", 30)),
        batch_size=int(_pick(args, config, "batch_size", 32)),
        seed=seed,
        beta=float(_pick(args, config, "beta", 0.25)),
        max_len=int(_pick(args, config, "max_len", 64)),
    )
    profile_name = _pick(args, config, "profile", "desk")
    if profile_name == "paper":
        base["accumulation"] = int(_pick(args, config, "accumulation", 10))
        base["schedule_e"] = ScheduleConfig(
            base_lr=float(config.get("lr_e", 7e-4)), warmup=int(config.get("warmup_e", 3000))
        )
        base["schedule_r"] = ScheduleConfig(
            base_lr=float(config.get("lr_r", 4e-2)), warmup=int(config.get("warmup_r", 1500))
        )
        cfg = TrainConfig(**base)
    else:
        accumulation = _pick(args, config, "accumulation", None)
        if accumulation is not None:
            base["accumulation"] = int(accumulation)
        if "warmup_e" in config or "lr_e" in config:
            base["schedule_e"] = ScheduleConfig(
                base_lr=float(config.get("lr_e", 7e-4)), warmup=int(config.get("warmup_e", 200))
            )
        if "warmup_r" in config or "lr_r" in config:
            base["schedule_r"] = ScheduleConfig(
                base_lr=float(config.get("lr_r", 4e-2)), warmup=int(config.get("warmup_r", 100))
            )
        cfg = trainer.desk_train_config(**base)
    return cfg, profile_name, seed


def cmd_train(args):
    config = _read_config(args.config)
    clips, splits = _load_corpus_dir(args.in_path)
    train_videos = splits.train if splits is not None else None
    pool = text.training_pool(clips, train_videos)
    if not pool and splits is not None:
        pool = text.training_pool(clips, None)  # tiny fixtures may lack a train split
    cfg, profile_name, seed = _train_config(args, config)

    vocab = text.build_vocab(
        (u.text for u in pool),
        min_freq=int(_pick(args, config, "vocab_min_freq", 1)),
        max_size=int(_pick(args, config, "vocab_max_size", 8192)),
    )
    table = None
    if args.embeddings:
        table = load_embedding_table(args.embeddings, args.embeddings + ".manifest.jsonl")
    profile = PROFILES[profile_name]
    model = VqModel(profile, vocab_size=len(vocab), seed=seed, embedding_table=table)

    print(
        f"training on {len(pool)} utterances, vocab {len(vocab)}, profile {profile_name}",
        file=sys.stderr,
    )
    history = trainer.train(pool, vocab, model, cfg)

    out = _ensure_dir(args.out)
    model.save(os.path.join(out, "model.shck"), os.path.join(out, "model_config.json"))
    text.save_vocab(vocab, os.path.join(out, "vocab.txt"))
    trainer.write_history_csv(history, os.path.join(out, "loss_history.csv"))
    with open(os.path.join(out, "train_config.json"), "w", encoding="utf-8") as fh:
        json.dump(
            {
                "epochs": cfg.epochs,
                "batch_size": cfg.batch_size,
                "accumulation": cfg.accumulation,
                "seed": cfg.seed,
                "beta": cfg.beta,
                "max_len": cfg.max_len,
                "profile": profile_name,
                "lr_e": cfg.schedule_e.base_lr,
                "warmup_e": cfg.schedule_e.warmup,
                "lr_r": cfg.schedule_r.base_lr,
                "warmup_r": cfg.schedule_r.warmup,
            },
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")

    stats = ex.code_stats(model, vocab, pool, max_len=cfg.max_len)
    with open(os.path.join(out, "code_stats.json"), "w", encoding="utf-8") as fh:
        json.dump({"counts": stats.counts.tolist()}, fh)
        fh.write("\n")
    report.save_loss_curves(history, os.path.join(out, "figures", "loss_curves.png"))
    report.save_code_usage(
        stats, ex.degenerate_codes(stats), os.path.join(out, "figures", "code_usage.png")
    )
    print(
        f"done: epoch-1 loss {history[0].total:.4f} -> epoch-{len(history)} "
        f"loss {history[-1].total:.4f}",
        file=sys.stderr,
    )
    return 0


def _extract_config(args, config, run_dir, max_len):
    exclude_top = int(_pick(args, config, "exclude_top", ex.DEFAULT_EXCLUDE_TOP))
    excluded = _excluded_from_run(run_dir, exclude_top)
    return ex.ExtractConfig(
        p_size=int(_pick(args, config, "p_size", ex.DEFAULT_P_SIZE)),
        k=int(_pick(args, config, "k", ex.DEFAULT_K)),
        excluded=tuple(excluded),
        max_len=max_len,
    )


def _run_max_len(run_dir):
    path = os.path.join(run_dir, "train_config.json")
    if os.path.exists(path):
        with open(path, encoding="utf-8") as fh:
            return int(json.load(fh).get("max_len", 64))
    return 64


def cmd_summarize(args):
    config = _read_config(args.config)
    clips, splits = _load_corpus_dir(args.in_path)
    chosen = [c for c in _clips_for_split(clips, splits, args.split) if c.is_valid]
    model, vocab = _load_run(args.model, args.embeddings)
    extract_cfg = _extract_config(args, config, args.model, _run_max_len(args.model))

    by_id = {c.clip_id: c for c in chosen}
    records = []
    for item in ex.stream(model, vocab, chosen, extract_cfg):
        if isinstance(item, selection.ErrorRecord):
            records.append(item.to_record())
        else:
            records.append(item.to_record(by_id[item.clip_id]))
    selection.write_summaries(records, args.out)
    print(f"summarized {len(records)} clips -> {args.out}", file=sys.stderr)
    return 0


def cmd_baseline(args):
    config = _read_config(args.config)
    clips, splits = _load_corpus_dir(args.in_path)
    chosen = [c for c in _clips_for_split(clips, splits, args.split) if c.is_valid]
    k = int(_pick(args, config, "k", ex.DEFAULT_K))
    system = bl.BASELINES[args.system]

    def run(clip):
        try:
            return system(clip, k).to_record(clip)
        except EmptyClip as exc:
            return selection.ErrorRecord(clip_id=clip.clip_id, error=str(exc)).to_record()

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            records = list(pool.map(run, chosen))
    else:
        records = [run(c) for c in chosen]
    selection.write_summaries(records, args.out)
    print(f"{args.system}: {len(records)} clips -> {args.out}", file=sys.stderr)
    return 0


def cmd_evaluate(args):
    clips, _ = _load_corpus_dir(args.corpus)
    clips_by_id = {c.clip_id: c for c in clips}
    by_system = {}
    for path in args.in_path.split(","):
        for record in selection.load_summaries(path.strip()):
            if "error" in record:
                continue
            by_system.setdefault(record.get("system", "unknown"), []).append(record)
    if not by_system:
        raise DataError("no selection records found in the given files")

    def run(item):
        name, records = item
        return name, ev.evaluate_system(records, clips_by_id, stemming=args.stem)

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            reports = dict(pool.map(run, by_system.items()))
    else:
        reports = dict(run(item) for item in by_system.items())

    out = _ensure_dir(args.out)
    with open(os.path.join(out, "metrics.json"), "w", encoding="utf-8") as fh:
        json.dump(reports, fh, indent=2, sort_keys=True)
        fh.write("\n")
    report.write_metrics_csv(reports, os.path.join(out, "metrics.csv"))
    report.save_metric_bars(reports, os.path.join(out, "figures", "metrics.png"))
    for system in sorted(reports):
        micro = reports[system].get("prf_micro") or {}
        print(f"{system}: micro-F1 {micro.get('f1', float('nan')):.4f}", file=sys.stderr)
    return 0


def cmd_kappa(args):
    clips, _ = _load_corpus_dir(args.corpus)
    annotations = cp.load_annotations(args.in_path)
    selections = {}
    for rec in annotations:
        annotator = rec.get("annotator")
        if annotator is None:
            raise DataError("kappa needs an 'annotator' field on every annotation record")
        clip_id = f"{rec['video_id']}:{rec['clip_index']}"
        selections.setdefault(annotator, {})[clip_id] = set(rec["extract_indices"])
    covered = {cid for per in selections.values() for cid in per}
    rated_clips = [c for c in clips if c.clip_id in covered]
    kappa = ev.fleiss_kappa(selections, rated_clips, interval_s=args.interval)
    record = {
        "kappa": kappa,
        "annotators": len(selections),
        "clips": len(rated_clips),
        "interval_s": args.interval,
    }
    payload = json.dumps(record, indent=2, sort_keys=True) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(payload)
    else:
        sys.stdout.write(payload)
    return 0


def cmd_stream(args):
    config = _read_config(args.config)
    clips, splits = _load_corpus_dir(args.in_path)
    chosen = [c for c in _clips_for_split(clips, splits, args.split) if c.is_valid]
    model, vocab = _load_run(args.model, args.embeddings)
    extract_cfg = _extract_config(args, config, args.model, _run_max_len(args.model))
    by_id = {c.clip_id: c for c in chosen}

    sink = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        for item in ex.stream(model, vocab, chosen, extract_cfg):
            if isinstance(item, selection.ErrorRecord):
                record = item.to_record()
            else:
                record = item.to_record(by_id[item.clip_id])
            sink.write(selection.dump_record(record) + "\n")
            sink.flush()
    finally:
        if args.out:
            sink.close()
    return 0


def cmd_gridsearch_p(args):
    config = _read_config(args.config)
    clips, splits = _load_corpus_dir(args.in_path)
    chosen = [c for c in _clips_for_split(clips, splits, args.split) if c.is_valid]
    model, vocab = _load_run(args.model, args.embeddings)
    exclude_top = int(_pick(args, config, "exclude_top", ex.DEFAULT_EXCLUDE_TOP))
    excluded = _excluded_from_run(args.model, exclude_top)
    candidates = [int(p) for p in args.candidates.split(",")]
    best = ex.grid_search_p(
        model,
        vocab,
        chosen,
        candidates,
        excluded=excluded,
        k=int(_pick(args, config, "k", ex.DEFAULT_K)),
        max_len=_run_max_len(args.model),
    )
    payload = json.dumps({"best_p_size": best, "candidates": candidates}, sort_keys=True) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(payload)
    else:
        sys.stdout.write(payload)
    return 0


# ------------------------------------------------------------------ parser


def build_parser():
    parser = _Parser(prog="vqsum", description=__doc__)
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p, model=False, split=True):
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument("--seed", type=int, default=None)
        if model:
            p.add_argument("--model", required=True, help="run directory from `vqsum train`")
            p.add_argument("--embeddings", help="binary table for file-backed embeddings")
            p.add_argument("--k", type=int, default=None)
            p.add_argument("--p-size", dest="p_size", type=int, default=None)
            p.add_argument("--exclude-top", dest="exclude_top", type=int, default=None)
        if split:
            p.add_argument(
                "--split", choices=["train", "valid", "test", "all"], default="all"
            )

    p = sub.add_parser("ingest", help="raw transcript JSONL -> corpus directory")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--annotations")
    p.add_argument("--split-file", dest="split_file")
    common(p, split=False)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="fit the quantized autoencoder")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--profile", choices=sorted(PROFILES), default=None)
    p.add_argument("--embeddings", help="binary table for file-backed embeddings")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--accumulation", type=int, default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--max-len", dest="max_len", type=int, default=None)
    common(p, split=False)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("summarize", help="extract summaries with a trained model")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out", required=True)
    common(p, model=True)
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("baseline", help="run an unsupervised baseline")
    p.add_argument("--system", choices=sorted(bl.BASELINES), required=True)
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)
    common(p)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("evaluate", help="score selection files against gold labels")
    p.add_argument("--in", dest="in_path", required=True, help="comma-separated JSONL files")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--stem", action="store_true", help="Porter-stem ROUGE tokens")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("kappa", help="inter-annotator agreement over 10s intervals")
    p.add_argument("--in", dest="in_path", required=True, help="multi-annotator annotations")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out")
    p.add_argument("--interval", type=float, default=10.0)
    p.set_defaults(func=cmd_kappa)

    p = sub.add_parser("stream", help="summarize clips one at a time, emitting as you go")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out")
    common(p, model=True)
    p.set_defaults(func=cmd_stream)

    p = sub.add_parser("gridsearch-p", help="tune the prominent-code set size")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--candidates", required=True, help="comma-separated p sizes")
    p.add_argument("--out")
    common(p, model=True)
    p.set_defaults(func=cmd_gridsearch_p)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except VqsumError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
