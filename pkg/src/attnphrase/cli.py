"""Command-line pipeline driver.

Subcommands: mine-labels, match-gazetteer, gen-synth, extract-features,
train, tag, rank, eval-kp, eval-tagging, sample-annotation.

A config file with flat dotted keys (``key = value`` per line, ``#`` comments)
may supply defaults; explicit flags override it.  ``--seed`` flows to every
stochastic step, ``--dry-run`` validates inputs without doing work.

Exit codes: 0 success, 2 usage error, 3 invalid config key, 4 path error,
1 anything else.  Errors print a single ``error: ...`` line on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Dict, List, Optional

from . import attnfeat, classifier, evaluate, labelgen, tagger
from .corpus import StopwordList, default_stopwords, load_corpus

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_PATH = 4
EXIT_OTHER = 1

CONFIG_KEYS = {
    "mining.min_freq": int,
    "mining.k_max": int,
    "provider.name": str,
    "provider.seed": int,
    "provider.layers": int,
    "provider.heads": int,
    "train.learning_rate": float,
    "train.batch_size": int,
    "train.max_epochs": int,
    "train.validation_fraction": float,
    "train.seed": int,
    "train.k_max": int,
    "train.decision_threshold": float,
    "tag.threshold": float,
    "tag.decode": str,
    "eval.top_k": int,
    "seed": int,
    "threads": int,
}


class ConfigError(Exception):
    pass


class PathError(Exception):
    pass


def parse_config_file(path) -> Dict[str, object]:
    values: Dict[str, object] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"config line {lineno}: expected 'key = value'")
            key, _, raw = line.partition("=")
            key, raw = key.strip(), raw.strip()
            if key not in CONFIG_KEYS:
                raise ConfigError(f"config line {lineno}: unknown key {key!r}")
            try:
                values[key] = CONFIG_KEYS[key](raw)
            except ValueError:
                raise ConfigError(f"config line {lineno}: bad value for {key!r}: {raw!r}")
    return values


def _require_paths(*paths) -> None:
    for p in paths:
        if p is not None and not os.path.exists(p):
            raise PathError(f"input path does not exist: {p}")


def _resolve(args, config: Dict[str, object], key: str, flag_value, default):
    if flag_value is not None:
        return flag_value
    if key in config:
        return config[key]
    return default


def _threads(args, config) -> int:
    if args.threads is not None:
        return args.threads
    if "threads" in config:
        return int(config["threads"])
    env = os.environ.get("UCP_THREADS")
    return int(env) if env else 1


def _stopwords(args) -> StopwordList:
    if getattr(args, "stopwords", None):
        return StopwordList.from_file(args.stopwords)
    return default_stopwords()


def _load_docs_by_id(path):
    docs = load_corpus(path)
    return docs, {d.id: d for d in docs}


def _make_feature_provider(args, config, seed: int):
    name = _resolve(args, config, "provider.name", getattr(args, "provider", None), "synthetic-hash")
    return attnfeat.make_provider(
        name,
        seed=seed,
        archive_path=getattr(args, "archive", None),
        planted_params_path=getattr(args, "planted_params", None),
        n_layers=_resolve(args, config, "provider.layers", getattr(args, "layers", None), attnfeat.DEFAULT_LAYERS),
        n_heads=_resolve(args, config, "provider.heads", getattr(args, "heads", None), attnfeat.DEFAULT_HEADS),
    )


# ---------------------------------------------------------------------------
# subcommand implementations


def cmd_mine_labels(args, config) -> int:
    _require_paths(args.corpus, getattr(args, "stopwords", None))
    if args.dry_run:
        return EXIT_OK
    seed = _resolve(args, config, "seed", args.seed, 0)
    min_freq = _resolve(args, config, "mining.min_freq", args.min_freq, 2)
    k_max = _resolve(args, config, "mining.k_max", args.k_max, 6)
    stopwords = _stopwords(args)
    docs = load_corpus(args.corpus)
    all_labels: List[labelgen.SpanLabel] = []
    for doc in docs:
        positives = labelgen.mine_core_phrases(doc, min_freq=min_freq, k_max=k_max, stopwords=stopwords)
        all_labels.extend(positives)
        if not args.no_negatives:
            doc_seed = labelgen.derive_doc_seed(seed, doc.id)
            all_labels.extend(labelgen.sample_negatives(doc, positives, k_max=k_max, seed=doc_seed))
    labelgen.write_labels(args.out, labelgen.merge_label_sets(all_labels))
    return EXIT_OK


def cmd_match_gazetteer(args, config) -> int:
    _require_paths(args.corpus, args.gazetteer)
    if args.dry_run:
        return EXIT_OK
    k_max = _resolve(args, config, "mining.k_max", args.k_max, 6)
    with open(args.gazetteer, "r", encoding="utf-8") as fh:
        gazetteer = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    docs = load_corpus(args.corpus)
    all_labels: List[labelgen.SpanLabel] = []
    for doc in docs:
        all_labels.extend(labelgen.gazetteer_match(doc, gazetteer, k_max=k_max))
    labelgen.write_labels(args.out, labelgen.merge_label_sets(all_labels))
    return EXIT_OK


def cmd_gen_synth(args, config) -> int:
    if args.dry_run:
        return EXIT_OK
    seed = _resolve(args, config, "seed", args.seed, 0)
    attnfeat.write_synthetic_corpus(
        args.out_corpus,
        args.out_gold,
        args.out_params,
        n_docs=args.n_docs,
        vocab_size=args.vocab_size,
        phrase_bank_size=args.phrase_bank_size,
        seed=seed,
        delta=args.delta,
    )
    return EXIT_OK


def cmd_extract_features(args, config) -> int:
    _require_paths(args.corpus, getattr(args, "planted_params", None))
    if args.dry_run:
        return EXIT_OK
    seed = _resolve(args, config, "seed", args.seed, 0)
    docs = load_corpus(args.corpus)
    provider = _make_feature_provider(args, config, seed)
    count, truncated = attnfeat.export_corpus_attention(docs, provider, args.out)
    print(f"wrote {count} tensors ({truncated} sentences truncated to 64 words)")
    return EXIT_OK


def cmd_train(args, config) -> int:
    _require_paths(args.corpus, args.labels, args.archive)
    if args.dry_run:
        return EXIT_OK
    cfg = classifier.TrainConfig(
        learning_rate=_resolve(args, config, "train.learning_rate", args.learning_rate, 0.001),
        batch_size=_resolve(args, config, "train.batch_size", args.batch_size, 128),
        max_epochs=_resolve(args, config, "train.max_epochs", args.max_epochs, 50),
        validation_fraction=_resolve(args, config, "train.validation_fraction", args.validation_fraction, 0.10),
        seed=_resolve(args, config, "seed", args.seed, 0),
        k_max=_resolve(args, config, "train.k_max", args.k_max, 6),
        decision_threshold=_resolve(args, config, "train.decision_threshold", args.threshold, 0.5),
    )
    _, docs_by_id = _load_docs_by_id(args.corpus)
    labels = labelgen.read_labels(args.labels)
    provider = attnfeat.ArchiveProvider(args.archive)
    try:
        ckpt = classifier.train(labels, docs_by_id, provider, cfg, report_path=args.report)
    finally:
        provider.close()
    classifier.save_checkpoint(args.out_checkpoint, ckpt)
    print(f"best epoch {ckpt.best_epoch}, validation F1 {ckpt.val_f1:.4f}")
    return EXIT_OK


def cmd_tag(args, config) -> int:
    _require_paths(args.corpus, args.archive, args.checkpoint)
    if args.dry_run:
        return EXIT_OK
    docs = load_corpus(args.corpus)
    ckpt = classifier.load_checkpoint(args.checkpoint)
    threshold = _resolve(args, config, "tag.threshold", args.threshold, 0.5)
    decode = _resolve(args, config, "tag.decode", args.decode, tagger.OVERLAP)
    provider = attnfeat.ArchiveProvider(args.archive)
    try:
        predictions, skipped = tagger.tag_corpus(docs, provider, ckpt, threshold, decode)
    finally:
        provider.close()
    tagger.write_predictions(args.out, predictions)
    print(f"{len(predictions)} predictions ({skipped} spans beyond truncation skipped)")
    return EXIT_OK


def cmd_rank(args, config) -> int:
    _require_paths(args.corpus, args.predictions)
    if args.dry_run:
        return EXIT_OK
    _, docs_by_id = _load_docs_by_id(args.corpus)
    predictions = tagger.read_predictions(args.predictions)
    ranked = evaluate.rank_phrases_global(predictions, docs_by_id)
    if args.top_k:
        ranked = ranked[: args.top_k]
    with open(args.out, "w", encoding="utf-8") as fh:
        for r in ranked:
            fh.write(json.dumps({"phrase": r.phrase, "score": r.score, "count": r.count}) + "\n")
    return EXIT_OK


def cmd_sample_annotation(args, config) -> int:
    _require_paths(args.ranked, getattr(args, "annotations", None))
    if args.dry_run:
        return EXIT_OK
    seed = _resolve(args, config, "seed", args.seed, 0)
    ranked = []
    with open(args.ranked, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                ranked.append(evaluate.RankedPhrase(rec["phrase"], rec["score"], rec["count"]))
    sample = evaluate.sample_for_annotation(ranked, top_k=args.top_k, n_sample=args.n_sample, seed=seed)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            for phrase in sample:
                fh.write(phrase + "\n")
    if args.annotations:
        annotations = evaluate.read_annotations(args.annotations)
        report = evaluate.precision_from_annotations(sample, annotations)
        report.config.update({"top_k": args.top_k, "n_sample": args.n_sample, "seed": seed})
        report.write(args.out_report)
    return EXIT_OK


def cmd_eval_kp(args, config) -> int:
    _require_paths(args.corpus, args.predictions, args.gold)
    if args.dry_run:
        return EXIT_OK
    top_k = _resolve(args, config, "eval.top_k", args.top_k, 10)
    _, docs_by_id = _load_docs_by_id(args.corpus)
    predictions = tagger.read_predictions(args.predictions)
    candidates = evaluate.collect_candidates(predictions, docs_by_id)
    gold = evaluate.read_gold_keyphrases(args.gold)
    report = evaluate.evaluate_keyphrase(candidates, gold, top_k=top_k)
    report.config.update({"corpus": str(args.corpus), "top_k": top_k})
    report.write(args.out_report)
    print(report.to_json())
    return EXIT_OK


def cmd_eval_tagging(args, config) -> int:
    _require_paths(args.predictions, args.gold)
    if args.dry_run:
        return EXIT_OK
    predictions = tagger.read_predictions(args.predictions)
    gold = evaluate.read_gold_tagging(args.gold)
    report = evaluate.evaluate_tagging(evaluate.predictions_to_span_keys(predictions), gold)
    report.config.update({"predictions": str(args.predictions), "gold": str(args.gold)})
    report.write(args.out_report)
    print(report.to_json())
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="attnphrase",
        description="Unsupervised attention-based phrase tagging pipeline",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p):
        p.add_argument("--config", help="config file with flat dotted keys")
        p.add_argument("--seed", type=int, default=None, help="seed for every stochastic step")
        p.add_argument("--threads", type=int, default=None, help="worker cap (UCP_THREADS fallback)")
        p.add_argument("--dry-run", action="store_true", help="validate inputs without doing work")

    p = sub.add_parser("mine-labels", help="mine core phrases and sample negatives")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--min-freq", type=int, default=None)
    p.add_argument("--k-max", type=int, default=None)
    p.add_argument("--stopwords", help="override the bundled stopword list")
    p.add_argument("--no-negatives", action="store_true")
    common(p)
    p.set_defaults(func=cmd_mine_labels)

    p = sub.add_parser("match-gazetteer", help="distant-supervision dictionary labels")
    p.add_argument("--corpus", required=True)
    p.add_argument("--gazetteer", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k-max", type=int, default=None)
    common(p)
    p.set_defaults(func=cmd_match_gazetteer)

    p = sub.add_parser("gen-synth", help="generate a synthetic planted corpus")
    p.add_argument("--out-corpus", required=True)
    p.add_argument("--out-gold", required=True)
    p.add_argument("--out-params", required=True)
    p.add_argument("--n-docs", type=int, default=200)
    p.add_argument("--vocab-size", type=int, default=200)
    p.add_argument("--phrase-bank-size", type=int, default=40)
    p.add_argument("--delta", type=float, default=4.0)
    common(p)
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("extract-features", help="compute attention tensors into an archive")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--provider", choices=["synthetic-hash", "synthetic-planted"], default=None)
    p.add_argument("--planted-params")
    p.add_argument("--layers", type=int, default=None)
    p.add_argument("--heads", type=int, default=None)
    common(p)
    p.set_defaults(func=cmd_extract_features)

    p = sub.add_parser("train", help="train the span classifier")
    p.add_argument("--corpus", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--archive", required=True)
    p.add_argument("--out-checkpoint", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--max-epochs", type=int, default=None)
    p.add_argument("--validation-fraction", type=float, default=None)
    p.add_argument("--k-max", type=int, default=None)
    p.add_argument("--threshold", type=float, default=None)
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("tag", help="tag sentences with a trained checkpoint")
    p.add_argument("--corpus", required=True)
    p.add_argument("--archive", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--decode", choices=[tagger.OVERLAP, tagger.GREEDY], default=None)
    common(p)
    p.set_defaults(func=cmd_tag)

    p = sub.add_parser("rank", help="corpus-level phrase ranking by mean logit")
    p.add_argument("--corpus", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--top-k", type=int, default=0, help="0 = all")
    common(p)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("sample-annotation", help="emit a seeded sample for human annotation")
    p.add_argument("--ranked", required=True)
    p.add_argument("--out")
    p.add_argument("--top-k", type=int, default=5000)
    p.add_argument("--n-sample", type=int, default=200)
    p.add_argument("--annotations", help="judged file: phrase<TAB>0|1")
    p.add_argument("--out-report")
    common(p)
    p.set_defaults(func=cmd_sample_annotation)

    p = sub.add_parser("eval-kp", help="document-level keyphrase evaluation")
    p.add_argument("--corpus", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--out-report", required=True)
    p.add_argument("--top-k", type=int, default=None)
    common(p)
    p.set_defaults(func=cmd_eval_kp)

    p = sub.add_parser("eval-tagging", help="sentence-level tagging evaluation")
    p.add_argument("--predictions", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--out-report", required=True)
    common(p)
    p.set_defaults(func=cmd_eval_tagging)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = parse_config_file(args.config) if args.config else {}
        args.threads_resolved = _threads(args, config)
        return args.func(args, config)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PathError, FileNotFoundError) as exc:
        print(f"error: path: {exc}", file=sys.stderr)
        return EXIT_PATH
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_OTHER


if __name__ == "__main__":
    sys.exit(main())
