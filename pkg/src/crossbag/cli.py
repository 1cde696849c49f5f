"""Single entry point for the whole pipeline.

Subcommands::

    synth          generate the synthetic noisy-label benchmark corpora
    ingest         parse corpora, report drop/bag/superbag statistics
    train          train a relation extractor, write checkpoint + metrics
    eval-corpus    held-out PR curve (CSV + PNG) against gold facts
    eval-sentence  per-sentence micro precision/recall/F1
    inspect        attention case-study report for a few superbags
    gradcheck      finite-difference check of every backward pass

All behavior is driven by a flat JSON config (``--config``); ``--seed``,
``--mode``, and ``--scoring`` override it. Exit codes: 0 success, 2 for
usage or config schema violations, 1 otherwise.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

from . import checkpoint as ckpt
from . import config as config_mod
from . import report
from .data import (
    RelationSchema,
    assemble_superbags,
    build_bags,
    corpus_gold_facts,
    corpus_pairs,
    load_word_vectors,
    parse_corpus,
    scan_relation_names,
)
from .errors import ConfigError, ParseError, SchemaError
from .evaluation import inspect_attention, pr_curve, score_corpus, sentence_f1
from .gradcheck import run_standard_checks
from .numeric import SeededRng
from .synthetic import generate_synthetic, spec_from_config, write_corpora
from .training import train


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crossbag", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file (all keys optional)")
        p.add_argument("--seed", type=int, help="override config seed")
        p.add_argument("--mode", choices=["ATT", "CRSA", "C2SA"],
                       help="override config mode")
        p.add_argument("--scoring", choices=["cosine", "dot"],
                       help="override config scoring")
        p.add_argument("--out", help="override config out_dir")
        return p

    p = common(sub.add_parser("synth", help="generate synthetic corpora"))
    p.set_defaults(func=cmd_synth)

    for name, func in (("ingest", cmd_ingest), ("train", cmd_train)):
        p = common(sub.add_parser(name))
        p.add_argument("--train-corpus", dest="train_corpus")
        p.add_argument("--word-vectors", dest="word_vectors")
        p.add_argument("--relations", help="relation-name file, one per line")
        if name == "train":
            p.add_argument("--dev-corpus", dest="dev_corpus",
                           help="evaluate sentence F1 on this corpus per epoch")
        p.set_defaults(func=func)

    for name, func in (("eval-corpus", cmd_eval_corpus),
                       ("eval-sentence", cmd_eval_sentence)):
        p = common(sub.add_parser(name))
        p.add_argument("--test-corpus", dest="test_corpus")
        p.add_argument("--train-corpus", dest="train_corpus")
        p.add_argument("--checkpoint", help="checkpoint directory "
                                            "(default <out_dir>/checkpoint)")
        p.set_defaults(func=func)

    p = common(sub.add_parser("inspect", help="attention case-study report"))
    p.add_argument("--train-corpus", dest="train_corpus")
    p.add_argument("--checkpoint")
    p.add_argument("--count", type=int, default=3, help="superbags to report")
    p.set_defaults(func=cmd_inspect)

    p = common(sub.add_parser("gradcheck", help="finite-difference CI hook"))
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def _configure(args) -> config_mod.Config:
    cfg = config_mod.load_config(args.config)
    for key in ("seed", "mode", "scoring"):
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, value)
    if getattr(args, "out", None):
        cfg.out_dir = args.out
    for key in ("train_corpus", "test_corpus", "dev_corpus", "word_vectors",
                "relations"):
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, value)
    return config_mod.validate(cfg)


def _require(cfg, key):
    value = getattr(cfg, key)
    if value is None:
        raise ConfigError(f"{key}: required by this subcommand "
                          f"(set it in the config or pass the flag)")
    return value


def _schema_for(cfg, corpus_path) -> RelationSchema:
    if cfg.relations:
        return RelationSchema.from_file(cfg.relations)
    return RelationSchema(scan_relation_names(corpus_path))


def _load_training_inputs(cfg):
    vectors_path = _require(cfg, "word_vectors")
    corpus_path = _require(cfg, "train_corpus")
    rng = SeededRng(cfg.seed)
    vocab, emb = load_word_vectors(vectors_path, rng, expected_dim=cfg.word_dim)
    schema = _schema_for(cfg, corpus_path)
    parsed = parse_corpus(corpus_path, vocab, schema, cfg.max_len, cfg.clip)
    bags = build_bags(parsed.sentences, cfg.max_bag_size, rng)
    return vocab, emb, schema, parsed, bags


def cmd_synth(cfg, args) -> int:
    data = generate_synthetic(spec_from_config(cfg))
    paths = write_corpora(data, cfg.out_dir, cfg.word_dim, cfg.seed)
    print(f"wrote {len(data.train_lines)} train / {len(data.test_lines)} test "
          f"sentences, {len(data.gold_facts)} gold facts, "
          f"{len(data.noisy_train_pairs)} fully-noisy bags")
    for name, path in sorted(paths.items()):
        print(f"  {name}: {path}")
    return 0


def cmd_ingest(cfg, args) -> int:
    vocab, _, schema, parsed, bags = _load_training_inputs(cfg)
    n_s = cfg.superbag_size if cfg.mode == "C2SA" else 1
    superbags = assemble_superbags(bags, n_s, SeededRng(cfg.seed),
                                   na_ratio=cfg.na_ratio)
    text = report.ingest_report(parsed.stats, bags, superbags)
    text += f"\nvocabulary size        {len(vocab)}\nrelations              {len(schema)}"
    os.makedirs(cfg.out_dir, exist_ok=True)
    out_path = os.path.join(cfg.out_dir, "ingest_report.txt")
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(text + "\n")
    print(text)
    print(f"report written to {out_path}")
    return 0


def cmd_train(cfg, args) -> int:
    vocab, emb, schema, parsed, bags = _load_training_inputs(cfg)
    dev_eval = None
    if cfg.dev_corpus:
        dev = parse_corpus(cfg.dev_corpus, vocab, schema, cfg.max_len, cfg.clip)
        dev_eval = lambda params: sentence_f1(params, dev.sentences)[2]
    result = train(cfg, bags, emb, n_relations=len(schema), dev_eval=dev_eval)

    os.makedirs(cfg.out_dir, exist_ok=True)
    ckpt_dir = os.path.join(cfg.out_dir, "checkpoint")
    ckpt.save_checkpoint(ckpt_dir, result.params, vocab, schema,
                         cfg.mode, cfg.scoring, cfg.seed, cfg.epochs)

    metrics_path = os.path.join(cfg.out_dir, "metrics.csv")
    with open(metrics_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mean_loss", "dev_f1"])
        for m in result.metrics:
            writer.writerow([m.epoch, repr(m.mean_loss),
                             "" if m.dev_f1 is None else repr(m.dev_f1)])
    # wall time lives in its own file so metrics.csv is bit-reproducible
    with open(os.path.join(cfg.out_dir, "timing.csv"), "w", encoding="utf-8",
              newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "wall_s"])
        for m in result.metrics:
            writer.writerow([m.epoch, f"{m.wall_s:.3f}"])
    if cfg.figures:
        report.save_loss_figure(result.metrics,
                                os.path.join(cfg.out_dir, "loss_curve.png"),
                                title=f"Training loss ({cfg.mode}, {cfg.scoring})")
    print(f"trained {cfg.mode}/{cfg.scoring} for {cfg.epochs} epochs; "
          f"final mean loss {result.metrics[-1].mean_loss:.4f}")
    print(f"checkpoint: {ckpt_dir}")
    print(f"metrics: {metrics_path}")
    return 0


def _load_checkpoint_for_eval(cfg, args):
    path = getattr(args, "checkpoint", None) or os.path.join(cfg.out_dir, "checkpoint")
    model, vocab, schema, manifest = ckpt.load_checkpoint(path)
    return model, vocab, schema, manifest


def cmd_eval_corpus(cfg, args) -> int:
    model, vocab, schema, manifest = _load_checkpoint_for_eval(cfg, args)
    test_path = _require(cfg, "test_corpus")
    parsed = parse_corpus(test_path, vocab, schema, manifest["dims"]["m"],
                          manifest["dims"]["clip"])
    gold = corpus_gold_facts(test_path, schema)
    predictions = score_corpus(model, parsed.sentences)
    if cfg.exclude_train_pairs:
        train_path = _require(cfg, "train_corpus")
        seen = corpus_pairs(train_path)
        predictions = [p for p in predictions if p.pair_key not in seen]
        gold = {fact for fact in gold if fact[0] not in seen}
    if not gold:
        raise ConfigError("test_corpus: no non-NA gold facts to evaluate against")
    curve = pr_curve(predictions, gold, p_at_n=cfg.p_at_n)

    os.makedirs(cfg.out_dir, exist_ok=True)
    curve_path = os.path.join(cfg.out_dir, "pr_curve.csv")
    with open(curve_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(curve.csv_rows()) + "\n")
    at_n_path = os.path.join(cfg.out_dir, "pr_at_n.csv")
    with open(at_n_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(curve.p_at_n_rows()) + "\n")
    if cfg.figures:
        report.save_pr_figure(curve, os.path.join(cfg.out_dir, "pr_curve.png"),
                              title=f"Held-out PR ({manifest['mode']})")
    summary = ", ".join(f"P@{n}={curve.p_at_n[n]:.3f}" for n in sorted(curve.p_at_n))
    print(f"AUC={curve.auc:.4f}, {summary}, gold={curve.total_gold}")
    print(f"curve: {curve_path}")
    return 0


def cmd_eval_sentence(cfg, args) -> int:
    model, vocab, schema, manifest = _load_checkpoint_for_eval(cfg, args)
    test_path = _require(cfg, "test_corpus")
    parsed = parse_corpus(test_path, vocab, schema, manifest["dims"]["m"],
                          manifest["dims"]["clip"])
    precision, recall, f1 = sentence_f1(model, parsed.sentences)
    print(f"precision={precision:.4f} recall={recall:.4f} f1={f1:.4f}")
    return 0


def cmd_inspect(cfg, args) -> int:
    model, vocab, schema, manifest = _load_checkpoint_for_eval(cfg, args)
    corpus_path = _require(cfg, "train_corpus")
    parsed = parse_corpus(corpus_path, vocab, schema, manifest["dims"]["m"],
                          manifest["dims"]["clip"])
    rng = SeededRng(cfg.seed)
    bags = build_bags(parsed.sentences, cfg.max_bag_size, rng)
    n_s = cfg.superbag_size if manifest["mode"] == "C2SA" else 1
    superbags = assemble_superbags(bags, n_s, rng, na_ratio=cfg.na_ratio)
    reports = []
    for sb in superbags[:max(args.count, 0)]:
        reports.append(inspect_attention(model, sb, manifest["mode"],
                                         manifest["scoring"],
                                         relation_names=schema.id_to_name))
    text = "\n\n".join(reports) if reports else "no superbags to inspect"
    os.makedirs(cfg.out_dir, exist_ok=True)
    out_path = os.path.join(cfg.out_dir, "attention_report.txt")
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(text + "\n")
    print(text)
    return 0


def cmd_gradcheck(cfg, args) -> int:
    ok, text = run_standard_checks(tol=args.tol)
    print(text)
    return 0 if ok else 1


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = _configure(args)
        return args.func(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ParseError, SchemaError, ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
