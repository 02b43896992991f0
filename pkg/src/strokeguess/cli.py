"""Command-line entry points for the batch pipeline and the live service."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import corpus as corpus_mod
from .corpus import (FileFeatureExtractor, load_feature_file, parse_corpus,
                     preprocess_corpus, split_corpus, write_corpus)
from .evaluation import (EvalConfig, metric_report_lines, metric_report_table)
from .guesser import (GuesserModel, TrainConfig, TwoPhaseModel, evaluate_two_phase,
                      evaluate_unified, train_two_phase, train_unified)
from .lexicon import CriteriaSet, accuracy_by_criteria, knn, load_lexicon, match
from .neural import load_checkpoint
from .service import GatewayApp, make_server
from .stats import analytics_report


def _load_lexicon(args):
    return load_lexicon(args.lexicon_dir)


def cmd_preprocess(args) -> int:
    lexicon = _load_lexicon(args)
    corpus = parse_corpus(args.corpus, strict=args.strict)
    cleaned, removed = preprocess_corpus(corpus, lexicon)
    write_corpus(args.out, cleaned)
    print(f"kept {len(cleaned)} sequences; removed {removed}; "
          f"skipped {corpus.skipped} malformed lines", file=sys.stderr)
    return 0


def cmd_split(args) -> int:
    corpus = parse_corpus(args.corpus, strict=True)
    ratios = tuple(float(r) for r in args.ratios.split(","))
    train, val, test = split_corpus(corpus, ratios=ratios, seed=args.seed)
    for name, part in (("train", train), ("val", val), ("test", test)):
        path = f"{args.out_prefix}.{name}.jsonl"
        write_corpus(path, part)
        print(f"{name}\t{len(part)}\t{path}")
    return 0


def cmd_analyze(args) -> int:
    corpus = parse_corpus(args.corpus, strict=True)
    fmt = "machine" if args.format == "machine" else "text"
    sys.stdout.write(analytics_report(corpus, fmt))
    return 0


def cmd_train(args) -> int:
    manifest = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
    lexicon = load_lexicon(manifest["lexicon_dir"])
    train = parse_corpus(manifest["corpus"], strict=True)
    val = parse_corpus(manifest.get("val_corpus", manifest["corpus"]), strict=True)
    cfg = TrainConfig.from_dict(manifest.get("train", {}))
    extractor = None
    if manifest.get("features"):
        extractor = FileFeatureExtractor(load_feature_file(manifest["features"]))
    log_out = manifest.get("log_out")
    if args.model == "unified":
        model = train_unified(train, val, lexicon.embeddings, cfg,
                              extractor=extractor, log_path=log_out)
    else:
        model = train_two_phase(train, val, lexicon.embeddings, cfg,
                                extractor=extractor, log_path=log_out)
    out = manifest.get("checkpoint_out", f"{args.model}.ckpt")
    model.save(out)
    print(f"checkpoint written to {out}")
    return 0


def _load_model(checkpoint, table, features_path=None):
    extractor = None
    if features_path:
        extractor = FileFeatureExtractor(load_feature_file(features_path))
    config, _, _ = load_checkpoint(checkpoint)
    if config.get("type") == "two-phase":
        return TwoPhaseModel.load(checkpoint, table, extractor=extractor)
    return GuesserModel.load(checkpoint, table, extractor=extractor)


def cmd_eval(args) -> int:
    lexicon = _load_lexicon(args)
    corpus = parse_corpus(args.corpus, strict=True)
    model = _load_model(args.checkpoint, lexicon.embeddings, args.features)
    mode = "FULL" if args.mode == "full" else "GUESS_PORTION"
    cfg = EvalConfig(k_values=tuple(int(k) for k in args.k.split(",")),
                     deltas=tuple(int(d) for d in args.delta.split(",")),
                     mode=mode)
    if isinstance(model, TwoPhaseModel):
        result = evaluate_two_phase(model, corpus, cfg)
        metrics = {"accuracy": result["accuracy"],
                   "localization": result["localization"]}
    else:
        metrics = {"accuracy": evaluate_unified(model, corpus, cfg)}
    acc = list(metrics["accuracy"].values())
    assert acc == sorted(acc), "accuracy must be non-decreasing in k"
    if "localization" in metrics:
        loc = list(metrics["localization"].values())
        assert loc == sorted(loc), "localization must be non-decreasing in delta"
    if args.format == "machine":
        print("\n".join(metric_report_lines(metrics, mode)))
    else:
        sys.stdout.write(metric_report_table(metrics, mode))
    return 0


def cmd_match(args) -> int:
    lexicon = _load_lexicon(args)
    criteria = CriteriaSet.parse(args.criteria)
    pairs = []
    with open(args.pairs, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line.strip():
                continue
            guess, truth = line.split("\t")
            pairs.append((guess, truth))
    hits = 0
    for i, (guess, truth) in enumerate(pairs):
        ok, fired = match(guess, truth, lexicon.taxonomy, criteria)
        hits += ok
        if args.format == "machine":
            print(f"match\t{i}\t{int(ok)}\t{','.join(sorted(fired))}")
        else:
            mark = "Y" if ok else "n"
            print(f"{mark}  {guess!r} vs {truth!r}  [{', '.join(sorted(fired))}]")
    accuracy = hits / len(pairs) if pairs else 0.0
    if args.format == "machine":
        print(f"accuracy\t{criteria}\t{accuracy:.6f}")
    else:
        print(f"accuracy under {criteria}: {accuracy:.4f}")
    return 0


def cmd_knn(args) -> int:
    lexicon = _load_lexicon(args)
    table = lexicon.embeddings
    if args.word:
        query = table.vector(args.word)
    else:
        query = np.asarray([float(v) for v in args.vector.split(",")])
    for word, dist in knn(table, query, args.k):
        if args.format == "machine":
            print(f"knn\t{word}\t{dist:.6f}")
        else:
            print(f"{word:<16} {dist:.4f}")
    return 0


def cmd_serve(args) -> int:
    lexicon = _load_lexicon(args)
    corpus = parse_corpus(args.corpus, strict=True)
    model = None
    if args.checkpoint:
        model = _load_model(args.checkpoint, lexicon.embeddings, args.features)
    app = GatewayApp(corpus, lexicon, model=model, seed=args.seed,
                     criteria=CriteriaSet.parse(args.criteria),
                     store_path=args.store)
    server = make_server(app, port=args.port, host=args.host, ui_dir=args.ui_dir)
    print(f"serving on http://{args.host}:{server.server_address[1]}/ "
          f"({len(corpus)} sketches, model={'yes' if model else 'no'})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def cmd_export(args) -> int:
    lexicon = _load_lexicon(args)
    corpus = parse_corpus(args.corpus, strict=True)
    app = GatewayApp(corpus, lexicon, model=None, store_path=args.store)
    result = app.export_sessions(args.category)
    Path(args.out_corpus).write_text(result["corpus"], encoding="utf-8")
    Path(args.out_ratings).write_text(result["ratings"], encoding="utf-8")
    print(f"exported {result['corpus'].count(chr(10))} sessions")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="strokeguess",
        description="Sketch word-guessing pipeline and live game service")
    parser.add_argument("--seed", type=int, default=0, help="global random seed")
    parser.add_argument("--format", choices=("text", "machine"), default="text")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="normalize a raw corpus file")
    p.add_argument("--corpus", required=True)
    p.add_argument("--lexicon-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("split", help="deterministic train/val/test split")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--ratios", default="0.60,0.25,0.15")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("analyze", help="guess-count and first-guess analytics")
    p.add_argument("--corpus", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("train", help="train a guessing model from a manifest")
    p.add_argument("--model", choices=("unified", "two-phase"), default="unified")
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a corpus")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--lexicon-dir", required=True)
    p.add_argument("--features", default=None)
    p.add_argument("--mode", choices=("guess-portion", "full"), default="guess-portion")
    p.add_argument("--k", default="1,3,5")
    p.add_argument("--delta", default="0,1,2")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("match", help="score a guess/truth pair file")
    p.add_argument("--pairs", required=True, help="TSV lines: guess<TAB>truth")
    p.add_argument("--lexicon-dir", required=True)
    p.add_argument("--criteria", default="EM|SUB|SYN")
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("knn", help="nearest embedding neighbors")
    p.add_argument("--lexicon-dir", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--word")
    group.add_argument("--vector", help="comma-separated floats")
    p.add_argument("-k", type=int, default=5)
    p.set_defaults(func=cmd_knn)

    p = sub.add_parser("serve", help="run the live guessing-game service")
    p.add_argument("--port", type=int, default=8337)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--corpus", required=True)
    p.add_argument("--lexicon-dir", required=True)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--features", default=None)
    p.add_argument("--criteria", default="EM|SUB|SYN")
    p.add_argument("--store", default=None, help="append-only session log")
    p.add_argument("--ui-dir", default=None, help="serve a static client from here")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("export", help="export sessions from a session log")
    p.add_argument("--corpus", required=True)
    p.add_argument("--lexicon-dir", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--out-corpus", required=True)
    p.add_argument("--out-ratings", required=True)
    p.add_argument("--category", default=None)
    p.set_defaults(func=cmd_export)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (corpus_mod.CorpusError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
