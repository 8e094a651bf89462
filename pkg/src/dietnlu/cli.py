"""Command-line workflows: dataset statistics, training, cross-validation,
evaluation, single-utterance prediction, and corpus shift analysis.

Exit codes: 0 success, 1 usage error, 2 data or format error, 3 numeric
failure. Human-readable output goes to stdout, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
import zipfile
from pathlib import Path

import numpy as np

from .corpus import (
    DatasetError,
    compute_stats,
    load_dataset,
    tokenize,
    tokenize_with_spans,
)
from .diet import load_model, model_kinds, save_model
from .evaluation import error_listing, evaluate, render_error_table, shift_report
from .featurizer import (
    DenseProvider,
    DnseFormatError,
    SentenceKeyError,
    featurize,
    load_dense_file,
)
from .trainer import FeatConfig, TrainConfig, cross_validate, train

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class NumericFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad flags; the exit-code contract
    # reserves 2 for data errors, so route flag problems through UsageError
    def error(self, message):
        raise UsageError(message)


def parse_dense(spec: str) -> DenseProvider | None:
    """--dense flag: hash:DIM:SEED, file:PATH, or none."""
    if spec == "none":
        return None
    if spec.startswith("hash:"):
        parts = spec.split(":")
        if len(parts) != 3:
            raise UsageError(f"bad dense spec {spec!r}; expected hash:DIM:SEED")
        try:
            dim, seed = int(parts[1]), int(parts[2])
        except ValueError:
            raise UsageError(f"bad dense spec {spec!r}; DIM and SEED must be "
                             "integers") from None
        return DenseProvider.hash(dim, seed)
    if spec.startswith("file:"):
        return load_dense_file(spec[len("file:"):])
    raise UsageError(f"bad dense spec {spec!r}; expected hash:DIM:SEED, "
                     "file:PATH, or none")


def _require_dense_combo(kind: str, provider: DenseProvider | None) -> None:
    if kind == "tf_baseline" and provider is None:
        raise UsageError("tf_baseline uses dense features only; "
                         "pass --dense hash:DIM:SEED or file:PATH")


def _check_finite(values, what: str) -> None:
    arr = np.asarray(list(values), dtype=float)
    if arr.size and not np.all(np.isfinite(arr)):
        raise NumericFailure(f"non-finite {what}; try a lower --lr")


def _load_model(path: str):
    try:
        return load_model(path)
    except (OSError, ValueError, KeyError, zipfile.BadZipFile) as exc:
        raise DataError(f"cannot load model {path}: {exc}") from exc


def _resolve_provider(stored: DenseProvider | None, flag: str | None,
                      model_path: str) -> DenseProvider | None:
    """Stored provider by default; an explicit --dense must match its
    fingerprint so stale or wrong embedding files fail fast."""
    if flag is None:
        return stored
    supplied = parse_dense(flag)
    if stored is None:
        if supplied is None:
            return None
        raise DataError(f"model {model_path} was trained without dense "
                        "features; drop --dense")
    if supplied is None:
        raise DataError(f"model {model_path} requires a dense provider "
                        f"(fingerprint {stored.fingerprint()[:12]})")
    if supplied.fingerprint() != stored.fingerprint():
        raise DataError(
            f"dense provider fingerprint mismatch for model {model_path}: "
            f"model has {stored.fingerprint()[:12]}, "
            f"--dense gives {supplied.fingerprint()[:12]}")
    return supplied


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        model_kind=args.model,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
        balanced_batching=not args.no_balanced,
        early_stop_patience=args.patience,
        lr=args.lr,
    )


def _feat_config(args) -> FeatConfig:
    return FeatConfig(ngram_max=args.ngram_max, min_freq=args.min_freq)


def _predict_intents(model, spec, provider, ds) -> list[str]:
    bundles = []
    for u in ds.utterances:
        tokens = tokenize(u.text)
        if not tokens:
            raise DatasetError(f"utterance {u.id!r} has no usable tokens")
        bundles.append(featurize(spec, provider, tokens, u.text))
    return model.predict_intents(bundles)


# --------------------------------------------------------------------------
# subcommands


def cmd_stats(args) -> int:
    ds = load_dataset(args.data)
    stats = compute_stats(ds)
    dist: dict[str, int] = {}
    for u in ds.utterances:
        dist[u.intent] = dist.get(u.intent, 0) + 1
    if args.json:
        print(json.dumps({"name": ds.name, "stats": stats.to_dict(),
                          "class_distribution": dist}, sort_keys=True))
        return EXIT_OK
    print(f"dataset: {ds.name}")
    for key, value in stats.to_dict().items():
        shown = f"{value:.2f}" if isinstance(value, float) else value
        print(f"  {key:<24} {shown}")
    print("class distribution:")
    for intent in sorted(dist, key=lambda i: (-dist[i], i)):
        share = dist[intent] / stats.n_samples
        print(f"  {intent:<24} {dist[intent]:>6}  {share:6.1%}")
    return EXIT_OK


def cmd_train(args) -> int:
    ds = load_dataset(args.data)
    provider = parse_dense(args.dense)
    _require_dense_combo(args.model, provider)
    result = train(ds, _train_config(args), _feat_config(args), provider)
    _check_finite(result.loss_history, "training loss")
    save_model(args.out, result.model, result.spec, result.provider)
    print(f"trained {args.model} on {ds.n_samples} samples "
          f"({len(result.loss_history)} epochs, final loss "
          f"{result.loss_history[-1]:.4f}) -> {args.out}")
    return EXIT_OK


def cmd_crossval(args) -> int:
    ds = load_dataset(args.data)
    provider = parse_dense(args.dense)
    _require_dense_combo(args.model, provider)
    report = cross_validate(ds, k=args.folds, runs=args.runs,
                            cfg=_train_config(args),
                            feat_cfg=_feat_config(args), provider=provider)
    _check_finite(report.per_run_scores, "cross-validation scores")
    Path(args.out).write_text(report.to_json(), encoding="utf-8")
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"{args.model}: {100 * report.mean_micro_f1:.2f} "
          f"± {100 * report.std_micro_f1:.2f} micro F1 "
          f"({args.runs} runs of {args.folds}-fold CV)")
    return EXIT_OK


def cmd_eval(args) -> int:
    model, spec, provider = _load_model(args.model)
    provider = _resolve_provider(provider, args.dense, args.model)
    ds = load_dataset(args.data)
    preds = _predict_intents(model, spec, provider, ds)
    gold = [u.intent for u in ds.utterances]
    report = evaluate(gold, preds, texts=[u.text for u in ds.utterances])
    _check_finite([report.micro_f1], "evaluation score")
    Path(args.out).write_text(
        json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n",
        encoding="utf-8")
    print(f"micro F1 {100 * report.micro_f1:.2f} on {ds.n_samples} samples "
          f"({len(report.errors)} errors) -> {args.out}")
    if args.errors and report.errors:
        print(render_error_table(error_listing(ds, preds)))
    return EXIT_OK


def cmd_predict(args) -> int:
    model, spec, provider = _load_model(args.model)
    provider = _resolve_provider(provider, args.dense, args.model)
    tokens = tokenize(args.text)
    if not tokens:
        raise DatasetError(f"no usable tokens in {args.text!r}")
    bundle = featurize(spec, provider, tokens, args.text)
    pred = model.predict(bundle, token_spans=tokenize_with_spans(args.text))
    print(json.dumps({
        "text": args.text,
        "ranking": [{"intent": name, "confidence": conf}
                    for name, conf in pred.ranking],
        "entities": pred.entities,
    }, sort_keys=True))
    return EXIT_OK


def cmd_shift(args) -> int:
    ds_a = load_dataset(args.a)
    ds_b = load_dataset(args.b)
    report = shift_report(ds_a, ds_b, oos_label=args.oos)
    Path(args.out).write_text(
        json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n",
        encoding="utf-8")
    for label, side in ((ds_a.name, report.a), (ds_b.name, report.b)):
        print(f"{label}: {side.n_samples} samples, vocab {side.vocab_size}, "
              f"avg words {side.avg_words:.2f}, "
              f"out-of-scope share {side.oos_share:.4f}")
    print(f"unseen going a->b: {', '.join(report.unseen_a_to_b) or '(none)'}")
    print(f"unseen going b->a: {', '.join(report.unseen_b_to_a) or '(none)'}")
    print(f"class distribution divergence: {report.class_divergence:.4f}")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def _add_train_flags(sub) -> None:
    sub.add_argument("--epochs", type=int, default=100)
    sub.add_argument("--batch-size", type=int, default=32)
    sub.add_argument("--lr", type=float, default=1e-3)
    sub.add_argument("--patience", type=int, default=None,
                     help="early-stop after this many epochs without improvement")
    sub.add_argument("--no-balanced", action="store_true",
                     help="plain shuffled batches instead of class-balanced ones")
    sub.add_argument("--ngram-max", type=int, default=4)
    sub.add_argument("--min-freq", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dietnlu",
                     description="intent and entity recognition workbench")
    subs = parser.add_subparsers(dest="command", required=True,
                                 parser_class=_Parser)

    p = subs.add_parser("stats", help="dataset statistics")
    p.add_argument("--data", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_stats)

    p = subs.add_parser("train", help="train a model")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True, choices=model_kinds())
    p.add_argument("--dense", default="none",
                   help="hash:DIM:SEED, file:PATH, or none")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = subs.add_parser("crossval", help="runs x k-fold cross-validation")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True, choices=model_kinds())
    p.add_argument("--dense", default="none",
                   help="hash:DIM:SEED, file:PATH, or none")
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--runs", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    _add_train_flags(p)
    p.set_defaults(func=cmd_crossval)

    p = subs.add_parser("eval", help="score a trained model on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--errors", action="store_true",
                   help="print a table of misclassified utterances")
    p.add_argument("--dense", default=None,
                   help="verify against the provider baked into the model")
    p.set_defaults(func=cmd_eval)

    p = subs.add_parser("predict", help="classify one utterance")
    p.add_argument("--model", required=True)
    p.add_argument("--text", required=True)
    p.add_argument("--dense", default=None,
                   help="verify against the provider baked into the model")
    p.set_defaults(func=cmd_predict)

    p = subs.add_parser("shift", help="compare two corpora")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--oos", default="out-of-scope",
                   help="label treated as out of scope")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_shift)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DatasetError, DataError, DnseFormatError, SentenceKeyError,
            FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericFailure as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
