"""Command-line interface: gen-data, train-classifier, train-summarizer,
summarize, evaluate, ablate.

Every command writes its outputs plus a manifest tying them to the config
hash, the seed, and sha256 digests of all inputs.  Outputs contain no
timestamps, so reruns with the same config and seed are byte-identical.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import replace
from pathlib import Path

from .classifier import ClassifierConfig, ClassifierModel, train_classifier
from .config import (
    ConfigFileError,
    ExperimentConfig,
    RunLock,
    apply_overrides,
    load_config,
    sha256_file,
    write_manifest,
)
from .data import DataError, expand_prefixes, load_jsonl, save_jsonl
from .decoding import BeamConfig, conditioned_beam_search, summary_tokens
from .experiment import run_ablation, save_ablation, sentences_to_prefixes
from .metrics import corpus_report
from .rng import RngState
from .summarizer import ConditioningWeights, SummarizerModel, train_summarizer
from .vocab import Vocabulary, tokenize


def _args_hash(args: dict) -> str:
    canon = json.dumps(args, sort_keys=True, default=str)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def _load_experiment_config(path: str | None, overrides: list[str]) -> ExperimentConfig:
    config = load_config(path) if path else ExperimentConfig()
    pairs = {}
    for item in overrides:
        if "=" not in item:
            raise ConfigFileError(f"--set expects section.key=value, got {item!r}")
        key, value = item.split("=", 1)
        pairs[key.strip()] = value.strip()
    return apply_overrides(config, pairs)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_gen_data(args: argparse.Namespace) -> int:
    config = _load_experiment_config(args.config, args.set or [])
    out_dir = Path(args.out_dir)
    with RunLock(out_dir):
        from .experiment import build_corpus

        bundle = build_corpus(config, RngState(config.experiment.seed).split())
        out_dir.mkdir(parents=True, exist_ok=True)
        outputs = []
        for name, clusters in (("train", bundle.train), ("val", bundle.val), ("test", bundle.test)):
            path = out_dir / f"{name}.jsonl"
            save_jsonl(clusters, path)
            outputs.append(path)
        vocab_path = out_dir / "vocab.txt"
        bundle.vocab.save(vocab_path)
        outputs.append(vocab_path)
        clf_path = out_dir / "classifier.jsonl"
        with open(clf_path, "w", encoding="utf-8") as fh:
            for text, label in bundle.sentences:
                fh.write(json.dumps({"text": text, "label": label}, sort_keys=True) + "\n")
        outputs.append(clf_path)
        config_path = out_dir / "config.ini"
        config.save(config_path)
        outputs.append(config_path)
        write_manifest(
            out_dir / "manifest.json", config.hash(), config.experiment.seed, [], outputs
        )
    print(f"wrote {len(outputs)} files to {out_dir}")
    return 0


def _read_classifier_jsonl(path: str) -> list[tuple[str, int]]:
    sentences = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                sentences.append((record["text"], int(record["label"])))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise DataError(f"{path}:{lineno}: bad classifier record ({exc})") from exc
    return sentences


def cmd_train_classifier(args: argparse.Namespace) -> int:
    vocab = Vocabulary.load(args.vocab)
    sentences = _read_classifier_jsonl(args.data)
    prefixes = sentences_to_prefixes(sentences, vocab)
    config = ClassifierConfig(classes=args.classes, epochs=args.epochs, lr=args.lr)
    model, report = train_classifier(prefixes, config, RngState(args.seed), len(vocab))
    model.save(args.out)
    print(
        f"classifier accuracy train={report.train_accuracy:.4f} "
        f"val={report.val_accuracy:.4f} test={report.test_accuracy:.4f}"
    )
    write_manifest(
        Path(args.out).with_suffix(".manifest.json"),
        _args_hash(vars(args)),
        args.seed,
        [args.data, args.vocab],
        [args.out],
    )
    return 0


def cmd_train_summarizer(args: argparse.Namespace) -> int:
    vocab = Vocabulary.load(args.vocab)
    clusters = load_jsonl(args.corpus, vocab)
    val = load_jsonl(args.val, vocab) if args.val else None
    weights = ConditioningWeights(args.alpha1, args.alpha2, args.alpha3)
    classifier = ClassifierModel.load(args.classifier) if args.classifier else None
    config = ExperimentConfig().summarizer_config()
    config = replace(config, epochs=args.epochs, lr=args.lr)
    model, history = train_summarizer(
        clusters,
        config,
        RngState(args.seed),
        len(vocab),
        classifier=classifier,
        target_class=args.attribute,
        weights=weights,
        val_clusters=val,
    )
    model.save(args.out)
    print(
        f"summarizer trained {len(history.train_losses)} epochs; "
        f"best val loss {history.best_val:.4f} at epoch {history.best_epoch}"
    )
    inputs = [args.corpus, args.vocab] + ([args.classifier] if args.classifier else [])
    write_manifest(
        Path(args.out).with_suffix(".manifest.json"),
        _args_hash(vars(args)),
        args.seed,
        inputs,
        [args.out],
    )
    return 0


def cmd_summarize(args: argparse.Namespace) -> int:
    vocab = Vocabulary.load(args.vocab)
    model = SummarizerModel.load(args.model)
    classifier = ClassifierModel.load(args.classifier) if args.classifier else None
    clusters = load_jsonl(args.input, vocab)
    beam = BeamConfig(
        beam_width=args.beam,
        shortlist_k=args.shortlist,
        max_steps=args.max_steps,
        length_penalty=args.length_penalty,
        alpha1=args.alpha1,
    )
    if beam.alpha1 > 0 and classifier is None:
        raise DataError("--alpha1 > 0 requires --classifier")
    out_path = Path(args.out)
    with open(out_path, "w", encoding="utf-8") as fh:
        for cluster in clusters:
            best = conditioned_beam_search(model, cluster, beam, classifier, args.attribute)
            record = {
                "summary": vocab.decode(summary_tokens(best)),
                "base_lp": best.base_lp,
                "attr_lp": best.attr_lp,
            }
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    inputs = [args.input, args.vocab, args.model] + (
        [args.classifier] if args.classifier else []
    )
    write_manifest(
        out_path.with_suffix(".manifest.json"),
        _args_hash(vars(args)),
        0,
        inputs,
        [out_path],
    )
    print(f"decoded {len(clusters)} clusters -> {out_path}")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    vocab = Vocabulary.load(args.vocab)
    candidates = []
    with open(args.candidates, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                candidates.append(tokenize(json.loads(line)["summary"], vocab))
    references = [c.reference_summary or [] for c in load_jsonl(args.references, vocab)]
    classifier = ClassifierModel.load(args.classifier) if args.classifier else None
    report = corpus_report(candidates, references, classifier, args.attribute)
    Path(args.out).write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(report.table())
    inputs = [args.candidates, args.references, args.vocab] + (
        [args.classifier] if args.classifier else []
    )
    write_manifest(
        Path(args.out).with_suffix(".manifest.json"),
        _args_hash(vars(args)),
        0,
        inputs,
        [args.out],
    )
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    config = _load_experiment_config(args.config, args.set or [])
    out_dir = Path(args.out_dir)
    with RunLock(out_dir):
        artifacts = run_ablation(config)
        outputs = save_ablation(artifacts, out_dir)
        config_path = out_dir / "config.ini"
        config.save(config_path)
        outputs.append(config_path)
        write_manifest(
            out_dir / "manifest.json", config.hash(), config.experiment.seed, [], outputs
        )
    print(artifacts.report.table())
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="acmsum",
        description="Attribute-conditioned multi-document summarization experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic corpus with splits")
    p.add_argument("--config", help="experiment config file")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                   help="override a config value")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train-classifier", help="train the prefix attribute classifier")
    p.add_argument("--data", required=True, help="jsonl with {text, label} records")
    p.add_argument("--vocab", required=True)
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--epochs", type=int, default=6)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train_classifier)

    p = sub.add_parser("train-summarizer", help="train the conditioned summarizer")
    p.add_argument("--corpus", required=True, help="training clusters jsonl")
    p.add_argument("--val", help="validation clusters jsonl")
    p.add_argument("--vocab", required=True)
    p.add_argument("--classifier", help="classifier checkpoint (needed if alpha2/alpha3 > 0)")
    p.add_argument("--attribute", type=int, default=0, help="conditioning class id")
    p.add_argument("--alpha1", type=float, default=0.22)
    p.add_argument("--alpha2", type=float, default=0.4)
    p.add_argument("--alpha3", type=float, default=0.01)
    p.add_argument("--epochs", type=int, default=40)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train_summarizer)

    p = sub.add_parser("summarize", help="beam-search decode clusters")
    p.add_argument("--model", required=True)
    p.add_argument("--classifier")
    p.add_argument("--attribute", type=int, default=0)
    p.add_argument("--input", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--beam", type=int, default=5)
    p.add_argument("--shortlist", type=int, default=200)
    p.add_argument("--max-steps", type=int, default=32)
    p.add_argument("--alpha1", type=float, default=0.22)
    p.add_argument("--length-penalty", type=float, default=0.6)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_summarize)

    p = sub.add_parser("evaluate", help="ROUGE and consistency report")
    p.add_argument("--candidates", required=True, help="summarize output jsonl")
    p.add_argument("--references", required=True, help="cluster jsonl with summaries")
    p.add_argument("--vocab", required=True)
    p.add_argument("--classifier")
    p.add_argument("--attribute", type=int, default=None)
    p.add_argument("--out", required=True, help="report json path")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("ablate", help="train and compare all conditioning variants")
    p.add_argument("--config", help="experiment config file")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                   help="override a config value")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(fn=cmd_ablate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigFileError, DataError, FileNotFoundError, KeyError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
