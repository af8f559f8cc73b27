"""End-to-end experiment orchestration: corpus, classifier, summarizer
variants, decoding, and the ablation report.

The ablation trains four summarizers (baseline, graph weighting only,
conditional training only, both) from one shared init seed, then decodes
the test split under five variants; future discriminators reuse the
baseline model with the discriminator enabled at decode time only.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

from .classifier import ClassifierModel, TrainReport, train_classifier
from .config import ExperimentConfig
from .data import DocumentCluster, expand_prefixes, load_jsonl
from .decoding import AblationReport, ablate
from .rng import RngState
from .summarizer import ConditioningWeights, SummarizerModel, TrainHistory, train_summarizer
from .synthetic import SyntheticConfig, generate_synthetic_corpus
from .vocab import Vocabulary, tokenize

VARIANT_ORDER = (
    "baseline",
    "graph_weighting",
    "conditional_training",
    "future_discriminators",
    "full_acm",
)


@dataclass
class CorpusBundle:
    vocab: Vocabulary
    train: list[DocumentCluster]
    val: list[DocumentCluster]
    test: list[DocumentCluster]
    sentences: list[tuple[str, int]]  # labeled classifier sentences


def build_corpus(config: ExperimentConfig, rng: RngState) -> CorpusBundle:
    meta = config.experiment
    if config.data.source == "synthetic":
        total = meta.train_clusters + meta.val_clusters + meta.test_clusters
        syn = replace(config.corpus, clusters=total)
        corpus = generate_synthetic_corpus(syn, rng)
        train = corpus.clusters[: meta.train_clusters]
        val = corpus.clusters[meta.train_clusters : meta.train_clusters + meta.val_clusters]
        test = corpus.clusters[meta.train_clusters + meta.val_clusters :]
        return CorpusBundle(corpus.vocab, train, val, test, corpus.sentences)
    if config.data.source == "jsonl":
        vocab = Vocabulary.load(config.data.train_path + ".vocab.txt")
        train = load_jsonl(config.data.train_path, vocab)
        val = load_jsonl(config.data.val_path, vocab) if config.data.val_path else []
        test = load_jsonl(config.data.test_path, vocab) if config.data.test_path else []
        sentences = []  # classifier data must come from labeled paragraphs
        for cluster in train:
            for i in range(cluster.L):
                label = cluster.paragraph_label(i)
                if label is not None:
                    sentences.append((vocab.decode(cluster.paragraph_tokens(i)), label))
        return CorpusBundle(vocab, train, val, test, sentences)
    raise ValueError(f"unknown corpus source {config.data.source!r}")


def sentences_to_prefixes(sentences: list[tuple[str, int]], vocab: Vocabulary):
    prefixes = []
    for text, label in sentences:
        ids = tokenize(text, vocab)
        if ids:
            prefixes.extend(expand_prefixes(ids, label))
    return prefixes


def train_pipeline_classifier(
    bundle: CorpusBundle, config: ExperimentConfig, rng: RngState
) -> tuple[ClassifierModel, TrainReport]:
    prefixes = sentences_to_prefixes(bundle.sentences, bundle.vocab)
    return train_classifier(prefixes, config.classifier, rng, len(bundle.vocab))


def _variant_weights(config: ExperimentConfig) -> dict[str, ConditioningWeights]:
    w = config.conditioning
    return {
        "baseline": ConditioningWeights(0.0, 0.0, 0.0),
        "graph_weighting": ConditioningWeights(0.0, w.alpha2, 0.0),
        "conditional_training": ConditioningWeights(0.0, 0.0, w.alpha3),
        "full_acm": ConditioningWeights(0.0, w.alpha2, w.alpha3),
    }


@dataclass
class AblationArtifacts:
    report: AblationReport
    models: dict[str, SummarizerModel]
    histories: dict[str, TrainHistory]
    classifier: ClassifierModel
    classifier_report: TrainReport
    bundle: CorpusBundle


def run_ablation(config: ExperimentConfig) -> AblationArtifacts:
    """Train all conditioning variants and evaluate them on the test split."""
    rng = RngState(config.experiment.seed)
    corpus_rng = rng.split()
    classifier_rng = rng.split()
    variant_seed = rng.split().seed  # one shared init/shuffle seed per variant

    bundle = build_corpus(config, corpus_rng)
    classifier, clf_report = train_pipeline_classifier(bundle, config, classifier_rng)

    target = config.experiment.target_class
    models: dict[str, SummarizerModel] = {}
    histories: dict[str, TrainHistory] = {}
    for name, weights in _variant_weights(config).items():
        model, history = train_summarizer(
            bundle.train,
            config.summarizer_config(),
            RngState(variant_seed),
            len(bundle.vocab),
            classifier=classifier if (weights.alpha2 > 0 or weights.alpha3 > 0) else None,
            target_class=target,
            weights=weights,
            val_clusters=bundle.val or None,
        )
        models[name] = model
        histories[name] = history

    alpha1 = config.conditioning.alpha1
    variants = {
        "baseline": (models["baseline"], 0.0),
        "graph_weighting": (models["graph_weighting"], 0.0),
        "conditional_training": (models["conditional_training"], 0.0),
        "future_discriminators": (models["baseline"], alpha1),
        "full_acm": (models["full_acm"], alpha1),
    }
    report = ablate(variants, bundle.test, classifier, target, config.beam)
    return AblationArtifacts(report, models, histories, classifier, clf_report, bundle)


def save_ablation(artifacts: AblationArtifacts, out_dir: str | Path) -> list[Path]:
    import json

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, model in artifacts.models.items():
        path = out / f"summarizer_{name}.ckpt"
        model.save(path)
        written.append(path)
    clf_path = out / "classifier.ckpt"
    artifacts.classifier.save(clf_path)
    written.append(clf_path)
    report_json = out / "ablation.json"
    report_json.write_text(
        json.dumps(artifacts.report.to_dict(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    written.append(report_json)
    report_txt = out / "ablation.txt"
    report_txt.write_text(artifacts.report.table() + "\n", encoding="utf-8")
    written.append(report_txt)
    return written
