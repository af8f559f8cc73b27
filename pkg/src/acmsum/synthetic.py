"""Synthetic conflicting-attribute corpus generator.

Each cluster mixes paragraphs from C attribute classes around one shared
topic; the reference summary is written from exactly one class.  Every
sentence draws its tone words only from its own class's marker pool, so
planted labels are recoverable by a lexicon rule with no error.  Stands in
for large news corpora at desk scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .data import DataError, DocumentCluster, cluster_from_texts
from .rng import RngState
from .vocab import RESERVED, Vocabulary

_POSITIVE = ["bright", "strong", "calm", "gain", "hope", "steady", "cheer", "warm"]
_NEGATIVE = ["gloom", "weak", "tense", "loss", "fear", "shaky", "anger", "cold"]
_TOPICS = [
    "market", "election", "storm", "match", "merger", "launch",
    "strike", "summit", "harvest", "festival", "voyage", "census",
]
_GLUE = [
    "the", "a", "was", "and", "on", "of", "in", "it", "said", "today",
    "report", "sources", "after", "over", "new", "officials", "local", "city",
]

# slot codes: T topic, M class marker, F filler; every template leads with a
# marker so every prefix length, including 1, is separable by the lexicon
_TEMPLATES = [
    ("M", "T", "F", "M", "F"),
    ("M", "F", "T", "M", "F", "M"),
    ("M", "T", "M", "F", "F"),
    ("M", "F", "T", "F", "M"),
    ("M", "T", "F", "F", "M", "M"),
]

# reference summaries follow one fixed shape with a deterministic glue word,
# so the summary language is learnable from held-out clusters; only the
# marker class and topic vary with the cluster
_SUMMARY_TEMPLATE = ("M", "T", "G", "M")


@dataclass
class SyntheticConfig:
    vocab_size: int = 120
    clusters: int = 50
    docs_per_cluster: int = 2
    classes: int = 2
    paragraphs_per_doc: int = 2
    min_sentences: int = 2
    max_sentences: int = 4
    summary_sentences: int = 1
    markers_per_class: int = 6
    topics: int = 8
    majority_fraction: float = 0.75  # share of paragraphs from the summary's class


@dataclass
class SyntheticCorpus:
    vocab: Vocabulary
    clusters: list[DocumentCluster]
    sentences: list[tuple[str, int]]  # (raw sentence, class) for classifier training
    marker_lexicon: dict[int, int] = field(default_factory=dict)  # token id -> class
    config: SyntheticConfig | None = None

    def lexicon_label(self, token_ids) -> int | None:
        """Majority class of marker tokens; None if no marker present."""
        votes: dict[int, int] = {}
        for t in token_ids:
            cls = self.marker_lexicon.get(int(t))
            if cls is not None:
                votes[cls] = votes.get(cls, 0) + 1
        if not votes:
            return None
        return max(sorted(votes), key=votes.get)


def _build_pools(config: SyntheticConfig) -> tuple[list[list[str]], list[str], list[str]]:
    markers: list[list[str]] = []
    for c in range(config.classes):
        base = [_POSITIVE, _NEGATIVE][c] if c < 2 else []
        pool = [base[j] if j < len(base) else f"tone{c}w{j}" for j in range(config.markers_per_class)]
        markers.append(pool)
    topics = [_TOPICS[j] if j < len(_TOPICS) else f"topic{j}" for j in range(config.topics)]
    n_fillers = (
        config.vocab_size
        - len(RESERVED)
        - config.classes * config.markers_per_class
        - config.topics
    )
    if n_fillers < 8:
        raise DataError(
            f"vocab_size {config.vocab_size} too small for templates: "
            f"needs at least {config.vocab_size - n_fillers + 8}"
        )
    fillers = [_GLUE[j] if j < len(_GLUE) else f"word{j}" for j in range(n_fillers)]
    return markers, topics, fillers


def _sentence(rng: RngState, template, topic: str, markers: list[str], fillers: list[str]) -> str:
    words = []
    for slot in template:
        if slot == "T":
            words.append(topic)
        elif slot == "M":
            words.append(markers[int(rng.integers(0, len(markers)))])
        elif slot == "G":
            words.append(fillers[0])  # fixed glue word, identical across clusters
        else:
            words.append(fillers[int(rng.integers(0, len(fillers)))])
    return " ".join(words)


def generate_synthetic_corpus(config: SyntheticConfig, rng: RngState) -> SyntheticCorpus:
    markers, topics, fillers = _build_pools(config)
    vocab = Vocabulary()
    for pool in markers:
        for w in pool:
            vocab.add(w)
    for w in topics + fillers:
        vocab.add(w)
    lexicon = {vocab.id_of(w): c for c, pool in enumerate(markers) for w in pool}

    sentences: list[tuple[str, int]] = []
    clusters: list[DocumentCluster] = []
    # summary targets cycle per topic, so no topic correlates with a class:
    # a summarizer trained on any prefix of the corpus cannot learn a
    # topic -> class shortcut, and conditioning stays genuinely contested
    target_cycle: dict[str, int] = {}
    for _ in range(config.clusters):
        topic = topics[int(rng.integers(0, len(topics)))]
        target = target_cycle.get(topic, 0)
        target_cycle[topic] = (target + 1) % config.classes

        n_paras = config.docs_per_cluster * config.paragraphs_per_doc
        # the summary's class holds the majority of paragraphs (the dominant
        # viewpoint is recoverable from the input), the rest cycle over the
        # remaining classes so every cluster carries conflicting content
        majority = min(n_paras - 1, max(1, round(config.majority_fraction * n_paras)))
        para_classes = [target] * majority + [
            (target + 1 + i) % config.classes for i in range(n_paras - majority)
        ]
        order = rng.permutation(n_paras)
        para_classes = [para_classes[i] for i in order]

        doc_texts: list[str] = []
        doc_labels: list[list[int]] = []
        k = 0
        for _ in range(config.docs_per_cluster):
            para_texts: list[str] = []
            labels: list[int] = []
            for _ in range(config.paragraphs_per_doc):
                cls = para_classes[k]
                k += 1
                n_sent = int(rng.integers(config.min_sentences, config.max_sentences + 1))
                sents = [
                    _sentence(rng, _TEMPLATES[int(rng.integers(0, len(_TEMPLATES)))],
                              topic, markers[cls], fillers)
                    for _ in range(n_sent)
                ]
                sentences.extend((s, cls) for s in sents)
                para_texts.append(" ".join(sents))
                labels.append(cls)
            doc_texts.append("\n\n".join(para_texts))
            doc_labels.append(labels)

        summary = " ".join(
            _sentence(rng, _SUMMARY_TEMPLATE, topic, markers[target], fillers)
            for _ in range(config.summary_sentences)
        )
        clusters.append(cluster_from_texts(doc_texts, vocab, summary=summary, labels=doc_labels))

    return SyntheticCorpus(vocab, clusters, sentences, lexicon, config)
