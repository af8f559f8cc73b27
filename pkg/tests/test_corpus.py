"""Tokenization, prefix expansion, similarity graph, synthetic corpus, JSONL."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acmsum.data import (
    DataError,
    DocumentCluster,
    cluster_from_texts,
    expand_prefixes,
    load_jsonl,
    save_jsonl,
    split_multinews_record,
)
from acmsum.rng import RngState
from acmsum.simgraph import build_similarity_graph, tfidf_matrix
from acmsum.synthetic import SyntheticConfig, generate_synthetic_corpus
from acmsum.vocab import EOS, PAD, RESERVED, UNK, Vocabulary, tokenize


class TestTokenize:
    def test_empty_string(self):
        assert tokenize("", Vocabulary()) == []

    def test_direct_lookup(self):
        vocab = Vocabulary(["the", "cat", "."])
        assert vocab.id_of("the") == 5 and vocab.id_of("cat") == 6 and vocab.id_of(".") == 7
        assert tokenize("The cat.", vocab) == [5, 6, 7]

    def test_oov_maps_to_unk(self):
        vocab = Vocabulary(["the", "cat"])
        ids = tokenize("the dog", vocab)
        assert ids == [5, UNK]

    def test_reserved_ids_stable(self):
        assert PAD == 0 and EOS == 2
        vocab = Vocabulary(["x"])
        for i, tok in enumerate(RESERVED):
            assert vocab.token_of(i) == tok

    def test_vocab_file_round_trip(self, tmp_path):
        vocab = Vocabulary(["alpha", "beta", "gamma"])
        path = tmp_path / "vocab.txt"
        vocab.save(path)
        loaded = Vocabulary.load(path)
        assert len(loaded) == len(vocab)
        assert loaded.id_of("gamma") == vocab.id_of("gamma") == 7
        # line number = id offset by the reserved count
        assert path.read_text().splitlines()[2] == "gamma"


class TestExpandPrefixes:
    def test_single_token(self):
        out = expand_prefixes([9], 1)
        assert [(p.tokens, p.label) for p in out] == [([9], 1)]

    def test_three_tokens(self):
        out = expand_prefixes([5, 6, 7], 0)
        assert [p.tokens for p in out] == [[5], [5, 6], [5, 6, 7]]
        assert all(p.label == 0 for p in out)

    def test_twelve_tokens(self):
        assert len(expand_prefixes(list(range(12)), 1)) == 12

    def test_empty_sentence(self):
        assert expand_prefixes([], 0) == []

    @given(st.lists(st.integers(0, 50), min_size=1, max_size=20), st.integers(0, 3))
    def test_every_element_is_true_prefix(self, sentence, label):
        out = expand_prefixes(sentence, label)
        assert len(out) == len(sentence)
        for i, p in enumerate(out):
            assert p.tokens == sentence[: i + 1]
            assert p.label == label


def _toy_cluster(paragraph_texts: list[str], vocab: Vocabulary) -> DocumentCluster:
    return cluster_from_texts(["\n\n".join(paragraph_texts)], vocab)


class TestSimilarityGraph:
    def test_identical_paragraphs_exactly_one(self):
        vocab = Vocabulary(["sun", "rise", "moon", "fall"])
        cluster = _toy_cluster(["sun rise", "moon fall", "sun rise"], vocab)
        g = build_similarity_graph(cluster)
        assert g[0, 2] == 1.0 and g[2, 0] == 1.0

    def test_disjoint_vocabulary_zero(self):
        vocab = Vocabulary(["sun", "rise", "moon", "fall"])
        g = build_similarity_graph(_toy_cluster(["sun rise", "moon fall"], vocab))
        assert g[0, 1] == 0.0

    def test_matches_brute_force_oracle(self):
        vocab = Vocabulary(["a", "b", "c", "d", "e"])
        cluster = _toy_cluster(["a b b c", "b c d", "a e e"], vocab)
        g = build_similarity_graph(cluster)

        paragraphs = [cluster.paragraph_tokens(i) for i in range(3)]
        terms = sorted({t for p in paragraphs for t in p})
        vecs = []
        for p in paragraphs:
            v = []
            for t in terms:
                tf = sum(1 for x in p if x == t)
                df = sum(1 for q in paragraphs if t in q)
                v.append(tf * (np.log((1 + 3) / (1 + df)) + 1.0))
            vecs.append(np.array(v))
        for i in range(3):
            for j in range(3):
                if i == j:
                    assert g[i, j] == 1.0
                else:
                    expected = vecs[i] @ vecs[j] / (np.linalg.norm(vecs[i]) * np.linalg.norm(vecs[j]))
                    assert abs(g[i, j] - expected) < 1e-12

    def test_empty_paragraph_row_is_zero(self):
        cluster = DocumentCluster(
            documents=[[5, 6, 5]],
            paragraphs=[(0, (0, 2)), (0, (2, 2)), (0, (2, 3))],
        )
        g = build_similarity_graph(cluster)
        assert g[1, 1] == 1.0
        assert g[1, 0] == g[0, 1] == 0.0 and g[1, 2] == g[2, 1] == 0.0

    def test_symmetry_and_unit_diagonal_random(self):
        rng = RngState(3)
        corpus = generate_synthetic_corpus(SyntheticConfig(clusters=6), rng)
        for cluster in corpus.clusters:
            g = build_similarity_graph(cluster)
            np.testing.assert_array_equal(g, g.T)
            assert np.all(np.diag(g) == 1.0)
            assert np.all((g >= 0.0) & (g <= 1.0))

    def test_tfidf_shape(self):
        m = tfidf_matrix([[1, 2, 2], [2, 3]])
        assert m.shape == (2, 3)


class TestSyntheticCorpus:
    def test_two_class_partition(self):
        corpus = generate_synthetic_corpus(
            SyntheticConfig(clusters=1, docs_per_cluster=2, classes=2), RngState(1)
        )
        (cluster,) = corpus.clusters
        labels = {cluster.paragraph_label(i) for i in range(cluster.L)}
        assert labels == {0, 1}

    def test_lexicon_recovers_every_sentence_label(self):
        corpus = generate_synthetic_corpus(SyntheticConfig(clusters=10), RngState(2))
        assert corpus.sentences
        for text, label in corpus.sentences:
            ids = tokenize(text, corpus.vocab)
            assert corpus.lexicon_label(ids) == label

    def test_label_balance_over_200_clusters(self):
        corpus = generate_synthetic_corpus(SyntheticConfig(clusters=200), RngState(5))
        counts = {0: 0, 1: 0}
        for cluster in corpus.clusters:
            for i in range(cluster.L):
                counts[cluster.paragraph_label(i)] += 1
        total = sum(counts.values())
        for c in counts.values():
            assert 0.4 <= c / total <= 0.6

    def test_deterministic_per_seed(self):
        a = generate_synthetic_corpus(SyntheticConfig(clusters=5), RngState(7))
        b = generate_synthetic_corpus(SyntheticConfig(clusters=5), RngState(7))
        assert [c.raw_documents for c in a.clusters] == [c.raw_documents for c in b.clusters]
        assert [c.raw_summary for c in a.clusters] == [c.raw_summary for c in b.clusters]

    def test_vocab_too_small(self):
        with pytest.raises(DataError, match="too small"):
            generate_synthetic_corpus(SyntheticConfig(vocab_size=20), RngState(0))

    def test_summary_has_target_class_markers_only(self):
        corpus = generate_synthetic_corpus(SyntheticConfig(clusters=8), RngState(9))
        for cluster in corpus.clusters:
            label = corpus.lexicon_label(cluster.reference_summary)
            assert label is not None
            marker_classes = {
                corpus.marker_lexicon[t]
                for t in cluster.reference_summary
                if t in corpus.marker_lexicon
            }
            assert marker_classes == {label}


class TestJsonl:
    def test_round_trip(self, tmp_path):
        corpus = generate_synthetic_corpus(SyntheticConfig(clusters=5), RngState(11))
        path = tmp_path / "clusters.jsonl"
        save_jsonl(corpus.clusters, path)
        loaded = load_jsonl(path, corpus.vocab)
        assert len(loaded) == 5
        for before, after in zip(corpus.clusters, loaded):
            assert before.raw_documents == after.raw_documents
            assert before.raw_summary == after.raw_summary
            assert before.labels == after.labels
            assert before.documents == after.documents

    def test_missing_documents_key_names_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"documents": ["ok"], "summary": null, "labels": null}\n{"summary": "x"}\n')
        with pytest.raises(DataError, match=r":2"):
            load_jsonl(path, Vocabulary())

    def test_malformed_json_names_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"documents": ["ok"]}\nnot json at all{\n')
        with pytest.raises(DataError, match=r":2"):
            load_jsonl(path, Vocabulary())

    def test_multinews_separator_split(self):
        raw = "first article text ||||| second one here |||||  third  "
        parts = split_multinews_record(raw)
        assert parts == ["first article text", "second one here", "third"]

    def test_paragraph_split_on_blank_lines(self):
        vocab = Vocabulary(["one", "two", "three"])
        cluster = cluster_from_texts(["one two\n\nthree", "two"], vocab)
        assert cluster.L == 3
        assert cluster.paragraph_tokens(0) == [vocab.id_of("one"), vocab.id_of("two")]
        assert cluster.paragraph_tokens(2) == [vocab.id_of("two")]

    def test_model_input_joins_with_docsep(self):
        vocab = Vocabulary(["one", "two"])
        cluster = cluster_from_texts(["one", "two two"], vocab)
        from acmsum.vocab import DOCSEP

        assert cluster.model_input(100) == [5, DOCSEP, 6, 6]
        assert cluster.model_input(2) == [5, DOCSEP]


class TestClusterValidation:
    def test_overlapping_spans_rejected(self):
        cluster = DocumentCluster(documents=[[5, 6, 7]], paragraphs=[(0, (0, 2)), (0, (1, 3))])
        with pytest.raises(DataError, match="overlap"):
            cluster.validate()

    def test_span_outside_document_rejected(self):
        cluster = DocumentCluster(documents=[[5]], paragraphs=[(0, (0, 2))])
        with pytest.raises(DataError):
            cluster.validate()

    @settings(max_examples=25)
    @given(st.integers(0, 2**32 - 1))
    def test_generated_clusters_always_valid(self, seed):
        corpus = generate_synthetic_corpus(SyntheticConfig(clusters=2), RngState(seed))
        for cluster in corpus.clusters:
            cluster.validate()
            assert cluster.L == len(cluster.paragraphs)
