"""Graph-conditioned attention: formula fidelity, properties, gradients."""

from __future__ import annotations

import numpy as np
import pytest

from acmsum import autodiff as ad
from acmsum.classifier import ClassifierConfig, ClassifierModel
from acmsum.encoder import (
    ClusterEncoding,
    ConfigError,
    EncoderConfig,
    GraphEncoder,
    conditioned_attention,
    conditioning_bias,
    encode_cluster,
    prepare_cluster,
    relation_bias,
)
from acmsum.layers import MultiHeadAttention
from acmsum.rng import RngState
from acmsum.simgraph import build_similarity_graph
from acmsum.synthetic import SyntheticConfig, generate_synthetic_corpus
from helpers import gradcheck

RNG = np.random.default_rng(31)


class TestRelationBias:
    def test_exact_similarity_zero_penalty(self):
        assert relation_bias(np.array([[1.0]]), 1.0)[0, 0] == 0.0

    def test_zero_similarity_sigma_one(self):
        g = np.array([[1.0, 0.0], [0.0, 1.0]])
        r = relation_bias(g, 1.0)
        assert r[0, 1] == -0.5 and r[1, 0] == -0.5

    def test_half_similarity_half_sigma(self):
        g = np.array([[1.0, 0.5], [0.5, 1.0]])
        r = relation_bias(g, 0.5)
        assert abs(r[0, 1] - (-0.5)) < 1e-15

    def test_nonpositive_entries_zero_diagonal(self):
        g = np.clip(RNG.uniform(0, 1, size=(5, 5)), 0, 1)
        np.fill_diagonal(g, 1.0)
        r = relation_bias(g, 0.7)
        assert np.all(r <= 0.0)
        assert np.all(np.diag(r) == 0.0)

    def test_sigma_must_be_positive(self):
        with pytest.raises(ConfigError):
            relation_bias(np.eye(2), 0.0)
        with pytest.raises(ConfigError):
            EncoderConfig(sigma=-1.0)


def _identity_attention(d: int, heads: int = 1) -> MultiHeadAttention:
    attn = MultiHeadAttention(RngState(0), d, heads, "t")
    for w in (attn.w_q, attn.w_k, attn.w_v, attn.w_o):
        w.data = np.eye(d)
    return attn


class TestConditionedAttention:
    def test_two_paragraph_hand_case(self):
        """L=2, identity projections, basis-vector states: the whole chain
        (scaled dot product, attribute product, Gaussian bias, softmax,
        value sum) is checked against a scalar hand computation."""
        attn = _identity_attention(2)
        x = ad.constant(np.eye(2))
        graph = np.eye(2)  # off-diagonal similarity 0
        R = relation_bias(graph, 1.0)
        beta = np.array([1.0, 1.0])
        probs: list[np.ndarray] = []
        u = conditioned_attention(x, R, beta, attn, alpha2=1.0, attn_out=probs)

        s = 1.0 / np.sqrt(2.0)
        e = np.array([[s + 1.0, 0.0 + 1.0], [0.0 + 1.0, s + 1.0]])
        scores = e + np.array([[0.0, -0.5], [-0.5, 0.0]])
        expected_alpha = np.exp(scores - scores.max(axis=1, keepdims=True))
        expected_alpha /= expected_alpha.sum(axis=1, keepdims=True)
        expected_u = expected_alpha @ np.eye(2)  # W_V = W_O = I

        np.testing.assert_allclose(probs[0][0, 0], expected_alpha, atol=1e-12)
        np.testing.assert_allclose(u.data, expected_u, atol=1e-12)

    def test_single_paragraph_degenerate_softmax(self):
        attn = _identity_attention(2)
        x = ad.constant([[3.0, -1.0]])
        probs: list[np.ndarray] = []
        u = conditioned_attention(x, np.zeros((1, 1)), np.array([0.7]), attn, 0.4, probs)
        np.testing.assert_array_equal(probs[0][0, 0], [[1.0]])
        np.testing.assert_allclose(u.data, [[3.0, -1.0]], atol=1e-12)

    def test_vanishing_conditioning_matches_plain_attention(self):
        d, heads, L = 8, 2, 4
        attn = MultiHeadAttention(RngState(5), d, heads, "t")
        x_data = RNG.normal(size=(L, d))
        R = relation_bias(np.ones((L, L)), 1.0)  # G all ones -> R all zero
        beta = np.zeros(L)
        u = conditioned_attention(ad.constant(x_data), R, beta, attn, alpha2=0.4)

        d_head = d // heads
        expected = np.zeros((L, d))
        q, k, v = (x_data @ w.data for w in (attn.w_q, attn.w_k, attn.w_v))
        for h in range(heads):
            sl = slice(h * d_head, (h + 1) * d_head)
            scores = q[:, sl] @ k[:, sl].T / np.sqrt(d_head)
            a = np.exp(scores - scores.max(axis=1, keepdims=True))
            a /= a.sum(axis=1, keepdims=True)
            expected[:, sl] = a @ v[:, sl]
        expected = expected @ attn.w_o.data
        np.testing.assert_allclose(u.data, expected, atol=1e-12)

    def test_attention_rows_sum_to_one(self):
        attn = MultiHeadAttention(RngState(6), 8, 4, "t")
        x = ad.constant(RNG.normal(size=(5, 8)))
        g = np.clip(RNG.uniform(size=(5, 5)), 0, 1)
        g = (g + g.T) / 2
        np.fill_diagonal(g, 1.0)
        probs: list[np.ndarray] = []
        conditioned_attention(x, relation_bias(g, 1.0), RNG.uniform(size=5), attn, 0.4, probs)
        np.testing.assert_allclose(probs[0].sum(axis=-1), 1.0, atol=1e-9)

    def test_bias_monotone_in_similarity(self):
        """Raising G[i][j] never lowers attention alpha_ij, all else fixed."""
        attn = MultiHeadAttention(RngState(8), 8, 2, "t")
        x = ad.constant(RNG.normal(size=(4, 8)))
        beta = RNG.uniform(size=4)
        for _ in range(20):
            g = np.clip(RNG.uniform(size=(4, 4)), 0, 1)
            g = (g + g.T) / 2
            np.fill_diagonal(g, 1.0)
            i, j = RNG.integers(0, 4), RNG.integers(0, 4)
            if i == j or g[i, j] > 0.95:
                continue
            bumped = g.copy()
            bumped[i, j] = bumped[j, i] = min(1.0, g[i, j] + 0.3)
            lo: list[np.ndarray] = []
            hi: list[np.ndarray] = []
            conditioned_attention(x, relation_bias(g, 1.0), beta, attn, 0.4, lo)
            conditioned_attention(x, relation_bias(bumped, 1.0), beta, attn, 0.4, hi)
            assert np.all(hi[0][0, :, i, j] >= lo[0][0, :, i, j] - 1e-12)

    def test_conditioning_term_symmetric(self):
        R = relation_bias(np.eye(3), 1.0)
        beta = RNG.uniform(size=3)
        bias = conditioning_bias(R, beta, 0.4)
        added = bias - R
        np.testing.assert_allclose(added, added.T, atol=0)
        np.testing.assert_allclose(added, 0.4 * np.outer(beta, beta), atol=0)

    def test_gradients_through_full_op(self):
        d, heads, L = 6, 2, 3
        attn = MultiHeadAttention(RngState(9), d, heads, "t")
        x = ad.parameter(RNG.normal(size=(L, d)), "x")
        R = relation_bias(np.clip(RNG.uniform(size=(L, L)), 0, 1), 1.0)
        beta = RNG.uniform(size=L)
        w = RNG.normal(size=(L, d))

        def loss():
            u = conditioned_attention(x, R, beta, attn, alpha2=0.4)
            return ad.reduce_sum(ad.mul_const(u, w))

        gradcheck(loss, [x] + attn.parameters())

    def test_empty_input_rejected(self):
        attn = _identity_attention(2)
        with pytest.raises(ValueError):
            conditioned_attention(
                ad.constant(np.zeros((0, 2))), np.zeros((0, 0)), None, attn, 0.4
            )


def _trained_free_encoder(alpha2: float, seed: int = 0) -> tuple[GraphEncoder, any]:
    rng = RngState(seed)
    cfg = EncoderConfig(layers=2, heads=4, model_dim=16, ff_dim=32, alpha2=alpha2)
    emb = ad.parameter(rng.normal((40, 16), 0.02), "emb")
    return GraphEncoder(cfg, emb, rng), cfg


class TestEncodeCluster:
    def _cluster(self):
        corpus = generate_synthetic_corpus(
            SyntheticConfig(clusters=1, vocab_size=80), RngState(17)
        )
        return corpus, corpus.clusters[0]

    def test_alpha2_zero_equals_graph_bias_only(self):
        corpus, cluster = self._cluster()
        encoder, cfg = _trained_free_encoder(alpha2=0.0)
        encoder.token_emb = ad.parameter(RngState(3).normal((len(corpus.vocab), 16), 0.02))

        enc = prepare_cluster(cluster, cfg)
        out_a = encoder.encode(enc).data
        # manual graph-bias-only encoding: same weights, bias = R alone
        manual = ClusterEncoding(
            enc.paragraphs, enc.graph, relation_bias(enc.graph, cfg.sigma), None
        )
        out_b = encoder.encode(manual).data
        np.testing.assert_allclose(out_a, out_b, atol=1e-12)

    def test_deterministic(self):
        corpus, cluster = self._cluster()
        encoder, cfg = _trained_free_encoder(alpha2=0.0)
        encoder.token_emb = ad.parameter(RngState(3).normal((len(corpus.vocab), 16), 0.02))
        a = encode_cluster(cluster, encoder).data
        b = encode_cluster(cluster, encoder).data
        assert a.tobytes() == b.tobytes()

    def test_beta_computed_from_classifier(self):
        corpus, cluster = self._cluster()
        clf = ClassifierModel(len(corpus.vocab), ClassifierConfig(), RngState(4))
        encoder, cfg = _trained_free_encoder(alpha2=0.4)
        enc = prepare_cluster(cluster, cfg, clf, target_class=0)
        assert enc.beta is not None and enc.beta.shape == (cluster.L,)
        # untrained classifier scores uniformly
        np.testing.assert_allclose(enc.beta, 0.5, atol=1e-12)

    def test_alpha2_requires_classifier(self):
        _, cluster = self._cluster()
        _, cfg = _trained_free_encoder(alpha2=0.4)
        with pytest.raises(ConfigError):
            prepare_cluster(cluster, cfg)

    def test_rows_match_paragraph_count(self):
        corpus, cluster = self._cluster()
        encoder, _ = _trained_free_encoder(alpha2=0.0)
        encoder.token_emb = ad.parameter(RngState(3).normal((len(corpus.vocab), 16), 0.02))
        out = encode_cluster(cluster, encoder)
        assert out.shape == (cluster.L, 16)


def test_similarity_graph_feeds_encoder_unchanged():
    corpus = generate_synthetic_corpus(SyntheticConfig(clusters=1), RngState(21))
    cluster = corpus.clusters[0]
    cfg = EncoderConfig(alpha2=0.0)
    enc = prepare_cluster(cluster, cfg)
    np.testing.assert_array_equal(enc.graph, build_similarity_graph(cluster))
