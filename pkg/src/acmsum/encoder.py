"""Graph-conditioned paragraph encoder.

Self-attention over paragraph vectors with two additive score terms before
the softmax: a Gaussian relation bias derived from the tf-idf similarity
graph, and a weighted product of per-paragraph attribute scores.  Pairs of
paragraphs that are similar, or that both express the conditioning class,
attend to each other more strongly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .classifier import ClassifierModel
from .data import DocumentCluster
from .layers import EncoderBlock, MultiHeadAttention
from .rng import RngState
from .simgraph import graph_from_paragraphs


class ConfigError(ValueError):
    pass


@dataclass
class EncoderConfig:
    layers: int = 2
    heads: int = 4
    model_dim: int = 64
    ff_dim: int = 128
    sigma: float = 1.0
    alpha2: float = 0.4
    max_input_tokens: int = 512
    max_paragraphs: int = 64

    def __post_init__(self) -> None:
        if self.model_dim % self.heads:
            raise ConfigError(f"model_dim {self.model_dim} not divisible by heads {self.heads}")
        if self.sigma <= 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")
        if self.alpha2 < 0:
            raise ConfigError(f"alpha2 must be nonnegative, got {self.alpha2}")

    @property
    def d_head(self) -> int:
        return self.model_dim // self.heads


def relation_bias(graph: np.ndarray, sigma: float) -> np.ndarray:
    """Gaussian penalty -(1 - G_ij)^2 / (2 sigma^2): zero at G=1, negative below."""
    if sigma <= 0:
        raise ConfigError(f"sigma must be positive, got {sigma}")
    return -((1.0 - graph) ** 2) / (2.0 * sigma * sigma)


def conditioning_bias(R: np.ndarray, beta: np.ndarray | None, alpha2: float) -> np.ndarray:
    """Additive attention-score bias: relation term plus the symmetric
    attribute product term (skipped entirely at alpha2=0)."""
    if alpha2 == 0.0 or beta is None:
        return R
    return R + alpha2 * np.outer(beta, beta)


def conditioned_attention(
    x: Tensor,
    R: np.ndarray,
    beta: np.ndarray | None,
    attn: MultiHeadAttention,
    alpha2: float,
    attn_out: list[np.ndarray] | None = None,
) -> Tensor:
    """One graph-conditioned self-attention pass over paragraph states.

    Per head: scores are scaled dot products plus alpha2 * beta_i beta_j,
    shifted by R before the row softmax; heads are concatenated and
    projected.  R and beta enter as constants.
    """
    L = x.shape[0]
    if L == 0:
        raise ValueError("conditioned attention needs at least one paragraph")
    if beta is not None and len(beta) != L:
        raise ValueError(f"beta length {len(beta)} != paragraph count {L}")
    if R.shape != (L, L):
        raise ValueError(f"relation bias shape {R.shape} != ({L}, {L})")
    bias = conditioning_bias(R, beta, alpha2)
    return attn(x, x, batch=1, n_q=L, n_kv=L, bias=bias, attn_out=attn_out)


def visible_paragraphs(cluster: DocumentCluster, max_input_tokens: int) -> list[list[int]]:
    """Paragraph token lists clipped to the concatenated-input token budget.

    The model input is documents joined by a separator, truncated; spans
    falling past the cut are dropped and straddling spans are shortened.
    """
    out: list[list[int]] = []
    offsets = []
    pos = 0
    for doc in cluster.documents:
        offsets.append(pos)
        pos += len(doc) + 1  # +1 for the separator
    for idx, (doc, (start, end)) in enumerate(cluster.paragraphs):
        g_start = offsets[doc] + start
        g_end = min(offsets[doc] + end, max_input_tokens)
        if g_end > g_start:
            tokens = cluster.paragraph_tokens(idx)[: g_end - g_start]
            if tokens:
                out.append(tokens)
    return out


@dataclass
class ClusterEncoding:
    """Per-cluster constants reused across training steps and decode steps."""

    paragraphs: list[list[int]]
    graph: np.ndarray
    bias: np.ndarray  # relation bias + alpha2 * beta_i beta_j, shared by heads
    beta: np.ndarray | None


def paragraph_scores(
    classifier: ClassifierModel, paragraphs: list[list[int]], target_class: int
) -> np.ndarray:
    """beta_i = classifier probability of the conditioning class, per paragraph."""
    return classifier.score_batch(paragraphs)[:, target_class]


def prepare_cluster(
    cluster: DocumentCluster,
    config: EncoderConfig,
    classifier: ClassifierModel | None = None,
    target_class: int | None = None,
) -> ClusterEncoding:
    paragraphs = visible_paragraphs(cluster, config.max_input_tokens)
    if not paragraphs:
        raise ValueError("cluster has no visible paragraphs")
    if len(paragraphs) > config.max_paragraphs:
        paragraphs = paragraphs[: config.max_paragraphs]
    graph = graph_from_paragraphs(paragraphs)
    bias_r = relation_bias(graph, config.sigma)
    beta = None
    if config.alpha2 > 0.0:
        if classifier is None or target_class is None:
            raise ConfigError("alpha2 > 0 requires a classifier and a target class")
        beta = paragraph_scores(classifier, paragraphs, target_class)
    return ClusterEncoding(paragraphs, graph, conditioning_bias(bias_r, beta, config.alpha2), beta)


class GraphEncoder:
    """Stack of conditioned-attention blocks over paragraph vectors."""

    def __init__(self, config: EncoderConfig, token_emb: Tensor, rng: RngState):
        self.config = config
        self.token_emb = token_emb  # shared with the decoder (tied embeddings)
        d = config.model_dim
        self.para_pos = ad.parameter(rng.normal((config.max_paragraphs, d), 0.02), "enc.para_pos")
        self.blocks = [
            EncoderBlock(rng, d, config.heads, config.ff_dim, f"enc.block{i}")
            for i in range(config.layers)
        ]

    def parameters(self) -> list[Tensor]:
        params = [self.para_pos]
        for b in self.blocks:
            params.extend(b.parameters())
        return params

    def paragraph_vectors(self, paragraphs: list[list[int]]) -> Tensor:
        """Mean of token embeddings plus a learned paragraph-position row."""
        rows = []
        for tokens in paragraphs:
            emb = ad.embedding(self.token_emb, np.asarray(tokens, dtype=np.int64))
            rows.append(ad.reshape(ad.reduce_mean(emb, axis=0), (1, -1)))
        x = ad.concat(rows, axis=0)
        return ad.add(x, ad.embedding(self.para_pos, np.arange(len(paragraphs))))

    def encode(self, enc: ClusterEncoding, attn_out: list[np.ndarray] | None = None) -> Tensor:
        """Final-layer paragraph states, shape (L, model_dim)."""
        L = len(enc.paragraphs)
        if L == 0:
            raise ValueError("cannot encode an empty paragraph set")
        x = self.paragraph_vectors(enc.paragraphs)
        for block in self.blocks:
            x = block(x, batch=1, length=L, bias=enc.bias, attn_out=attn_out)
        return ad.layer_norm(x)


def encode_cluster(
    cluster: DocumentCluster,
    encoder: GraphEncoder,
    classifier: ClassifierModel | None = None,
    target_class: int | None = None,
    attn_out: list[np.ndarray] | None = None,
) -> Tensor:
    enc = prepare_cluster(cluster, encoder.config, classifier, target_class)
    return encoder.encode(enc, attn_out)
