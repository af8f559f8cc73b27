"""Encoder-decoder summarizer with conditional training.

The decoder is trained teacher-forced; when the conditional-training weight
is positive, each position's next-token distribution is fused in log space
with the attribute classifier's score of the extended prefix, restricted to
a shortlist of likely candidates plus the gold token, then renormalized.
The classifier is frozen throughout: scores enter the loss as constants.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .checkpoint import load_checkpoint, save_checkpoint
from .classifier import ClassifierModel, attribute_probs
from .data import DataError, DocumentCluster
from .encoder import ClusterEncoding, EncoderConfig, GraphEncoder, prepare_cluster
from .layers import DecoderBlock, causal_bias
from .optim import Adam
from .rng import RngState
from .vocab import BOS, EOS


@dataclass
class ConditioningWeights:
    """Stage weights: decode-time discriminator, graph term, training fusion."""

    alpha1: float = 0.22
    alpha2: float = 0.4
    alpha3: float = 0.01

    def __post_init__(self) -> None:
        for name in ("alpha1", "alpha2", "alpha3"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


@dataclass
class SummarizerConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    decoder_layers: int = 2
    max_summary_tokens: int = 64
    lr: float = 1e-3
    epochs: int = 40
    fusion_top_k: int = 50

    @property
    def model_dim(self) -> int:
        return self.encoder.model_dim


class SummarizerModel:
    """Graph encoder over paragraphs; causal decoder with cross-attention;
    input and output token embeddings are tied."""

    def __init__(self, vocab_size: int, config: SummarizerConfig, rng: RngState):
        self.vocab_size = vocab_size
        self.config = config
        d = config.model_dim
        enc_cfg = config.encoder
        self.emb = ad.parameter(rng.normal((vocab_size, d), 0.02), "sum.emb")
        self.dec_pos = ad.parameter(
            rng.normal((config.max_summary_tokens + 1, d), 0.02), "sum.dec_pos"
        )
        self.encoder = GraphEncoder(enc_cfg, self.emb, rng)
        self.dec_blocks = [
            DecoderBlock(rng, d, enc_cfg.heads, enc_cfg.ff_dim, f"sum.dec{i}")
            for i in range(config.decoder_layers)
        ]

    def parameters(self) -> list[Tensor]:
        params = [self.emb, self.dec_pos]
        params.extend(self.encoder.parameters())
        for b in self.dec_blocks:
            params.extend(b.parameters())
        return params

    # -- forward -----------------------------------------------------------

    def decoder_logits(self, memory: Tensor, tokens_in: list[int]) -> Tensor:
        """(len(tokens_in), vocab) next-token logits, teacher-forced."""
        n = len(tokens_in)
        heads = self.config.encoder.heads
        x = ad.add(
            ad.embedding(self.emb, np.asarray(tokens_in, dtype=np.int64)),
            ad.embedding(self.dec_pos, np.arange(n)),
        )
        mask = causal_bias(n)
        n_mem = memory.shape[0]
        for block in self.dec_blocks:
            x = block(x, memory, batch=1, n_q=n, n_mem=n_mem, causal_bias=mask)
        x = ad.layer_norm(x)
        return ad.matmul(x, ad.transpose(self.emb, (1, 0)))

    def encode(self, enc: ClusterEncoding, attn_out=None) -> Tensor:
        return self.encoder.encode(enc, attn_out)

    def next_token_logprobs(self, memory: Tensor, prefix: list[int]) -> np.ndarray:
        """Log-probabilities over the vocabulary for the step after ``prefix``.

        ``prefix`` excludes BOS; pure function of (weights, memory, prefix).
        """
        if len(prefix) >= self.config.max_summary_tokens:
            raise DataError(
                f"prefix length {len(prefix)} >= max_summary_tokens "
                f"{self.config.max_summary_tokens}"
            )
        with ad.paused():
            logits = self.decoder_logits(memory, [BOS] + list(prefix))
            row = ad.constant(logits.data[-1])
            return ad.log_softmax(row).data

    # -- state -------------------------------------------------------------

    def state_dict(self) -> dict[str, np.ndarray]:
        cfg = self.config
        enc = cfg.encoder
        state = {
            "meta/vocab_size": np.float64(self.vocab_size),
            "meta/enc_layers": np.float64(enc.layers),
            "meta/heads": np.float64(enc.heads),
            "meta/model_dim": np.float64(enc.model_dim),
            "meta/ff_dim": np.float64(enc.ff_dim),
            "meta/sigma": np.float64(enc.sigma),
            "meta/alpha2": np.float64(enc.alpha2),
            "meta/max_input_tokens": np.float64(enc.max_input_tokens),
            "meta/max_paragraphs": np.float64(enc.max_paragraphs),
            "meta/decoder_layers": np.float64(cfg.decoder_layers),
            "meta/max_summary_tokens": np.float64(cfg.max_summary_tokens),
        }
        for p in self.parameters():
            state[p.name] = p.data
        return state

    def save(self, path) -> None:
        save_checkpoint(path, self.state_dict())

    @classmethod
    def load(cls, path) -> "SummarizerModel":
        state = load_checkpoint(path)
        enc = EncoderConfig(
            layers=int(state["meta/enc_layers"]),
            heads=int(state["meta/heads"]),
            model_dim=int(state["meta/model_dim"]),
            ff_dim=int(state["meta/ff_dim"]),
            sigma=float(state["meta/sigma"]),
            alpha2=float(state["meta/alpha2"]),
            max_input_tokens=int(state["meta/max_input_tokens"]),
            max_paragraphs=int(state["meta/max_paragraphs"]),
        )
        config = SummarizerConfig(
            encoder=enc,
            decoder_layers=int(state["meta/decoder_layers"]),
            max_summary_tokens=int(state["meta/max_summary_tokens"]),
        )
        model = cls(int(state["meta/vocab_size"]), config, RngState(0))
        for p in model.parameters():
            if p.name not in state:
                raise KeyError(f"checkpoint missing tensor {p.name!r}")
            if state[p.name].shape != p.data.shape:
                raise ValueError(f"shape mismatch for {p.name!r}")
            p.data = np.ascontiguousarray(state[p.name])
        return model


# ---------------------------------------------------------------------------
# logit fusion
# ---------------------------------------------------------------------------


def fused_logits(
    decoder_logits: np.ndarray,
    prefix: list[int],
    classifier,
    target_class: int,
    alpha3: float,
    top_k: int | None = None,
) -> np.ndarray:
    """Fuse one decoding step's distribution with attribute scores.

    Returns renormalized log-probabilities.  With ``top_k`` set, only the
    top-k candidates by base probability receive the attribute term; the
    rest keep their base log-probabilities (cost cap for training).
    ``alpha3 = 0`` returns the base distribution exactly.
    """
    if alpha3 < 0:
        raise ValueError("alpha3 must be nonnegative")
    base = decoder_logits - decoder_logits.max()
    base = base - np.log(np.exp(base).sum())
    if alpha3 == 0.0:
        return base
    vocab = base.shape[0]
    if top_k is None or top_k >= vocab:
        candidates = np.arange(vocab)
    else:
        candidates = np.argpartition(base, -top_k)[-top_k:]
    scores = attribute_probs(classifier, [list(prefix) + [int(v)] for v in candidates])
    fused = base.copy()
    fused[candidates] += alpha3 * np.log(scores[:, target_class])
    fused -= fused.max()
    return fused - np.log(np.exp(fused).sum())


def _fusion_constant(
    base_logp: np.ndarray,
    summary: list[int],
    targets: list[int],
    classifier,
    target_class: int,
    top_k: int,
) -> np.ndarray:
    """(T, vocab) additive constant: log attribute score on the shortlist
    union the gold token, zero elsewhere."""
    T, vocab = base_logp.shape
    const = np.zeros((T, vocab))
    extensions: list[list[int]] = []
    slots: list[tuple[int, int]] = []
    for t in range(T):
        k = min(top_k, vocab)
        cands = set(np.argpartition(base_logp[t], -k)[-k:].tolist())
        cands.add(int(targets[t]))
        prefix = summary[:t]
        for v in sorted(cands):
            extensions.append(list(prefix) + [v])
            slots.append((t, v))
    scores = attribute_probs(classifier, extensions)
    logs = np.log(scores[:, target_class])
    for (t, v), lg in zip(slots, logs):
        const[t, v] = lg
    return const


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


@dataclass
class TrainHistory:
    train_losses: list[float] = field(default_factory=list)
    val_losses: list[float] = field(default_factory=list)
    best_val: float = float("inf")
    best_epoch: int = -1


def _teacher_pair(summary: list[int], max_tokens: int) -> tuple[list[int], list[int]]:
    body = list(summary[: max_tokens - 1])
    return [BOS] + body, body + [EOS]


def _cluster_loss(
    model: SummarizerModel,
    enc: ClusterEncoding,
    summary: list[int],
    classifier: ClassifierModel | None,
    target_class: int | None,
    alpha3: float,
    top_k: int,
) -> Tensor:
    tokens_in, targets = _teacher_pair(summary, model.config.max_summary_tokens)
    memory = model.encode(enc)
    logits = model.decoder_logits(memory, tokens_in)
    if alpha3 == 0.0:
        return ad.cross_entropy(logits, np.asarray(targets))
    base_logp = ad.log_softmax(logits, axis=-1)
    const = _fusion_constant(
        base_logp.data, list(summary), targets, classifier, target_class, top_k
    )
    fused = ad.add_const(base_logp, alpha3 * const)
    return ad.cross_entropy(fused, np.asarray(targets))


def train_summarizer(
    clusters: list[DocumentCluster],
    config: SummarizerConfig,
    rng: RngState,
    vocab_size: int,
    classifier: ClassifierModel | None = None,
    target_class: int | None = None,
    weights: ConditioningWeights | None = None,
    val_clusters: list[DocumentCluster] | None = None,
) -> tuple[SummarizerModel, TrainHistory]:
    """Teacher-forced training; keeps the parameters of the best-validation
    epoch.  Conditioning stages engage only for strictly positive weights."""
    weights = weights or ConditioningWeights()
    if any(c.reference_summary is None for c in clusters):
        raise DataError("every training cluster needs a reference summary")
    needs_classifier = weights.alpha2 > 0 or weights.alpha3 > 0
    if needs_classifier and (classifier is None or target_class is None):
        raise DataError("conditioning weights require a classifier and target class")

    enc_cfg = replace(config.encoder, alpha2=weights.alpha2)
    config = replace(config, encoder=enc_cfg)
    init_rng = rng.split()
    shuffle_rng = rng.split()
    model = SummarizerModel(vocab_size, config, init_rng)

    encodings = [
        prepare_cluster(c, enc_cfg, classifier if weights.alpha2 > 0 else None, target_class)
        for c in clusters
    ]
    val = val_clusters if val_clusters is not None else clusters
    if any(c.reference_summary is None for c in val):
        raise DataError("every validation cluster needs a reference summary")
    val_encodings = (
        encodings
        if val is clusters
        else [
            prepare_cluster(c, enc_cfg, classifier if weights.alpha2 > 0 else None, target_class)
            for c in val
        ]
    )

    opt = Adam(model.parameters(), lr=config.lr)
    history = TrainHistory()
    best_state: dict[str, np.ndarray] | None = None

    def eval_val() -> float:
        with ad.paused():
            total = 0.0
            for c, enc in zip(val, val_encodings):
                loss = _cluster_loss(
                    model, enc, c.reference_summary, classifier, target_class,
                    weights.alpha3, config.fusion_top_k,
                )
                total += loss.item()
            return total / len(val)

    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(len(clusters))
        epoch_loss = 0.0
        for idx in order:
            opt.zero_grad()
            with Tape() as tape:
                loss = _cluster_loss(
                    model, encodings[idx], clusters[idx].reference_summary,
                    classifier, target_class, weights.alpha3, config.fusion_top_k,
                )
                tape.backward(loss)
            opt.step()
            epoch_loss += loss.item()
        history.train_losses.append(epoch_loss / len(clusters))
        val_loss = eval_val()
        history.val_losses.append(val_loss)
        if val_loss < history.best_val:
            history.best_val = val_loss
            history.best_epoch = epoch
            best_state = {p.name: p.data.copy() for p in model.parameters()}

    if best_state is not None:
        for p in model.parameters():
            p.data = np.ascontiguousarray(best_state[p.name])
    return model, history


def token_accuracy(
    model: SummarizerModel,
    clusters: list[DocumentCluster],
    classifier: ClassifierModel | None = None,
    target_class: int | None = None,
) -> float:
    """Teacher-forced next-token accuracy of the raw decoder distribution."""
    correct = 0
    total = 0
    alpha2 = model.config.encoder.alpha2
    with ad.paused():
        for c in clusters:
            enc = prepare_cluster(
                c, model.config.encoder, classifier if alpha2 > 0 else None, target_class
            )
            tokens_in, targets = _teacher_pair(
                c.reference_summary, model.config.max_summary_tokens
            )
            logits = model.decoder_logits(model.encode(enc), tokens_in)
            pred = logits.data.argmax(axis=1)
            correct += int((pred == np.asarray(targets)).sum())
            total += len(targets)
    return correct / max(total, 1)
