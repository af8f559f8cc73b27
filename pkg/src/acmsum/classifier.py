"""Prefix-robust attribute classifier.

A small transformer encoder scores any token prefix with a probability per
attribute class.  It is trained on every prefix of every labeled sentence,
so scores stay meaningful for partial generations down to a single token.
The class head is zero-initialized: an untrained model scores uniformly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .checkpoint import load_checkpoint, save_checkpoint
from .data import DataError, DocumentCluster, LabeledPrefix
from .layers import EncoderBlock, padding_bias
from .optim import Adam
from .rng import RngState

PROB_FLOOR = 1e-6


@dataclass
class AttributeScore:
    """Per-class probabilities for one prefix; sums to 1 within 1e-9."""

    probs: np.ndarray
    target_class: int | None = None

    def of(self, cls: int) -> float:
        return float(self.probs[cls])

    @property
    def beta(self) -> float:
        if self.target_class is None:
            raise ValueError("no target class set")
        return float(self.probs[self.target_class])


def clamp_probs(probs: np.ndarray) -> np.ndarray:
    """Affine floor keeping a proper distribution with entries in
    [PROB_FLOOR, 1 - PROB_FLOOR]; log of a clamped score is always finite."""
    c = probs.shape[-1]
    return (1.0 - c * PROB_FLOOR) * probs + PROB_FLOOR


@dataclass
class ClassifierConfig:
    classes: int = 2
    model_dim: int = 64
    heads: int = 4
    layers: int = 2
    ff_dim: int = 128
    max_len: int = 512
    lr: float = 1e-3
    epochs: int = 6
    batch_size: int = 64
    score_chunk: int = 512


@dataclass
class TrainReport:
    train_accuracy: float
    val_accuracy: float
    test_accuracy: float
    epoch_losses: list[float] = field(default_factory=list)


class ClassifierModel:
    def __init__(self, vocab_size: int, config: ClassifierConfig, rng: RngState):
        self.vocab_size = vocab_size
        self.config = config
        d = config.model_dim
        self.emb = ad.parameter(rng.normal((vocab_size, d), 0.02), "cls.emb")
        self.pos = ad.parameter(rng.normal((config.max_len, d), 0.02), "cls.pos")
        self.blocks = [
            EncoderBlock(rng, d, config.heads, config.ff_dim, f"cls.block{i}")
            for i in range(config.layers)
        ]
        # zero head: the untrained model must score every prefix uniformly
        self.head_w = ad.parameter(np.zeros((d, config.classes)), "cls.head_w")
        self.head_b = ad.parameter(np.zeros(config.classes), "cls.head_b")

    def parameters(self) -> list[Tensor]:
        params = [self.emb, self.pos, self.head_w, self.head_b]
        for b in self.blocks:
            params.extend(b.parameters())
        return params

    # -- forward -----------------------------------------------------------

    def _pad_batch(self, sequences: list[list[int]]) -> tuple[np.ndarray, np.ndarray]:
        lengths = np.array([min(len(s), self.config.max_len) for s in sequences])
        n = int(lengths.max())
        ids = np.zeros((len(sequences), n), dtype=np.int64)
        for i, s in enumerate(sequences):
            ids[i, : lengths[i]] = s[: lengths[i]]
        return ids, lengths

    def logits(self, sequences: list[list[int]]) -> Tensor:
        """Batched class logits; differentiable when a tape is active."""
        if any(len(s) == 0 for s in sequences):
            raise DataError("cannot score an empty prefix")
        ids, lengths = self._pad_batch(sequences)
        batch, n = ids.shape
        d = self.config.model_dim
        x = ad.add(
            ad.embedding(self.emb, ids.reshape(-1)),
            ad.embedding(self.pos, np.tile(np.arange(n), batch)),
        )
        bias = padding_bias(lengths, n, self.config.heads)
        for block in self.blocks:
            x = block(x, batch, n, bias)
        x = ad.layer_norm(x)
        mask = np.zeros((batch, n, 1))
        for i, ln in enumerate(lengths):
            mask[i, :ln, 0] = 1.0
        pooled = ad.reduce_sum(ad.mul_const(ad.reshape(x, (batch, n, d)), mask), axis=1)
        pooled = ad.mul_const(pooled, 1.0 / lengths[:, None])
        return ad.add(ad.matmul(pooled, self.head_w), self.head_b)

    def score_batch(self, sequences: list[list[int]]) -> np.ndarray:
        """Clamped probabilities, (batch, classes); never recorded on a tape."""
        out = np.empty((len(sequences), self.config.classes))
        chunk = self.config.score_chunk
        with ad.paused():
            for start in range(0, len(sequences), chunk):
                part = sequences[start : start + chunk]
                probs = ad.softmax(self.logits(part), axis=-1).data
                out[start : start + len(part)] = clamp_probs(probs)
        return out

    # -- state -------------------------------------------------------------

    def state_dict(self) -> dict[str, np.ndarray]:
        cfg = self.config
        state = {
            "meta/vocab_size": np.float64(self.vocab_size),
            "meta/classes": np.float64(cfg.classes),
            "meta/model_dim": np.float64(cfg.model_dim),
            "meta/heads": np.float64(cfg.heads),
            "meta/layers": np.float64(cfg.layers),
            "meta/ff_dim": np.float64(cfg.ff_dim),
            "meta/max_len": np.float64(cfg.max_len),
        }
        for p in self.parameters():
            state[p.name] = p.data
        return state

    def save(self, path) -> None:
        save_checkpoint(path, self.state_dict())

    @classmethod
    def load(cls, path) -> "ClassifierModel":
        state = load_checkpoint(path)
        config = ClassifierConfig(
            classes=int(state["meta/classes"]),
            model_dim=int(state["meta/model_dim"]),
            heads=int(state["meta/heads"]),
            layers=int(state["meta/layers"]),
            ff_dim=int(state["meta/ff_dim"]),
            max_len=int(state["meta/max_len"]),
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
# scoring API
# ---------------------------------------------------------------------------


CONTROL_IDS = frozenset((0, 1, 2, 4))  # PAD, BOS, EOS, DOCSEP; UNK stays (content)


def attribute_probs(classifier, sequences: list[list[int]]) -> np.ndarray:
    """Clamped class probabilities for generation prefixes.

    Control tokens are stripped before scoring; a prefix with no content
    tokens left scores uniformly.  ``classifier`` only needs a
    ``score_batch`` method and a class count.
    """
    stripped = [[t for t in seq if t not in CONTROL_IDS] for seq in sequences]
    classes = classifier.config.classes
    out = np.full((len(sequences), classes), clamp_probs(np.full(classes, 1.0 / classes))[0])
    todo = [i for i, s in enumerate(stripped) if s]
    if todo:
        scored = classifier.score_batch([stripped[i] for i in todo])
        for row, i in enumerate(todo):
            out[i] = scored[row]
    return out


def score_prefix(model: ClassifierModel, prefix: list[int], target_class: int | None = None) -> AttributeScore:
    if len(prefix) == 0:
        raise DataError("cannot score an empty prefix")
    probs = model.score_batch([list(prefix)])[0]
    return AttributeScore(probs, target_class)


def score_paragraph(model: ClassifierModel, cluster: DocumentCluster, i: int, target_class: int) -> float:
    if not 0 <= i < cluster.L:
        raise IndexError(f"paragraph {i} out of range [0, {cluster.L})")
    return score_prefix(model, cluster.paragraph_tokens(i)).of(target_class)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


def _accuracy(model: ClassifierModel, data: list[LabeledPrefix]) -> float:
    if not data:
        return 0.0
    probs = model.score_batch([p.tokens for p in data])
    pred = probs.argmax(axis=1)
    return float(np.mean(pred == np.array([p.label for p in data])))


def train_classifier(
    data: list[LabeledPrefix],
    config: ClassifierConfig,
    rng: RngState,
    vocab_size: int,
) -> tuple[ClassifierModel, TrainReport]:
    """Cross-entropy training with an 80-10-10 split; returns model + report."""
    if not data:
        raise DataError("empty training set")
    labels = {p.label for p in data}
    if len(labels) < 2:
        raise DataError(f"training data covers a single class {labels}")
    if max(labels) >= config.classes:
        raise DataError(f"label {max(labels)} outside {config.classes} classes")

    split_rng = rng.split()
    init_rng = rng.split()
    shuffle_rng = rng.split()

    order = split_rng.permutation(len(data))
    n_train = int(0.8 * len(data))
    n_val = int(0.1 * len(data))
    train = [data[i] for i in order[:n_train]]
    val = [data[i] for i in order[n_train : n_train + n_val]]
    test = [data[i] for i in order[n_train + n_val :]]

    model = ClassifierModel(vocab_size, config, init_rng)
    opt = Adam(model.parameters(), lr=config.lr)
    losses: list[float] = []
    for _ in range(config.epochs):
        epoch_loss = 0.0
        order = shuffle_rng.permutation(len(train))
        for start in range(0, len(train), config.batch_size):
            batch = [train[i] for i in order[start : start + config.batch_size]]
            targets = np.array([p.label for p in batch])
            opt.zero_grad()
            with Tape() as tape:
                loss = ad.cross_entropy(model.logits([p.tokens for p in batch]), targets)
                tape.backward(loss)
            opt.step()
            epoch_loss += loss.item() * len(batch)
        losses.append(epoch_loss / max(len(train), 1))

    report = TrainReport(
        train_accuracy=_accuracy(model, train),
        val_accuracy=_accuracy(model, val),
        test_accuracy=_accuracy(model, test),
        epoch_losses=losses,
    )
    return model, report
