"""Beam search with length penalty and attribute future discriminators.

Each step expands every live beam with its shortlist of likely next
tokens; when the discriminator weight is positive, every candidate
extension is rescored by the classifier's probability that the extended
prefix expresses the target attribute, and beams are ranked by the
log-space combination of base likelihood and attribute score.  Finished
beams are frozen and compete in the final length-penalized ranking.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .classifier import ClassifierModel, attribute_probs
from .data import DocumentCluster
from .encoder import prepare_cluster
from .metrics import ConsistencyReport, CorpusReport, corpus_report
from .summarizer import SummarizerModel
from .vocab import EOS


@dataclass
class BeamConfig:
    beam_width: int = 5
    shortlist_k: int = 200
    max_steps: int = 32
    length_penalty: float = 0.6
    alpha1: float = 0.22
    gnmt_penalty: bool = False  # alternative length normalization

    def __post_init__(self) -> None:
        if self.beam_width < 1:
            raise ValueError("beam_width must be >= 1")
        if self.shortlist_k < self.beam_width:
            raise ValueError("shortlist_k must be >= beam_width")
        if self.length_penalty < 0:
            raise ValueError("length_penalty must be >= 0")
        if self.alpha1 < 0:
            raise ValueError("alpha1 must be >= 0")


@dataclass(frozen=True)
class Beam:
    """Partial output: token ids (no BOS), likelihoods, combined score."""

    tokens: tuple[int, ...]
    base_lp: float
    attr_lp: float
    combined: float
    finished: bool = False

    def check(self) -> None:
        assert self.base_lp <= 0.0
        assert self.attr_lp <= 0.0


def _length_normalizer(length: int, config: BeamConfig) -> float:
    if config.gnmt_penalty:
        return ((5.0 + length) / 6.0) ** config.length_penalty
    return float(max(length, 1)) ** config.length_penalty


def _final_rank_key(beam: Beam, config: BeamConfig):
    return (-(beam.combined / _length_normalizer(len(beam.tokens), config)), beam.tokens)


def _select_key(beam: Beam):
    # per-step selection: combined score, ties broken lexicographically
    return (-beam.combined, beam.tokens)


def conditioned_beam_search(
    model: SummarizerModel,
    cluster: DocumentCluster,
    config: BeamConfig,
    classifier: ClassifierModel | None = None,
    target_class: int | None = None,
) -> Beam:
    """Best summary under combined base + alpha1 * attribute log-probability.

    With ``alpha1 = 0`` the classifier is never consulted and this is exact
    standard beam search.
    """
    use_attr = config.alpha1 > 0.0
    if use_attr and (classifier is None or target_class is None):
        raise ValueError("alpha1 > 0 requires a classifier and a target class")
    enc_cfg = model.config.encoder
    enc = prepare_cluster(
        cluster, enc_cfg, classifier if enc_cfg.alpha2 > 0 else None, target_class
    )
    with ad.paused():
        memory = model.encode(enc)
    max_steps = min(config.max_steps, model.config.max_summary_tokens - 1)

    beams = [Beam(tokens=(), base_lp=0.0, attr_lp=0.0, combined=0.0)]
    for _ in range(max_steps):
        live = [b for b in beams if not b.finished]
        if not live:
            break
        candidates: list[Beam] = [b for b in beams if b.finished]
        extensions: list[Beam] = []
        for beam in live:
            logprobs = model.next_token_logprobs(memory, list(beam.tokens))
            k = min(config.shortlist_k, logprobs.shape[0])
            top = np.argpartition(logprobs, -k)[-k:]
            for v in top:
                v = int(v)
                step_lp = float(logprobs[v])
                assert step_lp <= 0.0  # appending a token never raises base_lp
                extensions.append(
                    Beam(
                        tokens=beam.tokens + (v,),
                        base_lp=beam.base_lp + step_lp,
                        attr_lp=0.0,
                        combined=0.0,
                        finished=v == EOS,
                    )
                )
        if use_attr:
            probs = attribute_probs(classifier, [list(b.tokens) for b in extensions])
            attr_lps = np.log(probs[:, target_class])
            extensions = [
                replace(b, attr_lp=float(a), combined=b.base_lp + config.alpha1 * float(a))
                for b, a in zip(extensions, attr_lps)
            ]
        else:
            extensions = [replace(b, combined=b.base_lp) for b in extensions]
        for b in extensions:
            b.check()
        candidates.extend(extensions)
        candidates.sort(key=_select_key)
        beams = candidates[: config.beam_width]

    beams.sort(key=lambda b: _final_rank_key(b, config))
    return beams[0]


def beam_search(model: SummarizerModel, cluster: DocumentCluster, config: BeamConfig) -> Beam:
    """Unconditioned baseline decode: ranking by base likelihood only."""
    return conditioned_beam_search(model, cluster, replace(config, alpha1=0.0))


def summary_tokens(beam: Beam) -> list[int]:
    return [t for t in beam.tokens if t != EOS]


# ---------------------------------------------------------------------------
# ablation evaluation
# ---------------------------------------------------------------------------


@dataclass
class AblationRow:
    name: str
    report: CorpusReport

    @property
    def consistency(self) -> ConsistencyReport:
        assert self.report.consistency is not None
        return self.report.consistency


@dataclass
class AblationReport:
    rows: dict[str, AblationRow] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {name: row.report.to_dict() for name, row in self.rows.items()}

    def table(self) -> str:
        header = f"{'variant':<24}{'R-1':>8}{'R-2':>8}{'R-L':>8}{'mean':>8}{'std':>8}"
        lines = [header]
        for name, row in self.rows.items():
            r = row.report
            c = r.consistency
            lines.append(
                f"{name:<24}{r.rouge1.f1:>8.4f}{r.rouge2.f1:>8.4f}{r.rougel.f1:>8.4f}"
                f"{c.mean:>8.4f}{c.std:>8.4f}"
            )
        return "\n".join(lines)


def ablate(
    variants: dict[str, tuple[SummarizerModel, float]],
    clusters: list[DocumentCluster],
    classifier: ClassifierModel,
    target_class: int,
    config: BeamConfig,
) -> AblationReport:
    """Decode the test clusters under each (model, alpha1) variant and report
    ROUGE plus attribute-consistency statistics."""
    missing = [c for c in clusters if c.reference_summary is None]
    if missing:
        raise ValueError(f"{len(missing)} clusters lack reference summaries")
    report = AblationReport()
    for name, (model, alpha1) in variants.items():
        beam_cfg = replace(config, alpha1=alpha1)
        decoded = [
            summary_tokens(
                conditioned_beam_search(model, c, beam_cfg, classifier, target_class)
            )
            for c in clusters
        ]
        row = corpus_report(
            decoded,
            [c.reference_summary for c in clusters],
            classifier=classifier,
            target_class=target_class,
        )
        report.rows[name] = AblationRow(name, row)
    return report
