"""ROUGE-1/2/L scoring and attribute-consistency statistics.

Token-level ROUGE over the package's own tokenizer (no stemming or
stopword handling), macro-averaged over clusters.  Consistency reports
population mean/std of the classifier's target-class probability over a
set of summaries.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import asdict, dataclass

import numpy as np

from . import kernels
from .classifier import attribute_probs


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float


def _prf(overlap: float, n_candidate: float, n_reference: float) -> PRF:
    p = overlap / n_candidate if n_candidate else 0.0
    r = overlap / n_reference if n_reference else 0.0
    f1 = 2 * p * r / (p + r) if (p + r) else 0.0
    return PRF(p, r, f1)


def _ngrams(tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate, reference, n: int) -> PRF:
    """Clipped n-gram overlap precision/recall/f1."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    cand = _ngrams(list(candidate), n)
    ref = _ngrams(list(reference), n)
    overlap = sum(min(count, ref[g]) for g, count in cand.items())
    return _prf(overlap, sum(cand.values()), sum(ref.values()))


def rouge_l(candidate, reference) -> PRF:
    """Longest-common-subsequence precision/recall/f1."""
    a = np.asarray(list(candidate), dtype=np.int64)
    b = np.asarray(list(reference), dtype=np.int64)
    lcs = kernels.lcs_len(a, b) if a.size and b.size else 0
    return _prf(float(lcs), float(a.size), float(b.size))


@dataclass(frozen=True)
class RougeScore:
    r1: PRF
    r2: PRF
    rl: PRF


def rouge_score(candidate, reference) -> RougeScore:
    return RougeScore(
        r1=rouge_n(candidate, reference, 1),
        r2=rouge_n(candidate, reference, 2),
        rl=rouge_l(candidate, reference),
    )


@dataclass(frozen=True)
class ConsistencyReport:
    mean: float
    std: float  # population
    count: int


def consistency_stats(summaries: list[list[int]], classifier, target_class: int) -> ConsistencyReport:
    """Mean/std of the classifier's target-class probability per summary."""
    if not summaries:
        raise ValueError("consistency stats need at least one summary")
    probs = attribute_probs(classifier, summaries)[:, target_class]
    # identical scores have exactly zero spread; np.std would leak mean rounding
    std = 0.0 if np.all(probs == probs[0]) else float(probs.std())
    return ConsistencyReport(float(probs.mean()), std, len(summaries))


@dataclass(frozen=True)
class CorpusReport:
    rouge1: PRF
    rouge2: PRF
    rougel: PRF
    consistency: ConsistencyReport | None
    pairs: int

    def to_dict(self) -> dict:
        out = {
            "pairs": self.pairs,
            "rouge1": asdict(self.rouge1),
            "rouge2": asdict(self.rouge2),
            "rougeL": asdict(self.rougel),
        }
        if self.consistency is not None:
            out["consistency"] = asdict(self.consistency)
        return out

    def table(self) -> str:
        rows = [
            ("metric", "precision", "recall", "f1"),
            ("ROUGE-1",) + tuple(f"{v:.4f}" for v in astuple_prf(self.rouge1)),
            ("ROUGE-2",) + tuple(f"{v:.4f}" for v in astuple_prf(self.rouge2)),
            ("ROUGE-L",) + tuple(f"{v:.4f}" for v in astuple_prf(self.rougel)),
        ]
        widths = [max(len(r[i]) for r in rows) for i in range(4)]
        lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)) for row in rows]
        if self.consistency is not None:
            lines.append(
                f"attribute consistency: mean {self.consistency.mean:.4f} "
                f"std {self.consistency.std:.4f} over {self.consistency.count} summaries"
            )
        return "\n".join(lines)


def astuple_prf(prf: PRF) -> tuple[float, float, float]:
    return (prf.precision, prf.recall, prf.f1)


def _mean_prf(scores: list[PRF]) -> PRF:
    return PRF(
        float(np.mean([s.precision for s in scores])),
        float(np.mean([s.recall for s in scores])),
        float(np.mean([s.f1 for s in scores])),
    )


def corpus_report(
    candidates: list[list[int]],
    references: list[list[int]],
    classifier=None,
    target_class: int | None = None,
) -> CorpusReport:
    """Macro-averaged ROUGE over aligned candidate/reference pairs, plus a
    consistency report when a classifier is supplied."""
    if len(candidates) != len(references):
        raise ValueError(
            f"candidate/reference count mismatch: {len(candidates)} != {len(references)}"
        )
    if not candidates:
        raise ValueError("corpus report needs at least one pair")
    scores = [rouge_score(c, r) for c, r in zip(candidates, references)]
    consistency = None
    if classifier is not None:
        if target_class is None:
            raise ValueError("classifier given without a target class")
        consistency = consistency_stats(candidates, classifier, target_class)
    return CorpusReport(
        rouge1=_mean_prf([s.r1 for s in scores]),
        rouge2=_mean_prf([s.r2 for s in scores]),
        rougel=_mean_prf([s.rl for s in scores]),
        consistency=consistency,
        pairs=len(candidates),
    )
