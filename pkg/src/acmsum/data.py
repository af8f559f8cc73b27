"""Document clusters, labeled prefixes, and JSONL ingest/export.

A cluster is the multi-document summarization unit: tokenized documents, a
paragraph span table mapping paragraph indices back into each document's
token stream, and an optional reference summary.  Raw text is kept so that
save/load round trips are lossless.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .vocab import DOCSEP, Vocabulary, tokenize


class DataError(ValueError):
    pass


@dataclass
class LabeledPrefix:
    tokens: list[int]
    label: int


def expand_prefixes(sentence: list[int], label: int) -> list[LabeledPrefix]:
    """All prefix-length subsequences of a sentence, each carrying its label."""
    return [LabeledPrefix(list(sentence[: i + 1]), label) for i in range(len(sentence))]


@dataclass
class DocumentCluster:
    """Tokenized documents plus the paragraph span table."""

    documents: list[list[int]]
    paragraphs: list[tuple[int, tuple[int, int]]]  # (doc index, [start, end) token span)
    reference_summary: list[int] | None = None
    raw_documents: list[str] = field(default_factory=list)
    raw_summary: str | None = None
    labels: list[list[int]] | None = None  # per document, per paragraph

    @property
    def L(self) -> int:
        return len(self.paragraphs)

    def paragraph_tokens(self, i: int) -> list[int]:
        doc, (start, end) = self.paragraphs[i]
        return self.documents[doc][start:end]

    def paragraph_label(self, i: int) -> int | None:
        if self.labels is None:
            return None
        doc, _ = self.paragraphs[i]
        ordinal = sum(1 for d, _ in self.paragraphs[:i] if d == doc)
        return self.labels[doc][ordinal]

    def model_input(self, max_input_tokens: int) -> list[int]:
        """Documents joined by DOCSEP, truncated to the input budget."""
        joined: list[int] = []
        for k, doc in enumerate(self.documents):
            if k:
                joined.append(DOCSEP)
            joined.extend(doc)
        return joined[:max_input_tokens]

    def validate(self) -> None:
        spans_by_doc: dict[int, list[tuple[int, int]]] = {}
        for doc, (start, end) in self.paragraphs:
            if not 0 <= doc < len(self.documents):
                raise DataError(f"paragraph references document {doc} of {len(self.documents)}")
            if not 0 <= start < end <= len(self.documents[doc]):
                raise DataError(f"span [{start}, {end}) outside document {doc}")
            spans_by_doc.setdefault(doc, []).append((start, end))
        for doc, spans in spans_by_doc.items():
            spans.sort()
            for (s0, e0), (s1, _) in zip(spans, spans[1:]):
                if s1 < e0:
                    raise DataError(f"overlapping paragraph spans in document {doc}")
        if self.labels is not None:
            for doc, labs in enumerate(self.labels):
                n_paras = sum(1 for d, _ in self.paragraphs if d == doc)
                if len(labs) != n_paras:
                    raise DataError(
                        f"document {doc} has {n_paras} paragraphs but {len(labs)} labels"
                    )


def cluster_from_texts(
    documents: list[str],
    vocab: Vocabulary,
    summary: str | None = None,
    labels: list[list[int]] | None = None,
) -> DocumentCluster:
    """Tokenize raw documents; paragraphs are blank-line separated blocks."""
    token_docs: list[list[int]] = []
    spans: list[tuple[int, tuple[int, int]]] = []
    for d, text in enumerate(documents):
        blocks = [b for b in (p.strip() for p in text.split("\n\n")) if b]
        doc_ids: list[int] = []
        for block in blocks:
            ids = tokenize(block, vocab)
            if not ids:
                continue
            spans.append((d, (len(doc_ids), len(doc_ids) + len(ids))))
            doc_ids.extend(ids)
        token_docs.append(doc_ids)
    cluster = DocumentCluster(
        documents=token_docs,
        paragraphs=spans,
        reference_summary=tokenize(summary, vocab) if summary else None,
        raw_documents=list(documents),
        raw_summary=summary,
        labels=labels,
    )
    cluster.validate()
    return cluster


def save_jsonl(clusters: list[DocumentCluster], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for c in clusters:
            record = {
                "documents": c.raw_documents,
                "summary": c.raw_summary,
                "labels": c.labels,
            }
            fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")


def load_jsonl(path: str | Path, vocab: Vocabulary) -> list[DocumentCluster]:
    clusters = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
            if not isinstance(record, dict) or "documents" not in record:
                raise DataError(f"{path}:{lineno}: record missing 'documents' key")
            docs = record["documents"]
            if not isinstance(docs, list) or not all(isinstance(d, str) for d in docs):
                raise DataError(f"{path}:{lineno}: 'documents' must be a list of strings")
            clusters.append(
                cluster_from_texts(
                    docs,
                    vocab,
                    summary=record.get("summary"),
                    labels=record.get("labels"),
                )
            )
    return clusters


def split_multinews_record(text: str, separator: str = "|||||") -> list[str]:
    """Split a concatenated multi-document record on its separator marker."""
    return [part.strip() for part in text.split(separator) if part.strip()]
