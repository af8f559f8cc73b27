"""Paragraph similarity graph from tf-idf cosine similarity.

The graph G is an L x L matrix of values in [0, 1] with unit diagonal.
Term weights use smoothed idf: ln((1 + L) / (1 + df)) + 1, with df counted
over the cluster's own paragraphs.
"""

from __future__ import annotations

import numpy as np

from .data import DocumentCluster


def tfidf_matrix(paragraphs: list[list[int]]) -> np.ndarray:
    """Rows are tf-idf vectors over the union vocabulary of the paragraphs."""
    n = len(paragraphs)
    terms = sorted({t for p in paragraphs for t in p})
    col = {t: j for j, t in enumerate(terms)}
    tf = np.zeros((n, len(terms)))
    for i, para in enumerate(paragraphs):
        for t in para:
            tf[i, col[t]] += 1.0
    df = (tf > 0).sum(axis=0)
    idf = np.log((1.0 + n) / (1.0 + df)) + 1.0
    return tf * idf


def graph_from_paragraphs(paragraphs: list[list[int]]) -> np.ndarray:
    n = len(paragraphs)
    if n < 1:
        raise ValueError("similarity graph needs at least one paragraph")
    vectors = tfidf_matrix(paragraphs)
    norms = np.linalg.norm(vectors, axis=1)
    graph = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            if paragraphs[i] == paragraphs[j] and paragraphs[i]:
                graph[i, j] = graph[j, i] = 1.0  # cosine of identical vectors, exactly
                continue
            denom = norms[i] * norms[j]
            if denom > 0:
                graph[i, j] = graph[j, i] = float(vectors[i] @ vectors[j] / denom)
    np.clip(graph, 0.0, 1.0, out=graph)
    np.fill_diagonal(graph, 1.0)
    return graph


def build_similarity_graph(cluster: DocumentCluster) -> np.ndarray:
    return graph_from_paragraphs([cluster.paragraph_tokens(i) for i in range(cluster.L)])
