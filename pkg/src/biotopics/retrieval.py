"""Topic-distribution index and cosine-similarity document ranking."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from .corpus import DocumentStore
from .errors import DimensionMismatch, EmptyIndex
from .ovblda import TopicModel, infer
from .textprep import PipelineConfig, preprocess
from .vocab import Vocabulary, to_bow

DEFAULT_TOP_K = 10

# entries: (doc_id, score) with scores non-increasing, ties by ascending id
RankedList = List[Tuple[str, float]]


@dataclass
class TopicIndex:
    """Per-document topic distributions in store insertion order."""

    doc_ids: List[str]
    thetas: np.ndarray  # N x K, rows sum to 1
    norms: np.ndarray  # L2 norm per row

    def __len__(self) -> int:
        return len(self.doc_ids)

    def subset(self, doc_ids) -> "TopicIndex":
        """Row-select an index (e.g. to rank only a question's documents)."""
        pos = {d: i for i, d in enumerate(self.doc_ids)}
        keep = [pos[d] for d in doc_ids if d in pos]
        return TopicIndex(
            doc_ids=[self.doc_ids[i] for i in keep],
            thetas=self.thetas[keep] if keep else np.empty((0, self.thetas.shape[1])),
            norms=self.norms[keep] if keep else np.empty(0),
        )


def index_from_bows(model: TopicModel, doc_ids: List[str], bows) -> TopicIndex:
    """Infer one topic distribution per already-vectorized document."""
    rows = [infer(model, bow) for bow in bows]
    thetas = np.vstack(rows) if rows else np.empty((0, model.num_topics))
    norms = np.linalg.norm(thetas, axis=1)
    return TopicIndex(doc_ids=list(doc_ids), thetas=thetas, norms=norms)


def build_index(
    model: TopicModel,
    store: DocumentStore,
    prep: PipelineConfig,
    vocab: Vocabulary,
) -> TopicIndex:
    """Infer one topic distribution per stored document.

    Documents are represented by title and abstract concatenated; rows
    follow store insertion order.
    """
    if len(vocab) != model.vocab_size:
        raise DimensionMismatch(
            f"vocabulary size {len(vocab)} != model vocab_size {model.vocab_size}"
        )
    doc_ids: List[str] = []
    bows = []
    for doc in store:
        text = f"{doc.title} {doc.abstract_text}".strip()
        bows.append(to_bow(preprocess(text, prep), vocab))
        doc_ids.append(doc.doc_id)
    return index_from_bows(model, doc_ids, bows)


def rank_by_similarity(index: TopicIndex, theta_q: np.ndarray, k: int) -> RankedList:
    """Top-k documents by cosine similarity to a query topic vector.

    Scores land in [0, 1] for non-negative vectors; ties are broken by
    ascending doc_id. Cosine is scale-invariant, so any positive rescaling
    of theta_q yields the same ranking and scores.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(index) == 0:
        raise EmptyIndex("query issued against an empty index")
    theta_q = np.asarray(theta_q, dtype=float)
    q_norm = np.linalg.norm(theta_q)
    # probability vectors cannot have zero norm
    assert q_norm > 0 and np.all(index.norms > 0)
    scores = (index.thetas @ theta_q) / (index.norms * q_norm)
    scores = np.clip(scores, 0.0, 1.0)
    order = sorted(range(len(index)), key=lambda i: (-scores[i], index.doc_ids[i]))
    return [(index.doc_ids[i], float(scores[i])) for i in order[:k]]


def query(
    index: TopicIndex,
    model: TopicModel,
    vocab: Vocabulary,
    prep: PipelineConfig,
    question_body: str,
    k: int = DEFAULT_TOP_K,
) -> RankedList:
    """Infer the query's topic distribution and rank documents against it."""
    theta_q = infer(model, to_bow(preprocess(question_body, prep), vocab))
    return rank_by_similarity(index, theta_q, k)


def save_run(run: Dict[str, RankedList], path) -> None:
    """Write a retrieval run file: question_id -> ranked doc/score pairs."""
    payload = {
        qid: [{"doc_id": d, "score": s} for d, s in ranked]
        for qid, ranked in run.items()
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def load_run(path) -> Dict[str, RankedList]:
    with open(path, encoding="utf-8") as f:
        payload = json.load(f)
    return {
        qid: [(e["doc_id"], float(e["score"])) for e in entries]
        for qid, entries in payload.items()
    }
