"""Token dictionary and sparse bag-of-words vectors."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Dict, Iterable, Iterator, List, Sequence, Tuple

from .errors import EmptyVocabulary, MalformedDataset

# A bag-of-words vector: (token_id, count) pairs with strictly increasing ids
# and counts >= 1.
BowVector = List[Tuple[int, int]]


@dataclass
class Vocabulary:
    """Dense token<->id binding with per-token document frequencies."""

    token_to_id: Dict[str, int]
    id_to_token: List[str]
    doc_freq: List[int]
    num_docs_seen: int

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def save(self, path) -> None:
        payload = {
            "tokens": self.id_to_token,
            "doc_freq": self.doc_freq,
            "num_docs_seen": self.num_docs_seen,
        }
        with open(path, "w", encoding="utf-8") as f:
            json.dump(payload, f, ensure_ascii=False)

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8") as f:
            try:
                payload = json.load(f)
            except json.JSONDecodeError as exc:
                raise MalformedDataset(f"bad vocabulary file {path}: {exc}") from exc
        try:
            tokens = list(payload["tokens"])
            doc_freq = [int(x) for x in payload["doc_freq"]]
            num_docs = int(payload["num_docs_seen"])
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedDataset(f"bad vocabulary file {path}: {exc}") from exc
        if len(tokens) != len(doc_freq):
            raise MalformedDataset("tokens and doc_freq lengths disagree")
        return cls(
            token_to_id={t: i for i, t in enumerate(tokens)},
            id_to_token=tokens,
            doc_freq=doc_freq,
            num_docs_seen=num_docs,
        )


def build_vocab(
    token_docs: Iterable[Sequence[str]],
    min_df: int = 1,
    max_df_frac: float = 1.0,
) -> Vocabulary:
    """Build a vocabulary from token lists, filtering by document frequency.

    Tokens with document frequency < min_df or > max_df_frac * num_docs are
    dropped; surviving tokens get ids in first-seen order.
    """
    if min_df < 1:
        raise ValueError("min_df must be >= 1")
    if not 0.0 < max_df_frac <= 1.0:
        raise ValueError("max_df_frac must be in (0, 1]")

    df: Dict[str, int] = {}
    first_seen: List[str] = []
    num_docs = 0
    for tokens in token_docs:
        num_docs += 1
        seen_in_doc = set()
        for token in tokens:
            if token in seen_in_doc:
                continue
            seen_in_doc.add(token)
            if token in df:
                df[token] += 1
            else:
                df[token] = 1
                first_seen.append(token)

    max_df = max_df_frac * num_docs
    kept = [t for t in first_seen if min_df <= df[t] <= max_df]
    if not kept:
        raise EmptyVocabulary(
            f"no token passed df filtering (min_df={min_df}, "
            f"max_df_frac={max_df_frac}, docs={num_docs})"
        )
    return Vocabulary(
        token_to_id={t: i for i, t in enumerate(kept)},
        id_to_token=kept,
        doc_freq=[df[t] for t in kept],
        num_docs_seen=num_docs,
    )


def to_bow(tokens: Sequence[str], vocab: Vocabulary) -> BowVector:
    """Count in-vocabulary tokens; out-of-vocabulary tokens are dropped."""
    if len(vocab) == 0:
        raise EmptyVocabulary("cannot vectorize against an empty vocabulary")
    counts: Dict[int, int] = {}
    t2i = vocab.token_to_id
    for token in tokens:
        idx = t2i.get(token)
        if idx is not None:
            counts[idx] = counts.get(idx, 0) + 1
    return sorted(counts.items())


def corpus_to_bows(
    token_docs: Iterable[Sequence[str]], vocab: Vocabulary
) -> Iterator[BowVector]:
    for tokens in token_docs:
        yield to_bow(tokens, vocab)
