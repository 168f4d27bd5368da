"""Deterministic text normalization: cleaning, stopwords, stemming.

The pipeline is a pure function of (text, config): NFKC normalization,
optional lowercasing, punctuation/special-character stripping, whitespace
tokenization, stopword removal, optional Porter stemming. Digits are kept
because gene and variant names mix letters and digits.
"""
from __future__ import annotations

import unicodedata
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import FrozenSet, List, Set

from . import porter

_STOPWORD_RESOURCE = "stopwords_en.txt"

# Characters whose Unicode category starts with one of these are replaced
# by spaces before tokenization: punctuation, symbols, control/format.
_STRIP_CATEGORIES = ("P", "S", "C")

_strip_cache: dict = {}


def _is_stripped(ch: str) -> bool:
    flag = _strip_cache.get(ch)
    if flag is None:
        flag = unicodedata.category(ch)[0] in _STRIP_CATEGORIES
        _strip_cache[ch] = flag
    return flag


@dataclass(frozen=True)
class PipelineConfig:
    """Immutable preprocessing configuration.

    stopword_list entries must already be lowercase; stemmer is either
    "porter" or "none".
    """

    stopword_list: FrozenSet[str] = field(default_factory=frozenset)
    strip_punctuation: bool = True
    stemmer: str = "porter"
    lowercase: bool = True

    def __post_init__(self) -> None:
        if self.stemmer not in ("porter", "none"):
            raise ValueError(f"unknown stemmer: {self.stemmer!r}")
        if any(w != w.lower() for w in self.stopword_list):
            raise ValueError("stopword_list entries must be lowercase")


def preprocess(text: str, cfg: PipelineConfig) -> List[str]:
    """Normalize text into a token list; may be empty.

    Order of operations: NFKC -> lowercase -> strip punctuation ->
    split on whitespace -> drop stopwords -> stem.
    """
    text = unicodedata.normalize("NFKC", text)
    if cfg.lowercase:
        text = text.lower()
    if cfg.strip_punctuation:
        table = {ord(c): " " for c in set(text) if _is_stripped(c)}
        if table:
            text = text.translate(table)
    tokens = text.split()
    if cfg.stopword_list:
        tokens = [t for t in tokens if t.lower() not in cfg.stopword_list]
    if cfg.stemmer == "porter":
        tokens = [porter.stem(t) for t in tokens]
    return tokens


def load_stopwords(path) -> Set[str]:
    """Read a one-word-per-line stopword file; `#` lines are comments."""
    words: Set[str] = set()
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            words.add(line.lower())
    return words


def default_stopwords() -> Set[str]:
    """The bundled English stopword list (179 words)."""
    ref = resources.files("biotopics").joinpath("data", _STOPWORD_RESOURCE)
    with resources.as_file(ref) as path:
        return load_stopwords(Path(path))


def default_config() -> PipelineConfig:
    """Porter stemming, lowercasing and the bundled stopword list."""
    return PipelineConfig(stopword_list=frozenset(default_stopwords()))
