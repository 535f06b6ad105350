"""Small generated corpora for sanity runs and tests."""

from __future__ import annotations

import numpy as np

from .data import Dataset, Sentence
from .embeddings import FALLBACK_TAG, WordVectorTable

FILLER = ("the", "a", "film", "food", "was", "really", "quite", "service", "plot", "and", "it", "very")
KEYWORDS = ("great", "awful")


def keyword_corpus(n: int = 32, seed: int = 0, min_len: int = 3, max_len: int = 9) -> Dataset:
    """Balanced binary corpus whose label is decided by a single keyword.

    Class 0 sentences contain ``great`` and class 1 sentences ``awful`` at a
    random position among filler words, so the classes are separable by a
    width-1 feature.
    """
    rng = np.random.default_rng(seed)
    sentences = []
    for i in range(n):
        label = i % 2
        length = int(rng.integers(min_len, max_len + 1))
        words = [FILLER[j] for j in rng.integers(0, len(FILLER), length - 1)]
        words.insert(int(rng.integers(0, length)), KEYWORDS[label])
        sentences.append(Sentence(tuple(words), (FALLBACK_TAG,) * length, label, i + 1))
    return Dataset(sentences, 2, ["pos", "neg"], "keyword")


def embed_plain(data: Dataset, dim: int, seed: int = 0) -> list[np.ndarray]:
    """Embed with deterministic random word vectors only (no POS or lexicon part)."""
    table = WordVectorTable.random(dim, seed)
    return [np.stack([table.lookup(w) for w in s.tokens]) for s in data.sentences]
