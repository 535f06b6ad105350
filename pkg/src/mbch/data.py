"""Corpus loading, tokenisation, padding and stratified fold assignment."""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .embeddings import FALLBACK_TAG, PAD, IwvTable
from .errors import EmptyInputError, ParseError, StratificationError, UsageError

_TOKEN_RE = re.compile(r"[^\W_]+|_|[^\w\s]", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, and give each punctuation mark its own token."""
    tokens = _TOKEN_RE.findall(text.lower())
    if not tokens:
        raise EmptyInputError("tokenize: no tokens in input")
    return tokens


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[str, ...]
    tags: tuple[str, ...]
    label: int
    source_line: int = 0

    def __post_init__(self):
        if not self.tokens or len(self.tokens) != len(self.tags):
            raise ValueError(f"sentence needs >= 1 token and one tag per token: {self}")

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass
class Dataset:
    sentences: list[Sentence]
    num_classes: int
    label_names: list[str] = field(default_factory=list)
    name: str = ""

    def __post_init__(self):
        bad = [s.source_line for s in self.sentences if not 0 <= s.label < self.num_classes]
        if bad:
            raise ValueError(f"labels outside [0, {self.num_classes}) on lines {bad[:5]}")

    def __len__(self) -> int:
        return len(self.sentences)

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.sentences], dtype=np.int64)

    @property
    def vocabulary(self) -> set[str]:
        return {t for s in self.sentences for t in s.tokens}

    def subset(self, indices: Sequence[int]) -> "Dataset":
        return Dataset([self.sentences[i] for i in indices], self.num_classes, self.label_names, self.name)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)


def load_dataset(path, format: str = "raw", name: str | None = None) -> Dataset:
    """Read ``label<TAB>text`` (raw) or ``label<TAB>tok_TAG tok_TAG ...`` (tagged).

    Labels are mapped to 0..k-1 in order of first appearance.
    """
    if format not in ("raw", "tagged"):
        raise UsageError(f"unknown dataset format {format!r}; expected 'raw' or 'tagged'")
    path = Path(path)
    label_ids: dict[str, int] = {}
    sentences = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            label, sep, text = line.partition("\t")
            if not sep or not label.strip() or not text.strip():
                raise ParseError(path, lineno, "expected label<TAB>text")
            if format == "raw":
                try:
                    tokens = tokenize(text)
                except EmptyInputError:
                    raise ParseError(path, lineno, "no tokens in text") from None
                tags = [FALLBACK_TAG] * len(tokens)
            else:
                tokens, tags = [], []
                for unit in text.split():
                    word, us, tag = unit.rpartition("_")
                    if not us or not word or not tag:
                        raise ParseError(path, lineno, f"unit {unit!r} is not token_TAG")
                    tokens.append(word.lower())
                    tags.append(tag)
            label_id = label_ids.setdefault(label.strip(), len(label_ids))
            sentences.append(Sentence(tuple(tokens), tuple(tags), label_id, lineno))
    if not sentences:
        raise EmptyInputError(f"{path}: no sentences")
    return Dataset(sentences, max(len(label_ids), 2), list(label_ids), name or path.stem)


# -- folds --------------------------------------------------------------------


@dataclass(frozen=True)
class FoldSplit:
    folds: tuple[np.ndarray, ...]

    def __len__(self) -> int:
        return len(self.folds)

    def test_indices(self, i: int) -> np.ndarray:
        return self.folds[i]

    def train_indices(self, i: int) -> np.ndarray:
        return np.sort(np.concatenate([f for j, f in enumerate(self.folds) if j != i]))

    def assignment(self) -> np.ndarray:
        n = sum(len(f) for f in self.folds)
        out = np.empty(n, dtype=np.int64)
        for j, f in enumerate(self.folds):
            out[f] = j
        return out

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "fold"])
            w.writerows(enumerate(self.assignment().tolist()))


def stratified_kfold(labels, k: int, seed: int) -> FoldSplit:
    """Shuffle each class with ``seed`` and deal its members round-robin into ``k`` folds.

    Dealing continues across classes, so fold sizes differ by at most one.
    """
    if isinstance(labels, Dataset):
        labels = labels.labels
    labels = np.asarray(labels)
    if k < 2:
        raise StratificationError(f"need at least 2 folds, got {k}")
    rng = np.random.default_rng(seed)
    buckets: list[list[int]] = [[] for _ in range(k)]
    cursor = 0
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        if len(members) < k:
            raise StratificationError(f"class {cls} has {len(members)} samples, fewer than k={k}")
        for idx in rng.permutation(members):
            buckets[cursor % k].append(int(idx))
            cursor += 1
    return FoldSplit(tuple(np.sort(np.array(b, dtype=np.int64)) for b in buckets))


# -- batching -----------------------------------------------------------------


def padded_length(lengths: Sequence[int], pad_to_min: int) -> int:
    return max(max(lengths), pad_to_min)


@dataclass(frozen=True)
class Batch:
    indices: np.ndarray
    tokens: list[list[str]]
    tags: list[list[str]]
    labels: np.ndarray
    valid_lens: np.ndarray

    def embed(self, tables: IwvTable) -> np.ndarray:
        return np.stack([tables.embed(t, g) for t, g in zip(self.tokens, self.tags)])


def batch_order(n: int, batch_size: int, shuffle_seed: int | None) -> list[np.ndarray]:
    order = np.arange(n) if shuffle_seed is None else np.random.default_rng(shuffle_seed).permutation(n)
    return [order[i : i + batch_size] for i in range(0, n, batch_size)]


def batch_iter(
    data: Dataset | Sequence[Sentence],
    batch_size: int,
    pad_to_min: int,
    shuffle_seed: int | None = None,
) -> Iterator[Batch]:
    """Yield padded batches; the last, partial batch is kept."""
    sentences = data.sentences if isinstance(data, Dataset) else list(data)
    for idx in batch_order(len(sentences), batch_size, shuffle_seed):
        chosen = [sentences[i] for i in idx]
        lens = np.array([len(s) for s in chosen], dtype=np.int64)
        width = padded_length(lens, pad_to_min)
        yield Batch(
            indices=idx,
            tokens=[list(s.tokens) + [PAD] * (width - len(s)) for s in chosen],
            tags=[list(s.tags) + [FALLBACK_TAG] * (width - len(s)) for s in chosen],
            labels=np.array([s.label for s in chosen], dtype=np.int64),
            valid_lens=lens,
        )


def pad_stack(arrays: Sequence[np.ndarray], pad_to_min: int) -> tuple[np.ndarray, np.ndarray]:
    """Stack ``[n_i, M]`` embeddings into ``[B, n, M]`` with zero (pad) rows."""
    lens = np.array([a.shape[0] for a in arrays], dtype=np.int64)
    width = padded_length(lens, pad_to_min)
    out = np.zeros((len(arrays), width, arrays[0].shape[1]))
    for i, a in enumerate(arrays):
        out[i, : a.shape[0]] = a
    return out, lens


def embed_dataset(data: Dataset, tables: IwvTable) -> list[np.ndarray]:
    return [tables.embed(s.tokens, s.tags) for s in data.sentences]
