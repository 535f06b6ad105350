"""Improved word vectors: word vector | POS one-hot | seven lexicon scores."""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .autodiff import DTYPE, Tensor
from .errors import DimensionError, EmptyInputError, ParseError

logger = logging.getLogger(__name__)

PAD = "<pad>"
FALLBACK_TAG = "X"
OOV_RANGE = 0.25

PENN_TAGS = (
    "CC", "CD", "DT", "EX", "FW", "IN", "JJ", "JJR", "JJS", "LS", "MD", "NN",
    "NNS", "NNP", "NNPS", "PDT", "POS", "PRP", "PRP$", "RB", "RBR", "RBS", "RP",
    "SYM", "TO", "UH", "VB", "VBD", "VBG", "VBN", "VBP", "VBZ", "WDT", "WP",
    "WP$", "WRB",
)

# name -> (positive, negative, neutral, total, min score, max score) as
# published for the resources this pipeline was designed around
LEXICON_REFERENCE = {
    "nrc_emoticon": (38312, 24156, 0, 62468, -4.999, 5.0),
    "nrc_emoticon_context": (28025, 27121, 0, 55146, -5.844, 4.495),
    "nrc_hashtag": (32048, 22081, 0, 54129, -6.925, 7.526),
    "nrc_hashtag_context": (19502, 24447, 0, 43949, -10.025, 10.661),
    "amazon_laptop": (14651, 11926, 0, 26577, -5.27, 3.702),
    "semeval2015": (776, 726, 13, 1515, -0.984, 0.984),
    "yelp_restaurant": (20347, 18927, 0, 39274, -4.44, 3.798),
}
LEXICON_ORDER = tuple(LEXICON_REFERENCE)
N_LEXICONS = 7


# -- word vectors -----------------------------------------------------------


def _word_seed(word: str, oov_seed: int) -> np.random.SeedSequence:
    digest = hashlib.blake2b(word.encode("utf-8"), digest_size=8).digest()
    return np.random.SeedSequence([oov_seed, int.from_bytes(digest, "little")])


@dataclass(frozen=True)
class WordVectorTable:
    dim: int
    entries: dict[str, np.ndarray]
    oov_seed: int = 0
    duplicates: int = 0

    def __contains__(self, word: str) -> bool:
        return word in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def lookup(self, word: str) -> np.ndarray:
        """Stored vector, or a reproducible uniform draw for unknown words."""
        vec = self.entries.get(word)
        if vec is not None:
            return vec
        rng = np.random.default_rng(_word_seed(word, self.oov_seed))
        return rng.uniform(-OOV_RANGE, OOV_RANGE, self.dim)

    @classmethod
    def random(cls, dim: int, oov_seed: int = 0) -> "WordVectorTable":
        """Empty table: every word gets its deterministic OOV vector."""
        return cls(dim, {}, oov_seed)


def _parse_vector_lines(path, lines: Iterable[tuple[int, str]], dim: int | None):
    entries: dict[str, np.ndarray] = {}
    duplicates = 0
    for lineno, line in lines:
        parts = line.rstrip("\n").rstrip(" ").split(" ")
        if not parts or parts == [""]:
            continue
        word, raw = parts[0], parts[1:]
        if dim is None:
            dim = len(raw)
        if len(raw) != dim or dim == 0:
            raise ParseError(path, lineno, f"expected {dim} values for {word!r}, got {len(raw)}")
        try:
            vec = np.array([float(v) for v in raw], dtype=DTYPE)
        except ValueError as exc:
            raise ParseError(path, lineno, str(exc)) from None
        if word in entries:
            duplicates += 1
            continue
        entries[word] = vec
    return entries, dim, duplicates


def _is_header(line: str) -> bool:
    parts = line.split()
    return len(parts) == 2 and all(p.isdigit() for p in parts)


def load_word_vectors(path, oov_seed: int = 0) -> WordVectorTable:
    """Read a word2vec/GloVe text file (header line optional).

    Duplicate words keep their first vector; the number dropped is stored on
    the table as ``duplicates``.
    """
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        lines = [(i, ln) for i, ln in enumerate(fh, start=1) if ln.strip()]
    if not lines:
        raise EmptyInputError(f"{path}: no word vectors")
    dim = None
    if _is_header(lines[0][1]):
        dim = int(lines[0][1].split()[1])
        lines = lines[1:]
    entries, dim, duplicates = _parse_vector_lines(path, lines, dim)
    if not entries:
        raise EmptyInputError(f"{path}: no word vectors")
    if duplicates:
        logger.warning("%s: %d duplicate words ignored", path, duplicates)
    return WordVectorTable(dim, entries, oov_seed, duplicates)


# -- lexicons ---------------------------------------------------------------


@dataclass(frozen=True)
class Lexicon:
    name: str
    entries: dict[str, float]
    observed_min: float
    observed_max: float
    skipped_ngrams: int = 0

    def __len__(self) -> int:
        return len(self.entries)


def load_lexicon(path, name: str) -> Lexicon:
    """Read ``term<TAB>score`` lines, keeping unigrams only.

    Columns after the score (e.g. occurrence counts) are ignored.
    """
    path = Path(path)
    entries: dict[str, float] = {}
    skipped = 0
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) < 2:
                raise ParseError(path, lineno, "expected term<TAB>score")
            term = fields[0]
            if len(term.split()) != 1:
                skipped += 1
                continue
            try:
                score = float(fields[1].replace("−", "-"))
            except ValueError:
                raise ParseError(path, lineno, f"unparseable score {fields[1]!r}") from None
            entries.setdefault(term, score)
    if not entries:
        raise EmptyInputError(f"{path}: lexicon has no unigram entries")
    scores = entries.values()
    return Lexicon(name, entries, min(scores), max(scores), skipped)


def normalized_score(lex: Lexicon, word: str) -> float:
    """Min-max map of the raw score onto [-1, 1]; 0 for absent words."""
    raw = lex.entries.get(word)
    span = lex.observed_max - lex.observed_min
    if raw is None or span == 0:
        return 0.0
    return 2.0 * (raw - lex.observed_min) / span - 1.0


@dataclass(frozen=True)
class LexiconSet:
    lexicons: tuple[Lexicon, ...]

    def __post_init__(self):
        if len(self.lexicons) != N_LEXICONS:
            raise ValueError(f"expected {N_LEXICONS} lexicons, got {len(self.lexicons)}")

    @property
    def names(self) -> list[str]:
        return [lex.name for lex in self.lexicons]

    def scores(self, word: str) -> np.ndarray:
        return np.array([normalized_score(lex, word) for lex in self.lexicons], dtype=DTYPE)


# -- POS tags ---------------------------------------------------------------


@dataclass(frozen=True)
class PosTagset:
    tags: tuple[str, ...] = PENN_TAGS + (FALLBACK_TAG,)
    index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        tags = tuple(self.tags)
        if FALLBACK_TAG not in tags:
            tags = tags + (FALLBACK_TAG,)
        if len(set(tags)) != len(tags):
            raise ValueError(f"duplicate tags in tagset: {tags}")
        object.__setattr__(self, "tags", tags)
        object.__setattr__(self, "index", {t: i for i, t in enumerate(tags)})

    @property
    def dim(self) -> int:
        return len(self.tags)


def pos_vector(tagset: PosTagset, tag: str) -> np.ndarray:
    v = np.zeros(tagset.dim, dtype=DTYPE)
    v[tagset.index.get(tag, tagset.index[FALLBACK_TAG])] = 1.0
    return v


# -- composition ------------------------------------------------------------


@dataclass(frozen=True)
class IwvTable:
    words: WordVectorTable
    tagset: PosTagset = field(default_factory=PosTagset)
    lexicons: LexiconSet | None = None

    @property
    def dim(self) -> int:
        return self.words.dim + self.tagset.dim + N_LEXICONS

    @property
    def lexicon_names(self) -> list[str]:
        return self.lexicons.names if self.lexicons else []

    def compose(self, word: str, tag: str) -> np.ndarray:
        if word == PAD:
            return np.zeros(self.dim, dtype=DTYPE)
        lex = self.lexicons.scores(word) if self.lexicons else np.zeros(N_LEXICONS, dtype=DTYPE)
        return np.concatenate([self.words.lookup(word), pos_vector(self.tagset, tag), lex])

    def embed(self, tokens: Sequence[str], tags: Sequence[str] | None = None) -> np.ndarray:
        """``[n, M]`` array for one sentence."""
        if not tokens:
            raise EmptyInputError("cannot embed an empty sentence")
        if tags is None:
            tags = [FALLBACK_TAG] * len(tokens)
        if len(tags) != len(tokens):
            raise DimensionError(f"{len(tokens)} tokens but {len(tags)} tags")
        return np.stack([self.compose(w, t) for w, t in zip(tokens, tags)])


def compose_iwv(word: str, tag: str, tables: IwvTable) -> np.ndarray:
    return tables.compose(word, tag)


def embed_sentence(tokens_with_tags: Sequence[tuple[str, str]], tables: IwvTable) -> Tensor:
    if not tokens_with_tags:
        raise EmptyInputError("cannot embed an empty sentence")
    words, tags = zip(*tokens_with_tags)
    return Tensor(tables.embed(words, tags))


# -- cache file -------------------------------------------------------------


def _fmt(v: float) -> str:
    return repr(float(v))


def write_iwv_cache(path, tables: IwvTable, pairs: Iterable[tuple[str, str]]) -> int:
    """Write composed vectors for ``(word, tag)`` pairs; keys are ``word_TAG``.

    Pairs are sorted so the file depends only on its contents.
    """
    pairs = sorted(set(pairs))
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        fh.write("#lexicon-order: " + ",".join(tables.lexicon_names) + "\n")
        fh.write("#tagset: " + ",".join(tables.tagset.tags) + "\n")
        fh.write(f"{len(pairs)} {tables.dim}\n")
        for word, tag in pairs:
            vec = tables.compose(word, tag)
            fh.write(f"{word}_{tag} " + " ".join(_fmt(v) for v in vec) + "\n")
    return len(pairs)


@dataclass(frozen=True)
class IwvCache:
    dim: int
    entries: dict[tuple[str, str], np.ndarray]
    lexicon_order: list[str]
    tags: list[str]


def read_iwv_cache(path) -> IwvCache:
    path = Path(path)
    meta: dict[str, list[str]] = {}
    with path.open(encoding="utf-8") as fh:
        raw = list(enumerate(fh, start=1))
    body = []
    for lineno, line in raw:
        if line.startswith("#"):
            key, _, value = line[1:].partition(":")
            value = value.strip()
            meta[key.strip()] = value.split(",") if value else []
        elif line.strip():
            body.append((lineno, line))
    if not body or not _is_header(body[0][1]):
        raise ParseError(path, body[0][0] if body else 1, "IWV cache requires a 'COUNT DIM' header")
    dim = int(body[0][1].split()[1])
    flat, _, _ = _parse_vector_lines(path, body[1:], dim)
    entries = {}
    for key, vec in flat.items():
        word, _, tag = key.rpartition("_")
        entries[(word, tag)] = vec
    return IwvCache(dim, entries, meta.get("lexicon-order", []), meta.get("tagset", []))
