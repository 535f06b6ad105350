import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mbch.embeddings import (
    LEXICON_ORDER,
    LEXICON_REFERENCE,
    PAD,
    PENN_TAGS,
    IwvTable,
    Lexicon,
    LexiconSet,
    PosTagset,
    WordVectorTable,
    compose_iwv,
    embed_sentence,
    load_lexicon,
    load_word_vectors,
    normalized_score,
    pos_vector,
    read_iwv_cache,
    write_iwv_cache,
)
from mbch.errors import EmptyInputError, ParseError


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


# -- word vectors -------------------------------------------------------------


def test_load_word_vectors_with_header(tmp_path):
    f = write(tmp_path / "v.txt", "2 3\ngood 0.1 0.2 0.3\nbad -1 0 1.5\n")
    table = load_word_vectors(f)
    assert table.dim == 3 and len(table) == 2
    assert table.lookup("good").tolist() == [0.1, 0.2, 0.3]
    assert table.lookup("bad").tolist() == [-1.0, 0.0, 1.5]


def test_load_word_vectors_without_header(tmp_path):
    f = write(tmp_path / "v.txt", "good 0.1 0.2\nbad 1 2\n")
    assert load_word_vectors(f).dim == 2


def test_load_word_vectors_duplicates_keep_first(tmp_path):
    f = write(tmp_path / "v.txt", "a 1 1\nb 2 2\na 3 3\n")
    table = load_word_vectors(f)
    assert table.duplicates == 1
    assert table.lookup("a").tolist() == [1.0, 1.0]


def test_load_word_vectors_ragged_line(tmp_path):
    f = write(tmp_path / "v.txt", "a 1 1\nb 2 2 2\n")
    with pytest.raises(ParseError) as err:
        load_word_vectors(f)
    assert err.value.line == 2


def test_load_word_vectors_empty(tmp_path):
    with pytest.raises(EmptyInputError):
        load_word_vectors(write(tmp_path / "v.txt", ""))


def test_oov_vectors_deterministic_and_bounded():
    table = WordVectorTable.random(50, oov_seed=3)
    a, b = table.lookup("zyzzyva"), table.lookup("zyzzyva")
    np.testing.assert_array_equal(a, b)
    assert np.all(np.abs(a) <= 0.25)
    assert not np.array_equal(a, table.lookup("quokka"))
    assert not np.array_equal(a, WordVectorTable.random(50, oov_seed=4).lookup("zyzzyva"))


# -- lexicons -----------------------------------------------------------------


def test_lexicon_range_and_ngrams(tmp_path):
    f = write(tmp_path / "lex.tsv", "good\t1.9\nbad\t-2.5\nnot good\t-3.0\n")
    lex = load_lexicon(f, "toy")
    assert (lex.observed_min, lex.observed_max) == (-2.5, 1.9)
    assert len(lex) == 2 and lex.skipped_ngrams == 1


def test_lexicon_extra_columns_ignored(tmp_path):
    f = write(tmp_path / "lex.tsv", "good\t1.5\t10\t2\nbad\t-1\t3\t9\n")
    assert load_lexicon(f, "toy").entries == {"good": 1.5, "bad": -1.0}


def test_lexicon_bad_score(tmp_path):
    f = write(tmp_path / "lex.tsv", "good\t1.5\nbad\tvery\n")
    with pytest.raises(ParseError) as err:
        load_lexicon(f, "toy")
    assert err.value.line == 2


def test_emoticon_lexicon_reference_range(tmp_path):
    lo, hi = LEXICON_REFERENCE["nrc_emoticon"][4:]
    assert (lo, hi) == (-4.999, 5.0)
    f = write(tmp_path / "emo.tsv", f"awful\t{lo}\nyay\t{hi}\nmeh\t0.0\n")
    lex = load_lexicon(f, "nrc_emoticon")
    assert (lex.observed_min, lex.observed_max) == (-4.999, 5.0)
    # 2 * 4.999 / 9.999 - 1 = -1/9999
    assert normalized_score(lex, "meh") == pytest.approx(-0.000100010001000100, abs=1e-15)
    assert normalized_score(lex, "yay") == 1.0
    assert normalized_score(lex, "awful") == -1.0


def test_normalized_score_absent_and_degenerate():
    lex = Lexicon("toy", {"a": 1.0, "b": 3.0}, 1.0, 3.0)
    assert normalized_score(lex, "zzz") == 0.0
    flat = Lexicon("flat", {"a": 2.0}, 2.0, 2.0)
    assert normalized_score(flat, "a") == 0.0


@given(st.lists(st.floats(-20, 20), min_size=2, max_size=30, unique=True))
def test_normalized_score_monotone_and_bounded(scores):
    lex = Lexicon("p", {f"w{i}": s for i, s in enumerate(scores)}, min(scores), max(scores))
    pairs = sorted((s, normalized_score(lex, f"w{i}")) for i, s in enumerate(scores))
    mapped = [m for _, m in pairs]
    assert all(-1 <= m <= 1 for m in mapped)
    assert all(a <= b for a, b in zip(mapped, mapped[1:]))


# -- POS ----------------------------------------------------------------------


def test_default_tagset():
    tags = PosTagset()
    assert len(PENN_TAGS) == 36 and tags.dim == 37
    assert tags.tags[-1] == "X" and tags.tags.count("X") == 1


def test_pos_vector_one_hot():
    tags = PosTagset()
    v = pos_vector(tags, PENN_TAGS[0])
    assert v.shape == (37,) and v[0] == 1 and v.sum() == 1
    unk = pos_vector(tags, "ZZZ")
    assert unk[tags.index["X"]] == 1 and unk.sum() == 1
    for t in tags.tags:
        assert pos_vector(tags, t).sum() == 1


def test_tagset_rejects_duplicates():
    with pytest.raises(ValueError):
        PosTagset(("NN", "NN"))


# -- composition --------------------------------------------------------------


def make_lexicons():
    lexes = []
    for i, name in enumerate(LEXICON_ORDER):
        lexes.append(Lexicon(name, {"good": 2.0 + i, "bad": -3.0, "okay": 0.5}, -3.0, 2.0 + i))
    return LexiconSet(tuple(lexes))


def test_compose_dimension_300d():
    tables = IwvTable(WordVectorTable.random(300), PosTagset(), make_lexicons())
    assert tables.dim == 344
    assert compose_iwv("good", "JJ", tables).shape == (344,)


def test_compose_layout_and_zero_lexicon_tail(tmp_path):
    f = write(tmp_path / "v.txt", "good 0.5 -0.5 1.0\n")
    words = load_word_vectors(f)
    tables = IwvTable(words, PosTagset(), make_lexicons())
    v = compose_iwv("good", "JJ", tables)
    assert v[:3].tolist() == [0.5, -0.5, 1.0]
    assert v[3:40].sum() == 1 and v[3 + tables.tagset.index["JJ"]] == 1
    assert np.all(v[-7:] == 1.0)  # each lexicon's max is "good"
    oov = compose_iwv("unlisted", "NN", tables)
    assert oov[-7:].tolist() == [0.0] * 7


def test_compose_without_lexicons_is_zero_tail():
    tables = IwvTable(WordVectorTable.random(4))
    assert tables.dim == 4 + 37 + 7
    assert compose_iwv("good", "JJ", tables)[-7:].tolist() == [0.0] * 7


def test_embed_sentence_rows():
    tables = IwvTable(WordVectorTable.random(5), PosTagset(), make_lexicons())
    toks = [("the", "DT"), ("good", "JJ"), ("film", "NN"), ("good", "JJ"), (PAD, "X")]
    X = embed_sentence(toks, tables)
    assert X.shape == (5, tables.dim)
    np.testing.assert_array_equal(X.data[1], X.data[3])
    assert np.all(X.data[4] == 0)
    with pytest.raises(EmptyInputError):
        embed_sentence([], tables)


@given(st.text(min_size=1, max_size=12), st.sampled_from(PENN_TAGS + ("X", "??")))
def test_composed_vector_invariants(word, tag):
    tables = IwvTable(WordVectorTable.random(8, 1), PosTagset(), make_lexicons())
    v = compose_iwv(word, tag, tables)
    assert v.shape == (8 + 37 + 7,)
    assert np.all(np.abs(v[-7:]) <= 1)
    pos = v[8:45]
    if word == PAD:
        assert not pos.any()
    else:
        assert set(np.unique(pos)) <= {0.0, 1.0} and pos.sum() == 1
    np.testing.assert_array_equal(v, compose_iwv(word, tag, tables))


# -- cache --------------------------------------------------------------------


def test_cache_round_trip_and_bytes(tmp_path):
    tables = IwvTable(WordVectorTable.random(4, 2), PosTagset(), make_lexicons())
    pairs = [("good", "JJ"), ("film", "NN"), ("under_score", "NN"), ("good", "JJ")]
    n = write_iwv_cache(tmp_path / "a.txt", tables, pairs)
    write_iwv_cache(tmp_path / "b.txt", tables, reversed(pairs))
    assert n == 3
    assert (tmp_path / "a.txt").read_bytes() == (tmp_path / "b.txt").read_bytes()
    text = (tmp_path / "a.txt").read_text().splitlines()
    assert text[0] == "#lexicon-order: " + ",".join(LEXICON_ORDER)
    assert text[1].startswith("#tagset: CC,CD")
    assert text[2] == f"3 {tables.dim}"
    cache = read_iwv_cache(tmp_path / "a.txt")
    assert cache.dim == tables.dim and cache.lexicon_order == list(LEXICON_ORDER)
    for pair in set(pairs):
        np.testing.assert_array_equal(cache.entries[pair], compose_iwv(*pair, tables))
