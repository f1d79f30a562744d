import json

import pytest

from semialign.corpus import (CorpusError, corpus_stats, default_stoplist, load_pairs,
                              load_stoplist, make_pair, restop, select_extract, stem, write_pairs)


def test_stem_basics():
    assert stem("tripled") == stem("tripling") == stem("triples")
    assert stem("Systems") == stem("system")
    assert stem("'s") == "'s"
    assert stem("1989") == "1989"
    for w in ("generalizations", "relational", "running", "happiness"):
        assert stem(stem(w)) == stem(w)


def test_default_stoplist_size():
    stops = default_stoplist()
    assert len(stops) == 58
    assert "the" in stops and "," in stops


def test_make_pair_indices_and_stops():
    p = make_pair("x", ["the cat sat", "on the mat"], "a cat", stoplist={"the", "on", "a"})
    assert p.doc_words == ("the", "cat", "sat", "on", "the", "mat")
    assert [t.index for t in p.doc_tokens] == list(range(6))
    assert [t.is_stop for t in p.summary_tokens] == [True, False]
    assert p.sentence_offsets("doc") == [0, 3]


def test_make_pair_rejects_empty_side():
    with pytest.raises(CorpusError):
        make_pair("x", "a b", [])


def test_load_and_write_roundtrip(tmp_path):
    pairs = [make_pair("a", ["x y", "z"], "y"), make_pair("b", "q r", "q")]
    path = tmp_path / "pairs.jsonl"
    write_pairs(pairs, path)
    back = load_pairs(path, stoplist=())
    assert [p.doc for p in back] == [p.doc for p in pairs]
    assert [p.pair_id for p in back] == ["a", "b"]


def test_load_errors(tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"id": "a", "doc": "x"}\n')
    with pytest.raises(CorpusError, match="needs 'doc' and 'summary'"):
        load_pairs(bad)
    bad.write_text("not json\n")
    with pytest.raises(CorpusError, match="invalid JSON"):
        load_pairs(bad)
    rec = json.dumps({"id": "a", "doc": "x", "summary": "y"})
    bad.write_text(rec + "\n" + rec + "\n")
    with pytest.raises(CorpusError, match="duplicate"):
        load_pairs(bad)


def test_stoplist_file(tmp_path):
    f = tmp_path / "stop.txt"
    f.write_text("# comment\nthe\n\nof\n")
    assert load_stoplist(f) == frozenset({"the", "of"})
    with pytest.raises(CorpusError):
        load_stoplist(tmp_path / "missing.txt")
    p = restop(make_pair("x", "the dog", "dog"), {"dog"})
    assert [t.is_stop for t in p.doc_tokens] == [False, True]


def test_corpus_stats():
    pairs = [make_pair("a", ["a b c", "d e"], "a b"), make_pair("b", "f g h i", "f")]
    st = corpus_stats(pairs)
    assert st.num_pairs == 2 and st.doc_sentences == 3 and st.doc_words == 9
    assert st.summary_words == 3
    assert st.compression_rate == pytest.approx(3 / 9)
    assert "Compression" in st.table()


def test_select_extract_keeps_best_sentences():
    p = make_pair("x", ["red blue green", "cats dogs", "blue green yellow"], "green blue")
    ex = select_extract(p, k=1)
    assert ex.doc_words == ("red", "blue", "green")
    ex2 = select_extract(p, k=2)
    assert ex2.doc_words == ("red", "blue", "green", "blue", "green", "yellow")
    assert [t.index for t in ex2.doc_tokens] == list(range(6))
