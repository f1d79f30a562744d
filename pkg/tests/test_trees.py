import pytest

from semialign.corpus import CorpusError, make_pair
from semialign.trees import attach_all, attach_parses, load_parse_file, parse_bracketed, write_parse_file


def test_parse_spans_and_labels():
    t = parse_bracketed("(S (NP (DT the) (NN dog)) (VP (VBD ran)))")
    assert t.label == "S" and t.span == (0, 2)
    assert [lf.word for lf in t.leaves()] == ["the", "dog", "ran"]
    assert [n.label for n in t.find((0, 1))] == ["NP"]
    assert str(t) == "(S (NP (DT the) (NN dog)) (VP (VBD ran)))"


def test_outer_unlabeled_bracket_dropped():
    t = parse_bracketed("( (S (NN x)) )")
    assert t.label == "S"


@pytest.mark.parametrize("bad", ["", "(S (NN x)", "(S (NN x)))", "(S ())", "NN x"])
def test_malformed(bad):
    with pytest.raises(CorpusError):
        parse_bracketed(bad)


def test_attach_checks_leaves():
    p = make_pair("a", "the dog", "dog")
    with pytest.raises(CorpusError):
        attach_parses(p, [parse_bracketed("(NP (DT the) (NN cat))")])
    with pytest.raises(CorpusError):
        attach_parses(p, [parse_bracketed("(NP (NN dog))")])
    ok = attach_parses(p, [parse_bracketed("(NP (DT the) (NN dog))")])
    assert ok.doc_parses[0].label == "NP"


def test_parse_file_roundtrip(tmp_path):
    p = attach_parses(make_pair("a", ["x y", "z"], "z"),
                      [parse_bracketed("(S (NN x) (NN y))"), parse_bracketed("(S (NN z))")])
    path = tmp_path / "parses.txt"
    write_parse_file([p], path)
    assert list(load_parse_file(path)) == ["a"]
    back = attach_all([make_pair("a", ["x y", "z"], "z")], path)
    assert back[0].doc_parses == p.doc_parses
    with pytest.raises(CorpusError, match="no parses"):
        attach_all([make_pair("b", "x", "x")], path)
