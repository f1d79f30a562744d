import math

import pytest

from semialign.corpus import CorpusError
from semialign.hypernyms import HypernymGraph, load_hypernym_graph, write_hypernym_graph
from semialign.synthetic import toy_graph


def test_distances():
    g = toy_graph()
    assert g.distance(("dog",), ("hound",)) == 0
    assert g.distance(("dog",), ("canine",)) == 1
    assert g.distance(("dog",), ("cat",)) == 4
    assert g.distance(("dog",), ("food",)) == math.inf
    assert g.distance(("hot", "dog"), ("food",)) == 1
    assert g.distance(("unknown",), ("dog",)) == math.inf


def test_cycle_rejected():
    with pytest.raises(CorpusError, match="cycle"):
        HypernymGraph({"a": {"b"}, "b": {"a"}}, {})


def test_file_roundtrip(tmp_path):
    g = toy_graph()
    path = tmp_path / "g.tsv"
    write_hypernym_graph(g, path)
    back = load_hypernym_graph(path)
    assert back.parents == g.parents and back.first_sense == g.first_sense


def test_malformed_file(tmp_path):
    path = tmp_path / "g.tsv"
    path.write_text("X\ta\tb\n")
    with pytest.raises(CorpusError):
        load_hypernym_graph(path)
    path.write_text("S\tdog\ta.n.01\nS\tdog\tb.n.01\n")
    with pytest.raises(CorpusError, match="second first-sense"):
        load_hypernym_graph(path)
