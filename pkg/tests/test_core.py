import itertools
from collections import Counter

import pytest
from hypothesis import given, settings

from lfsgeval.core import (
    EntityInstance,
    Quintuple,
    SceneGraph,
    Vocabulary,
    canonicalize,
    class_counts,
    degree,
    label_triples,
    neighborhood,
    nodes,
)
from lfsgeval.errors import UnknownLabel, VocabularyOverflow
from lfsgeval.matcher import exhaustive_match

from conftest import PEOPLE, VOCAB, graph, node, scene_graphs


def test_vocabulary_rejects_duplicates():
    with pytest.raises(ValueError):
        Vocabulary(("a", "a"), ("r",))
    with pytest.raises(ValueError):
        Vocabulary(("a",), ("r", "r"))
    with pytest.raises(ValueError):
        Vocabulary(("a",), ("r",), 0)


def test_vocabulary_lookup():
    assert PEOPLE.class_index("cup") == 1
    assert PEOPLE.predicate_index("near") == 2
    with pytest.raises(UnknownLabel):
        PEOPLE.class_index("dog")


def test_nodes():
    assert nodes(SceneGraph()) == set()
    g = graph("person0 holding cup0", vocab=PEOPLE)
    assert nodes(g) == {EntityInstance(0, 0), EntityInstance(1, 0)}
    g = graph("person0 holding cup0; person0 on table0", vocab=PEOPLE)
    assert len(nodes(g)) == 3


def test_degree():
    g = graph("A0 r B0; A0 s C0")
    assert degree(g, node("A0")) == 2
    assert degree(g, node("D0")) == 0


def test_degree_self_loop_counts_once():
    g = graph("A0 r A0")
    # enumerate incidences: one quintuple, touching A0 as sub and obj
    incident = [q for q in g.quintuples if node("A0") in (q.sub, q.obj)]
    assert degree(g, node("A0")) == len(incident) == 1


def test_neighborhood_forms():
    g = graph("A0 r B0; C0 s A0")
    r, s = VOCAB.predicate_index("r"), VOCAB.predicate_index("s")
    b, c = VOCAB.class_index("B"), VOCAB.class_index("C")
    assert neighborhood(g, node("A0")) == Counter({(r, b): 1, (s, c): 1})
    assert neighborhood(g, node("A0"), directed=True) == Counter({(r, b, "out"): 1, (s, c, "in"): 1})
    assert neighborhood(g, node("D0")) == Counter()


def test_canonicalize_examples():
    assert canonicalize(graph("A7 r B3")) == graph("A0 r B0")
    assert canonicalize(graph("A2 r A5; A5 s B0")) == graph("A0 r A1; A1 s B0")


def test_canonicalize_overflow():
    small = Vocabulary(("A", "B"), ("r",), 2)
    g = SceneGraph("x", tuple(Quintuple.of(0, i, 1, 0, 0) for i in range(3)))
    with pytest.raises(VocabularyOverflow):
        canonicalize(g, small)
    canonicalize(g)  # no vocabulary, no limit


@given(scene_graphs())
@settings(max_examples=100, deadline=None)
def test_canonicalize_idempotent(g):
    c = canonicalize(g)
    assert canonicalize(c) == c


@given(scene_graphs(max_quintuples=6))
@settings(max_examples=60, deadline=None)
def test_canonicalize_preserves_structure(g):
    c = canonicalize(g)
    assert label_triples(c) == label_triples(g)
    assert class_counts(nodes(c)) == class_counts(nodes(g))
    assert exhaustive_match(g, c).recall == 1.0
    assert exhaustive_match(c, g).recall == 1.0


@given(scene_graphs())
@settings(max_examples=100, deadline=None)
def test_degree_equals_neighborhood_size(g):
    for n in nodes(g) | {EntityInstance(0, 9)}:
        for directed in (False, True):
            assert degree(g, n) == sum(neighborhood(g, n, directed).values())


def test_quintuple_equality_ignores_score():
    a = Quintuple.of(0, 0, 1, 0, 2, score=0.9)
    b = Quintuple.of(0, 0, 1, 0, 2, score=0.1)
    assert a == b and hash(a) == hash(b)


def test_check_graph():
    VOCAB.check_graph(graph("A0 r B0"))
    with pytest.raises(UnknownLabel):
        VOCAB.check_graph(SceneGraph("x", (Quintuple.of(99, 0, 0, 0, 0),)))
