import pytest
from hypothesis import strategies as st

from lfsgeval.core import EntityInstance, Quintuple, SceneGraph, Vocabulary

VOCAB = Vocabulary(tuple("ABCDEFGH"), ("r", "s", "t", "u", "holding", "on"), 16)
PEOPLE = Vocabulary(("person", "cup", "table"), ("holding", "on", "near"), 8)


def node(text: str, vocab: Vocabulary = VOCAB) -> EntityInstance:
    label = text.rstrip("0123456789")
    return EntityInstance(vocab.class_index(label), int(text[len(label):]))


def graph(text: str, image_id: str = "g", vocab: Vocabulary = VOCAB) -> SceneGraph:
    """``"A0 r B0; C0 s A0"`` -> SceneGraph (sub pred obj per quintuple)."""
    out = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        s, p, o = chunk.split()
        out.append(Quintuple(node(s, vocab), node(o, vocab), vocab.predicate_index(p)))
    return SceneGraph(image_id, tuple(out))


@st.composite
def scene_graphs(draw, n_classes=4, n_preds=3, max_per_class=3, max_quintuples=10, min_quintuples=0):
    """Small random graphs; instance ids are arbitrary (not canonical)."""
    k = draw(st.integers(min_quintuples, max_quintuples))
    ent = st.builds(EntityInstance, st.integers(0, n_classes - 1), st.integers(0, max_per_class - 1))
    qs = draw(st.lists(st.builds(Quintuple, ent, ent, st.integers(0, n_preds - 1)), min_size=k, max_size=k))
    return SceneGraph("h", tuple(qs))


@pytest.fixture
def vocab():
    return VOCAB
