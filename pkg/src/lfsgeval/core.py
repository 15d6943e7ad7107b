"""Location-free scene graph types and the structural queries built on them.

A scene graph here is nothing more than an ordered list of quintuples
``(sub_cls, sub_idx, obj_cls, obj_idx, pred)``. Nodes carry a class and a
per-class instance index and no spatial information at all.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional

from .errors import UnknownLabel, VocabularyOverflow


@dataclass(frozen=True)
class Vocabulary:
    classes: tuple[str, ...]
    predicates: tuple[str, ...]
    max_instance_count: int = 32
    _class_ix: dict = field(init=False, repr=False, compare=False)
    _pred_ix: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))
        object.__setattr__(self, "predicates", tuple(self.predicates))
        if len(set(self.classes)) != len(self.classes):
            raise ValueError("duplicate class labels in vocabulary")
        if len(set(self.predicates)) != len(self.predicates):
            raise ValueError("duplicate predicate labels in vocabulary")
        if self.max_instance_count < 1:
            raise ValueError("max_instance_count must be >= 1")
        object.__setattr__(self, "_class_ix", {c: i for i, c in enumerate(self.classes)})
        object.__setattr__(self, "_pred_ix", {p: i for i, p in enumerate(self.predicates)})

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    @property
    def n_predicates(self) -> int:
        return len(self.predicates)

    def class_index(self, label: str) -> int:
        try:
            return self._class_ix[label]
        except KeyError:
            raise UnknownLabel(f"unknown class label {label!r}") from None

    def predicate_index(self, label: str) -> int:
        try:
            return self._pred_ix[label]
        except KeyError:
            raise UnknownLabel(f"unknown predicate label {label!r}") from None

    def check_graph(self, g: "SceneGraph") -> None:
        """Raise if ``g`` uses class/predicate indices outside this vocabulary."""
        for q in g.quintuples:
            for n in (q.sub, q.obj):
                if not 0 <= n.cls < self.n_classes:
                    raise UnknownLabel(f"class index {n.cls} outside vocabulary")
            if not 0 <= q.pred < self.n_predicates:
                raise UnknownLabel(f"predicate index {q.pred} outside vocabulary")


class EntityInstance(NamedTuple):
    cls: int
    idx: int


@dataclass(frozen=True, order=True)
class Quintuple:
    sub: EntityInstance
    obj: EntityInstance
    pred: int
    # ranking only; never part of equality
    score: Optional[float] = field(default=None, compare=False)

    @classmethod
    def of(cls, sub_cls: int, sub_idx: int, obj_cls: int, obj_idx: int, pred: int,
           score: Optional[float] = None) -> "Quintuple":
        return cls(EntityInstance(sub_cls, sub_idx), EntityInstance(obj_cls, obj_idx), pred, score)

    @property
    def key(self) -> tuple[int, int, int, int, int]:
        return (self.sub.cls, self.sub.idx, self.obj.cls, self.obj.idx, self.pred)

    @property
    def label_key(self) -> tuple[int, int, int]:
        return (self.sub.cls, self.pred, self.obj.cls)


@dataclass(frozen=True)
class SceneGraph:
    image_id: str = ""
    quintuples: tuple[Quintuple, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "quintuples", tuple(self.quintuples))

    def __len__(self) -> int:
        return len(self.quintuples)

    def __iter__(self):
        return iter(self.quintuples)

    def with_quintuples(self, quintuples: Iterable[Quintuple]) -> "SceneGraph":
        return SceneGraph(self.image_id, tuple(quintuples))


def nodes(g: SceneGraph) -> set[EntityInstance]:
    out = set()
    for q in g.quintuples:
        out.add(q.sub)
        out.add(q.obj)
    return out


def degree(g: SceneGraph, n: EntityInstance) -> int:
    # a self-loop counts once
    return sum(1 for q in g.quintuples if q.sub == n or q.obj == n)


def neighborhood(g: SceneGraph, n: EntityInstance, directed: bool = False) -> Counter:
    """Multiset of ``(pred, other_cls)`` tuples, one per quintuple touching ``n``.

    With ``directed`` each tuple gains a trailing ``"out"`` (``n`` is the
    subject) or ``"in"`` marker.
    """
    out: Counter = Counter()
    for q in g.quintuples:
        if q.sub == n:
            out[(q.pred, q.obj.cls, "out") if directed else (q.pred, q.obj.cls)] += 1
        elif q.obj == n:
            out[(q.pred, q.sub.cls, "in") if directed else (q.pred, q.sub.cls)] += 1
    return out


def class_counts(ns: Iterable[EntityInstance]) -> Counter:
    return Counter(n.cls for n in ns)


def canonicalize(g: SceneGraph, vocab: Optional[Vocabulary] = None) -> SceneGraph:
    """Relabel instance indices per class in order of first appearance.

    Quintuples are scanned in order, subject before object. Raises
    :class:`VocabularyOverflow` when ``vocab`` is given and a class needs more
    instance indices than it provides.
    """
    limit = vocab.max_instance_count if vocab is not None else None
    relabel: dict[EntityInstance, EntityInstance] = {}
    next_idx: Counter = Counter()

    def fresh(n: EntityInstance) -> EntityInstance:
        m = relabel.get(n)
        if m is None:
            i = next_idx[n.cls]
            if limit is not None and i >= limit:
                raise VocabularyOverflow(
                    f"class {n.cls} needs more than {limit} instance indices"
                )
            next_idx[n.cls] = i + 1
            m = relabel[n] = EntityInstance(n.cls, i)
        return m

    out = []
    for q in g.quintuples:
        s = fresh(q.sub)
        o = fresh(q.obj)
        out.append(Quintuple(s, o, q.pred, q.score))
    return g.with_quintuples(out)


def label_triples(g: SceneGraph) -> Counter:
    """Multiset of ``(sub_cls, pred, obj_cls)`` ignoring instance indices."""
    return Counter(q.label_key for q in g.quintuples)
