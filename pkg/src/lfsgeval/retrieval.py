"""Rank a gallery of scene graphs against a query graph by structural F1."""

from __future__ import annotations

import heapq
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .codec import dedup
from .core import SceneGraph, label_triples
from .matcher import MatchConfig, _gt_quintuples
from .metrics import precision_recall_f1


@dataclass(frozen=True)
class Gallery:
    entries: tuple[tuple[str, SceneGraph], ...]
    _labels: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        ids = [i for i, _ in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("gallery graph ids must be unique")
        object.__setattr__(self, "_labels", {})

    @classmethod
    def from_graphs(cls, graphs: Iterable[SceneGraph]) -> "Gallery":
        return cls(tuple((g.image_id, g) for g in graphs))

    def __len__(self) -> int:
        return len(self.entries)

    def labels(self, graph_id: str, g: SceneGraph) -> tuple[Counter, int]:
        hit = self._labels.get(graph_id)
        if hit is None:
            u = dedup(g)
            hit = self._labels[graph_id] = (label_triples(u), len(u))
        return hit


def similarity(query: SceneGraph, candidate: SceneGraph, cfg: MatchConfig = MatchConfig()) -> float:
    """F1 of the candidate scored as a prediction of the query."""
    return precision_recall_f1(query, candidate, cfg)[2]


def _f1_bound(q_labels: Counter, q_size: int, c_labels: Counter, c_size: int) -> float:
    # F1 = 2*matched / (|query| + |candidate|) and matched <= label overlap
    if q_size == 0 and c_size == 0:
        return 1.0
    if q_size == 0 or c_size == 0:
        return 0.0
    overlap = sum((q_labels & c_labels).values())
    return 2.0 * overlap / (q_size + c_size)


def rank(query: SceneGraph, gallery: Gallery, cfg: MatchConfig = MatchConfig(),
         top_n: Optional[int] = None, prefilter: bool = True) -> list[tuple[str, float]]:
    """Gallery ids by descending similarity, ties by ascending id, cut to ``top_n``.

    With ``prefilter`` candidates are visited in order of a label-overlap
    upper bound and skipped once the bound falls strictly below the current
    ``top_n``-th score; the returned list is identical either way.
    """
    n = len(gallery) if top_n is None else min(top_n, len(gallery))
    if n <= 0:
        return []
    if not prefilter or top_n is None:
        scored = [(gid, similarity(query, g, cfg)) for gid, g in gallery.entries]
        scored.sort(key=lambda t: (-t[1], t[0]))
        return scored[:n]

    gq = _gt_quintuples(query, cfg.dedup_gt)
    q_labels = Counter(q.label_key for q in gq)
    q_size = len(gq)
    bounds = []
    for gid, g in gallery.entries:
        c_labels, c_size = gallery.labels(gid, g)
        bounds.append((-_f1_bound(q_labels, q_size, c_labels, c_size), gid, g))
    bounds.sort(key=lambda t: (t[0], t[1]))

    # min-heap on (score, -id) keeps the current worst of the top n at [0]
    heap: list[tuple[float, _Rev]] = []
    for neg_bound, gid, g in bounds:
        if len(heap) == n and -neg_bound < heap[0][0]:
            break
        s = similarity(query, g, cfg)
        item = (s, _Rev(gid))
        if len(heap) < n:
            heapq.heappush(heap, item)
        elif item > heap[0]:
            heapq.heapreplace(heap, item)
    out = [(r.value, s) for s, r in heap]
    out.sort(key=lambda t: (-t[1], t[0]))
    return out


class _Rev:
    """Reverses string order so heap comparisons prefer smaller ids."""

    __slots__ = ("value",)

    def __init__(self, value: str):
        self.value = value

    def __lt__(self, other: "_Rev") -> bool:
        return self.value > other.value

    def __gt__(self, other: "_Rev") -> bool:
        return self.value < other.value

    def __eq__(self, other) -> bool:
        return isinstance(other, _Rev) and self.value == other.value


def retrieval_recall(ranked: dict[str, Sequence[str]], targets: dict[str, str], ks: Sequence[int]) -> dict[int, float]:
    """Share of queries whose target id appears in their top ``k`` results."""
    out = {}
    qids = sorted(ranked)
    for k in ks:
        hits = sum(1 for q in qids if targets[q] in list(ranked[q])[:k])
        out[k] = hits / len(qids) if qids else 0.0
    return out
