"""Instance matching between a ground-truth and a predicted scene graph.

Three matchers share one result type:

* :func:`hts_match` -- heuristic tree search. Ground-truth instances are
  visited highest-degree first; each is branched onto its ``B`` best
  same-class predicted candidates (scored by one-hop neighbourhood overlap)
  and the highest-recall completed mapping wins.
* :func:`exhaustive_match` -- brute-force enumeration, used as the oracle.
* :func:`first_order_match` -- one-shot per-class linear assignment on the
  local overlap scores, kept as the structure-blind baseline.

Recall counts ground-truth quintuples whose mapped ``(sub, pred, obj)``
appears in the prediction; every predicted quintuple can be consumed once.
"""

from __future__ import annotations

import itertools
import math
import sys
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import EntityInstance, Quintuple, SceneGraph, nodes
from .errors import BranchBudgetExceeded, SearchSpaceTooLarge

EXHAUSTIVE_LIMIT = 10**7


@dataclass(frozen=True)
class MatchConfig:
    branching_factor: int = 3
    directed_neighborhood: bool = False
    max_branches: int = 10**6
    # score candidates on the full graphs instead of the not-yet-mapped remainder
    static_neighborhoods: bool = False
    # count ground-truth quintuples as a set instead of a multiset
    dedup_gt: bool = False

    def __post_init__(self):
        if self.branching_factor < 1:
            raise ValueError("branching_factor must be >= 1")
        if self.max_branches < 1:
            raise ValueError("max_branches must be >= 1")

    def replace(self, **kw) -> "MatchConfig":
        return MatchConfig(**{**self.__dict__, **kw})


@dataclass(frozen=True)
class InstanceMapping:
    """Injective, class-consistent map from GT instances to predicted ones."""

    pairs: tuple[tuple[EntityInstance, EntityInstance], ...]
    unmatched_gt: tuple[EntityInstance, ...]
    matched: int
    total: int

    @property
    def recall(self) -> float:
        return 1.0 if self.total == 0 else self.matched / self.total

    def as_dict(self) -> dict[EntityInstance, EntityInstance]:
        return dict(self.pairs)

    def gt_nodes(self) -> set[EntityInstance]:
        return {g for g, _ in self.pairs} | set(self.unmatched_gt)


def overlap_score(gt_nbhd: Counter, pred_nbhd: Counter) -> float:
    """Multiset intersection size normalised by the size of ``gt_nbhd``."""
    size = sum(gt_nbhd.values())
    if size == 0:
        raise ValueError("ground-truth neighbourhood must be non-empty")
    return sum((gt_nbhd & pred_nbhd).values()) / size


def _gt_quintuples(gt: SceneGraph, dedup: bool) -> list[Quintuple]:
    if not dedup:
        return list(gt.quintuples)
    seen, out = set(), []
    for q in gt.quintuples:
        if q.key not in seen:
            seen.add(q.key)
            out.append(q)
    return out


def count_matched(gt_quintuples: Iterable[Quintuple], pred: SceneGraph,
                  mapping: dict[EntityInstance, EntityInstance]) -> int:
    """Matched GT quintuples under ``mapping`` (multiset intersection)."""
    mapped = Counter()
    for q in gt_quintuples:
        s = mapping.get(q.sub)
        o = mapping.get(q.obj)
        if s is not None and o is not None:
            mapped[(s, q.pred, o)] += 1
    pred_c = Counter((q.sub, q.pred, q.obj) for q in pred.quintuples)
    return sum((mapped & pred_c).values())


def mapping_from_pairs(gt: SceneGraph, pred: SceneGraph, pairs: dict[EntityInstance, EntityInstance],
                       dedup_gt: bool = False) -> InstanceMapping:
    """Wrap an arbitrary valid pair dict as an :class:`InstanceMapping`."""
    gq = _gt_quintuples(gt, dedup_gt)
    gt_nodes = nodes(gt)
    matched = count_matched(gq, pred, pairs)
    return InstanceMapping(
        pairs=tuple(sorted((g, p) for g, p in pairs.items() if g in gt_nodes)),
        unmatched_gt=tuple(sorted(gt_nodes - pairs.keys())),
        matched=matched,
        total=len(gq),
    )


def _sort_key(pairs: dict, gt_order: list[EntityInstance]) -> tuple:
    # unmatched sorts after every real instance
    far = (math.inf, math.inf)
    return tuple(pairs.get(g, far) for g in gt_order)


class _Search:
    """Depth-first heuristic tree search with exact branch-and-bound pruning.

    Pruning only discards subtrees that provably cannot contain a leaf that
    beats the incumbent under (matched desc, pair-list asc), so the result is
    identical to evaluating every leaf of the heuristic tree.
    """

    def __init__(self, gt: SceneGraph, pred: SceneGraph, cfg: MatchConfig):
        self.cfg = cfg
        gq = _gt_quintuples(gt, cfg.dedup_gt)
        self.total = len(gq)
        self.gt_nodes = sorted(nodes(gt))
        self.pred_nodes = sorted(nodes(pred))
        gix = {n: i for i, n in enumerate(self.gt_nodes)}
        pix = {n: i for i, n in enumerate(self.pred_nodes)}
        self.g_cls = [n.cls for n in self.gt_nodes]
        self.p_cls = [n.cls for n in self.pred_nodes]
        self.n_gt = len(self.gt_nodes)
        self.n_pred = len(self.pred_nodes)

        self.g_edges = [(gix[q.sub], q.pred, gix[q.obj]) for q in gq]
        self.p_edges = [(pix[q.sub], q.pred, pix[q.obj]) for q in pred.quintuples]
        self.p_count = Counter(self.p_edges)
        self.p_label = Counter((self.p_cls[s], p, self.p_cls[o]) for s, p, o in self.p_edges)
        self.g_label = [(self.g_cls[s], p, self.g_cls[o]) for s, p, o in self.g_edges]

        self.g_inc = [[] for _ in range(self.n_gt)]
        for e, (s, _, o) in enumerate(self.g_edges):
            self.g_inc[s].append(e)
            if o != s:
                self.g_inc[o].append(e)
        self.p_inc = [[] for _ in range(self.n_pred)]
        for e, (s, _, o) in enumerate(self.p_edges):
            self.p_inc[s].append(e)
            if o != s:
                self.p_inc[o].append(e)

        self.p_by_cls = defaultdict(list)
        for i, c in enumerate(self.p_cls):
            self.p_by_cls[c].append(i)
        self.g_left_by_cls = Counter(self.g_cls)

        # -2 undecided, -1 mapped to nothing, else predicted node index
        self.gmap = [-2] * self.n_gt
        self.pused = [False] * self.n_pred
        self.deg = [len(inc) for inc in self.g_inc]
        self.matched = 0
        self.used = Counter()
        self.label_used = Counter()
        self.leaves = 0
        self.best_matched = -1
        self.best_key: Optional[tuple] = None
        self.best_map: Optional[list[int]] = None

    # neighbourhoods ---------------------------------------------------------

    def _g_nbhd(self, g: int) -> Counter:
        directed = self.cfg.directed_neighborhood
        static = self.cfg.static_neighborhoods
        out = Counter()
        for e in self.g_inc[g]:
            s, p, o = self.g_edges[e]
            other = o if s == g else s
            if not static and self.gmap[other] != -2 and other != g:
                continue
            if directed:
                out[(p, self.g_cls[other], "out" if s == g else "in")] += 1
            else:
                out[(p, self.g_cls[other])] += 1
        return out

    def _p_nbhd(self, x: int) -> Counter:
        directed = self.cfg.directed_neighborhood
        static = self.cfg.static_neighborhoods
        out = Counter()
        for e in self.p_inc[x]:
            s, p, o = self.p_edges[e]
            other = o if s == x else s
            if not static and self.pused[other] and other != x:
                continue
            if directed:
                out[(p, self.p_cls[other], "out" if s == x else "in")] += 1
            else:
                out[(p, self.p_cls[other])] += 1
        return out

    # bounds -----------------------------------------------------------------

    def _upper_bound(self) -> int:
        """Optimistic matched count for any completion of the current state.

        An open GT edge with one endpoint mapped to ``x`` can only consume a
        predicted edge at ``x`` whose far end is still free; an edge with both
        endpoints open needs a predicted edge with both ends free. These pools
        are disjoint, so summing per-pool minima is a valid bound.
        """
        gmap, pused, p_cls = self.gmap, self.pused, self.p_cls
        want = Counter()
        for e, (s, p, o) in enumerate(self.g_edges):
            ms, mo = gmap[s], gmap[o]
            if ms == -1 or mo == -1 or (ms >= 0 and mo >= 0):
                continue
            if ms >= 0:
                want[(ms, p, 1, self.g_cls[o])] += 1
            elif mo >= 0:
                want[(mo, p, 0, self.g_cls[s])] += 1
            else:
                want[self.g_label[e]] += 1
        if not want:
            return self.matched
        have = Counter()
        for s, p, o in self.p_edges:
            us, uo = pused[s], pused[o]
            if us and uo:
                continue
            if us:
                have[(s, p, 1, p_cls[o])] += 1
            elif uo:
                have[(o, p, 0, p_cls[s])] += 1
            else:
                have[(p_cls[s], p, p_cls[o])] += 1
        return self.matched + sum(min(n, have[k]) for k, n in want.items())

    def _key_lower_bound(self) -> tuple:
        far = self.n_pred
        out = []
        for g in range(self.n_gt):
            v = self.gmap[g]
            if v >= 0:
                out.append(v)
            elif v == -1:
                out.append(far)
            else:
                free = [x for x in self.p_by_cls.get(self.g_cls[g], ()) if not self.pused[x]]
                out.append(free[0] if free else far)
        return tuple(out)

    def _leaf_key(self) -> tuple:
        far = self.n_pred
        return tuple(v if v >= 0 else far for v in self.gmap)

    # state updates ----------------------------------------------------------

    def _assign(self, g: int, x: int) -> list:
        """Decide GT node ``g`` (``x`` = -1 for nothing); returns an undo log."""
        self.gmap[g] = x
        self.g_left_by_cls[self.g_cls[g]] -= 1
        consumed = []
        for e in self.g_inc[g]:
            s, p, o = self.g_edges[e]
            other = o if s == g else s
            if other == g:
                pass
            elif self.gmap[other] == -2:
                self.deg[other] -= 1
                continue
            if x < 0:
                continue
            ms, mo = self.gmap[s], self.gmap[o]
            if ms < 0 or mo < 0:
                continue
            key = (ms, p, mo)
            if self.used[key] < self.p_count.get(key, 0):
                self.used[key] += 1
                lab = self.g_label[e]
                self.label_used[lab] += 1
                self.matched += 1
                consumed.append((key, lab))
        if x >= 0:
            self.pused[x] = True
        return consumed

    def _unassign(self, g: int, x: int, consumed: list) -> None:
        for key, lab in consumed:
            self.used[key] -= 1
            self.label_used[lab] -= 1
            self.matched -= 1
        if x >= 0:
            self.pused[x] = False
        self.gmap[g] = -2
        self.g_left_by_cls[self.g_cls[g]] += 1
        for e in self.g_inc[g]:
            s, _, o = self.g_edges[e]
            other = o if s == g else s
            if other != g and self.gmap[other] == -2:
                self.deg[other] += 1

    # search -----------------------------------------------------------------

    def _select(self) -> int:
        best, best_deg = -1, -1
        static = self.cfg.static_neighborhoods
        for g in range(self.n_gt):
            if self.gmap[g] != -2:
                continue
            d = len(self.g_inc[g]) if static else self.deg[g]
            if d > best_deg:
                best, best_deg = g, d
        return best

    def _branches(self, g: int) -> list[int]:
        c = self.g_cls[g]
        cands = [x for x in self.p_by_cls.get(c, ()) if not self.pused[x]]
        if cands:
            gn = self._g_nbhd(g)
            if gn:
                scored = [(-sum((gn & self._p_nbhd(x)).values()), x) for x in cands]
                scored.sort()
                cands = [x for _, x in scored]
        # more GT instances of this class left than free candidates: leaving
        # this one unmapped is a genuine alternative, ranked last
        if self.g_left_by_cls[c] > len(cands):
            cands.append(-1)
        return cands[: self.cfg.branching_factor]

    def _leaf(self) -> None:
        self.leaves += 1
        if self.leaves > self.cfg.max_branches:
            raise BranchBudgetExceeded(
                f"more than {self.cfg.max_branches} completed branches; "
                f"raise max_branches or lower the branching factor"
            )
        key = self._leaf_key()
        if self.matched > self.best_matched or (
            self.matched == self.best_matched and key < self.best_key
        ):
            self.best_matched = self.matched
            self.best_key = key
            self.best_map = list(self.gmap)

    def _prunable(self) -> bool:
        if self.best_key is None:
            return False
        ub = self._upper_bound()
        if ub < self.best_matched:
            return True
        if ub == self.best_matched:
            return self._key_lower_bound() >= self.best_key
        return False

    def run(self, depth_left: int) -> None:
        if depth_left == 0:
            self._leaf()
            return
        if self._prunable():
            return
        g = self._select()
        for x in self._branches(g):
            undo = self._assign(g, x)
            self.run(depth_left - 1)
            self._unassign(g, x, undo)

    def solve(self) -> InstanceMapping:
        self.run(self.n_gt)
        pairs = {
            self.gt_nodes[g]: self.pred_nodes[x]
            for g, x in enumerate(self.best_map or []) if x >= 0
        }
        return InstanceMapping(
            pairs=tuple(sorted(pairs.items())),
            unmatched_gt=tuple(n for n in self.gt_nodes if n not in pairs),
            matched=max(self.best_matched, 0),
            total=self.total,
        )


def hts_match(gt: SceneGraph, pred: SceneGraph, cfg: MatchConfig = MatchConfig()) -> InstanceMapping:
    """Heuristic tree search mapping of ``gt`` instances onto ``pred`` instances.

    At each step the unmapped GT instance of highest degree (ties: class, then
    index) is branched onto its ``cfg.branching_factor`` best unmapped
    same-class predicted instances, ranked by neighbourhood overlap (ties:
    lower predicted index). When the class has more GT instances left than
    free candidates, "leave unmapped" is appended as the lowest-ranked option.
    Among completed mappings the one matching the most GT quintuples wins;
    ties go to the lexicographically smallest pair list.
    """
    search = _Search(gt, pred, cfg)
    limit = sys.getrecursionlimit()
    if search.n_gt + 100 > limit:
        sys.setrecursionlimit(search.n_gt + 200)
    return search.solve()


def max_instances_per_class(*graphs: SceneGraph) -> int:
    """Largest per-class instance count over the given graphs (0 if all empty)."""
    best = 0
    for g in graphs:
        c = Counter(n.cls for n in nodes(g))
        if c:
            best = max(best, max(c.values()))
    return best


def _class_injections(gts: list, preds: list):
    """All maximal injective pairings between two same-class node lists."""
    if len(gts) <= len(preds):
        for perm in itertools.permutations(preds, len(gts)):
            yield tuple(zip(gts, perm))
    else:
        for perm in itertools.permutations(gts, len(preds)):
            yield tuple(zip(perm, preds))


def search_space_size(gt: SceneGraph, pred: SceneGraph) -> tuple[int, dict[int, tuple[int, int]]]:
    """Number of maximal class-consistent injections and the per-class counts."""
    gc = Counter(n.cls for n in nodes(gt))
    pc = Counter(n.cls for n in nodes(pred))
    size = 1
    per_class = {}
    for c in sorted(gc):
        a, b = gc[c], pc.get(c, 0)
        per_class[c] = (a, b)
        size *= math.perm(max(a, b), min(a, b))
    return size, per_class


def exhaustive_match(gt: SceneGraph, pred: SceneGraph, dedup_gt: bool = False,
                     limit: int = EXHAUSTIVE_LIMIT, chunk: int = 1 << 15) -> InstanceMapping:
    """Best mapping over every class-consistent injection (the oracle).

    Only maximal injections are enumerated: adding a pair never lowers the
    matched count and never makes the pair list lexicographically larger,
    so the optimum is always attained by one of them. Candidates are scored
    in vectorised chunks; nothing is pruned.
    """
    size, per_class = search_space_size(gt, pred)
    if size > limit:
        detail = ", ".join(f"class {c}: gt={a} pred={b}" for c, (a, b) in per_class.items() if a > 1 or b > 1)
        raise SearchSpaceTooLarge(f"{size} candidate mappings exceed limit {limit} ({detail})")
    gq = _gt_quintuples(gt, dedup_gt)
    gt_order = sorted(nodes(gt))
    pred_order = sorted(nodes(pred))
    gix = {n: i for i, n in enumerate(gt_order)}
    pix = {n: i for i, n in enumerate(pred_order)}
    n_pred = len(pred_order)
    far = n_pred

    # per-class option tables: rows are maximal injections, columns the GT
    # nodes of that class, entries predicted indices (far = unmapped)
    gt_by_cls = defaultdict(list)
    for i, n in enumerate(gt_order):
        gt_by_cls[n.cls].append(i)
    pred_by_cls = defaultdict(list)
    for i, n in enumerate(pred_order):
        pred_by_cls[n.cls].append(i)
    columns, tables = [], []
    for c in sorted(gt_by_cls):
        gts = gt_by_cls[c]
        rows = []
        for chunk_pairs in _class_injections(gts, pred_by_cls.get(c, [])):
            row = dict.fromkeys(gts, far)
            row.update(chunk_pairs)
            rows.append([row[g] for g in gts])
        columns.append(gts)
        tables.append(np.asarray(rows, dtype=np.int64).reshape(len(rows), len(gts)))

    n_p = 1 + max((q.pred for q in gq), default=0)
    n_p = max(n_p, 1 + max((q.pred for q in pred.quintuples), default=0))

    def code(s, p, o):
        return (s * n_p + p) * (n_pred + 1) + o

    pred_codes = Counter(code(pix[q.sub], q.pred, pix[q.obj]) for q in pred.quintuples)
    keys = np.asarray(sorted(pred_codes), dtype=np.int64)
    counts = np.asarray([pred_codes[k] for k in keys], dtype=np.int64)
    # an injective mapping keeps distinct GT quintuples distinct, so only GT
    # multiplicity can collide on one predicted quintuple
    gt_mult = Counter((gix[q.sub], q.pred, gix[q.obj]) for q in gq)
    e_s = np.asarray([k[0] for k in gt_mult], dtype=np.int64)
    e_p = np.asarray([k[1] for k in gt_mult], dtype=np.int64)
    e_o = np.asarray([k[2] for k in gt_mult], dtype=np.int64)
    e_m = np.asarray(list(gt_mult.values()), dtype=np.int64)

    shape = tuple(t.shape[0] for t in tables)
    best_m, best_row = -1, None
    for lo in range(0, size, chunk):
        flat = np.arange(lo, min(lo + chunk, size))
        M = np.full((flat.size, len(gt_order)), far, dtype=np.int64)
        if tables:
            sel = np.unravel_index(flat, shape)
            for cols, table, ix in zip(columns, tables, sel):
                M[:, cols] = table[ix]
        if len(gt_mult) and keys.size:
            ms, mo = M[:, e_s], M[:, e_o]
            codes = code(ms, e_p, mo)
            pos = np.clip(np.searchsorted(keys, codes), 0, keys.size - 1)
            hit = (keys[pos] == codes) & (ms < far) & (mo < far)
            matched = np.where(hit, np.minimum(counts[pos], e_m), 0).sum(axis=1)
        else:
            matched = np.zeros(flat.size, dtype=np.int64)
        top = int(matched.max())
        if top < best_m:
            continue
        cand = M[matched == top]
        row = cand[np.lexsort(cand.T[::-1])[0]] if cand.shape[1] else cand[0]
        if top > best_m or tuple(row) < tuple(best_row):
            best_m, best_row = top, row

    pairs = {gt_order[g]: pred_order[int(x)] for g, x in enumerate(best_row) if x < far}
    return InstanceMapping(
        pairs=tuple(sorted(pairs.items())),
        unmatched_gt=tuple(n for n in gt_order if n not in pairs),
        matched=best_m,
        total=len(gq),
    )


def first_order_match(gt: SceneGraph, pred: SceneGraph, directed: bool = False,
                      dedup_gt: bool = False) -> InstanceMapping:
    """Per-class optimal assignment on local overlap scores only.

    Each class is solved independently with a linear assignment over the
    full-graph neighbourhood overlaps, so graph structure beyond one hop is
    never consulted.
    """
    from .core import neighborhood

    gt_by_cls = defaultdict(list)
    for n in sorted(nodes(gt)):
        gt_by_cls[n.cls].append(n)
    pred_by_cls = defaultdict(list)
    for n in sorted(nodes(pred)):
        pred_by_cls[n.cls].append(n)

    pairs = {}
    for c, gts in gt_by_cls.items():
        preds = pred_by_cls.get(c)
        if not preds:
            continue
        score = np.zeros((len(gts), len(preds)))
        for i, g in enumerate(gts):
            gn = neighborhood(gt, g, directed)
            if not gn:
                continue
            for j, p in enumerate(preds):
                score[i, j] = overlap_score(gn, neighborhood(pred, p, directed))
        rows, cols = linear_sum_assignment(score, maximize=True)
        for i, j in zip(rows, cols):
            pairs[gts[i]] = preds[j]
    return mapping_from_pairs(gt, pred, pairs, dedup_gt)


def apply_mapping(pred: SceneGraph, m: InstanceMapping) -> SceneGraph:
    """Rewrite ``pred`` into GT instance ids.

    Matched predicted instances take their GT id; unmatched ones get fresh ids
    above every GT id of their class, in order of first appearance.
    """
    inverse = {p: g for g, p in m.pairs}
    ceiling = Counter()
    for n in m.gt_nodes():
        ceiling[n.cls] = max(ceiling[n.cls], n.idx + 1)
    fresh: dict[EntityInstance, EntityInstance] = {}

    def relabel(n: EntityInstance) -> EntityInstance:
        g = inverse.get(n)
        if g is not None:
            return g
        f = fresh.get(n)
        if f is None:
            f = fresh[n] = EntityInstance(n.cls, ceiling[n.cls])
            ceiling[n.cls] += 1
        return f

    return pred.with_quintuples(
        Quintuple(relabel(q.sub), relabel(q.obj), q.pred, q.score) for q in pred.quintuples
    )
