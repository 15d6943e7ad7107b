"""Seeded synthetic corpora: GT graphs plus perturbed predictions with a planted mapping."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .core import EntityInstance, Quintuple, SceneGraph, Vocabulary, canonicalize, nodes
from .errors import GenerationFailed
from .matcher import (
    InstanceMapping,
    MatchConfig,
    exhaustive_match,
    first_order_match,
    hts_match,
    mapping_from_pairs,
)


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_images: int = 200
    n_classes: int = 20
    n_predicates: int = 10
    # relative weight of 1, 2, ... instances for a class present in an image
    instance_weights: tuple[float, ...] = (0.5, 0.25, 0.12, 0.06, 0.03, 0.02, 0.01, 0.01)
    classes_per_image: tuple[int, int] = (3, 6)
    quintuples_per_image: tuple[int, int] = (8, 20)
    max_nodes: int = 40
    instance_shuffle: float = 1.0
    edge_drop: float = 0.0
    edge_add: float = 0.0
    label_noise: float = 0.0
    # GT predicates come from the first gt_predicates labels (default: all)
    gt_predicates: Optional[int] = None
    # label noise picks only predicates outside the GT predicate pool
    noise_outside_gt: bool = False

    def __post_init__(self):
        for name in ("instance_shuffle", "edge_drop", "edge_add", "label_noise"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if not self.instance_weights or any(w < 0 for w in self.instance_weights) or sum(self.instance_weights) <= 0:
            raise ValueError("instance_weights must be non-negative with positive sum")
        lo, hi = self.classes_per_image
        if not 1 <= lo <= hi <= self.n_classes:
            raise ValueError("classes_per_image must satisfy 1 <= lo <= hi <= n_classes")
        lo, hi = self.quintuples_per_image
        if not 0 <= lo <= hi:
            raise ValueError("quintuples_per_image must satisfy 0 <= lo <= hi")
        gp = self.gt_predicates if self.gt_predicates is not None else self.n_predicates
        if not 1 <= gp <= self.n_predicates:
            raise ValueError("gt_predicates must lie in [1, n_predicates]")
        if self.noise_outside_gt and gp == self.n_predicates and self.label_noise > 0:
            raise ValueError("noise_outside_gt needs gt_predicates < n_predicates")

    @property
    def max_instances(self) -> int:
        return len(self.instance_weights)

    def vocabulary(self) -> Vocabulary:
        return Vocabulary(
            tuple(f"c{i}" for i in range(self.n_classes)),
            tuple(f"p{i}" for i in range(self.n_predicates)),
            max(32, self.max_instances),
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["instance_weights"] = list(self.instance_weights)
        d["classes_per_image"] = list(self.classes_per_image)
        d["quintuples_per_image"] = list(self.quintuples_per_image)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        d = dict(d)
        for k in ("instance_weights", "classes_per_image", "quintuples_per_image"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)

    @classmethod
    def load(cls, path) -> "SynthConfig":
        with open(path) as f:
            return cls.from_dict(json.load(f))


@dataclass(frozen=True)
class SynthPair:
    gt: SceneGraph
    pred: SceneGraph
    planted: InstanceMapping


def _gt_graph(cfg: SynthConfig, rng: np.random.Generator, image_id: str) -> SceneGraph:
    n_cls = int(rng.integers(cfg.classes_per_image[0], cfg.classes_per_image[1] + 1))
    classes = np.sort(rng.choice(cfg.n_classes, size=n_cls, replace=False))
    w = np.asarray(cfg.instance_weights, dtype=float)
    w = w / w.sum()
    node_list: list[EntityInstance] = []
    for c in classes:
        k = int(rng.choice(len(w), p=w)) + 1
        node_list += [EntityInstance(int(c), i) for i in range(k)]
    if len(node_list) > cfg.max_nodes:
        keep = np.sort(rng.choice(len(node_list), size=cfg.max_nodes, replace=False))
        node_list = [node_list[i] for i in keep]
    n_q = int(rng.integers(cfg.quintuples_per_image[0], cfg.quintuples_per_image[1] + 1))
    n_pred_pool = cfg.gt_predicates or cfg.n_predicates
    if len(node_list) < 2 or n_q == 0:
        return SceneGraph(image_id, ())

    seen = set()
    quints = []

    def add(s: int, o: int) -> bool:
        q = Quintuple(node_list[s], node_list[o], int(rng.integers(n_pred_pool)))
        if q.key in seen:
            return False
        seen.add(q.key)
        quints.append(q)
        return True

    # touch every node once so the drawn instance counts actually materialise
    for s in rng.permutation(len(node_list)):
        if len(quints) >= n_q:
            break
        o = int(rng.integers(len(node_list) - 1))
        o = o + 1 if o >= s else o
        if rng.random() < 0.5:
            add(int(s), o)
        else:
            add(o, int(s))
    attempts = 0
    while len(quints) < n_q and attempts < 20 * n_q:
        attempts += 1
        s, o = rng.choice(len(node_list), size=2, replace=False)
        add(int(s), int(o))
    return canonicalize(SceneGraph(image_id, tuple(quints)))


def _perturb(cfg: SynthConfig, gt: SceneGraph, rng: np.random.Generator) -> tuple[SceneGraph, dict]:
    gt_nodes = sorted(nodes(gt))
    by_cls: dict[int, list[EntityInstance]] = {}
    for n in gt_nodes:
        by_cls.setdefault(n.cls, []).append(n)
    planted: dict[EntityInstance, EntityInstance] = {}
    for c, ns in by_cls.items():
        if rng.random() < cfg.instance_shuffle:
            perm = rng.permutation(len(ns))
        else:
            perm = np.arange(len(ns))
        for n, j in zip(ns, perm):
            planted[n] = EntityInstance(c, int(ns[j].idx))

    gp = cfg.gt_predicates or cfg.n_predicates
    out = []
    for q in gt.quintuples:
        if rng.random() < cfg.edge_drop:
            continue
        p = q.pred
        if rng.random() < cfg.label_noise:
            if cfg.noise_outside_gt:
                p = int(rng.integers(gp, cfg.n_predicates))
            elif cfg.n_predicates > 1:
                p = int(rng.integers(cfg.n_predicates - 1))
                p = p + 1 if p >= q.pred else p
        out.append(Quintuple(planted[q.sub], planted[q.obj], p))
    pred_nodes = [planted[n] for n in gt_nodes]
    n_add = int(rng.binomial(len(gt), cfg.edge_add)) if len(pred_nodes) >= 2 else 0
    for _ in range(n_add):
        s, o = rng.choice(len(pred_nodes), size=2, replace=False)
        out.append(Quintuple(pred_nodes[int(s)], pred_nodes[int(o)], int(rng.integers(cfg.n_predicates))))
    order = rng.permutation(len(out))
    ranked = []
    for rank, i in enumerate(order):
        q = out[int(i)]
        ranked.append(Quintuple(q.sub, q.obj, q.pred, round(1.0 - rank / max(len(out), 1), 6)))
    return SceneGraph(gt.image_id, tuple(ranked)), planted


def generate_one(cfg: SynthConfig, i: int) -> SynthPair:
    rng = np.random.default_rng([cfg.seed, i])
    image_id = f"img{i:05d}"
    gt = _gt_graph(cfg, rng, image_id)
    pred, planted = _perturb(cfg, gt, rng)
    present = nodes(pred)
    planted = {g: p for g, p in planted.items() if p in present}
    return SynthPair(gt, pred, mapping_from_pairs(gt, pred, planted))


def generate(cfg: SynthConfig) -> list[SynthPair]:
    """Corpus of ``cfg.n_images`` pairs; image ``i`` depends only on ``(seed, i)``."""
    return [generate_one(cfg, i) for i in range(cfg.n_images)]


def adversarial_tie_case(seed: int, max_instances_per_class: int = 2, n_classes: int = 6,
                         n_predicates: int = 4, retries: int = 200) -> tuple[SceneGraph, SceneGraph]:
    """A pair on which per-class local assignment is provably suboptimal.

    Two same-class GT instances get identical one-hop neighbourhoods but are
    told apart by their neighbours' other edges. The prediction is a
    relabelled copy; a candidate is accepted once the local assignment
    falls short of the oracle while a two-way tree search reaches it.
    """
    if max_instances_per_class < 2:
        raise GenerationFailed("a tie needs at least two instances of one class")
    if n_classes < 4:
        raise GenerationFailed("need at least four classes to build a tie")
    rng = np.random.default_rng(seed)
    for _ in range(retries):
        tied, hub, *rest = (int(c) for c in rng.choice(n_classes, size=n_classes, replace=False))
        r, s = (int(p) for p in rng.choice(n_predicates, size=2, replace=True))
        a0, a1 = EntityInstance(tied, 0), EntityInstance(tied, 1)
        b0, b1 = EntityInstance(hub, 0), EntityInstance(hub, 1)
        c_label, d_label = rest[0], rest[1]
        quints = [
            Quintuple(a0, b0, r),
            Quintuple(a1, b1, r),
            Quintuple(b0, EntityInstance(c_label, 0), s),
            Quintuple(b1, EntityInstance(d_label, 0), s),
        ]
        # optional decoys that keep the tie intact
        for _ in range(int(rng.integers(0, 3))):
            extra = EntityInstance(int(rng.choice(rest)), 0)
            quints.append(Quintuple(extra, EntityInstance(rest[0], 0), int(rng.integers(n_predicates))))
        gt = canonicalize(SceneGraph(f"tie{seed}", tuple(dict.fromkeys(quints))))
        gt_ns = sorted(nodes(gt))
        relabel = {}
        for c in {n.cls for n in gt_ns}:
            same = [n for n in gt_ns if n.cls == c]
            perm = rng.permutation(len(same))
            for n, j in zip(same, perm):
                relabel[n] = EntityInstance(c, int(same[j].idx))
        order = rng.permutation(len(gt))
        pred = SceneGraph(gt.image_id, tuple(
            Quintuple(relabel[gt.quintuples[i].sub], relabel[gt.quintuples[i].obj], gt.quintuples[i].pred)
            for i in order
        ))
        best = exhaustive_match(gt, pred).matched
        if first_order_match(gt, pred).matched >= best:
            continue
        if hts_match(gt, pred, MatchConfig(branching_factor=2)).matched != best:
            continue
        return gt, pred
    raise GenerationFailed(f"no adversarial tie case found in {retries} attempts (seed {seed})")
