"""Recall@K, precision and F1 for location-free scene graph predictions."""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from .codec import dedup, top_k_unique
from .core import SceneGraph
from .errors import UnknownImageId
from .matcher import MatchConfig, hts_match

DEFAULT_KS = (20, 50, 100)


def recall_at_k(gt: SceneGraph, pred: SceneGraph, k: int, cfg: MatchConfig = MatchConfig()) -> float:
    """Fraction of GT quintuples recovered by the top ``k`` unique predictions.

    Matching is re-run on the top-``k`` slice. An empty GT scores 1.0.
    """
    if len(gt) == 0:
        return 1.0
    sliced = top_k_unique(pred, k)
    return hts_match(gt, sliced, cfg).recall


def f1(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def precision_recall_f1(gt: SceneGraph, pred: SceneGraph,
                        cfg: MatchConfig = MatchConfig()) -> tuple[float, float, float]:
    """Precision, recall and F1 on the full (deduplicated) prediction."""
    pred_u = dedup(pred)
    if len(gt) == 0 and len(pred_u) == 0:
        return 1.0, 1.0, 1.0
    if len(pred_u) == 0:
        return 0.0, 0.0, 0.0
    m = hts_match(gt, pred_u, cfg)
    recall = m.recall if len(gt) else 1.0
    precision = m.matched / len(pred_u)
    return precision, recall, f1(precision, recall)


@dataclass
class ImageResult:
    image_id: str
    recall: dict[int, float]
    precision: Optional[float] = None
    prf_recall: Optional[float] = None
    f1: Optional[float] = None
    matcher_time_ms: Optional[float] = None

    def to_dict(self) -> dict:
        d = {
            "image_id": self.image_id,
            "recall": {str(k): self.recall[k] for k in sorted(self.recall)},
        }
        if self.precision is not None:
            d["precision"] = self.precision
            d["prf_recall"] = self.prf_recall
            d["f1"] = self.f1
        if self.matcher_time_ms is not None:
            d["matcher_time_ms"] = self.matcher_time_ms
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ImageResult":
        return cls(
            image_id=d["image_id"],
            recall={int(k): v for k, v in d["recall"].items()},
            precision=d.get("precision"),
            prf_recall=d.get("prf_recall"),
            f1=d.get("f1"),
            matcher_time_ms=d.get("matcher_time_ms"),
        )


@dataclass
class EvalReport:
    ks: tuple[int, ...]
    per_image: list[ImageResult]
    aggregate: dict[int, float]
    precision: Optional[float] = None
    recall: Optional[float] = None
    f1: Optional[float] = None
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {
            "config": self.config,
            "ks": list(self.ks),
            "aggregate": {"recall": {str(k): self.aggregate[k] for k in self.ks}},
            "per_image": [r.to_dict() for r in self.per_image],
        }
        if self.precision is not None:
            d["aggregate"].update(precision=self.precision, recall_full=self.recall, f1=self.f1)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        agg = d["aggregate"]
        ks = tuple(d["ks"])
        return cls(
            ks=ks,
            per_image=[ImageResult.from_dict(r) for r in d["per_image"]],
            aggregate={int(k): v for k, v in agg["recall"].items()},
            precision=agg.get("precision"),
            recall=agg.get("recall_full"),
            f1=agg.get("f1"),
            config=d.get("config", {}),
        )


def _mean(xs: Iterable[float]) -> float:
    xs = list(xs)
    return math.fsum(xs) / len(xs) if xs else 0.0


def evaluate_image(gt: SceneGraph, pred: Optional[SceneGraph], ks: Sequence[int], cfg: MatchConfig,
                   prf: bool = False, timings: bool = False) -> ImageResult:
    if pred is None:
        pred = SceneGraph(gt.image_id, ())
    t0 = time.perf_counter()
    recalls = {k: recall_at_k(gt, pred, k, cfg) for k in ks}
    res = ImageResult(gt.image_id, recalls)
    if prf:
        res.precision, res.prf_recall, res.f1 = precision_recall_f1(gt, pred, cfg)
    if timings:
        res.matcher_time_ms = (time.perf_counter() - t0) * 1000.0
    return res


def _evaluate_star(args):
    return evaluate_image(*args)


def evaluate_dataset(gt_set: Iterable[SceneGraph], pred_set: Iterable[SceneGraph],
                     ks: Sequence[int] = DEFAULT_KS, cfg: MatchConfig = MatchConfig(),
                     jobs: int = 1, prf: bool = False, timings: bool = False) -> EvalReport:
    """Score every GT image; missing predictions count as empty.

    Per-image results are ordered by image id and averaged per image, so
    the report does not depend on input order or ``jobs``.
    """
    gts: dict[str, SceneGraph] = {}
    for g in gt_set:
        gts[g.image_id] = g
    preds: dict[str, SceneGraph] = {}
    for p in pred_set:
        if p.image_id not in gts:
            raise UnknownImageId(f"prediction for unknown image id {p.image_id!r}")
        preds[p.image_id] = p
    ks = tuple(sorted(set(ks)))
    if not ks or ks[0] < 1:
        raise ValueError("ks must be positive integers")
    ids = sorted(gts)
    tasks = [(gts[i], preds.get(i), ks, cfg, prf, timings) for i in ids]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_evaluate_star, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        results = [_evaluate_star(t) for t in tasks]

    report = EvalReport(
        ks=ks,
        per_image=results,
        aggregate={k: _mean(r.recall[k] for r in results) for k in ks},
        config={
            "branching_factor": cfg.branching_factor,
            "directed_neighborhood": cfg.directed_neighborhood,
            "static_neighborhoods": cfg.static_neighborhoods,
            "dedup_gt": cfg.dedup_gt,
        },
    )
    if prf:
        report.precision = _mean(r.precision for r in results)
        report.recall = _mean(r.prf_recall for r in results)
        report.f1 = _mean(r.f1 for r in results)
    return report


def aggregate_from(per_image: Mapping[str, float]) -> float:
    return _mean(per_image[k] for k in sorted(per_image))
