"""Command-line entry point: ``lfsgeval <command> ...``.

Exit codes: 0 success, 2 parse/input error, 3 vocabulary error, 4 matcher
resource limit.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

from . import io
from .codec import DecodeReport, TokenSpace, decode, encode
from .core import EntityInstance
from .errors import LFSGError, ParseError, UnknownImageId
from .matcher import MatchConfig, exhaustive_match, hts_match
from .metrics import DEFAULT_KS, evaluate_dataset
from .retrieval import Gallery, rank, retrieval_recall
from .synth import SynthConfig, generate

log = logging.getLogger("lfsgeval")


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(t) for t in text.replace(" ", "").split(",") if t]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not vals or any(v < 1 for v in vals):
        raise argparse.ArgumentTypeError("values must be positive integers")
    return vals


def _match_config(args) -> MatchConfig:
    return MatchConfig(
        branching_factor=args.branching_factor,
        directed_neighborhood=getattr(args, "directed_neighborhood", False),
        static_neighborhoods=getattr(args, "static_neighborhoods", False),
        dedup_gt=getattr(args, "dedup_gt", False),
        max_branches=getattr(args, "max_branches", 10**6),
    )


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _node_str(vocab, n: EntityInstance) -> str:
    return f"{vocab.classes[n.cls]}#{n.idx}"


def cmd_evaluate(args) -> int:
    vocab = io.load_vocabulary(args.vocab)
    gt = io.read_graphs(args.gt, vocab)
    pred = io.read_graphs(args.pred, vocab)
    report = evaluate_dataset(gt, pred, args.k, _match_config(args), jobs=args.jobs,
                              prf=args.prf, timings=args.timings)
    _emit(io.dumps_report(report.to_dict()), args.out)
    if args.out is not None:
        agg = ", ".join(f"R@{k}={report.aggregate[k]:.4f}" for k in report.ks)
        log.info("%d images: %s", len(report.per_image), agg)
    return 0


def cmd_match(args) -> int:
    vocab = io.load_vocabulary(args.vocab) if args.vocab else io.infer_vocabulary(args.gt, args.pred)
    gts = {g.image_id: g for g in io.read_graphs(args.gt, vocab)}
    preds = {g.image_id: g for g in io.read_graphs(args.pred, vocab)}
    if args.image_id not in gts or args.image_id not in preds:
        raise UnknownImageId(f"image id {args.image_id!r} not present in both files")
    gt, pred = gts[args.image_id], preds[args.image_id]
    if args.exhaustive:
        m = exhaustive_match(gt, pred, dedup_gt=args.dedup_gt)
    else:
        m = hts_match(gt, pred, _match_config(args))
    lines = [f"{_node_str(vocab, g)} -> {_node_str(vocab, p)}" for g, p in m.pairs]
    lines += [f"{_node_str(vocab, g)} -> -" for g in m.unmatched_gt]
    lines.append(f"recall {m.recall:.6f} ({m.matched}/{m.total})")
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def cmd_sweep_b(args) -> int:
    vocab = io.load_vocabulary(args.vocab)
    gt = io.read_graphs(args.gt, vocab)
    pred = io.read_graphs(args.pred, vocab)
    rows = ["B\tR@{}\twall_s".format(args.k)]
    for b in sorted(set(args.b_list)):
        cfg = MatchConfig(branching_factor=b, directed_neighborhood=args.directed_neighborhood)
        t0 = time.perf_counter()
        report = evaluate_dataset(gt, pred, [args.k], cfg, jobs=args.jobs)
        dt = time.perf_counter() - t0
        rows.append(f"{b}\t{report.aggregate[args.k]:.6f}\t{dt:.3f}")
    _emit("\n".join(rows) + "\n", args.out)
    return 0


def cmd_synth(args) -> int:
    cfg = SynthConfig.load(args.config)
    vocab = cfg.vocabulary()
    pairs = generate(cfg)
    io.write_graphs((p.gt for p in pairs), vocab, args.out_gt)
    io.write_graphs((p.pred for p in pairs), vocab, args.out_pred)
    with open(args.out_mapping, "w") as f:
        for p in pairs:
            rec = {
                "image_id": p.gt.image_id,
                "pairs": [[{"cls": vocab.classes[g.cls], "idx": g.idx},
                           {"cls": vocab.classes[q.cls], "idx": q.idx}] for g, q in p.planted.pairs],
                "recall": p.planted.recall,
            }
            f.write(json.dumps(rec, separators=(",", ":")) + "\n")
    if args.out_vocab:
        io.save_vocabulary(vocab, args.out_vocab)
    return 0


def cmd_codec(args) -> int:
    vocab = io.load_vocabulary(args.vocab)
    if args.direction == "encode":
        graphs = io.read_graphs(args.input, vocab)
        seqs = [encode(g, vocab, None if args.seed is None else args.seed + i) for i, g in enumerate(graphs)]
        io.write_tokens(seqs, args.out)
        Path(str(args.out) + ".ids").write_text("".join(g.image_id + "\n" for g in graphs))
        return 0

    ts = TokenSpace.from_vocab(vocab)
    seqs = io.read_tokens(args.input, ts.size)
    ids_path = Path(str(args.input) + ".ids")
    ids = ids_path.read_text().splitlines() if ids_path.exists() else []
    total = DecodeReport(stopped=True)
    graphs = []
    for i, seq in enumerate(seqs):
        image_id = ids[i] if i < len(ids) else str(i)
        g, rep = decode(seq, vocab, args.max_quintuples, image_id=image_id)
        total = total.merge(rep)
        graphs.append(g)
    io.write_graphs(graphs, vocab, args.out)
    sys.stderr.write(json.dumps({"sequences": len(seqs), "quintuples": total.quintuples,
                                 "malformed": total.malformed, "truncated": total.truncated},
                                sort_keys=True) + "\n")
    return 0


def cmd_retrieve(args) -> int:
    vocab = io.load_vocabulary(args.vocab)
    queries = io.read_graphs(args.query, vocab)
    gallery = Gallery.from_graphs(io.read_graphs(args.gallery, vocab))
    cfg = _match_config(args)
    top_n = max(args.k) if args.top_n is None else args.top_n
    ranked = {}
    lines = []
    for q in queries:
        res = rank(q, gallery, cfg, top_n=top_n)
        ranked[q.image_id] = [gid for gid, _ in res]
        lines.append(json.dumps({"query_id": q.image_id, "ranked": [[gid, s] for gid, s in res]},
                                separators=(",", ":")))
    _emit("\n".join(lines) + ("\n" if lines else ""), args.out)
    targets = {q.image_id: q.image_id for q in queries}
    rec = retrieval_recall(ranked, targets, sorted(args.k))
    summary = {"queries": len(queries), "gallery": len(gallery),
               "recall": {str(k): v for k, v in rec.items()}}
    sys.stderr.write(json.dumps(summary, sort_keys=True) + "\n")
    return 0


def _add_match_flags(p, with_jobs: bool = True) -> None:
    p.add_argument("--branching-factor", type=int, default=3)
    p.add_argument("--directed-neighborhood", action="store_true",
                   help="score neighbourhood tuples with edge direction")
    p.add_argument("--static-neighborhoods", action="store_true",
                   help="score candidates on the full graphs instead of the unmapped remainder")
    p.add_argument("--dedup-gt", action="store_true", help="count GT quintuples as a set")
    p.add_argument("--max-branches", type=int, default=10**6)
    if with_jobs:
        p.add_argument("--jobs", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lfsgeval", description="Location-free scene graph evaluation")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evaluate", help="Recall@K (and optionally P/R/F1) over a dataset")
    p.add_argument("gt")
    p.add_argument("pred")
    p.add_argument("vocab", help="vocabulary JSON or preset:vg150 / preset:psg")
    p.add_argument("--k", type=_int_list, default=list(DEFAULT_KS))
    _add_match_flags(p)
    p.add_argument("--prf", action="store_true", help="also report precision/recall/F1 on full predictions")
    p.add_argument("--timings", action="store_true", help="record per-image matcher time (not reproducible)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("match", help="print the instance mapping for one image")
    p.add_argument("gt")
    p.add_argument("pred")
    p.add_argument("image_id")
    p.add_argument("--vocab")
    _add_match_flags(p, with_jobs=False)
    p.add_argument("--exhaustive", action="store_true", help="use the brute-force oracle")
    p.add_argument("--out")
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("sweep-b", help="aggregate R@K and wall time per branching factor")
    p.add_argument("gt")
    p.add_argument("pred")
    p.add_argument("vocab")
    p.add_argument("--b-list", type=_int_list, default=[1, 2, 3, 4, 5, 6])
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--directed-neighborhood", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep_b)

    p = sub.add_parser("synth", help="generate a synthetic GT/prediction corpus")
    p.add_argument("config")
    p.add_argument("--out-gt", required=True)
    p.add_argument("--out-pred", required=True)
    p.add_argument("--out-mapping", required=True)
    p.add_argument("--out-vocab")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("codec", help="encode graphs to token sequences or decode them back")
    p.add_argument("direction", choices=["encode", "decode"])
    p.add_argument("input")
    p.add_argument("vocab")
    p.add_argument("--seed", type=int, help="shuffle quintuples (sequence i uses seed + i)")
    p.add_argument("--max-quintuples", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_codec)

    p = sub.add_parser("retrieve", help="rank a gallery against each query graph")
    p.add_argument("query")
    p.add_argument("gallery")
    p.add_argument("vocab")
    p.add_argument("--k", type=_int_list, default=[1, 20, 100])
    p.add_argument("--top-n", type=int)
    _add_match_flags(p, with_jobs=False)
    p.add_argument("--out")
    p.set_defaults(func=cmd_retrieve)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except LFSGError as e:
        sys.stderr.write(f"error: {e}\n")
        return e.exit_code if e.exit_code != 1 else 2
    except (OSError, ValueError) as e:
        sys.stderr.write(f"error: {e}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
