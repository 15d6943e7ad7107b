"""JSONL graph records, vocabulary files, token files and reports."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator, Optional

from .core import EntityInstance, Quintuple, SceneGraph, Vocabulary
from .errors import LFSGError, ParseError, UnknownLabel

PRESETS = ("vg150", "psg")


def vocab_from_dict(d: dict, source: str = "<vocabulary>") -> Vocabulary:
    try:
        classes = d["classes"]
        predicates = d["predicates"]
    except (KeyError, TypeError):
        raise ParseError("vocabulary needs 'classes' and 'predicates' lists", path=source) from None
    if not classes or not predicates:
        raise ParseError("vocabulary lists must be non-empty", path=source)
    try:
        return Vocabulary(tuple(classes), tuple(predicates), int(d.get("max_instances", 32)))
    except ValueError as e:
        raise ParseError(str(e), path=source) from None


def vocab_to_dict(v: Vocabulary) -> dict:
    return {"classes": list(v.classes), "predicates": list(v.predicates), "max_instances": v.max_instance_count}


def load_vocabulary(path: str | Path) -> Vocabulary:
    """Read a vocabulary JSON file, or a bundled preset via ``preset:<name>``."""
    path = str(path)
    if path.startswith("preset:"):
        name = path.split(":", 1)[1]
        if name not in PRESETS:
            raise ParseError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
        text = resources.files("lfsgeval.presets").joinpath(f"{name}.json").read_text()
        return vocab_from_dict(json.loads(text), path)
    try:
        with open(path) as f:
            d = json.load(f)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON: {e.msg}", line=e.lineno, path=path) from None
    return vocab_from_dict(d, path)


def save_vocabulary(v: Vocabulary, path: str | Path) -> None:
    with open(path, "w") as f:
        json.dump(vocab_to_dict(v), f, indent=2)
        f.write("\n")


def _node(d, vocab: Vocabulary, line: int, path: str) -> EntityInstance:
    if not isinstance(d, dict) or "cls" not in d or "idx" not in d:
        raise ParseError("entity must be an object with 'cls' and 'idx'", line, path)
    idx = d["idx"]
    if not isinstance(idx, int) or isinstance(idx, bool) or idx < 0:
        raise ParseError(f"instance idx must be a non-negative integer, got {idx!r}", line, path)
    try:
        return EntityInstance(vocab.class_index(d["cls"]), idx)
    except UnknownLabel as e:
        raise UnknownLabel(f"{path}:line {line}: {e}") from None


def record_to_graph(rec: dict, vocab: Vocabulary, line: int = 0, path: str = "<input>") -> SceneGraph:
    if not isinstance(rec, dict) or "image_id" not in rec or "triplets" not in rec:
        raise ParseError("record needs 'image_id' and 'triplets'", line, path)
    if not isinstance(rec["triplets"], list):
        raise ParseError("'triplets' must be a list", line, path)
    out = []
    for t in rec["triplets"]:
        if not isinstance(t, dict) or not {"sub", "pred", "obj"} <= t.keys():
            raise ParseError("triplet needs 'sub', 'pred' and 'obj'", line, path)
        try:
            pred = vocab.predicate_index(t["pred"])
        except UnknownLabel as e:
            raise UnknownLabel(f"{path}:line {line}: {e}") from None
        score = t.get("score")
        if score is not None and not isinstance(score, (int, float)):
            raise ParseError(f"score must be numeric, got {score!r}", line, path)
        out.append(Quintuple(_node(t["sub"], vocab, line, path), _node(t["obj"], vocab, line, path), pred,
                             None if score is None else float(score)))
    return SceneGraph(str(rec["image_id"]), tuple(out))


def graph_to_record(g: SceneGraph, vocab: Vocabulary) -> dict:
    triplets = []
    for q in g.quintuples:
        t = {
            "sub": {"cls": vocab.classes[q.sub.cls], "idx": q.sub.idx},
            "pred": vocab.predicates[q.pred],
            "obj": {"cls": vocab.classes[q.obj.cls], "idx": q.obj.idx},
        }
        if q.score is not None:
            t["score"] = q.score
        triplets.append(t)
    return {"image_id": g.image_id, "triplets": triplets}


def iter_graphs(path: str | Path, vocab: Vocabulary) -> Iterator[SceneGraph]:
    """Yield graphs from a JSONL file; blank lines are skipped."""
    path = str(path)
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            if not raw.strip():
                continue
            try:
                rec = json.loads(raw)
            except json.JSONDecodeError as e:
                raise ParseError(f"malformed JSON ({e.msg})", lineno, path) from None
            yield record_to_graph(rec, vocab, lineno, path)


def read_graphs(path: str | Path, vocab: Vocabulary) -> list[SceneGraph]:
    graphs = list(iter_graphs(path, vocab))
    seen = set()
    for g in graphs:
        if g.image_id in seen:
            raise ParseError(f"duplicate image_id {g.image_id!r}", path=str(path))
        seen.add(g.image_id)
    return graphs


def write_graphs(graphs: Iterable[SceneGraph], vocab: Vocabulary, path: str | Path) -> None:
    with open(path, "w") as f:
        for g in graphs:
            f.write(json.dumps(graph_to_record(g, vocab), separators=(",", ":")))
            f.write("\n")


def infer_vocabulary(*paths: str | Path, max_instances: int = 32) -> Vocabulary:
    """Build a vocabulary from the labels used in JSONL files (first-seen order)."""
    classes: dict[str, None] = {}
    predicates: dict[str, None] = {}
    for path in paths:
        with open(path) as f:
            for lineno, raw in enumerate(f, start=1):
                if not raw.strip():
                    continue
                try:
                    rec = json.loads(raw)
                    for t in rec["triplets"]:
                        classes.setdefault(t["sub"]["cls"])
                        classes.setdefault(t["obj"]["cls"])
                        predicates.setdefault(t["pred"])
                except (json.JSONDecodeError, KeyError, TypeError) as e:
                    raise ParseError(f"cannot read labels ({e})", lineno, str(path)) from None
    return Vocabulary(tuple(classes) or ("_",), tuple(predicates) or ("_",), max_instances)


def read_tokens(path: str | Path, size: Optional[int] = None) -> list[list[int]]:
    """One whitespace-separated integer sequence per line.

    With ``size`` every token must lie in ``[0, size)``.
    """
    out = []
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            try:
                seq = [int(t) for t in raw.split()]
            except ValueError:
                raise ParseError("tokens must be integers", lineno, str(path)) from None
            if size is not None:
                for t in seq:
                    if not 0 <= t < size:
                        raise ParseError(f"token {t} outside token space [0, {size})", lineno, str(path))
            out.append(seq)
    return out


def write_tokens(seqs: Iterable[list[int]], path: str | Path) -> None:
    with open(path, "w") as f:
        for seq in seqs:
            f.write(" ".join(str(t) for t in seq))
            f.write("\n")


def dumps_report(d: dict) -> str:
    return json.dumps(d, indent=2, sort_keys=True) + "\n"


def write_report(d: dict, path: str | Path | None) -> str:
    text = dumps_report(d)
    if path is not None:
        Path(path).write_text(text)
    return text


def read_report(path: str | Path) -> dict:
    try:
        with open(path) as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid report JSON ({e.msg})", e.lineno, str(path)) from None


__all__ = [
    "LFSGError",
    "load_vocabulary",
    "save_vocabulary",
    "read_graphs",
    "write_graphs",
    "iter_graphs",
    "infer_vocabulary",
    "read_tokens",
    "write_tokens",
    "record_to_graph",
    "graph_to_record",
    "read_report",
    "write_report",
    "dumps_report",
]
