"""Scene graph <-> token sequence conversion and top-p token selection.

Token layout for a vocabulary with C classes, P predicates and I instance
indices::

    [0, C)          class tokens
    [C, C+P)        predicate tokens
    [C+P, C+P+I)    instance-index tokens
    C+P+I           START
    C+P+I+1         STOP
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .core import EntityInstance, Quintuple, SceneGraph, Vocabulary, canonicalize
from .errors import InvalidDistribution, UnknownLabel, VocabularyOverflow

CLASS, PREDICATE, INDEX, START, STOP = "class", "predicate", "index", "start", "stop"

# kind pattern of one quintuple block
_BLOCK = (CLASS, INDEX, CLASS, INDEX, PREDICATE)


@dataclass(frozen=True)
class TokenSpace:
    n_classes: int
    n_predicates: int
    n_indices: int

    @classmethod
    def from_vocab(cls, vocab: Vocabulary) -> "TokenSpace":
        return cls(vocab.n_classes, vocab.n_predicates, vocab.max_instance_count)

    @property
    def pred_offset(self) -> int:
        return self.n_classes

    @property
    def index_offset(self) -> int:
        return self.n_classes + self.n_predicates

    @property
    def start(self) -> int:
        return self.index_offset + self.n_indices

    @property
    def stop(self) -> int:
        return self.start + 1

    @property
    def size(self) -> int:
        return self.start + 2

    def class_token(self, c: int) -> int:
        if not 0 <= c < self.n_classes:
            raise UnknownLabel(f"class index {c} outside vocabulary")
        return c

    def predicate_token(self, p: int) -> int:
        if not 0 <= p < self.n_predicates:
            raise UnknownLabel(f"predicate index {p} outside vocabulary")
        return self.pred_offset + p

    def index_token(self, i: int) -> int:
        if not 0 <= i < self.n_indices:
            raise VocabularyOverflow(f"instance index {i} outside token range [0, {self.n_indices})")
        return self.index_offset + i

    def kind(self, token: int) -> tuple[str, int]:
        """Decode ``token`` to ``(kind, value)``; raises ValueError outside the space."""
        if 0 <= token < self.n_classes:
            return CLASS, token
        if token < self.index_offset and token >= 0:
            return PREDICATE, token - self.pred_offset
        if self.index_offset <= token < self.start:
            return INDEX, token - self.index_offset
        if token == self.start:
            return START, 0
        if token == self.stop:
            return STOP, 0
        raise ValueError(f"token {token} outside token space of size {self.size}")


def encode(g: SceneGraph, vocab: Vocabulary, shuffle_seed: Optional[int] = None) -> list[int]:
    """Flatten ``g`` into ``5 * len(g)`` tokens followed by STOP.

    With ``shuffle_seed`` the quintuple order is a seeded uniform permutation;
    instance ids are then reassigned by first appearance in the final order.
    """
    ts = TokenSpace.from_vocab(vocab)
    vocab.check_graph(g)
    qs = list(g.quintuples)
    if shuffle_seed is not None:
        order = np.random.default_rng(shuffle_seed).permutation(len(qs))
        qs = [qs[i] for i in order]
    g = canonicalize(g.with_quintuples(qs), vocab)
    tokens = []
    for q in g.quintuples:
        tokens += [
            ts.class_token(q.sub.cls),
            ts.index_token(q.sub.idx),
            ts.class_token(q.obj.cls),
            ts.index_token(q.obj.idx),
            ts.predicate_token(q.pred),
        ]
    tokens.append(ts.stop)
    return tokens


@dataclass
class DecodeReport:
    quintuples: int = 0
    malformed: int = 0
    truncated: int = 0
    stopped: bool = False

    def merge(self, other: "DecodeReport") -> "DecodeReport":
        return DecodeReport(
            self.quintuples + other.quintuples,
            self.malformed + other.malformed,
            self.truncated + other.truncated,
            self.stopped and other.stopped,
        )


def decode(tokens: Sequence[int], vocab: Vocabulary, max_quintuples: Optional[int] = None,
           image_id: str = "") -> tuple[SceneGraph, DecodeReport]:
    """Parse a token stream back into a canonical scene graph.

    Never raises on bad input: blocks with the wrong kind pattern (including
    out-of-range tokens) are skipped and counted as malformed, and a trailing
    partial block is dropped and counted as truncated.
    """
    if max_quintuples is not None and max_quintuples < 1:
        raise ValueError("max_quintuples must be positive")
    ts = TokenSpace.from_vocab(vocab)
    report = DecodeReport()
    out: list[Quintuple] = []
    toks = list(tokens)
    pos = 0
    if toks and toks[0] == ts.start:
        pos = 1
    while pos < len(toks):
        if max_quintuples is not None and len(out) >= max_quintuples:
            break
        block = toks[pos:pos + 5]
        if block[0] == ts.stop:
            report.stopped = True
            break
        if ts.stop in block:
            # block cut short by STOP
            report.truncated += 1
            report.stopped = True
            break
        if len(block) < 5:
            report.truncated += 1
            break
        pos += 5
        values = []
        for tok, want in zip(block, _BLOCK):
            try:
                kind, value = ts.kind(int(tok))
            except (ValueError, TypeError):
                kind, value = None, None
            if kind != want:
                values = None
                break
            values.append(value)
        if values is None:
            report.malformed += 1
            continue
        sc, si, oc, oi, p = values
        out.append(Quintuple(EntityInstance(sc, si), EntityInstance(oc, oi), p))
    report.quintuples = len(out)
    # decoded ids are already in token range, so canonicalizing cannot overflow
    return canonicalize(SceneGraph(image_id, tuple(out))), report


@dataclass(frozen=True)
class SamplerConfig:
    p_value: float = 0.95
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.p_value <= 1.0:
            raise ValueError(f"p_value must lie in (0, 1], got {self.p_value}")

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


def nucleus(probs, p_value: float) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(tokens, renormalized_probs)`` of the top-p nucleus.

    Tokens are ordered by descending probability, ties by ascending id; the
    nucleus is the shortest such prefix whose mass reaches ``p_value``.
    """
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 1 or probs.size == 0:
        raise InvalidDistribution("probability vector must be one-dimensional and non-empty")
    if np.any(probs < 0) or not np.all(np.isfinite(probs)):
        raise InvalidDistribution("probabilities must be finite and non-negative")
    if abs(probs.sum() - 1.0) > 1e-6:
        raise InvalidDistribution(f"probabilities sum to {probs.sum()!r}, not 1")
    if not 0.0 < p_value <= 1.0:
        raise ValueError(f"p_value must lie in (0, 1], got {p_value}")
    order = np.lexsort((np.arange(probs.size), -probs))
    cum = np.cumsum(probs[order])
    # tolerance keeps exact-mass prefixes (e.g. 0.5+0.3+0.15 vs 0.95) inside
    cut = int(np.searchsorted(cum, p_value - 1e-12, side="left")) + 1
    cut = min(cut, probs.size)
    kept = order[:cut]
    mass = probs[kept]
    total = mass.sum()
    if total <= 0:
        # degenerate: all mass sits on tokens after the cut
        return kept[:1], np.ones(1)
    return kept, mass / total


def nucleus_sample(probs, cfg: SamplerConfig, rng: np.random.Generator) -> int:
    tokens, p = nucleus(probs, cfg.p_value)
    if tokens.size == 1:
        return int(tokens[0])
    u = rng.random()
    i = int(np.searchsorted(np.cumsum(p), u, side="right"))
    return int(tokens[min(i, tokens.size - 1)])


def sample_sequence(next_probs: Callable[[list[int]], Sequence[float]], vocab: Vocabulary,
                    cfg: SamplerConfig, max_quintuples: int = 300,
                    honor_stop: bool = True) -> list[int]:
    """Draw up to ``5 * max_quintuples`` tokens from a caller-supplied model.

    ``next_probs(prefix)`` must return a distribution over the token space.
    Sampling ends early at STOP when ``honor_stop`` is set.
    """
    ts = TokenSpace.from_vocab(vocab)
    rng = cfg.rng()
    prefix = [ts.start]
    for _ in range(5 * max_quintuples):
        tok = nucleus_sample(next_probs(prefix), cfg, rng)
        prefix.append(tok)
        if honor_stop and tok == ts.stop:
            break
    return prefix


def top_k_unique(g: SceneGraph, k: int) -> SceneGraph:
    """First ``k`` pairwise-distinct quintuples in rank order (scores ignored)."""
    if k < 1:
        raise ValueError("k must be positive")
    seen = set()
    out = []
    for q in g.quintuples:
        key = q.key
        if key in seen:
            continue
        seen.add(key)
        out.append(q)
        if len(out) == k:
            break
    return g.with_quintuples(out)


def dedup(g: SceneGraph) -> SceneGraph:
    return top_k_unique(g, max(len(g), 1))
