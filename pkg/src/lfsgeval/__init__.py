"""Location-free scene graph evaluation: codec, matching and LF-SGGen metrics."""

from .codec import DecodeReport, SamplerConfig, TokenSpace, decode, encode, nucleus_sample, top_k_unique
from .core import EntityInstance, Quintuple, SceneGraph, Vocabulary, canonicalize, degree, neighborhood, nodes
from .matcher import (
    InstanceMapping,
    MatchConfig,
    apply_mapping,
    exhaustive_match,
    first_order_match,
    hts_match,
    overlap_score,
)
from .metrics import EvalReport, evaluate_dataset, precision_recall_f1, recall_at_k

__version__ = "0.1.0"
