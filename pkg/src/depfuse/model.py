"""Model assembly: encoders over graph views, aspect pooling, classifier.

A *view* names the graph an encoder reads for each sentence: ``union``,
``intersection`` or ``single:<parser_id>``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from depfuse.classifier import AspectClassifier, pool_aspect
from depfuse.errors import DimensionMismatch, InvalidConfig
from depfuse.graph import EnsembleGraph, fuse_trees
from depfuse.nn.tensor import Tensor, concat, softmax
from depfuse.rgat import GraphBatch, RGATConfig, RGATEncoder, graph_mask

MODEL_KINDS = ("rgat-fused", "rgat-single", "gat-baseline", "label-ensemble", "feature-ensemble")


@dataclass
class PreparedInstance:
    """Numeric view of a LabeledInstance: features, label id, span rows, graphs."""

    sentence_id: str
    features: np.ndarray
    label: int
    span_rows: list[int]
    aspect: tuple[int, int]
    graphs: dict[str, EnsembleGraph]
    _masks: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    def mask(self, view: str, typed: bool) -> np.ndarray:
        key = (view, typed)
        if key not in self._masks:
            self._masks[key] = graph_mask(self.graphs[view], typed)
        return self._masks[key]


def prepare(instances, views) -> list[PreparedInstance]:
    out = []
    for inst in instances:
        if inst.features is None:
            raise ValueError(f"{inst.sentence_id}: features not attached")
        if not inst.trees:
            raise ValueError(f"{inst.sentence_id}: trees not attached")
        graphs = {v: fuse_trees(inst.trees, v) for v in views}
        out.append(PreparedInstance(
            inst.sentence_id, inst.features.rows, inst.label_id, inst.aspect.rows(),
            (inst.aspect.start, inst.aspect.length), graphs,
        ))
    return out


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    parsers: tuple[str, ...]
    fusion: str = "union"
    parser: str | None = None

    def views(self) -> list[str]:
        if self.kind == "rgat-fused":
            return [self.fusion]
        if self.kind in ("rgat-single", "gat-baseline"):
            return [f"single:{self.parser}"]
        return [f"single:{p}" for p in self.parsers]


def parse_model_selector(selector: str, parsers, fusion: str = "union", parser: str | None = None) -> ModelSpec:
    """Turn ``--model`` strings such as ``rgat-single:stanza`` into a ModelSpec."""
    parsers = tuple(parsers)
    kind, _, arg = selector.partition(":")
    if kind not in MODEL_KINDS:
        raise InvalidConfig(f"unknown model {selector!r}; choose from {MODEL_KINDS}")
    if fusion not in ("union", "intersection"):
        raise InvalidConfig(f"fusion must be union or intersection, got {fusion!r}")
    if kind in ("rgat-single", "gat-baseline"):
        chosen = arg or parser or (parsers[0] if parsers else None)
        if chosen is None:
            raise InvalidConfig(f"{kind} needs a parser id")
        if parsers and chosen not in parsers:
            raise InvalidConfig(f"parser {chosen!r} not among {parsers}")
        return ModelSpec(kind, parsers, fusion, chosen)
    if kind in ("label-ensemble", "feature-ensemble") and not parsers:
        raise InvalidConfig(f"{kind} needs at least one parser")
    return ModelSpec(kind, parsers, fusion)


class GraphSentimentModel:
    """One encoder per view; pooled aspect vectors are concatenated into the classifier.

    With a single view this is the fused or single-tree RGAT model; with one
    view per parser it is the feature ensemble.
    """

    def __init__(self, views, rgat: RGATConfig, rng: np.random.Generator,
                 d_out: int | None = None, classifier_bias: bool = True, prefix: str = ""):
        self.views = list(views)
        if not self.views:
            raise InvalidConfig("model needs at least one view")
        self.rgat = rgat
        pre = f"{prefix}." if prefix else ""
        if len(self.views) == 1:
            self.encoders = [RGATEncoder(rgat, rng, f"{pre}enc")]
        else:
            self.encoders = [RGATEncoder(rgat, rng, f"{pre}enc{m}") for m in range(len(self.views))]
        widths = {e.config.hidden_dim for e in self.encoders}
        if len(widths) != 1:
            raise DimensionMismatch(f"encoders disagree on hidden width: {widths}")
        d_h = rgat.hidden_dim
        self.classifier = AspectClassifier(
            len(self.views) * d_h, d_out or d_h, rng, f"{pre}cls", classifier_bias
        )

    @classmethod
    def from_parts(cls, views, encoders, classifier):
        """Assemble from already-built encoders and classifier (shared parameters)."""
        model = cls.__new__(cls)
        model.views, model.encoders, model.classifier = list(views), list(encoders), classifier
        model.rgat = model.encoders[0].config
        return model

    def parameters(self):
        ps = []
        for enc in self.encoders:
            ps += enc.parameters()
        return ps + self.classifier.parameters()

    def pooled(self, batch_items, training=False, rng=None) -> Tensor:
        pooled = []
        for view, enc in zip(self.views, self.encoders):
            batch = GraphBatch.from_parts([(it.features, it.mask(view, enc.typed)) for it in batch_items])
            h = enc.encode(batch, training, rng)
            spans = [[batch.offsets[b] + r for r in it.span_rows] for b, it in enumerate(batch_items)]
            pooled.append(pool_aspect(h, spans))
        return pooled[0] if len(pooled) == 1 else concat(pooled, axis=1)

    def logits(self, batch_items, training=False, rng=None) -> Tensor:
        return self.classifier.logits(self.pooled(batch_items, training, rng))

    def member_logits(self, batch_items, training=False, rng=None) -> list[Tensor]:
        return [self.logits(batch_items, training, rng)]

    def predict_proba(self, batch_items) -> np.ndarray:
        return softmax(self.logits(batch_items)).data

    def predict(self, batch_items) -> tuple[np.ndarray, np.ndarray]:
        probs = self.predict_proba(batch_items)
        return probs, probs.argmax(axis=1)
