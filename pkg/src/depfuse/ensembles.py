"""Comparison ensembles: label voting and feature concatenation across parsers."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from depfuse.errors import DimensionMismatch
from depfuse.model import GraphSentimentModel, ModelSpec
from depfuse.nn.tensor import Tensor
from depfuse.rgat import RGATConfig


def label_ensemble_vote(predictions, soft: bool = False) -> int:
    """Combine M probability vectors into one label index.

    Hard voting: majority over argmax labels; ties go to the label with the
    highest probability summed over all models, then to the lowest class
    index. ``soft`` averages the probabilities instead.
    """
    probs = np.atleast_2d(np.asarray(predictions, dtype=np.float64))
    summed = probs.sum(axis=0)
    if soft:
        return int(np.argmax(summed))
    votes = np.bincount(probs.argmax(axis=1), minlength=probs.shape[1])
    tied = np.flatnonzero(votes == votes.max())
    if len(tied) == 1:
        return int(tied[0])
    best = summed[tied].max()
    return int(tied[summed[tied] == best][0])


class LabelEnsemble:
    """M single-tree models, one per parser, combined by voting at prediction time.

    Members are optimized together on the sum of their own losses, which
    gives each member exactly the gradient it would get alone.
    """

    def __init__(self, parsers, rgat: RGATConfig, rng, d_out=None, classifier_bias=True, soft=False):
        self.members = [
            GraphSentimentModel([f"single:{p}"], rgat, rng, d_out, classifier_bias, prefix=f"m{m}")
            for m, p in enumerate(parsers)
        ]
        self.views = [v for mem in self.members for v in mem.views]
        self.soft = soft

    def parameters(self):
        return [p for mem in self.members for p in mem.parameters()]

    def member_logits(self, batch_items, training=False, rng=None) -> list[Tensor]:
        return [mem.logits(batch_items, training, rng) for mem in self.members]

    def predict(self, batch_items) -> tuple[np.ndarray, np.ndarray]:
        per_member = np.stack([mem.predict_proba(batch_items) for mem in self.members], axis=1)
        labels = np.array([label_ensemble_vote(p, self.soft) for p in per_member], dtype=np.int64)
        return per_member.mean(axis=1), labels


def feature_ensemble_forward(items, encoders, views, classifier, training=False, rng=None) -> Tensor:
    """Logits from per-parser encoders whose pooled aspect vectors are concatenated.

    Block m of the classifier input comes from ``encoders[m]`` reading
    ``views[m]``, so the configured parser order fixes the block order.
    """
    if len(encoders) != len(views):
        raise DimensionMismatch(f"{len(encoders)} encoders for {len(views)} views")
    widths = {e.config.hidden_dim for e in encoders}
    if len(widths) != 1 or classifier.in_dim != len(encoders) * widths.pop():
        raise DimensionMismatch("classifier input width must be M * d_h")
    model = GraphSentimentModel.from_parts(views, encoders, classifier)
    return model.logits(items, training, rng)


def build_model(spec: ModelSpec, rgat: RGATConfig, rng, d_out=None, classifier_bias=True, soft_vote=False):
    if spec.kind == "gat-baseline":
        rgat = replace(rgat, use_edge_types=False, use_positions=False)
    if spec.kind == "label-ensemble":
        return LabelEnsemble(spec.parsers, rgat, rng, d_out, classifier_bias, soft_vote)
    return GraphSentimentModel(spec.views(), rgat, rng, d_out, classifier_bias)
