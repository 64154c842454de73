"""Dev splitting, the training loop with dev-based model selection, evaluation."""

from __future__ import annotations

import json
import logging
from collections import defaultdict
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from depfuse.classifier import training_loss
from depfuse.data import LABELS
from depfuse.ensembles import build_model
from depfuse.errors import InvalidConfig, NonFiniteLoss, TooSmall
from depfuse.metrics import MetricsReport
from depfuse.model import ModelSpec, parse_model_selector, prepare
from depfuse.nn import AdamW, backward
from depfuse.nn.checkpoint import load_into, read_checkpoint, save_checkpoint
from depfuse.rgat import RGATConfig

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr: float = 1e-5
    batch_size: int = 4
    max_epochs: int = 5
    dev_fraction: float = 0.05
    weight_decay: float = 0.01
    dropout: float | None = None  # overrides both RGAT dropout rates when set
    seed: int = 0
    model: str = "rgat-fused"
    fusion: str = "union"
    d_out: int | None = None
    classifier_bias: bool = True
    soft_vote: bool = False
    eval_batch_size: int = 16
    track_train: bool = False

    def __post_init__(self):
        if not 0.0 < self.dev_fraction < 1.0:
            raise InvalidConfig(f"dev_fraction must lie in (0, 1), got {self.dev_fraction}")
        if self.batch_size < 1:
            raise InvalidConfig("batch_size must be >= 1")
        if self.max_epochs < 1:
            raise InvalidConfig("max_epochs must be >= 1")
        if self.lr <= 0:
            raise InvalidConfig("lr must be positive")


def split_dev(dataset, fraction: float, seed: int):
    """Stratified, seeded train/dev split; returns (train, dev) in input order.

    The dev size is round(fraction * N) clamped to [1, N-1]. Classes get
    largest-remainder shares of it; when the dev set has room for every
    class, each class with at least two members is guaranteed one dev slot.
    """
    n = len(dataset)
    if n < 2:
        raise TooSmall(f"need at least 2 instances to split, got {n}")
    if not 0.0 < fraction < 1.0:
        raise InvalidConfig(f"fraction must lie in (0, 1), got {fraction}")
    dev_size = min(max(int(round(fraction * n)), 1), n - 1)
    by_class = defaultdict(list)
    for i, inst in enumerate(dataset):
        by_class[inst.label].append(i)
    classes = [c for c in LABELS if c in by_class] + sorted(c for c in by_class if c not in LABELS)
    alloc = stratified_allocation([len(by_class[c]) for c in classes], dev_size)
    rng = np.random.default_rng(seed)
    dev_ids = set()
    for c, k in zip(classes, alloc):
        members = by_class[c]
        picked = rng.permutation(len(members))[:k]
        dev_ids.update(members[j] for j in picked)
    train = [x for i, x in enumerate(dataset) if i not in dev_ids]
    dev = [x for i, x in enumerate(dataset) if i in dev_ids]
    return train, dev


def stratified_allocation(counts, total) -> list[int]:
    n = sum(counts)
    quotas = [total * c / n for c in counts]
    alloc = [int(np.floor(q)) for q in quotas]
    order = sorted(range(len(counts)), key=lambda k: (-(quotas[k] - alloc[k]), k))
    for k in order[: total - sum(alloc)]:
        alloc[k] += 1
    eligible = [k for k, c in enumerate(counts) if c >= 2]
    if total >= len(eligible):
        for k in eligible:
            if alloc[k] == 0:
                donor = max(range(len(alloc)), key=lambda j: (alloc[j], -j))
                if alloc[donor] <= 1:
                    break
                alloc[donor] -= 1
                alloc[k] = 1
    return alloc


@dataclass
class TrainResult:
    model: object
    spec: ModelSpec
    rgat: RGATConfig
    config: TrainConfig
    history: list[MetricsReport] = field(default_factory=list)
    train_history: list[MetricsReport] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)
    best_epoch: int = 0

    def manifest_config(self) -> dict:
        return {
            "train": asdict(self.config),
            "rgat": self.rgat.to_dict(),
            "spec": {"kind": self.spec.kind, "parsers": list(self.spec.parsers),
                     "fusion": self.spec.fusion, "parser": self.spec.parser},
        }


def effective_rgat(rgat: RGATConfig, config: TrainConfig) -> RGATConfig:
    if config.dropout is None:
        return rgat
    return replace(rgat, attn_dropout=config.dropout, hidden_dropout=config.dropout)


def _batches(items, size):
    for i in range(0, len(items), size):
        yield items[i:i + size]


def predict_items(model, items, batch_size: int = 16):
    probs, labels = [], []
    for chunk in _batches(items, batch_size):
        p, lab = model.predict(chunk)
        probs.append(p)
        labels.append(lab)
    if not probs:
        return np.zeros((0, len(LABELS))), np.zeros(0, dtype=np.int64)
    return np.concatenate(probs), np.concatenate(labels)


def evaluate_items(model, items, split: str = "", epoch=None, batch_size: int = 16) -> MetricsReport:
    _, pred = predict_items(model, items, batch_size)
    return MetricsReport.from_predictions([it.label for it in items], pred, epoch, split)


def train(config: TrainConfig, dataset, rgat: RGATConfig, parsers=None, dev=None) -> TrainResult:
    """Train on ``dataset`` (instances with trees and features attached).

    Without an explicit ``dev`` set, ``config.dev_fraction`` of the data is
    held out by :func:`split_dev`. After every epoch the dev accuracy is
    measured; the parameters from the best epoch (earliest on ties) are
    restored before returning. A perfect dev accuracy can never be beaten,
    so training stops there without changing which epoch is selected.
    """
    if not dataset:
        raise TooSmall("empty training set")
    if parsers is None:
        parsers = [t.parser_id for t in dataset[0].trees]
    spec = parse_model_selector(config.model, parsers, config.fusion)
    rgat = effective_rgat(rgat, config)
    seeds = np.random.SeedSequence(config.seed).spawn(3)
    init_rng, shuffle_rng, drop_rng = (np.random.default_rng(s) for s in seeds)
    if dev is None:
        train_set, dev_set = split_dev(dataset, config.dev_fraction, config.seed)
    else:
        train_set, dev_set = list(dataset), list(dev)

    model = build_model(spec, rgat, init_rng, config.d_out, config.classifier_bias, config.soft_vote)
    params = model.parameters()
    names = [p.name for p in params]
    if len(set(names)) != len(names):
        raise InvalidConfig("duplicate parameter names")
    views = sorted(set(model.views))
    train_items = prepare(train_set, views)
    dev_items = prepare(dev_set, views)
    opt = AdamW(params, lr=config.lr, weight_decay=config.weight_decay)
    result = TrainResult(model, spec, rgat, config)

    best_acc, best_state = -1.0, None
    for epoch in range(1, config.max_epochs + 1):
        order = shuffle_rng.permutation(len(train_items))
        epoch_loss, steps = 0.0, 0
        for batch_idx in _batches(order, config.batch_size):
            chunk = [train_items[i] for i in batch_idx]
            golds = [it.label for it in chunk]
            try:
                member_logits = model.member_logits(chunk, training=True, rng=drop_rng)
                loss = training_loss(member_logits[0], golds)
                for extra in member_logits[1:]:
                    loss = loss + training_loss(extra, golds)
            except FloatingPointError as exc:
                raise NonFiniteLoss(
                    f"epoch {epoch} step {steps}: {exc} (sentences {[it.sentence_id for it in chunk]})"
                ) from None
            if not np.isfinite(loss.item()):
                raise NonFiniteLoss(f"epoch {epoch} step {steps}: loss {loss.item()}")
            opt.zero_grad()
            backward(loss)
            opt.step()
            epoch_loss += loss.item()
            steps += 1
        result.losses.append(epoch_loss / max(steps, 1))
        report = evaluate_items(model, dev_items, "dev", epoch, config.eval_batch_size)
        result.history.append(report)
        if config.track_train:
            result.train_history.append(
                evaluate_items(model, train_items, "train", epoch, config.eval_batch_size)
            )
        log.info("epoch %d loss %.4f dev acc %.4f f1 %.4f",
                 epoch, result.losses[-1], report.accuracy, report.macro_f1)
        if report.accuracy > best_acc:
            best_acc = report.accuracy
            best_state = [p.data.copy() for p in params]
            result.best_epoch = epoch
        if best_acc == 1.0:
            break
    for p, saved in zip(params, best_state):
        p.data[...] = saved
    return result


def evaluate(model, dataset, split: str = "test", batch_size: int = 16) -> MetricsReport:
    items = prepare(dataset, sorted(set(model.views)))
    return evaluate_items(model, items, split, None, batch_size)


def predict(model, dataset, batch_size: int = 16) -> list[dict]:
    items = prepare(dataset, sorted(set(model.views)))
    probs, labels = predict_items(model, items, batch_size)
    out = []
    for it, p, lab in zip(items, probs, labels):
        out.append({
            "sentence_id": it.sentence_id,
            "aspect": {"start": it.aspect[0], "length": it.aspect[1]},
            "probabilities": {name: float(p[k]) for k, name in enumerate(LABELS)},
            "label": LABELS[int(lab)],
        })
    return out


def write_predictions(path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def save_model(path, result: TrainResult) -> None:
    save_checkpoint(
        path, result.model.parameters(), result.manifest_config(), result.config.seed,
        extra={"best_epoch": result.best_epoch, "history": [r.to_dict() for r in result.history]},
    )


def load_model(path):
    """Rebuild a trained model from a checkpoint; returns (model, manifest)."""
    manifest, arrays = read_checkpoint(path)
    cfg = manifest["config"]
    tc = TrainConfig(**cfg["train"])
    rgat = RGATConfig(**cfg["rgat"])
    s = cfg["spec"]
    spec = ModelSpec(s["kind"], tuple(s["parsers"]), s["fusion"], s["parser"])
    rng = np.random.default_rng(0)
    model = build_model(spec, rgat, rng, tc.d_out, tc.classifier_bias, tc.soft_vote)
    load_into(model.parameters(), arrays)
    return model, manifest


__all__ = [
    "TrainConfig", "TrainResult", "evaluate", "evaluate_items", "load_model",
    "predict", "predict_items", "save_model", "split_dev", "stratified_allocation", "train",
    "write_predictions",
]
