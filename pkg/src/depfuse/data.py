"""Dataset and encoder-feature files (JSON lines) and subword averaging."""

from __future__ import annotations

import json
import logging
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from depfuse.conllu import DependencyTree, align_tokenizations, read_conllu
from depfuse.errors import (
    MissingField,
    NonCoveringAlignment,
    NonMonotoneAlignment,
    SpanOutOfRange,
    TokenizationMismatch,
    UnknownLabel,
    WidthMismatch,
)

log = logging.getLogger(__name__)

# index order doubles as the deterministic tie-break order for voting
LABELS = ("positive", "neutral", "negative")
LABEL_INDEX = {name: i for i, name in enumerate(LABELS)}


@dataclass(frozen=True)
class AspectSpan:
    start: int  # 1-based
    length: int

    def __post_init__(self):
        if self.start < 1 or self.length < 1:
            raise SpanOutOfRange(f"invalid span start={self.start} length={self.length}")

    @property
    def end(self) -> int:
        """Last covered position, inclusive."""
        return self.start + self.length - 1

    def check(self, n: int) -> None:
        if self.end > n:
            raise SpanOutOfRange(f"span {self.start}..{self.end} exceeds sentence length {n}")

    def rows(self) -> list[int]:
        """0-based row indices covered by the span."""
        return list(range(self.start - 1, self.end))


@dataclass(frozen=True)
class FeatureMatrix:
    rows: np.ndarray
    provenance: str = ""

    def __post_init__(self):
        arr = np.asarray(self.rows, dtype=np.float64)
        if arr.ndim != 2:
            raise WidthMismatch(f"feature matrix must be 2-d, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("feature matrix contains non-finite values")
        object.__setattr__(self, "rows", arr)

    @property
    def d_in(self) -> int:
        return self.rows.shape[1]

    def __len__(self):
        return self.rows.shape[0]


@dataclass
class LabeledInstance:
    sentence_id: str
    tokens: list[str]
    aspect: AspectSpan
    label: str
    trees: list[DependencyTree] = field(default_factory=list)
    features: FeatureMatrix | None = None

    def __post_init__(self):
        if self.label not in LABEL_INDEX:
            raise UnknownLabel(f"{self.sentence_id}: label {self.label!r}")
        self.aspect.check(len(self.tokens))

    @property
    def label_id(self) -> int:
        return LABEL_INDEX[self.label]

    def __len__(self):
        return len(self.tokens)

    def attach_trees(self, trees) -> None:
        trees = list(trees)
        align_tokenizations(trees)
        surf = trees[0].surfaces
        if len(surf) != len(self.tokens) or any(
            a != b for a, b in zip(_norm(surf), _norm(self.tokens))
        ):
            raise TokenizationMismatch(0, 1, f"{self.sentence_id}: trees disagree with dataset tokens")
        self.trees = trees


def _norm(words):
    return [unicodedata.normalize("NFC", w) for w in words]


def label_counts(instances) -> dict[str, int]:
    c = Counter(inst.label for inst in instances)
    return {name: c.get(name, 0) for name in LABELS}


def _require(record, keys, where):
    for k in keys:
        if k not in record:
            raise MissingField(f"{where}: missing field {k!r}")


def instance_from_record(rec: dict, where: str = "record") -> LabeledInstance:
    _require(rec, ("sentence_id", "tokens", "aspect", "label"), where)
    asp = rec["aspect"]
    if not isinstance(asp, dict):
        raise MissingField(f"{where}: aspect must be an object")
    _require(asp, ("start", "length"), where + ".aspect")
    label = rec["label"]
    if label not in LABEL_INDEX:
        raise UnknownLabel(f"{where}: label {label!r} not in {LABELS}")
    return LabeledInstance(
        sentence_id=str(rec["sentence_id"]),
        tokens=list(rec["tokens"]),
        aspect=AspectSpan(int(asp["start"]), int(asp["length"])),
        label=label,
    )


def instance_to_record(inst: LabeledInstance) -> dict:
    return {
        "sentence_id": inst.sentence_id,
        "tokens": list(inst.tokens),
        "aspect": {"start": inst.aspect.start, "length": inst.aspect.length},
        "label": inst.label,
    }


def _iter_jsonl(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                yield lineno, json.loads(line)


def load_dataset(path) -> list[LabeledInstance]:
    """Load labeled instances from a JSON-lines file and log class counts."""
    instances = [instance_from_record(rec, f"{path}:{ln}") for ln, rec in _iter_jsonl(path)]
    counts = label_counts(instances)
    log.info("%s: %d instances %s", path, len(instances), counts)
    return instances


def save_dataset(path, instances) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(json.dumps(instance_to_record(inst)) + "\n")


@dataclass(frozen=True)
class SubwordRecord:
    sentence_id: str
    vectors: np.ndarray  # s x d_in
    word_index: np.ndarray  # length s, 1-based word ids
    provenance: str = ""

    @property
    def n_words(self) -> int:
        return int(self.word_index[-1])


def check_alignment(word_index, n_words: int | None = None) -> None:
    wi = [int(w) for w in word_index]
    if not wi:
        raise NonCoveringAlignment("empty alignment")
    for a, b in zip(wi, wi[1:]):
        if b < a:
            raise NonMonotoneAlignment(f"word_index decreases ({a} -> {b})")
    n = n_words if n_words is not None else wi[-1]
    present = set(wi)
    missing = [w for w in range(1, n + 1) if w not in present]
    if missing or wi[0] < 1 or wi[-1] > n:
        raise NonCoveringAlignment(f"words without subwords: {missing or 'out of range'}")


def record_from_json(rec: dict, where: str = "record") -> SubwordRecord:
    _require(rec, ("sentence_id", "d_in", "subword_vectors", "word_index"), where)
    d_in = int(rec["d_in"])
    vecs = rec["subword_vectors"]
    for i, v in enumerate(vecs):
        if len(v) != d_in:
            raise WidthMismatch(f"{where}: subword {i} has width {len(v)}, expected {d_in}")
    if len(vecs) != len(rec["word_index"]):
        raise NonCoveringAlignment(f"{where}: {len(vecs)} vectors but {len(rec['word_index'])} alignment entries")
    check_alignment(rec["word_index"], rec.get("n_words"))
    arr = np.asarray(vecs, dtype=np.float64).reshape(len(vecs), d_in)
    return SubwordRecord(
        str(rec["sentence_id"]), arr, np.asarray(rec["word_index"], dtype=np.int64),
        str(rec.get("provenance", "")),
    )


def load_features(path) -> dict[str, SubwordRecord]:
    return {
        r.sentence_id: r
        for r in (record_from_json(rec, f"{path}:{ln}") for ln, rec in _iter_jsonl(path))
    }


def save_features(path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps({
                "sentence_id": r.sentence_id,
                "d_in": int(r.vectors.shape[1]),
                "subword_vectors": r.vectors.tolist(),
                "word_index": [int(w) for w in r.word_index],
                "provenance": r.provenance,
            }) + "\n")


def average_subwords(vectors, word_index, provenance: str = "") -> FeatureMatrix:
    """Collapse subword vectors to one vector per word by arithmetic mean."""
    vectors = np.asarray(vectors, dtype=np.float64)
    wi = np.asarray(word_index, dtype=np.int64)
    check_alignment(wi)
    n = int(wi[-1])
    sums = np.zeros((n, vectors.shape[1]))
    np.add.at(sums, wi - 1, vectors)
    counts = np.bincount(wi - 1, minlength=n).astype(np.float64)
    lo = np.full_like(sums, np.inf)
    hi = np.full_like(sums, -np.inf)
    np.minimum.at(lo, wi - 1, vectors)
    np.maximum.at(hi, wi - 1, vectors)
    # rounding in sum/count can step one ulp outside the subword envelope
    return FeatureMatrix(np.clip(sums / counts[:, None], lo, hi), provenance)


def attach_features(instances, records) -> None:
    """Join averaged features onto instances by sentence_id (in place)."""
    for inst in instances:
        rec = records.get(inst.sentence_id)
        if rec is None:
            raise MissingField(f"no features for sentence {inst.sentence_id}")
        fm = average_subwords(rec.vectors, rec.word_index, rec.provenance)
        if len(fm) != len(inst):
            raise NonCoveringAlignment(
                f"{inst.sentence_id}: features cover {len(fm)} words, sentence has {len(inst)}"
            )
        inst.features = fm


def parse_source_arg(arg: str) -> tuple[str, Path]:
    """``pid=path`` or a bare path whose stem becomes the parser id."""
    if "=" in arg:
        pid, path = arg.split("=", 1)
        return pid, Path(path)
    p = Path(arg)
    return p.stem, p


def load_corpus(dataset_path, features_path, conllu_args) -> tuple[list[LabeledInstance], list[str]]:
    """Load a dataset and join the parses of every parser plus encoder features."""
    instances = load_dataset(dataset_path)
    parsers, per_parser = [], []
    for arg in conllu_args:
        pid, path = parse_source_arg(arg)
        parsers.append(pid)
        per_parser.append(dict(read_conllu(path, pid)))
    if len(set(parsers)) != len(parsers):
        raise ValueError(f"duplicate parser ids {parsers}")
    for inst in instances:
        try:
            trees = [m[inst.sentence_id] for m in per_parser]
        except KeyError:
            raise MissingField(f"sentence {inst.sentence_id} missing from a parse file") from None
        inst.attach_trees(trees)
    attach_features(instances, load_features(features_path))
    return instances, parsers
