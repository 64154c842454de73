"""Synthetic aspect-sentiment data with simulated noisy parsers.

Each sentence has one aspect noun, one *gold* opinion word attached as a
child of the aspect, and one distractor opinion word with a different
polarity. In half the sentences the distractor is the aspect's parent, so
only edge direction separates it from the gold opinion; otherwise it hangs
off an unrelated noun. The label is the polarity of the gold opinion.
Token features are one-hot identities plus Gaussian noise, so the aspect
node can only learn the label by attending along graph edges.

Each simulated parser starts from the gold tree and rewires
ceil(rate * (n - 1)) randomly chosen dependents to new heads, resampling
any choice that would close a cycle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from depfuse.conllu import DependencyTree, write_conllu
from depfuse.data import (
    LABELS,
    AspectSpan,
    LabeledInstance,
    SubwordRecord,
    average_subwords,
    save_dataset,
    save_features,
)

FILLERS = ["the", "a", "is", "was", "and", "but", "very", "it", "this", "with", "of", "for"]
ASPECTS = ["food", "service", "screen", "battery", "staff", "price"]
NOUNS = ["place", "menu", "laptop", "day"]
OPINIONS = {
    "positive": ["great", "tasty", "friendly", "fast"],
    "neutral": ["average", "standard", "usual", "okay"],
    "negative": ["awful", "slow", "rude", "bland"],
}
VOCAB = FILLERS + ASPECTS + NOUNS + [w for lab in LABELS for w in OPINIONS[lab]]
WORD_ID = {w: i for i, w in enumerate(VOCAB)}
PROVENANCE = "synthetic-onehot"


@dataclass
class SynthBench:
    instances: list[LabeledInstance]  # trees and features attached
    gold_trees: list[DependencyTree]
    parser_ids: list[str]
    opinion_pairs: list[tuple[int, int]]  # (aspect position, gold opinion position)
    subwords: list[SubwordRecord]

    def split(self, test_fraction: float, seed: int):
        rng = np.random.default_rng(seed)
        order = rng.permutation(len(self.instances))
        n_test = int(round(test_fraction * len(self.instances)))
        test_ids = set(order[:n_test].tolist())
        train = [x for i, x in enumerate(self.instances) if i not in test_ids]
        test = [x for i, x in enumerate(self.instances) if i in test_ids]
        return train, test


def rewire_count(rate: float, n: int) -> int:
    # round away float noise such as 0.1 * 10 = 1.0000000000000002 before ceil
    return math.ceil(round(rate * (n - 1), 9))


def _subtree(heads, node):
    """Nodes in the subtree rooted at ``node`` (1-based heads list, index 0 unused)."""
    n = len(heads) - 1
    children = [[] for _ in range(n + 1)]
    for d in range(1, n + 1):
        if heads[d]:
            children[heads[d]].append(d)
    seen, stack = set(), [node]
    while stack:
        u = stack.pop()
        seen.add(u)
        stack.extend(children[u])
    return seen


def corrupt_heads(heads, rate: float, rng: np.random.Generator, max_restarts: int = 1000) -> list[int]:
    """Rewire ceil(rate*(n-1)) distinct dependents of a tree to new, cycle-free heads.

    ``heads`` is 1-based with ``heads[0]`` unused; the root keeps head 0.
    Dependents are visited in random order. One whose every alternative head
    lies in its own subtree is skipped, and if too few could move the whole
    attempt restarts from the original tree with a fresh order.
    """
    original = list(heads)
    n = len(original) - 1
    k = rewire_count(rate, n)
    if k == 0:
        return original
    candidates = [d for d in range(1, n + 1) if original[d] != 0]
    if k > len(candidates):
        raise ValueError(f"cannot rewire {k} of {len(candidates)} dependents")
    for _ in range(max_restarts):
        heads = list(original)
        done = 0
        for d in rng.permutation(candidates):
            if done == k:
                break
            d = int(d)
            orig = heads[d]
            for _ in range(100):
                h = int(rng.integers(1, n + 1))
                if h != d and h != orig and h not in _subtree(heads, d):
                    break
            else:
                continue
            heads[d] = h
            done += 1
        if done == k:
            return heads
    raise RuntimeError(f"could not rewire {k} edges after {max_restarts} attempts")


def _make_sentence(rng, n):
    """Return (words, gold heads (1-based, [0] unused), aspect pos, opinion pos, label)."""
    if n < 5:
        raise ValueError("synthetic sentences need at least 5 tokens")
    pos = rng.permutation(np.arange(1, n + 1)).tolist()
    asp, opi, dis, noun = pos[:4]
    fillers = pos[4:]
    label = LABELS[rng.integers(3)]
    dlabel = [lab for lab in LABELS if lab != label][rng.integers(2)]
    words = [""] * (n + 1)
    words[asp] = ASPECTS[rng.integers(len(ASPECTS))]
    words[opi] = OPINIONS[label][rng.integers(4)]
    words[dis] = OPINIONS[dlabel][rng.integers(4)]
    words[noun] = NOUNS[rng.integers(len(NOUNS))]
    for f in fillers:
        words[f] = FILLERS[rng.integers(len(FILLERS))]

    heads = [0] * (n + 1)
    placed = [fillers[0]]  # root

    def attach(node, head=None):
        heads[node] = head if head is not None else int(placed[rng.integers(len(placed))])
        placed.append(node)

    if rng.random() < 0.5:
        # distractor governs the aspect: only direction tells them apart
        attach(dis)
        attach(asp, dis)
        attach(noun)
    else:
        attach(noun)
        attach(dis, noun)
        attach(asp)
    attach(opi, asp)
    for f in rng.permutation(fillers[1:]).tolist():
        attach(f)
    return words[1:], heads, asp, opi, label


def _features(word, rng, noise, split):
    base = np.zeros(len(VOCAB))
    base[WORD_ID[word]] = 1.0
    pieces = 2 if split else 1
    return base[None, :] + rng.normal(0.0, noise, size=(pieces, len(VOCAB)))


def synth_bench(seed: int, n_sentences: int, sentence_len: int, M: int,
                corruption_rate: float, noise: float = 0.1, split_prob: float = 0.2) -> SynthBench:
    if not 0.0 <= corruption_rate < 1.0:
        raise ValueError("corruption_rate must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    parser_ids = [f"parser{m + 1}" for m in range(M)]
    instances, golds, pairs, records = [], [], [], []
    for i in range(n_sentences):
        sid = f"syn{i:05d}"
        words, heads, asp, opi, label = _make_sentence(rng, sentence_len)
        gold = DependencyTree.from_heads(words, heads[1:], "gold")
        trees = [
            DependencyTree.from_heads(words, corrupt_heads(heads, corruption_rate, rng)[1:], pid)
            for pid in parser_ids
        ]
        vecs, word_index = [], []
        for w_pos, w in enumerate(words, start=1):
            v = _features(w, rng, noise, rng.random() < split_prob)
            vecs.append(v)
            word_index += [w_pos] * v.shape[0]
        vecs = np.concatenate(vecs, axis=0)
        rec = SubwordRecord(sid, vecs, np.asarray(word_index), PROVENANCE)
        inst = LabeledInstance(sid, words, AspectSpan(asp, 1), label, trees,
                               average_subwords(vecs, word_index, PROVENANCE))
        instances.append(inst)
        golds.append(gold)
        pairs.append((asp, opi))
        records.append(rec)
    return SynthBench(instances, golds, parser_ids, pairs, records)


def write_bench(bench: SynthBench, outdir, test_fraction: float = 0.2, seed: int = 0) -> dict:
    """Write train/test JSON-lines, one CoNLL-U file per parser, features and gold trees."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    train, test = bench.split(test_fraction, seed)
    save_dataset(out / "train.jsonl", train)
    save_dataset(out / "test.jsonl", test)
    save_features(out / "features.jsonl", bench.subwords)
    paths = {"train": out / "train.jsonl", "test": out / "test.jsonl", "features": out / "features.jsonl"}
    for m, pid in enumerate(bench.parser_ids):
        p = out / f"{pid}.conllu"
        write_conllu(p, [(inst.sentence_id, inst.trees[m]) for inst in bench.instances])
        paths[pid] = p
    write_conllu(out / "gold.conllu", [(inst.sentence_id, g) for inst, g in zip(bench.instances, bench.gold_trees)])
    paths["gold"] = out / "gold.conllu"
    return paths
