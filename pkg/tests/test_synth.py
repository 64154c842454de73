import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from depfuse.conllu import DependencyTree, read_conllu
from depfuse.data import load_corpus, load_dataset
from depfuse.graph import fuse_trees
from depfuse.synth import VOCAB, corrupt_heads, rewire_count, synth_bench, write_bench


def differing(a: DependencyTree, b: DependencyTree) -> int:
    return sum(x != y for x, y in zip(a.heads, b.heads))


def test_zero_rate_copies_gold():
    b = synth_bench(0, 20, 8, 3, 0.0)
    for inst, gold in zip(b.instances, b.gold_trees):
        assert all(t.edges() == gold.edges() for t in inst.trees)


def test_half_rate_rewires_four_of_seven():
    assert rewire_count(0.5, 8) == 4
    b = synth_bench(1, 30, 8, 3, 0.5)
    for inst, gold in zip(b.instances, b.gold_trees):
        assert all(differing(t, gold) == 4 for t in inst.trees)


@pytest.mark.parametrize("rate,n,k", [(0.3, 10, 3), (0.1, 11, 1), (0.0, 5, 0), (0.99, 5, 4)])
def test_rewire_count(rate, n, k):
    assert rewire_count(rate, n) == k


@settings(max_examples=80, deadline=None)
@given(st.integers(5, 14), st.floats(0.0, 0.95), st.integers(0, 2**32 - 1))
def test_corruption_keeps_a_tree(n, rate, seed):
    rng = np.random.default_rng(seed)
    b = synth_bench(seed % 1000, 1, n, 1, 0.0)
    heads = [0] + b.gold_trees[0].heads
    out = corrupt_heads(heads, rate, rng)
    tree = DependencyTree.from_heads(b.gold_trees[0].surfaces, out[1:])  # validates tree shape
    assert differing(tree, b.gold_trees[0]) == rewire_count(rate, n)


def test_gold_opinion_is_child_of_aspect():
    b = synth_bench(2, 50, 10, 3, 0.3)
    for (asp, opi), gold, inst in zip(b.opinion_pairs, b.gold_trees, b.instances):
        assert gold.heads[opi - 1] == asp
        assert inst.aspect.start == asp
        assert inst.tokens[opi - 1] in VOCAB


def test_features_are_averaged_subwords():
    b = synth_bench(4, 10, 7, 2, 0.3)
    for inst, rec in zip(b.instances, b.subwords):
        assert inst.features.rows.shape == (7, len(VOCAB))
        assert rec.vectors.shape[0] >= 7
        ids = np.argmax(inst.features.rows, axis=1)
        assert [VOCAB[i] for i in ids] == inst.tokens


def test_same_seed_same_bench():
    a, b = synth_bench(9, 15, 8, 3, 0.3), synth_bench(9, 15, 8, 3, 0.3)
    assert [i.label for i in a.instances] == [i.label for i in b.instances]
    assert all(np.array_equal(x.features.rows, y.features.rows) for x, y in zip(a.instances, b.instances))
    assert all([t.heads for t in x.trees] == [t.heads for t in y.trees] for x, y in zip(a.instances, b.instances))


def test_labels_roughly_balanced():
    b = synth_bench(5, 600, 8, 1, 0.0)
    counts = np.bincount([i.label_id for i in b.instances], minlength=3)
    assert counts.min() > 150


def test_union_recovers_gold_opinion_edge():
    # per-edge corruption probability is k/(n-1) = 3/9 for rate 0.3 at length 10
    rate, n, m = 0.3, 10, 3
    b = synth_bench(11, 1000, n, m, rate)
    hits = sum(
        (asp, opi) in fuse_trees(inst.trees, "union").dependency_pairs()
        for inst, (asp, opi) in zip(b.instances, b.opinion_pairs)
    )
    p_edge = rewire_count(rate, n) / (n - 1)
    assert abs(hits / 1000 - (1 - p_edge ** m)) < 0.03
    assert abs(hits / 1000 - (1 - rate ** m)) < 0.03


def test_short_sentences_rejected():
    with pytest.raises(ValueError):
        synth_bench(0, 1, 4, 1, 0.0)


def test_write_bench_loads_back(tmp_path):
    b = synth_bench(6, 40, 7, 2, 0.3)
    paths = write_bench(b, tmp_path, test_fraction=0.25, seed=6)
    assert len(load_dataset(paths["test"])) == 10
    inst, parsers = load_corpus(paths["train"], paths["features"],
                                [str(paths["parser1"]), str(paths["parser2"])])
    assert parsers == ["parser1", "parser2"] and len(inst) == 30
    assert len(read_conllu(paths["gold"])) == 40
    orig = {x.sentence_id: x for x in b.instances}
    for x in inst:
        np.testing.assert_array_equal(x.features.rows, orig[x.sentence_id].features.rows)
        assert [t.heads for t in x.trees] == [t.heads for t in orig[x.sentence_id].trees]
