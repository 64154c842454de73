import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import strategies as st

sys.path.insert(0, str(Path(__file__).parent))

from depfuse.conllu import DependencyTree  # noqa: E402


def random_heads(rng, n):
    """Uniform random recursive tree on a random node labeling; 1-based heads list."""
    order = rng.permutation(np.arange(1, n + 1)).tolist()
    heads = [0] * n
    for k, node in enumerate(order[1:], start=1):
        heads[node - 1] = order[int(rng.integers(k))]
    return heads


def random_tree(rng, n, parser_id="p"):
    return DependencyTree.from_heads([f"w{i}" for i in range(1, n + 1)], random_heads(rng, n), parser_id)


@st.composite
def tree_lists(draw, count=2, min_n=1, max_n=9):
    n = draw(st.integers(min_n, max_n))
    seeds = draw(st.lists(st.integers(0, 2**32 - 1), min_size=count, max_size=count))
    return [random_tree(np.random.default_rng(s), n, f"p{k}") for k, s in enumerate(seeds)]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "SUMMARY", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
