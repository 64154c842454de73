"""Reading, validating and writing CoNLL-U dependency trees."""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass
from pathlib import Path

from depfuse.errors import (
    DuplicateIndex,
    MalformedLine,
    NonTree,
    TokenizationMismatch,
)

N_COLUMNS = 10


@dataclass(frozen=True)
class Token:
    index: int
    surface: str
    head: int
    deprel: str = "_"

    def __post_init__(self):
        if self.index < 1:
            raise MalformedLine(f"token index must be >= 1, got {self.index}")
        if self.head < 0:
            raise MalformedLine(f"negative head {self.head} on token {self.index}")
        if self.head == self.index:
            raise NonTree(f"token {self.index} is its own head")


@dataclass(frozen=True)
class DependencyTree:
    """One parser's head->dependent tree over a sentence.

    Construction validates the tree shape: a single root, every head in
    range, no cycles.
    """

    tokens: tuple[Token, ...]
    parser_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        _check_tree(self.tokens)

    def __len__(self):
        return len(self.tokens)

    @property
    def surfaces(self) -> list[str]:
        return [t.surface for t in self.tokens]

    @property
    def heads(self) -> list[int]:
        return [t.head for t in self.tokens]

    @property
    def root(self) -> int:
        return next(t.index for t in self.tokens if t.head == 0)

    def edges(self) -> set[tuple[int, int]]:
        """Dependency arcs as (head, dependent); the virtual root contributes none."""
        return {(t.head, t.index) for t in self.tokens if t.head != 0}

    @classmethod
    def from_heads(cls, surfaces, heads, parser_id="", deprels=None):
        deprels = deprels or ["_"] * len(heads)
        toks = [
            Token(i + 1, s, h, r)
            for i, (s, h, r) in enumerate(zip(surfaces, heads, deprels))
        ]
        return cls(tuple(toks), parser_id)


def _check_tree(tokens) -> None:
    n = len(tokens)
    if n == 0:
        raise NonTree("empty sentence")
    for pos, tok in enumerate(tokens, start=1):
        if tok.index != pos:
            raise MalformedLine(f"token indices not contiguous: expected {pos}, got {tok.index}")
        if tok.head > n:
            raise NonTree(f"token {tok.index} points to missing head {tok.head}")
    roots = [t.index for t in tokens if t.head == 0]
    if len(roots) != 1:
        raise NonTree(f"expected exactly one root, found {len(roots)}")
    heads = [0] + [t.head for t in tokens]
    # every token must reach the root without revisiting a node
    state = [0] * (n + 1)  # 0 unseen, 1 on current path, 2 reaches root
    state[0] = 2
    for start in range(1, n + 1):
        path = []
        node = start
        while state[node] == 0:
            state[node] = 1
            path.append(node)
            node = heads[node]
        if state[node] == 1:
            raise NonTree(f"cycle through token {node}")
        for p in path:
            state[p] = 2


def parse_conllu(text: str, parser_id: str = "") -> list[tuple[str, DependencyTree]]:
    """Parse a CoNLL-U document into (sentence_id, tree) pairs.

    Multi-word token ranges and empty nodes are skipped. Sentences without a
    ``# sent_id`` comment are numbered by position.
    """
    out: list[tuple[str, DependencyTree]] = []
    rows: list[Token] = []
    seen: set[int] = set()
    sent_id = None
    lineno_start = 0

    def flush():
        nonlocal rows, seen, sent_id
        if rows:
            sid = sent_id if sent_id is not None else f"s{len(out) + 1}"
            try:
                tree = DependencyTree(tuple(rows), parser_id)
            except (NonTree, MalformedLine) as exc:
                raise type(exc)(f"sentence {sid} (line {lineno_start}): {exc}") from None
            out.append((sid, tree))
        rows, seen, sent_id = [], set(), None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            flush()
            continue
        if line.startswith("#"):
            key, sep, value = line[1:].partition("=")
            if sep and key.strip() == "sent_id":
                sent_id = value.strip()
            continue
        cols = line.split("\t")
        if len(cols) != N_COLUMNS:
            raise MalformedLine(f"line {lineno}: expected {N_COLUMNS} columns, got {len(cols)}")
        ident = cols[0]
        if "-" in ident or "." in ident:
            continue
        try:
            idx = int(ident)
            head = int(cols[6])
        except ValueError:
            raise MalformedLine(f"line {lineno}: non-integer id or head") from None
        if idx in seen:
            raise DuplicateIndex(f"line {lineno}: token index {idx} repeated")
        if not rows:
            lineno_start = lineno
        seen.add(idx)
        try:
            rows.append(Token(idx, cols[1], head, cols[7]))
        except (NonTree, MalformedLine) as exc:
            raise type(exc)(f"line {lineno}: {exc}") from None
    flush()
    return out


def read_conllu(path, parser_id: str | None = None) -> list[tuple[str, DependencyTree]]:
    path = Path(path)
    return parse_conllu(path.read_text(encoding="utf-8"), parser_id or path.stem)


def format_conllu(trees) -> str:
    """Serialize (sentence_id, tree) pairs back to CoNLL-U text."""
    blocks = []
    for sid, tree in trees:
        lines = [f"# sent_id = {sid}"]
        for t in tree.tokens:
            cols = [str(t.index), t.surface, "_", "_", "_", "_", str(t.head), t.deprel, "_", "_"]
            lines.append("\t".join(cols))
        blocks.append("\n".join(lines) + "\n")
    return "\n".join(blocks) + ("\n" if blocks else "")


def write_conllu(path, trees) -> None:
    Path(path).write_text(format_conllu(trees), encoding="utf-8")


def _nfc(s: str) -> str:
    return unicodedata.normalize("NFC", s)


def align_tokenizations(trees) -> bool:
    """Check that every tree tokenizes the sentence identically.

    Returns True on success; raises TokenizationMismatch naming the first
    tree and 1-based position that diverge from the first tree.
    """
    trees = list(trees)
    if not trees:
        raise ValueError("align_tokenizations needs at least one tree")
    ref = [_nfc(s) for s in trees[0].surfaces]
    for m, tree in enumerate(trees[1:], start=1):
        other = [_nfc(s) for s in tree.surfaces]
        for pos, (a, b) in enumerate(zip(ref, other), start=1):
            if a != b:
                raise TokenizationMismatch(m, pos, f"{a!r} != {b!r}")
        if len(ref) != len(other):
            raise TokenizationMismatch(
                m, min(len(ref), len(other)) + 1, f"length {len(other)} != {len(ref)}"
            )
    return True
