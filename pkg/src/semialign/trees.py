"""Penn-style bracketed constituency trees for document sentences."""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from pathlib import Path

from .corpus import CorpusError, TokenizedPair

_TOKEN_RE = re.compile(r"\(|\)|[^\s()]+")


@dataclass(frozen=True)
class ParseTree:
    """A constituent.  Leaves are preterminals: ``leaf`` is their token index.

    Spans are inclusive and relative to the sentence.
    """

    label: str
    children: tuple = ()
    leaf: int | None = None
    word: str | None = None
    span: tuple = (0, 0)

    @property
    def is_leaf(self) -> bool:
        return self.leaf is not None

    @property
    def num_leaves(self) -> int:
        return self.span[1] - self.span[0] + 1

    def leaves(self) -> list:
        if self.is_leaf:
            return [self]
        out = []
        for c in self.children:
            out.extend(c.leaves())
        return out

    def nodes(self, depth: int = 0):
        """Pre-order walk yielding ``(node, depth)``."""
        yield self, depth
        for c in self.children:
            yield from c.nodes(depth + 1)

    def find(self, span: tuple) -> list:
        return [n for n, _ in self.nodes() if n.span == span]

    def __str__(self):
        if self.is_leaf:
            return f"({self.label} {self.word})"
        return f"({self.label} {' '.join(str(c) for c in self.children)})"


def parse_bracketed(text: str) -> ParseTree:
    """Parse one bracketed tree such as ``(S (NP (DT the) (NN dog)) (VP (VBD ran)))``.

    An unlabeled outer bracket wrapping a single tree (``( (S ...) )``) is
    dropped.
    """
    toks = _TOKEN_RE.findall(text)
    if not toks:
        raise CorpusError("empty parse")
    pos = 0
    counter = [0]

    def node():
        nonlocal pos
        if toks[pos] != "(":
            raise CorpusError(f"expected '(' at token {pos} in {text!r}")
        pos += 1
        if pos >= len(toks):
            raise CorpusError(f"unbalanced brackets in {text!r}")
        label = ""
        if toks[pos] not in "()":
            label = toks[pos]
            pos += 1
        if pos >= len(toks):
            raise CorpusError(f"unbalanced brackets in {text!r}")
        if toks[pos] not in "()":
            word = toks[pos]
            pos += 1
            if pos >= len(toks) or toks[pos] != ")":
                raise CorpusError(f"malformed preterminal {label} {word} in {text!r}")
            pos += 1
            i = counter[0]
            counter[0] += 1
            return ParseTree(label or "X", leaf=i, word=word, span=(i, i))
        children = []
        while pos < len(toks) and toks[pos] == "(":
            children.append(node())
        if pos >= len(toks) or toks[pos] != ")":
            raise CorpusError(f"unbalanced brackets in {text!r}")
        pos += 1
        if not children:
            raise CorpusError(f"empty constituent {label!r} in {text!r}")
        if not label and len(children) == 1:
            return children[0]
        return ParseTree(label or "ROOT", tuple(children),
                         span=(children[0].span[0], children[-1].span[1]))

    tree = node()
    if pos != len(toks):
        raise CorpusError(f"unbalanced brackets in {text!r}")
    return tree


def load_parse_file(path) -> dict:
    """Read ``#pair <id>`` headed blocks of one tree per line."""
    path = Path(path)
    if not path.is_file():
        raise CorpusError(f"parse file not found: {path}")
    out, current = {}, None
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#pair"):
            parts = line.split(None, 1)
            if len(parts) != 2:
                raise CorpusError(f"{path}:{lineno}: '#pair' header needs an id")
            current = parts[1].strip()
            out.setdefault(current, [])
            continue
        if current is None:
            raise CorpusError(f"{path}:{lineno}: tree before any '#pair' header")
        try:
            out[current].append(parse_bracketed(line))
        except CorpusError as exc:
            raise CorpusError(f"{path}:{lineno}: {exc}") from None
    return out


def attach_parses(pair: TokenizedPair, trees) -> TokenizedPair:
    trees = tuple(trees)
    if len(trees) != len(pair.doc):
        raise CorpusError(
            f"pair {pair.pair_id}: {len(trees)} parses for {len(pair.doc)} sentences")
    for k, (tree, sent) in enumerate(zip(trees, pair.doc)):
        if tree.num_leaves != len(sent):
            raise CorpusError(
                f"pair {pair.pair_id}: sentence {k} has {len(sent)} tokens, "
                f"parse has {tree.num_leaves} leaves")
        for leaf, tok in zip(tree.leaves(), sent):
            if leaf.word != tok.surface:
                raise CorpusError(
                    f"pair {pair.pair_id}: sentence {k} leaf {leaf.word!r} "
                    f"does not match token {tok.surface!r}")
    return replace(pair, doc_parses=trees)


def load_parses(path, pair: TokenizedPair) -> TokenizedPair:
    table = load_parse_file(path)
    if pair.pair_id not in table:
        raise CorpusError(f"no parses for pair {pair.pair_id} in {path}")
    return attach_parses(pair, table[pair.pair_id])


def attach_all(pairs, path) -> list:
    table = load_parse_file(path)
    out = []
    for p in pairs:
        if p.pair_id not in table:
            raise CorpusError(f"no parses for pair {p.pair_id} in {path}")
        out.append(attach_parses(p, table[p.pair_id]))
    return out


def write_parse_file(pairs, path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(f"#pair {p.pair_id}\n")
            for t in p.doc_parses:
                fh.write(str(t) + "\n")
