"""Hypernym graph exported from a WordNet-style lexicon (TSV)."""

from __future__ import annotations

import math
from collections import deque
from pathlib import Path

from .corpus import CorpusError


class HypernymGraph:
    """Synset nodes with child->parent edges and a lemma->first-sense map.

    Multi-word lemmas are stored with ``_`` joining the words.
    """

    def __init__(self, parents: dict, first_sense: dict):
        nodes = set(parents)
        for ps in parents.values():
            nodes.update(ps)
        for lemma, syn in first_sense.items():
            if syn not in nodes:
                nodes.add(syn)
        self.nodes = frozenset(nodes)
        self.parents = {n: tuple(sorted(parents.get(n, ()))) for n in self.nodes}
        self.first_sense = dict(first_sense)
        cycle = self._find_cycle()
        if cycle:
            raise CorpusError("hypernym graph has a cycle: " + " -> ".join(cycle))
        self._anc_cache = {}

    def _find_cycle(self):
        state = {}
        for root in sorted(self.nodes):
            if root in state:
                continue
            stack = [(root, iter(self.parents[root]))]
            path = [root]
            state[root] = 1
            while stack:
                node, it = stack[-1]
                nxt = next(it, None)
                if nxt is None:
                    state[node] = 2
                    stack.pop()
                    path.pop()
                    continue
                if state.get(nxt) == 1:
                    return path[path.index(nxt):] + [nxt]
                if nxt not in state:
                    state[nxt] = 1
                    stack.append((nxt, iter(self.parents[nxt])))
                    path.append(nxt)
        return None

    def lookup(self, lemma: str):
        """First sense of ``lemma`` (exact, then lowercased), or None."""
        syn = self.first_sense.get(lemma)
        if syn is None:
            syn = self.first_sense.get(lemma.lower())
        return syn

    def lookup_phrase(self, words) -> str | None:
        return self.lookup("_".join(words))

    def _up(self, syn: str) -> dict:
        cached = self._anc_cache.get(syn)
        if cached is not None:
            return cached
        dist = {syn: 0}
        queue = deque([syn])
        while queue:
            node = queue.popleft()
            for p in self.parents[node]:
                if p not in dist:
                    dist[p] = dist[node] + 1
                    queue.append(p)
        self._anc_cache[syn] = dist
        return dist

    def synset_distance(self, a: str, b: str) -> float:
        """Edge count through the closest common hypernym; inf if none."""
        if a == b:
            return 0
        up_a, up_b = self._up(a), self._up(b)
        if len(up_b) < len(up_a):
            up_a, up_b = up_b, up_a
        best = math.inf
        for node, da in up_a.items():
            db = up_b.get(node)
            if db is not None and da + db < best:
                best = da + db
        return best

    def distance(self, s_words, d_words) -> float:
        a = self.lookup_phrase(s_words)
        b = self.lookup_phrase(d_words)
        if a is None or b is None:
            return math.inf
        return self.synset_distance(a, b)

    def __len__(self):
        return len(self.nodes)


def load_hypernym_graph(path) -> HypernymGraph:
    """Read ``E<TAB>child<TAB>parent`` and ``S<TAB>lemma<TAB>synset`` lines."""
    path = Path(path)
    if not path.is_file():
        raise CorpusError(f"hypernym graph not found: {path}")
    parents, senses = {}, {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 3 or parts[0] not in ("E", "S") or not parts[1] or not parts[2]:
            raise CorpusError(f"{path}:{lineno}: malformed line {line!r}")
        kind, a, b = parts
        if kind == "E":
            parents.setdefault(a, set()).add(b)
            parents.setdefault(b, set())
        else:
            if a in senses and senses[a] != b:
                raise CorpusError(f"{path}:{lineno}: second first-sense for {a!r}")
            senses[a] = b
    return HypernymGraph(parents, senses)


def write_hypernym_graph(graph: HypernymGraph, path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for child in sorted(graph.parents):
            for parent in graph.parents[child]:
                fh.write(f"E\t{child}\t{parent}\n")
        for lemma in sorted(graph.first_sense):
            fh.write(f"S\t{lemma}\t{graph.first_sense[lemma]}\n")
