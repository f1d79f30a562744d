"""Synthetic corpora with planted alignments, random parses and a toy hypernym graph.

Summaries are sampled from a semi-HMM-like process over the document:
forward-biased jumps, mostly identical rewrites, and null words drawn from a
filler vocabulary that never appears in documents.  Gold alignments are
word-level Sure links for every generated phrase plus NULL links for filler
words.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .alignment import AlignmentSet, span
from .corpus import make_pair, stem
from .hypernyms import HypernymGraph
from .trees import attach_parses, parse_bracketed

CONSONANTS = "bdfgklmnprtvz"
VOWELS = "aeiou"
PHRASE_LABELS = ("NP", "VP", "PP", "ADJP", "SBAR")
POS_TAGS = ("NN", "NNS", "VB", "VBD", "JJ", "DT", "IN", "PRP", "RB")


def pseudo_words(count: int, rng: random.Random, syllables: int = 3, taken=()) -> list:
    """Distinct alphabetic words whose stems are distinct and equal to a 's'-suffixed variant's stem."""
    out, stems = [], {stem(w) for w in taken}
    seen = set(taken)
    while len(out) < count:
        w = "".join(rng.choice(CONSONANTS) + rng.choice(VOWELS) for _ in range(syllables))
        st = stem(w)
        if w in seen or st in stems or stem(w + "s") != st:
            continue
        seen.add(w)
        stems.add(st)
        out.append(w)
    return out


def random_tree_string(words, rng: random.Random) -> str:
    """Random bracketing of ``words`` with phrase and part-of-speech labels."""

    def build(lo, hi, top=False):
        if hi - lo == 1:
            return f"({rng.choice(POS_TAGS)} {words[lo]})"
        k = min(hi - lo, rng.choice((2, 2, 3)))
        cuts = sorted(rng.sample(range(lo + 1, hi), k - 1))
        bounds = [lo] + cuts + [hi]
        label = "S" if top else rng.choice(PHRASE_LABELS)
        kids = " ".join(build(a, b) for a, b in zip(bounds, bounds[1:]))
        return f"({label} {kids})"

    if len(words) == 1:
        return f"(S ({rng.choice(POS_TAGS)} {words[0]}))"
    return build(0, len(words), top=True)


def with_random_parses(pair, rng: random.Random):
    trees = [parse_bracketed(random_tree_string([t.surface for t in sent], rng)) for sent in pair.doc]
    return attach_parses(pair, trees)


@dataclass
class PlantedConfig:
    num_pairs: int = 100
    doc_len: int = 40
    sentence_len: int = 10
    summary_len: int = 12
    vocab_size: int = 400
    filler_size: int = 20
    null_rate: float = 0.1
    identity_rate: float = 0.9     # of non-null segments; the rest are stem variants or synonyms
    synonym_rate: float = 0.0      # share of non-identity rewrites that use a synonym
    forward_rate: float = 0.7      # next-position jumps; backward_rate of jumps go back
    backward_rate: float = 0.1
    max_phrase_len: int = 2
    parses: bool = True
    seed: int = 0


@dataclass
class PlantedCorpus:
    pairs: list
    gold: dict
    graph: HypernymGraph | None
    config: PlantedConfig


def _synonym_graph(vocab, synonyms) -> HypernymGraph:
    """Each word and its synonym share a synset; synsets hang under a few category nodes."""
    parents, senses = {}, {}
    for k, w in enumerate(vocab):
        syn = f"{w}.n.01"
        parents[syn] = {f"cat{k % 7}.n.01"}
        parents.setdefault(f"cat{k % 7}.n.01", {"entity.n.01"})
        senses[w] = syn
        if w in synonyms:
            senses[synonyms[w]] = syn
    parents.setdefault("entity.n.01", set())
    return HypernymGraph(parents, senses)


def planted_corpus(config: PlantedConfig | None = None, **overrides) -> PlantedCorpus:
    cfg = config or PlantedConfig()
    for k, v in overrides.items():
        setattr(cfg, k, v)
    rng = random.Random(cfg.seed)
    vocab = pseudo_words(cfg.vocab_size, rng)
    filler = pseudo_words(cfg.filler_size, rng, syllables=2, taken=vocab)
    synonyms = {}
    graph = None
    if cfg.synonym_rate > 0:
        alt = pseudo_words(cfg.vocab_size, rng, syllables=4, taken=vocab + filler)
        synonyms = dict(zip(vocab, alt))
        graph = _synonym_graph(vocab, synonyms)

    pairs, gold = [], {}
    for pid in range(cfg.num_pairs):
        doc = [rng.choice(vocab) for _ in range(cfg.doc_len)]
        n = len(doc)
        summary, spans = [], []
        e = 0
        while len(summary) < cfg.summary_len:
            t = len(summary)
            if rng.random() < cfg.null_rate:
                summary.append(rng.choice(filler))
                spans.append(span(None, (t, t)))
                continue
            u = rng.random()
            if e == 0:
                p = rng.randint(1, max(1, n // 4))
            elif u < cfg.forward_rate:
                p = e + 1
            elif u < cfg.forward_rate + cfg.backward_rate:
                p = e - rng.randint(2, 8)
            else:
                p = e + rng.randint(2, 6)
            if not 1 <= p <= n:
                p = rng.randint(1, n)
            k = rng.randint(1, min(cfg.max_phrase_len, n - p + 1))
            words = doc[p - 1:p - 1 + k]
            out = []
            for w in words:
                if rng.random() < cfg.identity_rate:
                    out.append(w)
                elif synonyms and rng.random() < cfg.synonym_rate:
                    out.append(synonyms[w])
                else:
                    out.append(w + "s")
            for off in range(len(out)):
                spans.append(span((p - 1 + off, p - 1 + off), (t + off, t + off)))
            summary.extend(out)
            e = p + k - 1
        sents = [doc[i:i + cfg.sentence_len] for i in range(0, n, cfg.sentence_len)]
        pair = make_pair(f"p{pid:04d}", sents, [summary])
        if cfg.parses:
            pair = with_random_parses(pair, rng)
        pairs.append(pair)
        gold[pair.pair_id] = AlignmentSet(pair.pair_id, tuple(spans))
    return PlantedCorpus(pairs, gold, graph, cfg)


def styled_corpus(style: str, num_pairs: int = 50, seed: int = 0, **kw) -> PlantedCorpus:
    """Small corpora for training checks: ``identity``, ``reorder`` or ``null`` heavy."""
    base = dict(num_pairs=num_pairs, doc_len=14, sentence_len=7, summary_len=6,
                vocab_size=120, seed=seed)
    if style == "identity":
        base.update(identity_rate=0.97, null_rate=0.03)
    elif style == "reorder":
        base.update(forward_rate=0.35, backward_rate=0.45, identity_rate=0.85)
    elif style == "null":
        base.update(null_rate=0.35, identity_rate=0.85)
    else:
        raise ValueError(f"unknown corpus style {style!r}")
    base.update(kw)
    return planted_corpus(PlantedConfig(**base))


def toy_graph() -> HypernymGraph:
    """dog/canine/animal, cat/feline/animal, and a few collocations."""
    parents = {
        "dog.n.01": {"canine.n.01"}, "canine.n.01": {"animal.n.01"},
        "cat.n.01": {"feline.n.01"}, "feline.n.01": {"animal.n.01"},
        "animal.n.01": set(), "hot_dog.n.01": {"food.n.01"}, "food.n.01": set(),
    }
    senses = {"dog": "dog.n.01", "hound": "dog.n.01", "canine": "canine.n.01",
              "cat": "cat.n.01", "feline": "feline.n.01", "animal": "animal.n.01",
              "hot_dog": "hot_dog.n.01", "food": "food.n.01"}
    return HypernymGraph(parents, senses)
