"""Document/summary pair ingestion, stemming, stop lists and corpus statistics."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from nltk.stem.porter import PorterStemmer

logger = logging.getLogger(__name__)

_PORTER = PorterStemmer(mode=PorterStemmer.ORIGINAL_ALGORITHM)


class CorpusError(ValueError):
    """Raised for malformed pair files, parse files or resources."""


@lru_cache(maxsize=None)
def stem(word: str) -> str:
    """Porter stem of ``word``, lowercased.

    Non-alphabetic tokens (punctuation, numbers, clitics such as ``'s``) are
    returned unchanged.  Porter's rules are re-applied until the output stops
    changing, which makes the function idempotent.
    """
    if not word.isalpha():
        return word
    current = word.lower()
    while True:
        nxt = _PORTER.stem(current, to_lowercase=False)
        if nxt == current or not nxt:
            return current
        current = nxt


@dataclass(frozen=True)
class Token:
    surface: str
    stem: str
    is_stop: bool
    index: int


@dataclass(frozen=True)
class TokenizedPair:
    """One document with its human-written summary.

    ``doc`` and ``summary`` are tuples of sentences, each a tuple of tokens.
    Token indices run over the whole side, not per sentence.
    """

    pair_id: str
    doc: tuple
    summary: tuple
    doc_parses: tuple | None = None

    def __post_init__(self):
        if self.doc_parses is not None:
            if len(self.doc_parses) != len(self.doc):
                raise CorpusError(
                    f"pair {self.pair_id}: {len(self.doc_parses)} parses for "
                    f"{len(self.doc)} document sentences")
            for k, (tree, sent) in enumerate(zip(self.doc_parses, self.doc)):
                if tree.num_leaves != len(sent):
                    raise CorpusError(
                        f"pair {self.pair_id}: sentence {k} has {len(sent)} "
                        f"tokens but its parse has {tree.num_leaves} leaves")

    @property
    def doc_tokens(self) -> tuple:
        return tuple(t for sent in self.doc for t in sent)

    @property
    def summary_tokens(self) -> tuple:
        return tuple(t for sent in self.summary for t in sent)

    @property
    def doc_words(self) -> tuple:
        return tuple(t.surface for sent in self.doc for t in sent)

    @property
    def summary_words(self) -> tuple:
        return tuple(t.surface for sent in self.summary for t in sent)

    def sentence_offsets(self, side: str = "doc") -> list:
        """Index of the first token of each sentence on ``side``."""
        offsets, pos = [], 0
        for sent in getattr(self, side):
            offsets.append(pos)
            pos += len(sent)
        return offsets


def tokenize_side(sentences: Sequence, stoplist: frozenset = frozenset()) -> tuple:
    """Build token tuples from pre-tokenized sentences (whitespace split)."""
    out, index = [], 0
    for sent in sentences:
        words = sent.split() if isinstance(sent, str) else list(sent)
        toks = []
        for w in words:
            if not isinstance(w, str) or not w or any(c.isspace() for c in w):
                raise CorpusError(f"bad token {w!r}")
            toks.append(Token(w, stem(w), w in stoplist, index))
            index += 1
        if toks:
            out.append(tuple(toks))
    return tuple(out)


def make_pair(pair_id: str, doc, summary, stoplist: Iterable[str] = ()) -> TokenizedPair:
    """Build a pair from raw sides.

    A side is either one whitespace-tokenized string (a single sentence) or
    a list of sentences, each a string or a list of token strings.
    """
    stops = frozenset(stoplist)
    sides = []
    for name, raw in (("doc", doc), ("summary", summary)):
        if isinstance(raw, str):
            raw = [raw]
        if not isinstance(raw, (list, tuple)):
            raise CorpusError(f"pair {pair_id}: {name} must be a string or a list")
        side = tokenize_side(raw, stops)
        if not side:
            raise CorpusError(f"pair {pair_id}: empty {name}")
        sides.append(side)
    return TokenizedPair(str(pair_id), sides[0], sides[1])


def load_pairs(path, stoplist: Iterable[str] | None = None) -> list:
    """Read a JSON Lines pairs file.

    Each line holds ``{"id": ..., "doc": [...], "summary": [...]}``.  Records
    without an ``id`` are named after their line number.
    """
    path = Path(path)
    stops = frozenset(default_stoplist() if stoplist is None else stoplist)
    pairs, seen = [], set()
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            pair_id = str(rec.get("id", lineno)) if isinstance(rec, dict) else str(lineno)
            if not isinstance(rec, dict) or "doc" not in rec or "summary" not in rec:
                raise CorpusError(
                    f"{path}:{lineno}: record {pair_id!r} needs 'doc' and 'summary'")
            try:
                pair = make_pair(pair_id, rec["doc"], rec["summary"], stops)
            except CorpusError as exc:
                raise CorpusError(f"{path}:{lineno}: {exc}") from None
            if pair_id in seen:
                raise CorpusError(f"{path}:{lineno}: duplicate pair id {pair_id!r}")
            seen.add(pair_id)
            pairs.append(pair)
    return pairs


def write_pairs(pairs: Iterable[TokenizedPair], path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for p in pairs:
            rec = {
                "id": p.pair_id,
                "doc": [[t.surface for t in s] for s in p.doc],
                "summary": [[t.surface for t in s] for s in p.summary],
            }
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def load_stoplist(path) -> frozenset:
    """One entry per line; blank lines and ``#`` comments are skipped."""
    path = Path(path)
    if not path.is_file():
        raise CorpusError(f"stop list not found: {path}")
    words = set()
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            words.add(line)
    return frozenset(words)


@lru_cache(maxsize=1)
def default_stoplist() -> frozenset:
    """The shipped 58-entry ignore-list."""
    ref = resources.files("semialign") / "data" / "stopwords.txt"
    with resources.as_file(ref) as p:
        return load_stoplist(p)


def restop(pair: TokenizedPair, stoplist: Iterable[str]) -> TokenizedPair:
    """Return ``pair`` with stop flags recomputed from ``stoplist``."""
    stops = frozenset(stoplist)

    def side(sents):
        return tuple(tuple(replace(t, is_stop=t.surface in stops) for t in s) for s in sents)

    return replace(pair, doc=side(pair.doc), summary=side(pair.summary))


@dataclass(frozen=True)
class CorpusStats:
    num_pairs: int
    doc_sentences: int
    summary_sentences: int
    doc_words: int
    summary_words: int
    doc_unique: int
    summary_unique: int
    combined_unique: int
    doc_sentences_per_pair: float
    summary_sentences_per_pair: float
    doc_words_per_pair: float
    summary_words_per_pair: float
    doc_words_per_sentence: float
    summary_words_per_sentence: float
    compression_rate: float
    notes: tuple = field(default=())

    def table(self) -> str:
        rows = [
            ("Documents", self.num_pairs, self.num_pairs),
            ("Sentences", self.summary_sentences, self.doc_sentences),
            ("Words", self.summary_words, self.doc_words),
            ("Unique words", self.summary_unique, self.doc_unique),
            ("Sentences/Doc", self.summary_sentences_per_pair, self.doc_sentences_per_pair),
            ("Words/Doc", self.summary_words_per_pair, self.doc_words_per_pair),
            ("Words/Sent", self.summary_words_per_sentence, self.doc_words_per_sentence),
        ]
        lines = [f"{'':<16}{'Abstracts':>12}{'Documents':>12}"]
        for name, a, d in rows:
            fmt = "{:>12.2f}" if isinstance(a, float) else "{:>12d}"
            lines.append(f"{name:<16}" + fmt.format(a) + fmt.format(d))
        lines.append(f"{'Unique (both)':<16}{self.combined_unique:>24d}")
        lines.append(f"{'Compression':<16}{self.compression_rate:>24.4f}")
        lines.extend(self.notes)
        return "\n".join(lines)


def corpus_stats(pairs: Sequence[TokenizedPair], notes: Sequence[str] = ()) -> CorpusStats:
    if not pairs:
        raise CorpusError("corpus_stats needs at least one pair")
    n = len(pairs)
    d_sent = sum(len(p.doc) for p in pairs)
    s_sent = sum(len(p.summary) for p in pairs)
    d_words = sum(len(s) for p in pairs for s in p.doc)
    s_words = sum(len(s) for p in pairs for s in p.summary)
    d_vocab = {t.surface for p in pairs for t in p.doc_tokens}
    s_vocab = {t.surface for p in pairs for t in p.summary_tokens}
    return CorpusStats(
        num_pairs=n,
        doc_sentences=d_sent,
        summary_sentences=s_sent,
        doc_words=d_words,
        summary_words=s_words,
        doc_unique=len(d_vocab),
        summary_unique=len(s_vocab),
        combined_unique=len(d_vocab | s_vocab),
        doc_sentences_per_pair=d_sent / n,
        summary_sentences_per_pair=s_sent / n,
        doc_words_per_pair=d_words / n,
        summary_words_per_pair=s_words / n,
        doc_words_per_sentence=d_words / d_sent,
        summary_words_per_sentence=s_words / s_sent,
        compression_rate=s_words / d_words,
        notes=tuple(notes),
    )


def _overlap(a: frozenset, b: frozenset) -> float:
    if not a or not b:
        return 0.0
    return 2.0 * len(a & b) / (len(a) + len(b))


def select_extract(pair: TokenizedPair, k: int = 3) -> TokenizedPair:
    """Reduce the document to the sentences that best match the summary.

    Every summary sentence keeps its ``k`` document sentences with the highest
    Dice overlap of stem sets (earlier sentence wins ties); the union is kept
    in document order.  This approximates, and does not reproduce, the
    extract construction used for the original corpus.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    doc_sets = [frozenset(t.stem for t in s) for s in pair.doc]
    keep = set()
    for sent in pair.summary:
        sset = frozenset(t.stem for t in sent)
        ranked = sorted(range(len(doc_sets)), key=lambda i: (-_overlap(sset, doc_sets[i]), i))
        keep.update(ranked[:k])
    chosen = sorted(keep)
    idx = 0
    new_doc = []
    for i in chosen:
        toks = []
        for t in pair.doc[i]:
            toks.append(replace(t, index=idx))
            idx += 1
        new_doc.append(tuple(toks))
    parses = None
    if pair.doc_parses is not None:
        parses = tuple(pair.doc_parses[i] for i in chosen)
    return TokenizedPair(pair.pair_id, tuple(new_doc), pair.summary, parses)
