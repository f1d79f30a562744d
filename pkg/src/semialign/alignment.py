"""Phrase alignment spans and the tab-separated alignment file format."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

from .corpus import CorpusError

SURE = "S"
POSSIBLE = "P"


@dataclass(frozen=True, order=True)
class AlignmentSpan:
    """0-based inclusive token ranges; ``doc is None`` marks a null-generated span."""

    summ: tuple
    doc: tuple | None
    label: str = SURE

    def __post_init__(self):
        if self.label not in (SURE, POSSIBLE):
            raise CorpusError(f"bad alignment label {self.label!r}")
        for rng in (self.summ, self.doc):
            if rng is not None and not (len(rng) == 2 and 0 <= rng[0] <= rng[1]):
                raise CorpusError(f"bad span {rng}")

    @property
    def is_null(self) -> bool:
        return self.doc is None

    def summary_positions(self) -> range:
        return range(self.summ[0], self.summ[1] + 1)

    def doc_positions(self) -> range:
        return range(self.doc[0], self.doc[1] + 1) if self.doc is not None else range(0)


def span(doc, summ, label: str = SURE) -> AlignmentSpan:
    """Shorthand: ``span((3, 4), (2, 3))`` or ``span(None, (5, 5))``."""
    return AlignmentSpan(tuple(summ), None if doc is None else tuple(doc), label)


@dataclass(frozen=True)
class AlignmentSet:
    pair_id: str
    spans: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "spans", tuple(sorted(set(self.spans))))

    def sure(self) -> tuple:
        return tuple(s for s in self.spans if s.label == SURE)

    def __len__(self):
        return len(self.spans)

    def __iter__(self):
        return iter(self.spans)


def _fmt(rng) -> str:
    return "NULL" if rng is None else f"{rng[0]}:{rng[1]}"


def _parse_range(text: str, where: str):
    if text == "NULL":
        return None
    try:
        a, b = text.split(":")
        a, b = int(a), int(b)
    except ValueError:
        raise CorpusError(f"{where}: bad range {text!r}") from None
    if a < 0 or b < a:
        raise CorpusError(f"{where}: bad range {text!r}")
    return (a, b)


def load_alignments(path, pairs=None) -> dict:
    """Read an alignment file into ``{pair_id: AlignmentSet}``.

    Sure spans count as possible too, so S is a subset of P by construction.
    When ``pairs`` is given, ranges are checked against the token counts.
    """
    path = Path(path)
    if not path.is_file():
        raise CorpusError(f"alignment file not found: {path}")
    lengths = {p.pair_id: (len(p.doc_words), len(p.summary_words)) for p in pairs or ()}
    spans = defaultdict(list)
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        where = f"{path}:{lineno}"
        parts = line.split("\t")
        if len(parts) != 4:
            raise CorpusError(f"{where}: expected 4 tab-separated fields")
        pid, d, s, label = parts
        doc, summ = _parse_range(d, where), _parse_range(s, where)
        if summ is None:
            raise CorpusError(f"{where}: summary side cannot be NULL")
        if label not in (SURE, POSSIBLE):
            raise CorpusError(f"{where}: label must be S or P, got {label!r}")
        if lengths:
            if pid not in lengths:
                raise CorpusError(f"{where}: unknown pair {pid!r}")
            nd, ns = lengths[pid]
            if summ[1] >= ns or (doc is not None and doc[1] >= nd):
                raise CorpusError(f"{where}: span out of range for pair {pid!r}")
        spans[pid].append(AlignmentSpan(summ, doc, label))
    return {pid: AlignmentSet(pid, tuple(v)) for pid, v in spans.items()}


def write_alignments(sets, path) -> None:
    """Write alignment sets in pair order given; spans sorted within a pair."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for aset in sets:
            for sp in aset.spans:
                fh.write(f"{aset.pair_id}\t{_fmt(sp.doc)}\t{_fmt(sp.summ)}\t{sp.label}\n")
