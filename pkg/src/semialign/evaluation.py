"""Alignment scoring, annotator agreement, and two baseline aligners.

Word pairs are ``(doc_index, summary_index)`` with 0-based indices; null
links are ``(None, summary_index)`` and are left out of every score.

Hypothesis spans are expanded "softly": a phrase pair of equal lengths
contributes its diagonal word pairs (so ``a b``/``a b`` counts as ``a``/``a``
and ``b``/``b``), any other phrase pair contributes all its word pairs.  Gold
spans always use the all-pairs expansion.
"""

from __future__ import annotations

import json
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field

import numpy as np

from .alignment import SURE, AlignmentSet, AlignmentSpan, span
from .corpus import CorpusError


# ---------------------------------------------------------------------------
# expansion and set metrics


def expand_all_pairs(spans) -> set:
    out = set()
    for sp in spans:
        if sp.doc is None:
            out.update((None, t) for t in sp.summary_positions())
        else:
            out.update((d, t) for d in sp.doc_positions() for t in sp.summary_positions())
    return out


def expand_soft(spans) -> set:
    out = set()
    for sp in spans:
        if sp.doc is not None and sp.doc[1] - sp.doc[0] == sp.summ[1] - sp.summ[0]:
            out.update(zip(sp.doc_positions(), sp.summary_positions()))
        else:
            out.update(expand_all_pairs([sp]))
    return out


def _links(pairs: set) -> set:
    return {p for p in pairs if p[0] is not None}


def precision(hyp_pairs: set, possible: set) -> float | None:
    """``|A & P| / |A|``; None for an empty hypothesis."""
    if not hyp_pairs:
        return None
    return len(hyp_pairs & possible) / len(hyp_pairs)


def recall_of(hyp_pairs: set, sure: set) -> float | None:
    """``|A & S| / |S|``; None when there are no sure pairs."""
    if not sure:
        return None
    return len(hyp_pairs & sure) / len(sure)


def fscore(p, r) -> float | None:
    if p is None or r is None:
        return None
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def _gold_sets(gold: AlignmentSet) -> tuple:
    possible = _links(expand_all_pairs(gold.spans))
    sure = _links(expand_all_pairs(gold.sure()))
    return possible, sure


def soft_precision(hyp: AlignmentSet, gold: AlignmentSet) -> float:
    """Soft precision of one pair; an empty hypothesis scores 1.0 (see :func:`evaluate` for the flag)."""
    a = _links(expand_soft(hyp.spans))
    p = precision(a, _gold_sets(gold)[0])
    return 1.0 if p is None else p


def strict_precision(hyp: AlignmentSet, gold: AlignmentSet) -> float:
    """Credit only hypothesis spans that coincide exactly with a gold span."""
    a = _links(expand_soft(hyp.spans))
    if not a:
        return 1.0
    gold_spans = {(sp.doc, sp.summ) for sp in gold.spans}
    exact = _links(expand_soft([sp for sp in hyp.spans if (sp.doc, sp.summ) in gold_spans]))
    return len(exact) / len(a)


def recall(hyp: AlignmentSet, gold: AlignmentSet) -> float | None:
    return recall_of(_links(expand_soft(hyp.spans)), _gold_sets(gold)[1])


# ---------------------------------------------------------------------------
# corpus evaluation


@dataclass
class Section:
    soft_precision: float | None
    recall: float | None
    soft_fscore: float | None
    hyp_pairs: int
    matched_possible: int
    sure_pairs: int
    matched_sure: int
    flags: list = field(default_factory=list)


@dataclass
class EvalReport:
    all_words: Section
    non_stop: Section
    pairs: int
    missing_hypotheses: list = field(default_factory=list)
    averaging: str = "micro"

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def table(self) -> str:
        def f(x):
            return "  n/a" if x is None else f"{x:.3f}"

        lines = ["section      SoftP  Recall SoftF"]
        for name, sec in (("all words", self.all_words), ("non-stop", self.non_stop)):
            lines.append(f"{name:<12} {f(sec.soft_precision)} {f(sec.recall)}  {f(sec.soft_fscore)}"
                         + (f"   [{', '.join(sec.flags)}]" if sec.flags else ""))
        return "\n".join(lines)


def _section(a_total, a_match, s_total, s_match) -> Section:
    flags = []
    if a_total == 0:
        flags.append("empty hypothesis")
        p = 1.0
    else:
        p = float(a_match / a_total)
    if s_total == 0:
        flags.append("no sure pairs; recall undefined")
        r = None
    else:
        r = float(s_match / s_total)
    return Section(p, r, fscore(p, r), int(a_total), int(a_match), int(s_total), int(s_match), flags)


def evaluate(hyp: dict, gold: dict, pairs=None, stoplist=frozenset()) -> EvalReport:
    """Micro-averaged scores over all gold pairs.

    ``hyp`` and ``gold`` map pair ids to alignment sets.  Hypothesis ids
    missing from the gold are an error; gold pairs without a hypothesis are
    scored as empty hypotheses and listed in the report.  The non-stop
    section drops word pairs with a stop word on either side (needs ``pairs``).
    """
    extra = sorted(set(hyp) - set(gold))
    if extra:
        raise CorpusError(f"hypothesis pairs not in the gold standard: {extra[:5]}")
    by_id = {p.pair_id: p for p in pairs} if pairs is not None else {}
    stops = frozenset(stoplist)
    tot = np.zeros((2, 4), dtype=np.int64)
    missing = []
    for pid in sorted(gold):
        h = hyp.get(pid)
        if h is None:
            missing.append(pid)
            h = AlignmentSet(pid)
        a = _links(expand_soft(h.spans))
        possible, sure = _gold_sets(gold[pid])
        tot[0] += (len(a), len(a & possible), len(sure), len(a & sure))
        if stops and pid not in by_id:
            raise CorpusError(f"no tokens for pair {pid!r}; cannot apply the ignore-list")
        if pid in by_id:
            pair = by_id[pid]
            dw, sw = pair.doc_words, pair.summary_words

            def keep(x):
                return not (dw[x[0]] in stops or sw[x[1]] in stops)
        else:
            def keep(x):
                return True
        a2 = {x for x in a if keep(x)}
        p2 = {x for x in possible if keep(x)}
        s2 = {x for x in sure if keep(x)}
        tot[1] += (len(a2), len(a2 & p2), len(s2), len(a2 & s2))
    return EvalReport(_section(*tot[0]), _section(*tot[1]), len(gold), missing)


# ---------------------------------------------------------------------------
# agreement


def kappa_table(yy: float, yn: float, ny: float, nn: float) -> float | None:
    """Cohen's kappa from a 2x2 table (rater A first); None when chance agreement is 1."""
    total = yy + yn + ny + nn
    if total <= 0:
        return None
    po = (yy + nn) / total
    a_yes, b_yes = (yy + yn) / total, (yy + ny) / total
    pe = a_yes * b_yes + (1 - a_yes) * (1 - b_yes)
    if pe >= 1:
        return None
    return (po - pe) / (1 - pe)


def contingency(a: set, b: set, universe_size: int) -> tuple:
    yy = len(a & b)
    yn = len(a - b)
    ny = len(b - a)
    nn = universe_size - yy - yn - ny
    if nn < 0:
        raise ValueError("annotations larger than the universe")
    return yy, yn, ny, nn


def kappa(annotation_a: set, annotation_b: set, universe_size: int) -> float | None:
    return kappa_table(*contingency(set(annotation_a), set(annotation_b), universe_size))


def agreement(ann_a: dict, ann_b: dict, pairs, stoplist=frozenset(), sure_only: bool = True) -> dict:
    """Kappa over all doc x summary word pairs of the annotated pairs, with and without stop words."""
    by_id = {p.pair_id: p for p in pairs}
    stops = frozenset(stoplist)
    tables = {"all": np.zeros(4, dtype=np.int64), "non_stop": np.zeros(4, dtype=np.int64)}
    ids = sorted(set(ann_a) | set(ann_b))
    for pid in ids:
        if pid not in by_id:
            raise CorpusError(f"no tokens for annotated pair {pid!r}")
        pair = by_id[pid]
        nd, ns = len(pair.doc_words), len(pair.summary_words)
        sets = []
        for ann in (ann_a, ann_b):
            aset = ann.get(pid, AlignmentSet(pid))
            sps = aset.sure() if sure_only else aset.spans
            sets.append(_links(expand_all_pairs(sps)))
        tables["all"] += contingency(sets[0], sets[1], nd * ns)
        dk = [i for i, w in enumerate(pair.doc_words) if w not in stops]
        sk = [t for t, w in enumerate(pair.summary_words) if w not in stops]
        dks, sks = set(dk), set(sk)
        filt = [{x for x in s if x[0] in dks and x[1] in sks} for s in sets]
        tables["non_stop"] += contingency(filt[0], filt[1], len(dk) * len(sk))
    return {
        "kappa_all": kappa_table(*tables["all"]),
        "kappa_non_stop": kappa_table(*tables["non_stop"]),
        "table_all": [int(x) for x in tables["all"]],
        "table_non_stop": [int(x) for x in tables["non_stop"]],
        "pairs": len(ids),
        "labels": "sure" if sure_only else "sure+possible",
    }


# ---------------------------------------------------------------------------
# post-processing


def oracle_null_project(hyp: AlignmentSet, gold: AlignmentSet) -> AlignmentSet:
    """Re-align to NULL every summary word the gold leaves null-generated.

    Only words with a NULL gold link and no other gold link are touched, so
    recall cannot change.  An edited phrase span is replaced by its remaining
    word pairs.
    """
    gold_null = {sp.summ[0] + k for sp in gold.spans if sp.doc is None
                 for k in range(sp.summ[1] - sp.summ[0] + 1)}
    gold_linked = {t for _, t in _links(expand_all_pairs(gold.spans))}
    targets = gold_null - gold_linked
    if not targets:
        return hyp
    out = []
    for sp in hyp.spans:
        hit = targets.intersection(sp.summary_positions())
        if not hit or sp.doc is None:
            out.append(sp)
            continue
        for d, t in sorted(_links(expand_soft([sp]))):
            if t not in hit:
                out.append(span((d, d), (t, t), sp.label))
        for t in sorted(hit):
            out.append(span(None, (t, t), sp.label))
    return AlignmentSet(hyp.pair_id, tuple(out))


# ---------------------------------------------------------------------------
# baselines


def cutpaste_align(pair, min_block: int = 2) -> AlignmentSet:
    """Greedily link the longest stem-identical blocks between unaligned regions."""
    if min_block < 1:
        raise ValueError("min_block must be >= 1")
    ds = [t.stem for t in pair.doc_tokens]
    ss = [t.stem for t in pair.summary_tokens]
    n, N = len(ds), len(ss)
    eq = np.array([[a == b for b in ds] for a in ss], dtype=bool).reshape(N, n)
    used_d = np.zeros(n, dtype=bool)
    used_s = np.zeros(N, dtype=bool)
    spans = []
    while True:
        ok = eq & ~used_s[:, None] & ~used_d[None, :]
        run = np.zeros((N + 1, n + 1), dtype=np.int64)
        for t in range(N):
            run[t + 1, 1:] = np.where(ok[t], run[t, :-1] + 1, 0)
        m = int(run.max())
        if m < min_block or m == 0:
            break
        ends = np.argwhere(run == m)
        starts = sorted((int(t) - m, int(i) - m) for t, i in ends)
        t0, i0 = starts[0]
        used_s[t0:t0 + m] = True
        used_d[i0:i0 + m] = True
        spans.append(span((i0, i0 + m - 1), (t0, t0 + m - 1)))
    return AlignmentSet(pair.pair_id, tuple(spans))


NULL_WORD = "<NULL>"


@dataclass
class Model1:
    """Word translation table ``t(summary word | document word)``."""

    table: dict
    iterations: int

    def prob(self, s: str, d: str) -> float:
        return self.table.get(d, {}).get(s, 0.0)


def train_model1(pairs, iterations: int = 5, identity_seed: bool = True) -> Model1:
    """EM with the document as source and a NULL source word in every pair.

    With ``identity_seed`` every word found on both sides of the corpus is
    added once as an extra one-word pair aligned to itself.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    data = [([NULL_WORD] + list(p.doc_words), list(p.summary_words)) for p in pairs]
    if identity_seed:
        dv = {w for p in pairs for w in p.doc_words}
        sv = {w for p in pairs for w in p.summary_words}
        data += [([NULL_WORD, w], [w]) for w in sorted(dv & sv)]
    svocab = sorted({w for _, s in data for w in s})
    uniform = 1.0 / len(svocab)
    table = defaultdict(dict)
    for src, tgt in data:
        for d in src:
            for s in tgt:
                table[d][s] = uniform
    for _ in range(iterations):
        counts = defaultdict(lambda: defaultdict(float))
        for src, tgt in data:
            for s in tgt:
                den = sum(table[d][s] for d in src)
                for d in src:
                    counts[d][s] += table[d][s] / den
        table = defaultdict(dict)
        for d in sorted(counts):
            z = sum(counts[d].values())
            table[d] = {s: c / z for s, c in counts[d].items()}
    return Model1(dict(table), iterations)


def model1_align(pairs, iterations: int = 5, model: Model1 | None = None) -> dict:
    """Per-summary-word argmax links (earliest document position on ties).

    NULL is chosen only when strictly more probable than every document word.
    """
    pairs = list(pairs)
    model = model or train_model1(pairs, iterations)
    out = {}
    for p in pairs:
        spans = []
        for t, s in enumerate(p.summary_words):
            best, arg = -1.0, None
            for i, d in enumerate(p.doc_words):
                v = model.prob(s, d)
                if v > best:
                    best, arg = v, i
            if model.prob(s, NULL_WORD) > best or arg is None:
                spans.append(span(None, (t, t)))
            else:
                spans.append(span((arg, arg), (t, t)))
        out[p.pair_id] = AlignmentSet(p.pair_id, tuple(spans))
    return out


# ---------------------------------------------------------------------------
# annotated-corpus statistics


def alignment_stats(gold: dict, pairs) -> dict:
    """Shares of null-generated summary words and of identical / stem-identical / one-word phrase links."""
    by_id = {p.pair_id: p for p in pairs}
    words = null_words = 0
    kinds = Counter()
    links = 0
    for pid in sorted(gold):
        pair = by_id.get(pid)
        if pair is None:
            raise CorpusError(f"no tokens for annotated pair {pid!r}")
        words += len(pair.summary_words)
        null_words += len({t for sp in gold[pid].spans if sp.doc is None for t in sp.summary_positions()})
        for sp in gold[pid].spans:
            if sp.doc is None:
                continue
            links += 1
            d = [pair.doc_tokens[i] for i in sp.doc_positions()]
            s = [pair.summary_tokens[t] for t in sp.summary_positions()]
            if [x.surface for x in d] == [x.surface for x in s]:
                kinds["identical"] += 1
            if [x.stem for x in d] == [x.stem for x in s]:
                kinds["stem_identical"] += 1
            if len(d) == 1 and len(s) == 1:
                kinds["singleton"] += 1
    share = (lambda k: kinds[k] / links) if links else (lambda k: None)
    return {
        "summary_words": words,
        "null_generated_share": null_words / words if words else None,
        "phrase_links": links,
        "identical_share": share("identical"),
        "stem_identical_share": share("stem_identical"),
        "singleton_share": share("singleton"),
    }


__all__ = [
    "AlignmentSpan", "AlignmentSet", "SURE", "expand_all_pairs", "expand_soft", "precision",
    "recall_of", "fscore", "soft_precision", "strict_precision", "recall", "evaluate",
    "EvalReport", "kappa", "kappa_table", "contingency", "agreement", "oracle_null_project",
    "cutpaste_align", "train_model1", "model1_align", "alignment_stats",
]
