"""Rewrite (emission) model: an interpolation of four phrase-to-phrase submodels.

``rewrite(s | d) = l_id * P_id + l_stem * P_stem + l_wn * P_wn + l_rw * P_rw``

* ``P_id``: 1 when the phrases are identical (case-sensitive), else 0;
* ``P_stem``: uniform over the phrases that match ``d`` word by word up to stem;
* ``P_wn``: exponential in the hypernym-graph distance between first senses;
* ``P_rw``: a learned phrase translation table (t-table) under Dirichlet fake counts.

Null-generated summary words come from a separate unigram table.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import stem

FLOOR = 1e-12
OMEGA = "</s>"
SUBMODELS = ("id", "stem", "wn", "rw")


class RewriteError(ValueError):
    pass


@dataclass(frozen=True)
class PriorSpec:
    """Fake counts added to t-table entries; the three bonuses stack."""

    singleton_fake: float = 2.0
    lexical_identity_fake: float = 4.0
    stem_identity_fake: float = 3.0

    def __post_init__(self):
        if min(self.singleton_fake, self.lexical_identity_fake, self.stem_identity_fake) < 0:
            raise RewriteError("fake counts must be nonnegative")

    @classmethod
    def none(cls) -> "PriorSpec":
        return cls(0.0, 0.0, 0.0)

    @property
    def is_zero(self) -> bool:
        return not (self.singleton_fake or self.lexical_identity_fake or self.stem_identity_fake)


def stem_key(phrase) -> tuple:
    return tuple(stem(w) for w in phrase)


def fake_count(s_phrase, d_phrase, prior: PriorSpec) -> float:
    s_phrase, d_phrase = tuple(s_phrase), tuple(d_phrase)
    out = 0.0
    if len(s_phrase) == 1 and len(d_phrase) == 1:
        out += prior.singleton_fake
    if s_phrase == d_phrase:
        out += prior.lexical_identity_fake
    if len(s_phrase) == len(d_phrase) and stem_key(s_phrase) == stem_key(d_phrase):
        out += prior.stem_identity_fake
    return out


# ---------------------------------------------------------------------------
# parameter-free submodels


def id_prob(s_phrase, d_phrase) -> float:
    return 1.0 if tuple(s_phrase) == tuple(d_phrase) else 0.0


class StemNorms:
    """Normalizers of the stem model over all same-length phrases of a vocabulary."""

    def __init__(self, vocabulary):
        self.vocabulary = frozenset(vocabulary)
        self.by_stem = Counter(stem(w) for w in self.vocabulary)

    def z(self, d_phrase) -> int:
        out = 1
        for w in d_phrase:
            out *= self.by_stem.get(stem(w), 0)
        return out


def stem_prob(s_phrase, d_phrase, stem_norms: StemNorms) -> float:
    s_phrase, d_phrase = tuple(s_phrase), tuple(d_phrase)
    if len(s_phrase) != len(d_phrase) or stem_key(s_phrase) != stem_key(d_phrase):
        return 0.0
    z = stem_norms.z(d_phrase)
    if z == 0:
        raise RewriteError(f"stem match for {d_phrase} but its normalizer is zero")
    return 1.0 / z


def wn_distance(graph, s_phrase, d_phrase) -> float:
    if graph is None:
        return math.inf
    return graph.distance(tuple(s_phrase), tuple(d_phrase))


class WordNetNorms:
    """Support and per-sense distance histograms for the hypernym model.

    The support is every summary-side phrase of the corpus that has a first
    sense in the graph.
    """

    def __init__(self, graph, support_phrases):
        self.graph = graph
        self.support = frozenset(tuple(p) for p in support_phrases
                                 if graph.lookup_phrase(p) is not None)
        self.support_senses = Counter(graph.lookup_phrase(p) for p in self.support)
        self._hist = {}

    def histogram(self, d_sense: str) -> tuple:
        hit = self._hist.get(d_sense)
        if hit is None:
            acc = Counter()
            for sense, cnt in self.support_senses.items():
                dist = self.graph.synset_distance(sense, d_sense)
                if dist != math.inf:
                    acc[dist] += cnt
            keys = sorted(acc)
            hit = (np.array(keys, dtype=float), np.array([acc[k] for k in keys], dtype=float))
            self._hist[d_sense] = hit
        return hit

    def z(self, d_sense: str, eta: float) -> float:
        dist, cnt = self.histogram(d_sense)
        return float((cnt * np.exp(-eta * dist)).sum())

    def __getstate__(self):
        state = dict(self.__dict__)
        state["_hist"] = {}
        return state


def wn_prob(mixture, s_phrase, d_phrase) -> float:
    if mixture.eta <= 0:
        raise RewriteError("eta must be positive")
    wn = mixture.wn
    if wn is None or tuple(s_phrase) not in wn.support:
        return 0.0
    d_sense = wn.graph.lookup_phrase(d_phrase)
    s_sense = wn.graph.lookup_phrase(s_phrase)
    if d_sense is None or s_sense is None:
        return 0.0
    dist = wn.graph.synset_distance(s_sense, d_sense)
    if dist == math.inf:
        return 0.0
    z = wn.z(d_sense, mixture.eta)
    return math.exp(-mixture.eta * dist) / z if z > 0 else 0.0


# ---------------------------------------------------------------------------
# t-table


class TTable:
    """Rows keyed by document phrase; entries are co-occurring summary phrases.

    The entry set (``index``) is fixed when the table is built and shared by
    every re-estimated version.
    """

    def __init__(self, index: dict, keys: list, rows: np.ndarray, row_keys: list, probs: np.ndarray):
        self.index = index
        self.keys = keys
        self.rows = rows
        self.row_keys = row_keys
        self.probs = probs
        self._fake = {}

    @classmethod
    def from_pairs(cls, pairs, max_doc_phrase_len: int, max_summary_phrase_len: int) -> "TTable":
        index, keys, rows, row_ids = {}, [], [], {}
        for pair in pairs:
            d_phr = phrases(pair.doc_words, max_doc_phrase_len)
            s_phr = phrases(pair.summary_words, max_summary_phrase_len)
            for d in d_phr:
                r = row_ids.setdefault(d, len(row_ids))
                for s in s_phr:
                    key = (d, s)
                    if key not in index:
                        index[key] = len(keys)
                        keys.append(key)
                        rows.append(r)
        row_keys = [None] * len(row_ids)
        for d, r in row_ids.items():
            row_keys[r] = d
        rows = np.array(rows, dtype=np.int64)
        sizes = np.bincount(rows, minlength=len(row_keys)) if len(rows) else np.zeros(0)
        probs = 1.0 / sizes[rows] if len(rows) else np.zeros(0)
        return cls(index, keys, rows, row_keys, probs)

    @classmethod
    def from_entries(cls, entries: dict) -> "TTable":
        """Build from ``{(d_phrase, s_phrase): prob}`` (used for toy tables)."""
        index, keys, rows, row_ids = {}, [], [], {}
        probs = []
        for (d, s), p in entries.items():
            d, s = tuple(d), tuple(s)
            r = row_ids.setdefault(d, len(row_ids))
            index[(d, s)] = len(keys)
            keys.append((d, s))
            rows.append(r)
            probs.append(p)
        row_keys = [None] * len(row_ids)
        for d, r in row_ids.items():
            row_keys[r] = d
        return cls(index, keys, np.array(rows, dtype=np.int64), row_keys, np.array(probs, dtype=float))

    def with_probs(self, probs: np.ndarray) -> "TTable":
        out = TTable(self.index, self.keys, self.rows, self.row_keys, probs)
        out._fake = self._fake
        return out

    def __len__(self):
        return len(self.keys)

    def get(self, s_phrase, d_phrase) -> float | None:
        k = self.index.get((tuple(d_phrase), tuple(s_phrase)))
        return None if k is None else float(self.probs[k])

    def fake(self, prior: PriorSpec) -> np.ndarray:
        hit = self._fake.get(prior)
        if hit is None:
            hit = np.array([fake_count(s, d, prior) for d, s in self.keys], dtype=float)
            self._fake[prior] = hit
        return hit

    def row_sums(self, values: np.ndarray) -> np.ndarray:
        return np.bincount(self.rows, weights=values, minlength=len(self.row_keys))

    def normalize(self, numerators: np.ndarray) -> np.ndarray:
        """Row-normalize; rows with no mass become uniform."""
        sums = self.row_sums(numerators)
        sizes = np.bincount(self.rows, minlength=len(self.row_keys))
        den = sums[self.rows]
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(den > 0, numerators / np.where(den > 0, den, 1), 1.0 / sizes[self.rows])
        return out

    def row(self, d_phrase) -> dict:
        d_phrase = tuple(d_phrase)
        return {s: float(self.probs[k]) for (d, s), k in self.index.items() if d == d_phrase}

    def __getstate__(self):
        state = dict(self.__dict__)
        state["_fake"] = {}
        return state


def phrases(words, max_len: int) -> list:
    """All contiguous sub-sequences up to ``max_len`` words, in (start, length) order."""
    words = tuple(words)
    return [words[i:i + k] for i in range(len(words)) for k in range(1, max_len + 1)
            if i + k <= len(words)]


def lexical_prob(ttable: TTable, s_phrase, d_phrase, floor: float = FLOOR) -> float:
    """t-table probability; pairs the table has never seen get ``floor``."""
    p = ttable.get(s_phrase, d_phrase)
    return floor if p is None else p


def ttable_numerators(ttable: TTable, counts, prior: PriorSpec) -> np.ndarray:
    """Expected counts plus fake counts for every entry."""
    if isinstance(counts, dict):
        arr = np.zeros(len(ttable))
        for (d, s), c in counts.items():
            k = ttable.index.get((tuple(d), tuple(s)))
            if k is None:
                raise RewriteError(f"({d}, {s}) is not a t-table entry")
            arr[k] += c
        counts = arr
    counts = np.asarray(counts, dtype=float)
    if counts.shape != (len(ttable),):
        raise RewriteError("count vector does not match the t-table")
    if (counts < 0).any():
        raise RewriteError("negative t-table counts")
    return counts + ttable.fake(prior)


def reestimate_ttable(ttable: TTable, counts, prior: PriorSpec) -> TTable:
    """Posterior-mean (MAP with the fake counts) t-table."""
    if len(ttable) == 0:
        raise RewriteError("empty t-table")
    return ttable.with_probs(ttable.normalize(ttable_numerators(ttable, counts, prior)))


def initial_ttable(ttable: TTable, prior: PriorSpec) -> TTable:
    """Uniform rows, then the prior's fake counts added on top of one unit of uniform mass."""
    sizes = np.bincount(ttable.rows, minlength=len(ttable.row_keys))
    return ttable.with_probs(ttable.normalize(1.0 / sizes[ttable.rows] + ttable.fake(prior)))


def ttable_log_prior(ttable: TTable, prior: PriorSpec) -> float:
    fake = ttable.fake(prior)
    mask = fake > 0
    if not mask.any():
        return 0.0
    with np.errstate(divide="ignore"):
        return float((fake[mask] * np.log(ttable.probs[mask])).sum())


def reestimate_lambdas(memberships) -> np.ndarray:
    m = np.asarray(memberships, dtype=float)
    if m.shape != (4,) or (m < 0).any():
        raise RewriteError("need four nonnegative membership masses")
    if m.sum() <= 0:
        raise RewriteError("cannot re-estimate interpolation weights from zero mass")
    return m / m.sum()


def eta_objective(eta: float, stats: dict, norms) -> float:
    """Sum over document senses of ``-eta * mass_dist - mass * log Z_d(eta)``."""
    out = 0.0
    for key in sorted(stats):
        mass, mass_dist = stats[key]
        if mass <= 0:
            continue
        dist, cnt = norms(key)
        out += -eta * mass_dist - mass * math.log(float((cnt * np.exp(-eta * dist)).sum()))
    return out


def estimate_eta(stats: dict, norms, prev_eta: float | None = None,
                 lo: float = 1e-3, hi: float = 20.0, tol: float = 1e-6) -> float:
    """Maximum-likelihood decay of the hypernym model by golden-section search.

    ``stats`` maps a document sense to ``(mass, mass * distance)``; ``norms``
    maps it to the ``(distances, counts)`` histogram of its support.
    """
    if not any(m > 0 for m, _ in stats.values()):
        if prev_eta is None:
            raise RewriteError("no finite-distance mass to estimate eta from")
        return prev_eta

    def f(x):
        return eta_objective(x, stats, norms)

    invphi = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    cands = [(f(x), -k, x) for k, x in enumerate([(a + b) / 2, lo, hi])]
    if prev_eta is not None:
        cands.append((f(prev_eta), 1, prev_eta))
    return max(cands)[2]


# ---------------------------------------------------------------------------
# mixture


@dataclass
class RewriteMixture:
    lambdas: np.ndarray
    eta: float
    ttable: TTable
    null_vocab: dict
    null_probs: np.ndarray
    stem_norms: StemNorms
    wn: WordNetNorms | None = None
    cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.lambdas = np.asarray(self.lambdas, dtype=float)
        if self.lambdas.shape != (4,) or abs(self.lambdas.sum() - 1) > 1e-9 or (self.lambdas < 0).any():
            raise RewriteError("lambdas must be four nonnegative weights summing to 1")
        if self.eta <= 0:
            raise RewriteError("eta must be positive")

    @property
    def null_table(self) -> dict:
        return {w: float(self.null_probs[k]) for w, k in self.null_vocab.items()}

    def null_prob(self, word: str, floor: float = FLOOR) -> float:
        k = self.null_vocab.get(word)
        return floor if k is None else float(self.null_probs[k])

    def replace(self, **kw) -> "RewriteMixture":
        args = dict(lambdas=self.lambdas, eta=self.eta, ttable=self.ttable,
                    null_vocab=self.null_vocab, null_probs=self.null_probs,
                    stem_norms=self.stem_norms, wn=self.wn, cache=self.cache)
        args.update(kw)
        return RewriteMixture(**args)

    def components(self, s_phrase, d_phrase, floor: float = 0.0) -> np.ndarray:
        p_rw = self.ttable.get(s_phrase, d_phrase)
        return np.array([
            id_prob(s_phrase, d_phrase),
            stem_prob(s_phrase, d_phrase, self.stem_norms),
            wn_prob(self, s_phrase, d_phrase) if self.wn is not None else 0.0,
            floor if p_rw is None else p_rw,
        ])

    def __getstate__(self):
        state = dict(self.__dict__)
        state["cache"] = {}
        return state


def rewrite_logprob(mixture: RewriteMixture, s_phrase, d_phrase, decode: bool = False) -> float:
    """Log rewrite probability; ``d_phrase=None`` scores a null emission."""
    s_phrase = tuple(s_phrase)
    if OMEGA in s_phrase:
        raise RewriteError("the end-of-summary symbol is not scored by the rewrite model")
    floor = FLOOR if decode else 0.0
    if d_phrase is None:
        if len(s_phrase) != 1:
            raise RewriteError("null states emit exactly one word")
        p = mixture.null_prob(s_phrase[0], floor)
    else:
        p = float(mixture.lambdas @ mixture.components(s_phrase, d_phrase, floor))
    return math.log(p) if p > 0 else -math.inf


def null_reestimate(counts: np.ndarray, smoothing: float = 0.5) -> np.ndarray:
    c = np.asarray(counts, dtype=float) + smoothing
    if c.sum() <= 0:
        raise RewriteError("cannot re-estimate the null table from zero mass")
    return c / c.sum()


def build_mixture(pairs, graph=None, max_doc_phrase_len: int = 5,
                  max_summary_phrase_len: int = 5, prior: PriorSpec = PriorSpec(),
                  eta: float = 1.0) -> RewriteMixture:
    """Uniformly initialized mixture for a corpus (t-table at its prior-weighted start)."""
    pairs = list(pairs)
    vocab = {w for p in pairs for w in p.doc_words} | {w for p in pairs for w in p.summary_words}
    summary_vocab = sorted({w for p in pairs for w in p.summary_words})
    tt = initial_ttable(TTable.from_pairs(pairs, max_doc_phrase_len, max_summary_phrase_len), prior)
    wn = None
    if graph is not None:
        support = {s for p in pairs for s in phrases(p.summary_words, max_summary_phrase_len)}
        wn = WordNetNorms(graph, sorted(support))
    return RewriteMixture(
        lambdas=np.full(4, 0.25),
        eta=eta,
        ttable=tt,
        null_vocab={w: k for k, w in enumerate(summary_vocab)},
        null_probs=np.full(len(summary_vocab), 1.0 / len(summary_vocab)),
        stem_norms=StemNorms(vocab),
        wn=wn,
    )


# ---------------------------------------------------------------------------
# vectorized scoring of one pair


class PairTables:
    """Parameter-free per-pair arrays indexed by (summary start, length - 1, phrase state)."""

    def __init__(self, mixture: RewriteMixture, pair, space, max_summary_phrase_len: int):
        s_words = pair.summary_words
        d_words = pair.doc_words
        N, P, L = len(s_words), space.num_phrases, max_summary_phrase_len
        d_phr = [tuple(d_words[i - 1:j]) for i, j in zip(space.phrase_start, space.phrase_end)]
        d_stems = [stem_key(d) for d in d_phr]
        d_z = np.array([mixture.stem_norms.z(d) for d in d_phr], dtype=float)
        self.valid = np.zeros((N, L), dtype=bool)
        self.ident = np.zeros((N, L, P))
        self.stem = np.zeros((N, L, P))
        self.dist = np.full((N, L, P), np.inf)
        self.tt_idx = np.full((N, L, P), -1, dtype=np.int64)
        wn = mixture.wn
        d_sense = [wn.graph.lookup_phrase(d) if wn is not None else None for d in d_phr]
        self.d_sense = d_sense
        index = mixture.ttable.index
        for t in range(N):
            for k in range(1, L + 1):
                if t + k > N:
                    break
                s = tuple(s_words[t:t + k])
                self.valid[t, k - 1] = True
                sk = stem_key(s)
                s_sense = None
                if wn is not None and s in wn.support:
                    s_sense = wn.graph.lookup_phrase(s)
                for j, d in enumerate(d_phr):
                    if s == d:
                        self.ident[t, k - 1, j] = 1.0
                    if len(d) == k and d_stems[j] == sk:
                        self.stem[t, k - 1, j] = 1.0 / d_z[j]
                    if s_sense is not None and d_sense[j] is not None:
                        self.dist[t, k - 1, j] = wn.graph.synset_distance(s_sense, d_sense[j])
                    e = index.get((d, s))
                    if e is not None:
                        self.tt_idx[t, k - 1, j] = e
        self.null_idx = np.array([mixture.null_vocab.get(w, -1) for w in s_words], dtype=np.int64)
        self.s_words = s_words
        self.d_phrases = d_phr

    def wn_probs(self, mixture: RewriteMixture) -> np.ndarray:
        out = np.zeros_like(self.dist)
        if mixture.wn is None:
            return out
        z = np.array([mixture.wn.z(s, mixture.eta) if s is not None else 0.0 for s in self.d_sense])
        finite = np.isfinite(self.dist) & (z[None, None, :] > 0)
        zz = np.broadcast_to(z[None, None, :], self.dist.shape)
        out[finite] = np.exp(-mixture.eta * self.dist[finite]) / zz[finite]
        return out


def pair_tables(mixture: RewriteMixture, pair, space, max_summary_phrase_len: int) -> PairTables:
    key = (pair.pair_id, space.doc_len, space.max_doc_phrase_len, max_summary_phrase_len,
           len(pair.summary_words))
    hit = mixture.cache.get(key)
    if hit is None:
        hit = PairTables(mixture, pair, space, max_summary_phrase_len)
        mixture.cache[key] = hit
    return hit


@dataclass
class PairScores:
    """Log emission scores plus the submodel probabilities they came from."""

    phrase: np.ndarray       # (N, L, P) log rewrite(s_{t+1..t+k} | phrase j)
    null: np.ndarray         # (N,) log null(s_{t+1})
    components: np.ndarray   # (4, N, L, P)
    mix: np.ndarray          # (N, L, P)
    tables: PairTables


def score_pair(mixture: RewriteMixture, pair, space, max_summary_phrase_len: int,
               decode: bool = False) -> PairScores:
    tabs = pair_tables(mixture, pair, space, max_summary_phrase_len)
    floor = FLOOR if decode else 0.0
    tt = np.where(tabs.tt_idx >= 0, mixture.ttable.probs[np.maximum(tabs.tt_idx, 0)], floor)
    tt = np.where(tabs.valid[:, :, None], tt, 0.0)
    comps = np.stack([tabs.ident, tabs.stem, tabs.wn_probs(mixture), tt])
    mix = np.tensordot(mixture.lambdas, comps, axes=1)
    with np.errstate(divide="ignore"):
        logp = np.log(mix)
        nulls = np.where(tabs.null_idx >= 0, mixture.null_probs[np.maximum(tabs.null_idx, 0)], floor)
        lnull = np.log(nulls)
    return PairScores(logp, lnull, comps, mix, tabs)


# ---------------------------------------------------------------------------
# serialization


def save_rewrite(mixture: RewriteMixture, path, prior: PriorSpec) -> None:
    lam = " ".join(repr(float(x)) for x in mixture.lambdas)
    lines = [
        f"# lambdas={lam.replace(' ', ',')} eta={float(mixture.eta)!r}",
        f"# prior singleton={prior.singleton_fake!r} identity={prior.lexical_identity_fake!r} "
        f"stem={prior.stem_identity_fake!r}",
        "# support: t-table rows over co-occurring corpus phrases; stem model over the corpus "
        "vocabulary; hypernym model over summary-side phrases found in the graph",
    ]
    for (d, s), p in zip(mixture.ttable.keys, mixture.ttable.probs):
        lines.append(f"{' '.join(d)}\t{' '.join(s)}\t{float(p)!r}")
    for w, k in mixture.null_vocab.items():
        lines.append(f"<NULL>\t{w}\t{float(mixture.null_probs[k])!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_rewrite(path, base: RewriteMixture) -> RewriteMixture:
    """Restore parameters saved by :func:`save_rewrite` onto a mixture built for the same corpus."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    head = dict(kv.split("=", 1) for kv in lines[0].lstrip("# ").split())
    lambdas = np.array([float(x) for x in head["lambdas"].split(",")])
    eta = float(head["eta"])
    probs = np.zeros(len(base.ttable))
    nulls = np.zeros(len(base.null_vocab))
    for ln in lines:
        if not ln or ln.startswith("#"):
            continue
        d, s, p = ln.split("\t")
        if d == "<NULL>":
            nulls[base.null_vocab[s]] = float(p)
            continue
        k = base.ttable.index.get((tuple(d.split(" ")), tuple(s.split(" "))))
        if k is None:
            raise RewriteError(f"{path}: entry {d!r} -> {s!r} not in this corpus' t-table")
        probs[k] = float(p)
    return base.replace(lambdas=lambdas, eta=eta, ttable=base.ttable.with_probs(probs), null_probs=nulls)
