"""Jump (transition) models: relative distance, discretized Gaussian, syntax-aware.

Every model assigns an unnormalized log-weight to moving from an exit
position ``e`` (0 for the start state) to a target position ``p`` (``n + 1``
stands for the end state).  Transition probabilities renormalize those weights
over the targets that are legal from ``e``:

* a document phrase starting at ``p`` or the end state, with mass ``1 - null``;
  the phrase length is then chosen uniformly among the lengths that fit;
* a null state anchored at ``p``, with mass ``null``.

Re-estimation maximizes the expected complete-data log-likelihood of this
renormalized form (plus the smoothing pseudo-counts), starting from the
closed-form relative-frequency or moment estimate and never returning a
worse parameter set than the one it was given.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import optimize, sparse
from scipy.special import logsumexp

from .states import END, START, State

FLOOR = 1e-12
SIGMA2_MIN = 0.25
SIGMA2_MAX = 1e6


class JumpError(ValueError):
    pass


# ---------------------------------------------------------------------------
# syntax paths


def _forest(pair) -> list:
    """``(offset, tree)`` for each document sentence of ``pair``."""
    if pair.doc_parses is None:
        return []
    return list(zip(pair.sentence_offsets("doc"), pair.doc_parses))


def _cover_index(forest) -> tuple:
    """Map token index -> constituents starting there, largest then shallowest first."""
    starts = {}
    total = 0
    for offset, tree in forest:
        for node, depth in tree.nodes():
            lo, hi = node.span[0] + offset, node.span[1] + offset
            starts.setdefault(lo, []).append((hi, depth, node.label))
        total = max(total, offset + tree.num_leaves)
    for lst in starts.values():
        lst.sort(key=lambda x: (-x[0], x[1]))
    return starts, total


def syntax_jump_tags(forest, from_pos: int, to_pos: int, _index=None) -> list:
    """Directed constituent labels jumped over when moving from ``from_pos`` to ``to_pos``.

    Positions are 1-based document positions; ``from_pos`` 0 is the start
    state and ``to_pos`` ``n + 1`` the end state.  A forward jump passes over
    the tokens strictly between the two positions, a backward jump over
    ``to_pos .. from_pos``.  The gap is covered left to right by the largest
    constituent that fits, which gives the cover with the fewest nodes.
    """
    starts, n = _index if _index is not None else _cover_index(forest)
    if not 0 <= from_pos <= n or not 1 <= to_pos <= n + 1:
        raise JumpError(f"positions {from_pos}->{to_pos} outside parsed region 1..{n}")
    if to_pos > from_pos:
        lo, hi, suffix = from_pos, to_pos - 2, "-f"
    else:
        lo, hi, suffix = to_pos - 1, from_pos - 1, "-b"
    tags = []
    x = lo
    while x <= hi:
        for end, _, label in starts[x]:
            if end <= hi:
                tags.append(label + suffix)
                x = end + 1
                break
    return tags


class DocContext:
    """Per-document data shared by the jump models (length, parses, cached paths)."""

    def __init__(self, n: int, forest=None, pair_id: str = ""):
        self.n = n
        self.pair_id = pair_id
        self.forest = list(forest or [])
        self._paths = None
        self._matrices = {}
        if self.forest:
            self._index = _cover_index(self.forest)
            if self._index[1] != n:
                raise JumpError(f"parses cover {self._index[1]} tokens, document has {n}")
        else:
            self._index = None

    @classmethod
    def from_pair(cls, pair) -> "DocContext":
        return cls(len(pair.doc_words), _forest(pair), pair.pair_id)

    @property
    def has_parses(self) -> bool:
        return self._index is not None

    def tags(self, e: int, p: int) -> list:
        if self._index is None:
            raise JumpError(f"document {self.pair_id!r} has no parses")
        if self._paths is None:
            self._paths = {}
        key = (e, p)
        if key not in self._paths:
            self._paths[key] = syntax_jump_tags(self.forest, e, p, self._index)
        return self._paths[key]

    def tag_set(self) -> set:
        out = set()
        for _, tree in self.forest:
            for node, _ in tree.nodes():
                out.add(node.label)
        return out

    def path_matrix(self, inventory: dict):
        """Sparse ``(n+1)*(n+2) x |tags|`` label counts for every (e, p), plus unknown-label counts."""
        key = tuple(inventory)
        hit = self._matrices.get(key)
        if hit is not None:
            return hit
        n = self.n
        rows, cols, unknown = [], [], np.zeros((n + 1) * (n + 2))
        for e in range(n + 1):
            for p in range(1, n + 2):
                r = e * (n + 2) + p
                for tag in self.tags(e, p):
                    c = inventory.get(tag)
                    if c is None:
                        unknown[r] += 1
                    else:
                        rows.append(r)
                        cols.append(c)
        mat = sparse.csr_matrix((np.ones(len(rows)), (rows, cols)),
                                shape=((n + 1) * (n + 2), len(inventory)))
        self._matrices[key] = (mat, unknown)
        return mat, unknown

    def __getstate__(self):
        state = dict(self.__dict__)
        state["_matrices"] = {}
        return state


# ---------------------------------------------------------------------------
# models


def _log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


@dataclass
class RelativeJump:
    """Table over signed distances ``-window .. window`` plus a null probability.

    ``probs`` sums to one; ``jump_rel(d) = (1 - null_prob) * probs[d]``.
    """

    window: int
    probs: np.ndarray
    null_prob: float
    kind: str = field(default="relative", init=False)

    @classmethod
    def uniform(cls, window: int, null_prob: float = 0.1) -> "RelativeJump":
        return cls(window, np.full(2 * window + 1, 1.0 / (2 * window + 1)), null_prob)

    def jump_rel(self, d: int) -> float:
        if abs(d) > self.window:
            return (1 - self.null_prob) * FLOOR
        return (1 - self.null_prob) * float(self.probs[d + self.window])

    def logweight(self, e: int, p: int, ctx=None) -> float:
        d = p - e
        if abs(d) > self.window:
            return math.log(FLOOR)
        return float(_log(self.probs[d + self.window]))

    def logweight_matrix(self, ctx: DocContext) -> np.ndarray:
        n = ctx.n
        d = np.arange(n + 2)[None, :] - np.arange(n + 1)[:, None]
        inside = np.abs(d) <= self.window
        lw = np.full(d.shape, math.log(FLOOR))
        lw[inside] = _log(self.probs[d[inside] + self.window])
        return lw

    def table(self) -> dict:
        return {d: self.jump_rel(d) for d in range(-self.window, self.window + 1)}


@dataclass
class GaussianJump:
    """Weights ``exp(-(d - mu)^2 / sigma2)`` over signed distances."""

    mu: float
    sigma2: float
    null_prob: float
    window: int = 0
    kind: str = field(default="gaussian", init=False)

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise JumpError("sigma2 must be positive")

    @classmethod
    def uniform(cls, window: int, null_prob: float = 0.1) -> "GaussianJump":
        return cls(0.0, SIGMA2_MAX, null_prob, window)

    def logweight(self, e: int, p: int, ctx=None) -> float:
        return -((p - e) - self.mu) ** 2 / self.sigma2

    def logweight_matrix(self, ctx: DocContext) -> np.ndarray:
        n = ctx.n
        d = np.arange(n + 2)[None, :] - np.arange(n + 1)[:, None]
        return -((d - self.mu) ** 2) / self.sigma2

    def jump_rel(self, d: int, doc_len: int | None = None) -> float:
        """Discretized probability of distance ``d``, normalized over ``[-n, n + 1]``."""
        n = doc_len if doc_len is not None else max(self.window - 1, 1)
        ds = np.arange(-n, n + 2)
        if not -n <= d <= n + 1:
            return 0.0
        lw = -((ds - self.mu) ** 2) / self.sigma2
        return (1 - self.null_prob) * float(np.exp(-((d - self.mu) ** 2) / self.sigma2 - logsumexp(lw)))

    def table(self, doc_len: int | None = None) -> dict:
        n = doc_len if doc_len is not None else max(self.window - 1, 1)
        return {d: self.jump_rel(d, n) for d in range(-n, n + 2)}


@dataclass
class SyntaxJump:
    """Probabilities of directed constituent labels (``NP-f``, ``NP-b``, ...).

    A jump's weight is the product of the probabilities of the labels it
    passes over; adjacent forward jumps pass over nothing and weigh 1.
    """

    tag_probs: dict
    null_prob: float
    kind: str = field(default="syntax", init=False)

    def __post_init__(self):
        self.inventory = {t: k for k, t in enumerate(sorted(self.tag_probs))}
        self._logp = _log(np.array([self.tag_probs[t] for t in sorted(self.tag_probs)], dtype=float))

    @classmethod
    def uniform(cls, labels, null_prob: float = 0.1) -> "SyntaxJump":
        tags = sorted({f"{lab}-{d}" for lab in labels for d in "fb"})
        return cls({t: 1.0 / len(tags) for t in tags}, null_prob)

    def tag_logprob(self, tag: str) -> float:
        p = self.tag_probs.get(tag, 0.0)
        return math.log(p) if p > 0 else math.log(FLOOR)

    def path_logprob(self, tags) -> float:
        return sum(self.tag_logprob(t) for t in tags)

    def logweight(self, e: int, p: int, ctx: DocContext) -> float:
        return self.path_logprob(ctx.tags(e, p))

    def logweight_matrix(self, ctx: DocContext) -> np.ndarray:
        mat, unknown = ctx.path_matrix(self.inventory)
        lw = mat @ self._logp + unknown * math.log(FLOOR)
        return np.asarray(lw).reshape(ctx.n + 1, ctx.n + 2)


JumpModel = RelativeJump | GaussianJump | SyntaxJump


# ---------------------------------------------------------------------------
# transition probabilities


def length_logprobs(n: int, max_len: int) -> np.ndarray:
    """Log probability of each phrase length choice at positions 1..n (uniform over fitting lengths)."""
    fits = np.minimum(max_len, n - np.arange(1, n + 1) + 1)
    return -np.log(fits)


def transition_tables(model, ctx: DocContext):
    """Normalized log-probabilities indexed by exit position.

    Returns ``(to_pos, to_null)``: ``to_pos[e, p - 1]`` for ``p`` in ``1..n+1``
    (the last column is the end state) and ``to_null[e, a - 1]`` for anchors
    ``a`` in ``1..n``.  Phrase length factors are not included.
    """
    n = ctx.n
    lw = model.logweight_matrix(ctx)
    to_pos = lw[:, 1:].copy()
    to_pos[0, n] = -np.inf
    with np.errstate(divide="ignore"):
        log_go = math.log1p(-model.null_prob) if model.null_prob < 1 else -np.inf
        log_null = math.log(model.null_prob) if model.null_prob > 0 else -np.inf
    to_pos = log_go + to_pos - logsumexp(to_pos, axis=1, keepdims=True)
    to_null = lw[:, 1:n + 1]
    to_null = log_null + to_null - logsumexp(to_null, axis=1, keepdims=True)
    return to_pos, to_null


def _legal(source: State, target: State, n: int, max_len: int) -> None:
    if source.kind == "end":
        raise JumpError("no transitions leave the end state")
    if not (source.kind == "start" or 1 <= source.exit_pos <= n):
        raise JumpError(f"source {source} outside document of length {n}")
    if source.kind == "phrase" and not (source.i <= source.j and source.j - source.i < max_len):
        raise JumpError(f"illegal source phrase {source}")
    if target.kind == "start":
        raise JumpError("no transitions enter the start state")
    if target.kind == "end" and source.kind == "start":
        raise JumpError("start cannot jump straight to end")
    if target.kind == "phrase":
        if not (1 <= target.i <= target.j <= n and target.j - target.i < max_len):
            raise JumpError(f"illegal target phrase {target}")
    if target.kind == "null" and not 1 <= target.i <= n:
        raise JumpError(f"illegal null anchor {target}")


def jump_logprob(model, source: State, target: State, ctx: DocContext,
                 max_doc_phrase_len: int = 5) -> float:
    """Log transition probability computed directly from the model's weights."""
    n = ctx.n
    _legal(source, target, n, max_doc_phrase_len)
    e = source.exit_pos
    if target.kind == "null":
        if model.null_prob <= 0:
            return -math.inf
        num = model.logweight(e, target.i, ctx)
        den = logsumexp([model.logweight(e, a, ctx) for a in range(1, n + 1)])
        return math.log(model.null_prob) + num - den
    if model.null_prob >= 1:
        return -math.inf
    last = n if source.kind == "start" else n + 1
    den = logsumexp([model.logweight(e, p, ctx) for p in range(1, last + 1)])
    p = n + 1 if target.kind == "end" else target.i
    out = math.log1p(-model.null_prob) + model.logweight(e, p, ctx) - den
    if target.kind == "phrase":
        out -= math.log(min(max_doc_phrase_len, n - target.i + 1))
    return out


# ---------------------------------------------------------------------------
# expected counts and re-estimation


@dataclass
class JumpCounts:
    """Expected jump events.

    ``events`` maps a pair id to ``(ctx, to_pos, to_null)`` arrays shaped like
    :func:`transition_tables`; ``distance``/``tags`` hold directly supplied
    counts that carry no per-source normalization (they are treated as draws
    from the unrestricted table).
    """

    events: dict = field(default_factory=dict)
    distance: dict = field(default_factory=dict)
    tags: dict = field(default_factory=dict)
    null: float = 0.0

    @classmethod
    def from_distances(cls, counts: dict, null: float = 0.0) -> "JumpCounts":
        return cls(distance={int(k): float(v) for k, v in counts.items()}, null=null)

    @classmethod
    def from_tags(cls, counts: dict, null: float = 0.0) -> "JumpCounts":
        return cls(tags={k: float(v) for k, v in counts.items()}, null=null)

    def add_pair(self, ctx: DocContext, to_pos: np.ndarray, to_null: np.ndarray) -> None:
        key = ctx.pair_id
        if key in self.events:
            c, a, b = self.events[key]
            self.events[key] = (c, a + to_pos, b + to_null)
        else:
            self.events[key] = (ctx, to_pos, to_null)

    def __add__(self, other: "JumpCounts") -> "JumpCounts":
        out = JumpCounts(dict(self.events), dict(self.distance), dict(self.tags), self.null + other.null)
        for key in sorted(other.events):
            out.add_pair(*other.events[key])
        for k, v in other.distance.items():
            out.distance[k] = out.distance.get(k, 0.0) + v
        for k, v in other.tags.items():
            out.tags[k] = out.tags.get(k, 0.0) + v
        return out

    def totals(self) -> tuple:
        """(null mass, non-null mass)."""
        null = self.null
        go = sum(self.distance.values()) + sum(self.tags.values())
        for key in sorted(self.events):
            _, a, b = self.events[key]
            go += float(a.sum())
            null += float(b.sum())
        return null, go

    def distance_counts(self, window: int) -> np.ndarray:
        """Counts over distances ``-window..window`` (null-anchor moves included)."""
        out = np.zeros(2 * window + 1)
        for d, v in self.distance.items():
            if abs(d) > window:
                raise JumpError(f"distance {d} outside window {window}")
            out[d + window] += v
        for key in sorted(self.events):
            ctx, a, b = self.events[key]
            n = ctx.n
            d = np.arange(1, n + 2)[None, :] - np.arange(n + 1)[:, None]
            np.add.at(out, d.ravel() + window, a.ravel())
            np.add.at(out, d[:, :n].ravel() + window, b.ravel())
        return out

    def distance_groups(self, window: int) -> dict:
        """Total mass leaving each source, keyed by its legal distance interval."""
        groups = {}
        if self.distance:
            key = (-window, window)
            groups[key] = groups.get(key, 0.0) + sum(self.distance.values())
        for k in sorted(self.events):
            ctx, a, b = self.events[k]
            n = ctx.n
            for e in range(n + 1):
                hi = n if e == 0 else n + 1
                ma, mb = float(a[e].sum()), float(b[e].sum())
                if ma > 0:
                    key = (1 - e, hi - e)
                    groups[key] = groups.get(key, 0.0) + ma
                if mb > 0:
                    key = (1 - e, n - e)
                    groups[key] = groups.get(key, 0.0) + mb
        return groups

    def max_doc_len(self) -> int:
        return max((c.n for c, _, _ in self.events.values()), default=0)


def _null_prob(counts: JumpCounts) -> float:
    null, go = counts.totals()
    if null + go <= 0:
        raise JumpError("cannot re-estimate jumps from all-zero counts")
    return null / (null + go)


def _relative_objective(theta, counts, smoothing, lo_idx, hi_idx, masses):
    m = theta.max()
    w = np.exp(theta - m)
    z = w.sum()
    log_z = m + math.log(z)
    csum = np.concatenate([[0.0], np.cumsum(w)])
    wg = csum[hi_idx + 1] - csum[lo_idx]
    log_wg = m + np.log(wg)
    total = counts.sum() + smoothing * len(theta)
    f = float(((counts + smoothing) * theta).sum() - total * log_z
              - (masses * (log_wg - log_z)).sum())
    s = w / z
    grad = counts + smoothing - total * s + masses.sum() * s
    diff = np.zeros(len(theta) + 1)
    np.add.at(diff, lo_idx, masses / wg)
    np.add.at(diff, hi_idx + 1, -masses / wg)
    grad -= np.cumsum(diff)[:-1] * w
    return f, grad


def _maximize(fun, x0, bounds=None):
    res = optimize.minimize(lambda x: tuple(-v for v in fun(x)), x0, jac=True,
                            method="L-BFGS-B", bounds=bounds,
                            options={"maxiter": 500, "ftol": 1e-15, "gtol": 1e-10})
    return res.x


def _reestimate_relative(counts: JumpCounts, prev, smoothing: float, window: int | None):
    if window is None:
        window = prev.window if prev is not None else max(
            [abs(d) for d in counts.distance] + [counts.max_doc_len() + 1, 1])
    null_prob = _null_prob(counts)
    c = counts.distance_counts(window)
    groups = counts.distance_groups(window)
    keys = sorted(groups)
    lo_idx = np.array([k[0] + window for k in keys], dtype=np.int64)
    hi_idx = np.array([k[1] + window for k in keys], dtype=np.int64)
    masses = np.array([groups[k] for k in keys])

    rf = c + smoothing
    if rf.sum() <= 0:
        raise JumpError("cannot re-estimate jumps from all-zero counts")
    rf = rf / rf.sum()

    if all(k == (-window, window) for k in keys):
        return RelativeJump(window, rf, null_prob)

    def fun(theta):
        return _relative_objective(theta, c, smoothing, lo_idx, hi_idx, masses)

    def clean(x):
        return np.where(np.isfinite(x), x, -745.0)

    cands = [clean(_log(rf))]
    if prev is not None and prev.window == window:
        cands.append(clean(_log(prev.probs)))
    start = max(cands, key=lambda t: fun(t)[0])
    opt = _maximize(fun, start)
    best = opt if fun(opt)[0] >= fun(start)[0] else start
    probs = np.exp(best - best.max())
    probs /= probs.sum()
    return RelativeJump(window, probs, null_prob)


def relative_objective(model: RelativeJump, counts: JumpCounts, smoothing: float = 0.0) -> float:
    """Expected complete-data log-likelihood (plus smoothing log-prior) of the distance table."""
    w = model.window
    c = counts.distance_counts(w)
    groups = counts.distance_groups(w)
    keys = sorted(groups)
    lo = np.array([k[0] + w for k in keys], dtype=np.int64)
    hi = np.array([k[1] + w for k in keys], dtype=np.int64)
    theta = np.where(model.probs > 0, _log(model.probs), -745.0)
    return _relative_objective(theta, c, smoothing, lo, hi, np.array([groups[k] for k in keys]))[0]


def _gaussian_objective(b, d, c, lo_idx, hi_idx, masses):
    lw = b[0] * d + b[1] * d * d
    f = float((c * lw).sum())
    g = np.array([(c * d).sum(), (c * d * d).sum()])
    for lo, hi, m in zip(lo_idx, hi_idx, masses):
        seg = lw[lo:hi + 1]
        lz = logsumexp(seg)
        pi = np.exp(seg - lz)
        f -= m * lz
        dd = d[lo:hi + 1]
        g -= m * np.array([(pi * dd).sum(), (pi * dd * dd).sum()])
    return f, g


def _reestimate_gaussian(counts: JumpCounts, prev, window: int | None):
    if window is None:
        window = prev.window if prev is not None and prev.window else max(
            [abs(d) for d in counts.distance] + [counts.max_doc_len() + 1, 1])
    null_prob = _null_prob(counts)
    c = counts.distance_counts(window)
    if c.sum() <= 0:
        raise JumpError("cannot re-estimate jumps from all-zero counts")
    d = np.arange(-window, window + 1, dtype=float)
    mu = float((c * d).sum() / c.sum())
    var = float((c * (d - mu) ** 2).sum() / c.sum())
    sigma2 = min(max(var, SIGMA2_MIN), SIGMA2_MAX)
    groups = counts.distance_groups(window)
    keys = sorted(groups)
    if not keys or keys == [(-window, window)]:
        return GaussianJump(mu, sigma2, null_prob, window)
    lo_idx = [k[0] + window for k in keys]
    hi_idx = [k[1] + window for k in keys]
    masses = [groups[k] for k in keys]

    def fun(b):
        return _gaussian_objective(b, d, c, lo_idx, hi_idx, masses)

    def nat(m, s2):
        return np.array([2 * m / s2, -1.0 / s2])

    cands = [nat(mu, sigma2)]
    if prev is not None:
        cands.append(nat(prev.mu, prev.sigma2))
    start = max(cands, key=lambda b: fun(b)[0])
    bounds = [(None, None), (-1.0 / SIGMA2_MIN, -1.0 / SIGMA2_MAX)]
    opt = _maximize(fun, start, bounds)
    best = opt if fun(opt)[0] >= fun(start)[0] else start
    s2 = -1.0 / best[1]
    return GaussianJump(float(best[0] * s2 / 2), float(s2), null_prob, window)


def gaussian_objective(model: GaussianJump, counts: JumpCounts) -> float:
    w = model.window
    d = np.arange(-w, w + 1, dtype=float)
    c = counts.distance_counts(w)
    groups = counts.distance_groups(w)
    keys = sorted(groups)
    b = np.array([2 * model.mu / model.sigma2, -1.0 / model.sigma2])
    return _gaussian_objective(b, d, c, [k[0] + w for k in keys], [k[1] + w for k in keys],
                               [groups[k] for k in keys])[0]


class _SyntaxProblem:
    """Stacked per-source target rows for the syntax-model M-step."""

    def __init__(self, counts: JumpCounts, inventory: dict):
        mats, cnt, unknown, bounds = [], [], [], [0]
        masses = []
        for key in sorted(counts.events):
            ctx, a, b = counts.events[key]
            n = ctx.n
            mat, unk = ctx.path_matrix(inventory)
            width = n + 2
            for e in range(n + 1):
                last = n if e == 0 else n + 1
                for arr, hi in ((a, last), (b, n)):
                    m = float(arr[e].sum())
                    if m <= 0:
                        continue
                    rows = e * width + np.arange(1, hi + 1)
                    mats.append(mat[rows])
                    unknown.append(unk[rows])
                    cnt.append(arr[e, :hi])
                    masses.append(m)
                    bounds.append(bounds[-1] + hi)
        k = len(inventory)
        if mats:
            self.K = sparse.vstack(mats).tocsr()
            self.unknown = np.concatenate(unknown)
            self.c = np.concatenate(cnt)
        else:
            self.K = sparse.csr_matrix((0, k))
            self.unknown = np.zeros(0)
            self.c = np.zeros(0)
        self.lens = np.asarray(self.K.sum(axis=1)).ravel() + self.unknown
        self.starts = np.array(bounds[:-1], dtype=np.int64)
        self.masses = np.array(masses)
        self.seg = np.repeat(np.arange(len(masses)), np.diff(bounds)) if masses else np.zeros(0, int)
        h = np.zeros(k)
        for tag, v in counts.tags.items():
            if tag not in inventory:
                raise JumpError(f"tag {tag!r} not in the model inventory")
            h[inventory[tag]] += v
        self.h = h

    def objective(self, phi, smoothing):
        m = phi.max()
        lse = m + math.log(np.exp(phi - m).sum())
        s = np.exp(phi - lse)
        k = len(phi)
        u = self.K @ phi - self.lens * lse + self.unknown * math.log(FLOOR)
        f = float((self.c * u).sum())
        v = self.c.copy()
        if len(self.masses):
            gmax = np.maximum.reduceat(u, self.starts)
            ex = np.exp(u - gmax[self.seg])
            gsum = np.add.reduceat(ex, self.starts)
            lz = gmax + np.log(gsum)
            f -= float((self.masses * lz).sum())
            v -= self.masses[self.seg] * ex / gsum[self.seg]
        grad = self.K.T @ v - (v * self.lens).sum() * s
        f += float((self.h * (phi - lse)).sum() + smoothing * (phi - lse).sum())
        grad += self.h - self.h.sum() * s + smoothing - smoothing * k * s
        return f, np.asarray(grad).ravel()


def _reestimate_syntax(counts: JumpCounts, prev, smoothing: float, labels=None):
    if prev is not None:
        inventory = prev.inventory
        tags = sorted(prev.tag_probs)
    else:
        names = set(labels or ())
        for ctx, _, _ in counts.events.values():
            names |= ctx.tag_set()
        tags = sorted({f"{lab}-{d}" for lab in names for d in "fb"} | set(counts.tags))
        inventory = {t: k for k, t in enumerate(tags)}
    null_prob = _null_prob(counts)
    prob = _SyntaxProblem(counts, inventory)
    totals = np.asarray(prob.K.T @ prob.c).ravel() + prob.h
    rf = totals + smoothing
    if rf.sum() <= 0:
        raise JumpError("cannot re-estimate jumps from all-zero counts")
    rf = rf / rf.sum()

    def fun(phi):
        return prob.objective(phi, smoothing)

    def clean(x):
        return np.where(np.isfinite(x), x, -745.0)

    cands = [clean(_log(rf))]
    if prev is not None:
        cands.append(clean(_log(np.array([prev.tag_probs[t] for t in tags]))))
    start = max(cands, key=lambda x: fun(x)[0])
    best = start
    if len(prob.masses):
        opt = _maximize(fun, start)
        if fun(opt)[0] >= fun(start)[0]:
            best = opt
        p = np.exp(best - best.max())
        p /= p.sum()
    else:
        p = rf
    return SyntaxJump({t: float(x) for t, x in zip(tags, p)}, null_prob)


def syntax_objective(model: SyntaxJump, counts: JumpCounts, smoothing: float = 0.0) -> float:
    tags = sorted(model.tag_probs)
    phi = np.array([model.tag_probs[t] for t in tags])
    phi = np.where(phi > 0, _log(phi), -745.0)
    return _SyntaxProblem(counts, model.inventory).objective(phi, smoothing)[0]


def reestimate(kind: str, counts: JumpCounts, prev=None, smoothing: float = 0.5,
               window: int | None = None, labels=None):
    """New jump model of ``kind`` from expected counts.

    ``null_prob`` is the null-jump share of all jump mass.  The distance or
    label table starts at its relative frequency (Gaussian: moment estimates,
    ``sigma2`` floored at 0.25) and is then refined against the per-source
    normalization of the counted events.
    """
    if kind == "relative":
        return _reestimate_relative(counts, prev, smoothing, window)
    if kind == "gaussian":
        return _reestimate_gaussian(counts, prev, window)
    if kind == "syntax":
        return _reestimate_syntax(counts, prev, smoothing, labels)
    raise JumpError(f"unknown jump model kind {kind!r}")


def q_value(model, counts: JumpCounts, smoothing: float = 0.0) -> float:
    """Expected complete-data log-likelihood of ``model`` on ``counts`` (plus its log-prior)."""
    null, go = counts.totals()
    out = 0.0
    if null > 0:
        out += null * math.log(model.null_prob)
    if go > 0:
        out += go * math.log1p(-model.null_prob)
    if model.kind == "relative":
        return out + relative_objective(model, counts, smoothing)
    if model.kind == "gaussian":
        return out + gaussian_objective(model, counts)
    return out + syntax_objective(model, counts, smoothing)


def log_prior(model, smoothing: float) -> float:
    """Log density (up to a constant) of the smoothing pseudo-counts."""
    if smoothing == 0 or model.kind == "gaussian":
        return 0.0
    if model.kind == "relative":
        return smoothing * float(_log(np.maximum(model.probs, 1e-300)).sum())
    return smoothing * sum(math.log(max(p, 1e-300)) for p in model.tag_probs.values())


def init_jump(kind: str, window: int, null_prob: float = 0.1, labels=()):
    if kind == "relative":
        return RelativeJump.uniform(window, null_prob)
    if kind == "gaussian":
        return GaussianJump.uniform(window, null_prob)
    if kind == "syntax":
        if not labels:
            raise JumpError("syntax jumps need parse labels")
        return SyntaxJump.uniform(labels, null_prob)
    raise JumpError(f"unknown jump model kind {kind!r}")


# ---------------------------------------------------------------------------
# serialization


def save_jump(model, path) -> None:
    lines = []
    if model.kind == "relative":
        lines.append(f"# kind=relative window={model.window} null_prob={float(model.null_prob)!r}")
        lines.append(f"NULL\t{float(model.null_prob)!r}")
        for k, p in enumerate(model.probs):
            lines.append(f"{k - model.window}\t{float((1 - model.null_prob) * p)!r}\t{float(p)!r}")
    elif model.kind == "gaussian":
        lines.append(f"# kind=gaussian window={model.window} null_prob={float(model.null_prob)!r}")
        lines.append(f"NULL\t{float(model.null_prob)!r}")
        lines.append(f"mu\t{float(model.mu)!r}")
        lines.append(f"sigma2\t{float(model.sigma2)!r}")
    else:
        lines.append(f"# kind=syntax tags={len(model.tag_probs)} null_prob={float(model.null_prob)!r}")
        lines.append(f"NULL\t{float(model.null_prob)!r}")
        for t in sorted(model.tag_probs):
            lines.append(f"{t}\t{float(model.tag_probs[t])!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_jump(path):
    text = Path(path).read_text(encoding="utf-8").splitlines()
    header = dict(kv.split("=", 1) for kv in text[0].lstrip("# ").split())
    kind = header["kind"]
    rows = [ln.split("\t") for ln in text[1:] if ln.strip()]
    null_prob = float(rows[0][1])
    if kind == "relative":
        window = int(header["window"])
        probs = np.array([float(r[2]) for r in rows[1:]])
        if len(probs) != 2 * window + 1:
            raise JumpError(f"{path}: expected {2 * window + 1} distances")
        return RelativeJump(window, probs, null_prob)
    if kind == "gaussian":
        vals = {r[0]: float(r[1]) for r in rows[1:]}
        return GaussianJump(vals["mu"], vals["sigma2"], null_prob, int(header["window"]))
    if kind == "syntax":
        return SyntaxJump({r[0]: float(r[1]) for r in rows[1:]}, null_prob)
    raise JumpError(f"{path}: unknown kind {kind!r}")


__all__ = [
    "DocContext", "GaussianJump", "JumpCounts", "JumpError", "RelativeJump", "SyntaxJump",
    "START", "END", "init_jump", "jump_logprob", "length_logprobs", "load_jump", "log_prior",
    "q_value", "reestimate", "save_jump", "syntax_jump_tags", "transition_tables",
]
