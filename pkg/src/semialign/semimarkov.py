"""Forward, backward, Viterbi and expected counts for one document/summary pair.

Summary boundaries are numbered ``t = 0..N`` (``N`` summary words, the
end-of-summary symbol is not counted).  ``alpha[t, s]`` is the log
probability of generating the first ``t`` words and being in state ``s``
with its segment ending at ``t``; ``beta[t, s]`` is the log probability of
the remaining words and the end symbol given that.  The end symbol is
emitted with probability one on the transition into the end state.

Jump probabilities depend only on the exit position of the source state, so
the recursions aggregate states by exit position first.  One summary
position costs ``O(n^2 + l*P)`` for ``n`` document words, ``P`` phrase
states and maximum summary phrase length ``l``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .alignment import AlignmentSet, span
from .jump import DocContext, JumpCounts, length_logprobs, transition_tables
from .rewrite import score_pair
from .states import END, State, StateSpace, build_state_space

NEG_INF = -np.inf


class UnalignableError(RuntimeError):
    """No path through the trellis has nonzero probability."""


def _lse(x: np.ndarray, axis=None) -> np.ndarray:
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True)) + m
    return out.squeeze(axis) if axis is not None else out.item()


class _Groups:
    """Contiguous groups of a permuted vector, for segmented reductions."""

    def __init__(self, keys: np.ndarray, num_groups: int):
        self.order = np.argsort(keys, kind="stable")
        sorted_keys = keys[self.order]
        self.starts = np.searchsorted(sorted_keys, np.arange(num_groups))
        if not np.array_equal(np.unique(sorted_keys), np.arange(num_groups)):
            raise ValueError("every group needs at least one member")
        self.member = sorted_keys

    def lse(self, x: np.ndarray) -> np.ndarray:
        v = x[self.order]
        m = np.maximum.reduceat(v, self.starts)
        m = np.where(np.isfinite(m), m, 0.0)
        with np.errstate(divide="ignore"):
            return np.log(np.add.reduceat(np.exp(v - m[self.member]), self.starts)) + m

    def argmax(self, x: np.ndarray, ids: np.ndarray) -> tuple:
        """Per-group max and the smallest id attaining it."""
        v = x[self.order]
        m = np.maximum.reduceat(v, self.starts)
        cand = np.where(v == m[self.member], ids[self.order], np.iinfo(np.int64).max)
        return m, np.minimum.reduceat(cand, self.starts)


def _beam_keep(row: np.ndarray, fraction: float) -> np.ndarray:
    """Mask of the ``ceil(fraction * live)`` best live entries (ties to lower index)."""
    live = np.isfinite(row)
    count = int(live.sum())
    keep_n = math.ceil(round(fraction * count, 9))
    keep = np.zeros(len(row), dtype=bool)
    if keep_n:
        order = np.lexsort((np.arange(len(row)), -np.where(live, row, -np.inf)))
        keep[order[:keep_n]] = True
    return keep & live


@dataclass
class Trellis:
    pair_id: str
    space: StateSpace
    num_words: int
    max_summary_phrase_len: int
    jump: object
    rewrite: object
    beam_fraction: float | None
    to_pos: np.ndarray
    to_null: np.ndarray
    lenlog: np.ndarray
    scores: object
    ctx: DocContext | None = None
    alpha: np.ndarray | None = None
    aexit: np.ndarray | None = None
    cin: np.ndarray | None = None
    nullin: np.ndarray | None = None
    masks: np.ndarray | None = None
    beta: np.ndarray | None = None
    h: np.ndarray | None = None
    hnull: np.ndarray | None = None
    total_loglik: float = NEG_INF
    ops: int = 0
    _groups: tuple = field(default=None, repr=False)

    @property
    def alignable(self) -> bool:
        return bool(np.isfinite(self.total_loglik))

    @property
    def backward_total(self) -> float:
        return float(self.beta[0, 0])


def _check_space(pair, space: StateSpace):
    n = len(pair.doc_words)
    if space.doc_len != n:
        raise ValueError(f"state space built for {space.doc_len} words, pair {pair.pair_id!r} has {n}")
    if not pair.summary_words:
        raise ValueError(f"pair {pair.pair_id!r} has an empty summary")


def _groups(space: StateSpace):
    exits = space.exit_positions[:-1]
    return (_Groups(exits, space.doc_len + 1),
            _Groups(space.phrase_start - 1, space.doc_len))


def prepare(pair, space: StateSpace, jump_model, rewrite_model, max_summary_phrase_len: int = 5,
            ctx: DocContext | None = None, beam_fraction: float | None = None,
            decode: bool = False) -> Trellis:
    _check_space(pair, space)
    if beam_fraction is not None and not 0 < beam_fraction <= 1:
        raise ValueError("beam_fraction must lie in (0, 1]")
    if ctx is None:
        ctx = DocContext.from_pair(pair)
    to_pos, to_null = transition_tables(jump_model, ctx)
    return Trellis(
        pair_id=pair.pair_id,
        space=space,
        num_words=len(pair.summary_words),
        max_summary_phrase_len=max_summary_phrase_len,
        jump=jump_model,
        rewrite=rewrite_model,
        beam_fraction=beam_fraction,
        to_pos=to_pos,
        to_null=to_null,
        lenlog=length_logprobs(space.doc_len, space.max_doc_phrase_len),
        scores=score_pair(rewrite_model, pair, space, max_summary_phrase_len, decode=decode),
        ctx=ctx,
        _groups=_groups(space),
    )


def run_forward(tr: Trellis) -> Trellis:
    space, N, l = tr.space, tr.num_words, tr.max_summary_phrase_len
    n, P, S = space.doc_len, space.num_phrases, space.num_states
    by_exit, _ = tr._groups
    E, En = tr.scores.phrase, tr.scores.null
    plen = tr.lenlog[space.phrase_start - 1]
    pstart = space.phrase_start - 1
    A = np.full((N + 1, S), NEG_INF)
    A[0, 0] = 0.0
    aexit = np.full((N + 1, n + 1), NEG_INF)
    cin = np.full((N, n), NEG_INF)
    nullin = np.full((N, n), NEG_INF)
    masks = np.ones((N + 1, S), dtype=bool)
    ops = 0
    for t in range(N + 1):
        row = A[t, :S - 1]
        if tr.beam_fraction is not None:
            keep = _beam_keep(row, tr.beam_fraction)
            # only states that were live and got pruned are masked for the backward pass
            masks[t, :S - 1] = keep | ~np.isfinite(row)
            row[~keep] = NEG_INF
        aexit[t] = by_exit.lse(row)
        ops += S - 1
        if t == N:
            break
        cin[t] = _lse(aexit[t][:, None] + tr.to_pos[:, :n], axis=0)
        nullin[t] = _lse(aexit[t][:, None] + tr.to_null, axis=0)
        ops += 2 * (n + 1) * n
        base = cin[t][pstart] + plen
        for k in range(1, min(l, N - t) + 1):
            A[t + k, 1:P + 1] = np.logaddexp(A[t + k, 1:P + 1], base + E[t, k - 1])
            ops += P
        A[t + 1, P + 1:P + 1 + n] = np.logaddexp(A[t + 1, P + 1:P + 1 + n], nullin[t] + En[t])
        ops += n
    total = _lse(aexit[N] + tr.to_pos[:, n])
    A[N, S - 1] = total
    tr.alpha, tr.aexit, tr.cin, tr.nullin, tr.masks = A, aexit, cin, nullin, masks
    tr.total_loglik = float(total)
    tr.ops += ops
    return tr


def run_backward(tr: Trellis) -> Trellis:
    if tr.masks is None:
        raise ValueError("run the forward pass first (the beam masks come from it)")
    space, N, l = tr.space, tr.num_words, tr.max_summary_phrase_len
    n, P, S = space.doc_len, space.num_phrases, space.num_states
    _, by_start = tr._groups
    E, En = tr.scores.phrase, tr.scores.null
    exits = space.exit_positions[:-1]
    B = np.full((N + 1, S), NEG_INF)
    B[N, :S - 1] = tr.to_pos[exits, n]
    B[N, S - 1] = 0.0
    B[N, ~tr.masks[N]] = NEG_INF
    H = np.full((N, n), NEG_INF)
    Hn = np.full((N, n), NEG_INF)
    for t in range(N - 1, -1, -1):
        g = np.full(P, NEG_INF)
        for k in range(1, min(l, N - t) + 1):
            g = np.logaddexp(g, E[t, k - 1] + B[t + k, 1:P + 1])
        H[t] = by_start.lse(g) + tr.lenlog
        Hn[t] = En[t] + B[t + 1, P + 1:P + 1 + n]
        bexit = np.logaddexp(_lse(tr.to_pos[:, :n] + H[t][None, :], axis=1),
                             _lse(tr.to_null + Hn[t][None, :], axis=1))
        B[t, :S - 1] = bexit[exits]
        B[t, ~tr.masks[t]] = NEG_INF
    tr.beta, tr.h, tr.hnull = B, H, Hn
    return tr


def forward(pair, space: StateSpace, jump_model, rewrite_model, beam_fraction: float | None = 1.0,
            max_summary_phrase_len: int = 5, ctx: DocContext | None = None,
            decode: bool = False) -> Trellis:
    """Fill alpha.  ``beam_fraction=None`` skips the pruning code path entirely.

    An unalignable pair gives ``total_loglik = -inf`` (``trellis.alignable`` is False).
    """
    tr = prepare(pair, space, jump_model, rewrite_model, max_summary_phrase_len, ctx,
                 beam_fraction, decode)
    return run_forward(tr)


def backward(pair, space: StateSpace, jump_model, rewrite_model, beam_fraction: float | None = 1.0,
             max_summary_phrase_len: int = 5, ctx: DocContext | None = None,
             trellis: Trellis | None = None) -> Trellis:
    """Fill beta, reusing ``trellis`` (and its beam masks) when given."""
    if trellis is None:
        trellis = forward(pair, space, jump_model, rewrite_model, beam_fraction,
                          max_summary_phrase_len, ctx)
    else:
        _check_match(pair, trellis, jump_model, rewrite_model)
    return run_backward(trellis)


def _check_match(pair, tr: Trellis, jump_model, rewrite_model):
    if tr.pair_id != pair.pair_id or tr.jump is not jump_model or tr.rewrite is not rewrite_model:
        raise ValueError("trellis was computed for a different pair or different parameters")


# ---------------------------------------------------------------------------
# expected counts


@dataclass
class ExpectedCounts:
    """Posterior event counts of one or more pairs; merge with ``+``."""

    jump: JumpCounts = field(default_factory=JumpCounts)
    tt_idx: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    tt_val: np.ndarray = field(default_factory=lambda: np.zeros(0))
    null_idx: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    null_val: np.ndarray = field(default_factory=lambda: np.zeros(0))
    membership: np.ndarray = field(default_factory=lambda: np.zeros(4))
    eta: dict = field(default_factory=dict)
    segments: float = 0.0
    loglik: float = 0.0
    pairs: int = 0

    def __add__(self, other: "ExpectedCounts") -> "ExpectedCounts":
        eta = dict(self.eta)
        for k in sorted(other.eta):
            m, md = eta.get(k, (0.0, 0.0))
            eta[k] = (m + other.eta[k][0], md + other.eta[k][1])
        return ExpectedCounts(
            jump=self.jump + other.jump,
            tt_idx=None, tt_val=None, null_idx=None, null_val=None,
            membership=self.membership + other.membership,
            eta=eta,
            segments=self.segments + other.segments,
            loglik=self.loglik + other.loglik,
            pairs=self.pairs + other.pairs,
        )._merge_sparse(self, other)

    def _merge_sparse(self, a, b):
        self.tt_idx, self.tt_val = _sparse_sum(np.concatenate([a.tt_idx, b.tt_idx]),
                                               np.concatenate([a.tt_val, b.tt_val]))
        self.null_idx, self.null_val = _sparse_sum(np.concatenate([a.null_idx, b.null_idx]),
                                                   np.concatenate([a.null_val, b.null_val]))
        return self

    def ttable_counts(self, size: int) -> np.ndarray:
        out = np.zeros(size)
        out[self.tt_idx] = self.tt_val
        return out

    def null_counts(self, size: int) -> np.ndarray:
        out = np.zeros(size)
        out[self.null_idx] = self.null_val
        return out


def _sparse_sum(idx: np.ndarray, val: np.ndarray) -> tuple:
    if len(idx) == 0:
        return idx.astype(np.int64), val.astype(float)
    uniq, inv = np.unique(idx, return_inverse=True)
    return uniq, np.bincount(inv, weights=val, minlength=len(uniq))


def segment_posteriors(tr: Trellis) -> tuple:
    """``(gamma, gamma_null)``: posterior of each phrase segment ``(t, k-1, j)`` and null word ``(t, a-1)``."""
    space, N, l = tr.space, tr.num_words, tr.max_summary_phrase_len
    n, P = space.doc_len, space.num_phrases
    tot = tr.total_loglik
    E, En, B = tr.scores.phrase, tr.scores.null, tr.beta
    base = tr.cin[:, space.phrase_start - 1] + tr.lenlog[space.phrase_start - 1][None, :]
    gamma = np.zeros((N, l, P))
    for k in range(1, l + 1):
        if k > N:
            break
        gamma[:N - k + 1, k - 1] = np.exp(base[:N - k + 1] + E[:N - k + 1, k - 1]
                                          + B[k:N + 1, 1:P + 1] - tot)
    gnull = np.exp(tr.nullin + En[:, None] + B[1:N + 1, P + 1:P + 1 + n] - tot)
    return gamma, gnull


def jump_event_counts(tr: Trellis) -> tuple:
    """Expected transitions by (exit position, target position) and (exit position, null anchor)."""
    n, N, tot = tr.space.doc_len, tr.num_words, tr.total_loglik
    cnon = np.zeros((n + 1, n + 1))
    cnull = np.zeros((n + 1, n))
    for t in range(N):
        a = tr.aexit[t][:, None] - tot
        cnon[:, :n] += np.exp(a + tr.to_pos[:, :n] + tr.h[t][None, :])
        cnull += np.exp(a + tr.to_null + tr.hnull[t][None, :])
    cnon[:, n] = np.exp(tr.aexit[N] + tr.to_pos[:, n] - tot)
    return cnon, cnull


def expected_counts(pair, trellis: Trellis, jump_model, rewrite_model,
                    ctx: DocContext | None = None) -> ExpectedCounts:
    _check_match(pair, trellis, jump_model, rewrite_model)
    if trellis.beta is None:
        raise ValueError("expected counts need both forward and backward passes")
    if not trellis.alignable:
        raise UnalignableError(f"pair {pair.pair_id!r} has no alignment with nonzero probability")
    tr = trellis
    if ctx is None:
        ctx = tr.ctx
    cnon, cnull = jump_event_counts(tr)
    jc = JumpCounts()
    jc.add_pair(ctx, cnon, cnull)

    gamma, gnull = segment_posteriors(tr)
    sc = tr.scores
    lam = rewrite_model.lambdas.reshape(4, 1, 1, 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        resp = np.where(sc.mix > 0, lam * sc.components / sc.mix, 0.0)
    weighted = gamma[None] * resp
    membership = weighted.reshape(4, -1).sum(1)

    idx = sc.tables.tt_idx
    rw = weighted[3]
    sel = (idx >= 0) & (rw > 0)
    tt_idx, tt_val = _sparse_sum(idx[sel], rw[sel])

    eta = {}
    wn = weighted[2]
    dist = sc.tables.dist
    for j, sense in enumerate(sc.tables.d_sense):
        if sense is None:
            continue
        finite = np.isfinite(dist[:, :, j])
        if not finite.any():
            continue
        w = wn[:, :, j][finite]
        m = float(w.sum())
        if m > 0:
            md = float((w * dist[:, :, j][finite]).sum())
            old = eta.get(sense, (0.0, 0.0))
            eta[sense] = (old[0] + m, old[1] + md)

    post = gnull.sum(1)
    nidx = sc.tables.null_idx
    if (nidx[post > 0] < 0).any():
        raise ValueError("null emission of a word outside the null vocabulary")
    null_idx, null_val = _sparse_sum(nidx[post > 0], post[post > 0])

    return ExpectedCounts(
        jump=jc, tt_idx=tt_idx, tt_val=tt_val, null_idx=null_idx, null_val=null_val,
        membership=membership, eta=eta, segments=float(gamma.sum() + gnull.sum()),
        loglik=tr.total_loglik, pairs=1,
    )


def transition_posteriors(tr: Trellis) -> dict:
    """Every nonzero transition posterior, keyed ``(source, target, t0, t1)``.

    The target emits summary words ``t0+1..t1``; transitions into the end
    state are keyed ``(source, END, N, N+1)``.  Meant for small instances.
    """
    space, N, l = tr.space, tr.num_words, tr.max_summary_phrase_len
    n, P, S = space.doc_len, space.num_phrases, space.num_states
    A, B, tot = tr.alpha, tr.beta, tr.total_loglik
    E, En = tr.scores.phrase, tr.scores.null
    out = {}
    for t0 in range(N + 1):
        for s in range(S - 1):
            if not np.isfinite(A[t0, s]):
                continue
            src = space.states[s]
            e = src.exit_pos
            if t0 == N:
                v = math.exp(A[t0, s] + tr.to_pos[e, n] - tot)
                if v > 0:
                    out[(src, END, N, N + 1)] = v
                continue
            for j in range(P):
                p = space.phrase_start[j]
                jl = tr.to_pos[e, p - 1] + tr.lenlog[p - 1]
                for k in range(1, min(l, N - t0) + 1):
                    v = math.exp(A[t0, s] + jl + E[t0, k - 1, j] + B[t0 + k, 1 + j] - tot)
                    if v > 0:
                        out[(src, space.states[1 + j], t0, t0 + k)] = v
            for a in range(1, n + 1):
                v = math.exp(A[t0, s] + tr.to_null[e, a - 1] + En[t0] + B[t0 + 1, P + a] - tot)
                if v > 0:
                    out[(src, space.states[P + a], t0, t0 + 1)] = v
    return out


# ---------------------------------------------------------------------------
# Viterbi


@dataclass
class Decoded:
    alignment: AlignmentSet
    score: float
    path: list  # (state, t0, t1) segments in order; t1 = t0 + segment length

    def __iter__(self):
        return iter((self.alignment, self.score))


def viterbi_trellis(tr: Trellis) -> Decoded:
    space, N, l = tr.space, tr.num_words, tr.max_summary_phrase_len
    n, P, S = space.doc_len, space.num_phrases, space.num_states
    by_exit, _ = tr._groups
    E, En = tr.scores.phrase, tr.scores.null
    pstart = space.phrase_start - 1
    plen = tr.lenlog[pstart]
    ids = np.arange(S - 1, dtype=np.int64)
    big = np.iinfo(np.int64).max
    Z = np.full((N + 1, S), NEG_INF)
    Z[0, 0] = 0.0
    bp_s = np.full((N + 1, S), -1, dtype=np.int64)
    bp_t = np.full((N + 1, S), -1, dtype=np.int64)

    def best_source(zexit, zarg, table):
        vals = zexit[:, None] + table
        m = vals.max(axis=0)
        src = np.where(vals == m[None, :], zarg[:, None], big).min(axis=0)
        return m, src

    for t in range(N + 1):
        row = Z[t, :S - 1]
        if tr.beam_fraction is not None:
            row[~_beam_keep(row, tr.beam_fraction)] = NEG_INF
        zexit, zarg = by_exit.argmax(row, ids)
        tr.ops += S - 1
        if t == N:
            m, src = best_source(zexit, zarg, tr.to_pos[:, n:n + 1])
            Z[N, S - 1] = m[0]
            bp_s[N, S - 1], bp_t[N, S - 1] = src[0], N
            break
        mp, srcp = best_source(zexit, zarg, tr.to_pos[:, :n])
        mn, srcn = best_source(zexit, zarg, tr.to_null)
        tr.ops += 2 * (n + 1) * n
        base = mp[pstart] + plen
        for k in range(1, min(l, N - t) + 1):
            cand = base + E[t, k - 1]
            better = cand > Z[t + k, 1:P + 1]
            Z[t + k, 1:P + 1][better] = cand[better]
            bp_s[t + k, 1:P + 1][better] = srcp[pstart][better]
            bp_t[t + k, 1:P + 1][better] = t
            tr.ops += P
        cand = mn + En[t]
        better = cand > Z[t + 1, P + 1:P + 1 + n]
        Z[t + 1, P + 1:P + 1 + n][better] = cand[better]
        bp_s[t + 1, P + 1:P + 1 + n][better] = srcn[better]
        bp_t[t + 1, P + 1:P + 1 + n][better] = t
        tr.ops += n

    score = float(Z[N, S - 1])
    if not np.isfinite(score):
        raise UnalignableError(f"pair {tr.pair_id!r} has no alignment with nonzero probability")
    path = []
    s, t = int(bp_s[N, S - 1]), N
    while s != 0:
        t0 = int(bp_t[t, s])
        path.append((space.states[s], t0, t))
        s, t = int(bp_s[t, s]), t0
    path.reverse()
    return Decoded(path_alignment(tr.pair_id, path), score, path)


def path_alignment(pair_id: str, path) -> AlignmentSet:
    spans = []
    for state, t0, t1 in path:
        if state.kind == "phrase":
            spans.append(span((state.i - 1, state.j - 1), (t0, t1 - 1)))
        elif state.kind == "null":
            spans.append(span(None, (t0, t0)))
    return AlignmentSet(pair_id, tuple(spans))


def viterbi_decode(pair, space: StateSpace, jump_model, rewrite_model,
                   beam_fraction: float | None = 1.0, max_summary_phrase_len: int = 5,
                   ctx: DocContext | None = None, decode: bool = False) -> Decoded:
    """Best path and its alignment; raises :class:`UnalignableError` when no path exists.

    Ties go to the earlier previous boundary, then to the lower state id.
    """
    tr = prepare(pair, space, jump_model, rewrite_model, max_summary_phrase_len, ctx,
                 beam_fraction, decode)
    return viterbi_trellis(tr)


def infer(pair, jump_model, rewrite_model, max_doc_phrase_len: int = 5,
          max_summary_phrase_len: int = 5, beam_fraction: float | None = 1.0,
          ctx: DocContext | None = None) -> Trellis:
    """Forward and backward passes on a fresh state space."""
    space = build_state_space(len(pair.doc_words), max_doc_phrase_len)
    tr = forward(pair, space, jump_model, rewrite_model, beam_fraction, max_summary_phrase_len, ctx)
    return run_backward(tr)


def pair_expected_counts(pair, jump_model, rewrite_model, max_doc_phrase_len: int = 5,
                         max_summary_phrase_len: int = 5, beam_fraction: float | None = 1.0,
                         ctx: DocContext | None = None) -> ExpectedCounts:
    tr = infer(pair, jump_model, rewrite_model, max_doc_phrase_len, max_summary_phrase_len,
               beam_fraction, ctx)
    return expected_counts(pair, tr, jump_model, rewrite_model, ctx)


__all__ = [
    "UnalignableError", "Trellis", "ExpectedCounts", "Decoded", "State", "forward", "backward",
    "expected_counts", "transition_posteriors", "segment_posteriors", "viterbi_decode", "infer",
    "pair_expected_counts", "path_alignment", "jump_event_counts",
]
