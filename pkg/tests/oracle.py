"""Exhaustive enumeration of every path through the semi-HMM of a tiny pair.

Independent of the dynamic programs: it only uses the scalar
``jump_logprob`` and ``rewrite_logprob`` functions.
"""

import math

import numpy as np

from semialign.jump import DocContext, jump_logprob
from semialign.rewrite import rewrite_logprob
from semialign.states import END, START, Null, Phrase


def enumerate_paths(pair, jump_model, mixture, max_doc_phrase_len, max_summary_phrase_len, ctx=None):
    """Yield ``(logprob, segments)`` for every path with nonzero probability.

    ``segments`` is a tuple of ``(state, t0, t1)``; the state emits summary
    words ``t0+1..t1``.
    """
    ctx = ctx or DocContext.from_pair(pair)
    d = pair.doc_words
    s = pair.summary_words
    n, N = len(d), len(s)
    targets = [Phrase(i, j) for i in range(1, n + 1)
               for j in range(i, min(n, i + max_doc_phrase_len - 1) + 1)]
    targets += [Null(a) for a in range(1, n + 1)]

    def rec(prev, t, logp, segs):
        if t == N:
            lp = logp + jump_logprob(jump_model, prev, END, ctx, max_doc_phrase_len)
            if lp > -math.inf:
                yield lp, tuple(segs)
            return
        for st in targets:
            lens = [1] if st.kind == "null" else range(1, min(max_summary_phrase_len, N - t) + 1)
            for k in lens:
                jl = jump_logprob(jump_model, prev, st, ctx, max_doc_phrase_len)
                if jl == -math.inf:
                    continue
                dph = None if st.kind == "null" else tuple(d[st.i - 1:st.j])
                rl = rewrite_logprob(mixture, tuple(s[t:t + k]), dph)
                if rl == -math.inf:
                    continue
                yield from rec(st, t + k, logp + jl + rl, segs + [(st, t, t + k)])

    yield from rec(START, 0, 0.0, [])


def oracle(pair, jump_model, mixture, max_doc_phrase_len, max_summary_phrase_len, ctx=None):
    """Total, best score, best path, transition posteriors and segment expectations."""
    paths = list(enumerate_paths(pair, jump_model, mixture, max_doc_phrase_len,
                                 max_summary_phrase_len, ctx))
    if not paths:
        return None
    lps = np.array([lp for lp, _ in paths])
    m = lps.max()
    total = m + math.log(np.exp(lps - m).sum())
    best_lp, best_path = max(paths, key=lambda x: x[0])
    tau = {}
    seg_expect = 0.0
    boundary = {}
    N = len(pair.summary_words)
    for lp, segs in paths:
        w = math.exp(lp - total)
        prev = START
        for st, t0, t1 in segs:
            key = (prev, st, t0, t1)
            tau[key] = tau.get(key, 0.0) + w
            boundary[t1] = boundary.get(t1, 0.0) + w
            prev = st
        key = (prev, END, N, N + 1)
        tau[key] = tau.get(key, 0.0) + w
        seg_expect += w * len(segs)
    ties = [p for lp, p in paths if lp == best_lp]
    return {
        "total": total, "best": best_lp, "best_path": best_path, "best_ties": ties,
        "tau": tau, "segments": seg_expect, "boundary": boundary, "num_paths": len(paths),
    }
