"""Random tiny instances with random normalized parameters."""

import random

import numpy as np

from semialign.corpus import make_pair
from semialign.jump import DocContext, GaussianJump, RelativeJump, SyntaxJump
from semialign.rewrite import build_mixture
from semialign.synthetic import toy_graph, with_random_parses

WORDS = ["a", "b", "walk", "walked", "dog", "hound", "cat", "animal"]


def random_jump(kind, n, rng, ctx):
    null = rng.uniform(0.05, 0.5)
    if kind == "relative":
        w = n + 1
        probs = np.array([rng.uniform(0.05, 1.0) for _ in range(2 * w + 1)])
        return RelativeJump(w, probs / probs.sum(), null)
    if kind == "gaussian":
        return GaussianJump(rng.uniform(-1.5, 2.5), rng.uniform(0.3, 6.0), null, n + 1)
    tags = sorted({f"{lab}-{d}" for lab in ctx.tag_set() for d in "fb"})
    p = np.array([rng.uniform(0.05, 1.0) for _ in tags])
    return SyntaxJump({t: float(x) for t, x in zip(tags, p / p.sum())}, null)


def random_instance(seed, max_doc=4, max_sum=3, kind=None):
    rng = random.Random(seed)
    n = rng.randint(1, max_doc)
    N = rng.randint(1, max_sum)
    doc = [rng.choice(WORDS) for _ in range(n)]
    summ = [rng.choice(WORDS) for _ in range(N)]
    pair = with_random_parses(make_pair(f"r{seed}", [doc], [summ]), rng)
    L = rng.randint(1, 2)
    l = rng.randint(1, 2)
    kind = kind or rng.choice(["relative", "gaussian", "syntax"])
    ctx = DocContext.from_pair(pair)
    jump = random_jump(kind, n, rng, ctx)
    mix = build_mixture([pair], toy_graph(), L, l, eta=rng.uniform(0.2, 3.0))
    nrng = np.random.default_rng(seed)
    lam = nrng.dirichlet(np.ones(4))
    tt = mix.ttable
    raw = nrng.uniform(0.05, 1.0, len(tt))
    probs = raw / tt.row_sums(raw)[tt.rows]
    nulls = nrng.uniform(0.05, 1.0, len(mix.null_probs))
    mix = mix.replace(lambdas=lam, ttable=tt.with_probs(probs), null_probs=nulls / nulls.sum())
    return dict(pair=pair, jump=jump, mixture=mix, L=L, l=l, ctx=ctx, kind=kind)
