import random

import numpy as np
import pytest

from semialign.corpus import make_pair
from semialign.jump import DocContext, RelativeJump
from semialign.rewrite import build_mixture
from semialign.semimarkov import (UnalignableError, backward, expected_counts, forward, infer,
                                  pair_expected_counts, segment_posteriors, transition_posteriors,
                                  viterbi_decode)
from semialign.states import END, START, Null, Phrase, build_state_space
from semialign.synthetic import planted_corpus, PlantedConfig

from instances import random_instance
from oracle import oracle


def _run(inst, beam=1.0):
    pair = inst["pair"]
    space = build_state_space(len(pair.doc_words), inst["L"])
    tr = forward(pair, space, inst["jump"], inst["mixture"], beam, inst["l"], inst["ctx"])
    return space, tr


@pytest.mark.parametrize("seed", range(40))
def test_forward_backward_match_oracle(seed):
    inst = random_instance(seed)
    ref = oracle(inst["pair"], inst["jump"], inst["mixture"], inst["L"], inst["l"], inst["ctx"])
    space, tr = _run(inst)
    assert ref is not None and tr.alignable
    assert tr.total_loglik == pytest.approx(ref["total"], abs=1e-8)
    backward(inst["pair"], space, inst["jump"], inst["mixture"], trellis=tr)
    assert tr.backward_total == pytest.approx(ref["total"], abs=1e-8)


@pytest.mark.parametrize("seed", range(40))
def test_viterbi_matches_oracle(seed):
    inst = random_instance(seed)
    ref = oracle(inst["pair"], inst["jump"], inst["mixture"], inst["L"], inst["l"], inst["ctx"])
    space = build_state_space(len(inst["pair"].doc_words), inst["L"])
    res = viterbi_decode(inst["pair"], space, inst["jump"], inst["mixture"], 1.0, inst["l"], inst["ctx"])
    assert res.score == pytest.approx(ref["best"], abs=1e-8)
    assert tuple(res.path) in [tuple(p) for p in ref["best_ties"]]


@pytest.mark.parametrize("seed", range(40))
def test_transition_posteriors_match_oracle(seed):
    inst = random_instance(seed)
    ref = oracle(inst["pair"], inst["jump"], inst["mixture"], inst["L"], inst["l"], inst["ctx"])
    space, tr = _run(inst)
    backward(inst["pair"], space, inst["jump"], inst["mixture"], trellis=tr)
    tau = transition_posteriors(tr)
    keys = set(tau) | set(ref["tau"])
    for k in keys:
        assert tau.get(k, 0.0) == pytest.approx(ref["tau"].get(k, 0.0), abs=1e-10), k
    gamma, gnull = segment_posteriors(tr)
    assert gamma.sum() + gnull.sum() == pytest.approx(ref["segments"], abs=1e-10)


def test_posteriors_are_a_flow():
    inst = random_instance(3, max_doc=4, max_sum=3)
    space, tr = _run(inst)
    backward(inst["pair"], space, inst["jump"], inst["mixture"], trellis=tr)
    tau = transition_posteriors(tr)
    out_of_start = sum(v for (src, _, _, _), v in tau.items() if src == START)
    into_end = sum(v for (_, tgt, _, _), v in tau.items() if tgt == END)
    assert out_of_start == pytest.approx(1.0, abs=1e-10)
    assert into_end == pytest.approx(1.0, abs=1e-10)


def test_full_beam_equals_unpruned_bitwise():
    corpus = planted_corpus(PlantedConfig(num_pairs=3, doc_len=12, summary_len=6, vocab_size=40, seed=5))
    pair = corpus.pairs[0]
    ctx = DocContext.from_pair(pair)
    mix = build_mixture(corpus.pairs, None, 2, 2)
    jm = RelativeJump.uniform(13)
    space = build_state_space(len(pair.doc_words), 2)
    a = forward(pair, space, jm, mix, 1.0, 2, ctx)
    b = forward(pair, space, jm, mix, None, 2, ctx)
    assert a.total_loglik == b.total_loglik
    assert np.array_equal(a.alpha, b.alpha)
    backward(pair, space, jm, mix, trellis=a)
    backward(pair, space, jm, mix, trellis=b)
    assert np.array_equal(a.beta, b.beta)
    va = viterbi_decode(pair, space, jm, mix, 1.0, 2, ctx)
    vb = viterbi_decode(pair, space, jm, mix, None, 2, ctx)
    assert va.score == vb.score and va.path == vb.path


def test_narrow_beam_is_lower_bound():
    corpus = planted_corpus(PlantedConfig(num_pairs=2, doc_len=12, summary_len=6, vocab_size=40, seed=6))
    pair = corpus.pairs[0]
    mix = build_mixture(corpus.pairs, None, 2, 2)
    jm = RelativeJump.uniform(13)
    space = build_state_space(len(pair.doc_words), 2)
    full = forward(pair, space, jm, mix, None, 2)
    narrow = forward(pair, space, jm, mix, 0.1, 2)
    assert narrow.total_loglik <= full.total_loglik + 1e-12


def test_operation_count_scales_with_factored_cost():
    rng = random.Random(0)
    words = [f"w{k}" for k in range(30)]
    ops = {}
    for n in (10, 20):
        doc = [rng.choice(words) for _ in range(n)]
        pair = make_pair("c", [doc], [doc[:8]])
        mix = build_mixture([pair], None, 1, 1)
        space = build_state_space(n, 1)
        tr = forward(pair, space, RelativeJump.uniform(n + 1), mix, None, 1)
        ops[n] = tr.ops
    # doubling n at fixed L and l should cost close to 4x (quadratic), not 16x
    assert ops[20] / ops[10] < 5.0


def test_unalignable_pair():
    pair = make_pair("u", "a b", "zzz")
    mix = build_mixture([make_pair("other", "a b", "c")], None, 1, 1)
    space = build_state_space(2, 1)
    tr = forward(pair, space, RelativeJump.uniform(3), mix, 1.0, 1)
    assert not tr.alignable
    with pytest.raises(UnalignableError):
        viterbi_decode(pair, space, RelativeJump.uniform(3), mix, 1.0, 1)


def test_decode_floor_rescues_unseen_words():
    pair = make_pair("u", "a b", "zzz")
    mix = build_mixture([make_pair("other", "a b", "c")], None, 1, 1)
    space = build_state_space(2, 1)
    res = viterbi_decode(pair, space, RelativeJump.uniform(3), mix, 1.0, 1, decode=True)
    assert np.isfinite(res.score)
    assert len(res.alignment.spans) == 1


def test_identity_pair_decodes_diagonally():
    pair = make_pair("i", "the cat sat on the mat", "cat sat mat")
    mix = build_mixture([pair], None, 1, 1)
    jm = RelativeJump(7, np.array([1.0] * 7 + [30.0] + [3.0] * 7) / 52.0, 0.05)
    space = build_state_space(6, 1)
    res = viterbi_decode(pair, space, jm, mix, 1.0, 1)
    links = [(sp.doc, sp.summ) for sp in res.alignment.spans]
    assert links == [((1, 1), (0, 0)), ((2, 2), (1, 1)), ((5, 5), (2, 2))]


def test_expected_counts_sum_and_merge():
    inst = random_instance(11)
    pair = inst["pair"]
    c = pair_expected_counts(pair, inst["jump"], inst["mixture"], inst["L"], inst["l"], 1.0, inst["ctx"])
    N = len(pair.summary_words)
    # segment posteriors weighted by length cover every summary word once
    gamma_words = c.membership.sum() + c.null_val.sum()
    tr = infer(pair, inst["jump"], inst["mixture"], inst["L"], inst["l"], 1.0, inst["ctx"])
    gamma, gnull = segment_posteriors(tr)
    lengths = np.arange(1, inst["l"] + 1)[None, :, None]
    assert (gamma * lengths).sum() + gnull.sum() == pytest.approx(N)
    assert gamma_words == pytest.approx(gamma.sum() + gnull.sum())
    both = c + c
    assert both.pairs == 2 and both.loglik == pytest.approx(2 * c.loglik)
    assert np.allclose(both.ttable_counts(len(inst["mixture"].ttable)),
                       2 * c.ttable_counts(len(inst["mixture"].ttable)))


def test_expected_counts_need_backward():
    inst = random_instance(2)
    space, tr = _run(inst)
    with pytest.raises(ValueError):
        expected_counts(inst["pair"], tr, inst["jump"], inst["mixture"])


def test_mismatched_trellis_rejected():
    inst = random_instance(4)
    other = random_instance(5)
    space, tr = _run(inst)
    with pytest.raises(ValueError):
        backward(inst["pair"], space, other["jump"], inst["mixture"], trellis=tr)


def test_state_space_layout():
    space = build_state_space(3, 2)
    assert space.states[0] == START and space.states[-1] == END
    assert [s for s in space.states if s.kind == "phrase"] == [
        Phrase(1, 1), Phrase(1, 2), Phrase(2, 2), Phrase(2, 3), Phrase(3, 3)]
    assert space.index(Null(2)) == space.null_id(2)


def test_pruned_backward_agrees_with_pruned_forward():
    corpus = planted_corpus(PlantedConfig(num_pairs=2, doc_len=12, summary_len=6, vocab_size=40, seed=8))
    pair = corpus.pairs[1]
    mix = build_mixture(corpus.pairs, None, 2, 2)
    jm = RelativeJump.uniform(13)
    space = build_state_space(len(pair.doc_words), 2)
    for f in (0.05, 0.3, 0.7):
        tr = forward(pair, space, jm, mix, f, 2)
        backward(pair, space, jm, mix, trellis=tr)
        assert tr.backward_total == pytest.approx(tr.total_loglik, abs=1e-9)
