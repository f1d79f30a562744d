import json

import numpy as np
import pytest

from semialign.corpus import make_pair
from semialign.jump import RelativeJump
from semialign.trainer import (TrainConfig, TrainingError, TrainReport, decode_corpus, em_train,
                               init_params, load_checkpoint, map_objective)
from semialign.synthetic import planted_corpus, styled_corpus, PlantedConfig


def small():
    return styled_corpus("identity", num_pairs=12, seed=2)


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(jump_kind="bogus")
    with pytest.raises(ValueError):
        TrainConfig(beam_fraction=0)
    with pytest.raises(ValueError):
        TrainConfig(iterations=0)
    ml = TrainConfig.ml_only(jump_kind="relative")
    assert ml.prior.is_zero and ml.jump_smoothing == 0 and ml.null_smoothing == 0


def test_syntax_needs_parses():
    pairs = [make_pair("a", "x y", "x")]
    with pytest.raises(TrainingError):
        init_params(pairs, TrainConfig(jump_kind="syntax"))


def test_initial_lambdas_uniform():
    c = small()
    m = init_params(c.pairs, TrainConfig(jump_kind="relative", max_doc_phrase_len=1,
                                         max_summary_phrase_len=1))
    assert np.allclose(m.rewrite.lambdas, 0.25)


@pytest.mark.parametrize("kind", ["relative", "gaussian", "syntax"])
def test_objective_monotone(kind):
    c = small()
    cfg = TrainConfig(jump_kind=kind, iterations=4, max_doc_phrase_len=2, max_summary_phrase_len=2)
    models, report = em_train(c.pairs, cfg)
    assert len(report.objective) == cfg.iterations + 1
    assert report.monotone(1e-9), report.objective
    assert report.objective[-1] == pytest.approx(map_objective(c.pairs, models, cfg), abs=1e-6)


def test_ml_only_objective_is_loglik():
    c = small()
    cfg = TrainConfig.ml_only(jump_kind="relative", iterations=3, max_doc_phrase_len=1,
                              max_summary_phrase_len=1)
    _, report = em_train(c.pairs, cfg)
    assert report.objective == report.loglik
    assert report.monotone(1e-9)


def test_forward_bias_learned():
    c = planted_corpus(PlantedConfig(num_pairs=30, doc_len=16, summary_len=8, vocab_size=150,
                                     forward_rate=0.9, backward_rate=0.02, null_rate=0.05, seed=4))
    cfg = TrainConfig(jump_kind="relative", iterations=3, max_doc_phrase_len=1,
                      max_summary_phrase_len=1)
    models, _ = em_train(c.pairs, cfg)
    jm = models.jump
    assert isinstance(jm, RelativeJump)
    assert np.argmax(jm.probs) == jm.window + 1


def test_resume_matches_uninterrupted(tmp_path):
    c = small()
    cfg = TrainConfig(jump_kind="relative", iterations=3, max_doc_phrase_len=1,
                      max_summary_phrase_len=1)
    full, rep_full = em_train(c.pairs, cfg, checkpoint_dir=tmp_path / "a")
    short = TrainConfig(jump_kind="relative", iterations=2, max_doc_phrase_len=1,
                        max_summary_phrase_len=1)
    em_train(c.pairs, short, checkpoint_dir=tmp_path / "b")
    resumed, rep_res = em_train(c.pairs, cfg, checkpoint_dir=tmp_path / "b", resume=True)
    assert rep_res.objective == rep_full.objective
    assert np.array_equal(resumed.rewrite.ttable.probs, full.rewrite.ttable.probs)
    for name in ("jump.tsv", "rewrite.tsv", "report.json"):
        assert (tmp_path / "a" / "iter_3" / name).read_bytes() == \
            (tmp_path / "b" / "iter_3" / name).read_bytes()
    base = init_params(c.pairs, cfg)
    loaded, rep = load_checkpoint(tmp_path / "a", 3, base)
    assert np.array_equal(loaded.rewrite.ttable.probs, full.rewrite.ttable.probs)
    assert len(rep.seconds) == 3


def test_report_json_has_no_timing():
    rep = TrainReport(loglik=[1.0], objective=[1.0], seconds=[0.5])
    assert "seconds" not in json.loads(rep.to_json())
    assert json.loads(rep.to_json(timing=True))["seconds"] == [0.5]


def test_decode_corpus():
    c = small()
    cfg = TrainConfig(jump_kind="relative", iterations=2, max_doc_phrase_len=1,
                      max_summary_phrase_len=1)
    models, _ = em_train(c.pairs, cfg)
    hyp, bad = decode_corpus(c.pairs, models, cfg)
    assert not bad and sorted(hyp) == sorted(p.pair_id for p in c.pairs)
