"""MAP-EM training of the jump and rewrite models over a corpus."""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import jump as jumpmod
from .jump import DocContext, init_jump, load_jump, save_jump
from .rewrite import (PriorSpec, RewriteMixture, build_mixture, estimate_eta, load_rewrite,
                      null_reestimate, reestimate_lambdas, reestimate_ttable, save_rewrite,
                      ttable_log_prior)
from .semimarkov import ExpectedCounts, expected_counts, forward, run_backward, viterbi_decode
from .states import build_state_space

log = logging.getLogger(__name__)

JUMP_KINDS = ("relative", "gaussian", "syntax")


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    jump_kind: str = "syntax"
    iterations: int = 10
    beam_fraction: float = 1.0
    max_doc_phrase_len: int = 5
    max_summary_phrase_len: int = 5
    prior: PriorSpec = PriorSpec()
    jump_smoothing: float = 0.5   # add-k pseudo-counts on the jump table / tag table
    null_smoothing: float = 0.5   # add-k pseudo-counts on the null-emission table
    init_null_prob: float = 0.1
    init_eta: float = 1.0
    convergence_tol: float = 0.0  # stop once the objective gains less than this; 0 runs every iteration
    workers: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.jump_kind not in JUMP_KINDS:
            raise ValueError(f"jump_kind must be one of {JUMP_KINDS}")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.max_doc_phrase_len < 1 or self.max_summary_phrase_len < 1:
            raise ValueError("phrase length bounds must be >= 1")
        if not 0 < self.beam_fraction <= 1:
            raise ValueError("beam_fraction must lie in (0, 1]")
        if not 0 < self.init_null_prob < 1:
            raise ValueError("init_null_prob must lie in (0, 1)")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    @classmethod
    def ml_only(cls, **kw) -> "TrainConfig":
        """No Dirichlet fake counts and no smoothing: plain maximum likelihood."""
        return cls(prior=PriorSpec.none(), jump_smoothing=0.0, null_smoothing=0.0, **kw)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["prior"] = asdict(self.prior)
        return out


@dataclass
class Models:
    jump: object
    rewrite: RewriteMixture


@dataclass
class TrainReport:
    loglik: list = field(default_factory=list)      # entry k: parameters after k M-steps
    objective: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    unalignable: list = field(default_factory=list)  # per iteration: skipped pair ids
    iterations_run: int = 0
    converged: bool = False
    config: dict = field(default_factory=dict)

    def monotone(self, slack: float = 1e-9) -> bool:
        return all(b >= a - slack for a, b in zip(self.objective, self.objective[1:]))

    def to_json(self, timing: bool = False) -> str:
        """JSON text; wall-clock times are left out unless ``timing`` is set."""
        data = asdict(self)
        if not timing:
            data.pop("seconds")
        return json.dumps(data, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TrainReport":
        data = json.loads(text)
        return cls(**{f.name: data[f.name] for f in fields(cls) if f.name in data})


# ---------------------------------------------------------------------------
# initialization


def _labels(pairs) -> list:
    labels = set()
    for p in pairs:
        ctx = DocContext.from_pair(p)
        if not ctx.has_parses:
            raise TrainingError(f"syntax jumps need parses; pair {p.pair_id!r} has none")
        labels |= ctx.tag_set()
    return sorted(labels)


def jump_window(pairs) -> int:
    return max(len(p.doc_words) for p in pairs) + 1


def init_params(pairs, config: TrainConfig, graph=None) -> Models:
    """Uniform jumps and interpolation weights; t-table rows start at the prior's posterior mean
    around a uniform row (see :func:`semialign.rewrite.initial_ttable`)."""
    pairs = list(pairs)
    if not pairs:
        raise TrainingError("empty corpus")
    labels = _labels(pairs) if config.jump_kind == "syntax" else ()
    jm = init_jump(config.jump_kind, jump_window(pairs), config.init_null_prob, labels)
    mix = build_mixture(pairs, graph, config.max_doc_phrase_len, config.max_summary_phrase_len,
                        config.prior, config.init_eta)
    return Models(jm, mix)


# ---------------------------------------------------------------------------
# E-step


def _pair_counts(pair, ctx, models: Models, config: TrainConfig):
    space = build_state_space(len(pair.doc_words), config.max_doc_phrase_len)
    tr = forward(pair, space, models.jump, models.rewrite, config.beam_fraction,
                 config.max_summary_phrase_len, ctx)
    if not tr.alignable:
        return None
    run_backward(tr)
    return expected_counts(pair, tr, models.jump, models.rewrite, ctx)


def _chunk_counts(args):
    pairs, ctxs, models, config = args
    return [_pair_counts(p, c, models, config) for p, c in zip(pairs, ctxs)]


def e_step(pairs, ctxs, models: Models, config: TrainConfig, pool=None) -> tuple:
    """Sum per-pair counts in sorted pair-id order (independent of worker count).

    Returns ``(counts, unalignable_ids)``.
    """
    order = sorted(range(len(pairs)), key=lambda k: pairs[k].pair_id)
    if pool is None:
        per = [_pair_counts(pairs[k], ctxs[k], models, config) for k in order]
    else:
        w = config.workers
        chunks = [order[i::w] for i in range(w)]
        jobs = [([pairs[k] for k in ch], [ctxs[k] for k in ch], models, config) for ch in chunks]
        res = {}
        for ch, out in zip(chunks, pool.map(_chunk_counts, jobs)):
            res.update(zip(ch, out))
        per = [res[k] for k in order]
    total = ExpectedCounts()
    bad = []
    for k, c in zip(order, per):
        if c is None:
            bad.append(pairs[k].pair_id)
            log.warning("pair %s is unalignable under the current parameters; skipped", pairs[k].pair_id)
        else:
            total = total + c
    return total, bad


# ---------------------------------------------------------------------------
# M-step and objective


def m_step(counts: ExpectedCounts, models: Models, config: TrainConfig, window: int,
           labels=None) -> Models:
    mix = models.rewrite
    jm = jumpmod.reestimate(config.jump_kind, counts.jump, prev=models.jump,
                            smoothing=config.jump_smoothing, window=window, labels=labels)
    tt = reestimate_ttable(mix.ttable, counts.ttable_counts(len(mix.ttable)), config.prior)
    lambdas = reestimate_lambdas(counts.membership)
    eta = mix.eta
    if mix.wn is not None and counts.eta:
        eta = estimate_eta(counts.eta, mix.wn.histogram, prev_eta=mix.eta)
    nulls = null_reestimate(counts.null_counts(len(mix.null_probs)), config.null_smoothing)
    return Models(jm, mix.replace(lambdas=lambdas, eta=eta, ttable=tt, null_probs=nulls))


def log_prior(models: Models, config: TrainConfig) -> float:
    """Log prior density of all parameters (constants dropped)."""
    out = ttable_log_prior(models.rewrite.ttable, config.prior)
    out += jumpmod.log_prior(models.jump, config.jump_smoothing)
    if config.null_smoothing:
        with np.errstate(divide="ignore"):
            out += config.null_smoothing * float(np.log(models.rewrite.null_probs).sum())
    return out


def corpus_loglik(pairs, ctxs, models: Models, config: TrainConfig) -> tuple:
    total, bad = 0.0, []
    for k in sorted(range(len(pairs)), key=lambda k: pairs[k].pair_id):
        p = pairs[k]
        space = build_state_space(len(p.doc_words), config.max_doc_phrase_len)
        tr = forward(p, space, models.jump, models.rewrite, config.beam_fraction,
                     config.max_summary_phrase_len, ctxs[k])
        if tr.alignable:
            total += tr.total_loglik
        else:
            bad.append(p.pair_id)
    return total, bad


def map_objective(pairs, models: Models, config: TrainConfig, ctxs=None) -> float:
    """Sum of pair log-likelihoods plus the log prior; equals the log-likelihood when every prior is zero."""
    pairs = list(pairs)
    ctxs = ctxs or [DocContext.from_pair(p) for p in pairs]
    ll, _ = corpus_loglik(pairs, ctxs, models, config)
    return ll + log_prior(models, config)


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(directory, k: int, models: Models, report: TrainReport, config: TrainConfig):
    d = Path(directory) / f"iter_{k}"
    d.mkdir(parents=True, exist_ok=True)
    save_jump(models.jump, d / "jump.tsv")
    save_rewrite(models.rewrite, d / "rewrite.tsv", config.prior)
    (d / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    (d / "timing.json").write_text(json.dumps({"seconds": report.seconds}) + "\n", encoding="utf-8")


def latest_checkpoint(directory) -> int | None:
    d = Path(directory)
    if not d.is_dir():
        return None
    ks = [int(p.name[5:]) for p in d.glob("iter_*") if p.name[5:].isdigit()
          and (p / "report.json").is_file()]
    return max(ks) if ks else None


def load_checkpoint(directory, k: int, base: Models) -> tuple:
    d = Path(directory) / f"iter_{k}"
    jm = load_jump(d / "jump.tsv")
    mix = load_rewrite(d / "rewrite.tsv", base.rewrite)
    report = TrainReport.from_json((d / "report.json").read_text(encoding="utf-8"))
    if (d / "timing.json").is_file():
        report.seconds = json.loads((d / "timing.json").read_text(encoding="utf-8"))["seconds"]
    return Models(jm, mix), report


# ---------------------------------------------------------------------------
# training loop


def em_train(pairs, config: TrainConfig, graph=None, checkpoint_dir=None, resume: bool = False,
             progress=None) -> tuple:
    """Run MAP-EM.  Returns ``(models, report)``.

    ``report.objective[k]`` is the MAP objective of the parameters after
    ``k`` M-steps, so the list has ``iterations + 1`` entries after a full
    run.  Iteration ``k`` is checkpointed as ``iter_k``.
    """
    pairs = sorted(pairs, key=lambda p: p.pair_id)
    if not pairs:
        raise TrainingError("empty corpus")
    ctxs = [DocContext.from_pair(p) for p in pairs]
    models = init_params(pairs, config, graph)
    labels = _labels(pairs) if config.jump_kind == "syntax" else None
    window = jump_window(pairs)
    report = TrainReport(config=config.to_dict())
    start = 1
    if resume and checkpoint_dir is not None:
        k = latest_checkpoint(checkpoint_dir)
        if k is not None:
            models, report = load_checkpoint(checkpoint_dir, k, models)
            report.config = config.to_dict()
            start = k + 1
            log.info("resumed from %s/iter_%d", checkpoint_dir, k)

    pool = ProcessPoolExecutor(config.workers) if config.workers > 1 else None
    try:
        for it in range(start, config.iterations + 1):
            if report.converged:
                break
            t0 = time.perf_counter()
            counts, bad = e_step(pairs, ctxs, models, config, pool)
            if counts.pairs == 0:
                raise TrainingError("no pair is alignable under the current parameters")
            obj = counts.loglik + log_prior(models, config)
            if len(report.objective) < it:
                report.loglik.append(counts.loglik)
                report.objective.append(obj)
            models = m_step(counts, models, config, window, labels)
            report.unalignable.append(bad)
            report.seconds.append(time.perf_counter() - t0)
            report.iterations_run = it
            if it == config.iterations:
                ll, _ = corpus_loglik(pairs, ctxs, models, config)
                report.loglik.append(ll)
                report.objective.append(ll + log_prior(models, config))
            if len(report.objective) >= 2 and config.convergence_tol > 0:
                if report.objective[-1] - report.objective[-2] < config.convergence_tol:
                    report.converged = True
            if checkpoint_dir is not None:
                save_checkpoint(checkpoint_dir, it, models, report, config)
            if progress:
                progress(it, report)
    finally:
        if pool is not None:
            pool.shutdown()
    return models, report


def decode_corpus(pairs, models: Models, config: TrainConfig, decode: bool = True) -> tuple:
    """Viterbi alignments in pair-id order; returns ``(alignments, unalignable_ids)``."""
    from .semimarkov import UnalignableError

    out, bad = {}, []
    for p in sorted(pairs, key=lambda p: p.pair_id):
        space = build_state_space(len(p.doc_words), config.max_doc_phrase_len)
        try:
            res = viterbi_decode(p, space, models.jump, models.rewrite, config.beam_fraction,
                                 config.max_summary_phrase_len, decode=decode)
        except UnalignableError:
            bad.append(p.pair_id)
            continue
        out[p.pair_id] = res.alignment
    return out, bad


__all__ = ["TrainConfig", "TrainReport", "Models", "init_params", "em_train", "map_objective",
           "e_step", "m_step", "log_prior", "decode_corpus", "save_checkpoint", "load_checkpoint",
           "latest_checkpoint", "TrainingError"]
