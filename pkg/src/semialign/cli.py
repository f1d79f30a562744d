"""Command-line entry points.

Options may also come from a flat ``key=value`` config file (``--config``);
keys are the long option names with dashes or underscores.  Command-line
flags override the file.  Exit codes: 0 success, 1 usage, 2 data error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .alignment import load_alignments, write_alignments
from .corpus import CorpusError, corpus_stats, default_stoplist, load_pairs, load_stoplist
from .corpus import select_extract, write_pairs
from .evaluation import (agreement, alignment_stats, cutpaste_align, evaluate, model1_align,
                         oracle_null_project)
from .hypernyms import load_hypernym_graph
from .jump import JumpError
from .rewrite import PriorSpec, RewriteError
from .semimarkov import UnalignableError
from .trainer import (Models, TrainConfig, TrainingError, decode_corpus, em_train, init_params,
                      latest_checkpoint, load_checkpoint)
from .trees import attach_all, write_parse_file

log = logging.getLogger("semialign")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

# option name -> (type, default); these may appear in a config file
TRAIN_OPTIONS = {
    "pairs": (str, None),
    "parses": (str, None),
    "graph": (str, None),
    "stoplist": (str, None),
    "jump": (str, "syntax"),
    "iterations": (int, 10),
    "beam": (float, 0.5),
    "max_doc_phrase": (int, 5),
    "max_summary_phrase": (int, 5),
    "singleton_fake": (float, 2.0),
    "identity_fake": (float, 4.0),
    "stem_fake": (float, 3.0),
    "jump_smoothing": (float, 0.5),
    "null_smoothing": (float, 0.5),
    "tol": (float, 0.0),
    "workers": (int, 1),
    "seed": (int, 0),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def read_config(path) -> dict:
    """Parse ``key=value`` lines; ``#`` starts a comment."""
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    out = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        k, v = (x.strip() for x in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def resolve(args, names) -> dict:
    """Defaults, then the config file, then explicit flags."""
    conf = read_config(args.config) if getattr(args, "config", None) else {}
    unknown = sorted(set(conf) - set(names))
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    out = {}
    for name in names:
        typ, default = TRAIN_OPTIONS.get(name, (str, None))
        val = getattr(args, name, None)
        if val is None and name in conf:
            try:
                val = typ(conf[name])
            except ValueError:
                raise UsageError(f"config key {name}: bad value {conf[name]!r}") from None
        out[name] = default if val is None else val
    return out


def write_config(values: dict, path) -> None:
    lines = [f"{k}={'' if v is None else v}" for k, v in sorted(values.items())]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _need(values: dict, *names):
    for n in names:
        if not values.get(n):
            raise UsageError(f"missing required option --{n.replace('_', '-')}")


def _stoplist(path):
    return load_stoplist(path) if path else default_stoplist()


def load_corpus(values: dict) -> list:
    pairs = load_pairs(values["pairs"], _stoplist(values.get("stoplist")))
    if values.get("parses"):
        pairs = attach_all(pairs, values["parses"])
    return pairs


def train_config(values: dict) -> TrainConfig:
    try:
        return TrainConfig(
            jump_kind=values["jump"],
            iterations=values["iterations"],
            beam_fraction=values["beam"],
            max_doc_phrase_len=values["max_doc_phrase"],
            max_summary_phrase_len=values["max_summary_phrase"],
            prior=PriorSpec(values["singleton_fake"], values["identity_fake"], values["stem_fake"]),
            jump_smoothing=values["jump_smoothing"],
            null_smoothing=values["null_smoothing"],
            convergence_tol=values["tol"],
            workers=values["workers"],
            seed=values["seed"],
        )
    except (ValueError, RewriteError) as exc:
        raise UsageError(str(exc)) from None


# ---------------------------------------------------------------------------
# subcommands


def cmd_train(args) -> int:
    values = resolve(args, list(TRAIN_OPTIONS))
    _need(values, "pairs")
    if not args.out:
        raise UsageError("missing required option --out")
    config = train_config(values)
    if config.jump_kind == "syntax" and not values["parses"]:
        raise CorpusError("syntax jumps need a parse file (--parses)")
    pairs = load_corpus(values)
    graph = load_hypernym_graph(values["graph"]) if values["graph"] else None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_config(values, out / "config.txt")

    def progress(it, report):
        log.info("iteration %d: objective %.6f", it, report.objective[it - 1])

    _, report = em_train(pairs, config, graph, checkpoint_dir=out, resume=args.resume,
                         progress=progress)
    (out / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    print(f"trained {report.iterations_run} iterations; final objective {report.objective[-1]:.6f}")
    return EXIT_OK


def load_trained(ckpt, iteration=None) -> tuple:
    """Rebuild the training-time structures from ``config.txt`` and load a checkpoint."""
    ckpt = Path(ckpt)
    conf_path = ckpt / "config.txt"
    if not conf_path.is_file():
        raise CorpusError(f"no config.txt in checkpoint directory {ckpt}")
    raw = read_config(conf_path)
    values = {}
    for name, (typ, default) in TRAIN_OPTIONS.items():
        v = raw.get(name, "")
        values[name] = typ(v) if v != "" else default
    config = train_config(values)
    k = iteration if iteration is not None else latest_checkpoint(ckpt)
    if k is None or not (ckpt / f"iter_{k}").is_dir():
        raise CorpusError(f"no checkpoint found in {ckpt}")
    pairs = load_corpus(values)
    graph = load_hypernym_graph(values["graph"]) if values["graph"] else None
    base = init_params(pairs, config, graph)
    models, _ = load_checkpoint(ckpt, k, base)
    return models, config, values


def cmd_align(args) -> int:
    if not args.checkpoint or not args.out:
        raise UsageError("align needs --checkpoint and --out")
    models, config, values = load_trained(args.checkpoint, args.iteration)
    if args.beam is not None:
        config = replace(config, beam_fraction=args.beam)
    if args.pairs:
        pairs = load_pairs(args.pairs, _stoplist(values.get("stoplist")))
        if args.parses:
            pairs = attach_all(pairs, args.parses)
    else:
        pairs = load_corpus(values)
    hyp, bad = decode_corpus(pairs, Models(models.jump, models.rewrite), config)
    for pid in bad:
        print(f"warning: pair {pid} is unalignable; no spans written", file=sys.stderr)
    write_alignments([hyp[k] for k in sorted(hyp)], args.out)
    resolved = dict(values, checkpoint=args.checkpoint, beam=config.beam_fraction,
                    align_pairs=args.pairs or values["pairs"])
    write_config(resolved, str(args.out) + ".config.txt")
    return EXIT_OK


def cmd_eval(args) -> int:
    pairs = load_pairs(args.pairs) if args.pairs else None
    gold = load_alignments(args.gold, pairs)
    hyp = load_alignments(args.hyp, pairs) if Path(args.hyp).stat().st_size else {}
    if args.oracle_null:
        hyp = {k: oracle_null_project(v, gold[k]) if k in gold else v for k, v in hyp.items()}
    stops = _stoplist(args.stoplist) if pairs is not None else frozenset()
    report = evaluate(hyp, gold, pairs, stops)
    print(report.table())
    if report.missing_hypotheses:
        print(f"{len(report.missing_hypotheses)} gold pairs had no hypothesis", file=sys.stderr)
    if args.out:
        Path(args.out).write_text(report.to_json() + "\n", encoding="utf-8")
        write_config({"hyp": args.hyp, "gold": args.gold, "pairs": args.pairs,
                      "stoplist": args.stoplist, "oracle_null": args.oracle_null},
                     str(args.out) + ".config.txt")
    return EXIT_OK


def cmd_stats(args) -> int:
    pairs = load_pairs(args.pairs, _stoplist(args.stoplist))
    stats = corpus_stats(pairs)
    print(stats.table())
    data = {"corpus": stats.__dict__}
    if args.gold:
        gold = load_alignments(args.gold, pairs)
        data["alignments"] = alignment_stats(gold, pairs)
        for k, v in data["alignments"].items():
            print(f"{k:<24} {v if v is None or isinstance(v, int) else f'{v:.3f}'}")
    if args.out:
        Path(args.out).write_text(json.dumps(data, indent=2, sort_keys=True, default=list) + "\n",
                                  encoding="utf-8")
    return EXIT_OK


def cmd_agreement(args) -> int:
    pairs = load_pairs(args.pairs)
    a = load_alignments(args.a, pairs)
    b = load_alignments(args.b, pairs)
    res = agreement(a, b, pairs, _stoplist(args.stoplist), sure_only=args.labels == "sure")

    def f(x):
        return "undefined" if x is None else f"{x:.4f}"

    print(f"kappa (all words)      {f(res['kappa_all'])}")
    print(f"kappa (no stop words)  {f(res['kappa_non_stop'])}")
    if args.out:
        Path(args.out).write_text(json.dumps(res, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_cutpaste(args) -> int:
    pairs = load_pairs(args.pairs)
    write_alignments([cutpaste_align(p, args.n) for p in sorted(pairs, key=lambda p: p.pair_id)],
                     args.out)
    return EXIT_OK


def cmd_model1(args) -> int:
    pairs = load_pairs(args.pairs)
    res = model1_align(pairs, args.iterations)
    write_alignments([res[k] for k in sorted(res)], args.out)
    return EXIT_OK


def cmd_extract(args) -> int:
    pairs = load_pairs(args.pairs)
    if args.parses:
        pairs = attach_all(pairs, args.parses)
    out = [select_extract(p, args.k) for p in pairs]
    write_pairs(out, args.out)
    if args.parses_out:
        write_parse_file(out, args.parses_out)
    print(f"wrote {len(out)} approximate extracts (k={args.k})")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="semialign", description=__doc__.split("\n\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    tr = sub.add_parser("train", help="MAP-EM training with per-iteration checkpoints")
    tr.add_argument("--config")
    tr.add_argument("--out", help="checkpoint directory")
    tr.add_argument("--resume", action="store_true")
    for name, (typ, default) in TRAIN_OPTIONS.items():
        flag = "--" + name.replace("_", "-")
        kw = {"choices": ("relative", "gaussian", "syntax")} if name == "jump" else {}
        tr.add_argument(flag, dest=name, type=typ, default=None,
                        help=f"default: {default}", **kw)
    tr.set_defaults(func=cmd_train)

    al = sub.add_parser("align", help="Viterbi-decode pairs with a trained checkpoint")
    al.add_argument("--checkpoint")
    al.add_argument("--iteration", type=int)
    al.add_argument("--pairs", help="pairs to decode (default: the training pairs)")
    al.add_argument("--parses")
    al.add_argument("--beam", type=float)
    al.add_argument("--out")
    al.set_defaults(func=cmd_align)

    ev = sub.add_parser("eval", help="SoftP / Recall / SoftF against gold alignments")
    ev.add_argument("--hyp", required=True)
    ev.add_argument("--gold", required=True)
    ev.add_argument("--pairs", help="token file; enables the non-stop section")
    ev.add_argument("--stoplist")
    ev.add_argument("--oracle-null", action="store_true")
    ev.add_argument("--out")
    ev.set_defaults(func=cmd_eval)

    st = sub.add_parser("stats", help="corpus statistics")
    st.add_argument("--pairs", required=True)
    st.add_argument("--gold")
    st.add_argument("--stoplist")
    st.add_argument("--out")
    st.set_defaults(func=cmd_stats)

    ag = sub.add_parser("agreement", help="kappa between two annotations")
    ag.add_argument("--a", required=True)
    ag.add_argument("--b", required=True)
    ag.add_argument("--pairs", required=True)
    ag.add_argument("--stoplist")
    ag.add_argument("--labels", choices=("sure", "all"), default="sure")
    ag.add_argument("--out")
    ag.set_defaults(func=cmd_agreement)

    cp = sub.add_parser("baseline-cutpaste", help="greedy longest-block baseline")
    cp.add_argument("--pairs", required=True)
    cp.add_argument("--n", type=int, default=2)
    cp.add_argument("--out", required=True)
    cp.set_defaults(func=cmd_cutpaste)

    m1 = sub.add_parser("baseline-model1", help="word-based Model 1 baseline")
    m1.add_argument("--pairs", required=True)
    m1.add_argument("--iterations", type=int, default=5)
    m1.add_argument("--out", required=True)
    m1.set_defaults(func=cmd_model1)

    ex = sub.add_parser("extract", help="keep the k best-overlapping document sentences per summary sentence")
    ex.add_argument("--pairs", required=True)
    ex.add_argument("--parses")
    ex.add_argument("--k", type=int, default=3)
    ex.add_argument("--out", required=True)
    ex.add_argument("--parses-out")
    ex.set_defaults(func=cmd_extract)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(message)s")
        if not getattr(args, "func", None):
            raise UsageError("a subcommand is required")
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CorpusError, TrainingError, OSError, KeyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (UnalignableError, JumpError, RewriteError, FloatingPointError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
