"""``distag`` command line: one subcommand per pipeline step plus the synthetic corpus.

Exit status is 0 on success, 1 on a usage error and 2 on a data or format error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .. import corpus_io, pipeline
from ..aligner import ParallelPair, best_alignment, em_train, load_table, save_table
from ..errors import DataError, DistagError
from ..evaluator import error_listing, score
from ..labeler import TrainConfig, build_vocab, init_model, load_checkpoint, save_checkpoint
from ..projector import TaggedModernSentence, project_corpus
from ..tagset import HybridTagSet, PosTagSet
from . import synth

log = logging.getLogger("distag")


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _pairs(parallel):
    return [ParallelPair(modern.split(), list(ancient)) for ancient, modern in parallel]


def _tagset(path):
    return HybridTagSet(PosTagSet.load(path)) if path else HybridTagSet.default()


def _read_labels(path):
    """Gold or predicted tag sequences from a char_tags or tagged_words file."""
    with open(path, encoding="utf-8") as f:
        first = next((line for line in f if line.strip()), "")
    if "\t" in first:
        return [(s.chars, list(s.tags)) for s in corpus_io.read_char_tags(path)]
    return pipeline.as_labeled(corpus_io.read_tagged_words(path))


# --- subcommands ---------------------------------------------------------------

def cmd_align(args):
    pairs = _pairs(corpus_io.read_parallel(args.parallel))
    table = em_train(pairs, args.iters, args.smoothing, args.distortion)
    save_table(table, args.out)
    if args.links:
        with open(args.links, "w", encoding="utf-8", newline="\n") as f:
            for p in pairs:
                links = best_alignment(p, table, args.tau).links
                f.write(" ".join("-" if x is None else str(x) for x in links) + "\n")
    print(json.dumps({"pairs": len(pairs), "log_likelihood": table.log_likelihood[-1]}))


def cmd_project(args):
    pairs = _pairs(corpus_io.read_parallel(args.parallel))
    moderns = [TaggedModernSentence(s) for s in corpus_io.read_tagged_words(args.modern)]
    out, report = project_corpus(pairs, moderns, load_table(args.table), corpus_io.load_pos_map(args.dict), args.tau)
    corpus_io.write_char_tags(out, args.out)
    print(json.dumps(report.to_dict(), ensure_ascii=False, sort_keys=True))


def cmd_train(args):
    if not args.projected and not args.annotated:
        raise UsageError("train needs --projected, --annotated or both")
    dev = None
    if args.annotated:
        train_words, dev_words = pipeline.split_annotated(corpus_io.read_tagged_words(args.annotated))
        dev = pipeline.as_labeled(dev_words)
    if args.projected:
        items = [(s.chars, s.tags) for s in corpus_io.read_char_tags(args.projected)]
        items = pipeline.subsample(items, args.ratio_projected, args.seed)
        stage = "stage1"
    else:
        items = pipeline.as_labeled(pipeline.subsample(train_words, args.ratio_annotated, args.seed + 1))
        stage = "stage2"
    overrides = corpus_io.read_json(args.config) if args.config else {}
    select = {"select": "wsg"} if args.task == "wsg" else {}
    cfg = TrainConfig.from_dict({"seed": args.seed, **pipeline.STAGE_DEFAULTS[stage], **select, **overrides})
    if args.init:
        model = load_checkpoint(args.init)
    else:
        chars = [c for c, _ in items] + [c for c, _ in dev or []]
        model = init_model(_tagset(args.pos_tags), build_vocab(chars), seed=args.seed)
    data = [(c, pipeline.collapse_task(t, args.task, model.tagset)) for c, t in items]
    state = pipeline.PipelineState(pipeline.PipelineConfig(seed=args.seed))
    model = pipeline.run_stage(model, data, cfg, dev, state, "model", "init" if args.init else None,
                               args.projected or args.annotated)
    save_checkpoint(model, args.out)
    print(json.dumps(state.provenance()["model"], sort_keys=True))


def cmd_relabel(args):
    model = load_checkpoint(args.model)
    out = pipeline.relabel(model, [chars for chars, _ in _read_labels(args.data)])
    corpus_io.write_char_tags(out, args.out)


def cmd_evaluate(args):
    gold, pred = _read_labels(args.gold), _read_labels(args.pred)
    if len(gold) != len(pred):
        raise DataError(f"{len(gold)} gold sentences but {len(pred)} predicted")
    for i, ((gc, _), (pc, _)) in enumerate(zip(gold, pred)):
        if tuple(gc) != tuple(pc):
            raise DataError(f"sentence {i + 1}: gold and predicted characters differ")
    metrics = score([t for _, t in gold], [t for _, t in pred], args.mode)
    text = metrics.to_json()
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    if args.diff:
        chars = [c for c, _ in gold]
        Path(args.diff).write_text(error_listing(chars, [t for _, t in gold], [t for _, t in pred]),
                                   encoding="utf-8")


def cmd_pipeline(args):
    cfg = pipeline.PipelineConfig.load(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out is not None:
        changes["out"] = args.out
    if args.task is not None:
        changes["stage1_task"] = args.task
    if args.ratio_annotated is not None:
        changes["ratio_annotated"] = args.ratio_annotated
    if args.ratio_projected is not None:
        changes["ratio_projected"] = args.ratio_projected
    cfg = replace(cfg, **changes)
    state = pipeline.run_full(cfg)
    sys.stdout.write(pipeline.metrics_report(state))


def cmd_synth(args):
    cfg = synth.load_synth_config(args.config) if args.config else synth.SynthConfig()
    changes = {"seed": args.seed}
    for name in ("pairs", "annotated", "noise", "test_a", "test_b"):
        value = getattr(args, name)
        if value is not None:
            changes[name] = value
    cfg = replace(cfg, **changes)
    synth.write_corpus(synth.generate(cfg), cfg, args.out)


def build_parser() -> Parser:
    p = Parser(prog="distag", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=Parser)

    a = sub.add_parser("align", help="train IBM Model 1 and write the translation table")
    a.add_argument("--parallel", required=True)
    a.add_argument("--iters", type=int, default=10)
    a.add_argument("--smoothing", type=float, default=1e-6)
    a.add_argument("--distortion", action="store_true", help="add the Model 2 position table")
    a.add_argument("--tau", type=float, default=0.0)
    a.add_argument("--links", help="also write best alignment links per pair")
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_align)

    a = sub.add_parser("project", help="project modern POS onto ancient characters")
    a.add_argument("--parallel", required=True)
    a.add_argument("--modern", required=True, help="tagged modern sentences")
    a.add_argument("--table", required=True)
    a.add_argument("--dict", help="POS mapping table (default: built-in)")
    a.add_argument("--tau", type=float, default=0.0)
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_project)

    a = sub.add_parser("train", help="train one stage")
    a.add_argument("--projected", help="char_tags training data (projected or relabeled)")
    a.add_argument("--annotated", help="gold tagged words; first nine tenths train, rest dev")
    a.add_argument("--init", help="starting checkpoint (default: fresh model)")
    a.add_argument("--task", choices=["joint", "wsg", "pos"], default="joint")
    a.add_argument("--ratio-annotated", type=float, default=1.0)
    a.add_argument("--ratio-projected", type=float, default=1.0)
    a.add_argument("--pos-tags", help="POS tag list (default: built-in)")
    a.add_argument("--config", help="JSON TrainConfig overrides")
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_train)

    a = sub.add_parser("relabel", help="replace weak labels by model predictions")
    a.add_argument("--model", required=True)
    a.add_argument("--data", required=True, help="char_tags or tagged_words; only the characters are used")
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_relabel)

    a = sub.add_parser("evaluate", help="span F1 of predictions against gold")
    a.add_argument("--gold", required=True)
    a.add_argument("--pred", required=True)
    a.add_argument("--mode", choices=["wsg", "pos"], default="wsg")
    a.add_argument("--diff", help="write an error listing")
    a.add_argument("--out", help="also write the metrics JSON here")
    a.set_defaults(func=cmd_evaluate)

    a = sub.add_parser("pipeline", help="run all stages from a JSON config")
    a.add_argument("--config", required=True)
    a.add_argument("--seed", type=int)
    a.add_argument("--out")
    a.add_argument("--task", choices=["joint", "wsg", "pos", "none"])
    a.add_argument("--ratio-annotated", type=float)
    a.add_argument("--ratio-projected", type=float)
    a.set_defaults(func=cmd_pipeline)

    a = sub.add_parser("synth", help="write a synthetic parallel corpus with gold labels")
    a.add_argument("--config", help="JSON SynthConfig")
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--pairs", type=int)
    a.add_argument("--annotated", type=int)
    a.add_argument("--test-a", type=int)
    a.add_argument("--test-b", type=int)
    a.add_argument("--noise", type=float)
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                            format="%(levelname)s %(name)s: %(message)s")
        args.func(args)
    except UsageError as e:
        print(e, file=sys.stderr)
        return 1
    except (DistagError, OSError, UnicodeDecodeError, ValueError) as e:
        print(f"distag: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
