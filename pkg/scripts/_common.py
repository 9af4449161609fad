"""Shared plumbing for the experiment scripts: synthetic corpora, runs, tables."""
import argparse
import json
import logging
from dataclasses import replace
from pathlib import Path
from statistics import median

from distag.cli.synth import SynthConfig, generate, write_corpus
from distag.pipeline import PipelineConfig, run_full

TESTS = ("test_a", "test_b")
METRICS = ("WSG-F1", "POS-F1")


def parser(description):
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--pairs", type=int, default=2000)
    p.add_argument("--annotated", type=int, default=200)
    p.add_argument("--noise", type=float, default=0.3)
    p.add_argument("--work", default="runs", help="directory for corpora and results")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def setup(args):
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    work = Path(args.work)
    work.mkdir(parents=True, exist_ok=True)
    return work


def corpus_config(args, seed, work) -> PipelineConfig:
    d = work / f"corpus_seed{seed}"
    if not (d / "pipeline.json").exists():
        cfg = SynthConfig(pairs=args.pairs, annotated=args.annotated, noise=args.noise, seed=seed)
        write_corpus(generate(cfg), cfg, d)
    return PipelineConfig.load(d / "pipeline.json")


def run(base: PipelineConfig, **changes) -> dict:
    return run_full(replace(base, **changes), write=False).metrics


def table(rows, out_path=None):
    """``rows`` is a list of (setting, model, {seed: metrics cell dict}); prints medians in points."""
    header = f"{'setting':<22} {'model':<6}" + "".join(f" {t + ' ' + m:>16}" for t in TESTS for m in METRICS)
    lines = [header, "-" * len(header)]
    doc = []
    for setting, model, per_seed in rows:
        cells = {t: {m: 100 * median(per_seed[s][t][m] for s in per_seed) for m in METRICS} for t in TESTS}
        lines.append(f"{setting:<22} {model:<6}" + "".join(f" {cells[t][m]:>16.2f}" for t in TESTS for m in METRICS))
        doc.append({"setting": setting, "model": model, "median": cells, "per_seed": per_seed})
    print("\n".join(lines))
    if out_path:
        Path(out_path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
