"""Acceptance criteria, one test each; the summary prints one PASS/FAIL line per criterion."""
import json
import random
import time
from statistics import median

import numpy as np
import pytest

import gradcheck
import oracles
from distag import crf
from distag.aligner import AlignmentResult, ParallelPair, em_train, load_table, save_table
from distag.cli import main
from distag.cli.synth import SynthConfig, generate, write_corpus
from distag.corpus_io import (read_char_tags, read_parallel, read_tagged_words, write_char_tags, write_parallel,
                              write_tagged_words)
from distag.crf import LabelConstraint
from distag.evaluator import score
from distag.labeler import (EncoderConfig, build_vocab, dumps_checkpoint, init_model, load_checkpoint,
                            loss_and_gradients, save_checkpoint, sentence_emissions)
from distag.pipeline import PipelineConfig, run_full
from distag.projector import PosMappingDict, TaggedModernSentence, WeaklyLabeledSentence, map_pos, project
from distag.tagset import HybridTag, HybridTagSet, Span, encode_segmentation

# modern POS -> ancient POS, None for a null value
POS_DICTIONARY = {
    "a": "a", "b": "a", "c": "c", "d": "d", "e": "y", "h": None,
    "i": None, "j": None, "k": None, "m": "m", "n": "n", "nd": "f",
    "nh": "nr", "ni": "ns", "nl": "n", "ns": "ns", "nt": "t", "nz": "n",
    "o": "s", "p": "p", "q": "q", "r": "r", "u": "u", "v": "v",
    "wp": "w", "ws": "x", "x": None, "g": None, "z": "a",
}
TREND_SEEDS = (0, 1, 2)


def detail(record_property, text):
    record_property("detail", text)


@pytest.mark.criterion(1, "exact inference vs enumeration")
def test_exact_inference_oracles(record_property):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = {"logZ": 0.0, "node": 0.0, "edge": 0.0, "constrained": 0.0}
    viterbi_ok, count = 0, 0
    for k in range(240):
        n, v = int(rng.integers(1, 6)), int(rng.integers(1, 7))
        S, T = oracles.random_instance(rng, n, v, integer=k % 2 == 0)
        count += 1
        viterbi_ok += crf.viterbi(S, T) == oracles.brute_viterbi(S, T)
        worst["logZ"] = max(worst["logZ"], abs(crf.log_partition(S, T) - oracles.brute_log_partition(S, T)))
        node, edge = crf.marginals(S, T)
        bn, be = oracles.brute_marginals(S, T)
        worst["node"] = max(worst["node"], float(np.abs(node - bn).max()))
        if n > 1:
            worst["edge"] = max(worst["edge"], float(np.abs(edge - be).max()))
        allowed = oracles.random_allowed(rng, n, v, T)
        err = abs(crf.constrained_log_partition(S, T, allowed) - oracles.brute_log_partition(S, T, allowed))
        worst["constrained"] = max(worst["constrained"], err)
    elapsed = time.perf_counter() - t0
    detail(record_property, f"{count} instances, viterbi exact {viterbi_ok}/{count}, "
           + ", ".join(f"max |d{k}| {v:.1e}" for k, v in worst.items()) + f", {elapsed:.1f}s")
    assert count >= 200 and viterbi_ok == count
    assert all(v <= 1e-8 for v in worst.values())
    assert elapsed < 10


@pytest.mark.criterion(2, "gradient check")
def test_gradient_check(record_property):
    t0 = time.perf_counter()
    model, chars, constraint = gradcheck.small_problem()
    assert (model.encoder.d_e, model.encoder.d, len(model.tagset), len(chars)) == (3, 5, 8, 6)
    _, analytic = loss_and_gradients(model, chars, constraint)
    errs = gradcheck.relative_errors(analytic, gradcheck.numeric_gradients(model, chars, constraint))
    elapsed = time.perf_counter() - t0
    detail(record_property, f"max relative error {max(errs.values()):.1e} over {len(errs)} groups, {elapsed:.1f}s")
    assert all(e <= 1e-4 for e in errs.values())
    assert elapsed < 30


@pytest.mark.criterion(3, "partial-label consistency")
def test_partial_label_consistency(record_property):
    ts = HybridTagSet.default()
    rng = np.random.default_rng(5)
    exact, worst_free = 0, 0.0
    trials = 50
    for seed in range(trials):
        model = init_model(ts, build_vocab(["abcdefg"]), EncoderConfig(d_e=4, window=1, d=6), seed=seed)
        for name in ("M", "start", "stop", "b_s"):
            p = model.parameters()[name]
            live = p > crf.MASKED / 2
            p[live] = rng.normal(size=live.sum())
        x = list(rng.choice(list("abcdefg"), int(rng.integers(1, 9))))
        S = sentence_emissions(model, x)
        y = crf.viterbi(S + rng.normal(size=S.shape) * 3, model.transitions)
        full, _ = loss_and_gradients(model, x, LabelConstraint.from_tags(y, len(ts)))
        exact += full == crf.nll(S, model.transitions, y)
        free, _ = loss_and_gradients(model, x, LabelConstraint.full(len(x), len(ts)))
        worst_free = max(worst_free, abs(free))
    detail(record_property, f"fully constrained == NLL bitwise {exact}/{trials}, max |unconstrained loss| {worst_free:.1e}")
    assert exact == trials
    assert worst_free <= 1e-12


def _random_corpus(rng, n_pairs=30):
    return [ParallelPair([f"e{i}" for i in rng.integers(0, 8, rng.integers(1, 6))],
                         [f"f{i}" for i in rng.integers(0, 10, rng.integers(1, 7))]) for _ in range(n_pairs)]


@pytest.mark.criterion(4, "EM monotonicity and two-pair disambiguation")
def test_em_suite(record_property):
    drops = []
    for seed in range(10):
        table = em_train(_random_corpus(np.random.default_rng(seed)), iters=20, smoothing=1e-6)
        drops.append(float(np.min(np.diff(table.log_likelihood))))
    monotone = min(drops) >= -1e-9
    pairs = [ParallelPair(["a", "b"], ["x", "y"]), ParallelPair(["a", "c"], ["x", "z"])]
    t = em_train(pairs, iters=20, smoothing=0.0).prob("x", "a")
    detail(record_property, f"monotone on 10 corpora: {monotone} (min step {min(drops):.1e}); "
           f"two-pair t(x|a) after 20 iterations = {t:.6f} (needs >= 0.99)")
    assert monotone
    assert t >= 0.99


@pytest.mark.criterion(5, "projection rules and POS dictionary")
def test_projection_rules(record_property):
    pair = ParallelPair(["担任", "秦国", "的", "副将"], list("為秦裨將軍"))
    modern = TaggedModernSentence([("担任", "v"), ("秦国", "ns"), ("的", "u"), ("副将", "n")])
    out = project(pair, modern, AlignmentResult([0, 1, 3, 3, None], [0.9] * 5), PosMappingDict.default())
    spans = [tuple(s) for s in out.spans]
    mapping = PosMappingDict.default()
    verbatim = sum(mapping.mapping[k] == v and map_pos(k, mapping) == (v or "_") for k, v in POS_DICTIONARY.items())
    detail(record_property, f"spans {spans}; {verbatim}/29 dictionary entries verbatim, {len(mapping)} keys")
    assert spans[2:] == [(2, 4, "n"), (4, 5, "_")]
    assert [str(t) for t in out.tags[2:]] == ["B-n", "E-n", "S-_"]
    assert verbatim == 29 and len(mapping) == 29


@pytest.fixture(scope="module")
def trend_runs(tmp_path_factory):
    t0 = time.perf_counter()
    runs = {}
    for seed in TREND_SEEDS:
        d = tmp_path_factory.mktemp(f"trend{seed}")
        cfg = SynthConfig(pairs=2000, annotated=200, noise=0.3, seed=seed)
        write_corpus(generate(cfg), cfg, d)
        runs[seed] = run_full(PipelineConfig.load(d / "pipeline.json"), write=False)
    return runs, time.perf_counter() - t0


@pytest.mark.criterion(6, "relabel completeness")
def test_relabel_completeness(record_property, trend_runs):
    runs, _ = trend_runs
    lines, ok = [], True
    for seed, state in runs.items():
        dp, dr = state.datasets["D_p"], state.datasets["D_r"]
        unknown_p = sum(not t.known for s in dp for t in s.tags)
        unknown_r = sum(not t.known for s in dr for t in s.tags)
        same = [s.chars for s in dp] == [s.chars for s in dr]
        lines.append(f"seed {seed}: |D_p|={len(dp)} |D_r|={len(dr)} unknown {unknown_p}->{unknown_r}")
        ok &= unknown_r == 0 and len(dr) == len(dp) and same
    detail(record_property, ", ".join(lines))
    assert ok


@pytest.mark.criterion(7, "end-to-end trend on the synthetic corpus")
def test_end_to_end_trend(record_property, trend_runs):
    runs, elapsed = trend_runs

    def med(model, test, metric):
        return 100 * median(runs[s].metrics[model][test][metric] for s in TREND_SEEDS)

    pos = {m: med(m, "test_a", "POS-F1") for m in ("M1", "M2", "M3")}
    wsg = {m: med(m, "test_a", "WSG-F1") for m in ("M1", "M2", "M3")}
    shifted = {m: (med(m, "test_b", "WSG-F1"), med(m, "test_b", "POS-F1")) for m in ("M1", "M2", "M3")}
    detail(record_property,
           "median POS-F1 " + " ".join(f"{m}={v:.2f}" for m, v in pos.items())
           + "; median WSG-F1 " + " ".join(f"{m}={v:.2f}" for m, v in wsg.items())
           + "; shifted test (WSG/POS) " + " ".join(f"{m}={w:.2f}/{p:.2f}" for m, (w, p) in shifted.items())
           + f"; {elapsed:.0f}s for 3 seeds")
    assert pos["M2"] >= pos["M1"] + 2.0
    assert pos["M3"] >= pos["M2"] - 0.5
    assert wsg["M3"] >= wsg["M1"]
    assert elapsed < 600


@pytest.mark.criterion(8, "pipeline determinism under --seed 7")
def test_pipeline_determinism(record_property, tmp_path, capsys):
    cfg = SynthConfig(pairs=600, annotated=100, test_a=100, test_b=100, seed=3)
    write_corpus(generate(cfg), cfg, tmp_path / "corpus")
    outs = []
    for run in ("a", "b"):
        code = main(["pipeline", "--config", str(tmp_path / "corpus" / "pipeline.json"), "--seed", "7",
                     "--out", str(tmp_path / run)])
        assert code == 0
        outs.append(capsys.readouterr().out)
    files = ["metrics.json"] + [f"M{i}.json" for i in range(4)]
    same = [name for name in files if (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()]
    detail(record_property, f"{len(same)}/{len(files)} files byte-identical ({', '.join(files)}), "
           f"stdout identical: {outs[0] == outs[1]}")
    assert same == files and outs[0] == outs[1]


def _random_text(rng, alphabet, lo, hi):
    return "".join(rng.choice(alphabet) for _ in range(rng.randint(lo, hi)))


@pytest.mark.criterion(9, "file format round trips")
def test_format_round_trips(record_property, tmp_path):
    rng = random.Random(9)
    han = [chr(c) for c in range(0x4E00, 0x4E40)] + list("/\\abé\U00020000")
    pos = ["n", "v", "nr", "_", "x"]
    results = {}

    sents = []
    for _ in range(50):
        tags = encode_segmentation([Span(i, i + 1, rng.choice(pos)) for i in range(rng.randint(1, 8))])
        tags = [HybridTag(rng.choice("BMES") if rng.random() < 0.2 else t.boundary, t.pos) for t in tags]
        sents.append(WeaklyLabeledSentence([rng.choice(han) for _ in tags], tags))
    write_char_tags(sents, tmp_path / "c.tsv")
    results["char_tags"] = read_char_tags(tmp_path / "c.tsv") == sents

    pairs = [(_random_text(rng, han, 1, 12), " ".join(_random_text(rng, han, 1, 3) for _ in range(rng.randint(0, 5))))
             for _ in range(50)]
    write_parallel(pairs, tmp_path / "p.tsv")
    results["parallel_tsv"] = read_parallel(tmp_path / "p.tsv") == pairs

    words = [[(_random_text(rng, han, 1, 4), rng.choice(pos[:3] + ["wp", "n\\x"])) for _ in range(rng.randint(1, 6))]
             for _ in range(50)]
    write_tagged_words(words, tmp_path / "w.txt")
    results["tagged_words"] = read_tagged_words(tmp_path / "w.txt") == words

    table = em_train([ParallelPair(s.split() or ["x"], list(a)) for a, s in pairs], iters=3)
    save_table(table, tmp_path / "t1.tsv")
    back = load_table(tmp_path / "t1.tsv")
    save_table(back, tmp_path / "t2.tsv")
    results["translation_table"] = (
        all(back.prob(f, e) == p for e, f, p in table.entries())
        and (tmp_path / "t1.tsv").read_bytes() == (tmp_path / "t2.tsv").read_bytes())

    ok = True
    for seed in range(5):
        ts = HybridTagSet.default()
        model = init_model(ts, build_vocab([_random_text(rng, han, 5, 20)]), EncoderConfig(6, 1, 7), seed=seed)
        nprng = np.random.default_rng(seed)
        for p in model.parameters().values():
            live = p > crf.MASKED / 2
            p[live] = nprng.normal(size=live.sum()) / 3
        save_checkpoint(model, tmp_path / "m.json")
        again = load_checkpoint(tmp_path / "m.json")
        ok &= dumps_checkpoint(again) == dumps_checkpoint(model)
        ok &= all(np.array_equal(p, again.parameters()[k]) for k, p in model.parameters().items())
    results["checkpoint"] = ok
    detail(record_property, ", ".join(f"{k} {'ok' if v else 'MISMATCH'}" for k, v in results.items()))
    assert all(results.values())


@pytest.mark.criterion(10, "scorer sanity")
def test_scorer_sanity(record_property):
    def spans(*s):
        return [encode_segmentation([Span(*x) for x in s])]

    gold = spans((0, 2, "n"), (2, 3, "v"))
    ex1 = all(score(gold, gold, m).f1 == score(gold, gold, m).precision == score(gold, gold, m).recall == 1.0
              for m in ("wsg", "pos"))
    ex2 = score(gold, spans((0, 1, "n"), (1, 3, "v")), "wsg").f1 == 0.0
    pred3 = spans((0, 2, "v"), (2, 3, "v"))
    ex3 = score(gold, pred3, "wsg").f1 == 1.0 and score(gold, pred3, "pos").f1 == 0.5

    rng = random.Random(10)
    pos = ["n", "v", "a", "d"]
    violations = 0
    for _ in range(100):
        g, p = [], []
        for _ in range(rng.randint(1, 6)):
            n = rng.randint(1, 10)
            for out in (g, p):
                cuts = sorted({0, n} | {i for i in range(1, n) if rng.random() < 0.4})
                out.append(encode_segmentation([Span(a, b, rng.choice(pos)) for a, b in zip(cuts, cuts[1:])]))
        violations += score(g, p, "pos").f1 > score(g, p, "wsg").f1
    detail(record_property, f"examples {ex1}/{ex2}/{ex3}, POS-F1 > WSG-F1 in {violations}/100 random pairs")
    assert ex1 and ex2 and ex3 and violations == 0
