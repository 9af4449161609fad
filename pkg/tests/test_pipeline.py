import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from distag.cli.synth import SynthConfig, generate, write_corpus
from distag.crf import LabelConstraint
from distag.errors import DataError
from distag.labeler import EncoderConfig, TrainConfig, build_vocab, dumps_checkpoint, init_model
from distag.pipeline import (PipelineConfig, StageError, collapse_task, data_hash, relabel, run_full, run_stage,
                             split_annotated, subsample)
from distag.projector import WeaklyLabeledSentence
from distag.tagset import HybridTag, HybridTagSet

TS = HybridTagSet.default()
SMALL_STAGES = {"stage1": {"max_epochs": 2}, "stage2": {"max_epochs": 3, "patience": 2}, "stage3": {"max_epochs": 2}}


def tags(text):
    return [HybridTag.parse(t) for t in text.split()]


# --- split / subsample ---------------------------------------------------------

@pytest.mark.parametrize("n,train,dev", [(10, 9, 1), (11, 9, 2), (19, 17, 2), (20, 18, 2), (8701, 7830, 871)])
def test_split_sizes(n, train, dev):
    a, b = split_annotated(list(range(n)))
    assert (len(a), len(b)) == (train, dev)
    assert a + b == list(range(n))


def test_split_needs_ten():
    with pytest.raises(DataError):
        split_annotated(list(range(9)))


def test_subsample_identity_and_size():
    data = list(range(100))
    assert subsample(data, 1.0, 3) == data
    part = subsample(data, 0.25, 3)
    assert len(part) == 25
    assert part == sorted(part)
    assert part == subsample(data, 0.25, 3)


def test_subsample_seeds_differ():
    data = list(range(100))
    base = subsample(data, 0.25, 0)
    assert any(subsample(data, 0.25, s) != base for s in range(1, 6))


@given(st.integers(1, 200), st.floats(0.001, 1.0), st.integers(0, 100))
def test_subsample_ceil(n, ratio, seed):
    part = subsample(list(range(n)), ratio, seed)
    assert len(part) == int(np.ceil(ratio * n))
    assert len(set(part)) == len(part)


@pytest.mark.parametrize("ratio", [0.0, -0.1, 1.5])
def test_subsample_rejects_ratio(ratio):
    with pytest.raises(DataError):
        subsample([1, 2], ratio, 0)


# --- collapse_task -------------------------------------------------------------

def test_joint_fully_known_is_singleton():
    y = tags("B-n E-n S-v")
    c = collapse_task(y, "joint", TS)
    assert c.is_singleton()
    assert [TS.tag(int(np.flatnonzero(row)[0])) for row in c.allowed] == y


def test_joint_unknown_pos_keeps_boundary():
    c = collapse_task(tags("S-_"), "joint", TS)
    assert {TS.tag(i) for i in np.flatnonzero(c.allowed[0])} == {HybridTag("S", p) for p in TS.pos_set.tags}


def test_wsg_only_on_s_v():
    c = collapse_task(tags("S-v"), "wsg_only", TS)
    allowed = {TS.tag(i) for i in np.flatnonzero(c.allowed[0])}
    assert len(allowed) == 22
    assert allowed == {HybridTag("S", p) for p in TS.pos_set.tags}


def test_pos_only():
    c = collapse_task(tags("B-n S-_"), "pos_only", TS)
    assert {TS.tag(i) for i in np.flatnonzero(c.allowed[0])} == {HybridTag(b, "n") for b in "BMES"}
    assert c.allowed[1].all()


def test_collapse_rejects_none():
    with pytest.raises(DataError):
        collapse_task(tags("S-v"), "none", TS)


def test_joint_equals_from_hybrid():
    y = tags("B-n M-_ E-_ S-v S-_")
    assert np.array_equal(collapse_task(y, "joint", TS).allowed, LabelConstraint.from_hybrid(y, TS).allowed)


# --- stages --------------------------------------------------------------------

@pytest.fixture(scope="module")
def tiny():
    sents = [("甲乙丙", tags("B-n E-n S-v")), ("丙甲", tags("S-v S-n")), ("乙乙丙甲", tags("S-r B-n M-n E-n"))]
    vocab = build_vocab([c for c, _ in sents])
    model = init_model(TS, vocab, EncoderConfig(d_e=4, window=1, d=6), seed=0)
    data = [(tuple(c), collapse_task(t, "joint", TS)) for c, t in sents]
    dev = [(tuple(c), t) for c, t in sents]
    return model, data, dev


def test_zero_epoch_stage_returns_input(tiny):
    model, data, dev = tiny
    out = run_stage(model, data, TrainConfig(max_epochs=0), dev)
    assert dumps_checkpoint(out) == dumps_checkpoint(model)


def test_stage_records_provenance(tiny):
    from distag.pipeline import PipelineState
    model, data, dev = tiny
    state = PipelineState(PipelineConfig())
    run_stage(model, data, TrainConfig(max_epochs=2), dev, state, "M1", "M0", "D_p")
    ck = state.checkpoints["M1"]
    assert ck.data_hash == data_hash(data)
    assert (ck.stage, ck.parent, ck.data) == ("M1", "M0", "D_p")
    assert ck.report.epochs_run >= 1


def test_data_hash_sensitive_to_labels(tiny):
    _, data, _ = tiny
    other = list(data)
    other[0] = (data[0][0], collapse_task(tags("B-n E-n S-n"), "joint", TS))
    assert data_hash(other) != data_hash(data)


def test_empty_stage_rejected(tiny):
    model, _, _ = tiny
    with pytest.raises(DataError):
        run_stage(model, [], TrainConfig())


def test_relabel_complete_and_idempotent(tiny):
    model, _, _ = tiny
    weak = [WeaklyLabeledSentence(tuple("甲乙丙"), tags("S-_ S-_ S-_")), WeaklyLabeledSentence(tuple("丙"), tags("S-_"))]
    dr = relabel(model, weak)
    assert len(dr) == len(weak)
    assert [d.chars for d in dr] == [w.chars for w in weak]
    assert all(t.known for d in dr for t in d.tags)
    assert [d.tags for d in relabel(model, dr)] == [d.tags for d in dr]


def test_stage_config_layers():
    cfg = PipelineConfig(seed=3, stages={"stage2": {"lr": 0.01}})
    assert cfg.stage_config("stage1").max_epochs == 10
    s2 = cfg.stage_config("stage2")
    assert (s2.max_epochs, s2.patience, s2.lr) == (50, 5, 0.01)
    assert cfg.stage_config("stage3").max_epochs == 10
    assert len({cfg.stage_config(s).seed for s in ("stage1", "stage2", "stage3")}) == 3
    assert PipelineConfig(stage1_task="wsg").stage_config("stage1").select == "wsg"


@pytest.mark.parametrize("kw", [{"ratio_annotated": 0}, {"ratio_projected": 1.2}, {"stage1_task": "both"},
                                {"stages": {"stage4": {}}}])
def test_config_rejects(kw):
    with pytest.raises(DataError):
        PipelineConfig(**kw)


# --- end to end ----------------------------------------------------------------

@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("corpus")
    cfg = SynthConfig(pairs=150, annotated=40, test_a=20, test_b=20, lexicon=120, seed=11)
    write_corpus(generate(cfg), cfg, d)
    doc = json.loads((d / "pipeline.json").read_text())
    doc["encoder"] = {"d_e": 8, "window": 1, "d": 16}
    doc["stages"] = SMALL_STAGES
    (d / "pipeline.json").write_text(json.dumps(doc))
    return d


def _run(corpus_dir, out, **changes):
    from dataclasses import replace
    cfg = replace(PipelineConfig.load(corpus_dir / "pipeline.json"), out=str(out), **changes)
    return run_full(cfg)


def test_run_full_schema_and_outputs(corpus_dir, tmp_path):
    state = _run(corpus_dir, tmp_path)
    assert set(state.metrics) == {"M1", "M2", "M3"}
    for cells in state.metrics.values():
        assert set(cells) == {"test_a", "test_b"}
        for m in cells.values():
            assert set(m) == {"WSG-F1", "POS-F1"}
            assert all(0.0 <= x <= 1.0 for x in m.values())
    assert json.loads((tmp_path / "metrics.json").read_text()) == state.metrics
    for name in ("M0", "M1", "M2", "M3", "provenance", "projection_report"):
        assert (tmp_path / f"{name}.json").exists()
    dr = state.datasets["D_r"]
    assert len(dr) == len(state.datasets["D_p"])
    assert sum(1 for s in dr for t in s.tags if not t.known) == 0


def test_run_full_provenance(corpus_dir, tmp_path):
    state = _run(corpus_dir, tmp_path)
    ck = state.checkpoints
    ts = ck["M0"].model.tagset
    d = state.datasets
    assert ck["M1"].data_hash == data_hash([(s.chars, collapse_task(s.tags, "joint", ts)) for s in d["D_p"]])
    assert ck["M2"].data_hash == data_hash([(c, LabelConstraint.from_hybrid(t, ts)) for c, t in d["D_a_train"]])
    assert ck["M3"].data_hash == data_hash([(s.chars, LabelConstraint.from_hybrid(s.tags, ts)) for s in d["D_r"]])
    assert [(ck[k].parent, ck[k].data) for k in ("M1", "M2", "M3")] == [("M0", "D_p"), ("M1", "D_a"), ("M0", "D_r")]


def test_stage2_warm_starts_from_m1(corpus_dir, tmp_path):
    state = _run(corpus_dir, tmp_path, stages={**SMALL_STAGES, "stage2": {"max_epochs": 0}})
    assert dumps_checkpoint(state.checkpoints["M2"].model) == dumps_checkpoint(state.checkpoints["M1"].model)


def test_run_full_deterministic(corpus_dir, tmp_path):
    _run(corpus_dir, tmp_path / "a")
    _run(corpus_dir, tmp_path / "b")
    for name in ("metrics.json", "M1.json", "M2.json", "M3.json", "D_r.tsv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_task_none_is_annotated_baseline(corpus_dir, tmp_path):
    state = _run(corpus_dir, tmp_path, stage1_task="none")
    assert set(state.metrics) == {"Mb"}
    ck = state.checkpoints["Mb"]
    assert (ck.parent, ck.data) == ("M0", "D_a")
    assert "D_r" not in state.datasets
    # same as training M0 directly on D_a with the stage-2 config
    ts = state.checkpoints["M0"].model.tagset
    data = [(c, LabelConstraint.from_hybrid(t, ts)) for c, t in state.datasets["D_a_train"]]
    direct = run_stage(state.checkpoints["M0"].model, data, state.config.stage_config("stage2"),
                       state.datasets["D_a_dev"])
    assert dumps_checkpoint(direct) == dumps_checkpoint(ck.model)


@pytest.mark.parametrize("task", ["wsg_only", "pos_only"])
def test_task_ablations_run(corpus_dir, tmp_path, task):
    state = _run(corpus_dir, tmp_path, stage1_task=task)
    assert set(state.metrics) == {"M1", "M2", "M3"}


def test_ratios_shrink_data(corpus_dir, tmp_path):
    state = _run(corpus_dir, tmp_path, ratio_annotated=0.5, ratio_projected=0.2)
    assert len(state.datasets["D_p"]) == 30
    assert len(state.datasets["D_a_train"]) == 18
    assert len(state.datasets["D_a_dev"]) == 4


def test_stage_failure_names_stage(corpus_dir, tmp_path):
    (tmp_path / "few.txt").write_text("甲/n\n" * 5, encoding="utf-8")
    with pytest.raises(StageError) as e:
        _run(corpus_dir, tmp_path, annotated=str(tmp_path / "few.txt"))
    assert e.value.stage == "split"
