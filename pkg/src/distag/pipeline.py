"""Three-stage denoise-and-complete training over projected and annotated data.

    M0 --(D_p, stage 1)--> M1 --(D_a, stage 2)--> M2
    M2 relabels the sentences of D_p into D_r
    M0 --(D_r, stage 3)--> M3

plus the mechanics of the data-ratio and first-stage-task ablations.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import corpus_io
from .aligner import ParallelPair, em_train, save_table
from .crf import LabelConstraint
from .errors import DataError, DistagError
from .evaluator import score_both
from .labeler import (EncoderConfig, LabelerModel, TrainConfig, TrainReport, build_vocab, dumps_checkpoint,
                      init_model, load_checkpoint, predict, train)
from .projector import TaggedModernSentence, WeaklyLabeledSentence, project_corpus
from .tagset import HybridTagSet, PosTagSet, encode_segmentation, words_to_segmentation

log = logging.getLogger(__name__)

TASKS = ("joint", "wsg_only", "pos_only", "none")
TASK_ALIASES = {"wsg": "wsg_only", "pos": "pos_only"}
STAGE_DEFAULTS = {
    "stage1": {"max_epochs": 10},
    "stage2": {"max_epochs": 50, "patience": 5},
    "stage3": {"max_epochs": 10},
}


@dataclass
class AlignConfig:
    iters: int = 10
    smoothing: float = 1e-6
    tau: float = 0.0
    distortion: bool = False


@dataclass
class PipelineConfig:
    parallel: str | None = None
    modern_tagged: str | None = None
    annotated: str | None = None
    tests: dict = field(default_factory=dict)
    pos_tags: str | None = None
    pos_map: str | None = None
    init_checkpoint: str | None = None
    out: str | None = None
    ratio_annotated: float = 1.0
    ratio_projected: float = 1.0
    seed: int = 0
    stage1_task: str = "joint"
    align: AlignConfig = field(default_factory=AlignConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    stages: dict = field(default_factory=dict)

    def __post_init__(self):
        self.stage1_task = TASK_ALIASES.get(self.stage1_task, self.stage1_task)
        if self.stage1_task not in TASKS:
            raise DataError(f"unknown stage1_task {self.stage1_task!r}")
        for name in ("ratio_annotated", "ratio_projected"):
            r = getattr(self, name)
            if not 0 < r <= 1:
                raise DataError(f"{name} must lie in (0, 1], got {r}")
        unknown = set(self.stages) - set(STAGE_DEFAULTS)
        if unknown:
            raise DataError(f"unknown stage overrides {sorted(unknown)}")

    def stage_config(self, stage: str) -> TrainConfig:
        """Stage defaults, then the overrides; every stage gets its own seed.

        A WSG-only first stage selects its checkpoint by dev WSG-F1, since its
        labels say nothing about POS.
        """
        d = {"seed": self.seed * 1000 + int(stage[-1])}
        d.update(STAGE_DEFAULTS[stage])
        if stage == "stage1" and self.stage1_task == "wsg_only":
            d["select"] = "wsg"
        d.update(self.stages.get(stage, {}))
        return TrainConfig.from_dict(d)

    @classmethod
    def from_dict(cls, d: dict, base: Path | None = None):
        d = dict(d)
        if base is not None:
            for key in ("parallel", "modern_tagged", "annotated", "pos_tags", "pos_map", "init_checkpoint", "out"):
                if d.get(key) is not None:
                    d[key] = str(base / d[key])
            d["tests"] = {k: str(base / v) for k, v in d.get("tests", {}).items()}
        d["align"] = AlignConfig(**d.get("align", {}))
        d["encoder"] = EncoderConfig(**d.get("encoder", {}))
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise DataError(f"unknown pipeline config keys {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path):
        """Relative paths in the file are resolved against the file's directory."""
        path = Path(path)
        return cls.from_dict(corpus_io.read_json(path), base=path.parent)

    def to_dict(self):
        return asdict(self)


@dataclass
class Checkpoint:
    model: LabelerModel
    stage: str
    parent: str | None
    data: str | None
    data_hash: str | None
    report: TrainReport | None = None

    def provenance(self):
        return {"stage": self.stage, "parent": self.parent, "data": self.data, "data_hash": self.data_hash,
                "train": self.report.to_dict() if self.report else None}


@dataclass
class PipelineState:
    config: PipelineConfig
    checkpoints: dict = field(default_factory=dict)
    datasets: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    projection: dict = field(default_factory=dict)

    def provenance(self):
        return {name: c.provenance() for name, c in self.checkpoints.items()}


# --- data handling ---------------------------------------------------------

def split_annotated(data: Sequence):
    """First nine tenths for training, the rest for development, in order."""
    n = len(data)
    if n < 10:
        raise DataError(f"need at least 10 annotated sentences, got {n}")
    cut = (9 * n) // 10
    return list(data[:cut]), list(data[cut:])


def subsample(data: Sequence, ratio: float, seed: int) -> list:
    if not 0 < ratio <= 1:
        raise DataError(f"ratio must lie in (0, 1], got {ratio}")
    n = len(data)
    k = math.ceil(ratio * n)
    if k >= n:
        return list(data)
    keep = np.sort(np.random.default_rng(seed).choice(n, size=k, replace=False))
    return [data[i] for i in keep]


def collapse_task(tags, task: str, ts: HybridTagSet) -> LabelConstraint:
    task = TASK_ALIASES.get(task, task)
    n, v = len(tags), len(ts)
    allowed = np.zeros((n, v), dtype=bool)
    for i, t in enumerate(tags):
        if task == "joint":
            allowed[i, ts.index(t) if t.known else ts.boundary_ids(t.boundary)] = True
        elif task == "wsg_only":
            allowed[i, ts.boundary_ids(t.boundary)] = True
        elif task == "pos_only":
            if t.known:
                allowed[i, ts.pos_ids(t.pos)] = True
            else:
                allowed[i] = True
        else:
            raise DataError(f"collapse_task does not accept task {task!r}")
    return LabelConstraint(allowed)


def data_hash(sentences) -> str:
    """SHA-256 over a canonical dump of ``(chars, labels)`` training items."""
    h = hashlib.sha256()
    for chars, labels in sentences:
        if isinstance(labels, LabelConstraint):
            body = f"{labels.allowed.shape}:" + np.packbits(labels.allowed, axis=None).tobytes().hex()
        else:
            body = " ".join(str(t) for t in labels)
        h.update(json.dumps(["".join(chars), body], ensure_ascii=False).encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


def gold_tags(words):
    return encode_segmentation(words_to_segmentation(words))


def as_labeled(sentences):
    """``(chars, tags)`` pairs from tagged-word sentences."""
    return [(tuple("".join(w for w, _ in s)), gold_tags(s)) for s in sentences]


# --- stages ----------------------------------------------------------------

def run_stage(in_model: LabelerModel, dataset: Sequence, cfg: TrainConfig, dev=None,
              state: PipelineState | None = None, name: str = "stage", parent: str | None = None,
              data_name: str | None = None) -> LabelerModel:
    """Trains ``in_model`` on ``(chars, LabelConstraint)`` items and records provenance."""
    if not dataset:
        raise DataError(f"{name}: empty training set")
    model, report = train(in_model, dataset, dev, cfg)
    if state is not None:
        state.checkpoints[name] = Checkpoint(model, name, parent, data_name, data_hash(dataset), report)
    return model


def relabel(model: LabelerModel, sentences: Sequence) -> list:
    """Predicted tags for every sentence of the projected set, as complete weak labels."""
    chars = [tuple(s.chars) if isinstance(s, WeaklyLabeledSentence) else tuple(s) for s in sentences]
    return [WeaklyLabeledSentence(c, t) for c, t in zip(chars, predict(model, chars))]


def evaluate(model: LabelerModel, labeled) -> dict:
    pred = predict(model, [c for c, _ in labeled])
    return score_both([t for _, t in labeled], pred)


class StageError(DistagError):
    def __init__(self, stage, cause):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


def _stage(name):
    def wrap(fn):
        def inner(*a, **k):
            try:
                return fn(*a, **k)
            except StageError:
                raise
            except DistagError as e:
                raise StageError(name, e) from e
        return inner
    return wrap


def load_inputs(cfg: PipelineConfig):
    for key in ("parallel", "modern_tagged", "annotated"):
        if getattr(cfg, key) is None:
            raise DataError(f"pipeline config lacks {key!r}")
    parallel = corpus_io.read_parallel(cfg.parallel)
    moderns = corpus_io.read_tagged_words(cfg.modern_tagged)
    if len(parallel) != len(moderns):
        raise DataError(f"{len(parallel)} parallel pairs but {len(moderns)} tagged modern sentences")
    pairs = []
    for i, ((ancient, modern), tagged) in enumerate(zip(parallel, moderns)):
        surfaces = [w for w, _ in tagged]
        if modern.split() != surfaces:
            raise DataError(f"pair {i + 1}: modern text differs from the tagged modern sentence")
        pairs.append(ParallelPair(surfaces, list(ancient)))
    annotated = corpus_io.read_tagged_words(cfg.annotated)
    tests = {name: as_labeled(corpus_io.read_tagged_words(p)) for name, p in sorted(cfg.tests.items())}
    return pairs, [TaggedModernSentence(m) for m in moderns], annotated, tests


def run_full(cfg: PipelineConfig, write: bool = True) -> PipelineState:
    """align, project, stage 1, stage 2, relabel, stage 3, then evaluate on every test set.

    With ``stage1_task="none"`` there is no projected-data stage: M0 is trained on
    the annotated set alone, giving the baseline ``Mb``, which is the only
    checkpoint evaluated.
    """
    state = PipelineState(cfg)
    ts = HybridTagSet(PosTagSet.load(cfg.pos_tags)) if cfg.pos_tags else HybridTagSet.default()
    mapping = corpus_io.load_pos_map(cfg.pos_map)

    pairs, moderns, annotated, tests = _stage("load")(load_inputs)(cfg)
    for name, data in tests.items():
        state.datasets[name] = data

    @_stage("align")
    def align():
        return em_train(pairs, cfg.align.iters, cfg.align.smoothing, cfg.align.distortion)

    @_stage("project")
    def projection(table):
        return project_corpus(pairs, moderns, table, mapping, cfg.align.tau)

    table = align()
    Dp_all, proj_report = projection(table)
    state.projection = proj_report.to_dict()
    Dp = subsample(Dp_all, cfg.ratio_projected, cfg.seed)
    train_words, dev_words = _stage("split")(split_annotated)(annotated)
    train_words = subsample(train_words, cfg.ratio_annotated, cfg.seed + 1)
    Da_train, Da_dev = as_labeled(train_words), as_labeled(dev_words)
    state.datasets.update(D_p=Dp, D_a_train=Da_train, D_a_dev=Da_dev)

    if cfg.init_checkpoint:
        m0 = load_checkpoint(cfg.init_checkpoint)
    else:
        vocab = build_vocab([p.target for p in pairs] + [c for c, _ in Da_train + Da_dev])
        m0 = init_model(ts, vocab, cfg.encoder, seed=cfg.seed)
    state.checkpoints["M0"] = Checkpoint(m0, "init", None, None, None)
    ts = m0.tagset

    stage2_data = [(c, LabelConstraint.from_hybrid(t, ts)) for c, t in Da_train]
    if cfg.stage1_task == "none":
        _stage("stage2")(run_stage)(m0, stage2_data, cfg.stage_config("stage2"), Da_dev, state, "Mb", "M0", "D_a")
        evaluated = ["Mb"]
    else:
        stage1_data = [(s.chars, collapse_task(s.tags, cfg.stage1_task, ts)) for s in Dp]
        m1 = _stage("stage1")(run_stage)(m0, stage1_data, cfg.stage_config("stage1"), Da_dev, state, "M1", "M0",
                                         "D_p")
        m2 = _stage("stage2")(run_stage)(m1, stage2_data, cfg.stage_config("stage2"), Da_dev, state, "M2", "M1",
                                         "D_a")
        Dr = _stage("relabel")(relabel)(m2, Dp)
        state.datasets["D_r"] = Dr
        stage3_data = [(s.chars, LabelConstraint.from_hybrid(s.tags, ts)) for s in Dr]
        _stage("stage3")(run_stage)(m0, stage3_data, cfg.stage_config("stage3"), Da_dev, state, "M3", "M0", "D_r")
        evaluated = ["M1", "M2", "M3"]

    for name in evaluated:
        model = state.checkpoints[name].model
        state.metrics[name] = {test: evaluate(model, data) for test, data in tests.items()}
    if write and cfg.out:
        write_outputs(state, table)
    return state


def metrics_report(state: PipelineState) -> str:
    return json.dumps(state.metrics, sort_keys=True, indent=2) + "\n"


def write_outputs(state: PipelineState, table=None):
    out = Path(state.config.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.json").write_text(metrics_report(state), encoding="utf-8")
    for name, ckpt in state.checkpoints.items():
        (out / f"{name}.json").write_text(dumps_checkpoint(ckpt.model) + "\n", encoding="utf-8")
    corpus_io.write_json(state.provenance(), out / "provenance.json")
    corpus_io.write_json(state.projection, out / "projection_report.json")
    for name in ("D_p", "D_r"):
        if name in state.datasets:
            corpus_io.write_char_tags(state.datasets[name], out / f"{name}.tsv")
    if table is not None:
        save_table(table, out / "alignment_table.tsv")
