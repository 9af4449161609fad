"""Character-window encoder + linear emission head + CRF, trained on
(possibly partial) label constraints.

The encoder is a small stand-in for a pretrained backbone: each character's
hidden state is ``tanh`` of a projection of the concatenated embeddings in a
window around it. Emissions are ``H @ W_s + b_s``. Training maximizes the
marginal likelihood of all tag paths consistent with a
:class:`~distag.crf.LabelConstraint`; with singleton constraints this is the
ordinary CRF negative log-likelihood.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import crf
from .crf import LabelConstraint, TransitionParams
from .errors import FormatError, InfeasibleConstraintError, ModelError
from .evaluator import score
from .tagset import HybridTagSet, PosTagSet

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
OOV = "<oov>"


@dataclass(frozen=True)
class EncoderConfig:
    d_e: int = 64
    window: int = 2
    d: int = 128


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 32
    clip: float = 5.0
    max_epochs: int = 50
    patience: int = 5
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    select: str = "pos"

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})


@dataclass
class EncoderParams:
    vocab: dict
    embeddings: np.ndarray
    window: int
    projection: np.ndarray
    bias: np.ndarray

    @property
    def d_e(self):
        return self.embeddings.shape[1]

    @property
    def d(self):
        return self.projection.shape[1]

    def ids(self, chars) -> np.ndarray:
        oov = self.vocab[OOV]
        return np.array([self.vocab.get(c, oov) for c in chars], dtype=np.int64)


@dataclass
class EmissionHead:
    W: np.ndarray
    b: np.ndarray


@dataclass
class LabelerModel:
    encoder: EncoderParams
    head: EmissionHead
    transitions: TransitionParams
    tagset: HybridTagSet

    def __post_init__(self):
        if self.head.W.shape != (self.encoder.d, len(self.tagset)) or self.head.b.shape != (len(self.tagset),):
            raise ModelError("emission head does not match encoder width and tag set size")
        if self.transitions.v != len(self.tagset):
            raise ModelError("transition matrix does not match tag set size")

    def parameters(self) -> dict:
        """Trainable arrays by name; updates must be in place."""
        return {
            "embeddings": self.encoder.embeddings,
            "projection": self.encoder.projection,
            "proj_bias": self.encoder.bias,
            "W_s": self.head.W,
            "b_s": self.head.b,
            "M": self.transitions.M,
            "start": self.transitions.start,
            "stop": self.transitions.stop,
        }

    def copy(self) -> "LabelerModel":
        enc = self.encoder
        return LabelerModel(
            EncoderParams(dict(enc.vocab), enc.embeddings.copy(), enc.window, enc.projection.copy(), enc.bias.copy()),
            EmissionHead(self.head.W.copy(), self.head.b.copy()),
            self.transitions.copy(),
            self.tagset,
        )


def build_vocab(sentences) -> dict:
    chars = sorted({c for s in sentences for c in s})
    vocab = {OOV: 0}
    for c in chars:
        vocab[c] = len(vocab)
    return vocab


def init_model(tagset: HybridTagSet, vocab: dict, cfg: EncoderConfig = EncoderConfig(), seed: int = 0) -> LabelerModel:
    """Randomly initialized model. Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).

    Embedding rows are lookups of a one-hot input (fan-in 1). Biases and all
    transition scores start at zero.
    """
    if min(cfg.d_e, cfg.d) <= 0 or cfg.window < 0:
        raise ModelError(f"bad encoder config {cfg}")
    if OOV not in vocab:
        raise ModelError("vocabulary lacks the OOV entry")
    rng = np.random.default_rng(seed)
    v = len(tagset)
    k = (2 * cfg.window + 1) * cfg.d_e

    def uniform(shape, fan_in):
        lim = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-lim, lim, size=shape)

    encoder = EncoderParams(
        vocab=dict(vocab),
        embeddings=uniform((len(vocab), cfg.d_e), 1),
        window=cfg.window,
        projection=uniform((k, cfg.d), k),
        bias=np.zeros(cfg.d),
    )
    head = EmissionHead(uniform((cfg.d, v), cfg.d), np.zeros(v))
    return LabelerModel(encoder, head, TransitionParams.for_tagset(tagset), tagset)


# --- forward pieces -------------------------------------------------------

def _pad(ids_list):
    lengths = np.array([len(x) for x in ids_list], dtype=np.int64)
    if (lengths < 1).any():
        raise ModelError("empty sentence")
    L = int(lengths.max())
    ids = np.full((len(ids_list), L), -1, dtype=np.int64)
    for b, x in enumerate(ids_list):
        ids[b, : len(x)] = x
    return ids, lengths


def _window_ids(ids, lengths, w, pad_id):
    B, L = ids.shape
    pos = np.arange(L)[:, None] + np.arange(-w, w + 1)[None, :]
    safe = np.clip(pos, 0, L - 1)
    win = ids[:, safe]
    inside = (pos >= 0)[None] & (pos < lengths[:, None, None])
    return np.where(inside & (win >= 0), win, pad_id)


def _encode_batch(ids, lengths, enc: EncoderParams):
    """Returns hidden states (B, L, d) and the cache needed for gradients."""
    E = np.vstack([enc.embeddings, np.zeros((1, enc.d_e))])
    win = _window_ids(ids, lengths, enc.window, len(enc.embeddings))
    B, L = ids.shape
    X = E[win].reshape(B, L, -1)
    H = np.tanh(X @ enc.projection + enc.bias)
    return H, (win, X)


def encode(chars, enc: EncoderParams) -> np.ndarray:
    """Hidden states (n, d); windows are zero-padded at sentence edges."""
    ids, lengths = _pad([enc.ids(chars)])
    return _encode_batch(ids, lengths, enc)[0][0]


def emissions(H, head: EmissionHead) -> np.ndarray:
    H = np.asarray(H, dtype=np.float64)
    if H.shape[-1] != head.W.shape[0]:
        raise ModelError(f"hidden width {H.shape[-1]} != head input width {head.W.shape[0]}")
    return H @ head.W + head.b


def sentence_emissions(model: LabelerModel, chars) -> np.ndarray:
    return emissions(encode(chars, model.encoder), model.head)


# --- loss and gradients ---------------------------------------------------

def batch_loss_and_gradients(model: LabelerModel, sentences, constraints):
    """Summed constrained NLL over a batch and its gradient for every parameter."""
    enc, head, T = model.encoder, model.head, model.transitions
    ids, lengths = _pad([enc.ids(x) for x in sentences])
    B, L = ids.shape
    v = len(model.tagset)
    allowed = np.ones((B, L, v), dtype=bool)
    for b, c in enumerate(constraints):
        a = c.allowed if isinstance(c, LabelConstraint) else np.asarray(c, bool)
        if a.shape != (lengths[b], v):
            raise ModelError(f"constraint shape {a.shape} does not match sentence {b}")
        allowed[b, : lengths[b]] = a

    H, (win, X) = _encode_batch(ids, lengths, enc)
    S = H @ head.W + head.b
    logZ, node, edge, start, stop = crf.expected_counts(S, lengths, T)
    logZc, node_c, edge_c, start_c, stop_c = crf.expected_counts(S, lengths, T, allowed)
    # a fully labeled sentence has one path: use its exact score so the loss is
    # the ordinary CRF NLL to the last bit
    for b in range(B):
        rows = allowed[b, : lengths[b]]
        if np.all(rows.sum(axis=1) == 1):
            logZc[b] = crf.sequence_score(S[b, : lengths[b]], T, rows.argmax(axis=1))
    loss = float(np.sum(logZ - logZc))

    dS = node - node_c
    d = enc.d
    dW = H.reshape(-1, d).T @ dS.reshape(-1, v)
    db = dS.sum(axis=(0, 1))
    dZ = (dS @ head.W.T) * (1.0 - H * H)
    dP = X.reshape(B * L, -1).T @ dZ.reshape(B * L, d)
    dc = dZ.sum(axis=(0, 1))
    dX = (dZ @ enc.projection.T).reshape(B, L, win.shape[-1], enc.d_e)
    dE = np.zeros((len(enc.embeddings) + 1, enc.d_e))
    np.add.at(dE, win.reshape(-1), dX.reshape(-1, enc.d_e))

    grads = {
        "embeddings": dE[:-1],
        "projection": dP,
        "proj_bias": dc,
        "W_s": dW,
        "b_s": db,
        "M": np.where(T.mask, edge - edge_c, 0.0),
        "start": np.where(T.start_mask, start - start_c, 0.0),
        "stop": np.where(T.stop_mask, stop - stop_c, 0.0),
    }
    return loss, grads


def loss_and_gradients(model: LabelerModel, chars, constraint: LabelConstraint):
    """Constrained NLL ``log Z - log Z_C`` of one sentence with all gradients."""
    if not crf.feasible(constraint.allowed, model.transitions):
        raise InfeasibleConstraintError("no legal tag path satisfies the constraint")
    return batch_loss_and_gradients(model, [chars], [constraint])


# --- optimization ---------------------------------------------------------

class Adam:
    def __init__(self, params: dict, cfg: TrainConfig):
        self.params = params
        self.cfg = cfg
        self.m = {k: np.zeros_like(p) for k, p in params.items()}
        self.v = {k: np.zeros_like(p) for k, p in params.items()}
        self.t = 0

    def step(self, grads: dict):
        c = self.cfg
        self.t += 1
        bc1 = 1 - c.beta1 ** self.t
        bc2 = 1 - c.beta2 ** self.t
        for k in sorted(self.params):
            g = grads[k]
            self.m[k] = c.beta1 * self.m[k] + (1 - c.beta1) * g
            self.v[k] = c.beta2 * self.v[k] + (1 - c.beta2) * g * g
            self.params[k] -= c.lr * (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + c.eps)


def clip_gradients(grads: dict, max_norm: float) -> float:
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for _, g in sorted(grads.items()))))
    if norm > max_norm:
        scale = max_norm / norm
        for k in grads:
            grads[k] = grads[k] * scale
    return norm


@dataclass
class TrainReport:
    epochs_run: int = 0
    best_epoch: int = 0
    metric: str = "pos"
    best_dev_f1: float | None = None
    skipped: int = 0
    history: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def dev_f1(model, dev, mode="pos") -> float:
    if not dev:
        return 0.0
    gold = [t for _, t in dev]
    pred = predict(model, [x for x, _ in dev])
    return score(gold, pred, mode).f1


def dev_pos_f1(model, dev) -> float:
    return dev_f1(model, dev, "pos")


def train(model: LabelerModel, data: Sequence, dev: Sequence | None, cfg: TrainConfig):
    """Mini-batch Adam on the constrained NLL with dev-based early stopping.

    ``data`` holds ``(chars, LabelConstraint)`` pairs, ``dev`` holds
    ``(chars, gold hybrid tags)``. Starts from a copy of ``model`` with a fresh
    optimizer state. Returns the best checkpoint by dev POS-F1 (the starting
    point included) and a :class:`TrainReport`. ``cfg.select="wsg"`` selects by
    dev WSG-F1 instead, for stages whose labels carry no POS.
    """
    if cfg.select not in ("pos", "wsg"):
        raise ModelError(f"unknown selection metric {cfg.select!r}")
    if not data:
        raise ModelError("no training data")
    model = model.copy()
    report = TrainReport()
    usable = []
    for i, (x, c) in enumerate(data):
        if len(x) != len(c) or not crf.feasible(c.allowed, model.transitions):
            log.warning("skipping training sentence %d: infeasible constraint", i)
            report.skipped += 1
        else:
            usable.append((x, c))
    if not usable:
        raise InfeasibleConstraintError("every training sentence has an infeasible constraint")

    rng = np.random.default_rng(cfg.seed)
    params = model.parameters()
    opt = Adam(params, cfg)
    best = model.copy()
    best_f1 = dev_f1(model, dev, cfg.select) if dev else None
    report.metric, report.best_dev_f1 = cfg.select, best_f1
    report.history.append({"epoch": 0, "loss": None, "dev_f1": best_f1})
    stale = 0
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(usable))
        total = 0.0
        for k in range(0, len(order), cfg.batch_size):
            batch = [usable[i] for i in order[k : k + cfg.batch_size]]
            loss, grads = batch_loss_and_gradients(model, [x for x, _ in batch], [c for _, c in batch])
            n = len(batch)
            grads = {name: g / n for name, g in grads.items()}
            clip_gradients(grads, cfg.clip)
            opt.step(grads)
            model.transitions.apply_mask()
            total += loss
        report.epochs_run = epoch
        mean_loss = total / len(usable)
        entry = {"epoch": epoch, "loss": mean_loss}
        if dev:
            f1 = dev_f1(model, dev, cfg.select)
            entry["dev_f1"] = f1
            if f1 > best_f1:
                best, best_f1, stale = model.copy(), f1, 0
                report.best_epoch, report.best_dev_f1 = epoch, f1
            else:
                stale += 1
        else:
            best, report.best_epoch = model.copy(), epoch
        report.history.append(entry)
        log.info("epoch %d loss %.4f dev %s-F1 %s", epoch, mean_loss, cfg.select.upper(), entry.get("dev_f1"))
        if dev and stale >= cfg.patience:
            break
    return best, report


def predict(model: LabelerModel, sentences: Sequence, batch_size: int = 256) -> list:
    """Viterbi hybrid tag sequences, one per input sentence."""
    out = []
    enc = model.encoder
    for k in range(0, len(sentences), batch_size):
        chunk = sentences[k : k + batch_size]
        ids, lengths = _pad([enc.ids(x) for x in chunk])
        H, _ = _encode_batch(ids, lengths, enc)
        S = H @ model.head.W + model.head.b
        for path in crf.viterbi_batch(S, lengths, model.transitions):
            out.append(model.tagset.decode(path))
    return out


# --- checkpoint file ------------------------------------------------------

def to_document(model: LabelerModel) -> dict:
    enc = model.encoder
    vocab = sorted(enc.vocab, key=enc.vocab.get)
    return {
        "format_version": FORMAT_VERSION,
        "tagset": list(model.tagset.pos_set.tags),
        "hyperparameters": {"d_e": enc.d_e, "d": enc.d, "window": enc.window},
        "vocab": vocab,
        "params": {k: p.tolist() for k, p in model.parameters().items()},
    }


def from_document(doc: dict) -> LabelerModel:
    if doc.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"unsupported checkpoint format_version {doc.get('format_version')!r}")
    try:
        ts = HybridTagSet(PosTagSet(tuple(doc["tagset"])))
        hp = doc["hyperparameters"]
        p = {k: np.array(v, dtype=np.float64) for k, v in doc["params"].items()}
        vocab = {c: i for i, c in enumerate(doc["vocab"])}
        T = TransitionParams(p["M"], p["start"], p["stop"], ts.transition_mask(), ts.start_mask(), ts.stop_mask())
        enc = EncoderParams(vocab, p["embeddings"].reshape(len(vocab), hp["d_e"]), int(hp["window"]),
                            p["projection"].reshape(-1, hp["d"]), p["proj_bias"])
        return LabelerModel(enc, EmissionHead(p["W_s"].reshape(hp["d"], len(ts)), p["b_s"]), T, ts)
    except (KeyError, ValueError, TypeError) as e:
        raise FormatError(f"malformed checkpoint: {e}") from None


def dumps_checkpoint(model: LabelerModel) -> str:
    return json.dumps(to_document(model), ensure_ascii=False, sort_keys=True, allow_nan=False)


def save_checkpoint(model: LabelerModel, path):
    Path(path).write_text(dumps_checkpoint(model) + "\n", encoding="utf-8")


def load_checkpoint(path) -> LabelerModel:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise FormatError(f"not a JSON checkpoint: {e}", path=path, line=e.lineno) from None
    return from_document(doc)
