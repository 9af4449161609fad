"""Span-level segmentation and POS F1."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Sequence

from .errors import EvalError
from .tagset import UNKNOWN, decode_tags

MODES = ("wsg", "pos")


@dataclass(frozen=True)
class Metrics:
    precision: float
    recall: float
    f1: float
    gold: int
    predicted: int
    matched: int

    @classmethod
    def from_counts(cls, gold, predicted, matched):
        p = matched / predicted if predicted else 0.0
        r = matched / gold if gold else 0.0
        f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
        return cls(p, r, f1, gold, predicted, matched)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def _spans(tags, mode):
    spans = decode_tags(tags)
    if mode == "wsg":
        return {(s, e) for s, e, _ in spans}
    return {(s, e, p) for s, e, p in spans if p != UNKNOWN}


def sentence_counts(gold, pred, mode):
    if mode not in MODES:
        raise EvalError(f"unknown mode {mode!r}")
    if len(gold) != len(pred):
        raise EvalError(f"sentence lengths differ: gold {len(gold)}, predicted {len(pred)}")
    g = _spans(gold, mode)
    p = _spans(pred, mode)
    if mode == "pos":
        # unknown-POS gold words are neither matched nor counted against
        gold_unknown = {(s, e) for s, e, pos in decode_tags(gold) if pos == UNKNOWN}
        p = {span for span in p if span[:2] not in gold_unknown}
    return len(g), len(p), len(g & p)


def score(gold: Sequence, pred: Sequence, mode: str) -> Metrics:
    """Micro-averaged span F1 over a corpus of hybrid tag sequences.

    ``wsg`` matches on ``(start, end)``, ``pos`` on ``(start, end, pos)``.
    """
    if len(gold) != len(pred):
        raise EvalError(f"corpus sizes differ: gold {len(gold)}, predicted {len(pred)}")
    ng = npred = nm = 0
    for i, (g, p) in enumerate(zip(gold, pred)):
        try:
            a, b, c = sentence_counts(g, p, mode)
        except EvalError as e:
            raise EvalError(f"sentence {i}: {e}") from None
        ng += a
        npred += b
        nm += c
    return Metrics.from_counts(ng, npred, nm)


def score_both(gold, pred) -> dict:
    return {f"{m.upper()}-F1": score(gold, pred, m).f1 for m in MODES}


def error_listing(chars, gold, pred) -> str:
    """Plain-text diff of sentences whose spans disagree."""
    lines = []
    for i, (x, g, p) in enumerate(zip(chars, gold, pred)):
        gs, ps = decode_tags(g), decode_tags(p)
        if gs == ps:
            continue
        lines.append(f"# sentence {i}")
        lines.append("- " + " ".join(f"{''.join(x[s:e])}/{pos}" for s, e, pos in gs))
        lines.append("+ " + " ".join(f"{''.join(x[s:e])}/{pos}" for s, e, pos in ps))
    return "\n".join(lines) + ("\n" if lines else "")
