"""IBM Model 1 word alignment trained by EM, modern words -> ancient chars.

Source side is a list of modern word tokens, target side a list of ancient
characters. Every target character is generated by one source token or by the
``NULL`` word. An optional Model 2 extension adds a learned position table
``a(i | j, l, m)``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import AlignError, FormatError

log = logging.getLogger(__name__)

NULL = "<NULL>"
MIN_WRITTEN = 1e-12


@dataclass(frozen=True)
class ParallelPair:
    source: tuple
    target: tuple

    def __post_init__(self):
        object.__setattr__(self, "source", tuple(self.source))
        object.__setattr__(self, "target", tuple(self.target))
        if not self.source or not self.target:
            raise AlignError("parallel pair sides must be non-empty")


@dataclass
class TranslationTable:
    """``t[e, f] = t(f | e)``; row 0 is the NULL word."""

    sources: list
    targets: list
    t: np.ndarray
    distortion: dict | None = None
    log_likelihood: list = field(default_factory=list)

    def __post_init__(self):
        self._src = {e: i for i, e in enumerate(self.sources)}
        self._tgt = {f: i for i, f in enumerate(self.targets)}

    def prob(self, f, e) -> float:
        i, j = self._src.get(e), self._tgt.get(f)
        if i is None or j is None:
            return 0.0
        return float(self.t[i, j])

    def source_ids(self, words):
        """Row indices for ``words`` followed by NULL; unseen words get None."""
        return [self._src.get(w) for w in words] + [0]

    def target_ids(self, chars):
        return [self._tgt.get(c) for c in chars]

    def entries(self):
        for i, e in enumerate(self.sources):
            for j, f in enumerate(self.targets):
                if self.t[i, j] >= MIN_WRITTEN:
                    yield e, f, float(self.t[i, j])


@dataclass
class AlignmentResult:
    links: list
    probs: list

    @property
    def unaligned(self) -> int:
        return sum(1 for x in self.links if x is None)


def _index(pairs, null_word=True):
    sources = [NULL] + sorted({w for p in pairs for w in p.source})
    targets = sorted({c for p in pairs for c in p.target})
    src = {e: i for i, e in enumerate(sources)}
    tgt = {f: i for i, f in enumerate(targets)}
    tail = [0] if null_word else []
    encoded = [
        (np.array([src[w] for w in p.source] + tail), np.array([tgt[c] for c in p.target]))
        for p in pairs
    ]
    return sources, targets, encoded


def _position_prior(dist, l, m):
    if dist is None:
        return None
    return dist[(l, m)]


def _corpus_pass(t, encoded, dist):
    """One E-step: expected counts, position counts and the corpus log-likelihood."""
    counts = np.zeros_like(t)
    pos_counts = {} if dist is not None else None
    ll = 0.0
    for e_ids, f_ids in encoded:
        l, m = len(e_ids) - 1, len(f_ids)
        joint = t[np.ix_(e_ids, f_ids)]  # (l+1, m)
        prior = _position_prior(dist, l, m)
        joint = joint * (prior.T if prior is not None else 1.0 / len(e_ids))
        z = joint.sum(axis=0)
        ll += float(np.sum(np.log(z)))
        post = joint / z
        np.add.at(counts, (e_ids[:, None], f_ids[None, :]), post)
        if pos_counts is not None:
            key = (l, m)
            pos_counts[key] = pos_counts.get(key, 0.0) + post.T
    return counts, pos_counts, ll


def em_train(pairs: Sequence[ParallelPair], iters: int = 10, smoothing: float = 1e-6,
             distortion: bool = False, null_word: bool = True) -> TranslationTable:
    """EM for IBM Model 1 (or Model 2 with ``distortion=True``).

    Uniform initialization; additive ``smoothing`` is added to every expected
    count in the M-step. ``log_likelihood[k]`` is the corpus log-likelihood of
    the table after ``k`` M-steps (entry 0 is the uniform start).
    ``null_word=False`` gives the textbook variant without NULL generation; the
    NULL row then keeps its uniform initial value and is never used.
    """
    if not pairs:
        raise AlignError("cannot train on an empty corpus")
    if iters < 1:
        raise AlignError("need at least one EM iteration")
    if smoothing < 0:
        raise AlignError("smoothing must be non-negative")
    sources, targets, encoded = _index(pairs, null_word)
    t = np.full((len(sources), len(targets)), 1.0 / len(targets))
    dist = None
    if distortion:
        dist = {}
        for e_ids, f_ids in encoded:
            l, m = len(e_ids) - 1, len(f_ids)
            dist[(l, m)] = np.full((m, l + 1), 1.0 / (l + 1))
    if distortion and not null_word:
        raise AlignError("the distortion model requires the NULL word")
    history = []
    for k in range(iters):
        counts, pos_counts, ll = _corpus_pass(t, encoded, dist)
        history.append(ll)
        counts += smoothing
        if not null_word:
            counts[0] = 1.0
        t = counts / counts.sum(axis=1, keepdims=True)
        if dist is not None:
            dist = {key: c / c.sum(axis=1, keepdims=True) for key, c in sorted(pos_counts.items())}
        log.debug("EM iteration %d log-likelihood %.6f", k + 1, ll)
    history.append(_corpus_pass(t, encoded, dist)[2])
    return TranslationTable(sources, targets, t, dist, history)


def posterior(pair: ParallelPair, table: TranslationTable) -> np.ndarray:
    """Rows: target chars; columns: source tokens in order, then NULL last.

    Unknown words or characters get zero lexical probability; a row with no
    mass at all falls back to uniform.
    """
    src = table.source_ids(pair.source)
    tgt = table.target_ids(pair.target)
    l, m = len(pair.source), len(pair.target)
    probs = np.zeros((m, l + 1))
    for j, f in enumerate(tgt):
        if f is None:
            continue
        for i, e in enumerate(src):
            if e is not None:
                probs[j, i] = table.t[e, f]
    if table.distortion is not None and (l, m) in table.distortion:
        probs *= table.distortion[(l, m)]
    z = probs.sum(axis=1, keepdims=True)
    return np.where(z > 0, probs / np.where(z > 0, z, 1.0), 1.0 / (l + 1))


def best_alignment(pair: ParallelPair, table: TranslationTable, tau: float = 0.0) -> AlignmentResult:
    """Most probable source token per character.

    Ties go to the smallest token index, and NULL loses every tie. A character
    whose winner is NULL, or whose winning posterior is below ``tau``, is
    unaligned (``None``).
    """
    if not 0.0 <= tau < 1.0:
        raise AlignError("tau must lie in [0, 1)")
    post = posterior(pair, table)
    null = len(pair.source)
    links, probs = [], []
    for row in post:
        i = int(np.argmax(row))
        p = float(row[i])
        links.append(None if i == null or p < tau else i)
        probs.append(p)
    return AlignmentResult(links, probs)


def save_table(table: TranslationTable, path):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for e, c, p in table.entries():
            f.write(f"{e}\t{c}\t{p:.17g}\n")


def load_table(path) -> TranslationTable:
    rows = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise FormatError("expected source<TAB>target<TAB>probability", path=path, line=lineno)
            try:
                p = float(parts[2])
            except ValueError:
                raise FormatError(f"bad probability {parts[2]!r}", path=path, line=lineno, token=3) from None
            if not (p >= 0 and math.isfinite(p)):
                raise FormatError(f"probability out of range: {p}", path=path, line=lineno, token=3)
            rows.append((parts[0], parts[1], p))
    sources = [NULL] + sorted({e for e, _, _ in rows if e != NULL})
    targets = sorted({c for _, c, _ in rows})
    src = {e: i for i, e in enumerate(sources)}
    tgt = {c: i for i, c in enumerate(targets)}
    t = np.zeros((len(sources), len(targets)))
    for e, c, p in rows:
        t[src[e], tgt[c]] = p
    return TranslationTable(sources, targets, t)
