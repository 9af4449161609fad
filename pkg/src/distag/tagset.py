"""Hybrid BMES x POS tag space.

A hybrid tag pairs a word-boundary letter with a POS label, so joint
segmentation and tagging becomes one character-level labeling problem with
``4 * |POS|`` labels. Weak labels may carry the unknown POS marker ``"_"``;
such tags have no integer index.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import SegmentationError, TagSetError

BOUNDARIES = ("B", "M", "E", "S")
UNKNOWN = "_"


class HybridTag(NamedTuple):
    boundary: str
    pos: str

    def __str__(self):
        return f"{self.boundary}-{self.pos}"

    @classmethod
    def parse(cls, text: str) -> "HybridTag":
        b, sep, pos = text.partition("-")
        if not sep or b not in BOUNDARIES or not pos:
            raise TagSetError(f"malformed hybrid tag {text!r}")
        return cls(b, pos)

    @property
    def known(self) -> bool:
        return self.pos != UNKNOWN


class Span(NamedTuple):
    start: int
    end: int
    pos: str


Segmentation = list  # list[Span]


@dataclass(frozen=True)
class PosTagSet:
    tags: tuple
    unknown_marker: str = UNKNOWN

    def __post_init__(self):
        tags = tuple(self.tags)
        object.__setattr__(self, "tags", tags)
        if len(set(tags)) != len(tags):
            raise TagSetError("duplicate POS tags")
        for t in tags:
            if not t or t == self.unknown_marker or "-" in t or any(c.isspace() for c in t):
                raise TagSetError(f"invalid POS tag {t!r}")

    def __len__(self):
        return len(self.tags)

    def __contains__(self, pos):
        return pos in self.tags

    @classmethod
    def from_lines(cls, lines: Iterable[str]) -> "PosTagSet":
        tags = []
        for line in lines:
            line = line.split("#", 1)[0].strip()
            if line:
                tags.append(line)
        return cls(tuple(tags))

    @classmethod
    def load(cls, path) -> "PosTagSet":
        with open(path, encoding="utf-8") as f:
            return cls.from_lines(f)

    @classmethod
    def default(cls) -> "PosTagSet":
        text = resources.files("distag").joinpath("data/pos_tags.txt").read_text(encoding="utf-8")
        return cls.from_lines(text.splitlines())

    def dump(self, path):
        Path(path).write_text("".join(t + "\n" for t in self.tags), encoding="utf-8")


@dataclass(frozen=True)
class HybridTagSet:
    """Integer codec over all ``boundary x pos`` pairs.

    Index layout is ``index = 4 * pos_index + boundary_index``, so the four
    boundary variants of one POS are adjacent.
    """

    pos_set: PosTagSet
    _index: dict = field(init=False, repr=False, compare=False)
    _tags: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        tags = tuple(HybridTag(b, p) for p in self.pos_set.tags for b in BOUNDARIES)
        object.__setattr__(self, "_tags", tags)
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(tags)})

    @classmethod
    def default(cls) -> "HybridTagSet":
        return cls(PosTagSet.default())

    @classmethod
    def from_pos(cls, tags: Sequence[str]) -> "HybridTagSet":
        return cls(PosTagSet(tuple(tags)))

    def __len__(self):
        return len(self._tags)

    @property
    def size(self) -> int:
        return len(self._tags)

    @property
    def tags(self) -> tuple:
        return self._tags

    def index(self, tag: HybridTag) -> int:
        try:
            return self._index[tag]
        except KeyError:
            raise TagSetError(f"tag {tag} is not in the tag set") from None

    def tag(self, i: int) -> HybridTag:
        if not 0 <= i < len(self._tags):
            raise TagSetError(f"tag index {i} out of range")
        return self._tags[i]

    def encode(self, tags: Sequence[HybridTag]) -> list:
        return [self.index(t) for t in tags]

    def decode(self, ids: Iterable[int]) -> list:
        return [self._tags[int(i)] for i in ids]

    def boundary_ids(self, boundary: str) -> list:
        """Indices of every tag with the given boundary letter."""
        b = BOUNDARIES.index(boundary)
        return list(range(b, len(self._tags), 4))

    def pos_ids(self, pos: str) -> list:
        p = self.pos_set.tags.index(pos)
        return list(range(4 * p, 4 * p + 4))

    def transition_mask(self) -> np.ndarray:
        v = len(self._tags)
        mask = np.zeros((v, v), dtype=bool)
        for i, a in enumerate(self._tags):
            for j, b in enumerate(self._tags):
                mask[i, j] = is_valid_transition(a, b)
        return mask

    def start_mask(self) -> np.ndarray:
        return np.array([t.boundary in "BS" for t in self._tags])

    def stop_mask(self) -> np.ndarray:
        return np.array([t.boundary in "ES" for t in self._tags])


def hybrid_index(tag: HybridTag, ts: HybridTagSet) -> int:
    if tag.pos == UNKNOWN:
        raise TagSetError("tags with unknown POS have no index")
    return ts.index(tag)


def hybrid_tag(i: int, ts: HybridTagSet) -> HybridTag:
    return ts.tag(i)


def is_valid_transition(a: HybridTag, b: HybridTag) -> bool:
    if a.boundary in "ES":
        return b.boundary in "BS"
    return b.boundary in "ME" and a.pos == b.pos


def validate_segmentation(seg: Sequence[Span], n: int | None = None) -> None:
    pos = 0
    for span in seg:
        start, end, _ = span
        if start != pos or end <= start:
            raise SegmentationError(f"span {tuple(span)} breaks the contiguous cover at {pos}")
        pos = end
    if n is not None and pos != n:
        raise SegmentationError(f"segmentation covers {pos} characters, expected {n}")


def encode_segmentation(seg: Sequence[Span]) -> list:
    validate_segmentation(seg)
    out = []
    for start, end, pos in seg:
        length = end - start
        if length == 1:
            out.append(HybridTag("S", pos))
        else:
            out.append(HybridTag("B", pos))
            out.extend(HybridTag("M", pos) for _ in range(length - 2))
            out.append(HybridTag("E", pos))
    return out


def decode_tags(tags: Sequence[HybridTag]) -> list:
    """Spans of a tag sequence; total on ill-formed input.

    M or E without an open word starts a word, and a word still open at the end
    is closed there. A word takes the POS of its first character.
    """
    spans = []
    start = None
    pos = None
    for i, (b, p) in enumerate(tags):
        if b in "BS" or start is None:
            if start is not None:
                spans.append(Span(start, i, pos))
            start, pos = i, p
        if b in "ES":
            spans.append(Span(start, i + 1, pos))
            start = None
    if start is not None:
        spans.append(Span(start, len(tags), pos))
    return spans


def words_to_segmentation(words: Sequence[tuple]) -> list:
    """``[(surface, pos), ...]`` to character spans."""
    spans = []
    i = 0
    for surface, pos in words:
        if not surface:
            raise SegmentationError("empty word")
        spans.append(Span(i, i + len(surface), pos))
        i += len(surface)
    return spans
