"""Annotation projection from POS-tagged modern sentences onto ancient characters.

Each ancient character takes its best-aligned modern word. Maximal runs of
adjacent characters linked to the same modern token occurrence become one word
with that token's POS mapped into the ancient tag set; an unaligned character
becomes a single-character word with unknown POS.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from importlib import resources
from typing import Sequence

from .aligner import AlignmentResult, ParallelPair, TranslationTable, best_alignment
from .errors import CorpusError, FormatError
from .tagset import UNKNOWN, HybridTag, Span, decode_tags, encode_segmentation

log = logging.getLogger(__name__)


class PosMappingDict:
    """Modern POS -> ancient POS, where ``None`` marks a null mapping."""

    def __init__(self, mapping: dict):
        self.mapping = dict(mapping)
        self._warned = set()

    def __len__(self):
        return len(self.mapping)

    def __contains__(self, key):
        return key in self.mapping

    @classmethod
    def from_lines(cls, lines, path=None):
        mapping = {}
        for lineno, line in enumerate(lines, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0]:
                raise FormatError("expected modern_pos<TAB>ancient_pos", path=path, line=lineno)
            if parts[0] in mapping:
                raise FormatError(f"duplicate key {parts[0]!r}", path=path, line=lineno)
            mapping[parts[0]] = None if parts[1] == "null" else parts[1]
        return cls(mapping)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as f:
            return cls.from_lines(f, path)

    @classmethod
    def default(cls):
        text = resources.files("distag").joinpath("data/pos_map.tsv").read_text(encoding="utf-8")
        return cls.from_lines(text.splitlines())

    def dump(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for k, v in self.mapping.items():
                f.write(f"{k}\t{'null' if v is None else v}\n")

    def lookup(self, modern_pos):
        if modern_pos not in self.mapping:
            if modern_pos not in self._warned:
                self._warned.add(modern_pos)
                log.warning("modern POS %r missing from the mapping dictionary", modern_pos)
            return UNKNOWN
        value = self.mapping[modern_pos]
        return UNKNOWN if value is None else value


def map_pos(modern_pos: str, mapping: PosMappingDict) -> str:
    return mapping.lookup(modern_pos)


@dataclass(frozen=True)
class TaggedModernSentence:
    words: tuple

    def __post_init__(self):
        object.__setattr__(self, "words", tuple((w, p) for w, p in self.words))
        if not self.words:
            raise CorpusError("empty modern sentence")

    @property
    def surfaces(self):
        return tuple(w for w, _ in self.words)


@dataclass(frozen=True)
class WeaklyLabeledSentence:
    chars: tuple
    tags: tuple

    def __post_init__(self):
        object.__setattr__(self, "chars", tuple(self.chars))
        object.__setattr__(self, "tags", tuple(HybridTag(*t) for t in self.tags))
        if len(self.chars) != len(self.tags):
            raise CorpusError("characters and tags differ in length")

    @property
    def spans(self):
        return decode_tags(self.tags)

    @property
    def unknown_words(self) -> int:
        return sum(1 for s in self.spans if s.pos == UNKNOWN)

    @property
    def complete(self) -> bool:
        return all(t.known for t in self.tags)


@dataclass
class ProjectionReport:
    sentences: int = 0
    chars: int = 0
    unaligned: int = 0
    unknown_pos_words: int = 0
    null_mapped_words: int = 0
    dictionary_misses: int = 0
    missing_keys: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def _runs(links):
    """Maximal runs of equal non-None links; None positions are singleton runs."""
    spans = []
    start = 0
    for j in range(1, len(links) + 1):
        if j == len(links) or links[j] is None or links[j] != links[start]:
            spans.append((start, j, links[start]))
            start = j
    return spans


def project(pair: ParallelPair, modern: TaggedModernSentence, align: AlignmentResult,
            mapping: PosMappingDict, report: ProjectionReport | None = None) -> WeaklyLabeledSentence:
    if len(align.links) != len(pair.target):
        raise CorpusError("alignment does not cover the ancient sentence")
    spans = []
    for start, end, link in _runs(align.links):
        if link is None:
            spans.append(Span(start, end, UNKNOWN))
            if report is not None:
                report.unaligned += 1
            continue
        if not 0 <= link < len(modern.words):
            raise CorpusError(f"alignment link {link} outside the modern sentence")
        modern_pos = modern.words[link][1]
        pos = mapping.lookup(modern_pos)
        if report is not None and pos == UNKNOWN:
            if modern_pos in mapping:
                report.null_mapped_words += 1
            else:
                report.dictionary_misses += 1
                if modern_pos not in report.missing_keys:
                    report.missing_keys.append(modern_pos)
        spans.append(Span(start, end, pos))
    out = WeaklyLabeledSentence(pair.target, encode_segmentation(spans))
    if report is not None:
        report.sentences += 1
        report.chars += len(pair.target)
        report.unknown_pos_words += sum(1 for s in spans if s.pos == UNKNOWN)
    return out


def project_corpus(pairs: Sequence[ParallelPair], moderns: Sequence[TaggedModernSentence],
                   table: TranslationTable, mapping: PosMappingDict, tau: float = 0.0):
    """Align and project every pair; returns ``(sentences, ProjectionReport)``."""
    if len(pairs) != len(moderns):
        raise CorpusError(f"{len(pairs)} parallel pairs but {len(moderns)} tagged modern sentences")
    report = ProjectionReport()
    out = []
    for i, (pair, modern) in enumerate(zip(pairs, moderns)):
        if tuple(pair.source) != modern.surfaces:
            raise CorpusError(f"pair {i}: modern tokens differ from the tagged sentence")
        out.append(project(pair, modern, best_alignment(pair, table, tau), mapping, report))
    report.missing_keys.sort()
    return out, report
