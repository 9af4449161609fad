"""Readers and writers for the corpus file formats.

All files are UTF-8 with LF newlines; characters are Unicode scalar values and
no normalization is applied.

``parallel_tsv``   one pair per line, ``ancient<TAB>modern``.
``tagged_words``   one sentence per line, space-separated ``surface/POS`` tokens;
                   the separator is the last unescaped ``/``, and ``/`` or ``\\``
                   inside a surface are written ``\\/`` and ``\\\\``.
``char_tags``      one ``char<TAB>tag`` per line, blank line after each sentence,
                   tags ``(B|M|E|S)-(pos|_)``.
"""
from __future__ import annotations

import json
import re
from pathlib import Path

from .aligner import load_table, save_table  # noqa: F401
from .errors import FormatError
from .labeler import load_checkpoint, save_checkpoint  # noqa: F401
from .projector import PosMappingDict, WeaklyLabeledSentence
from .tagset import HybridTag

TAG_RE = re.compile(r"^([BMES])-(\S+)$")


def _lines(path):
    with open(path, encoding="utf-8", newline="") as f:
        for lineno, line in enumerate(f, 1):
            yield lineno, line.rstrip("\n").rstrip("\r")


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)


# --- parallel_tsv ---------------------------------------------------------

def read_parallel(path) -> list:
    pairs = []
    for lineno, line in _lines(path):
        if not line.strip():
            continue
        ancient, sep, modern = line.partition("\t")
        if not sep:
            raise FormatError("missing TAB between ancient and modern text", path=path, line=lineno)
        pairs.append((ancient, modern))
    return pairs


def write_parallel(pairs, path):
    out = []
    for i, (ancient, modern) in enumerate(pairs):
        if not ancient.strip() or "\t" in ancient or any(c in "\r\n" for c in ancient + modern):
            raise FormatError("ancient text must be non-blank without TAB or line breaks", line=i + 1)
        out.append(f"{ancient}\t{modern}\n")
    _write(path, "".join(out))


# --- tagged_words ---------------------------------------------------------

def parse_token(token: str, path=None, line=None, index=None):
    """Splits at the last unescaped ``/``; only the surface is unescaped."""
    split_at = None
    i = 0
    chars = []  # (char, raw offset)
    while i < len(token):
        if token[i] == "\\" and i + 1 < len(token):
            chars.append((token[i + 1], i))
            i += 2
        else:
            if token[i] == "/":
                split_at = len(chars)
            chars.append((token[i], i))
            i += 1
    if split_at is None:
        raise FormatError(f"token {token!r} has no surface/POS separator", path=path, line=line, token=index)
    surface = "".join(c for c, _ in chars[:split_at])
    pos = token[chars[split_at][1] + 1:]
    if not surface or not pos:
        raise FormatError(f"token {token!r} has an empty surface or POS", path=path, line=line, token=index)
    return surface, pos


def format_token(surface: str, pos: str) -> str:
    if not surface or not pos or "/" in pos or any(c.isspace() for c in surface + pos):
        raise FormatError(f"cannot write token {surface!r}/{pos!r}")
    return surface.replace("\\", "\\\\").replace("/", "\\/") + "/" + pos


def read_tagged_words(path) -> list:
    """Sentences as lists of ``(surface, pos)``; empty lines are skipped."""
    out = []
    for lineno, line in _lines(path):
        tokens = line.split()
        if not tokens:
            continue
        out.append([parse_token(t, path, lineno, k + 1) for k, t in enumerate(tokens)])
    return out


def write_tagged_words(sentences, path):
    _write(path, "".join(" ".join(format_token(w, p) for w, p in s) + "\n" for s in sentences))


# --- char_tags ------------------------------------------------------------

def parse_tag(text, path=None, line=None):
    m = TAG_RE.match(text)
    if not m:
        raise FormatError(f"bad tag {text!r}", path=path, line=line, token=2)
    return HybridTag(m.group(1), m.group(2))


def read_char_tags(path) -> list:
    sentences = []
    chars, tags = [], []
    for lineno, line in _lines(path):
        if not line:
            if chars:
                sentences.append(WeaklyLabeledSentence(chars, tags))
                chars, tags = [], []
            continue
        char, sep, tag = line.partition("\t")
        if not sep or len(char) != 1:
            raise FormatError("expected one character, TAB, tag", path=path, line=lineno)
        chars.append(char)
        tags.append(parse_tag(tag, path, lineno))
    if chars:
        sentences.append(WeaklyLabeledSentence(chars, tags))
    return sentences


def write_char_tags(sentences, path):
    out = []
    for s in sentences:
        for c, t in zip(s.chars, s.tags):
            if len(c) != 1 or c in "\t\n\r":
                raise FormatError(f"cannot write character {c!r}")
            if not TAG_RE.match(str(t)):
                raise FormatError(f"cannot write tag {t}")
            out.append(f"{c}\t{t}\n")
        out.append("\n")
    _write(path, "".join(out))


# --- JSON documents -------------------------------------------------------

def write_json(doc, path):
    _write(path, json.dumps(doc, ensure_ascii=False, sort_keys=True, indent=2, allow_nan=False) + "\n")


def read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise FormatError(str(e), path=path, line=e.lineno) from None


def load_pos_map(path=None) -> PosMappingDict:
    return PosMappingDict.default() if path is None else PosMappingDict.load(path)
