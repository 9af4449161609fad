"""Seeded synthetic "ancient/modern" parallel corpus with known gold labels.

Ancient sentences come from a POS-bigram chain over a lexicon of 1-3 character
words whose characters are shared across entries. Each lexicon entry has one
modern translation token, tagged with a modern POS that maps back to the gold
ancient POS. The ``noise`` rate r controls both kinds of corruption that make
projected labels imperfect:

* per lexicon entry, with probability r, one systematic distortion: the
  translation splits into two tokens, carries a wrong POS, is missing, or
  carries a POS the mapping table sends to null;
* per occurrence, each with probability r/3: merge with the next word into
  one compound token, tagger slip to a random POS, dropped translation,
  inserted function word, and adjacent token swaps.

With ``noise=0`` every character's gold link is unambiguous and projecting
through it reproduces the gold segmentation and POS exactly.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..corpus_io import write_json, write_parallel, write_tagged_words
from ..projector import PosMappingDict

ANCIENT_BASE = 0x4E00
MODERN_BASE = 0x6C00


@dataclass
class SynthConfig:
    pairs: int = 2000
    annotated: int = 200
    test_a: int = 300
    test_b: int = 300
    lexicon: int = 500
    chars: int = 300
    word_lengths: tuple = (0.5, 0.38, 0.12)
    min_words: int = 3
    max_words: int = 9
    zipf: float = 1.0
    shift_zipf: float = 0.6
    ambiguous: float = 0.25
    noise: float = 0.3
    seed: int = 0
    pos: list = field(default_factory=list)

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: (tuple(v) if k == "word_lengths" else v) for k, v in d.items() if k in cls.__dataclass_fields__})


@dataclass
class Sentence:
    words: list            # [(ancient surface, gold POS)]
    modern: list           # [(modern surface, modern POS)]
    links: list            # gold source token per ancient char, or None


def _zipf_weights(n, s, rng):
    w = 1.0 / np.arange(1, n + 1) ** s
    return w[rng.permutation(n)] / w.sum()


class Generator:
    def __init__(self, cfg: SynthConfig, mapping: PosMappingDict | None = None):
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed)
        mapping = mapping or PosMappingDict.default()
        inverse = {}
        for modern, ancient in mapping.mapping.items():
            inverse.setdefault(ancient, []).append(modern)
        self.null_tags = sorted(inverse.pop(None, []))
        self.modern_tags = sorted(mapping.mapping)
        self.pos = list(cfg.pos) or sorted(inverse)
        self.inverse = {p: sorted(inverse[p]) for p in self.pos}
        self._build_grammar()
        self._build_lexicon()

    def _build_grammar(self):
        rng, k = self.rng, len(self.pos)
        self.pos_freq = _zipf_weights(k, 0.8, rng)
        self.trans = rng.dirichlet(np.full(k, 0.3), size=k) * 0.7 + 0.3 * self.pos_freq
        self.start = self.pos_freq
        # second test domain: perturbed grammar
        shifted = rng.dirichlet(np.full(k, 0.3), size=k)
        self.trans_b = 0.6 * self.trans + 0.4 * shifted

    def _new_surface(self, base, alphabet, length, weights, used):
        while True:
            s = "".join(chr(base + int(i)) for i in self.rng.choice(alphabet, size=length, p=weights))
            if s not in used:
                used.add(s)
                return s

    def _build_lexicon(self):
        cfg, rng = self.cfg, self.rng
        char_w = _zipf_weights(cfg.chars, 0.7, rng)
        used_a, used_m = set(), set()
        self.lexicon = []
        for k in range(cfg.lexicon):
            length = 1 + int(rng.choice(3, p=cfg.word_lengths))
            surface = self._new_surface(ANCIENT_BASE, cfg.chars, length, char_w, used_a)
            # every POS gets words
            primary = self.pos[k % len(self.pos)] if k < 3 * len(self.pos) else self.pos[rng.choice(len(self.pos), p=self.pos_freq)]
            tags = [primary]
            if rng.random() < cfg.ambiguous:
                other = self.pos[rng.choice(len(self.pos), p=self.pos_freq)]
                if other != primary:
                    tags.append(other)
            modern = self._new_surface(MODERN_BASE, 2000, 2, None, used_m)
            modern_pos = {p: self.inverse[p][rng.integers(len(self.inverse[p]))] for p in tags}
            distortion = None
            if rng.random() < cfg.noise:
                options = ["pos", "drop", "null"] + (["split"] * 2 if length > 1 else [])
                distortion = options[rng.integers(len(options))]
            entry = {"surface": surface, "pos": tags, "modern": modern, "modern_pos": modern_pos,
                     "distortion": distortion}
            if distortion == "split":
                entry["split_at"] = int(rng.integers(1, length))
                entry["modern2"] = self._new_surface(MODERN_BASE, 2000, 2, None, used_m)
                entry["modern2_pos"] = self.modern_tags[rng.integers(len(self.modern_tags))]
            elif distortion == "pos":
                wrong = [p for p in self.pos if p not in tags]
                bad = wrong[rng.integers(len(wrong))]
                entry["modern_pos"] = {p: self.inverse[bad][0] for p in tags}
            elif distortion == "null":
                entry["modern_pos"] = {p: self.null_tags[rng.integers(len(self.null_tags))] for p in tags}
            self.lexicon.append(entry)
        self.particles = [(self._new_surface(MODERN_BASE, 2000, 1, None, used_m), "u") for _ in range(4)]
        self.by_pos = {}
        for i, e in enumerate(self.lexicon):
            for p in e["pos"]:
                self.by_pos.setdefault(p, []).append(i)
        self.word_w = {s: _zipf_weights(len(self.lexicon), s, rng) for s in (cfg.zipf, cfg.shift_zipf)}

    def _pick_word(self, pos, zipf):
        cands = self.by_pos[pos]
        w = self.word_w[zipf][cands]
        return cands[self.rng.choice(len(cands), p=w / w.sum())]

    def ancient_sentence(self, domain="a"):
        cfg, rng = self.cfg, self.rng
        trans = self.trans if domain == "a" else self.trans_b
        zipf = cfg.zipf if domain == "a" else cfg.shift_zipf
        n = int(rng.integers(cfg.min_words, cfg.max_words + 1))
        p = int(rng.choice(len(self.pos), p=self.start))
        words = []
        for _ in range(n):
            if p >= len(self.pos) or self.pos[p] not in self.by_pos:
                p = int(rng.choice(len(self.pos), p=self.start))
            pos = self.pos[p]
            words.append((self._pick_word(pos, zipf), pos))
            p = int(rng.choice(len(self.pos), p=trans[p]))
        return words

    def parallel_sentence(self, domain="a") -> Sentence:
        rng, r = self.rng, self.cfg.noise
        words = self.ancient_sentence(domain)
        tokens = []      # [modern surface, modern POS]
        char_owner = []  # token index per ancient char, None when dropped
        k = 0
        while k < len(words):
            idx, pos = words[k]
            e = self.lexicon[idx]
            n = len(e["surface"])
            if e["distortion"] == "drop" or rng.random() < r / 3:
                char_owner.extend([None] * n)
            elif k + 1 < len(words) and rng.random() < r / 3:
                idx2, pos2 = words[k + 1]
                e2 = self.lexicon[idx2]
                tokens.append([e["modern"] + e2["modern"], e["modern_pos"][pos]])
                char_owner.extend([len(tokens) - 1] * (n + len(e2["surface"])))
                k += 2
                continue
            elif e["distortion"] == "split":
                cut = e["split_at"]
                tokens.append([e["modern"], e["modern_pos"][pos]])
                char_owner.extend([len(tokens) - 1] * cut)
                tokens.append([e["modern2"], e["modern2_pos"]])
                char_owner.extend([len(tokens) - 1] * (n - cut))
            else:
                mpos = e["modern_pos"][pos]
                if rng.random() < r / 3:
                    mpos = self.modern_tags[rng.integers(len(self.modern_tags))]
                tokens.append([e["modern"], mpos])
                char_owner.extend([len(tokens) - 1] * n)
            k += 1
        # insertions and swaps permute token order; links follow the tokens
        order = list(range(len(tokens)))
        if rng.random() < r / 3:
            order.insert(int(rng.integers(len(order) + 1)), -1 - int(rng.integers(len(self.particles))))
        if len(order) > 1 and rng.random() < r / 3:
            j = int(rng.integers(len(order) - 1))
            order[j], order[j + 1] = order[j + 1], order[j]
        if not order:
            order = [-1]
        modern = [tuple(tokens[i]) if i >= 0 else self.particles[-1 - i] for i in order]
        where = {old: new for new, old in enumerate(order) if old >= 0}
        links = [None if o is None else where[o] for o in char_owner]
        gold = [(self.lexicon[i]["surface"], p) for i, p in words]
        return Sentence(gold, modern, links)

    def gold_sentence(self, domain="a"):
        return [(self.lexicon[i]["surface"], p) for i, p in self.ancient_sentence(domain)]


def generate(cfg: SynthConfig) -> dict:
    g = Generator(cfg)
    parallel = [g.parallel_sentence("a") for _ in range(cfg.pairs)]
    return {
        "parallel": parallel,
        "annotated": [g.gold_sentence("a") for _ in range(cfg.annotated)],
        "test_a": [g.gold_sentence("a") for _ in range(cfg.test_a)],
        "test_b": [g.gold_sentence("b") for _ in range(cfg.test_b)],
    }


def write_corpus(corpus: dict, cfg: SynthConfig, out) -> dict:
    """Writes the corpus files and a ready-to-run pipeline config; returns the config."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    parallel = corpus["parallel"]
    write_parallel([("".join(w for w, _ in s.words), " ".join(m for m, _ in s.modern)) for s in parallel],
                   out / "parallel.tsv")
    write_tagged_words([s.modern for s in parallel], out / "modern_tagged.txt")
    write_tagged_words([s.words for s in parallel], out / "parallel_gold.txt")
    with open(out / "gold_links.txt", "w", encoding="utf-8", newline="\n") as f:
        for s in parallel:
            f.write(" ".join("-" if x is None else str(x) for x in s.links) + "\n")
    for name in ("annotated", "test_a", "test_b"):
        write_tagged_words(corpus[name], out / f"{name}.txt")
    d = asdict(cfg)
    d["word_lengths"] = list(cfg.word_lengths)
    write_json(d, out / "synth_config.json")
    pipeline = {
        "parallel": "parallel.tsv",
        "modern_tagged": "modern_tagged.txt",
        "annotated": "annotated.txt",
        "tests": {"test_a": "test_a.txt", "test_b": "test_b.txt"},
        "seed": cfg.seed,
    }
    write_json(pipeline, out / "pipeline.json")
    return pipeline


def load_synth_config(path) -> SynthConfig:
    return SynthConfig.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
