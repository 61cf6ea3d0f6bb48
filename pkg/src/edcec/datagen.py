"""Synthetic ASR-style corruption of clean sentences.

Rare words are turned into pseudo-homophones: a few random character
edits, then snapped to the closest common word by edit distance, the way
a recognizer falls back to an in-lexicon word.  Common words are dropped
or spuriously inserted at small rates.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .align import Triple
from .rarelist import build_utterance_list
from .wordlists import COMMON_WORDS, TRIGGER_WORDS, rare_inventory

log = logging.getLogger(__name__)

LETTERS = "abcdefghijklmnopqrstuvwxyz"


@dataclass
class CorruptionConfig:
    p_sub_rare: float = 0.6
    p_del: float = 0.02
    p_ins: float = 0.02
    edit_intensity: int = 2  # max character edits per corrupted rare word
    seed: int = 0

    def __post_init__(self):
        for name in ("p_sub_rare", "p_del", "p_ins"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.edit_intensity < 1:
            raise ValueError("edit_intensity must be >= 1")


class Lexicon:
    """Nearest-word lookup by character edit distance (ties: lexicographic)."""

    def __init__(self, words: Sequence[str]):
        self.words = sorted(set(words))
        if not self.words:
            raise ValueError("empty lexicon")
        width = max(len(w) for w in self.words)
        self.lengths = np.array([len(w) for w in self.words])
        self.chars = np.full((len(self.words), width), -1, dtype=np.int32)
        for n, w in enumerate(self.words):
            self.chars[n, : len(w)] = [ord(c) for c in w]
        self._cache: dict[str, str] = {}

    def distances(self, query: str) -> np.ndarray:
        K, W = self.chars.shape
        prev = np.tile(np.arange(W + 1), (K, 1))
        for i, ch in enumerate(query, start=1):
            cur = np.empty_like(prev)
            cur[:, 0] = i
            diff = (self.chars != ord(ch)).astype(np.int64)
            for j in range(1, W + 1):
                cur[:, j] = np.minimum(np.minimum(prev[:, j] + 1, cur[:, j - 1] + 1), prev[:, j - 1] + diff[:, j - 1])
            prev = cur
        return prev[np.arange(K), self.lengths]

    def nearest(self, query: str) -> str:
        hit = self._cache.get(query)
        if hit is None:
            hit = self.words[int(np.argmin(self.distances(query)))]
            self._cache[query] = hit
        return hit


def char_edits(word: str, rng: np.random.Generator, n: int) -> str:
    chars = list(word)
    for _ in range(n):
        op = int(rng.integers(3))
        if op == 0 and chars:  # substitute
            chars[int(rng.integers(len(chars)))] = LETTERS[int(rng.integers(26))]
        elif op == 1 or not chars:  # insert
            chars.insert(int(rng.integers(len(chars) + 1)), LETTERS[int(rng.integers(26))])
        elif len(chars) > 1:  # delete
            del chars[int(rng.integers(len(chars)))]
    return "".join(chars)


def pseudo_homophone(word: str, lexicon: Lexicon, rng: np.random.Generator, intensity: int = 2) -> str:
    return lexicon.nearest(char_edits(word, rng, int(rng.integers(1, intensity + 1))))


def sentence_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, index])


def corrupt(tgt: Sequence[str], rare: set, lexicon: Lexicon, config: CorruptionConfig,
            rng: np.random.Generator) -> tuple[list[str], list[dict]]:
    """Corrupted copy of ``tgt`` plus one annotation per corruption."""
    src: list[str] = []
    notes: list[dict] = []
    for j, w in enumerate(tgt):
        if w.lower() in rare:
            if rare_hit := (config.p_sub_rare > 0 and rng.random() < config.p_sub_rare):
                new = pseudo_homophone(w.lower(), lexicon, rng, config.edit_intensity)
                notes.append({"type": "sub", "tgt_index": j, "src_index": len(src), "word": w, "as": new})
                src.append(new)
            if not rare_hit:
                src.append(w)
        elif config.p_del and rng.random() < config.p_del:
            notes.append({"type": "del", "tgt_index": j, "word": w})
        else:
            src.append(w)
        if config.p_ins and rng.random() < config.p_ins:
            new = lexicon.words[int(rng.integers(len(lexicon.words)))]
            notes.append({"type": "ins", "src_index": len(src), "word": new})
            src.append(new)
    if not src:
        return list(tgt), []
    return src, notes


def generate(
    clean: Sequence[Sequence[str]],
    full_list: Sequence[str],
    config: CorruptionConfig,
    list_size: int = 10,
    include_true: bool = True,
    common_words: Sequence[str] | None = None,
    start: int = 0,
) -> tuple[list[Triple], list[dict]]:
    """Corrupt every clean sentence and attach a per-utterance rare list.

    Returns the triples and a parallel list of annotation records.  Each
    sentence uses its own generator derived from (seed, index), so output
    does not depend on processing order; ``start`` offsets the index when
    ``clean`` is a slice of a larger corpus.
    """
    rare = {w.lower() for w in full_list}
    if not rare and config.p_sub_rare > 0:
        log.warning("empty rare list: rare-word substitutions skipped")
    if common_words is None:
        common_words = sorted({w.lower() for s in clean for w in s} - rare)
    lexicon = Lexicon(common_words)
    triples, notes = [], []
    for n, tgt in enumerate(clean, start=start):
        rng = sentence_rng(config.seed, n)
        src, ann = corrupt(tgt, rare, lexicon, config, rng)
        n_true = len({w.lower() for w in tgt if w.lower() in rare}) if include_true else 0
        lst = build_utterance_list(tgt, full_list, max(0, list_size - n_true),
                                   seed=int(rng.integers(2**31)), include_true=include_true)
        triples.append(Triple(src, list(tgt), lst.items))
        notes.append({"index": n, "corruptions": ann, "list": lst.provenance})
    return triples, notes


def make_clean_corpus(
    n: int,
    seed: int = 0,
    min_len: int = 6,
    max_len: int = 12,
    rare_words: Sequence[str] | None = None,
    rare_per_sentence: tuple[int, int] = (1, 2),
) -> list[list[str]]:
    """Word soup over the common inventory with planted "trigger rare" pairs.

    ``min_len``/``max_len`` bound the number of common filler words; each
    planted rare word adds two more words.
    """
    rare_words = list(rare_words) if rare_words is not None else rare_inventory()
    common = list(dict.fromkeys(COMMON_WORDS))
    rng = np.random.default_rng(seed)
    corpus = []
    for _ in range(n):
        n_fill = int(rng.integers(min_len, max_len + 1))
        units = [[common[i]] for i in rng.integers(len(common), size=n_fill)]
        k = int(rng.integers(rare_per_sentence[0], rare_per_sentence[1] + 1))
        for _ in range(k):
            # insert between units so earlier pairs stay adjacent
            at = int(rng.integers(len(units) + 1))
            pair = [TRIGGER_WORDS[int(rng.integers(len(TRIGGER_WORDS)))], rare_words[int(rng.integers(len(rare_words)))]]
            units.insert(at, pair)
        corpus.append([w for u in units for w in u])
    return corpus
