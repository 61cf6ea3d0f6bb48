"""Rare-word inventories and per-utterance rare word lists with distractors."""
from __future__ import annotations

import collections
import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)


@dataclass
class RareWordList:
    items: list[str]
    from_reference: int = 0
    distractors: int = 0
    seed: int | None = None

    def __post_init__(self):
        if len({i.lower() for i in self.items}) != len(self.items):
            raise ValueError("rare word list items must be distinct")

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    @property
    def provenance(self) -> dict:
        return {"from_reference": self.from_reference, "distractors": self.distractors, "seed": self.seed}


def word_counts(corpus: Iterable[Sequence[str]]) -> collections.Counter:
    counts: collections.Counter = collections.Counter()
    for sent in corpus:
        counts.update(w.lower() for w in sent)
    return counts


def build_full_list(
    corpus: Iterable[Sequence[str]],
    top_k: int = 5000,
    max_count: int | None = None,
) -> list[str]:
    """All corpus words except the ``top_k`` most frequent, sorted.

    Frequency ties at the cut-off are broken lexicographically.  With
    ``max_count`` set, words occurring ``max_count`` times or more are also
    dropped (e.g. 15 for the lecture-slide style filter).
    """
    counts = word_counts(corpus)
    ranked = sorted(counts, key=lambda w: (-counts[w], w))
    if top_k >= len(ranked):
        log.warning("top_k=%d covers all %d distinct words; rare list is empty", top_k, len(ranked))
        return []
    rare = ranked[top_k:]
    if max_count is not None:
        rare = [w for w in rare if counts[w] < max_count]
    return sorted(rare)


def build_utterance_list(
    reference: Sequence[str],
    full_list: Sequence[str],
    n_distractors: int,
    seed: int,
    include_true: bool = True,
) -> RareWordList:
    """Rare words of ``reference`` followed by uniformly drawn distractors.

    True words keep reference order.  Distractors are drawn without
    replacement from ``full_list`` minus every reference word, so the
    true-word prefix does not depend on the seed.  ``include_true=False``
    gives the distractor-only (anti-context) list.
    """
    rare = set(w.lower() for w in full_list)
    ref_words = [w.lower() for w in reference]
    true_words: list[str] = []
    if include_true:
        for w in ref_words:
            if w in rare and w not in true_words:
                true_words.append(w)
    excluded = set(ref_words)
    pool = sorted(w for w in rare if w not in excluded)
    if n_distractors > len(pool):
        log.warning("asked for %d distractors, only %d available", n_distractors, len(pool))
        n_distractors = len(pool)
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(pool), size=n_distractors, replace=False) if n_distractors else []
    distractors = [pool[i] for i in picks]
    return RareWordList(true_words + distractors, len(true_words), len(distractors), seed)


def load_full_list(path) -> list[str]:
    with open(path, encoding="utf-8") as f:
        return [line.strip() for line in f if line.strip()]


def save_full_list(path, words: Sequence[str]) -> None:
    from .io import atomic_write_text

    atomic_write_text(path, "".join(w + "\n" for w in words))
