"""WordPiece vocabulary, tokenization and detokenization.

The vocabulary is learned with frequency-driven pair merges starting from
single characters, and applied with greedy longest-match-first
segmentation (the usual WordPiece inference rule).  Continuation pieces
carry the ``##`` prefix.
"""
from __future__ import annotations

import collections
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

PAD = "[PAD]"
UNK = "[UNK]"
BOS = "[BOS]"
EOS = "[EOS]"
DUMMY = "[DUMMY]"
NOCTX = "[NOCTX]"

SPECIAL_TOKENS = (PAD, UNK, BOS, EOS, DUMMY, NOCTX)
PAD_ID, UNK_ID, BOS_ID, EOS_ID, DUMMY_ID, NOCTX_ID = range(len(SPECIAL_TOKENS))

CONTINUATION = "##"
MAX_WORD_CHARS = 100


class ConfigError(ValueError):
    """Invalid configuration or input for a build step."""


@dataclass(frozen=True)
class Vocab:
    tokens: tuple[str, ...]
    lowercase: bool = True
    index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if tuple(self.tokens[: len(SPECIAL_TOKENS)]) != SPECIAL_TOKENS:
            raise ConfigError("special tokens must occupy the first %d ids" % len(SPECIAL_TOKENS))
        index = {tok: i for i, tok in enumerate(self.tokens)}
        if len(index) != len(self.tokens):
            raise ConfigError("duplicate token strings in vocabulary")
        object.__setattr__(self, "index", index)

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def id(self, token: str) -> int:
        return self.index.get(token, UNK_ID)

    def token(self, idx: int) -> str:
        return self.tokens[idx]

    def save(self, path) -> None:
        from .io import atomic_write_text

        atomic_write_text(path, "".join(t + "\n" for t in self.tokens))

    @classmethod
    def load(cls, path, lowercase: bool = True) -> "Vocab":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        return cls(tuple(lines), lowercase=lowercase)


class TokenSeq(NamedTuple):
    ids: list[int]
    words: list[int]  # token index -> index of the source word it came from

    def __len__(self) -> int:
        return len(self.ids)


class Detokenized(NamedTuple):
    words: list[str]
    orphan_continuation: bool  # sequence started with a "##" piece

    @property
    def text(self) -> str:
        return " ".join(self.words)


def _initial_pieces(word: str) -> list[str]:
    return [word[0]] + [CONTINUATION + ch for ch in word[1:]]


def _merge(a: str, b: str) -> str:
    return a + b[len(CONTINUATION):]


def build_vocab(
    corpus: Iterable[Sequence[str]],
    max_size: int = 2000,
    min_freq: int = 1,
    lowercase: bool = True,
) -> Vocab:
    """Learn a WordPiece vocabulary from word sequences.

    Starts from every character seen (word-initial and ``##`` forms), then
    repeatedly adds the most frequent adjacent piece pair as a merged piece
    until ``max_size`` is reached or no pair occurs ``min_freq`` times.
    Ties go to the lexicographically smallest pair, so the result is a pure
    function of the input.
    """
    if max_size <= len(SPECIAL_TOKENS):
        raise ConfigError("max_size must exceed the number of special tokens")
    counts: collections.Counter[str] = collections.Counter()
    for sent in corpus:
        for w in sent:
            if w in SPECIAL_TOKENS:
                continue
            w = w.lower() if lowercase else w
            if w and len(w) <= MAX_WORD_CHARS:
                counts[w] += 1
    if not counts:
        raise ConfigError("cannot build a vocabulary from an empty corpus")

    words = sorted(counts)
    freqs = [counts[w] for w in words]
    segs = [_initial_pieces(w) for w in words]
    chars = sorted({p for s in segs for p in s})
    tokens = list(SPECIAL_TOKENS) + chars
    seen = set(tokens)

    while len(tokens) < max_size:
        pairs: collections.Counter[tuple[str, str]] = collections.Counter()
        for seg, f in zip(segs, freqs):
            for a, b in zip(seg, seg[1:]):
                pairs[(a, b)] += f
        if not pairs:
            break
        best_count = max(pairs.values())
        if best_count < min_freq:
            break
        best = min(p for p, c in pairs.items() if c == best_count)
        merged = _merge(*best)
        for n, seg in enumerate(segs):
            if len(seg) < 2:
                continue
            out, i = [], 0
            while i < len(seg):
                if i + 1 < len(seg) and (seg[i], seg[i + 1]) == best:
                    out.append(merged)
                    i += 2
                else:
                    out.append(seg[i])
                    i += 1
            segs[n] = out
        if merged not in seen:
            seen.add(merged)
            tokens.append(merged)
    return Vocab(tuple(tokens), lowercase=lowercase)


def wordpiece(word: str, vocab: Vocab) -> list[int]:
    """Greedy longest-match-first segmentation of one word; [UNK] on failure."""
    if word in vocab.index and word in SPECIAL_TOKENS:
        return [vocab.index[word]]
    if vocab.lowercase:
        word = word.lower()
    if not word:
        return []
    if len(word) > MAX_WORD_CHARS:
        return [UNK_ID]
    ids = []
    start = 0
    while start < len(word):
        end = len(word)
        found = None
        while end > start:
            piece = word[start:end]
            if start > 0:
                piece = CONTINUATION + piece
            idx = vocab.index.get(piece)
            if idx is not None:
                found = idx
                break
            end -= 1
        if found is None:
            return [UNK_ID]
        ids.append(found)
        start = end
    return ids


def tokenize(words: Sequence[str] | str, vocab: Vocab) -> TokenSeq:
    if isinstance(words, str):
        words = words.split()
    ids: list[int] = []
    owners: list[int] = []
    for n, w in enumerate(words):
        pieces = wordpiece(w, vocab)
        ids.extend(pieces)
        owners.extend([n] * len(pieces))
    return TokenSeq(ids, owners)


def detokenize(ids: Sequence[int], vocab: Vocab) -> Detokenized:
    """Join pieces back into words, dropping every special token but [UNK]."""
    words: list[str] = []
    orphan = False
    for i in ids:
        tok = vocab.tokens[int(i)]
        if tok in SPECIAL_TOKENS and tok != UNK:
            continue
        if tok.startswith(CONTINUATION):
            if not words:
                orphan = True
                words.append("")
            words[-1] += tok[len(CONTINUATION):]
        else:
            words.append(tok)
    return Detokenized(words, orphan)
