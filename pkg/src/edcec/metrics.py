"""WER with biased (rare-list) and unbiased buckets.

Substitutions and deletions are charged to the bucket of the reference
word; insertions to the bucket of the inserted hypothesis word.  Text is
lowercased and pure-punctuation tokens are dropped before scoring.
"""
from __future__ import annotations

import math
import string
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence

MATCH, SUB, DEL, INS = "match", "sub", "del", "ins"

NORMALIZATION = "lowercase; pure-punctuation tokens removed"

_PUNCT = set(string.punctuation)


def normalize(words: Iterable[str]) -> list[str]:
    return [w.lower() for w in words if not all(ch in _PUNCT for ch in w)]


def word_align(ref: Sequence[Hashable], hyp: Sequence[Hashable]) -> list[tuple[str, int | None, int | None]]:
    """Minimum edit script between ``ref`` and ``hyp``.

    Returns ``(op, ref_index, hyp_index)`` tuples in order.  On equal cost
    the backtrace prefers match, then substitution, deletion, insertion.
    """
    m, n = len(ref), len(hyp)
    # suffix costs so a forward walk applies the preference order left to right
    cost = [[0] * (n + 1) for _ in range(m + 1)]
    for i in range(m, -1, -1):
        for j in range(n, -1, -1):
            if i == m:
                cost[i][j] = n - j
            elif j == n:
                cost[i][j] = m - i
            else:
                diag = cost[i + 1][j + 1] + (ref[i] != hyp[j])
                cost[i][j] = min(diag, cost[i + 1][j] + 1, cost[i][j + 1] + 1)
    script = []
    i = j = 0
    while i < m or j < n:
        if i < m and j < n:
            if ref[i] == hyp[j] and cost[i][j] == cost[i + 1][j + 1]:
                script.append((MATCH, i, j))
                i, j = i + 1, j + 1
                continue
            if ref[i] != hyp[j] and cost[i][j] == cost[i + 1][j + 1] + 1:
                script.append((SUB, i, j))
                i, j = i + 1, j + 1
                continue
        if i < m and cost[i][j] == cost[i + 1][j] + 1:
            script.append((DEL, i, None))
            i += 1
        else:
            script.append((INS, None, j))
            j += 1
    return script


def edit_distance(ref: Sequence[Hashable], hyp: Sequence[Hashable]) -> int:
    return sum(op != MATCH for op, _, _ in word_align(ref, hyp))


@dataclass
class Bucket:
    sub: int = 0
    dels: int = 0
    ins: int = 0
    denominator: int = 0

    @property
    def errors(self) -> int:
        return self.sub + self.dels + self.ins

    @property
    def rate(self) -> float:
        """errors / denominator; inf when errors land in an empty bucket."""
        if self.denominator == 0:
            return math.inf if self.errors else 0.0
        return self.errors / self.denominator

    @property
    def finite(self) -> bool:
        return self.denominator > 0 or self.errors == 0

    def __add__(self, other: "Bucket") -> "Bucket":
        return Bucket(self.sub + other.sub, self.dels + other.dels, self.ins + other.ins,
                      self.denominator + other.denominator)

    def to_json(self) -> dict:
        rate = self.rate
        return {
            "errors": self.errors,
            "denominator": self.denominator,
            "rate": rate if math.isfinite(rate) else None,
            "rate_finite": self.finite,
            "sub": self.sub,
            "del": self.dels,
            "ins": self.ins,
        }


@dataclass
class ScoreReport:
    wer: Bucket = field(default_factory=Bucket)
    u_wer: Bucket = field(default_factory=Bucket)
    b_wer: Bucket = field(default_factory=Bucket)
    utterances: int = 0

    def __add__(self, other: "ScoreReport") -> "ScoreReport":
        return ScoreReport(self.wer + other.wer, self.u_wer + other.u_wer,
                           self.b_wer + other.b_wer, self.utterances + other.utterances)

    def to_json(self, reference_wer: float | None = None) -> dict:
        out = {
            "normalization": NORMALIZATION,
            "utterances": self.utterances,
            "wer": self.wer.to_json(),
            "u_wer": self.u_wer.to_json(),
            "b_wer": self.b_wer.to_json(),
        }
        if reference_wer is not None:
            out["werr"] = werr(reference_wer, self.wer.rate)
        return out


def list_words(rare_list: Iterable[str]) -> set[str]:
    """Lowercased words covered by a rare list (phrases contribute each word)."""
    return {w.lower() for item in rare_list for w in item.split()}


def score(ref: Sequence[str], hyp: Sequence[str], rare_list: Iterable[str] = ()) -> ScoreReport:
    ref, hyp = normalize(ref), normalize(hyp)
    if not ref:
        raise ValueError("empty reference")
    biased = list_words(rare_list)
    rep = ScoreReport(utterances=1)
    for w in ref:
        (rep.b_wer if w in biased else rep.u_wer).denominator += 1
    rep.wer.denominator = len(ref)
    for op, i, j in word_align(ref, hyp):
        if op == MATCH:
            continue
        word = hyp[j] if op == INS else ref[i]
        bucket = rep.b_wer if word in biased else rep.u_wer
        for b in (bucket, rep.wer):
            if op == SUB:
                b.sub += 1
            elif op == DEL:
                b.dels += 1
            else:
                b.ins += 1
    return rep


def score_corpus(refs, hyps, rare_lists) -> ScoreReport:
    total = ScoreReport()
    for r, h, c in zip(refs, hyps, rare_lists, strict=True):
        total = total + score(r, h, c)
    return total


def werr(wer_before: float, wer_after: float) -> float | None:
    """Relative WER reduction; None when the baseline WER is zero."""
    if wer_before == 0:
        return None
    return (wer_before - wer_after) / wer_before
