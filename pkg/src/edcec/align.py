"""Turn (source, target, rare list) triples into tagged training examples.

The source is expanded with a dummy slot before, between and after its
words, aligned to the target with a word-level LCS, and every slot gets a
KEEP / DELETE / CHANGE label.  A CHANGE slot carries the target words it
must be rewritten into.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .text import BOS, DUMMY, DUMMY_ID, EOS, EOS_ID, Vocab, tokenize, wordpiece

KEEP, DELETE, CHANGE = 0, 1, 2
LABEL_NAMES = "KDC"


@dataclass(frozen=True)
class Triple:
    src: list[str]
    tgt: list[str]
    ctx: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.src or not self.tgt:
            raise ValueError("source and target must be non-empty word sequences")

    @classmethod
    def from_json(cls, row: Mapping) -> "Triple":
        return cls(row["src"].split(), row["tgt"].split(), list(row.get("ctx", [])))

    def to_json(self) -> dict:
        return {"src": " ".join(self.src), "tgt": " ".join(self.tgt), "ctx": list(self.ctx)}


@dataclass
class SlotLabels:
    """Word-level labelling of the dummy-expanded source."""

    slots: list[str]
    labels: list[int]
    targets: dict[int, list[str]]  # slot index -> target words + [EOS]


@dataclass
class AlignedExample:
    input_ids: list[int]
    op_labels: list[int]
    change_targets: dict[int, list[int]]  # token position -> target ids ending in EOS
    context_labels: dict[int, int]  # token position -> 1-based item index, 0 = none
    context_ids: list[list[int]]  # tokenized rare-list items
    rare_list_ref: str = ""
    truncated: int = 0  # number of change targets cut to the length cap

    def dumps(self) -> str:
        return json.dumps(
            {
                "input_ids": self.input_ids,
                "op_labels": self.op_labels,
                "change_targets": sorted(self.change_targets.items()),
                "context_labels": sorted(self.context_labels.items()),
                "context_ids": self.context_ids,
                "rare_list_ref": self.rare_list_ref,
                "truncated": self.truncated,
            },
            separators=(",", ":"),
        )


def insert_dummies(src: Sequence[str]) -> list[str]:
    if not src:
        raise ValueError("cannot expand an empty source")
    out = [DUMMY]
    for w in src:
        out += [w, DUMMY]
    return out


def lcs_align(src: Sequence[str], tgt: Sequence[str]) -> list[tuple[int, int]]:
    """Matched index pairs of a longest common subsequence.

    Backtrace prefers match, then skipping a source word, then skipping a
    target word, which picks the leftmost solution deterministically.
    """
    m, n = len(src), len(tgt)
    # suffix table: best[i][j] = LCS length of src[i:], tgt[j:]
    best = [[0] * (n + 1) for _ in range(m + 1)]
    for i in range(m - 1, -1, -1):
        row, below = best[i], best[i + 1]
        si = src[i]
        for j in range(n - 1, -1, -1):
            if si == tgt[j]:
                row[j] = below[j + 1] + 1
            else:
                row[j] = below[j] if below[j] >= row[j + 1] else row[j + 1]
    pairs = []
    i = j = 0
    while i < m and j < n:
        if src[i] == tgt[j] and best[i][j] == best[i + 1][j + 1] + 1:
            pairs.append((i, j))
            i += 1
            j += 1
        elif best[i + 1][j] == best[i][j]:
            i += 1
        else:
            j += 1
    return pairs


def label_operations(
    src: Sequence[str], tgt: Sequence[str], alignment: Sequence[tuple[int, int]]
) -> SlotLabels:
    """K/D/C labels on the dummy-expanded source.

    Inside each gap between alignment anchors, the first unaligned source
    word (or the gap's leading dummy when the gap has no source words)
    hosts a CHANGE to all unaligned target words of that gap; the other
    unaligned source words are deleted.
    """
    slots = insert_dummies(src)
    labels = [KEEP] * len(slots)
    targets: dict[int, list[str]] = {}
    anchors = [(-1, -1)] + list(alignment) + [(len(src), len(tgt))]
    for (pi, pj), (ni, nj) in zip(anchors, anchors[1:]):
        gap_src = range(pi + 1, ni)
        gap_tgt = list(tgt[pj + 1 : nj])
        for i in gap_src:
            labels[2 * i + 1] = DELETE
        if gap_tgt:
            host = 2 * gap_src[0] + 1 if len(gap_src) else 2 * (pi + 1)
            labels[host] = CHANGE
            targets[host] = gap_tgt + [EOS]
    return SlotLabels(slots, labels, targets)


def _norm_phrase(words: Sequence[str]) -> str:
    return " ".join(w.lower() for w in words)


def assign_context_labels(
    change_targets: Mapping[int, Sequence[str]], items: Sequence[str]
) -> dict[int, int]:
    """1-based index of the first list item equal to the whole target span, else 0."""
    lookup: dict[str, int] = {}
    for n, item in enumerate(items, start=1):
        lookup.setdefault(_norm_phrase(item.split()), n)
    out = {}
    for pos, words in change_targets.items():
        words = [w for w in words if w not in (EOS, BOS)]
        out[pos] = lookup.get(_norm_phrase(words), 0)
    return out


def source_ids(src: Sequence[str], vocab: Vocab) -> list[int]:
    """Token ids of the dummy-expanded source, as fed to the encoder."""
    return tokenize(insert_dummies(src), vocab).ids


def build_example(
    triple: Triple,
    vocab: Vocab,
    max_target_len: int = 8,
    rare_list_ref: str = "",
) -> AlignedExample:
    """Token-level example: word labels expanded onto WordPiece tokens.

    A CHANGE word contributes one CHANGE token (its first piece); its other
    pieces are deleted so completion emits the replacement exactly once.
    """
    word_labels = label_operations(triple.src, triple.tgt, lcs_align(triple.src, triple.tgt))
    ctx_labels = assign_context_labels(word_labels.targets, triple.ctx)

    ids: list[int] = []
    ops: list[int] = []
    targets: dict[int, list[int]] = {}
    contexts: dict[int, int] = {}
    truncated = 0
    for slot, (word, lab) in enumerate(zip(word_labels.slots, word_labels.labels)):
        pieces = [DUMMY_ID] if word == DUMMY else wordpiece(word, vocab)
        if not pieces:
            continue
        start = len(ids)
        ids.extend(pieces)
        if lab == CHANGE:
            ops.append(CHANGE)
            ops.extend([DELETE] * (len(pieces) - 1))
            tgt_ids = tokenize(word_labels.targets[slot][:-1], vocab).ids
            if len(tgt_ids) + 1 > max_target_len:
                tgt_ids = tgt_ids[: max_target_len - 1]
                truncated += 1
            targets[start] = tgt_ids + [EOS_ID]
            contexts[start] = ctx_labels[slot]
        else:
            ops.extend([lab] * len(pieces))
    if not ids:
        raise ValueError("tokenization produced an empty input")
    return AlignedExample(
        input_ids=ids,
        op_labels=ops,
        change_targets=targets,
        context_labels=contexts,
        context_ids=[tokenize(item, vocab).ids for item in triple.ctx],
        rare_list_ref=rare_list_ref,
        truncated=truncated,
    )


def debug_dump(example: AlignedExample, vocab: Vocab) -> str:
    """Human-readable view of an example: one line per input token."""
    lines = []
    for pos, (i, lab) in enumerate(zip(example.input_ids, example.op_labels)):
        line = f"{pos:3d} {vocab.token(i):<16} {LABEL_NAMES[lab]}"
        if pos in example.change_targets:
            tgt = " ".join(vocab.token(t) for t in example.change_targets[pos])
            line += f"  -> {tgt}  ctx={example.context_labels[pos]}"
        lines.append(line)
    return "\n".join(lines)
