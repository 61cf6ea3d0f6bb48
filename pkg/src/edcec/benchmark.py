"""Bundled synthetic benchmark: data, desk-scale training preset, list-size sweeps.

Everything here is deterministic given a seed.  B-WER is always bucketed
with the size-10 list that contains the true words, so conditions that
feed the model a different list (empty, distractors only) are scored on
the same words.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .align import Triple, build_example
from .datagen import CorruptionConfig, generate, make_clean_corpus
from .infer import correct_batch
from .metrics import ScoreReport, score_corpus
from .model import EDCEC, ModelConfig
from .rarelist import build_full_list, build_utterance_list
from .text import Vocab, build_vocab
from .train import EpochRecord, TrainConfig, train_epochs
from .wordlists import COMMON_WORDS, TRIGGER_WORDS, rare_inventory, recognizer_lexicon

log = logging.getLogger(__name__)

ANTI = "anti"


def desk_model_config(vocab_size: int) -> ModelConfig:
    return ModelConfig(vocab_size, d=64, encoder_layers=2, encoder_heads=4, decoder_heads=4,
                       context_heads=4, ffn_dim=256)


def desk_train_config(seed: int = 0, **kw) -> TrainConfig:
    opts = dict(lr=2e-3, batch_size=16, epochs=16, dropout=0.1, gamma=3.0, reduction="utterance")
    opts.update(kw)
    return TrainConfig(seed=seed, **opts)


@dataclass
class DeskData:
    train: list[Triple]
    test: list[Triple]
    full_list: list[str]
    lexicon: list[str]
    corruption: CorruptionConfig  # test-split corruption settings
    test_clean: list[list[str]] = field(repr=False, default_factory=list)


def desk_data(seed: int = 0, n_train: int = 2000, n_test: int = 500, list_size: int = 10,
              p_sub_rare: float = 0.6, noise: float = 0.02, lexicon_extra: int = 1000) -> DeskData:
    """Train/test triples over the bundled trigger-word corpus.

    The rare inventory is everything outside the common and trigger words
    of the training split.  Test corruption uses its own seed stream.
    """
    clean = make_clean_corpus(n_train + n_test, seed=seed)
    train_c, test_c = clean[:n_train], clean[n_train:]
    full = build_full_list(train_c, top_k=len(set(COMMON_WORDS)) + len(TRIGGER_WORDS))
    lexicon = recognizer_lexicon(lexicon_extra, exclude=rare_inventory())
    tr_cfg = CorruptionConfig(p_sub_rare=p_sub_rare, p_del=noise, p_ins=noise, seed=seed)
    te_cfg = CorruptionConfig(p_sub_rare=p_sub_rare, p_del=noise, p_ins=noise, seed=seed + 1000)
    train, _ = generate(train_c, full, tr_cfg, list_size=list_size, common_words=lexicon)
    test, _ = generate(test_c, full, te_cfg, list_size=list_size, common_words=lexicon)
    return DeskData(train, test, full, lexicon, te_cfg, test_c)


def desk_vocab(data: DeskData, max_size: int = 2000) -> Vocab:
    return build_vocab([t.tgt for t in data.train] + [t.src for t in data.train], max_size=max_size)


def condition_lists(test: Sequence[Triple], full_list: Sequence[str], size, seed: int) -> list[list[str]]:
    """Per-utterance lists for one sweep condition.

    ``size`` is an int (true words plus distractors up to that size, 0 for
    empty lists) or ``"anti-N"`` for N distractors and no true words.
    """
    if isinstance(size, str):
        kind, _, n = size.partition("-")
        if kind != ANTI or not n.isdigit():
            raise ValueError(f"bad list condition {size!r}")
        return [build_utterance_list(t.tgt, full_list, int(n), seed=seed * 100_003 + i, include_true=False).items
                for i, t in enumerate(test)]
    if size < 0:
        raise ValueError("list size must be >= 0")
    if size == 0:
        return [[] for _ in test]
    out = []
    for i, t in enumerate(test):
        true = build_utterance_list(t.tgt, full_list, 0, seed=0).items
        out.append(build_utterance_list(t.tgt, full_list, max(0, size - len(true)), seed=seed * 100_003 + i).items)
    return out


def evaluate_condition(model: EDCEC, vocab: Vocab, test: Sequence[Triple], lists, scoring_lists=None) -> ScoreReport:
    results = correct_batch([t.src for t in test], lists, model, vocab)
    scoring = [t.ctx for t in test] if scoring_lists is None else scoring_lists
    return score_corpus([t.tgt for t in test], [r.words for r in results], scoring)


def sweep_list_size(model: EDCEC, vocab: Vocab, test: Sequence[Triple], full_list: Sequence[str],
                    sizes: Sequence = (0, "anti-10", 10), seed: int = 0) -> dict:
    """Score the same model under several list conditions plus the uncorrected input."""
    out = {"input": score_corpus([t.tgt for t in test], [t.src for t in test], [t.ctx for t in test])}
    for size in sizes:
        out[str(size)] = evaluate_condition(model, vocab, test, condition_lists(test, full_list, size, seed))
    return out


@dataclass
class DeskRun:
    seed: int
    model: EDCEC
    vocab: Vocab
    data: DeskData
    reports: dict  # condition -> ScoreReport
    history: list[EpochRecord]
    seconds: float

    @property
    def b_wer(self) -> dict:
        return {k: r.b_wer.rate for k, r in self.reports.items()}

    def b_wer_reduction(self) -> float:
        """Relative B-WER reduction of the true-word condition vs. the corrupted input."""
        base = self.reports["input"].b_wer.rate
        return (base - self.reports["10"].b_wer.rate) / base

    def summary(self) -> dict:
        return {
            "seed": self.seed,
            "seconds": round(self.seconds, 1),
            "b_wer": self.b_wer,
            "wer": {k: r.wer.rate for k, r in self.reports.items()},
            "u_wer": {k: r.u_wer.rate for k, r in self.reports.items()},
            "b_wer_reduction": self.b_wer_reduction(),
        }


def run_desk(seed: int = 0, epochs: int | None = None, on_epoch: Callable | None = None, **data_kw) -> DeskRun:
    """Generate data, train the desk preset, and sweep {input, 0, anti-10, 10}."""
    t0 = time.perf_counter()
    data = desk_data(seed, **data_kw)
    vocab = desk_vocab(data)
    examples = [build_example(t, vocab) for t in data.train]
    cfg = desk_train_config(seed) if epochs is None else desk_train_config(seed, epochs=epochs)
    res = train_epochs(examples, cfg, desk_model_config(len(vocab)), on_epoch=on_epoch)
    reports = sweep_list_size(res.model, vocab, data.test, data.full_list, seed=seed)
    return DeskRun(seed, res.model, vocab, data, reports, res.history, time.perf_counter() - t0)


def speed_corpus(full_list: Sequence[str], lexicon: Sequence[str], n: int = 100, seed: int = 0,
                 min_len: int = 20, max_len: int = 28, list_size: int = 10) -> list[Triple]:
    """Long sentences (at least ``min_len`` words) with a light corruption rate."""
    clean = make_clean_corpus(n, seed=seed, min_len=min_len, max_len=max_len)
    cfg = CorruptionConfig(p_sub_rare=0.6, p_del=0.02, p_ins=0.02, seed=seed)
    triples, _ = generate(clean, full_list, cfg, list_size=list_size, common_words=lexicon)
    return triples


def corrupted_fraction(triples: Sequence[Triple]) -> float:
    """Word-level edit operations needed to fix the sources, over source length."""
    from .metrics import edit_distance

    errs = sum(edit_distance(t.tgt, t.src) for t in triples)
    return errs / sum(len(t.src) for t in triples)
