"""Joint training of the detector and the context-aware corrector."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from .align import AlignedExample, Triple
from .infer import correct_batch, pad_2d, pad_items
from .io import write_jsonl
from .metrics import score_corpus
from .model import EDCEC, ModelConfig, save_checkpoint
from .text import BOS_ID, PAD_ID, Vocab

log = logging.getLogger(__name__)

IGNORE = -100


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    gamma: float = 3.0
    lr: float = 1e-3
    batch_size: int = 32
    epochs: int = 10
    seed: int = 0
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    clip_norm: float | None = None
    dropout: float = 0.1
    # "gold": copy branch reads the labelled item during training; "argmax": the scored one
    item_selection: str = "gold"
    # "mean": per token / per decode step; "utterance": summed per utterance, averaged over the batch
    reduction: str = "mean"

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.item_selection not in ("gold", "argmax"):
            raise ValueError(f"unknown item_selection {self.item_selection!r}")
        if self.reduction not in ("mean", "utterance"):
            raise ValueError(f"unknown reduction {self.reduction!r}")

    @classmethod
    def full_scale(cls, **kw) -> "TrainConfig":
        return cls(lr=5e-5, batch_size=32, gamma=3.0, **kw)


@dataclass
class Batch:
    input_ids: torch.Tensor  # (B, L)
    op_labels: torch.Tensor  # (B, L), IGNORE on padding
    item_ids: torch.Tensor  # (B, l, U)
    pos_batch: torch.Tensor  # (N,)
    pos_index: torch.Tensor  # (N,)
    dec_in: torch.Tensor  # (N, T) BOS + gold prefix
    dec_out: torch.Tensor  # (N, T) gold tokens, PAD after EOS
    ctx_labels: torch.Tensor  # (N,)

    @property
    def num_positions(self) -> int:
        return self.pos_batch.numel()


def collate(examples: Sequence[AlignedExample]) -> Batch:
    ids = pad_2d([e.input_ids for e in examples])
    labels = pad_2d([e.op_labels for e in examples]).masked_fill(ids == PAD_ID, IGNORE)
    pos_b, pos_i, targets, ctx = [], [], [], []
    for b, e in enumerate(examples):
        for p in sorted(e.change_targets):
            pos_b.append(b)
            pos_i.append(p)
            targets.append(e.change_targets[p])
            ctx.append(e.context_labels[p])
    dec_out = pad_2d(targets, width=max([len(t) for t in targets] + [1]))
    dec_in = torch.cat([torch.full((len(targets), 1), BOS_ID, dtype=torch.long), dec_out[:, :-1]], dim=1)
    dec_in = dec_in.masked_fill(dec_in == PAD_ID, BOS_ID)  # any token works past EOS; masked out
    return Batch(
        ids, labels, pad_items([e.context_ids for e in examples]),
        torch.tensor(pos_b, dtype=torch.long), torch.tensor(pos_i, dtype=torch.long),
        dec_in, dec_out, torch.tensor(ctx, dtype=torch.long),
    )


@dataclass
class LossReport:
    loss_d: torch.Tensor
    loss_gen: torch.Tensor
    loss_ctx: torch.Tensor
    total: torch.Tensor
    n_tokens: int
    n_steps: int

    def floats(self) -> dict:
        return {k: float(getattr(self, k).detach()) for k in ("loss_d", "loss_gen", "loss_ctx", "total")}


def detection_loss(logits: torch.Tensor, labels: torch.Tensor, reduction: str = "mean") -> torch.Tensor:
    """NLL of the gold K/D/C labels over non-padding tokens.

    ``reduction="mean"`` averages over tokens; ``"utterance"`` sums within
    each utterance and averages over the batch.
    """
    if not bool((labels != IGNORE).any()):
        raise ValueError("no non-padding tokens in batch")
    nll = F.cross_entropy(logits.transpose(1, 2), labels, ignore_index=IGNORE, reduction="none")
    if reduction == "utterance":
        return nll.sum() / labels.shape[0]
    return nll.sum() / (labels != IGNORE).sum()


def correction_loss(log_p: torch.Tensor, scores: torch.Tensor, dec_out: torch.Tensor,
                    ctx_labels: torch.Tensor, reduction: str = "mean",
                    batch_size: int | None = None) -> tuple[torch.Tensor, torch.Tensor, int]:
    """NLL of gold tokens under the mixed distribution, and of the context
    label under the softmax of the scores, over steps up to each EOS.

    With ``reduction="utterance"`` both sums are divided by ``batch_size``
    instead of by the number of steps.
    """
    mask = dec_out != PAD_ID
    n = int(mask.sum())
    if n == 0:
        zero = log_p.new_zeros(())
        return zero, zero, 0
    nll_tok = -log_p.gather(-1, dec_out.unsqueeze(-1)).squeeze(-1)
    log_sel = F.log_softmax(scores, dim=-1)
    labels = ctx_labels.unsqueeze(-1).expand_as(dec_out)
    nll_ctx = -log_sel.gather(-1, labels.unsqueeze(-1)).squeeze(-1)
    denom = batch_size if reduction == "utterance" else n
    return nll_tok[mask].sum() / denom, nll_ctx[mask].sum() / denom, n


def total_loss(loss_d, loss_gen, loss_ctx, gamma: float):
    return gamma * loss_d + loss_gen + loss_ctx


def forward_losses(model: EDCEC, batch: Batch, gamma: float, item_selection: str = "gold",
                   reduction: str = "mean") -> LossReport:
    states = model.encode_input(batch.input_ids)
    loss_d = detection_loss(model.detect(states), batch.op_labels, reduction)
    n_tokens = int((batch.op_labels != IGNORE).sum())
    if batch.num_positions:
        host = states[batch.pos_batch, batch.pos_index]
        memory = states.index_select(0, batch.pos_batch)
        memory_mask = (batch.input_ids != PAD_ID).index_select(0, batch.pos_batch)
        out = model.decode(batch.dec_in, host, memory, memory_mask)
        ctx = model.encode_context(batch.item_ids).select(batch.pos_batch)
        m = batch.ctx_labels.unsqueeze(-1).expand_as(batch.dec_in) if item_selection == "gold" else None
        so = model.step_outputs(out, ctx, m)
        loss_gen, loss_ctx, n_steps = correction_loss(so.log_p, so.scores, batch.dec_out, batch.ctx_labels,
                                                      reduction, batch.input_ids.shape[0])
    else:
        loss_gen = loss_ctx = loss_d.new_zeros(())
        n_steps = 0
    return LossReport(loss_d, loss_gen, loss_ctx, total_loss(loss_d, loss_gen, loss_ctx, gamma), n_tokens, n_steps)


@dataclass
class EpochRecord:
    epoch: int
    loss_d: float
    loss_gen: float
    loss_ctx: float
    total: float
    val_wer: float | None = None

    def to_json(self) -> dict:
        return dict(self.__dict__)


@dataclass
class TrainResult:
    model: EDCEC
    history: list[EpochRecord] = field(default_factory=list)
    best_epoch: int | None = None


def evaluate_wer(model: EDCEC, vocab: Vocab, triples: Sequence[Triple]) -> float:
    results = correct_batch([t.src for t in triples], [t.ctx for t in triples], model, vocab)
    report = score_corpus([t.tgt for t in triples], [r.words for r in results], [t.ctx for t in triples])
    return report.wer.rate


def train_epochs(
    examples: Sequence[AlignedExample],
    cfg: TrainConfig,
    model_cfg: ModelConfig,
    vocab: Vocab | None = None,
    val: Sequence[Triple] = (),
    out_dir=None,
    on_epoch: Callable[[EpochRecord], None] | None = None,
) -> TrainResult:
    """Adam over shuffled mini-batches with teacher forcing.

    With ``out_dir`` set, writes ``last.ckpt`` every epoch, ``best.ckpt``
    for the lowest validation WER (or lowest training loss without a
    validation set) and ``train_log.jsonl``.
    """
    if not examples:
        raise ValueError("no training examples")
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    model = EDCEC(model_cfg, dropout=cfg.dropout)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr, betas=cfg.betas, eps=cfg.eps)
    result = TrainResult(model)
    best = math.inf
    truncated = sum(e.truncated for e in examples)
    if truncated:
        log.warning("%d change targets truncated to max_target_len", truncated)

    for epoch in range(1, cfg.epochs + 1):
        model.train()
        order = rng.permutation(len(examples))
        sums = np.zeros(4)
        for start in range(0, len(order), cfg.batch_size):
            batch = collate([examples[i] for i in order[start : start + cfg.batch_size]])
            rep = forward_losses(model, batch, cfg.gamma, cfg.item_selection, cfg.reduction)
            if not torch.isfinite(rep.total):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}, batch {start // cfg.batch_size}: "
                                       f"{rep.floats()}")
            opt.zero_grad()
            rep.total.backward()
            if cfg.clip_norm:
                torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.clip_norm)
            opt.step()
            sums += np.array([*rep.floats().values()]) * len(batch.input_ids)
        means = sums / len(order)
        rec = EpochRecord(epoch, *means.tolist())
        if val and vocab is not None:
            rec.val_wer = evaluate_wer(model, vocab, val)
        result.history.append(rec)
        key = rec.val_wer if rec.val_wer is not None else rec.total
        improved = key < best
        if improved:
            best = key
            result.best_epoch = epoch
        if out_dir is not None:
            out = Path(out_dir)
            save_checkpoint(out / "last.ckpt", model)
            if improved:
                save_checkpoint(out / "best.ckpt", model)
            write_jsonl(out / "train_log.jsonl", [r.to_json() for r in result.history])
        log.info("epoch %d: %s", epoch, rec.to_json())
        if on_epoch:
            on_epoch(rec)
    return result


# -- gradient verification --------------------------------------------------
TINY_CONFIG = ModelConfig(vocab_size=20, d=8, encoder_layers=1, encoder_heads=2, decoder_layers=1,
                          decoder_heads=2, context_heads=2, max_positions=32, max_decode_len=4, ffn_dim=16)


def random_examples(rng: np.random.Generator, vocab_size: int, n: int = 3, max_items: int = 3) -> list[AlignedExample]:
    """Random well-formed examples over ids 6..vocab_size-1 (ids below are specials)."""
    from .text import EOS_ID

    out = []
    for _ in range(n):
        L = int(rng.integers(4, 9))
        ids = rng.integers(6, vocab_size, size=L).tolist()
        labels = rng.integers(0, 3, size=L).tolist()
        labels[int(rng.integers(L))] = 2
        l = int(rng.integers(0, max_items + 1))
        items = [rng.integers(6, vocab_size, size=int(rng.integers(1, 4))).tolist() for _ in range(l)]
        targets, ctx = {}, {}
        for p, lab in enumerate(labels):
            if lab == 2:
                targets[p] = rng.integers(6, vocab_size, size=int(rng.integers(0, 3))).tolist() + [EOS_ID]
                ctx[p] = int(rng.integers(0, l + 1))
        out.append(AlignedExample(ids, labels, targets, ctx, items))
    return out


@dataclass
class GradCheckReport:
    max_rel_error: float
    max_abs_error_small: float  # coordinates whose gradients are both below the floor
    n_checked: int
    n_small: int
    worst: str

    def passed(self, rel_tol: float = 1e-3, abs_tol: float = 1e-6) -> bool:
        return self.max_rel_error < rel_tol and self.max_abs_error_small < abs_tol


def grad_check(seed: int = 0, n_coords: int = 100, eps: float = 1e-4, gamma: float = 3.0,
               cfg: ModelConfig = TINY_CONFIG, small: float = 1e-6, init_std: float = 0.5,
               reduction: str = "mean") -> GradCheckReport:
    """Compare autograd gradients of the joint loss with central differences.

    Runs in float64.  Every parameter tensor contributes at least one
    sampled coordinate; the rest are drawn uniformly over all coordinates.
    Coordinates where both gradients fall below ``small`` are judged on
    absolute error instead of relative error.
    """
    rng = np.random.default_rng(seed)
    torch.manual_seed(seed)
    model = EDCEC(cfg).double()
    model.reset_parameters(std=init_std)  # wider than the training init so gradients are not tiny
    batch = collate(random_examples(rng, cfg.vocab_size))

    def loss() -> torch.Tensor:
        return forward_losses(model, batch, gamma, reduction=reduction).total

    model.zero_grad()
    loss().backward()
    named = [(n, p) for n, p in model.named_parameters()]
    sizes = np.array([p.numel() for _, p in named])
    picks = [(k, int(rng.integers(sizes[k]))) for k in range(len(named))]
    flat_pick = rng.choice(int(sizes.sum()), size=max(0, n_coords - len(picks)), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    for f in flat_pick:
        k = int(np.searchsorted(offsets, f, side="right") - 1)
        picks.append((k, int(f - offsets[k])))

    max_rel, max_abs_small, n_small, worst = 0.0, 0.0, 0, ""
    with torch.no_grad():
        for k, i in picks:
            name, p = named[k]
            flat = p.view(-1)
            analytic = float(p.grad.view(-1)[i])
            orig = float(flat[i])
            flat[i] = orig + eps
            up = float(loss())
            flat[i] = orig - eps
            down = float(loss())
            flat[i] = orig
            numeric = (up - down) / (2 * eps)
            scale = max(abs(analytic), abs(numeric))
            if scale < small:
                n_small += 1
                max_abs_small = max(max_abs_small, abs(analytic - numeric))
                continue
            rel = abs(analytic - numeric) / scale
            if rel > max_rel:
                max_rel, worst = rel, f"{name}[{i}]"
    return GradCheckReport(max_rel, max_abs_small, len(picks), n_small, worst)
