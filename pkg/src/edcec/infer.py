"""Constrained correction, completion, full-rewrite baseline and timing."""
from __future__ import annotations

import math
import statistics
import time
from dataclasses import dataclass, field
from typing import Sequence

import torch

from .align import CHANGE, DELETE, KEEP, AlignedExample, Triple, source_ids
from .model import EDCEC
from .text import BOS_ID, EOS_ID, PAD_ID, Vocab, detokenize, tokenize


@dataclass
class ChangeTrace:
    pos: int
    tokens: list[int] = field(default_factory=list)  # generated ids, EOS included when emitted
    m_trace: list[int] = field(default_factory=list)
    gate_trace: list[float] = field(default_factory=list)


@dataclass
class CorrectionResult:
    input_ids: list[int]
    op_labels: list[int]
    changes: list[ChangeTrace]
    words: list[str]
    decode_steps: int

    def to_json(self, src: Sequence[str], vocab: Vocab) -> dict:
        return {
            "src": " ".join(src),
            "hyp": " ".join(self.words),
            "labels": "".join("KDC"[lab] for lab in self.op_labels),
            "changes": [
                {"pos": c.pos, "tokens": [vocab.token(t) for t in c.tokens],
                 "m_trace": c.m_trace, "gate_trace": [round(g, 6) for g in c.gate_trace]}
                for c in self.changes
            ],
            "steps": self.decode_steps,
        }


def complete(input_ids: Sequence[int], op_labels: Sequence[int], generated: dict, vocab: Vocab) -> list[str]:
    """Keep K tokens, drop D tokens, splice generated tokens in at C tokens."""
    out: list[int] = []
    for pos, (tok, lab) in enumerate(zip(input_ids, op_labels)):
        if lab == KEEP:
            out.append(tok)
        elif lab == CHANGE:
            if pos not in generated:
                raise ValueError(f"no generated tokens for change position {pos}")
            for t in generated[pos]:
                if t == EOS_ID:
                    break
                out.append(t)
        elif lab != DELETE:
            raise ValueError(f"unknown operation label {lab}")
    return detokenize(out, vocab).words


def pad_2d(rows: Sequence[Sequence[int]], width: int | None = None) -> torch.Tensor:
    width = max([len(r) for r in rows] + [0]) if width is None else width
    out = torch.full((len(rows), width), PAD_ID, dtype=torch.long)
    for n, r in enumerate(rows):
        out[n, : len(r)] = torch.as_tensor(r, dtype=torch.long)
    return out


def pad_items(lists: Sequence[Sequence[Sequence[int]]]) -> torch.Tensor:
    """(B, l, U) id tensor from per-utterance lists of tokenized items."""
    l = max([len(x) for x in lists] + [0])
    U = max([len(i) for x in lists for i in x] + [1])
    out = torch.full((len(lists), l, U), PAD_ID, dtype=torch.long)
    for b, items in enumerate(lists):
        for j, item in enumerate(items):
            out[b, j, : len(item)] = torch.as_tensor(item, dtype=torch.long)
    return out


@torch.inference_mode()
def correct_batch(
    sources: Sequence[Sequence[str]],
    rare_lists: Sequence[Sequence[str]],
    model: EDCEC,
    vocab: Vocab,
    max_decode_len: int | None = None,
    gold: Sequence[AlignedExample] | None = None,
    batch_size: int = 64,
) -> list[CorrectionResult]:
    """Detect-then-correct a batch of utterances.

    All change positions of a chunk are decoded together in lockstep;
    positions that emit EOS stop growing while the rest continue.  With
    ``gold`` examples the predicted labels and generations are replaced by
    the gold ones (oracle completion path).
    """
    model.eval()
    results: list[CorrectionResult] = []
    for start in range(0, len(sources), batch_size):
        chunk = slice(start, start + batch_size)
        results.extend(_correct_chunk(sources[chunk], rare_lists[chunk], model, vocab,
                                      max_decode_len, None if gold is None else gold[chunk]))
    return results


def _correct_chunk(sources, rare_lists, model, vocab, max_decode_len, gold):
    if gold is not None:
        out = []
        for ex in gold:
            gen = {p: list(t) for p, t in ex.change_targets.items()}
            changes = [ChangeTrace(p, gen[p]) for p in sorted(gen)]
            out.append(CorrectionResult(list(ex.input_ids), list(ex.op_labels), changes,
                                        complete(ex.input_ids, ex.op_labels, gen, vocab), 0))
        return out

    max_len = max_decode_len or model.cfg.max_decode_len
    input_rows = [source_ids(s, vocab) for s in sources]
    ids = pad_2d(input_rows)
    states = model.encode_input(ids)
    labels = model.detect(states).argmax(-1)
    labels = labels.masked_fill(ids == PAD_ID, KEEP)
    where = (labels == CHANGE).nonzero()
    pos_b, pos_i = where[:, 0], where[:, 1]
    N = pos_b.numel()
    traces = [ChangeTrace(int(p)) for p in pos_i]
    if N:
        items = pad_items([[tokenize(c, vocab).ids for c in lst] for lst in rare_lists])
        ctx = model.encode_context(items).select(pos_b)
        _greedy_decode(model, states[pos_b, pos_i], states.index_select(0, pos_b),
                       (ids != PAD_ID).index_select(0, pos_b), ctx, max_len, traces)

    results = []
    for b, row in enumerate(input_rows):
        lab = labels[b, : len(row)].tolist()
        mine = [tr for tr, pb in zip(traces, pos_b.tolist()) if pb == b]
        gen = {tr.pos: tr.tokens for tr in mine}
        steps = max([len(tr.tokens) for tr in mine] + [0])
        results.append(CorrectionResult(row, lab, mine, complete(row, lab, gen, vocab), steps))
    return results


def _greedy_decode(model, host, memory, memory_mask, ctx, max_len, traces, min_len=0):
    N = host.shape[0]
    tokens = torch.full((N,), BOS_ID, dtype=torch.long)
    active = torch.ones(N, dtype=torch.bool)
    cache = None
    steps = 0
    for step in range(max_len):
        out, cache = model.decode_step(tokens, step, host, memory, memory_mask, cache)
        so = model.step_outputs(out.unsqueeze(1), ctx)
        log_p = so.log_p[:, 0]
        if step < min_len:
            log_p = log_p.clone()
            log_p[:, EOS_ID] = -math.inf
        nxt = log_p.argmax(-1)
        gate = so.gate[:, 0].tolist()
        m = so.m[:, 0].tolist()
        for n in active.nonzero().squeeze(-1).tolist():
            tr = traces[n]
            tr.tokens.append(int(nxt[n]))
            tr.m_trace.append(int(m[n]))
            tr.gate_trace.append(float(gate[n]))
        steps += 1
        active &= nxt != EOS_ID
        tokens = nxt
        if not bool(active.any()):
            break
    return steps


def correct(src: Sequence[str], rare_list: Sequence[str], model: EDCEC, vocab: Vocab,
            max_decode_len: int | None = None, gold: AlignedExample | None = None) -> CorrectionResult:
    return correct_batch([src], [rare_list], model, vocab, max_decode_len,
                         None if gold is None else [gold])[0]


@torch.inference_mode()
def full_rewrite_baseline(src: Sequence[str], rare_list: Sequence[str], model: EDCEC, vocab: Vocab,
                          max_decode_len: int | None = None) -> tuple[list[str], int]:
    """Regenerate the whole utterance from BOS with the same decoder.

    A single virtual change position hosted on the mean input state
    cross-attends the full input.  EOS is suppressed until the decoder has
    emitted as many tokens as the source has word pieces, since a rewrite
    has to re-emit the sentence.
    """
    model.eval()
    row = source_ids(src, vocab)
    ids = pad_2d([row])
    states = model.encode_input(ids)
    n_src = len(tokenize(src, vocab).ids)
    cap = min(n_src + (max_decode_len or model.cfg.max_decode_len), model.cfg.max_positions)
    items = pad_items([[tokenize(c, vocab).ids for c in rare_list]])
    ctx = model.encode_context(items)
    trace = [ChangeTrace(-1)]
    steps = _greedy_decode(model, states.mean(1), states, ids != PAD_ID, ctx, cap, trace,
                           min_len=min(n_src, cap))
    words = complete([BOS_ID], [CHANGE], {0: trace[0].tokens}, vocab)
    return words, steps


def bench(triples: Sequence[Triple], model: EDCEC, vocab: Vocab, repeats: int = 5) -> dict:
    """Per-utterance wall clock of constrained vs full-rewrite decoding.

    Timings run single-threaded.  ``ratio`` is constrained time over
    baseline time; ``speedup`` is its inverse in the "N×" style.
    """
    if not triples:
        raise ValueError("empty benchmark corpus")
    threads = torch.get_num_threads()
    torch.set_num_threads(1)
    try:
        con_runs, base_runs = [], []
        steps_con = steps_base = 0
        for rep in range(repeats):
            t_con = t_base = 0.0
            for tr in triples:
                t0 = time.perf_counter()
                res = correct(tr.src, tr.ctx, model, vocab)
                t1 = time.perf_counter()
                _, s = full_rewrite_baseline(tr.src, tr.ctx, model, vocab)
                t2 = time.perf_counter()
                t_con += t1 - t0
                t_base += t2 - t1
                if rep == 0:
                    steps_con += res.decode_steps
                    steps_base += s
            con_runs.append(1000 * t_con / len(triples))
            base_runs.append(1000 * t_base / len(triples))
    finally:
        torch.set_num_threads(threads)
    ratios = [c / b for c, b in zip(con_runs, base_runs)]
    ratio = statistics.median(ratios)
    return {
        "constrained_ms": statistics.mean(con_runs),
        "constrained_ms_median": statistics.median(con_runs),
        "baseline_ms": statistics.mean(base_runs),
        "baseline_ms_median": statistics.median(base_runs),
        "ratio": ratio,
        "ratio_runs": ratios,
        "speedup": f"{1 / ratio:.1f}×",
        "steps_constrained": steps_con,
        "steps_baseline": steps_base,
        "step_ratio": steps_con / steps_base if steps_base else None,
        "step_speedup": f"{steps_base / steps_con:.1f}×" if steps_con else "∞/no-decode",
    }
