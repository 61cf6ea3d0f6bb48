"""Detector + context-aware corrector network.

Shapes in comments use B = utterances, L = input tokens, N = change
positions (flattened over the batch), T = decode steps, l = rare-list
items, U = tokens per item, d = hidden size, V = vocabulary size.
"""
from __future__ import annotations

import math
import struct
from dataclasses import astuple, dataclass, fields
from typing import NamedTuple

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .text import PAD_ID

NUM_OPS = 3


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    d: int = 128
    encoder_layers: int = 2
    encoder_heads: int = 4
    decoder_layers: int = 1
    decoder_heads: int = 4
    context_heads: int = 4
    context_score_heads: int = 1
    max_positions: int = 256
    max_decode_len: int = 8
    ffn_dim: int = 512
    scale_context_scores: bool = False

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.type in ("int", int) and v < 1:
                raise ValueError(f"{f.name} must be >= 1, got {v}")
        for h in (self.encoder_heads, self.decoder_heads, self.context_heads, self.context_score_heads):
            if self.d % h:
                raise ValueError(f"hidden size {self.d} not divisible by {h} heads")

    @classmethod
    def full_scale(cls, vocab_size: int = 30522) -> "ModelConfig":
        return cls(vocab_size, d=768, encoder_layers=12, encoder_heads=12, decoder_layers=1,
                   decoder_heads=12, context_heads=12, max_positions=512, ffn_dim=3072)


def _neg_inf(x: torch.Tensor) -> float:
    return torch.finfo(x.dtype).min


class MultiHeadAttention(nn.Module):
    def __init__(self, d: int, heads: int):
        super().__init__()
        self.heads = heads
        self.q = nn.Linear(d, d)
        self.k = nn.Linear(d, d)
        self.v = nn.Linear(d, d)
        self.o = nn.Linear(d, d)

    def forward(self, query, key, key_mask=None, causal=False, need_weights=False):
        # query (..., Lq, d), key (..., Lk, d), key_mask (..., Lk) True = attend
        *lead, lq, d = query.shape
        lk = key.shape[-2]
        h, dh = self.heads, d // self.heads

        def split(x, n):
            return x.reshape(*x.shape[:-2], n, h, dh).transpose(-2, -3)

        q = split(self.q(query), lq)
        k = split(self.k(key), lk)
        v = split(self.v(key), lk)
        att = q @ k.transpose(-1, -2) / math.sqrt(dh)  # (..., h, Lq, Lk)
        if key_mask is not None:
            att = att.masked_fill(~key_mask[..., None, None, :], _neg_inf(att))
        if causal:
            tri = torch.ones(lq, lk, dtype=torch.bool, device=att.device).triu(lk - lq + 1)
            att = att.masked_fill(tri, _neg_inf(att))
        w = att.softmax(-1)
        out = (w @ v).transpose(-2, -3).reshape(*q.shape[:-3], lq, d)
        out = self.o(out)
        return (out, w) if need_weights else out


class FeedForward(nn.Sequential):
    def __init__(self, d: int, ffn: int, dropout: float):
        super().__init__(nn.Linear(d, ffn), nn.GELU(), nn.Linear(ffn, d), nn.Dropout(dropout))


class EncoderLayer(nn.Module):
    """Post-norm transformer block (BERT layout)."""

    def __init__(self, d, heads, ffn, dropout):
        super().__init__()
        self.attn = MultiHeadAttention(d, heads)
        self.ln1 = nn.LayerNorm(d)
        self.ffn = FeedForward(d, ffn, dropout)
        self.ln2 = nn.LayerNorm(d)
        self.drop = nn.Dropout(dropout)

    def forward(self, x, mask):
        x = self.ln1(x + self.drop(self.attn(x, x, mask)))
        return self.ln2(x + self.ffn(x))


class Encoder(nn.Module):
    def __init__(self, cfg: ModelConfig, dropout: float):
        super().__init__()
        self.max_positions = cfg.max_positions
        self.tok = nn.Embedding(cfg.vocab_size, cfg.d)
        self.pos = nn.Embedding(cfg.max_positions, cfg.d)
        self.ln = nn.LayerNorm(cfg.d)
        self.drop = nn.Dropout(dropout)
        self.layers = nn.ModuleList(
            EncoderLayer(cfg.d, cfg.encoder_heads, cfg.ffn_dim, dropout) for _ in range(cfg.encoder_layers)
        )

    def forward(self, ids, mask=None):
        if ids.shape[-1] > self.max_positions:
            raise ValueError(f"input of {ids.shape[-1]} tokens exceeds max_positions={self.max_positions}")
        if mask is None:
            mask = ids != PAD_ID
        pos = torch.arange(ids.shape[-1], device=ids.device)
        x = self.drop(self.ln(self.tok(ids) + self.pos(pos)))
        for layer in self.layers:
            x = layer(x, mask)
        return x


class DecoderLayer(nn.Module):
    def __init__(self, d, heads, ffn, dropout):
        super().__init__()
        self.self_attn = MultiHeadAttention(d, heads)
        self.ln1 = nn.LayerNorm(d)
        self.cross_attn = MultiHeadAttention(d, heads)
        self.ln2 = nn.LayerNorm(d)
        self.ffn = FeedForward(d, ffn, dropout)
        self.ln3 = nn.LayerNorm(d)
        self.drop = nn.Dropout(dropout)

    def forward(self, x, memory, memory_mask, past=None):
        # past: this layer's inputs at earlier steps; when given, x holds only new steps
        if past is None:
            sa = self.self_attn(x, x, causal=True)
        else:
            sa = self.self_attn(x, torch.cat([past, x], dim=-2), causal=True)
        x = self.ln1(x + self.drop(sa))
        x = self.ln2(x + self.drop(self.cross_attn(x, memory, memory_mask)))
        return self.ln3(x + self.ffn(x))


class EncodedContext(NamedTuple):
    states: torch.Tensor  # (B, l, U, d)
    token_mask: torch.Tensor  # (B, l, U)
    item_mask: torch.Tensor  # (B, l)
    summary: torch.Tensor  # (B, l+1, d); row 0 is the no-context vector

    def select(self, index: torch.Tensor) -> "EncodedContext":
        return EncodedContext(*(t.index_select(0, index) for t in self))


class StepOutput(NamedTuple):
    log_p_gen: torch.Tensor  # (..., V)
    scores: torch.Tensor  # (..., l+1)
    gate_logit: torch.Tensor  # (...)
    m: torch.Tensor  # (...) selected item, 0 = no context
    log_p_con: torch.Tensor | None  # (..., V)
    log_p: torch.Tensor  # (..., V) mixed distribution

    @property
    def gate(self) -> torch.Tensor:
        return torch.sigmoid(self.gate_logit)


class EDCEC(nn.Module):
    def __init__(self, cfg: ModelConfig, dropout: float = 0.0):
        super().__init__()
        self.cfg = cfg
        d = cfg.d
        self.encoder = Encoder(cfg, dropout)
        self.detector = nn.Linear(d, NUM_OPS)
        self.dec_in = nn.Linear(2 * d, d)
        self.decoder = nn.ModuleList(
            DecoderLayer(d, cfg.decoder_heads, cfg.ffn_dim, dropout) for _ in range(cfg.decoder_layers)
        )
        self.gen_out = nn.Linear(d, cfg.vocab_size)
        self.no_context = nn.Parameter(torch.zeros(d))
        self.gate = nn.Linear(1, 1)
        self.item_attn = MultiHeadAttention(d, cfg.context_heads)
        self.con_out = nn.Linear(d, cfg.vocab_size)
        if cfg.context_score_heads > 1:
            self.score_q = nn.Linear(d, d)
            self.score_k = nn.Linear(d, d)
        self.reset_parameters()

    def reset_parameters(self, std: float = 0.02) -> None:
        for mod in self.modules():
            if isinstance(mod, (nn.Linear, nn.Embedding)):
                nn.init.normal_(mod.weight, 0.0, std)
                if getattr(mod, "bias", None) is not None:
                    nn.init.zeros_(mod.bias)
            elif isinstance(mod, nn.LayerNorm):
                nn.init.ones_(mod.weight)
                nn.init.zeros_(mod.bias)
        nn.init.normal_(self.no_context, 0.0, std)
        nn.init.ones_(self.gate.weight)
        nn.init.zeros_(self.gate.bias)

    # -- input side ---------------------------------------------------------
    def encode_input(self, ids):
        return self.encoder(ids, ids != PAD_ID)

    def detect(self, states):
        """Per-token K/D/C logits."""
        return self.detector(states)

    def encode_context(self, item_ids) -> EncodedContext:
        """Encode every rare-list item with the shared encoder.

        ``item_ids`` is (B, l, U) with PAD filling; an all-PAD row is an
        absent item.
        """
        B, l, U = item_ids.shape
        d = self.cfg.d
        token_mask = item_ids != PAD_ID
        item_mask = token_mask.any(-1)
        dtype = self.no_context.dtype
        states = torch.zeros(B * l, U, d, dtype=dtype, device=item_ids.device)
        valid = item_mask.reshape(-1).nonzero().squeeze(-1)
        if valid.numel():
            flat = item_ids.reshape(B * l, U).index_select(0, valid)
            states = states.index_put((valid,), self.encoder(flat, flat != PAD_ID))
        states = states.reshape(B, l, U, d)
        tm = token_mask.unsqueeze(-1).to(dtype)
        means = (states * tm).sum(-2) / tm.sum(-2).clamp(min=1.0)
        summary = torch.cat([self.no_context.expand(B, 1, d), means], dim=1)
        return EncodedContext(states, token_mask, item_mask, summary)

    # -- decoder ------------------------------------------------------------
    def decoder_inputs(self, prefix, host, start: int = 0):
        """Fuse prefix token embeddings with the change-position state.

        prefix (N, t) token ids, host (N, d) encoder state of the position.
        Positions index the decode step, starting at ``start``.
        """
        pos = torch.arange(start, start + prefix.shape[-1], device=prefix.device)
        emb = self.encoder.tok(prefix) + self.encoder.pos(pos)
        host = host.unsqueeze(-2).expand(*emb.shape[:-1], host.shape[-1])
        return self.dec_in(torch.cat([emb, host], dim=-1))

    def decode(self, prefix, host, memory, memory_mask):
        """Teacher-forced decoder outputs for every prefix step: (N, t, d)."""
        x = self.decoder_inputs(prefix, host)
        for layer in self.decoder:
            x = layer(x, memory, memory_mask)
        return x

    def decode_step(self, token, step: int, host, memory, memory_mask, cache=None):
        """One incremental step; returns ((N, d) output, new cache).

        Equivalent to running :meth:`decode` on the whole prefix and
        keeping the last row.
        """
        x = self.decoder_inputs(token.unsqueeze(-1), host, start=step)
        new_cache = []
        for n, layer in enumerate(self.decoder):
            past = None if cache is None else cache[n]
            new_cache.append(x if past is None else torch.cat([past, x], dim=-2))
            x = layer(x, memory, memory_mask, past=past)
        return x.squeeze(-2), new_cache

    # -- context mechanism --------------------------------------------------
    def context_scores(self, out, summary, item_mask):
        """Similarity of decoder outputs to summary rows: (..., l+1).

        out (N, t, d), summary (N, l+1, d), item_mask (N, l).
        """
        q, k = out, summary
        if self.cfg.context_score_heads > 1:
            h = self.cfg.context_score_heads
            q = self.score_q(q).unflatten(-1, (h, -1)).transpose(-2, -3)  # (N, h, t, dh)
            k = self.score_k(k).unflatten(-1, (h, -1)).transpose(-2, -3)  # (N, h, l+1, dh)
            scores = (q @ k.transpose(-1, -2)).mean(-3)
            if self.cfg.scale_context_scores:
                scores = scores / math.sqrt(self.cfg.d // h)
        else:
            scores = q @ k.transpose(-1, -2)
            if self.cfg.scale_context_scores:
                scores = scores / math.sqrt(self.cfg.d)
        keep = torch.cat([item_mask.new_ones(item_mask.shape[0], 1), item_mask], dim=-1)
        return scores.masked_fill(~keep.unsqueeze(-2), _neg_inf(scores))

    def item_attend(self, out, ctx: EncodedContext, m):
        """Attend from decoder outputs into the tokens of item ``m`` (1-based).

        out (N, t, d), m (N, t); rows with m == 0 get item 1's tokens as a
        placeholder and must be discarded by the caller.
        """
        N, t, d = out.shape
        if ctx.states.shape[1] == 0:
            raise ValueError("no rare-list items to attend to")
        idx = (m - 1).clamp(min=0)
        U = ctx.states.shape[2]
        gather = idx[:, :, None, None].expand(N, t, U, d)
        states = ctx.states.gather(1, gather)  # (N, t, U, d)
        mask = ctx.token_mask.gather(1, idx[:, :, None].expand(N, t, U))
        o = self.item_attn(out.unsqueeze(-2), states, mask).squeeze(-2)
        return self.con_out(o)

    def step_outputs(self, out, ctx: EncodedContext, m=None) -> StepOutput:
        """Generation, context selection and gated mixing for decoder outputs.

        out (N, t, d) and ``ctx`` already gathered per change position.  If
        ``m`` is None the item with the highest score is used (lowest index
        on ties); otherwise ``m`` (N, t) is taken as given.
        """
        log_p_gen = F.log_softmax(self.gen_out(out), dim=-1)
        scores = self.context_scores(out, ctx.summary, ctx.item_mask)
        gate_logit = self.gate(scores[..., :1]).squeeze(-1)
        if m is None:
            m = scores.argmax(-1)
        if ctx.states.shape[1] == 0 or not bool((m > 0).any()):
            return StepOutput(log_p_gen, scores, gate_logit, m, None, log_p_gen)
        log_p_con = F.log_softmax(self.item_attend(out, ctx, m), dim=-1)
        mixed = torch.logaddexp(
            F.logsigmoid(gate_logit).unsqueeze(-1) + log_p_gen,
            F.logsigmoid(-gate_logit).unsqueeze(-1) + log_p_con,
        )
        log_p = torch.where((m > 0).unsqueeze(-1), mixed, log_p_gen)
        return StepOutput(log_p_gen, scores, gate_logit, m, log_p_con, log_p)


# -- checkpoint format ------------------------------------------------------
MAGIC = b"EDCECKPT"
FORMAT_VERSION = 1


def save_checkpoint(path, model: EDCEC) -> None:
    from .io import atomic_write_bytes

    cfg_values = [int(v) for v in astuple(model.cfg)]
    parts = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(cfg_values)),
             struct.pack(f"<{len(cfg_values)}q", *cfg_values)]
    state = model.state_dict()
    parts.append(struct.pack("<I", len(state)))
    for name, tensor in state.items():
        raw = name.encode("utf-8")
        arr = tensor.detach().cpu().to(torch.float32).numpy()
        parts.append(struct.pack("<I", len(raw)) + raw)
        parts.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    atomic_write_bytes(path, b"".join(parts))


def load_checkpoint(path, dropout: float = 0.0) -> EDCEC:
    with open(path, "rb") as f:
        data = f.read()
    if data[: len(MAGIC)] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    off = len(MAGIC)
    version, n_cfg = struct.unpack_from("<II", data, off)
    off += 8
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    values = struct.unpack_from(f"<{n_cfg}q", data, off)
    off += 8 * n_cfg
    kinds = [f.type for f in fields(ModelConfig)]
    cfg = ModelConfig(*(bool(v) if k in ("bool", bool) else v for v, k in zip(values, kinds)))
    (n_tensors,) = struct.unpack_from("<I", data, off)
    off += 4
    state = {}
    for _ in range(n_tensors):
        (n,) = struct.unpack_from("<I", data, off)
        off += 4
        name = data[off : off + n].decode("utf-8")
        off += n
        (rank,) = struct.unpack_from("<I", data, off)
        off += 4
        shape = struct.unpack_from(f"<{rank}I", data, off)
        off += 4 * rank
        count = int(np.prod(shape)) if rank else 1
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=off).reshape(shape)
        off += 4 * count
        state[name] = torch.from_numpy(arr.astype(np.float32))
    model = EDCEC(cfg, dropout=dropout)
    model.load_state_dict(state)
    return model
