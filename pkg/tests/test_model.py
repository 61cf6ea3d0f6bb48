import numpy as np
import pytest
import torch

from edcec.model import EDCEC, EncodedContext, ModelConfig, MultiHeadAttention, load_checkpoint, save_checkpoint
from edcec.text import BOS_ID, PAD_ID
from edcec.train import TINY_CONFIG

from oracles import attention_numpy


def _weights(lin):
    return lin.weight.detach().double().numpy(), lin.bias.detach().double().numpy()


@pytest.mark.parametrize("causal", [False, True])
def test_attention_matches_hand_computation(causal):
    torch.manual_seed(0)
    attn = MultiHeadAttention(4, 2).double()
    q = torch.randn(3, 4, dtype=torch.float64)
    k = torch.randn(5, 4, dtype=torch.float64)
    mask = torch.tensor([True, True, False, True, True])
    out, w = attn(q, k, mask, causal=causal, need_weights=True)
    ref_out, ref_w = attention_numpy(q.numpy(), k.numpy(), *_weights(attn.q), *_weights(attn.k), *_weights(attn.v),
                                     *_weights(attn.o), heads=2, mask=mask.numpy(), causal=causal)
    np.testing.assert_allclose(out.detach().numpy(), ref_out, atol=1e-12)
    np.testing.assert_allclose(w.detach().numpy(), ref_w, atol=1e-12)
    assert float(w[..., 2].detach().abs().max()) == 0.0


def test_attention_hand_trace_uniform():
    # identity projections, zero keys: every weight is 1/Lk and the output is the mean value
    attn = MultiHeadAttention(4, 1).double()
    with torch.no_grad():
        for lin in (attn.q, attn.v, attn.o):
            lin.weight.copy_(torch.eye(4))
            lin.bias.zero_()
        attn.k.weight.zero_()
        attn.k.bias.zero_()
    key = torch.tensor([[1.0, 0, 0, 0], [0, 2.0, 0, 0]], dtype=torch.float64)
    out, w = attn(torch.ones(1, 4, dtype=torch.float64), key, need_weights=True)
    assert torch.allclose(w, torch.full_like(w, 0.5))
    assert torch.allclose(out, torch.tensor([[0.5, 1.0, 0, 0]], dtype=torch.float64))


def _model(seed=0, **kw):
    torch.manual_seed(seed)
    cfg = ModelConfig(**{**TINY_CONFIG.__dict__, **kw})
    m = EDCEC(cfg).double().eval()
    m.reset_parameters(std=0.3)
    return m


def test_incremental_decoding_matches_full():
    m = _model()
    N, L, T = 3, 6, 5
    ids = torch.randint(6, 20, (N, L))
    ids[0, 4:] = PAD_ID
    mask = ids != PAD_ID
    mem = m.encode_input(ids)
    host = mem[:, 1]
    prefix = torch.cat([torch.full((N, 1), BOS_ID), torch.randint(6, 20, (N, T - 1))], dim=1)
    full = m.decode(prefix, host, mem, mask)
    cache = None
    for t in range(T):
        out, cache = m.decode_step(prefix[:, t], t, host, mem, mask, cache)
        torch.testing.assert_close(out, full[:, t], atol=1e-10, rtol=0)


def test_encoder_ignores_padding():
    m = _model()
    ids = torch.tensor([[7, 8, 9]])
    padded = torch.tensor([[7, 8, 9, PAD_ID, PAD_ID]])
    torch.testing.assert_close(m.encode_input(ids), m.encode_input(padded)[:, :3], atol=1e-10, rtol=0)


def test_encoder_rejects_overlong_input():
    m = _model()
    with pytest.raises(ValueError):
        m.encode_input(torch.full((1, TINY_CONFIG.max_positions + 1), 7))


def _ctx(m, items):
    return m.encode_context(items)


def test_context_encoding_ignores_absent_items():
    m = _model()
    a = torch.tensor([[[7, 8], [9, PAD_ID]]])
    b = torch.tensor([[[7, 8, PAD_ID], [9, PAD_ID, PAD_ID], [PAD_ID] * 3]])
    ca, cb = _ctx(m, a), _ctx(m, b)
    torch.testing.assert_close(ca.summary, cb.summary[:, :3], atol=1e-10, rtol=0)
    assert cb.item_mask.tolist() == [[True, True, False]]


def test_absent_items_never_selected_and_empty_list_is_generation_only():
    m = _model()
    out = torch.randn(1, 2, TINY_CONFIG.d, dtype=torch.float64)
    ctx = _ctx(m, torch.tensor([[[7, 8], [PAD_ID, PAD_ID]]]))
    so = m.step_outputs(out, ctx)
    assert so.scores[..., 2].max() < -1e300
    assert (so.m <= 1).all()
    empty = _ctx(m, torch.zeros(1, 0, 1, dtype=torch.long))
    so = m.step_outputs(out, empty)
    assert so.scores.shape[-1] == 1
    assert so.log_p_con is None and torch.equal(so.log_p, so.log_p_gen)


def test_gate_initialised_to_identity_on_no_context_score():
    m = _model()
    assert m.gate.weight.item() == 1.0 and m.gate.bias.item() == 0.0
    out = torch.randn(2, 3, TINY_CONFIG.d, dtype=torch.float64)
    ctx = _ctx(m, torch.randint(6, 20, (2, 2, 3)))
    so = m.step_outputs(out, ctx)
    torch.testing.assert_close(so.gate_logit, so.scores[..., 0])


def test_mixture_and_selection():
    m = _model()
    out = torch.randn(2, 3, TINY_CONFIG.d, dtype=torch.float64)
    ctx = _ctx(m, torch.randint(6, 20, (2, 3, 2)))
    forced = torch.tensor([[0, 1, 2], [3, 0, 1]])
    so = m.step_outputs(out, ctx, m=forced)
    g = so.gate.unsqueeze(-1)
    mixed = g * so.log_p_gen.exp() + (1 - g) * so.log_p_con.exp()
    expect = torch.where((forced > 0).unsqueeze(-1), mixed, so.log_p_gen.exp())
    torch.testing.assert_close(so.log_p.exp(), expect, atol=1e-12, rtol=0)
    # item attention only reads the selected item's tokens
    other = ctx._replace(states=ctx.states.clone())
    other.states[0, 2] += 5.0  # item 3 of utterance 0 is never selected there
    so2 = m.step_outputs(out, other, m=forced)
    torch.testing.assert_close(so2.log_p_con[0], so.log_p_con[0])


def test_argmax_ties_pick_lowest_index():
    m = _model()
    d = TINY_CONFIG.d
    out = torch.ones(1, 1, d, dtype=torch.float64)
    states = torch.zeros(1, 2, 1, d, dtype=torch.float64)
    summary = torch.zeros(1, 3, d, dtype=torch.float64)
    summary[0, 1] = summary[0, 2] = 1.0
    ctx = EncodedContext(states, torch.ones(1, 2, 1, dtype=torch.bool), torch.ones(1, 2, dtype=torch.bool), summary)
    assert int(m.step_outputs(out, ctx).m) == 1


def test_multi_head_scores_option():
    m = _model(context_score_heads=2, scale_context_scores=True)
    out = torch.randn(2, 3, TINY_CONFIG.d, dtype=torch.float64)
    so = m.step_outputs(out, _ctx(m, torch.randint(6, 20, (2, 2, 2))))
    assert so.scores.shape == (2, 3, 3)


def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(10, d=6, encoder_heads=4)
    with pytest.raises(ValueError):
        ModelConfig(0)


def test_checkpoint_roundtrip(tmp_path):
    m = _model().float()
    save_checkpoint(tmp_path / "a.ckpt", m)
    back = load_checkpoint(tmp_path / "a.ckpt")
    assert back.cfg == m.cfg
    for (n1, p1), (n2, p2) in zip(m.state_dict().items(), back.state_dict().items()):
        assert n1 == n2 and torch.equal(p1, p2)
    save_checkpoint(tmp_path / "b.ckpt", back)
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()


def test_checkpoint_rejects_garbage(tmp_path):
    p = tmp_path / "x.ckpt"
    p.write_bytes(b"not a checkpoint")
    with pytest.raises(ValueError):
        load_checkpoint(p)
