"""End-to-end acceptance checks.  Each test records one PASS/FAIL line,
printed together at the end of the pytest run (see conftest.py).

Run alone with ``pytest tests/test_acceptance.py -v``; the trained-model
checks (efficacy, ablation, speed) share five desk-scale training runs
and take several minutes on one core.
"""
import random
import statistics
import time

import numpy as np
import pytest
import torch

from edcec.align import Triple, build_example, lcs_align
from edcec.benchmark import corrupted_fraction, desk_data, desk_vocab, run_desk, speed_corpus
from edcec.datagen import CorruptionConfig, generate, make_clean_corpus
from edcec.infer import bench, complete
from edcec.metrics import edit_distance, score
from edcec.model import EDCEC, MultiHeadAttention, save_checkpoint
from edcec.text import build_vocab
from edcec.train import TINY_CONFIG, TrainConfig, collate, grad_check, random_examples, train_epochs
from edcec.wordlists import rare_inventory

from oracles import edit_distance_recursive, lcs_length_bruteforce

RESULTS: list[str] = []
SEEDS = [0, 1, 2, 3, 4]


def record(n: int, name: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {n}. {name}: {detail}"
    RESULTS.append(line)
    print(line)


def test_1_reconstruction():
    t0 = time.perf_counter()
    rng = random.Random(0)
    clean = make_clean_corpus(500, seed=11)
    full = sorted(set(rare_inventory()))
    noisy, _ = generate(clean, full, CorruptionConfig(p_sub_rare=0.7, p_del=0.1, p_ins=0.1, seed=11))
    alphabet = ["x", "y", "z", "ab", "ba", "cab", "abc"]
    rand = []
    for _ in range(500):
        src = [rng.choice(alphabet) for _ in range(rng.randint(1, 10))]
        tgt = [rng.choice(alphabet) for _ in range(rng.randint(1, 10))]
        rand.append(Triple(src, tgt, [rng.choice(alphabet)]))
    triples = noisy + rand
    vocab = build_vocab([t.src for t in triples] + [t.tgt for t in triples], max_size=600)
    ok = 0
    for t in triples:
        ex = build_example(t, vocab, max_target_len=256)
        ok += complete(ex.input_ids, ex.op_labels, ex.change_targets, vocab) == t.tgt
    dt = time.perf_counter() - t0
    passed = ok == len(triples) == 1000 and dt < 10
    record(1, "reconstruction oracle", passed, f"{ok}/{len(triples)} exact in {dt:.1f}s (limit 10s)")
    assert passed


def test_2_alignment_oracle():
    rng = random.Random(1)
    ok = 0
    for _ in range(500):
        a = [rng.choice("abcde") for _ in range(rng.randint(0, 8))]
        b = [rng.choice("abcde") for _ in range(rng.randint(0, 8))]
        ok += len(lcs_align(a, b)) == lcs_length_bruteforce(a, b)
    record(2, "alignment oracle", ok == 500, f"{ok}/500 LCS lengths match brute force")
    assert ok == 500


def test_3_metrics_oracle():
    rng = random.Random(2)
    ok_dist = ok_part = 0
    for _ in range(500):
        ref = [rng.choice("abcd") for _ in range(rng.randint(1, 6))]
        hyp = [rng.choice("abcd") for _ in range(rng.randint(0, 6))]
        lst = rng.sample("abcd", rng.randint(0, 2))
        ok_dist += edit_distance(ref, hyp) == edit_distance_recursive(ref, hyp)
        rep = score(ref, hyp, lst)
        ok_part += all(getattr(rep.b_wer, f) + getattr(rep.u_wer, f) == getattr(rep.wer, f)
                       for f in ("sub", "dels", "ins", "denominator"))
    hand = score("a b c".split(), "a x c".split(), ["b"])
    hand_ok = ((hand.wer.errors, hand.wer.denominator), (hand.b_wer.errors, hand.b_wer.denominator),
               (hand.u_wer.errors, hand.u_wer.denominator)) == ((1, 3), (1, 1), (0, 2))
    passed = ok_dist == 500 and ok_part == 500 and hand_ok
    record(3, "metrics oracle", passed,
           f"distance {ok_dist}/500, B+U partition {ok_part}/500, hand example {'ok' if hand_ok else 'wrong'}")
    assert passed


def test_4_gradient_check():
    t0 = time.perf_counter()
    reports = [grad_check(seed=s, n_coords=100) for s in SEEDS]
    dt = time.perf_counter() - t0
    worst = max(r.max_rel_error for r in reports)
    passed = all(r.passed(1e-3) and r.n_checked >= 100 for r in reports) and dt < 60
    record(4, "gradient check", passed,
           f"max relative error {worst:.2e} over {min(r.n_checked for r in reports)}+ coords x 5 seeds "
           f"in {dt:.1f}s (limits 1e-3, 60s)")
    assert passed


def test_5_distribution_sanity(monkeypatch):
    captured = []
    original = MultiHeadAttention.forward

    def spy(self, query, key, key_mask=None, causal=False, need_weights=False):
        out, w = original(self, query, key, key_mask, causal, need_weights=True)
        captured.append(w.detach())
        return (out, w) if need_weights else out

    monkeypatch.setattr(MultiHeadAttention, "forward", spy)
    torch.manual_seed(0)
    model = EDCEC(TINY_CONFIG).double().eval()
    model.reset_parameters(std=0.5)
    batch = collate(random_examples(np.random.default_rng(0), TINY_CONFIG.vocab_size, n=6))
    with torch.no_grad():
        states = model.encode_input(batch.input_ids)
        det = model.detect(states).softmax(-1)
        host = states[batch.pos_batch, batch.pos_index]
        mem = states.index_select(0, batch.pos_batch)
        mask = (batch.input_ids != 0).index_select(0, batch.pos_batch)
        out = model.decode(batch.dec_in, host, mem, mask)
        ctx = model.encode_context(batch.item_ids).select(batch.pos_batch)
        m = batch.ctx_labels.unsqueeze(-1).expand_as(batch.dec_in)
        so = model.step_outputs(out, ctx, m)
        so_free = model.step_outputs(out, ctx)
    dists = {"detection": det, "generation": so.log_p_gen.exp(), "context": so.log_p_con.exp(),
             "selection": so.scores.softmax(-1), "mixed": so.log_p.exp(), "mixed (argmax item)": so_free.log_p.exp()}
    dists.update({f"attention {i}": w for i, w in enumerate(captured)})
    err = max(float((d.sum(-1) - 1).abs().max()) for d in dists.values())
    g = so.gate
    gate_ok = bool(((g > 0) & (g < 1)).all())
    passed = err <= 1e-6 and gate_ok and len(captured) > 0
    record(5, "distribution sanity", passed,
           f"{len(dists)} distributions, max |sum-1| = {err:.1e}; gate in (0,1): {gate_ok}")
    assert passed


@pytest.fixture(scope="module")
def desk_runs():
    t0 = time.perf_counter()
    runs = [run_desk(seed) for seed in SEEDS]
    return runs, time.perf_counter() - t0


def test_6_mechanism_efficacy(desk_runs):
    runs, seconds = desk_runs
    per_seed = []
    wins = 0
    for r in runs:
        red = r.b_wer_reduction()
        beats_empty = r.b_wer["10"] < r.b_wer["0"]
        wins += red >= 0.30 and beats_empty
        per_seed.append(f"s{r.seed}: -{100 * red:.0f}% ({r.b_wer['input']:.3f}->{r.b_wer['10']:.3f}, "
                        f"empty {r.b_wer['0']:.3f})")
    n_train, n_test = len(runs[0].data.train), len(runs[0].data.test)
    passed = wins >= 4 and seconds < 15 * 60 and n_train >= 2000 and n_test >= 500
    record(6, "mechanism efficacy", passed,
           f"{wins}/5 seeds with B-WER reduction >= 30% and better than empty lists; "
           f"{seconds / 60:.1f} min for 5 seeds (limit 15); " + "; ".join(per_seed))
    assert passed


def test_7_contextual_ablation(desk_runs):
    runs, _ = desk_runs
    wins = 0
    per_seed = []
    for r in runs:
        b = r.b_wer
        wins += b["10"] <= b["anti-10"] and b["10"] <= b["0"]
        per_seed.append(f"s{r.seed}: true {b['10']:.3f} anti {b['anti-10']:.3f} empty {b['0']:.3f}")
    passed = wins >= 4
    record(7, "contextual ablation", passed, f"{wins}/5 seeds monotone; " + "; ".join(per_seed))
    assert passed


def test_8_speed(desk_runs):
    runs, _ = desk_runs
    run = runs[0]
    triples = speed_corpus(run.data.full_list, run.data.lexicon, n=100, seed=99)
    frac = corrupted_fraction(triples)
    shortest = min(len(t.src) for t in triples)
    rep = bench(triples, run.model, run.vocab, repeats=5)
    step_ok = rep["step_ratio"] is not None and rep["step_ratio"] < 0.5
    wall = statistics.median(rep["ratio_runs"])
    passed = frac <= 0.15 and shortest >= 20 and step_ok and wall < 0.9
    record(8, "speed", passed,
           f"steps {rep['steps_constrained']} vs {rep['steps_baseline']} (ratio {rep['step_ratio']:.3f}, limit 0.5); "
           f"median wall-clock ratio {wall:.3f} over 5 runs (limit 0.9, speedup {rep['speedup']}); "
           f"{100 * frac:.1f}% corrupted, sentences >= {shortest} words")
    assert passed


def test_9_determinism(tmp_path):
    def build(root):
        data = desk_data(seed=7, n_train=120, n_test=10, lexicon_extra=100)
        corpus = root / "corpus.jsonl"
        from edcec.io import write_jsonl

        write_jsonl(corpus, [t.to_json() for t in data.train])
        vocab = desk_vocab(data, max_size=300)
        vocab.save(root / "vocab.txt")
        exs = [build_example(t, vocab) for t in data.train]
        from edcec.benchmark import desk_model_config

        res = train_epochs(exs, TrainConfig(epochs=2, seed=7, batch_size=16, lr=2e-3, reduction="utterance"),
                           desk_model_config(len(vocab)))
        save_checkpoint(root / "model.ckpt", res.model)
        return [(root / n).read_bytes() for n in ("corpus.jsonl", "vocab.txt", "model.ckpt")]

    threads = torch.get_num_threads()
    torch.set_num_threads(1)
    try:
        (tmp_path / "a").mkdir()
        (tmp_path / "b").mkdir()
        a, b = build(tmp_path / "a"), build(tmp_path / "b")
    finally:
        torch.set_num_threads(threads)
    same = [x == y for x, y in zip(a, b)]
    passed = all(same)
    record(9, "determinism", passed,
           "byte-identical " + ", ".join(f"{n}={s}" for n, s in zip(("corpus", "vocab", "checkpoint"), same)))
    assert passed
