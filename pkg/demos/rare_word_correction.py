"""Train the desk-scale model on the bundled corpus and compare list conditions.

    python demos/rare_word_correction.py [seed]

About a minute on one CPU core.  Prints B-WER / U-WER for the uncorrected
input, empty lists, distractor-only lists and lists with the true words,
then a few corrected utterances with their copy traces.
"""
import sys

import torch

from edcec.benchmark import run_desk
from edcec.infer import correct

torch.set_num_threads(1)
seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0

run = run_desk(seed, on_epoch=lambda r: print(f"epoch {r.epoch:2d}  loss {r.total:.3f}", flush=True))
print(f"\ntrained in {run.seconds:.0f}s\n")
print(f"{'condition':>10}  {'WER':>6}  {'B-WER':>6}  {'U-WER':>6}")
for name, rep in run.reports.items():
    print(f"{name:>10}  {rep.wer.rate:6.3f}  {rep.b_wer.rate:6.3f}  {rep.u_wer.rate:6.3f}")
print(f"\nB-WER reduction with true-word lists: {100 * run.b_wer_reduction():.1f}%\n")

shown = 0
for t in run.data.test:
    res = correct(t.src, t.ctx, run.model, run.vocab)
    if not res.changes:
        continue
    print("src :", " ".join(t.src))
    print("hyp :", " ".join(res.words))
    print("ref :", " ".join(t.tgt))
    for c in res.changes:
        toks = [run.vocab.token(i) for i in c.tokens]
        print(f"      pos {c.pos}: {toks}  item {c.m_trace}  gate {[round(g, 2) for g in c.gate_trace]}")
    print()
    shown += 1
    if shown == 5:
        break
