"""Constrained decoding vs. regenerating the whole sentence.

    python demos/decoding_cost.py

Trains the desk model for one seed, then times both decoders on long
(20+ word) sentences with light corruption, single-threaded.
"""
import torch

from edcec.benchmark import corrupted_fraction, run_desk, speed_corpus
from edcec.infer import bench

torch.set_num_threads(1)
run = run_desk(0)
triples = speed_corpus(run.data.full_list, run.data.lexicon, n=100, seed=99)
print(f"{len(triples)} sentences, {100 * corrupted_fraction(triples):.1f}% corrupted words")
rep = bench(triples, run.model, run.vocab, repeats=5)
print(f"decoder steps   constrained {rep['steps_constrained']:5d}   full rewrite {rep['steps_baseline']:5d}"
      f"   ({rep['step_speedup']} fewer)")
print(f"ms / utterance  constrained {rep['constrained_ms_median']:6.2f}  full rewrite {rep['baseline_ms_median']:6.2f}"
      f"  ({rep['speedup']} faster)")
