"""How a (source, target, list) triple becomes a tagged training example.

    python demos/alignment_walkthrough.py
"""
from edcec.align import Triple, build_example, debug_dump, label_operations, lcs_align
from edcec.infer import complete
from edcec.text import build_vocab

triple = Triple(
    src="mister quick sat the mat today".split(),
    tgt="mister quixotic sat on the mat".split(),
    ctx=["halcyon", "quixotic", "zephyrs"],
)

# word level: dummies between words give insertions a host slot
pairs = lcs_align(triple.src, triple.tgt)
labels = label_operations(triple.src, triple.tgt, pairs)
print("LCS pairs:", pairs)
for n, (slot, lab) in enumerate(zip(labels.slots, labels.labels)):
    extra = "  -> " + " ".join(labels.targets[n]) if n in labels.targets else ""
    print(f"  {slot:<10} {'KDC'[lab]}{extra}")

# token level: a changed word hosts the change on its first piece
vocab = build_vocab([triple.src, triple.tgt, triple.ctx], max_size=60)
ex = build_example(triple, vocab)
print()
print(debug_dump(ex, vocab))

# completing with the gold labels and targets gives the target back
print()
print("completed:", " ".join(complete(ex.input_ids, ex.op_labels, ex.change_targets, vocab)))
