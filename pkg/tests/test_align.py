import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from edcec.align import (
    CHANGE, DELETE, KEEP, Triple, assign_context_labels, build_example, debug_dump,
    insert_dummies, label_operations, lcs_align,
)
from edcec.infer import complete
from edcec.text import DUMMY, EOS, EOS_ID

from oracles import lcs_length_bruteforce

small_words = st.lists(st.sampled_from(["a", "b", "c", "d", "the", "cat", "thing"]), min_size=1, max_size=8)


def test_insert_dummies():
    assert insert_dummies(["x", "y"]) == [DUMMY, "x", DUMMY, "y", DUMMY]
    with pytest.raises(ValueError):
        insert_dummies([])


def test_lcs_matches_bruteforce_random_pairs():
    rng = random.Random(1)
    for _ in range(500):
        a = [rng.choice("abcd") for _ in range(rng.randint(0, 8))]
        b = [rng.choice("abcd") for _ in range(rng.randint(0, 8))]
        pairs = lcs_align(a, b)
        assert len(pairs) == lcs_length_bruteforce(a, b)
        assert all(a[i] == b[j] for i, j in pairs)
        assert all(i1 < i2 and j1 < j2 for (i1, j1), (i2, j2) in zip(pairs, pairs[1:]))


def test_lcs_tie_break_is_leftmost():
    assert lcs_align(["a", "a"], ["a"]) == [(0, 0)]
    assert lcs_align(["a"], ["a", "a"]) == [(0, 0)]


def test_substitution_labels():
    src, tgt = "i saw the cat".split(), "i saw a cat".split()
    lab = label_operations(src, tgt, lcs_align(src, tgt))
    # slots: D i D saw D the D cat D
    assert lab.labels == [KEEP, KEEP, KEEP, KEEP, KEEP, CHANGE, KEEP, KEEP, KEEP]
    assert lab.targets == {5: ["a", EOS]}


def test_insertion_hosted_on_dummy():
    src, tgt = "a c".split(), "a b c".split()
    lab = label_operations(src, tgt, lcs_align(src, tgt))
    assert lab.labels == [KEEP, KEEP, CHANGE, KEEP, KEEP]
    assert lab.targets == {2: ["b", EOS]}


def test_deletion_and_multiword_change():
    src, tgt = "x y z w".split(), "x q r w".split()
    lab = label_operations(src, tgt, lcs_align(src, tgt))
    # y hosts the change, z is deleted
    assert lab.labels[3] == CHANGE and lab.labels[5] == DELETE
    assert lab.targets == {3: ["q", "r", EOS]}
    src, tgt = "x y w".split(), "x w".split()
    lab = label_operations(src, tgt, lcs_align(src, tgt))
    assert lab.labels[3] == DELETE and not lab.targets


def test_context_labels_first_match_case_insensitive():
    got = assign_context_labels({1: ["Halcyon", EOS], 3: ["new", "york", EOS], 5: ["zz", EOS]},
                                ["foo", "halcyon", "New York", "HALCYON"])
    assert got == {1: 2, 3: 3, 5: 0}


def test_build_example_change_on_multipiece_word(letter_vocab):
    ex = build_example(Triple(["cats"], ["dog"], ["dog"]), letter_vocab)
    # tokens: DUMMY cat ##s DUMMY ; first piece hosts the change
    assert ex.op_labels == [KEEP, CHANGE, DELETE, KEEP]
    assert ex.change_targets == {1: [letter_vocab.id("d"), letter_vocab.id("##o"), letter_vocab.id("##g"), EOS_ID]}
    assert ex.context_labels == {1: 1}


def test_target_truncation_counted(letter_vocab):
    ex = build_example(Triple(["a"], ["abcdefghij"]), letter_vocab, max_target_len=4)
    assert ex.truncated == 1
    assert len(ex.change_targets[1]) == 4 and ex.change_targets[1][-1] == EOS_ID


@given(small_words, small_words)
def test_gold_completion_reconstructs_target(letter_vocab, src, tgt):
    ex = build_example(Triple(src, tgt), letter_vocab, max_target_len=64)
    assert complete(ex.input_ids, ex.op_labels, ex.change_targets, letter_vocab) == tgt


def test_dumps_is_stable(letter_vocab):
    t = Triple("the cat".split(), "a cat".split(), ["a"])
    a, b = build_example(t, letter_vocab), build_example(t, letter_vocab)
    assert a.dumps() == b.dumps()
    assert "->" in debug_dump(a, letter_vocab)


def test_triple_json_roundtrip():
    t = Triple(["a", "b"], ["a", "c"], ["c"])
    assert Triple.from_json(t.to_json()) == t
    with pytest.raises(ValueError):
        Triple([], ["a"])
