import math
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from edcec.metrics import DEL, INS, MATCH, SUB, Bucket, normalize, score, score_corpus, word_align, edit_distance, werr

from oracles import edit_distance_exhaustive, edit_distance_recursive

seqs = st.lists(st.sampled_from("abc"), max_size=6)


def test_edit_distance_matches_bruteforce():
    rng = random.Random(3)
    for _ in range(500):
        a = [rng.choice("abcd") for _ in range(rng.randint(0, 6))]
        b = [rng.choice("abcd") for _ in range(rng.randint(0, 6))]
        assert edit_distance(a, b) == edit_distance_recursive(a, b)


@given(st.lists(st.sampled_from("ab"), max_size=4), st.lists(st.sampled_from("ab"), max_size=4))
def test_edit_distance_matches_exhaustive_search(a, b):
    assert edit_distance(a, b) == edit_distance_exhaustive(a, b)


@given(seqs, seqs)
def test_script_is_consistent(ref, hyp):
    script = word_align(ref, hyp)
    assert [i for op, i, _ in script if op != INS] == list(range(len(ref)))
    assert [j for op, _, j in script if op != DEL] == list(range(len(hyp)))
    for op, i, j in script:
        if op == MATCH:
            assert ref[i] == hyp[j]
        if op == SUB:
            assert ref[i] != hyp[j]


def test_hand_example():
    rep = score("a b c".split(), "a x c".split(), ["b"])
    assert (rep.wer.errors, rep.wer.denominator) == (1, 3)
    assert (rep.b_wer.errors, rep.b_wer.denominator) == (1, 1)
    assert (rep.u_wer.errors, rep.u_wer.denominator) == (0, 2)


def test_insertion_charged_by_hypothesis_word():
    rep = score("a b".split(), "a zed b".split(), ["zed"])
    assert rep.b_wer.ins == 1 and rep.u_wer.ins == 0
    assert rep.b_wer.denominator == 0 and math.isinf(rep.b_wer.rate) and not rep.b_wer.finite
    assert rep.to_json()["b_wer"]["rate"] is None
    rep = score("a b".split(), "a q b".split(), ["zed"])
    assert rep.u_wer.ins == 1


@given(seqs.filter(bool), seqs, st.lists(st.sampled_from("abc"), max_size=3))
def test_buckets_partition_total(ref, hyp, lst):
    rep = score(ref, hyp, lst)
    for field in ("sub", "dels", "ins", "denominator"):
        assert getattr(rep.b_wer, field) + getattr(rep.u_wer, field) == getattr(rep.wer, field)
    assert rep.wer.errors == edit_distance(ref, hyp)


def test_normalization():
    assert normalize(["Hello", ",", "World", "--"]) == ["hello", "world"]
    assert score(["Hello", "world"], ["hello", ",", "WORLD"]).wer.errors == 0


def test_empty_reference_rejected():
    with pytest.raises(ValueError):
        score([], ["a"])


def test_corpus_and_werr():
    rep = score_corpus([["a", "b"], ["c"]], [["a", "b"], ["d"]], [[], ["c"]])
    assert rep.utterances == 2 and rep.wer.rate == pytest.approx(1 / 3)
    assert werr(0.5, 0.25) == 0.5
    assert werr(0.0, 0.1) is None
    assert Bucket().rate == 0.0
