import random

import pytest

from factify.datamodel import ClaimDocPair
from factify.lexical import (
    RougeScore,
    lcs_length,
    lexical_features,
    rouge_l,
    rouge_n,
    tokenize,
)

# ---------------------------------------------------------------------------
# independent oracles: plain-loop n-gram counting and exhaustive-subsequence LCS
# ---------------------------------------------------------------------------


def brute_ngram_overlap(candidate, reference, n):
    cand = [tuple(candidate[i : i + n]) for i in range(len(candidate) - n + 1)]
    ref = [tuple(reference[i : i + n]) for i in range(len(reference) - n + 1)]
    pool = list(ref)
    overlap = 0
    for gram in cand:
        if gram in pool:
            pool.remove(gram)
            overlap += 1
    return overlap, len(cand), len(ref)


def brute_rouge_n(candidate, reference, n):
    overlap, n_cand, n_ref = brute_ngram_overlap(candidate, reference, n)
    precision = overlap / n_cand if n_cand else 0.0
    recall = overlap / n_ref if n_ref else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return RougeScore(recall=recall, precision=precision, f1=f1)


def is_subsequence(sub, seq):
    it = iter(seq)
    return all(token in it for token in sub)


def brute_lcs(a, b):
    best = 0
    for mask in range(1 << len(a)):
        sub = [a[i] for i in range(len(a)) if mask >> i & 1]
        if len(sub) > best and is_subsequence(sub, b):
            best = len(sub)
    return best


# ---------------------------------------------------------------------------
# tokenizer
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "text,expected",
    [
        ("The cat sat.", ["the", "cat", "sat"]),
        ("", []),
        ("COVID-19 spreads", ["covid", "19", "spreads"]),
        ("...!?", []),
        ("a_b c", ["a", "b", "c"]),  # underscore is a separator
        ("Ünïcode WÖRDS", ["ünïcode", "wörds"]),
    ],
)
def test_tokenize(text, expected):
    assert tokenize(text) == expected


def test_tokens_never_empty_or_spaced():
    rng = random.Random(0)
    chars = "ab c-d.eü!_9"
    for _ in range(200):
        text = "".join(rng.choice(chars) for _ in range(rng.randint(0, 30)))
        for token in tokenize(text):
            assert token and not any(ch.isspace() for ch in token)


# ---------------------------------------------------------------------------
# rouge_n
# ---------------------------------------------------------------------------


def test_rouge1_hand_example():
    score = rouge_n(["the", "cat", "ran"], ["the", "cat", "sat"], 1)
    assert score.recall == pytest.approx(2 / 3, abs=1e-12)
    assert score.precision == pytest.approx(2 / 3, abs=1e-12)
    assert score.f1 == pytest.approx(2 / 3, abs=1e-4)


def test_rouge2_hand_example():
    score = rouge_n(["the", "cat", "ran"], ["the", "cat", "sat"], 2)
    assert score.recall == pytest.approx(0.5, abs=1e-12)
    assert score.precision == pytest.approx(0.5, abs=1e-12)
    assert score.f1 == pytest.approx(0.5, abs=1e-12)


def test_rouge_n_identity():
    seq = ["a", "b", "b", "c"]
    for n in range(1, len(seq) + 1):
        score = rouge_n(seq, seq, n)
        assert score.recall == score.precision == score.f1 == 1.0


def test_rouge_n_degenerate_inputs_zero():
    assert rouge_n([], ["a"], 1) == RougeScore(0.0, 0.0, 0.0)
    assert rouge_n(["a"], [], 1) == RougeScore(0.0, 0.0, 0.0)
    assert rouge_n(["a"], ["a"], 2) == RougeScore(0.0, 0.0, 0.0)  # n > lengths


def test_rouge_n_rejects_bad_n():
    with pytest.raises(ValueError):
        rouge_n(["a"], ["a"], 0)


def test_rouge_n_matches_brute_force():
    rng = random.Random(7)
    alphabet = "abcd"
    for _ in range(300):
        cand = [rng.choice(alphabet) for _ in range(rng.randint(0, 8))]
        ref = [rng.choice(alphabet) for _ in range(rng.randint(0, 8))]
        n = rng.randint(1, 3)
        got = rouge_n(cand, ref, n)
        want = brute_rouge_n(cand, ref, n)
        assert got.recall == pytest.approx(want.recall, abs=1e-12)
        assert got.precision == pytest.approx(want.precision, abs=1e-12)
        assert got.f1 == pytest.approx(want.f1, abs=1e-12)


def test_monotone_overlap_when_appending_reference_token():
    rng = random.Random(11)
    for _ in range(200):
        cand = [rng.choice("abcd") for _ in range(rng.randint(0, 6))]
        ref = [rng.choice("abcd") for _ in range(rng.randint(1, 6))]
        before, _, _ = brute_ngram_overlap(cand, ref, 1)
        grown = cand + [rng.choice(ref)]
        after = brute_ngram_overlap(grown, ref, 1)[0]
        assert after >= before
        got = rouge_n(grown, ref, 1)
        assert got.recall * len(ref) == pytest.approx(after, abs=1e-9)


# ---------------------------------------------------------------------------
# rouge_l
# ---------------------------------------------------------------------------


def test_rouge_l_hand_examples():
    score = rouge_l(["the", "cat", "ran"], ["the", "cat", "sat"])
    assert score.recall == pytest.approx(2 / 3, abs=1e-12)
    assert score.f1 == pytest.approx(2 / 3, abs=1e-4)

    reversed_score = rouge_l(["a", "b", "c"], ["c", "b", "a"])
    assert reversed_score.f1 == pytest.approx(1 / 3, abs=1e-12)

    empty = rouge_l([], ["a", "b"])
    assert empty == RougeScore(0.0, 0.0, 0.0)


def test_lcs_matches_exhaustive_enumeration():
    rng = random.Random(13)
    for _ in range(300):
        a = [rng.choice("abcd") for _ in range(rng.randint(0, 8))]
        b = [rng.choice("abcd") for _ in range(rng.randint(0, 8))]
        assert lcs_length(a, b) == brute_lcs(a, b)


def test_symmetric_f_property():
    # swapping candidate/reference swaps recall and precision, keeps f1
    rng = random.Random(17)
    for _ in range(200):
        a = [rng.choice("abcd") for _ in range(rng.randint(0, 8))]
        b = [rng.choice("abcd") for _ in range(rng.randint(0, 8))]
        n = rng.randint(1, 2)
        fwd, bwd = rouge_n(a, b, n), rouge_n(b, a, n)
        assert fwd.recall == pytest.approx(bwd.precision, abs=1e-12)
        assert fwd.precision == pytest.approx(bwd.recall, abs=1e-12)
        assert fwd.f1 == pytest.approx(bwd.f1, abs=1e-12)
        fwd, bwd = rouge_l(a, b), rouge_l(b, a)
        assert fwd.recall == pytest.approx(bwd.precision, abs=1e-12)
        assert fwd.f1 == pytest.approx(bwd.f1, abs=1e-12)


def test_all_scores_within_unit_interval():
    rng = random.Random(19)
    for _ in range(200):
        a = [rng.choice("ab") for _ in range(rng.randint(0, 8))]
        b = [rng.choice("ab") for _ in range(rng.randint(0, 8))]
        for score in (rouge_n(a, b, 1), rouge_n(a, b, 2), rouge_l(a, b)):
            for value in (score.recall, score.precision, score.f1):
                assert 0.0 <= value <= 1.0


# ---------------------------------------------------------------------------
# lexical_features
# ---------------------------------------------------------------------------


def _pair(claim, doc):
    return ClaimDocPair(
        id="t", claim_text=claim, doc_text=doc, claim_image_ref="", doc_image_ref=""
    )


def test_lexical_features_hand_example():
    feats = lexical_features(_pair("the cat ran", "the cat sat"))
    assert feats.rouge1_f == pytest.approx(2 / 3, abs=1e-4)
    assert feats.rouge2_f == pytest.approx(0.5, abs=1e-12)
    assert feats.rougeL_f == pytest.approx(2 / 3, abs=1e-4)
    assert (feats.claim_len, feats.doc_len) == (3, 3)
    assert feats.len_ratio == pytest.approx(1.0)


def test_lexical_features_identical_texts():
    feats = lexical_features(_pair("hello world", "hello world"))
    assert feats.rouge1_f == feats.rouge2_f == feats.rougeL_f == 1.0
    assert (feats.claim_len, feats.doc_len, feats.len_ratio) == (2, 2, 1.0)


def test_lexical_features_disjoint_vocabulary():
    feats = lexical_features(_pair("alpha beta", "gamma delta epsilon"))
    assert feats.rouge1_f == feats.rouge2_f == feats.rougeL_f == 0.0
    assert (feats.claim_len, feats.doc_len) == (2, 3)
    assert feats.len_ratio == pytest.approx(2 / 3, abs=1e-12)


def test_lexical_features_punctuation_only_side():
    feats = lexical_features(_pair("...", "a real document"))
    assert feats.claim_len == 0
    assert feats.len_ratio == pytest.approx(1 / 3, abs=1e-12)
    assert feats.rouge1_f == 0.0
