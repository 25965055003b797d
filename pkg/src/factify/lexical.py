"""Tokenization, ROUGE-1/2/L overlap scores, and text-length features.

ROUGE here is the clipped-count n-gram overlap plus the LCS-based variant,
reported as recall / precision / balanced F. Degenerate inputs (empty token
sequences) score zero instead of raising so batch extraction never aborts on
a dirty row.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass

from .datamodel import ClaimDocPair

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

TokenSeq = list  # list[str]; lowercase, no empties, no whitespace inside


def tokenize(text: str) -> list[str]:
    """Lowercase and split on maximal runs of non-alphanumeric characters.

    "COVID-19 spreads" -> ["covid", "19", "spreads"]; all-punctuation or
    empty text yields [].
    """
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class RougeScore:
    recall: float
    precision: float
    f1: float


def _f1(precision: float, recall: float) -> float:
    if precision + recall <= 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def _score(overlap: float, n_candidate: int, n_reference: int) -> RougeScore:
    precision = overlap / n_candidate if n_candidate > 0 else 0.0
    recall = overlap / n_reference if n_reference > 0 else 0.0
    return RougeScore(recall=recall, precision=precision, f1=_f1(precision, recall))


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate: list[str], reference: list[str], n: int) -> RougeScore:
    """Clipped n-gram overlap: sum over distinct n-grams of min(count, count)."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    cand = _ngrams(candidate, n)
    ref = _ngrams(reference, n)
    overlap = sum(min(c, ref[g]) for g, c in cand.items() if g in ref)
    return _score(overlap, sum(cand.values()), sum(ref.values()))


def lcs_length(a: list[str], b: list[str]) -> int:
    """Longest common subsequence length, standard dynamic program."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        curr = [0] * (len(b) + 1)
        for j, y in enumerate(b, start=1):
            if x == y:
                curr[j] = prev[j - 1] + 1
            else:
                curr[j] = max(prev[j], curr[j - 1])
        prev = curr
    return prev[-1]


def rouge_l(candidate: list[str], reference: list[str]) -> RougeScore:
    """LCS-based overlap with balanced F (beta = 1)."""
    length = lcs_length(candidate, reference)
    return _score(length, len(candidate), len(reference))


@dataclass(frozen=True)
class LexicalFeatures:
    """Surface-overlap and length features for one claim/document pair."""

    rouge1_f: float
    rouge2_f: float
    rougeL_f: float
    claim_len: int
    doc_len: int
    len_ratio: float


def lexical_features(pair: ClaimDocPair) -> LexicalFeatures:
    """ROUGE F-scores (candidate = claim, reference = document) plus lengths.

    len_ratio clamps both token counts to >= 1 so it stays finite and
    positive on degenerate rows.
    """
    claim = tokenize(pair.claim_text)
    doc = tokenize(pair.doc_text)
    return LexicalFeatures(
        rouge1_f=rouge_n(claim, doc, 1).f1,
        rouge2_f=rouge_n(claim, doc, 2).f1,
        rougeL_f=rouge_l(claim, doc).f1,
        claim_len=len(claim),
        doc_len=len(doc),
        len_ratio=max(len(claim), 1) / max(len(doc), 1),
    )
