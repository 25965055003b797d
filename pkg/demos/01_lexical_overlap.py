"""Lexical coherence features: tokenization, ROUGE-1/2/L, and text lengths.

The claim is scored as the candidate against the document as the reference.
Refute-style pairs tend to share most of their vocabulary, which is exactly
what these features pick up.
"""

from factify.datamodel import ClaimDocPair
from factify.lexical import lexical_features, rouge_l, rouge_n, tokenize

claim = "The vaccine does NOT contain microchips."
document = "Health officials confirmed the vaccine does not contain microchips of any kind."

claim_tokens = tokenize(claim)
doc_tokens = tokenize(document)
print("claim tokens:   ", claim_tokens)
print("document tokens:", doc_tokens)

for n in (1, 2):
    score = rouge_n(claim_tokens, doc_tokens, n)
    print(f"ROUGE-{n}: recall={score.recall:.3f} precision={score.precision:.3f} f1={score.f1:.3f}")
score = rouge_l(claim_tokens, doc_tokens)
print(f"ROUGE-L: recall={score.recall:.3f} precision={score.precision:.3f} f1={score.f1:.3f}")

pair = ClaimDocPair(
    id="demo",
    claim_text=claim,
    doc_text=document,
    claim_image_ref="",
    doc_image_ref="",
)
features = lexical_features(pair)
print("\nfull lexical feature block:")
print(f"  rouge1_f={features.rouge1_f:.3f} rouge2_f={features.rouge2_f:.3f} rougeL_f={features.rougeL_f:.3f}")
print(f"  claim_len={features.claim_len} doc_len={features.doc_len} len_ratio={features.len_ratio:.3f}")
