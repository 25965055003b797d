"""Multi-modal fact verification from claim/document structure coherence.

A (claim text, claim image, document text, document image) quadruple is
classified into five entailment categories by fusing coherence features:
lexical overlap, text lengths, text embedding cosine, an MLP entailment head
over embedding pairs, and image embedding cosine, through a train-split
normalizer and a random-forest classifier. The harness reproduces the
encoder-swap, head-wiring, and ablation comparison grids on real or
planted-signal synthetic data.
"""

from .datamodel import (
    LABEL3_ORDER,
    LABEL5_ORDER,
    ClaimDocPair,
    Label3,
    Label5,
    collapse_label,
    parse_label3,
    parse_label5,
)

__version__ = "0.1.0"

__all__ = [
    "ClaimDocPair",
    "LABEL3_ORDER",
    "LABEL5_ORDER",
    "Label3",
    "Label5",
    "collapse_label",
    "parse_label3",
    "parse_label5",
    "__version__",
]
