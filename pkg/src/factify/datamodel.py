"""Canonical dataset row / label types and the five-to-three label collapse.

The five-way labels cross entailment status {support, insufficient} with the
modality that carries it {text, multimodal}, plus an outright refute class.
The text-only entailment head cannot see the modality axis, so it is trained
on the three-way collapse by entailment status.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional


class Label5(Enum):
    """Five-way verdict for a (claim, document) pair.

    Definition order is the canonical fixed order used for tie-breaking and
    for confusion-matrix axes everywhere in the package.
    """

    SUPPORT_TEXT = "Support_Text"
    SUPPORT_MULTIMODAL = "Support_Multimodal"
    INSUFFICIENT_TEXT = "Insufficient_Text"
    INSUFFICIENT_MULTIMODAL = "Insufficient_Multimodal"
    REFUTE = "Refute"


class Label3(Enum):
    """Entailment-status collapse of :class:`Label5`."""

    SUPPORT = "Support"
    INSUFFICIENT = "Insufficient"
    REFUTE = "Refute"


LABEL5_ORDER: tuple[Label5, ...] = tuple(Label5)
LABEL3_ORDER: tuple[Label3, ...] = tuple(Label3)

LABEL5_INDEX: dict[Label5, int] = {lab: i for i, lab in enumerate(LABEL5_ORDER)}
LABEL3_INDEX: dict[Label3, int] = {lab: i for i, lab in enumerate(LABEL3_ORDER)}

_PARSE5 = {lab.value.lower(): lab for lab in Label5}
_PARSE3 = {lab.value.lower(): lab for lab in Label3}

_COLLAPSE = {
    Label5.SUPPORT_TEXT: Label3.SUPPORT,
    Label5.SUPPORT_MULTIMODAL: Label3.SUPPORT,
    Label5.INSUFFICIENT_TEXT: Label3.INSUFFICIENT,
    Label5.INSUFFICIENT_MULTIMODAL: Label3.INSUFFICIENT,
    Label5.REFUTE: Label3.REFUTE,
}


def parse_label5(text: str) -> Label5:
    """Parse a five-way label string, case-insensitively, tolerating whitespace.

    Raises ValueError for anything that is not one of the five names.
    """
    key = text.strip().lower()
    try:
        return _PARSE5[key]
    except KeyError:
        raise ValueError(f"not a five-way label: {text!r}") from None


def parse_label3(text: str) -> Label3:
    key = text.strip().lower()
    try:
        return _PARSE3[key]
    except KeyError:
        raise ValueError(f"not a three-way label: {text!r}") from None


def collapse_label(label: Label5) -> Label3:
    """Collapse a five-way label onto its entailment status.

    Total and deterministic: Support_* -> Support, Insufficient_* ->
    Insufficient, Refute -> Refute.
    """
    return _COLLAPSE[label]


@dataclass(frozen=True)
class ClaimDocPair:
    """One dataset row: a claim to verify against a trusted document.

    Both sides are multimodal; images are carried as URI-or-path references
    and only resolved by the data layer. ``gold_label`` is absent for
    unlabeled (test-time) rows.
    """

    id: str
    claim_text: str
    doc_text: str
    claim_image_ref: str
    doc_image_ref: str
    gold_label: Optional[Label5] = field(default=None)

    def __post_init__(self) -> None:
        if not self.claim_text.strip():
            raise ValueError(f"row {self.id!r}: empty claim_text")
        if not self.doc_text.strip():
            raise ValueError(f"row {self.id!r}: empty doc_text")
