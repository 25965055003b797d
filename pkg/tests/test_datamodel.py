import pytest

from factify.datamodel import (
    LABEL3_ORDER,
    LABEL5_ORDER,
    ClaimDocPair,
    Label3,
    Label5,
    collapse_label,
    parse_label5,
)


def test_five_distinct_labels_in_fixed_order():
    assert len(LABEL5_ORDER) == 5
    assert len(set(LABEL5_ORDER)) == 5
    assert [lab.value for lab in LABEL5_ORDER] == [
        "Support_Text",
        "Support_Multimodal",
        "Insufficient_Text",
        "Insufficient_Multimodal",
        "Refute",
    ]
    assert len(LABEL3_ORDER) == 3


def test_parse_format_round_trip():
    for lab in Label5:
        assert parse_label5(lab.value) is lab


@pytest.mark.parametrize(
    "raw,expected",
    [
        ("support_text", Label5.SUPPORT_TEXT),
        ("  REFUTE  ", Label5.REFUTE),
        ("Insufficient_Multimodal", Label5.INSUFFICIENT_MULTIMODAL),
        ("SUPPORT_MULTIMODAL", Label5.SUPPORT_MULTIMODAL),
    ],
)
def test_parse_case_insensitive_and_trimmed(raw, expected):
    assert parse_label5(raw) is expected


def test_parse_rejects_unknown():
    with pytest.raises(ValueError):
        parse_label5("supported")


def test_collapse_mapping_table():
    assert collapse_label(Label5.SUPPORT_TEXT) is Label3.SUPPORT
    assert collapse_label(Label5.SUPPORT_MULTIMODAL) is Label3.SUPPORT
    assert collapse_label(Label5.INSUFFICIENT_TEXT) is Label3.INSUFFICIENT
    assert collapse_label(Label5.INSUFFICIENT_MULTIMODAL) is Label3.INSUFFICIENT
    assert collapse_label(Label5.REFUTE) is Label3.REFUTE


def test_collapse_is_surjective_with_2_2_1_fibers():
    fibers = {lab3: 0 for lab3 in Label3}
    for lab5 in Label5:
        fibers[collapse_label(lab5)] += 1
    assert fibers == {Label3.SUPPORT: 2, Label3.INSUFFICIENT: 2, Label3.REFUTE: 1}


def test_pair_rejects_blank_texts():
    with pytest.raises(ValueError):
        ClaimDocPair(id="x", claim_text="  ", doc_text="doc", claim_image_ref="", doc_image_ref="")
    with pytest.raises(ValueError):
        ClaimDocPair(id="x", claim_text="claim", doc_text="\t\n", claim_image_ref="", doc_image_ref="")
