"""Dataset ingestion, image fetching with a local cache, and synthetic data.

CSV ingestion normalizes text (NFC + whitespace collapse) before anything
downstream sees it, drops rows with empty claim/document text, and reports
every drop instead of aborting. Image fetching caches remote URIs on disk
(atomic writes, per-URI single-flight) and separates fetch failures from
decode failures so the pipeline can substitute a neutral similarity for bad
rows.

The synthetic generator plants category structure by construction: planted
encoder tags prescribe text/image cosines per category, vocabulary overlap is
controlled per category (refute pairs share most words plus contradiction
markers), and images are tiny tagged rasters. That makes desk-scale
end-to-end runs separable with a known answer.
"""

from __future__ import annotations

import csv
import hashlib
import os
import tempfile
import threading
import time
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from PIL import Image, UnidentifiedImageError

from .datamodel import ClaimDocPair, Label5, parse_label5
from .embedding.backends import encode_tag_image

CANONICAL_COLUMNS = ("id", "claim", "claim_image", "document", "document_image", "category")


class MissingColumn(Exception):
    """A required canonical column is absent from the CSV header."""

    def __init__(self, column: str):
        super().__init__(f"missing column: {column}")
        self.column = column


class FetchFailure(Exception):
    """Image bytes could not be obtained (network/IO), after retries."""


class DecodeFailure(Exception):
    """Image bytes were obtained but are not a decodable image."""


def normalize_text(text: str) -> str:
    """NFC-normalize and collapse all whitespace runs to single spaces."""
    return " ".join(unicodedata.normalize("NFC", text).split())


@dataclass
class LoadReport:
    n_loaded: int = 0
    dropped: list[dict] = field(default_factory=list)

    def drop(self, row_number: int, row_id: Optional[str], reason: str) -> None:
        self.dropped.append({"row": row_number, "id": row_id, "reason": reason})


@dataclass
class DatasetManifest:
    split_name: str  # train | val | test
    rows: list[ClaimDocPair]
    source_path: str
    report: LoadReport = field(default_factory=LoadReport, compare=False)


def load_split(
    csv_path: str | Path,
    split_name: str,
    column_map: Optional[dict[str, str]] = None,
) -> DatasetManifest:
    """Read one split from a UTF-8 CSV with RFC-4180 quoting.

    column_map translates canonical names to source column names. The
    category column may be absent only for the test split. Malformed rows
    (empty texts, bad labels, duplicate ids) are dropped and reported.
    """
    column_map = column_map or {}
    source = {c: column_map.get(c, c) for c in CANONICAL_COLUMNS}
    path = Path(csv_path)
    report = LoadReport()
    rows: list[ClaimDocPair] = []
    seen_ids: set[str] = set()

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for canonical in CANONICAL_COLUMNS:
            if source[canonical] not in header:
                # labels are mandatory for training only; an unlabeled or
                # label-stripped val/test split must still load
                if canonical == "category" and split_name != "train":
                    continue
                raise MissingColumn(canonical)
        has_category = source["category"] in header

        for number, raw in enumerate(reader, start=2):  # row 1 is the header
            row_id = (raw.get(source["id"]) or "").strip()
            claim = normalize_text(raw.get(source["claim"]) or "")
            doc = normalize_text(raw.get(source["document"]) or "")
            if not row_id:
                report.drop(number, None, "empty id")
                continue
            if row_id in seen_ids:
                report.drop(number, row_id, "duplicate id")
                continue
            if not claim:
                report.drop(number, row_id, "empty claim")
                continue
            if not doc:
                report.drop(number, row_id, "empty document")
                continue
            gold: Optional[Label5] = None
            raw_label = (raw.get(source["category"]) or "").strip() if has_category else ""
            if raw_label:
                try:
                    gold = parse_label5(raw_label)
                except ValueError:
                    report.drop(number, row_id, f"bad category {raw_label!r}")
                    continue
            elif split_name == "train":
                report.drop(number, row_id, "missing category")
                continue
            rows.append(
                ClaimDocPair(
                    id=row_id,
                    claim_text=claim,
                    doc_text=doc,
                    claim_image_ref=(raw.get(source["claim_image"]) or "").strip(),
                    doc_image_ref=(raw.get(source["document_image"]) or "").strip(),
                    gold_label=gold,
                )
            )
            seen_ids.add(row_id)

    report.n_loaded = len(rows)
    return DatasetManifest(
        split_name=split_name, rows=rows, source_path=str(path), report=report
    )


def save_split(manifest: DatasetManifest, csv_path: str | Path) -> None:
    """Write a manifest back out in the canonical column layout."""
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CANONICAL_COLUMNS)
        for row in manifest.rows:
            writer.writerow(
                [
                    row.id,
                    row.claim_text,
                    row.claim_image_ref,
                    row.doc_text,
                    row.doc_image_ref,
                    row.gold_label.value if row.gold_label is not None else "",
                ]
            )


# ---------------------------------------------------------------------------
# image fetching
# ---------------------------------------------------------------------------

Transport = Callable[[str], bytes]

_uri_locks: dict[str, threading.Lock] = {}
_uri_locks_guard = threading.Lock()


def _lock_for(uri: str) -> threading.Lock:
    with _uri_locks_guard:
        if uri not in _uri_locks:
            _uri_locks[uri] = threading.Lock()
        return _uri_locks[uri]


def _default_transport(url: str) -> bytes:
    import requests

    response = requests.get(url, timeout=30)
    response.raise_for_status()
    return response.content


def _decode(data: bytes, ref: str) -> np.ndarray:
    import io

    try:
        with Image.open(io.BytesIO(data)) as img:
            return np.asarray(img.convert("RGB"))
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise DecodeFailure(f"{ref}: {exc}") from exc


def fetch_image(
    ref: str,
    cache_root: str | Path,
    transport: Optional[Transport] = None,
    max_retries: int = 3,
    backoff_base: float = 0.25,
    sleep: Callable[[float], None] = time.sleep,
) -> np.ndarray:
    """Decoded RGB raster for a local path or a cached remote URI.

    Remote URIs download once to <cache_root>/images/<sha256>.<ext> (atomic
    write, per-URI single-flight) with exponential-backoff retries; local
    paths decode directly. Grayscale/alpha images convert to RGB.
    """
    if ref.startswith(("http://", "https://")):
        suffix = Path(ref.split("?", 1)[0]).suffix or ".img"
        name = hashlib.sha256(ref.encode("utf-8")).hexdigest() + suffix
        cached = Path(cache_root) / "images" / name
        with _lock_for(ref):
            if not cached.exists():
                get = transport if transport is not None else _default_transport
                last_error: Optional[Exception] = None
                for attempt in range(max_retries):
                    try:
                        data = get(ref)
                        break
                    except Exception as exc:
                        last_error = exc
                        if attempt + 1 < max_retries:
                            sleep(backoff_base * (2**attempt))
                else:
                    raise FetchFailure(f"{ref}: {last_error}") from last_error
                cached.parent.mkdir(parents=True, exist_ok=True)
                fd, tmp = tempfile.mkstemp(dir=cached.parent, suffix=".tmp")
                try:
                    with os.fdopen(fd, "wb") as fh:
                        fh.write(data)
                    os.replace(tmp, cached)
                except BaseException:
                    if os.path.exists(tmp):
                        os.unlink(tmp)
                    raise
        return _decode(cached.read_bytes(), ref)

    path = Path(ref)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise FetchFailure(f"{ref}: {exc}") from exc
    return _decode(data, ref)


# ---------------------------------------------------------------------------
# synthetic planted-signal datasets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SynthSpec:
    """Sizes plus planted-signal switches for the synthetic generator.

    With a signal switched off, the corresponding channel becomes category-
    independent noise. image_dir=None skips writing image files (rows then
    carry dead refs, which exercises the failed-image path).
    """

    per_category: int
    image_dir: Optional[str] = None
    text_signal: bool = True
    image_signal: bool = True
    lexical_signal: bool = True
    n_topics: int = 6
    cos_jitter: float = 0.04


# prescribed cosine targets per entailment status / modality link
_TEXT_COS = {"support": 0.88, "insufficient": 0.30, "refute": -0.55}
_IMAGE_COS = {"similar": 0.90, "dissimilar": 0.10}
_OVERLAP = {"support": 0.55, "insufficient": 0.15, "refute": 0.85}
_NEGATION_WORDS = ("not", "never", "false", "fake", "hoax", "deny")

_CATEGORY_SHAPES = {
    Label5.SUPPORT_TEXT: ("support", "dissimilar"),
    Label5.SUPPORT_MULTIMODAL: ("support", "similar"),
    Label5.INSUFFICIENT_TEXT: ("insufficient", "dissimilar"),
    Label5.INSUFFICIENT_MULTIMODAL: ("insufficient", "similar"),
    Label5.REFUTE: ("refute", "dissimilar"),
}


def _make_vocab(rng: np.random.Generator, size: int = 240) -> list[str]:
    consonants = "bcdfglmnprstvz"
    vowels = "aeiou"
    words = set()
    while len(words) < size:
        n_syllables = int(rng.integers(2, 4))
        word = "".join(
            consonants[rng.integers(len(consonants))] + vowels[rng.integers(len(vowels))]
            for _ in range(n_syllables)
        )
        words.add(word)
    return sorted(words)


def _rel_token(prefix: str, target: float) -> str:
    hundredths = int(round(abs(target) * 100))
    hundredths = max(0, min(99, hundredths))
    sign = "m" if target < 0 else "p"
    return f"{prefix}rel{sign}{hundredths:02d}"


def _jitter(rng: np.random.Generator, target: float, amount: float) -> float:
    return float(np.clip(target + rng.uniform(-amount, amount), -0.99, 0.99))


def synth_dataset(
    spec: SynthSpec, seed: int
) -> tuple[DatasetManifest, DatasetManifest, DatasetManifest]:
    """Balanced five-category synthetic data, split 70:15:15 per category.

    Same spec + seed always yields identical manifests (and identical image
    files when image_dir is set).
    """
    if spec.per_category < 1:
        raise ValueError("per_category must be >= 1")
    rng = np.random.default_rng(seed)
    vocab = _make_vocab(rng)
    image_dir = Path(spec.image_dir) if spec.image_dir is not None else None
    if image_dir is not None:
        image_dir.mkdir(parents=True, exist_ok=True)

    by_category: dict[Label5, list[ClaimDocPair]] = {lab: [] for lab in Label5}
    index = 0
    for label in Label5:
        status, image_link = _CATEGORY_SHAPES[label]
        for _ in range(spec.per_category):
            row_id = f"syn-{index:05d}"
            index += 1
            topic = int(rng.integers(spec.n_topics))

            # mild category<->length correlation, echoed by the length features
            len_shift = {"support": 0, "insufficient": 5, "refute": -4}[status]
            doc_len = int(np.clip(rng.normal(26 + len_shift, 5), 12, 40))
            claim_len = int(np.clip(rng.normal(12, 3), 5, 20))
            doc_words = [vocab[rng.integers(len(vocab))] for _ in range(doc_len)]
            overlap = _OVERLAP[status] if spec.lexical_signal else 0.40
            n_shared = min(int(round(overlap * claim_len)), len(doc_words))
            shared = list(rng.choice(doc_words, size=n_shared, replace=False))
            fresh = [vocab[rng.integers(len(vocab))] for _ in range(claim_len - n_shared)]
            if status == "refute" and len(fresh) >= 2:
                fresh[0] = _NEGATION_WORDS[rng.integers(len(_NEGATION_WORDS))]
                fresh[1] = _NEGATION_WORDS[rng.integers(len(_NEGATION_WORDS))]
            claim_words = shared + fresh
            rng.shuffle(claim_words)

            if spec.text_signal:
                text_cos = _jitter(rng, _TEXT_COS[status], spec.cos_jitter)
            else:
                text_cos = float(rng.uniform(-0.2, 0.8))
            claim_text = " ".join(claim_words + [f"topic{topic:02d}"])
            doc_text = " ".join(
                doc_words + [f"topic{topic:02d}", _rel_token("", text_cos)]
            )

            if spec.image_signal:
                image_cos = _jitter(rng, _IMAGE_COS[image_link], spec.cos_jitter)
            else:
                image_cos = float(rng.uniform(0.05, 0.85))
            claim_tag = f"itopic{topic:02d}"
            doc_tag = f"itopic{topic:02d} {_rel_token('i', image_cos)}"
            if image_dir is not None:
                claim_ref = str((image_dir / f"{row_id}_claim.png").resolve())
                doc_ref = str((image_dir / f"{row_id}_doc.png").resolve())
                Image.fromarray(encode_tag_image(claim_tag)).save(claim_ref)
                Image.fromarray(encode_tag_image(doc_tag)).save(doc_ref)
            else:
                claim_ref = f"missing/{row_id}_claim.png"
                doc_ref = f"missing/{row_id}_doc.png"

            by_category[label].append(
                ClaimDocPair(
                    id=row_id,
                    claim_text=claim_text,
                    doc_text=doc_text,
                    claim_image_ref=claim_ref,
                    doc_image_ref=doc_ref,
                    gold_label=label,
                )
            )

    splits: dict[str, list[ClaimDocPair]] = {"train": [], "val": [], "test": []}
    for label in Label5:
        rows = by_category[label]
        order = rng.permutation(len(rows))
        n = len(rows)
        n_train = int(n * 0.70)
        n_val = int(n * 0.15)
        for position, row_index in enumerate(order):
            if position < n_train:
                splits["train"].append(rows[row_index])
            elif position < n_train + n_val:
                splits["val"].append(rows[row_index])
            else:
                splits["test"].append(rows[row_index])
    for name in splits:
        order = rng.permutation(len(splits[name]))
        splits[name] = [splits[name][i] for i in order]

    return tuple(  # type: ignore[return-value]
        DatasetManifest(split_name=name, rows=splits[name], source_path="synthetic")
        for name in ("train", "val", "test")
    )
