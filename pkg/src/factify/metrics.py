"""Per-category F1, weighted-average F1, and confusion matrices.

Zero-division convention throughout: undefined precision/recall/F1 becomes 0.
Categories absent from the gold labels carry zero support and therefore zero
weight in the weighted average.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .datamodel import LABEL5_INDEX, LABEL5_ORDER, Label5


class LengthMismatch(Exception):
    """gold and predicted label lists differ in length (or are empty)."""


@dataclass(frozen=True)
class ConfusionMatrix:
    """counts[g][p] over the fixed five-label order; rows are gold."""

    counts: np.ndarray  # (5, 5) int64

    def __post_init__(self) -> None:
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.shape != (5, 5) or (counts < 0).any():
            raise ValueError("confusion matrix must be 5x5 nonnegative")
        object.__setattr__(self, "counts", counts)

    def total(self) -> int:
        return int(self.counts.sum())

    def to_csv(self, path: str | Path) -> None:
        names = [lab.value for lab in LABEL5_ORDER]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["gold\\pred"] + names)
            for name, row in zip(names, self.counts):
                writer.writerow([name] + [int(c) for c in row])


@dataclass(frozen=True)
class EvalReport:
    per_category_f1: dict[Label5, float]
    weighted_f1: float
    confusion: ConfusionMatrix
    n_rows: int

    def to_json(self) -> str:
        """Stable-key-order JSON; byte-identical for identical reports."""
        payload = {
            "n_rows": self.n_rows,
            "weighted_f1": self.weighted_f1,
            "per_category_f1": {
                lab.value: self.per_category_f1[lab] for lab in LABEL5_ORDER
            },
            "confusion": {
                "labels": [lab.value for lab in LABEL5_ORDER],
                "counts": self.confusion.counts.tolist(),
            },
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    def to_text(self) -> str:
        names = [lab.value for lab in LABEL5_ORDER]
        width = max(len(n) for n in names)
        lines = [f"rows: {self.n_rows}", f"weighted F1: {self.weighted_f1:.4f}", ""]
        for lab in LABEL5_ORDER:
            lines.append(f"  {lab.value:<{width}}  F1 = {self.per_category_f1[lab]:.4f}")
        lines.append("")
        lines.append("confusion (rows = gold):")
        header = " " * (width + 2) + "  ".join(f"{n[:10]:>10}" for n in names)
        lines.append(header)
        for name, row in zip(names, self.confusion.counts):
            cells = "  ".join(f"{int(c):>10}" for c in row)
            lines.append(f"  {name:<{width}}{cells}")
        return "\n".join(lines)


def _check_lists(
    gold: Sequence[Label5], pred: Sequence[Label5]
) -> tuple[np.ndarray, np.ndarray]:
    if len(gold) == 0 or len(gold) != len(pred):
        raise LengthMismatch(f"gold has {len(gold)} rows, pred has {len(pred)}")
    g = np.asarray([LABEL5_INDEX[lab] for lab in gold], dtype=np.int64)
    p = np.asarray([LABEL5_INDEX[lab] for lab in pred], dtype=np.int64)
    return g, p


def confusion(gold: Sequence[Label5], pred: Sequence[Label5]) -> ConfusionMatrix:
    g, p = _check_lists(gold, pred)
    counts = np.zeros((5, 5), dtype=np.int64)
    np.add.at(counts, (g, p), 1)
    return ConfusionMatrix(counts=counts)


def weighted_f1(gold: Sequence[Label5], pred: Sequence[Label5]) -> EvalReport:
    """Support-weighted mean of per-category F1 over the gold labels."""
    matrix = confusion(gold, pred)
    counts = matrix.counts
    support = counts.sum(axis=1)
    predicted = counts.sum(axis=0)
    tp = np.diag(counts)

    per_category: dict[Label5, float] = {}
    for i, lab in enumerate(LABEL5_ORDER):
        precision = tp[i] / predicted[i] if predicted[i] > 0 else 0.0
        recall = tp[i] / support[i] if support[i] > 0 else 0.0
        f1 = (
            2.0 * precision * recall / (precision + recall)
            if precision + recall > 0
            else 0.0
        )
        per_category[lab] = float(f1)

    n = int(support.sum())
    weighted = float(
        sum(support[i] * per_category[lab] for i, lab in enumerate(LABEL5_ORDER)) / n
    )
    return EvalReport(
        per_category_f1=per_category,
        weighted_f1=weighted,
        confusion=matrix,
        n_rows=n,
    )
