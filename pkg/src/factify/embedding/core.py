"""Embedding value type, encoder specs, and cosine similarity."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class BackendUnavailable(Exception):
    """A model asset or runtime needed by an encoder backend is missing."""


class EncodingFailure(Exception):
    """The encoder backend raised internally on a specific input."""


class ZeroVector(Exception):
    """Cosine similarity is undefined: one of the vectors has ~zero norm."""


class CacheCorrupt(Exception):
    """A persisted embedding failed its checksum (treated as a miss upstream)."""


@dataclass(frozen=True)
class EncoderSpec:
    """Registry entry describing one encoder backend."""

    backend_id: str
    dim: int
    modality: str  # "text" | "image"

    def __post_init__(self) -> None:
        if self.dim <= 0:
            raise ValueError(f"dim must be positive, got {self.dim}")
        if self.modality not in ("text", "image"):
            raise ValueError(f"modality must be text|image, got {self.modality!r}")


@dataclass(frozen=True)
class Embedding:
    """Fixed-dimension real vector produced by an encoder backend."""

    values: np.ndarray
    dim: int
    backend_id: str

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float32)
        if values.ndim != 1 or values.shape[0] != self.dim:
            raise ValueError(
                f"embedding shape {values.shape} does not match dim {self.dim}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("embedding contains non-finite entries")
        object.__setattr__(self, "values", values)


ZERO_NORM_EPS = 1e-12


def cosine(a: Embedding, b: Embedding) -> float:
    """dot(a, b) / (|a| |b|), clamped into [-1, 1] against round-off.

    Raises ZeroVector when either norm is below 1e-12; callers that want
    batch robustness substitute 0 and log the row.
    """
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    av = np.asarray(a.values, dtype=np.float64)
    bv = np.asarray(b.values, dtype=np.float64)
    na = float(np.linalg.norm(av))
    nb = float(np.linalg.norm(bv))
    if na < ZERO_NORM_EPS or nb < ZERO_NORM_EPS:
        raise ZeroVector(f"norms {na:.3e}, {nb:.3e} below {ZERO_NORM_EPS}")
    value = float(np.dot(av, bv) / (na * nb))
    return max(-1.0, min(1.0, value))
