"""Text/image encoder backends, cosine similarity, and the embedding cache."""

from .backends import (
    Encoder,
    EncoderRegistry,
    decode_tag_image,
    default_registry,
    encode_image,
    encode_tag_image,
    encode_text,
    fresh_registry,
    planted_vector,
)
from .cache import cache_key, cached_embed, entry_path, read_entry, write_entry
from .core import (
    BackendUnavailable,
    CacheCorrupt,
    Embedding,
    EncoderSpec,
    EncodingFailure,
    ZeroVector,
    cosine,
)

__all__ = [
    "BackendUnavailable",
    "CacheCorrupt",
    "Embedding",
    "Encoder",
    "EncoderRegistry",
    "EncoderSpec",
    "EncodingFailure",
    "ZeroVector",
    "cache_key",
    "cached_embed",
    "cosine",
    "decode_tag_image",
    "default_registry",
    "encode_image",
    "encode_tag_image",
    "encode_text",
    "entry_path",
    "fresh_registry",
    "planted_vector",
    "read_entry",
    "write_entry",
]
