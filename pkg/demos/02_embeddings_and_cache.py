"""Encoder backends, cosine similarity, and the content-addressed cache.

The planted encoders recognize tag tokens and emit vectors with a prescribed
cosine to a per-topic anchor, which is what makes synthetic datasets
separable with a known answer. The cache stores every vector once; repeat
requests never re-invoke the encoder.
"""

import tempfile
from pathlib import Path

from factify.embedding import cached_embed, cosine, fresh_registry

registry = fresh_registry()
backend = registry.backend("planted-text")

claim = backend.encode_text("a short claim about topic04")
supporting = backend.encode_text("a long supporting document topic04 relp90")
neutral = backend.encode_text("a vaguely related document topic04 relp30")
contradicting = backend.encode_text("an opposing document topic04 relm60")

print("prescribed cosines against the claim's topic anchor:")
print(f"  supporting   relp90 -> {cosine(claim, supporting):+.3f}")
print(f"  neutral      relp30 -> {cosine(claim, neutral):+.3f}")
print(f"  contradicting relm60 -> {cosine(claim, contradicting):+.3f}")

# untagged strings fall back to a deterministic hash vector
a = backend.encode_text("completely free-form text")
b = backend.encode_text("completely free-form text")
print(f"\nhash fallback is deterministic: cosine = {cosine(a, b):.6f}")

cache_root = Path(tempfile.mkdtemp())
spec = registry.spec("planted-text")
text = "something worth caching topic09 relp75"

before = backend.calls
first = cached_embed(cache_root, spec, text.encode(), lambda: backend.encode_text(text), backend.version)
second = cached_embed(cache_root, spec, text.encode(), lambda: backend.encode_text(text), backend.version)
print(f"\ncache: {backend.calls - before} encoder call(s) for two requests")
print(f"bit-identical round trip: {first.values.tobytes() == second.values.tobytes()}")
entries = list(cache_root.rglob("*.vec"))
print(f"on disk: {entries[0].relative_to(cache_root)}")
