"""Encoder backends and the backend registry.

Two families ship:

* test fixtures: a hash-based deterministic mock per modality, and a
  "planted similarity" mock that recognizes tag tokens in its input and emits
  vectors with a prescribed cosine to a per-group anchor direction. The
  planted encoders are what make synthetic datasets separable by
  construction.
* pretrained backends: Sentence-BERT, CLIP text/image, SimCSE, RoBERTa
  (mean-pooled), ResNet50 pooled features. These import torch/transformers
  lazily and raise BackendUnavailable when the runtime or the model asset is
  missing, so the rest of the package works without them.

Planted tag grammar (lowercase tokens, so they survive tokenization):
``topic<g>`` / ``itopic<g>`` name an anchor group (text / image namespace);
``rel<p|m><dd>`` / ``irel<p|m><dd>`` prescribe cosine +/- 0.dd to that
group's anchor. A string with only the group token maps to the anchor
itself, so a (claim=anchor, doc=rel) pair realizes the prescribed cosine
exactly.
"""

from __future__ import annotations

import hashlib
import re
from typing import Callable, Optional

import numpy as np

from .core import BackendUnavailable, Embedding, EncoderSpec, EncodingFailure

# ---------------------------------------------------------------------------
# deterministic vector helpers
# ---------------------------------------------------------------------------


def _seeded_unit(dim: int, *parts: str) -> np.ndarray:
    digest = hashlib.sha256("\x1f".join(parts).encode("utf-8")).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


class Encoder:
    """Base backend: tracks invocation count and normalizes error handling."""

    def __init__(self, spec: EncoderSpec, version: str):
        self.spec = spec
        self.version = version
        self.calls = 0  # actual encoder invocations; cache hits bypass this

    def encode_text(self, text: str) -> Embedding:
        if self.spec.modality != "text":
            raise EncodingFailure(f"{self.spec.backend_id} is not a text encoder")
        self.calls += 1
        try:
            values = self._encode_text(text)
        except (BackendUnavailable, EncodingFailure):
            raise
        except Exception as exc:
            raise EncodingFailure(f"{self.spec.backend_id}: {exc}") from exc
        return Embedding(values=values, dim=self.spec.dim, backend_id=self.spec.backend_id)

    def encode_image(self, raster: np.ndarray) -> Embedding:
        if self.spec.modality != "image":
            raise EncodingFailure(f"{self.spec.backend_id} is not an image encoder")
        raster = np.asarray(raster)
        if raster.size == 0:
            raise EncodingFailure("empty raster")
        self.calls += 1
        try:
            values = self._encode_image(raster)
        except (BackendUnavailable, EncodingFailure):
            raise
        except Exception as exc:
            raise EncodingFailure(f"{self.spec.backend_id}: {exc}") from exc
        return Embedding(values=values, dim=self.spec.dim, backend_id=self.spec.backend_id)

    def _encode_text(self, text: str) -> np.ndarray:
        raise NotImplementedError

    def _encode_image(self, raster: np.ndarray) -> np.ndarray:
        raise NotImplementedError


# ---------------------------------------------------------------------------
# mock backends
# ---------------------------------------------------------------------------


class HashTextEncoder(Encoder):
    """Deterministic, locality-free unit vector from a hash of the string."""

    def _encode_text(self, text: str) -> np.ndarray:
        return _seeded_unit(self.spec.dim, "hash-text", text)


class HashImageEncoder(Encoder):
    """Deterministic unit vector from a hash of the raw pixel bytes."""

    def _encode_image(self, raster: np.ndarray) -> np.ndarray:
        raw = np.ascontiguousarray(raster.astype(np.uint8))
        digest = hashlib.sha256(raw.tobytes() + str(raw.shape).encode()).hexdigest()
        return _seeded_unit(self.spec.dim, "hash-image", digest)


_GROUP_RE = re.compile(r"\b(i?)topic([a-z0-9]+)\b")
_REL_RE = re.compile(r"\b(i?)rel([pm])(\d{2})\b")


def _orthogonal_unit(anchor: np.ndarray, dim: int, *parts: str) -> np.ndarray:
    for salt in ("", "resalt"):  # retry against a pathological collinear draw
        v = _seeded_unit(dim, *parts, salt)
        v -= float(np.dot(v, anchor)) * anchor
        norm = float(np.linalg.norm(v))
        if norm > 1e-9:
            return v / norm
    raise RuntimeError("could not build an orthogonal direction")


def planted_vector(dim: int, tag_text: str) -> Optional[np.ndarray]:
    """Vector for a planted-tag string, or None when no group tag is present.

    cos(anchor(group), vector) equals the prescribed relation exactly (up to
    f32 rounding). Residuals concentrate along one per-group direction with a
    small per-string jitter, so each group's vectors live near a 2-D plane:
    distinct strings stay distinct while downstream heads see a
    low-dimensional, learnable structure.
    """
    group = _GROUP_RE.search(tag_text)
    if group is None:
        return None
    group_key = group.group(1) + group.group(2)
    anchor = _seeded_unit(dim, "anchor", group_key)
    rel = _REL_RE.search(tag_text)
    if rel is None:
        return anchor
    target = int(rel.group(3)) / 100.0
    if rel.group(2) == "m":
        target = -target
    main = _orthogonal_unit(anchor, dim, "residual", group_key)
    jitter = _seeded_unit(dim, "jitter", group_key, tag_text)
    jitter -= float(np.dot(jitter, anchor)) * anchor
    jitter -= float(np.dot(jitter, main)) * main
    jitter_norm = float(np.linalg.norm(jitter))
    residual = main if jitter_norm < 1e-9 else main + 0.15 * (jitter / jitter_norm)
    residual /= float(np.linalg.norm(residual))
    return target * anchor + np.sqrt(max(0.0, 1.0 - target * target)) * residual


class PlantedTextEncoder(Encoder):
    """Planted-similarity text mock; untagged strings fall back to hashing."""

    def _encode_text(self, text: str) -> np.ndarray:
        v = planted_vector(self.spec.dim, text.lower())
        if v is None:
            v = _seeded_unit(self.spec.dim, "hash-text", text)
        return v


# Tagged-image codec: pixel (0,0) = (77, tag_len, 173); tag bytes sit in the
# red channel of row 0 starting at x=1. Remaining rows carry deterministic
# texture so hash-based encoders still see distinct images.
_TAG_MAGIC_B = 173
_TAG_MAGIC_R = 77


def encode_tag_image(tag: str, width: int = 64, height: int = 4) -> np.ndarray:
    data = tag.encode("ascii")
    if len(data) + 1 > width:
        raise ValueError(f"tag too long for image width: {tag!r}")
    rng = np.random.default_rng(
        int.from_bytes(hashlib.sha256(data).digest()[:8], "little")
    )
    img = rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8)
    img[0, :, :] = 0
    img[0, 0] = (_TAG_MAGIC_R, len(data), _TAG_MAGIC_B)
    img[0, 1 : 1 + len(data), 0] = np.frombuffer(data, dtype=np.uint8)
    return img


def decode_tag_image(raster: np.ndarray) -> Optional[str]:
    raster = np.asarray(raster)
    if raster.ndim != 3 or raster.shape[2] < 3 or raster.shape[1] < 2:
        return None
    px = raster[0, 0]
    if int(px[0]) != _TAG_MAGIC_R or int(px[2]) != _TAG_MAGIC_B:
        return None
    length = int(px[1])
    if 1 + length > raster.shape[1]:
        return None
    data = bytes(raster[0, 1 : 1 + length, 0].astype(np.uint8))
    try:
        return data.decode("ascii")
    except UnicodeDecodeError:
        return None


class PlantedImageEncoder(Encoder):
    """Planted-similarity image mock driven by the in-pixel tag codec."""

    def _encode_image(self, raster: np.ndarray) -> np.ndarray:
        tag = decode_tag_image(raster)
        if tag is not None:
            v = planted_vector(self.spec.dim, tag)
            if v is not None:
                return v
        raw = np.ascontiguousarray(raster.astype(np.uint8))
        digest = hashlib.sha256(raw.tobytes() + str(raw.shape).encode()).hexdigest()
        return _seeded_unit(self.spec.dim, "hash-image", digest)


# ---------------------------------------------------------------------------
# pretrained backends (lazy imports; unavailable without model assets)
# ---------------------------------------------------------------------------


class SbertTextEncoder(Encoder):
    def __init__(self, spec: EncoderSpec, asset: str):
        super().__init__(spec, version=f"sbert:{asset}")
        self.asset = asset
        self._model = None

    def _load(self):
        if self._model is None:
            try:
                from sentence_transformers import SentenceTransformer

                self._model = SentenceTransformer(self.asset)
            except Exception as exc:
                raise BackendUnavailable(f"{self.spec.backend_id}: {exc}") from exc
        return self._model

    def _encode_text(self, text: str) -> np.ndarray:
        model = self._load()
        return np.asarray(model.encode([text], show_progress_bar=False)[0])


class _HfTextEncoder(Encoder):
    """Shared loader for transformers-based text encoders."""

    pooling = "mean"  # or "cls"

    def __init__(self, spec: EncoderSpec, asset: str):
        super().__init__(spec, version=f"hf:{asset}:{self.pooling}")
        self.asset = asset
        self._model = None
        self._tokenizer = None

    def _load(self):
        if self._model is None:
            try:
                import torch  # noqa: F401
                from transformers import AutoModel, AutoTokenizer

                self._tokenizer = AutoTokenizer.from_pretrained(self.asset)
                self._model = AutoModel.from_pretrained(self.asset)
                self._model.eval()
            except Exception as exc:
                raise BackendUnavailable(f"{self.spec.backend_id}: {exc}") from exc
        return self._model, self._tokenizer

    def _encode_text(self, text: str) -> np.ndarray:
        import torch

        model, tokenizer = self._load()
        batch = tokenizer([text], truncation=True, padding=True, return_tensors="pt")
        with torch.no_grad():
            out = model(**batch)
        hidden = out.last_hidden_state[0]
        if self.pooling == "cls":
            vec = hidden[0]
        else:
            mask = batch["attention_mask"][0].unsqueeze(-1)
            vec = (hidden * mask).sum(0) / mask.sum()
        return vec.numpy()


class SimcseTextEncoder(_HfTextEncoder):
    pooling = "cls"


class RobertaTextEncoder(_HfTextEncoder):
    pooling = "mean"


class ClipTextEncoder(Encoder):
    def __init__(self, spec: EncoderSpec, asset: str):
        super().__init__(spec, version=f"clip-text:{asset}")
        self.asset = asset
        self._bits = None

    def _load(self):
        if self._bits is None:
            try:
                import torch  # noqa: F401
                from transformers import CLIPModel, CLIPProcessor

                model = CLIPModel.from_pretrained(self.asset)
                model.eval()
                self._bits = (model, CLIPProcessor.from_pretrained(self.asset))
            except Exception as exc:
                raise BackendUnavailable(f"{self.spec.backend_id}: {exc}") from exc
        return self._bits

    def _encode_text(self, text: str) -> np.ndarray:
        import torch

        model, processor = self._load()
        batch = processor(text=[text], return_tensors="pt", truncation=True, padding=True)
        with torch.no_grad():
            vec = model.get_text_features(**batch)[0]
        return vec.numpy()


class ClipImageEncoder(Encoder):
    def __init__(self, spec: EncoderSpec, asset: str):
        super().__init__(spec, version=f"clip-image:{asset}")
        self.asset = asset
        self._bits = None

    def _load(self):
        if self._bits is None:
            try:
                import torch  # noqa: F401
                from transformers import CLIPModel, CLIPProcessor

                model = CLIPModel.from_pretrained(self.asset)
                model.eval()
                self._bits = (model, CLIPProcessor.from_pretrained(self.asset))
            except Exception as exc:
                raise BackendUnavailable(f"{self.spec.backend_id}: {exc}") from exc
        return self._bits

    def _encode_image(self, raster: np.ndarray) -> np.ndarray:
        import torch
        from PIL import Image

        model, processor = self._load()
        image = Image.fromarray(raster.astype(np.uint8))
        batch = processor(images=[image], return_tensors="pt")
        with torch.no_grad():
            vec = model.get_image_features(**batch)[0]
        return vec.numpy()


class ResnetImageEncoder(Encoder):
    """ResNet50 global-average-pool features (2048-d), ImageNet preprocessing."""

    def __init__(self, spec: EncoderSpec, asset: str = "IMAGENET1K_V1"):
        super().__init__(spec, version=f"resnet50:{asset}")
        self.asset = asset
        self._bits = None

    def _load(self):
        if self._bits is None:
            try:
                import torch
                from torchvision.models import ResNet50_Weights, resnet50

                weights = getattr(ResNet50_Weights, self.asset)
                model = resnet50(weights=weights)
                model.fc = torch.nn.Identity()  # keep the pooled 2048-d feature
                model.eval()
                self._bits = (model, weights.transforms())
            except Exception as exc:
                raise BackendUnavailable(f"{self.spec.backend_id}: {exc}") from exc
        return self._bits

    def _encode_image(self, raster: np.ndarray) -> np.ndarray:
        import torch
        from PIL import Image

        model, preprocess = self._load()
        image = Image.fromarray(raster.astype(np.uint8))
        batch = preprocess(image).unsqueeze(0)
        with torch.no_grad():
            vec = model(batch)[0]
        return vec.numpy()


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------


class EncoderRegistry:
    """backend_id -> (spec, factory); instantiates each backend once."""

    def __init__(self) -> None:
        self._specs: dict[str, EncoderSpec] = {}
        self._factories: dict[str, Callable[[EncoderSpec], Encoder]] = {}
        self._instances: dict[str, Encoder] = {}

    def register(
        self, spec: EncoderSpec, factory: Callable[[EncoderSpec], Encoder]
    ) -> None:
        if spec.backend_id in self._specs:
            raise ValueError(f"backend id already registered: {spec.backend_id}")
        self._specs[spec.backend_id] = spec
        self._factories[spec.backend_id] = factory

    def ids(self) -> list[str]:
        return sorted(self._specs)

    def spec(self, backend_id: str) -> EncoderSpec:
        try:
            return self._specs[backend_id]
        except KeyError:
            raise BackendUnavailable(f"unknown backend id: {backend_id}") from None

    def backend(self, backend_id: str) -> Encoder:
        if backend_id not in self._instances:
            spec = self.spec(backend_id)
            self._instances[backend_id] = self._factories[backend_id](spec)
        return self._instances[backend_id]

    def call_counts(self) -> dict[str, int]:
        """Encoder invocation counts for every backend used so far."""
        return {bid: enc.calls for bid, enc in sorted(self._instances.items())}

    def configure(self, section: dict) -> None:
        """Apply a config-file registry section: id -> {kind, asset, dim, modality}.

        Known ids may be re-pointed at a different asset/dim; new ids need an
        explicit kind.
        """
        kinds: dict[str, tuple[str, Callable[..., Encoder]]] = {
            "sbert": ("text", SbertTextEncoder),
            "clip-text": ("text", ClipTextEncoder),
            "clip-image": ("image", ClipImageEncoder),
            "simcse": ("text", SimcseTextEncoder),
            "roberta": ("text", RobertaTextEncoder),
            "resnet50": ("image", ResnetImageEncoder),
        }
        for backend_id, entry in section.items():
            kind = entry.get("kind")
            if kind is None:
                raise ValueError(f"registry entry {backend_id!r} needs a kind")
            if kind not in kinds:
                raise ValueError(f"registry entry {backend_id!r}: unknown kind {kind!r}")
            modality, cls = kinds[kind]
            spec = EncoderSpec(
                backend_id=backend_id, dim=int(entry["dim"]), modality=modality
            )
            asset = entry["asset"]
            self._specs.pop(backend_id, None)
            self._factories.pop(backend_id, None)
            self._instances.pop(backend_id, None)
            self.register(spec, lambda s, a=asset, c=cls: c(s, a))


def _populate_defaults(reg: EncoderRegistry) -> None:
    reg.register(EncoderSpec("mock-text", 512, "text"), lambda s: HashTextEncoder(s, "1"))
    reg.register(EncoderSpec("mock-image", 512, "image"), lambda s: HashImageEncoder(s, "1"))
    reg.register(
        EncoderSpec("planted-text", 64, "text"),
        lambda s: PlantedTextEncoder(s, f"planted:{s.dim}"),
    )
    reg.register(
        EncoderSpec("planted-image", 64, "image"),
        lambda s: PlantedImageEncoder(s, f"planted:{s.dim}"),
    )
    reg.register(
        EncoderSpec("sentence-text", 384, "text"),
        lambda s: SbertTextEncoder(s, "sentence-transformers/all-MiniLM-L6-v2"),
    )
    reg.register(
        EncoderSpec("clip-text", 512, "text"),
        lambda s: ClipTextEncoder(s, "openai/clip-vit-base-patch32"),
    )
    reg.register(
        EncoderSpec("clip-image", 512, "image"),
        lambda s: ClipImageEncoder(s, "openai/clip-vit-base-patch32"),
    )
    reg.register(
        EncoderSpec("simcse-text", 768, "text"),
        lambda s: SimcseTextEncoder(s, "princeton-nlp/sup-simcse-roberta-base"),
    )
    reg.register(
        EncoderSpec("roberta-text", 768, "text"),
        lambda s: RobertaTextEncoder(s, "roberta-base"),
    )
    reg.register(
        EncoderSpec("resnet-image", 2048, "image"),
        lambda s: ResnetImageEncoder(s),
    )


_default_registry: Optional[EncoderRegistry] = None


def default_registry() -> EncoderRegistry:
    global _default_registry
    if _default_registry is None:
        _default_registry = EncoderRegistry()
        _populate_defaults(_default_registry)
    return _default_registry


def fresh_registry() -> EncoderRegistry:
    """A new registry with the default backends (isolated call counters)."""
    reg = EncoderRegistry()
    _populate_defaults(reg)
    return reg


def encode_text(
    spec: EncoderSpec, text: str, registry: Optional[EncoderRegistry] = None
) -> Embedding:
    """Encode text with the backend named by spec (resolved via the registry)."""
    reg = registry if registry is not None else default_registry()
    backend = reg.backend(spec.backend_id)
    return backend.encode_text(text)


def encode_image(
    spec: EncoderSpec, raster: np.ndarray, registry: Optional[EncoderRegistry] = None
) -> Embedding:
    """Encode a decoded RGB raster with the backend named by spec."""
    reg = registry if registry is not None else default_registry()
    backend = reg.backend(spec.backend_id)
    return backend.encode_image(raster)
