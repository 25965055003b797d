"""Experiment runner: wires the full pipeline and the comparison grids.

One experiment = load splits -> fetch/encode with caching -> train the
entailment head on the training split -> extract features everywhere -> fit
the normalizer on train -> train the forest -> evaluate -> persist a model
bundle plus reports. All randomness derives from the config seed; rerunning
an identical config reproduces identical bytes, and a warm embedding cache
makes the rerun encoder-free.

Built-in grids reproduce the experiment families: encoder swaps over the
baseline structure, the four head wirings, and the drop-one-family ablation.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import fusion, metrics
from .datamodel import (
    LABEL3_INDEX,
    LABEL5_ORDER,
    ClaimDocPair,
    Label5,
    collapse_label,
)
from .dataio import (
    DatasetManifest,
    DecodeFailure,
    FetchFailure,
    SynthSpec,
    fetch_image,
    load_split,
    synth_dataset,
)
from .embedding import (
    Embedding,
    EncoderRegistry,
    ZeroVector,
    cached_embed,
    cosine,
    default_registry,
)
from .entailment_head import (
    HeadVariant,
    MlpConfig,
    MlpParams,
    head_features,
    mlp_forward,
    train_head,
    variant_output_dim,
)
from .fusion import ALL_FEATURE_FLAGS, FeatureVector, ForestConfig, ModelBundle
from .lexical import LexicalFeatures, lexical_features


logger = logging.getLogger("factify.harness")


class ConfigInvalid(Exception):
    """The experiment configuration is inconsistent or incomplete."""


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DatasetPaths:
    train: str
    val: str
    test: Optional[str] = None
    column_map: Optional[dict[str, str]] = None


@dataclass(frozen=True)
class HeadSettings:
    hidden_dim: int = 100
    learning_rate: float = 1e-3
    max_epochs: int = 200
    batch_size: int = 32
    patience: int = 10
    hard_labels: bool = False  # fuse argmax one-hot instead of probabilities


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetPaths | SynthSpec
    text_backend: str = "planted-text"
    image_backend: str = "planted-image"
    head_variant: Optional[HeadVariant] = HeadVariant.TEXT_PAIR_3
    feature_flags: frozenset[str] = ALL_FEATURE_FLAGS
    forest: ForestConfig = field(default_factory=ForestConfig)
    mlp: HeadSettings = field(default_factory=HeadSettings)
    seed: int = 42
    output_dir: str = "runs"
    cache_root: str = ".factify-cache"
    head_text_backend: Optional[str] = None  # defaults to text_backend
    head_image_backend: Optional[str] = None  # defaults to image_backend
    workers: int = 1

    def head_text_id(self) -> str:
        return self.head_text_backend or self.text_backend

    def head_image_id(self) -> str:
        return self.head_image_backend or self.image_backend

    def effective_head(self) -> Optional[HeadVariant]:
        if self.head_variant is HeadVariant.ALL_CONCAT_5:
            return self.head_variant
        if "head" in self.feature_flags:
            return self.head_variant
        return None


def config_to_dict(config: ExperimentConfig) -> dict:
    if isinstance(config.dataset, SynthSpec):
        dataset = {
            "synth": {
                "per_category": config.dataset.per_category,
                "image_dir": config.dataset.image_dir,
                "text_signal": config.dataset.text_signal,
                "image_signal": config.dataset.image_signal,
                "lexical_signal": config.dataset.lexical_signal,
                "n_topics": config.dataset.n_topics,
                "cos_jitter": config.dataset.cos_jitter,
            }
        }
    else:
        dataset = {
            "train": config.dataset.train,
            "val": config.dataset.val,
            "test": config.dataset.test,
            "column_map": config.dataset.column_map,
        }
    return {
        "dataset": dataset,
        "text_backend": config.text_backend,
        "image_backend": config.image_backend,
        "head_text_backend": config.head_text_backend,
        "head_image_backend": config.head_image_backend,
        "head_variant": config.head_variant.value if config.head_variant else None,
        "feature_flags": sorted(config.feature_flags),
        "forest": {
            "n_trees": config.forest.n_trees,
            "max_depth": config.forest.max_depth,
            "seed": config.forest.seed,
            "min_samples_leaf": config.forest.min_samples_leaf,
        },
        "mlp": {
            "hidden_dim": config.mlp.hidden_dim,
            "learning_rate": config.mlp.learning_rate,
            "max_epochs": config.mlp.max_epochs,
            "batch_size": config.mlp.batch_size,
            "patience": config.mlp.patience,
            "hard_labels": config.mlp.hard_labels,
        },
        "seed": config.seed,
        "output_dir": config.output_dir,
        "cache_root": config.cache_root,
        "workers": config.workers,
    }


def config_hash(config: ExperimentConfig) -> str:
    canonical = json.dumps(config_to_dict(config), sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


_KNOWN_SECTIONS = {"dataset", "encoders", "features", "head", "forest", "run", "registry"}
_HEAD_VARIANTS = {v.value.lower(): v for v in HeadVariant}


def load_config(path: str | Path) -> tuple[ExperimentConfig, dict]:
    """Parse a TOML experiment config; returns (config, registry overrides)."""
    try:
        import tomllib  # py311+
    except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
        import tomli as tomllib

    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigInvalid(f"cannot read config: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigInvalid(f"bad TOML: {exc}") from exc

    unknown = set(raw) - _KNOWN_SECTIONS
    if unknown:
        raise ConfigInvalid(f"unknown config sections: {sorted(unknown)}")

    try:
        ds = raw.get("dataset", {})
        if "synth" in ds:
            synth = ds["synth"]
            dataset: DatasetPaths | SynthSpec = SynthSpec(
                per_category=int(synth["per_category"]),
                image_dir=synth.get("image_dir"),
                text_signal=bool(synth.get("text_signal", True)),
                image_signal=bool(synth.get("image_signal", True)),
                lexical_signal=bool(synth.get("lexical_signal", True)),
                n_topics=int(synth.get("n_topics", 6)),
                cos_jitter=float(synth.get("cos_jitter", 0.04)),
            )
        else:
            dataset = DatasetPaths(
                train=ds["train"],
                val=ds["val"],
                test=ds.get("test"),
                column_map=ds.get("column_map"),
            )

        encoders = raw.get("encoders", {})
        features = raw.get("features", {})
        head = raw.get("head", {})
        forest = raw.get("forest", {})
        run = raw.get("run", {})

        seed = int(run.get("seed", 42))
        variant_name = str(head.get("variant", "TextPair3")).strip().lower()
        if variant_name in ("none", ""):
            head_variant = None
        elif variant_name in _HEAD_VARIANTS:
            head_variant = _HEAD_VARIANTS[variant_name]
        else:
            raise ConfigInvalid(f"unknown head variant: {head.get('variant')!r}")

        config = ExperimentConfig(
            dataset=dataset,
            text_backend=encoders.get("text", "planted-text"),
            image_backend=encoders.get("image", "planted-image"),
            head_text_backend=encoders.get("head_text"),
            head_image_backend=encoders.get("head_image"),
            head_variant=head_variant,
            feature_flags=frozenset(
                features.get("flags", sorted(ALL_FEATURE_FLAGS))
            ),
            forest=ForestConfig(
                n_trees=int(forest.get("n_trees", 100)),
                max_depth=int(forest.get("max_depth", 40)),
                seed=int(forest.get("seed", seed)),
                min_samples_leaf=int(forest.get("min_samples_leaf", 1)),
            ),
            mlp=HeadSettings(
                hidden_dim=int(head.get("hidden_dim", 100)),
                learning_rate=float(head.get("learning_rate", 1e-3)),
                max_epochs=int(head.get("max_epochs", 200)),
                batch_size=int(head.get("batch_size", 32)),
                patience=int(head.get("patience", 10)),
                hard_labels=bool(head.get("hard_labels", False)),
            ),
            seed=seed,
            output_dir=run.get("output_dir", "runs"),
            cache_root=run.get("cache_root", ".factify-cache"),
            workers=int(run.get("workers", 1)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigInvalid(f"bad config value: {exc}") from exc
    return config, raw.get("registry", {})


def validate_config(config: ExperimentConfig, registry: EncoderRegistry) -> None:
    if not config.feature_flags:
        raise ConfigInvalid("feature_flags must be non-empty")
    unknown = set(config.feature_flags) - ALL_FEATURE_FLAGS
    if unknown:
        raise ConfigInvalid(f"unknown feature flags: {sorted(unknown)}")
    if "head" in config.feature_flags and config.head_variant is None:
        raise ConfigInvalid("head feature enabled but head.variant is none")
    for backend_id, modality in (
        (config.text_backend, "text"),
        (config.image_backend, "image"),
        (config.head_text_id(), "text"),
        (config.head_image_id(), "image"),
    ):
        try:
            spec = registry.spec(backend_id)
        except Exception as exc:
            raise ConfigInvalid(str(exc)) from exc
        if spec.modality != modality:
            raise ConfigInvalid(f"{backend_id} is not a {modality} backend")
    if config.workers < 1:
        raise ConfigInvalid("workers must be >= 1")
    if isinstance(config.dataset, DatasetPaths):
        for name in ("train", "val"):
            if not getattr(config.dataset, name):
                raise ConfigInvalid(f"dataset.{name} is required")


# ---------------------------------------------------------------------------
# per-row extraction
# ---------------------------------------------------------------------------


@dataclass
class RowData:
    pair: ClaimDocPair
    lex: LexicalFeatures
    text_sim: float = 0.0
    image_sim: float = 0.0
    text_emb: Optional[tuple[Embedding, Embedding]] = None
    head_text_emb: Optional[tuple[Embedding, Embedding]] = None
    image_emb: Optional[tuple[Embedding, Embedding]] = None
    head_image_emb: Optional[tuple[Embedding, Embedding]] = None


def _text_key(text: str) -> bytes:
    return text.encode("utf-8")


def _raster_key(raster: np.ndarray) -> bytes:
    raw = np.ascontiguousarray(raster.astype(np.uint8))
    return str(raw.shape).encode() + raw.tobytes()


class _Extractor:
    """Caching feature extraction over loaded splits."""

    def __init__(
        self,
        config: ExperimentConfig,
        registry: EncoderRegistry,
        cache_root: Path,
        run_report: dict,
    ):
        self.config = config
        self.registry = registry
        self.cache_root = cache_root
        self.run_report = run_report
        self.head = config.effective_head()
        flags = config.feature_flags
        self.need_text = "text_cosine" in flags
        self.need_head_text = self.head in (
            HeadVariant.TEXT_PAIR_3,
            HeadVariant.TEXT_AND_IMAGE_PAIR_3,
            HeadVariant.ALL_CONCAT_5,
        )
        self.need_head_image = self.head in (
            HeadVariant.IMAGE_PAIR_3,
            HeadVariant.TEXT_AND_IMAGE_PAIR_3,
            HeadVariant.ALL_CONCAT_5,
        )
        self.need_image = "image_cosine" in flags or self.need_head_image

    def _embed_text(self, backend_id: str, text: str) -> Embedding:
        backend = self.registry.backend(backend_id)
        return cached_embed(
            self.cache_root,
            backend.spec,
            _text_key(text),
            lambda: backend.encode_text(text),
            backend_version=backend.version,
        )

    def _embed_image(self, backend_id: str, raster: np.ndarray) -> Embedding:
        backend = self.registry.backend(backend_id)
        return cached_embed(
            self.cache_root,
            backend.spec,
            _raster_key(raster),
            lambda: backend.encode_image(raster),
            backend_version=backend.version,
        )

    def _zero_embedding(self, backend_id: str) -> Embedding:
        spec = self.registry.spec(backend_id)
        return Embedding(
            values=np.zeros(spec.dim, dtype=np.float32),
            dim=spec.dim,
            backend_id=spec.backend_id,
        )

    def _fetch_rasters(
        self, split: str, rows: Sequence[ClaimDocPair]
    ) -> dict[tuple[str, str], Optional[np.ndarray]]:
        jobs = []
        for pair in rows:
            jobs.append((pair.id, "claim", pair.claim_image_ref))
            jobs.append((pair.id, "doc", pair.doc_image_ref))

        def fetch(job):
            row_id, side, ref = job
            try:
                return (row_id, side), fetch_image(ref, self.cache_root)
            except (FetchFailure, DecodeFailure) as exc:
                logger.warning("image failure for row %s/%s: %s", row_id, side, exc)
                self.run_report["image_failures"].append(
                    {
                        "split": split,
                        "row": row_id,
                        "side": side,
                        "error": type(exc).__name__,
                        "detail": str(exc),
                    }
                )
                return (row_id, side), None

        if self.config.workers > 1:
            with ThreadPoolExecutor(max_workers=self.config.workers) as pool:
                results = list(pool.map(fetch, jobs))
        else:
            results = [fetch(job) for job in jobs]
        return dict(results)

    def _pair_cosine(self, split: str, row_id: str, a: Embedding, b: Embedding) -> float:
        try:
            return cosine(a, b)
        except ZeroVector:
            logger.warning("zero-norm embedding for row %s (%s); similarity set to 0", row_id, split)
            self.run_report["zero_vector_rows"].append({"split": split, "row": row_id})
            return 0.0

    def extract_split(self, manifest: DatasetManifest) -> list[RowData]:
        rasters: dict[tuple[str, str], Optional[np.ndarray]] = {}
        if self.need_image:
            rasters = self._fetch_rasters(manifest.split_name, manifest.rows)

        out = []
        for pair in manifest.rows:
            row = RowData(pair=pair, lex=lexical_features(pair))
            if self.need_text:
                row.text_emb = (
                    self._embed_text(self.config.text_backend, pair.claim_text),
                    self._embed_text(self.config.text_backend, pair.doc_text),
                )
                row.text_sim = self._pair_cosine(
                    manifest.split_name, pair.id, *row.text_emb
                )
            if self.need_head_text:
                row.head_text_emb = (
                    self._embed_text(self.config.head_text_id(), pair.claim_text),
                    self._embed_text(self.config.head_text_id(), pair.doc_text),
                )
            if "image_cosine" in self.config.feature_flags:
                embs = []
                for side in ("claim", "doc"):
                    raster = rasters.get((pair.id, side))
                    if raster is None:
                        embs.append(None)
                    else:
                        embs.append(self._embed_image(self.config.image_backend, raster))
                if embs[0] is not None and embs[1] is not None:
                    row.image_emb = (embs[0], embs[1])
                    row.image_sim = self._pair_cosine(
                        manifest.split_name, pair.id, embs[0], embs[1]
                    )
                else:
                    row.image_sim = 0.0  # failed image: neutral similarity
            if self.need_head_image:
                head_id = self.config.head_image_id()
                head_embs = []
                for side in ("claim", "doc"):
                    raster = rasters.get((pair.id, side))
                    if raster is None:
                        head_embs.append(self._zero_embedding(head_id))
                    else:
                        head_embs.append(self._embed_image(head_id, raster))
                row.head_image_emb = (head_embs[0], head_embs[1])
            out.append(row)
        return out


def _head_input(row: RowData, variant: HeadVariant, role: str) -> np.ndarray:
    """Concatenated embeddings feeding one head for one row."""
    if role == "text":
        claim, doc = row.head_text_emb
        return np.concatenate([claim.values, doc.values]).astype(np.float64)
    if role == "image":
        claim, doc = row.head_image_emb
        return np.concatenate([claim.values, doc.values]).astype(np.float64)
    # all: claim + doc + claim_image + doc_image, concatenated
    tc, td = row.head_text_emb
    ic, idoc = row.head_image_emb
    return np.concatenate([tc.values, td.values, ic.values, idoc.values]).astype(
        np.float64
    )


def _train_heads(
    config: ExperimentConfig,
    registry: EncoderRegistry,
    train_rows: list[RowData],
) -> dict[str, tuple[MlpConfig, MlpParams]]:
    variant = config.effective_head()
    if variant is None:
        return {}
    text_dim = registry.spec(config.head_text_id()).dim
    image_dim = registry.spec(config.head_image_id()).dim

    roles: list[tuple[str, int, int]] = []  # (role, input_dim, seed offset)
    if variant is HeadVariant.TEXT_PAIR_3:
        roles = [("text", 2 * text_dim, 0)]
    elif variant is HeadVariant.IMAGE_PAIR_3:
        roles = [("image", 2 * image_dim, 1)]
    elif variant is HeadVariant.TEXT_AND_IMAGE_PAIR_3:
        roles = [("text", 2 * text_dim, 0), ("image", 2 * image_dim, 1)]
    else:  # ALL_CONCAT_5
        roles = [("all", 2 * text_dim + 2 * image_dim, 0)]

    output_dim = variant_output_dim(variant)
    rng = np.random.default_rng(config.seed + 7)
    n = len(train_rows)
    holdout = max(1, n // 10) if n >= 5 else 0  # internal early-stop split
    order = rng.permutation(n)
    val_idx = set(order[:holdout].tolist())

    heads: dict[str, tuple[MlpConfig, MlpParams]] = {}
    for role, input_dim, offset in roles:
        mlp_config = MlpConfig(
            input_dim=input_dim,
            hidden_dim=config.mlp.hidden_dim,
            output_dim=output_dim,
            learning_rate=config.mlp.learning_rate,
            max_epochs=config.mlp.max_epochs,
            batch_size=config.mlp.batch_size,
            seed=config.seed + offset,
            patience=config.mlp.patience,
        )
        train_examples, val_examples = [], []
        for i, row in enumerate(train_rows):
            gold = row.pair.gold_label
            if output_dim == 3:
                target = LABEL3_INDEX[collapse_label(gold)]
            else:
                target = LABEL5_ORDER.index(gold)
            example = (_head_input(row, variant, role), target)
            (val_examples if i in val_idx else train_examples).append(example)
        params, _ = train_head(mlp_config, train_examples, val_examples or None)
        key = "image" if role == "image" else "text"
        heads[key] = (mlp_config, params)
    return heads


def _head_vector(
    config: ExperimentConfig,
    heads: dict[str, tuple[MlpConfig, MlpParams]],
    row: RowData,
) -> Optional[np.ndarray]:
    variant = config.effective_head()
    if variant is None or variant is HeadVariant.ALL_CONCAT_5:
        return None
    if variant is HeadVariant.TEXT_PAIR_3:
        pieces = [(heads["text"], _head_input(row, variant, "text"))]
    elif variant is HeadVariant.IMAGE_PAIR_3:
        pieces = [(heads["image"], _head_input(row, variant, "image"))]
    else:
        pieces = [
            (heads["text"], _head_input(row, variant, "text")),
            (heads["image"], _head_input(row, variant, "image")),
        ]
    return head_features(
        [spec for spec, _ in pieces],
        [x for _, x in pieces],
        hard_labels=config.mlp.hard_labels,
    )


# ---------------------------------------------------------------------------
# experiment run
# ---------------------------------------------------------------------------


@dataclass
class RunResult:
    run_dir: Path
    bundle_dir: Path
    val_report: Optional[metrics.EvalReport]
    test_report: Optional[metrics.EvalReport]
    run_report: dict


def _load_datasets(
    config: ExperimentConfig, run_dir: Path
) -> tuple[DatasetManifest, DatasetManifest, Optional[DatasetManifest]]:
    if isinstance(config.dataset, SynthSpec):
        spec = config.dataset
        if spec.image_dir is None:
            spec = replace(spec, image_dir=str(run_dir / "synth_images"))
        train, val, test = synth_dataset(spec, seed=config.seed)
        return train, val, test
    paths = config.dataset
    train = load_split(paths.train, "train", paths.column_map)
    val = load_split(paths.val, "val", paths.column_map)
    test = (
        load_split(paths.test, "test", paths.column_map) if paths.test else None
    )
    return train, val, test


def _encoder_calls(registry: EncoderRegistry) -> dict[str, int]:
    return registry.call_counts()


def run_experiment(
    config: ExperimentConfig, registry: Optional[EncoderRegistry] = None
) -> RunResult:
    registry = registry if registry is not None else default_registry()
    validate_config(config, registry)

    digest = config_hash(config)
    run_dir = Path(config.output_dir) / f"run-{digest}"
    run_dir.mkdir(parents=True, exist_ok=True)
    cache_root = Path(os.environ.get("FACTIFY_CACHE", config.cache_root))

    run_report: dict = {
        "config": config_to_dict(config),
        "config_hash": digest,
        "image_failures": [],
        "zero_vector_rows": [],
        "dropped_rows": {},
        "n_rows": {},
        "encoder_calls": {},
        "failed": False,
    }
    calls_before = _encoder_calls(registry)

    try:
        train_manifest, val_manifest, test_manifest = _load_datasets(config, run_dir)
        for manifest in (train_manifest, val_manifest, test_manifest):
            if manifest is None:
                continue
            run_report["n_rows"][manifest.split_name] = len(manifest.rows)
            run_report["dropped_rows"][manifest.split_name] = manifest.report.dropped

        extractor = _Extractor(config, registry, cache_root, run_report)
        train_rows = extractor.extract_split(train_manifest)
        val_rows = extractor.extract_split(val_manifest)
        test_rows = extractor.extract_split(test_manifest) if test_manifest else None

        if any(row.pair.gold_label is None for row in train_rows):
            raise ConfigInvalid("training split contains unlabeled rows")

        heads = _train_heads(config, registry, train_rows)
        variant = config.effective_head()

        if variant is HeadVariant.ALL_CONCAT_5:
            result = _run_standalone_head(
                config, registry, heads, run_dir, run_report,
                train_rows, val_rows, test_rows,
            )
        else:
            result = _run_fusion(
                config, registry, heads, run_dir, run_report,
                train_rows, val_rows, test_rows,
            )
    except Exception as exc:
        run_report["failed"] = True
        run_report["error"] = f"{type(exc).__name__}: {exc}"
        run_report["encoder_calls"] = _call_delta(calls_before, _encoder_calls(registry))
        _write_json(run_dir / "run_report.json", run_report)
        raise

    run_report["encoder_calls"] = _call_delta(calls_before, _encoder_calls(registry))
    _sort_report_lists(run_report)
    _write_json(run_dir / "run_report.json", run_report)
    return result


def _call_delta(before: dict[str, int], after: dict[str, int]) -> dict[str, int]:
    return {k: after[k] - before.get(k, 0) for k in sorted(after)}


def _sort_report_lists(run_report: dict) -> None:
    run_report["image_failures"].sort(
        key=lambda r: (r["split"], r["row"], r["side"])
    )
    run_report["zero_vector_rows"].sort(key=lambda r: (r["split"], r["row"]))


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _write_eval(
    run_dir: Path, split: str, report: metrics.EvalReport
) -> None:
    (run_dir / f"report_{split}.json").write_text(
        report.to_json() + "\n", encoding="utf-8"
    )
    report.confusion.to_csv(run_dir / f"confusion_{split}.csv")


def _write_predictions(
    run_dir: Path,
    split: str,
    rows: Sequence[RowData],
    predictions: Sequence[Label5],
    fractions: np.ndarray,
) -> None:
    import csv

    with open(run_dir / f"predictions_{split}.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["id", "gold", "predicted"] + [f"vote_{lab.value}" for lab in LABEL5_ORDER]
        )
        for row, pred, frac in zip(rows, predictions, fractions):
            gold = row.pair.gold_label.value if row.pair.gold_label else ""
            writer.writerow(
                [row.pair.id, gold, pred.value] + [f"{v:.6f}" for v in frac]
            )


def _run_fusion(
    config: ExperimentConfig,
    registry: EncoderRegistry,
    heads: dict[str, tuple[MlpConfig, MlpParams]],
    run_dir: Path,
    run_report: dict,
    train_rows: list[RowData],
    val_rows: list[RowData],
    test_rows: Optional[list[RowData]],
) -> RunResult:
    variant = config.effective_head()

    def featurize(rows: list[RowData]) -> list[FeatureVector]:
        out = []
        for row in rows:
            head_vec = _head_vector(config, heads, row)
            out.append(
                fusion.assemble_features(
                    row.pair,
                    row.lex,
                    row.text_sim,
                    row.image_sim,
                    head=head_vec,
                    flags=config.feature_flags,
                    head_variant=variant,
                )
            )
        return out

    train_feats = featurize(train_rows)
    normalizer = fusion.fit_normalizer(train_feats, fitted_on="train")
    train_normed = [fusion.apply_normalizer(normalizer, f) for f in train_feats]
    forest_config = config.forest
    forest_model = fusion.train_forest(
        forest_config, train_normed, [r.pair.gold_label for r in train_rows]
    )

    bundle_dir = run_dir / "bundle"
    manifest = {
        "mode": "fusion",
        "config": config_to_dict(config),
        "config_hash": run_report["config_hash"],
        "schema": list(normalizer.schema),
        "backend_versions": {
            backend_id: registry.backend(backend_id).version
            for backend_id in sorted(
                {
                    config.text_backend,
                    config.image_backend,
                    config.head_text_id(),
                    config.head_image_id(),
                }
            )
        },
    }
    fusion.save_bundle(
        bundle_dir,
        ModelBundle(
            schema=normalizer.schema,
            normalizer=normalizer,
            forest=forest_model,
            heads=heads,
            manifest=manifest,
        ),
    )

    val_report = test_report = None
    for split, rows in (("val", val_rows), ("test", test_rows)):
        if not rows:
            continue
        feats = [fusion.apply_normalizer(normalizer, f) for f in featurize(rows)]
        predictions, fractions = fusion.predict_batch(forest_model, feats)
        _write_predictions(run_dir, split, rows, predictions, fractions)
        gold = _labels_or_none_rows(rows)
        if gold is not None:
            report = metrics.weighted_f1(gold, predictions)
            _write_eval(run_dir, split, report)
            if split == "val":
                val_report = report
            else:
                test_report = report
    return RunResult(
        run_dir=run_dir,
        bundle_dir=bundle_dir,
        val_report=val_report,
        test_report=test_report,
        run_report=run_report,
    )


def _labels_or_none_rows(rows: Sequence[RowData]) -> Optional[list[Label5]]:
    labels = [row.pair.gold_label for row in rows]
    if not labels or any(lab is None for lab in labels):
        return None
    return labels


def _run_standalone_head(
    config: ExperimentConfig,
    registry: EncoderRegistry,
    heads: dict[str, tuple[MlpConfig, MlpParams]],
    run_dir: Path,
    run_report: dict,
    train_rows: list[RowData],
    val_rows: list[RowData],
    test_rows: Optional[list[RowData]],
) -> RunResult:
    """Five-way classification straight from the concatenated-embedding head."""
    head_config, head_params = heads["text"]

    bundle_dir = run_dir / "bundle"
    manifest = {
        "mode": "standalone_head",
        "config": config_to_dict(config),
        "config_hash": run_report["config_hash"],
        "schema": [],
        "backend_versions": {
            backend_id: registry.backend(backend_id).version
            for backend_id in sorted(
                {config.head_text_id(), config.head_image_id()}
            )
        },
    }
    fusion.save_bundle(
        bundle_dir,
        ModelBundle(
            schema=(),
            normalizer=None,
            forest=None,
            heads=heads,
            manifest=manifest,
        ),
    )

    val_report = test_report = None
    for split, rows in (("val", val_rows), ("test", test_rows)):
        if not rows:
            continue
        predictions = []
        fractions = np.zeros((len(rows), len(LABEL5_ORDER)))
        for i, row in enumerate(rows):
            probs = mlp_forward(
                head_config,
                head_params,
                _head_input(row, HeadVariant.ALL_CONCAT_5, "all"),
            )
            predictions.append(LABEL5_ORDER[int(np.argmax(probs))])
            fractions[i] = probs
        _write_predictions(run_dir, split, rows, predictions, fractions)
        gold = _labels_or_none_rows(rows)
        if gold is not None:
            report = metrics.weighted_f1(gold, predictions)
            _write_eval(run_dir, split, report)
            if split == "val":
                val_report = report
            else:
                test_report = report
    return RunResult(
        run_dir=run_dir,
        bundle_dir=bundle_dir,
        val_report=val_report,
        test_report=test_report,
        run_report=run_report,
    )


# ---------------------------------------------------------------------------
# standalone evaluation of a persisted bundle
# ---------------------------------------------------------------------------


def evaluate_bundle(
    bundle_dir: str | Path,
    split_csv: str | Path,
    out_dir: Optional[str | Path] = None,
    registry: Optional[EncoderRegistry] = None,
) -> tuple[Optional[metrics.EvalReport], Path]:
    """Run inference for one split CSV against a persisted bundle.

    Writes predictions (and an EvalReport when the split is fully labeled)
    next to the bundle unless out_dir overrides it.
    """
    registry = registry if registry is not None else default_registry()
    bundle = fusion.load_bundle(bundle_dir)
    config = _config_from_dict(bundle.manifest["config"])
    out = Path(out_dir) if out_dir is not None else Path(bundle_dir).parent
    out.mkdir(parents=True, exist_ok=True)
    cache_root = Path(os.environ.get("FACTIFY_CACHE", config.cache_root))

    manifest = load_split(split_csv, "test")
    run_report: dict = {"image_failures": [], "zero_vector_rows": []}
    extractor = _Extractor(config, registry, cache_root, run_report)
    rows = extractor.extract_split(manifest)

    if bundle.manifest["mode"] == "standalone_head":
        head_config, head_params = bundle.heads["text"]
        predictions = []
        fractions = np.zeros((len(rows), len(LABEL5_ORDER)))
        for i, row in enumerate(rows):
            probs = mlp_forward(
                head_config, head_params, _head_input(row, HeadVariant.ALL_CONCAT_5, "all")
            )
            predictions.append(LABEL5_ORDER[int(np.argmax(probs))])
            fractions[i] = probs
    else:
        feats = []
        for row in rows:
            head_vec = _head_vector_from_bundle(config, bundle, row)
            feats.append(
                fusion.apply_normalizer(
                    bundle.normalizer,
                    fusion.assemble_features(
                        row.pair,
                        row.lex,
                        row.text_sim,
                        row.image_sim,
                        head=head_vec,
                        flags=config.feature_flags,
                        head_variant=config.effective_head(),
                    ),
                )
            )
        predictions, fractions = fusion.predict_batch(bundle.forest, feats)

    _write_predictions(out, "eval", rows, predictions, fractions)
    gold = _labels_or_none_rows(rows)
    report = None
    if gold is not None:
        report = metrics.weighted_f1(gold, predictions)
        _write_eval(out, "eval", report)
    return report, out


def _head_vector_from_bundle(
    config: ExperimentConfig, bundle: ModelBundle, row: RowData
) -> Optional[np.ndarray]:
    variant = config.effective_head()
    if variant is None:
        return None
    return _head_vector(config, bundle.heads, row)


def _config_from_dict(raw: dict) -> ExperimentConfig:
    ds = raw["dataset"]
    if "synth" in ds:
        synth = ds["synth"]
        dataset: DatasetPaths | SynthSpec = SynthSpec(
            per_category=synth["per_category"],
            image_dir=synth["image_dir"],
            text_signal=synth["text_signal"],
            image_signal=synth["image_signal"],
            lexical_signal=synth["lexical_signal"],
            n_topics=synth["n_topics"],
            cos_jitter=synth["cos_jitter"],
        )
    else:
        dataset = DatasetPaths(
            train=ds["train"],
            val=ds["val"],
            test=ds.get("test"),
            column_map=ds.get("column_map"),
        )
    return ExperimentConfig(
        dataset=dataset,
        text_backend=raw["text_backend"],
        image_backend=raw["image_backend"],
        head_text_backend=raw.get("head_text_backend"),
        head_image_backend=raw.get("head_image_backend"),
        head_variant=(
            _HEAD_VARIANTS[raw["head_variant"].lower()]
            if raw.get("head_variant")
            else None
        ),
        feature_flags=frozenset(raw["feature_flags"]),
        forest=ForestConfig(**raw["forest"]),
        mlp=HeadSettings(**raw["mlp"]),
        seed=raw["seed"],
        output_dir=raw["output_dir"],
        cache_root=raw["cache_root"],
        workers=raw["workers"],
    )


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------

BASELINE_FLAGS = frozenset({"text_cosine", "image_cosine"})


def _table2_variants(base: ExperimentConfig) -> list[tuple[str, ExperimentConfig]]:
    baseline = replace(
        base, feature_flags=BASELINE_FLAGS, head_variant=None,
        head_text_backend=None, head_image_backend=None,
    )
    combos = [
        ("simcse+resnet50", "simcse-text", "resnet-image"),
        ("roberta+resnet50", "roberta-text", "resnet-image"),
        ("clip_text+resnet50", "clip-text", "resnet-image"),
        ("clip_text+clip_image", "clip-text", "clip-image"),
        ("sentence_bert+resnet50(baseline)", "sentence-text", "resnet-image"),
    ]
    return [
        (name, replace(baseline, text_backend=text, image_backend=image))
        for name, text, image in combos
    ]


def _table3_variants(base: ExperimentConfig) -> list[tuple[str, ExperimentConfig]]:
    out = []
    for variant in HeadVariant:
        flags = base.feature_flags | {"head"}
        out.append(
            (variant.value, replace(base, head_variant=variant, feature_flags=flags))
        )
    return out


def _table4_variants(base: ExperimentConfig) -> list[tuple[str, ExperimentConfig]]:
    full = replace(base, feature_flags=frozenset(ALL_FEATURE_FLAGS))
    drop = lambda *names: frozenset(ALL_FEATURE_FLAGS - set(names))  # noqa: E731
    return [
        ("ours", full),
        ("without_text_cosine", replace(full, feature_flags=drop("text_cosine"))),
        ("without_head", replace(full, feature_flags=drop("head"), head_variant=None)),
        ("without_rouge_length", replace(full, feature_flags=drop("rouge", "length"))),
        ("without_image_cosine", replace(full, feature_flags=drop("image_cosine"))),
        ("baseline", replace(full, feature_flags=BASELINE_FLAGS, head_variant=None)),
    ]


_BUILTIN_GRIDS = {
    "table2": _table2_variants,
    "table3": _table3_variants,
    "table4": _table4_variants,
}


@dataclass
class GridRow:
    name: str
    weighted_f1: Optional[float]
    run_dir: Optional[str]
    error: Optional[str] = None


@dataclass
class GridResult:
    grid_name: str
    rows: list[GridRow]
    grid_dir: Path

    def to_text(self) -> str:
        lines = [f"grid: {self.grid_name}", ""]
        width = max(len(r.name) for r in self.rows)
        for row in self.rows:
            if row.error is not None:
                lines.append(f"  {row.name:<{width}}  ERROR: {row.error}")
            else:
                lines.append(f"  {row.name:<{width}}  val weighted F1 = {row.weighted_f1:.4f}")
        return "\n".join(lines)


def run_grid(
    base: ExperimentConfig,
    grid: str | Sequence[tuple[str, ExperimentConfig]],
    registry: Optional[EncoderRegistry] = None,
) -> GridResult:
    """Run a named or explicit list of config variants; failures become rows."""
    if isinstance(grid, str):
        if grid not in _BUILTIN_GRIDS:
            raise ConfigInvalid(
                f"unknown grid {grid!r}; built-ins: {sorted(_BUILTIN_GRIDS)}"
            )
        grid_name = grid
        variants = _BUILTIN_GRIDS[grid](base)
    else:
        grid_name = "custom"
        variants = list(grid)
    if not variants:
        raise ConfigInvalid("grid has no variants")

    rows: list[GridRow] = []
    for name, variant_config in variants:
        try:
            result = run_experiment(variant_config, registry=registry)
            score = result.val_report.weighted_f1 if result.val_report else None
            rows.append(
                GridRow(name=name, weighted_f1=score, run_dir=str(result.run_dir))
            )
        except Exception as exc:
            rows.append(
                GridRow(
                    name=name,
                    weighted_f1=None,
                    run_dir=None,
                    error=f"{type(exc).__name__}: {exc}",
                )
            )

    rows.sort(
        key=lambda r: (r.weighted_f1 is None, -(r.weighted_f1 or 0.0), r.name)
    )
    grid_dir = Path(base.output_dir) / f"grid-{grid_name}-{config_hash(base)}"
    grid_dir.mkdir(parents=True, exist_ok=True)
    result = GridResult(grid_name=grid_name, rows=rows, grid_dir=grid_dir)
    _write_json(
        grid_dir / "grid.json",
        {
            "grid": grid_name,
            "rows": [
                {
                    "name": r.name,
                    "weighted_f1": r.weighted_f1,
                    "run_dir": r.run_dir,
                    "error": r.error,
                }
                for r in rows
            ],
        },
    )
    (grid_dir / "grid.txt").write_text(result.to_text() + "\n", encoding="utf-8")
    return result
