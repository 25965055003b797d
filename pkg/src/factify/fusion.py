"""Feature assembly, train-split z-normalization, and the forest classifier.

The per-pair feature vector concatenates the coherence signals in a fixed,
named order; the normalizer is fit on the training split only; the
decision-tree ensemble is scikit-learn's random forest behind this module's
contract (bootstrap resamples, sqrt-feature splits, Gini, seeded), with
majority voting and fixed-label-order tie-breaking implemented on top of the
per-tree predictions.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import joblib
import numpy as np
from sklearn.ensemble import RandomForestClassifier

from .datamodel import LABEL5_ORDER, ClaimDocPair, Label5
from .entailment_head import HeadVariant, MlpConfig, MlpParams, load_head, save_head
from .lexical import LexicalFeatures


class SchemaMismatch(Exception):
    """A row's feature schema differs from the fitted/trained schema."""


ALL_FEATURE_FLAGS = frozenset({"rouge", "length", "text_cosine", "image_cosine", "head"})

_ROUGE_NAMES = ("rouge1_f", "rouge2_f", "rougeL_f")
_LENGTH_NAMES = ("claim_len", "doc_len", "len_ratio")
_HEAD3_NAMES = ("head_p_support", "head_p_insufficient", "head_p_refute")
_HEAD6_NAMES = (
    "head_text_p_support",
    "head_text_p_insufficient",
    "head_text_p_refute",
    "head_image_p_support",
    "head_image_p_insufficient",
    "head_image_p_refute",
)


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    schema: tuple[str, ...]

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.shape[0] != len(self.schema):
            raise SchemaMismatch(
                f"{values.shape[0] if values.ndim == 1 else values.shape} values "
                f"for {len(self.schema)} schema names"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("feature vector contains non-finite values")
        object.__setattr__(self, "values", values)


def feature_schema(
    flags: frozenset[str] | set[str],
    head_variant: Optional[HeadVariant] = HeadVariant.TEXT_PAIR_3,
) -> tuple[str, ...]:
    """Ordered feature names for a flag set; drops whole families by name."""
    unknown = set(flags) - ALL_FEATURE_FLAGS
    if unknown:
        raise ValueError(f"unknown feature flags: {sorted(unknown)}")
    if not flags:
        raise ValueError("feature flags must be non-empty")
    names: list[str] = []
    if "rouge" in flags:
        names.extend(_ROUGE_NAMES)
    if "length" in flags:
        names.extend(_LENGTH_NAMES)
    if "text_cosine" in flags:
        names.append("text_cosine")
    if "image_cosine" in flags:
        names.append("image_cosine")
    if "head" in flags:
        if head_variant is None:
            raise ValueError("head flag set but no head variant configured")
        if head_variant is HeadVariant.ALL_CONCAT_5:
            raise ValueError("AllConcat5 is a standalone classifier, never fused")
        if head_variant is HeadVariant.TEXT_AND_IMAGE_PAIR_3:
            names.extend(_HEAD6_NAMES)
        else:
            names.extend(_HEAD3_NAMES)
    return tuple(names)


DEFAULT_SCHEMA = feature_schema(ALL_FEATURE_FLAGS, HeadVariant.TEXT_PAIR_3)


def assemble_features(
    pair: ClaimDocPair,
    lex: LexicalFeatures,
    text_sim: float,
    image_sim: float,
    head: Optional[np.ndarray] = None,
    flags: frozenset[str] | set[str] = ALL_FEATURE_FLAGS,
    head_variant: Optional[HeadVariant] = HeadVariant.TEXT_PAIR_3,
) -> FeatureVector:
    """Concatenate the coherence features for one pair in fixed schema order."""
    schema = feature_schema(flags, head_variant)
    by_name = {
        "rouge1_f": lex.rouge1_f,
        "rouge2_f": lex.rouge2_f,
        "rougeL_f": lex.rougeL_f,
        "claim_len": float(lex.claim_len),
        "doc_len": float(lex.doc_len),
        "len_ratio": lex.len_ratio,
        "text_cosine": float(text_sim),
        "image_cosine": float(image_sim),
    }
    values = []
    head_names = [n for n in schema if n.startswith("head")]
    if head_names:
        head = np.asarray(head, dtype=np.float64)
        if head.shape != (len(head_names),):
            raise SchemaMismatch(
                f"head sub-vector has shape {head.shape}, expected ({len(head_names)},)"
            )
        by_name.update(zip(head_names, head))
    for name in schema:
        values.append(by_name[name])
    return FeatureVector(values=np.asarray(values), schema=schema)


# ---------------------------------------------------------------------------
# normalizer
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NormalizerState:
    schema: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray  # population std; 0 marks a constant feature
    fitted_on: str


def fit_normalizer(
    rows: Sequence[FeatureVector], fitted_on: str = "train"
) -> NormalizerState:
    if len(rows) < 2:
        raise ValueError("need at least 2 rows to fit the normalizer")
    schema = rows[0].schema
    for row in rows:
        if row.schema != schema:
            raise SchemaMismatch("rows disagree on schema")
    matrix = np.stack([row.values for row in rows])
    return NormalizerState(
        schema=schema,
        mean=matrix.mean(axis=0),
        std=matrix.std(axis=0),  # ddof=0
        fitted_on=fitted_on,
    )


def apply_normalizer(state: NormalizerState, row: FeatureVector) -> FeatureVector:
    """(x - mean) / std per feature; constant (std 0) features map to 0."""
    if row.schema != state.schema:
        raise SchemaMismatch(
            f"row schema {row.schema} != fitted schema {state.schema}"
        )
    safe_std = np.where(state.std > 0.0, state.std, 1.0)
    values = np.where(state.std > 0.0, (row.values - state.mean) / safe_std, 0.0)
    return FeatureVector(values=values, schema=state.schema)


# ---------------------------------------------------------------------------
# forest
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_depth: int = 40
    seed: int = 42
    min_samples_leaf: int = 1

    def __post_init__(self) -> None:
        if self.n_trees <= 0 or self.max_depth <= 0 or self.min_samples_leaf <= 0:
            raise ValueError("n_trees, max_depth, min_samples_leaf must be positive")


@dataclass
class ForestModel:
    config: ForestConfig
    schema: tuple[str, ...]
    clf: RandomForestClassifier


def train_forest(
    config: ForestConfig,
    rows: Sequence[FeatureVector],
    labels: Sequence[Label5],
) -> ForestModel:
    """Bootstrap + sqrt-feature + Gini ensemble, fully seeded."""
    if not rows:
        raise ValueError("no training rows")
    if len(rows) != len(labels):
        raise ValueError(f"{len(rows)} rows but {len(labels)} labels")
    schema = rows[0].schema
    for row in rows:
        if row.schema != schema:
            raise SchemaMismatch("rows disagree on schema")
    absent = [lab.value for lab in LABEL5_ORDER if lab not in set(labels)]
    if absent:
        warnings.warn(f"labels absent from training data: {absent}", stacklevel=2)
    x = np.stack([row.values for row in rows])
    y = np.asarray([LABEL5_ORDER.index(lab) for lab in labels], dtype=np.int64)
    clf = RandomForestClassifier(
        n_estimators=config.n_trees,
        max_depth=config.max_depth,
        min_samples_leaf=config.min_samples_leaf,
        max_features="sqrt",
        criterion="gini",
        bootstrap=True,
        random_state=config.seed,
        n_jobs=1,
    )
    clf.fit(x, y)
    return ForestModel(config=config, schema=schema, clf=clf)


def _vote_fractions(model: ForestModel, x: np.ndarray) -> np.ndarray:
    """(n_rows, 5) fraction of trees voting each label, in fixed label order."""
    fractions = np.zeros((x.shape[0], len(LABEL5_ORDER)))
    classes = model.clf.classes_.astype(int)
    for tree in model.clf.estimators_:
        encoded = tree.predict(x).astype(int)
        votes = classes[encoded]
        fractions[np.arange(x.shape[0]), votes] += 1.0
    return fractions / len(model.clf.estimators_)


def predict(model: ForestModel, row: FeatureVector) -> tuple[Label5, np.ndarray]:
    """Majority vote across trees; ties break to the first label in fixed order."""
    labels, fractions = predict_batch(model, [row])
    return labels[0], fractions[0]


def predict_batch(
    model: ForestModel, rows: Sequence[FeatureVector]
) -> tuple[list[Label5], np.ndarray]:
    for row in rows:
        if row.schema != model.schema:
            raise SchemaMismatch(
                f"row schema {row.schema} != trained schema {model.schema}"
            )
    x = np.stack([row.values for row in rows])
    fractions = _vote_fractions(model, x)
    winners = np.argmax(fractions, axis=1)  # first max = fixed-order tie-break
    return [LABEL5_ORDER[i] for i in winners], fractions


# ---------------------------------------------------------------------------
# model bundle persistence
# ---------------------------------------------------------------------------

FOREST_FORMAT = "factify-forest-v1"


def save_forest(path: str | Path, model: ForestModel) -> None:
    joblib.dump(
        {
            "format": FOREST_FORMAT,
            "config": {
                "n_trees": model.config.n_trees,
                "max_depth": model.config.max_depth,
                "seed": model.config.seed,
                "min_samples_leaf": model.config.min_samples_leaf,
            },
            "schema": list(model.schema),
            "clf": model.clf,
        },
        path,
    )


def load_forest(path: str | Path) -> ForestModel:
    payload = joblib.load(path)
    if payload.get("format") != FOREST_FORMAT:
        raise ValueError(f"unrecognized forest file format: {payload.get('format')!r}")
    return ForestModel(
        config=ForestConfig(**payload["config"]),
        schema=tuple(payload["schema"]),
        clf=payload["clf"],
    )


@dataclass
class ModelBundle:
    """Everything needed for standalone inference, as persisted to a directory."""

    schema: tuple[str, ...]
    normalizer: Optional[NormalizerState]
    forest: Optional[ForestModel]
    heads: dict[str, tuple[MlpConfig, MlpParams]]  # keys: "text", "image"
    manifest: dict


_HEAD_FILES = {"text": "head.bin", "image": "head_image.bin"}


def save_bundle(bundle_dir: str | Path, bundle: ModelBundle) -> None:
    out = Path(bundle_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "schema.json").write_text(
        json.dumps(list(bundle.schema), indent=2) + "\n", encoding="utf-8"
    )
    normalizer = None
    if bundle.normalizer is not None:
        normalizer = {
            "schema": list(bundle.normalizer.schema),
            "mean": bundle.normalizer.mean.tolist(),
            "std": bundle.normalizer.std.tolist(),
            "fitted_on": bundle.normalizer.fitted_on,
        }
    (out / "normalizer.json").write_text(
        json.dumps(normalizer, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    if bundle.forest is not None:
        save_forest(out / "forest.bin", bundle.forest)
    for role, head in bundle.heads.items():
        save_head(out / _HEAD_FILES[role], head[0], head[1])
    (out / "manifest.json").write_text(
        json.dumps(bundle.manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_bundle(bundle_dir: str | Path) -> ModelBundle:
    src = Path(bundle_dir)
    schema = tuple(json.loads((src / "schema.json").read_text(encoding="utf-8")))
    raw_norm = json.loads((src / "normalizer.json").read_text(encoding="utf-8"))
    normalizer = None
    if raw_norm is not None:
        normalizer = NormalizerState(
            schema=tuple(raw_norm["schema"]),
            mean=np.asarray(raw_norm["mean"], dtype=np.float64),
            std=np.asarray(raw_norm["std"], dtype=np.float64),
            fitted_on=raw_norm["fitted_on"],
        )
    forest = load_forest(src / "forest.bin") if (src / "forest.bin").exists() else None
    heads = {}
    for role, filename in _HEAD_FILES.items():
        if (src / filename).exists():
            heads[role] = load_head(src / filename)
    manifest = json.loads((src / "manifest.json").read_text(encoding="utf-8"))
    return ModelBundle(
        schema=schema,
        normalizer=normalizer,
        forest=forest,
        heads=heads,
        manifest=manifest,
    )
