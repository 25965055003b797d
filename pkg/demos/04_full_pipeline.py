"""End-to-end run on planted-signal synthetic data.

Generates a balanced five-category dataset, trains the head and the forest,
and prints the validation report. Rerunning reuses the embedding cache and
reproduces identical bytes.
"""

import tempfile
from pathlib import Path

from factify.dataio import SynthSpec
from factify.embedding import fresh_registry
from factify.harness import ExperimentConfig, run_experiment

work = Path(tempfile.mkdtemp())
config = ExperimentConfig(
    dataset=SynthSpec(per_category=60, image_dir=str(work / "images")),
    text_backend="planted-text",
    image_backend="planted-image",
    output_dir=str(work / "runs"),
    cache_root=str(work / "cache"),
    seed=42,
)

registry = fresh_registry()
result = run_experiment(config, registry=registry)

print(result.val_report.to_text())
print(f"\nrun directory: {result.run_dir}")
print(f"encoder calls: {result.run_report['encoder_calls']}")

again = run_experiment(config, registry=registry)
identical = again.val_report.to_json() == result.val_report.to_json()
print(f"\nwarm rerun encoder calls: {again.run_report['encoder_calls']}")
print(f"byte-identical report: {identical}")
