"""Drop-one-family ablation grid on synthetic data.

Image similarity is the only signal separating the *_Text and *_Multimodal
categories in the planted data, so removing it produces by far the lowest
score; the other families are partially redundant with each other.
"""

import tempfile
from pathlib import Path

from factify.dataio import SynthSpec
from factify.embedding import fresh_registry
from factify.harness import ExperimentConfig, run_grid

work = Path(tempfile.mkdtemp())
base = ExperimentConfig(
    dataset=SynthSpec(per_category=60, image_dir=str(work / "images")),
    output_dir=str(work / "runs"),
    cache_root=str(work / "cache"),
)

result = run_grid(base, "table4", registry=fresh_registry())
print(result.to_text())
print(f"\ncomparison table persisted under {result.grid_dir}")
