"""dreamforge: synthetic-dataset curation and alignment-training toolkit.

The package turns an initial training vocabulary into a filtered, annotated
synthetic dataset and provides the numeric machinery for aligning synthetic
object features with real-object prototypes during training. All model-backed
steps (LLM, layout-to-image generation, mask proposal, image-text scoring) go
through pluggable providers; deterministic in-process stubs are the default so
the full pipeline runs reproducibly on a laptop.
"""

__version__ = "0.1.0"
