from .config import PipelineConfig, load_config
from .manifest import PipelineManifest, SYNTHESIS_STAGES
from .synthesis import run_synthesis
from .training import make_toy_real_dataset, sample_batch, simulate_training
from .reporting import emit_report

__all__ = [
    "PipelineConfig",
    "load_config",
    "PipelineManifest",
    "SYNTHESIS_STAGES",
    "run_synthesis",
    "make_toy_real_dataset",
    "sample_batch",
    "simulate_training",
    "emit_report",
]
