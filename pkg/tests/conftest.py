from __future__ import annotations

import pytest

from dreamforge.pipeline.config import PipelineConfig
from dreamforge.providers import make_stub_providers


@pytest.fixture
def stub_providers(tmp_path):
    return make_stub_providers(tmp_path)


@pytest.fixture
def desk_config(tmp_path):
    return PipelineConfig(
        seed=7,
        out_dir=str(tmp_path / "runs"),
        canvas=(256, 256),
        num_layouts=12,
        per_class_top_n=10,
        real_images=24,
        real_objects_per_image=3,
    )


@pytest.fixture(scope="session")
def session_run(tmp_path_factory):
    """One completed synthesis run shared by pipeline-level tests."""
    from dreamforge.pipeline.synthesis import run_synthesis

    out = tmp_path_factory.mktemp("session-run")
    config = PipelineConfig(
        seed=7,
        out_dir=str(out),
        canvas=(256, 256),
        num_layouts=12,
        per_class_top_n=10,
        real_images=24,
        real_objects_per_image=3,
    )
    result = run_synthesis(config)
    return config, result
