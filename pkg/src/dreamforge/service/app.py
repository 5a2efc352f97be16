"""FastAPI provider service.

Serves the four provider kinds over HTTP so generation can run on another
machine while the pipeline stays a thin client. The default backends are
the deterministic stubs; a deployment wraps real models behind the same
routes. Binary payloads never travel inline: generated images and
confidence maps are written under the service working directory and
referenced by URI.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException

from ..datamodel import BBox
from ..errors import DreamforgeError, ProviderError
from ..hashing import stable_hex
from ..providers.stubs import StubLLM, StubLayoutToImage, StubMaskGen, StubScorer
from ..scene import layout_from_payload
from . import schemas


def create_app(
    base_dir: Path,
    embed_dim: int = 64,
    llm=None,
    layout2image=None,
    maskgen=None,
    scorer=None,
) -> FastAPI:
    """Build the service app; unsupplied backends default to stubs."""
    base_dir = Path(base_dir)
    base_dir.mkdir(parents=True, exist_ok=True)
    llm = llm or StubLLM()
    layout2image = layout2image or StubLayoutToImage(base_dir)
    maskgen = maskgen or StubMaskGen(base_dir)
    scorer = scorer or StubScorer(embed_dim=embed_dim)

    app = FastAPI(title="dreamforge providers", version="1")

    def _bbox(values) -> BBox:
        try:
            return BBox.from_list(values)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc

    @app.get("/healthz", response_model=schemas.HealthResponse)
    def healthz():
        return {"status": "ok"}

    @app.post("/v1/llm", response_model=schemas.LLMResponse)
    def llm_complete(request: schemas.LLMRequest):
        try:
            return {"text": llm.complete(request.prompt, request.seed)}
        except ProviderError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc

    @app.post("/v1/layout2image", response_model=schemas.Layout2ImageResponse)
    def layout_to_image(request: schemas.Layout2ImageRequest):
        try:
            layout = layout_from_payload(request.layout.model_dump())
            image = layout2image.generate(layout, request.seed)
        except (ProviderError, ValueError, DreamforgeError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return {
            "image_uri": image.image_uri,
            "width": image.width,
            "height": image.height,
            "region_stats": [
                {
                    "bbox": s.bbox.to_list(),
                    "mean_rgb": list(s.mean_rgb),
                    "dominant_fraction": s.dominant_fraction,
                }
                for s in image.region_stats
            ],
        }

    @app.post("/v1/maskgen", response_model=schemas.MaskGenResponse)
    def propose_masks(request: schemas.MaskGenRequest):
        bbox = _bbox(request.bbox)
        try:
            candidates = maskgen.propose(request.image_uri, bbox)
        except ProviderError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        entries = []
        for index, candidate in enumerate(candidates):
            uri = "confidence/{}.npy".format(
                stable_hex("conf-file", request.image_uri, request.bbox, index)
            )
            path = base_dir / uri
            path.parent.mkdir(parents=True, exist_ok=True)
            np.save(path, candidate.confidence.values)
            entries.append(
                {
                    "runs": candidate.mask.runs_list(),
                    "width": candidate.mask.width,
                    "height": candidate.mask.height,
                    "confidence_uri": uri,
                }
            )
        return {"candidates": entries}

    @app.post("/v1/score", response_model=schemas.ScoreResponse)
    def score_crop(request: schemas.ScoreRequest):
        bbox = _bbox(request.bbox)
        try:
            score = scorer.score(request.image_uri, bbox, request.class_name)
        except ProviderError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return {"score": score}

    @app.post("/v1/embed", response_model=schemas.EmbedResponse)
    def embed_text(request: schemas.EmbedRequest):
        try:
            vector = scorer.embed(request.text)
        except ProviderError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return {"vector": [float(v) for v in vector]}

    return app
