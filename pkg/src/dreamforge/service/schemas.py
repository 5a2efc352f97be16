"""Pydantic request/response models for the provider service wire protocol."""

from __future__ import annotations

from pydantic import BaseModel, Field


class LayoutItemModel(BaseModel):
    category_id: int = Field(ge=0)
    bbox: list[int] = Field(min_length=4, max_length=4)


class LayoutModel(BaseModel):
    layout_id: str
    canvas: list[int] = Field(min_length=2, max_length=2)
    items: list[LayoutItemModel]
    description: str = ""


class LLMRequest(BaseModel):
    prompt: str = Field(min_length=1)
    seed: int


class LLMResponse(BaseModel):
    text: str


class Layout2ImageRequest(BaseModel):
    layout: LayoutModel
    seed: int


class RegionStatsModel(BaseModel):
    bbox: list[int]
    mean_rgb: list[float]
    dominant_fraction: float


class Layout2ImageResponse(BaseModel):
    image_uri: str
    width: int
    height: int
    region_stats: list[RegionStatsModel]


class MaskGenRequest(BaseModel):
    image_uri: str
    bbox: list[int] = Field(min_length=4, max_length=4)


class MaskCandidateModel(BaseModel):
    runs: list[int]
    width: int
    height: int
    confidence_uri: str


class MaskGenResponse(BaseModel):
    candidates: list[MaskCandidateModel]


class ScoreRequest(BaseModel):
    image_uri: str
    bbox: list[int] = Field(min_length=4, max_length=4)
    class_name: str = Field(min_length=1)


class ScoreResponse(BaseModel):
    score: float = Field(ge=0.0, le=1.0)


class EmbedRequest(BaseModel):
    text: str = Field(min_length=1)


class EmbedResponse(BaseModel):
    vector: list[float]


class HealthResponse(BaseModel):
    status: str
