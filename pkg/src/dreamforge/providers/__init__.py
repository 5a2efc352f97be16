from .base import (
    CallLog,
    GeneratedImage,
    MaskCandidate,
    ProviderCall,
    ProviderEndpoint,
    ProviderSet,
    RegionStats,
)
from .stubs import make_stub_providers
from .http import make_http_providers

__all__ = [
    "CallLog",
    "GeneratedImage",
    "MaskCandidate",
    "ProviderCall",
    "ProviderEndpoint",
    "ProviderSet",
    "RegionStats",
    "make_stub_providers",
    "make_http_providers",
]
