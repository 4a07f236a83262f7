"""Export embeddings from pretrained image backbones into bank files."""

__version__ = "0.1.0"

from .backbones import FEATURE_DIMS, StubBackbone, build_backbone
from .extract import ExtractionJob, run_extraction

__all__ = [
    "__version__",
    "FEATURE_DIMS",
    "ExtractionJob",
    "StubBackbone",
    "build_backbone",
    "run_extraction",
]
