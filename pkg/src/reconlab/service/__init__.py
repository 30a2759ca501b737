"""HTTP service layer (FastAPI app and request/response models)."""

from .app import app

__all__ = ["app"]
