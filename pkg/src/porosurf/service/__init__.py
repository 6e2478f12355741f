"""HTTP service wrapping the porosurf pipeline for thin clients."""

from .app import create_app

__all__ = ["create_app"]
