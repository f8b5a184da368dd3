"""FastAPI service exposing the simulation and analysis core."""

from .app import create_app

__all__ = ["create_app"]
